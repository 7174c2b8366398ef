// Operator entry point: corpus generation, vocabulary building, embedding
// training, detector training, detection, clustering, adaptation and
// evaluation. Every stage reads/writes a run directory (see RunDir) and
// snapshots its config there.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "droidfp/adapt.hpp"
#include "droidfp/asmparse.hpp"
#include "droidfp/cluster.hpp"
#include "droidfp/config.hpp"
#include "droidfp/corpus.hpp"
#include "droidfp/detect.hpp"
#include "droidfp/digest.hpp"
#include "droidfp/featurize.hpp"
#include "droidfp/inst2vec.hpp"
#include "droidfp/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitData = 2;

// Removes freshly-created outputs when a stage fails part-way.
class OutputGuard {
 public:
  void track(const fs::path& p) { paths_.push_back(p); }
  void dismiss() { paths_.clear(); }
  ~OutputGuard() {
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  }

 private:
  std::vector<fs::path> paths_;
};

struct CommonOpts {
  std::string out;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--out", opts.out, "run directory")->required();
  cmd->add_option("--config", opts.config_path,
                  "config file (defaults to <out>/config.json if present)");
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--workers", opts.workers,
                  "worker threads (0 = available parallelism)");
}

// Loads the config (explicit flag > run-dir snapshot > defaults), applies
// flag overrides, and snapshots it into the run directory.
droidfp::RunConfig resolve_config(const CommonOpts& opts,
                                  const droidfp::RunDir& run) {
  droidfp::RunConfig cfg;
  if (!opts.config_path.empty())
    cfg = droidfp::RunConfig::load(opts.config_path);
  else if (fs::exists(run.config()))
    cfg = droidfp::RunConfig::load(run.config());
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.workers) cfg.workers = *opts.workers;
  run.ensure();
  cfg.save(run.config());
  return cfg;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p))
    throw std::runtime_error("missing " + what + ": " + p.string());
}

std::vector<droidfp::AppRecord> load_corpus(const fs::path& dir) {
  require_file(dir / "manifest.jsonl", "corpus manifest");
  return droidfp::read_corpus(dir);
}

struct Represented {
  std::vector<droidfp::AppRecord> records;
  std::vector<droidfp::AppRepresentation> reps;  // parallel to records
  std::map<std::string, std::size_t> index;      // id -> position
};

Represented represent_corpus(const fs::path& dir,
                             const droidfp::Vocabulary& vocab) {
  Represented r;
  r.records = load_corpus(dir);
  r.reps.reserve(r.records.size());
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    r.reps.push_back(
        droidfp::tokenize(droidfp::parse(r.records[i].source_text), vocab));
    r.index[r.records[i].id] = i;
  }
  return r;
}

droidfp::DetectConfig detect_config(const droidfp::RunConfig& cfg) {
  droidfp::DetectConfig dc;
  dc.fragment_len = cfg.fragment_len;
  dc.epochs = cfg.epochs;
  dc.batch_size = cfg.minibatch;
  dc.lr = cfg.lr;
  dc.ensemble_size = cfg.ensemble_size;
  dc.fragments_per_app = cfg.fragments_per_app;
  dc.target_error = cfg.target_error;
  dc.seed = cfg.seed;
  dc.workers = cfg.workers;
  return dc;
}

droidfp::DecisionThresholds load_thresholds(const droidfp::RunDir& run) {
  require_file(run.thresholds(), "threshold file");
  std::ifstream in(run.thresholds());
  json j;
  in >> j;
  droidfp::DecisionThresholds th;
  th.zeta = j.at("zeta").get<double>();
  th.eta = j.at("eta").get<double>();
  th.eta_satisfiable = j.at("eta_satisfiable").get<bool>();
  th.target_error = j.at("target_error").get<double>();
  return th;
}

droidfp::Ensemble load_ensemble(const droidfp::RunDir& run, std::size_t phi) {
  droidfp::Ensemble e;
  for (std::size_t k = 0; k < phi; ++k) {
    require_file(run.member(k), "ensemble member checkpoint");
    e.members.push_back(droidfp::CnnModel<float>::from_checkpoint(
        droidfp::Checkpoint::load(run.member(k).string())));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.
// ---------------------------------------------------------------------------

struct GenOpts {
  CommonOpts common;
  std::size_t n_mal = 1000, n_ben = 1000, families = 10;
  int epoch_tag = 0;
};

int cmd_gen_corpus(const GenOpts& o) {
  droidfp::RunDir run{o.common.out};
  auto cfg = resolve_config(o.common, run);
  auto profile = droidfp::default_profile();
  auto records = droidfp::generate_corpus(profile, o.n_mal, o.n_ben,
                                          o.families, cfg.seed, o.epoch_tag);
  OutputGuard guard;
  guard.track(run.corpus());
  droidfp::write_corpus(records, run.corpus());
  guard.dismiss();
  std::cerr << "gen-corpus: wrote " << records.size() << " apps under "
            << run.corpus().string() << "\n";
  return 0;
}

struct VocabOpts {
  CommonOpts common;
  bool observed = false;
};

int cmd_build_vocab(const VocabOpts& o) {
  droidfp::RunDir run{o.common.out};
  resolve_config(o.common, run);
  std::vector<std::string> names;
  if (o.observed) {
    // platform assets actually seen in the corpus
    for (const auto& r : load_corpus(run.corpus())) {
      std::vector<std::string> assets;
      droidfp::collect_assets(droidfp::parse(r.source_text), assets);
      for (auto& a : assets)
        if (a.rfind("android/", 0) == 0) names.push_back(std::move(a));
    }
  } else {
    // full platform universe of the synthetic generator (covers drift)
    names = droidfp::default_profile().all_platform_assets();
  }
  auto vocab = droidfp::Vocabulary::from_names(std::move(names));
  OutputGuard guard;
  guard.track(run.vocab());
  vocab.save(run.vocab().string());
  guard.dismiss();
  std::cerr << "build-vocab: " << vocab.size() << " tokens -> "
            << run.vocab().string() << "\n";
  return 0;
}

int cmd_train_embed(const CommonOpts& o) {
  droidfp::RunDir run{o.out};
  auto cfg = resolve_config(o, run);
  require_file(run.vocab(), "vocabulary");
  auto vocab = droidfp::Vocabulary::load(run.vocab().string());
  auto corpus = represent_corpus(run.corpus(), vocab);
  auto split =
      droidfp::split_dataset(corpus.records, cfg.build_ratio, cfg.seed);

  std::vector<std::vector<droidfp::TokenId>> sequences;
  for (const auto& id : split.build_ids)
    for (const auto& seq : corpus.reps[corpus.index.at(id)].sequences)
      sequences.push_back(seq.tokens);

  droidfp::EmbeddingTrainConfig ec;
  ec.dim = cfg.embed_dim;
  ec.window = cfg.window;
  ec.epochs = cfg.embed_epochs;
  ec.lr = cfg.embed_lr;
  ec.seed = cfg.seed;
  auto result = droidfp::train_embeddings(sequences, vocab.size(), ec);

  auto ckpt = result.table.to_checkpoint();
  ckpt.meta["epoch_loss"] = result.epoch_loss;
  OutputGuard guard;
  guard.track(run.embedding());
  ckpt.save(run.embedding().string());
  guard.dismiss();
  std::cerr << "train-embed: final loss " << result.epoch_loss.back()
            << " -> " << run.embedding().string() << "\n";
  return 0;
}

int cmd_train_detect(const CommonOpts& o) {
  droidfp::RunDir run{o.out};
  auto cfg = resolve_config(o, run);
  require_file(run.vocab(), "vocabulary");
  require_file(run.embedding(), "embedding checkpoint");
  auto vocab = droidfp::Vocabulary::load(run.vocab().string());
  auto table = droidfp::EmbeddingTable::from_checkpoint(
      droidfp::Checkpoint::load(run.embedding().string()));
  auto corpus = represent_corpus(run.corpus(), vocab);
  auto split =
      droidfp::split_dataset(corpus.records, cfg.build_ratio, cfg.seed);

  auto labeled = [&](const std::vector<std::string>& ids) {
    std::vector<droidfp::LabeledApp> out;
    for (const auto& id : ids) {
      const std::size_t i = corpus.index.at(id);
      out.push_back({&corpus.reps[i],
                     corpus.records[i].label == droidfp::Label::Malware});
    }
    return out;
  };
  auto train_set = labeled(split.train_ids);
  auto valid_set = labeled(split.valid_ids);

  auto dc = detect_config(cfg);
  std::cerr << "train-detect: " << train_set.size() << " train / "
            << valid_set.size() << " valid, " << dc.epochs << " epochs\n";
  auto snapshots = droidfp::train_single(train_set, valid_set, table, dc);
  auto ensemble = droidfp::select_ensemble(snapshots, dc.ensemble_size);

  std::vector<const droidfp::AppRepresentation*> vreps;
  std::vector<int> vlabels;
  for (const auto& a : valid_set) {
    vreps.push_back(a.rep);
    vlabels.push_back(a.label);
  }
  auto vscores = droidfp::score_batch(
      vreps, ensemble, table, dc.fragment_len, dc.fragments_per_app,
      droidfp::Rng(cfg.seed ^ 0x7472e5ULL), dc.workers);
  std::vector<double> ys;
  for (const auto& s : vscores) ys.push_back(s.y_hat);
  const double zeta = droidfp::fit_general_threshold(ys, vlabels);
  const auto fit =
      droidfp::fit_confidence_threshold(ys, vlabels, dc.target_error);

  OutputGuard guard;
  guard.track(run.detector());
  fs::create_directories(run.detector());
  for (std::size_t k = 0; k < ensemble.members.size(); ++k)
    ensemble.members[k].to_checkpoint().save(run.member(k).string());
  {
    ordered_json j;
    j["zeta"] = zeta;
    j["eta"] = fit.eta;
    j["eta_satisfiable"] = fit.satisfiable;
    j["target_error"] = dc.target_error;
    j["members"] = ensemble.members.size();
    std::ofstream out(run.thresholds());
    out << j.dump(2) << '\n';
  }
  guard.dismiss();
  std::cerr << "train-detect: zeta " << zeta << ", eta " << fit.eta
            << (fit.satisfiable ? "" : " (error bound unsatisfiable)")
            << "\n";
  return 0;
}

struct DetectOpts {
  CommonOpts common;
  std::string corpus_dir;  // external corpus; default = run test split
  bool all = false;        // score the whole run corpus
};

int cmd_detect(const DetectOpts& o) {
  droidfp::RunDir run{o.common.out};
  auto cfg = resolve_config(o.common, run);
  require_file(run.vocab(), "vocabulary");
  require_file(run.embedding(), "embedding checkpoint");
  auto vocab = droidfp::Vocabulary::load(run.vocab().string());
  auto table = droidfp::EmbeddingTable::from_checkpoint(
      droidfp::Checkpoint::load(run.embedding().string()));
  auto thresholds = load_thresholds(run);
  auto ensemble = load_ensemble(run, cfg.ensemble_size);

  const fs::path corpus_dir =
      o.corpus_dir.empty() ? run.corpus() : fs::path(o.corpus_dir);
  auto corpus = represent_corpus(corpus_dir, vocab);

  std::vector<std::size_t> chosen;
  if (!o.corpus_dir.empty() || o.all) {
    for (std::size_t i = 0; i < corpus.records.size(); ++i)
      chosen.push_back(i);
  } else {
    auto split =
        droidfp::split_dataset(corpus.records, cfg.build_ratio, cfg.seed);
    for (const auto& id : split.test_ids)
      chosen.push_back(corpus.index.at(id));
  }

  std::vector<const droidfp::AppRepresentation*> reps;
  std::vector<std::size_t> scored;  // indices of non-degenerate apps
  std::size_t degenerate = 0;
  for (std::size_t i : chosen) {
    if (corpus.reps[i].sequences.empty()) {
      ++degenerate;
      continue;
    }
    reps.push_back(&corpus.reps[i]);
    scored.push_back(i);
  }
  if (reps.empty()) throw std::runtime_error("detect: no scorable apps");

  auto dc = detect_config(cfg);
  auto scores = droidfp::score_batch(reps, ensemble, table, dc.fragment_len,
                                     dc.fragments_per_app,
                                     droidfp::Rng(cfg.seed ^ 0xd7ec7ULL),
                                     dc.workers);

  OutputGuard guard;
  fs::create_directories(run.reports());
  guard.track(run.detect_report());
  std::ofstream out(run.detect_report());
  if (!out)
    throw std::runtime_error("cannot write " + run.detect_report().string());
  for (std::size_t k = 0; k < scored.size(); ++k) {
    const auto& rec = corpus.records[scored[k]];
    const auto general = droidfp::decide(scores[k].y_hat, thresholds,
                                         droidfp::DecisionStrategy::General);
    const auto conf = droidfp::decide(scores[k].y_hat, thresholds,
                                      droidfp::DecisionStrategy::Confidence);
    ordered_json j;
    j["id"] = rec.id;
    j["label"] = droidfp::to_string(rec.label);
    if (rec.family) j["family"] = *rec.family;
    j["y_hat"] = scores[k].y_hat;
    j["member_means"] = scores[k].member_means;
    j["general"] = droidfp::to_string(general.verdict);
    j["confidence"] = droidfp::to_string(conf.verdict);
    out << j.dump() << '\n';
  }
  guard.dismiss();
  std::cerr << "detect: scored " << scored.size() << " apps ("
            << degenerate << " degenerate skipped) -> "
            << run.detect_report().string() << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o) {
  droidfp::RunDir run{o.out};
  require_file(run.detect_report(), "detection report");
  std::ifstream in(run.detect_report());
  std::vector<droidfp::Decision> general, confidence;
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    labels.push_back(j.at("label").get<std::string>() == "malware");
    auto verdict = [](const std::string& s) {
      if (s == "malware") return droidfp::Verdict::Malware;
      if (s == "benign") return droidfp::Verdict::Benign;
      return droidfp::Verdict::Uncertain;
    };
    droidfp::Decision g, c;
    g.verdict = verdict(j.at("general").get<std::string>());
    c.verdict = verdict(j.at("confidence").get<std::string>());
    general.push_back(g);
    confidence.push_back(c);
  }
  if (labels.empty()) throw std::runtime_error("eval: empty detection report");

  auto gm = droidfp::metrics(general, labels);
  auto cm = droidfp::metrics(confidence, labels);
  ordered_json j;
  j["general"] = {{"precision", gm.precision},
                  {"recall", gm.recall},
                  {"f1", gm.f1},
                  {"coverage", gm.coverage}};
  j["confidence"] = {{"precision", cm.precision},
                     {"recall", cm.recall},
                     {"f1", cm.f1},
                     {"coverage", cm.coverage}};
  fs::create_directories(run.reports());
  std::ofstream out(run.eval_report());
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct ClusterOpts {
  CommonOpts common;
  std::string select = "auto";  // detected | malware | all | auto
};

int cmd_cluster(const ClusterOpts& o) {
  droidfp::RunDir run{o.common.out};
  auto cfg = resolve_config(o.common, run);
  require_file(run.vocab(), "vocabulary");
  auto vocab = droidfp::Vocabulary::load(run.vocab().string());
  auto corpus = represent_corpus(run.corpus(), vocab);

  std::string select = o.select;
  if (select == "auto")
    select = fs::exists(run.detect_report()) ? "detected" : "malware";

  std::vector<std::size_t> chosen;
  if (select == "detected") {
    require_file(run.detect_report(), "detection report");
    std::ifstream in(run.detect_report());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      if (j.at("general").get<std::string>() == "malware")
        chosen.push_back(corpus.index.at(j.at("id").get<std::string>()));
    }
  } else if (select == "malware") {
    for (std::size_t i = 0; i < corpus.records.size(); ++i)
      if (corpus.records[i].label == droidfp::Label::Malware)
        chosen.push_back(i);
  } else if (select == "all") {
    for (std::size_t i = 0; i < corpus.records.size(); ++i) chosen.push_back(i);
  } else {
    throw CLI::ValidationError("--select must be detected|malware|all|auto");
  }

  const std::size_t L = cfg.hash_len == 0 ? vocab.size() : cfg.hash_len;
  std::vector<droidfp::HashVector> hvs;
  std::vector<std::size_t> kept;
  for (std::size_t i : chosen) {
    auto hv =
        droidfp::instngram2bag(corpus.reps[i], cfg.ngram_n, L, cfg.hash_seed);
    if (hv.degenerate) continue;
    hvs.push_back(std::move(hv));
    kept.push_back(i);
  }
  if (hvs.size() < cfg.min_pts + 1)
    throw std::runtime_error("cluster: not enough feature vectors (" +
                             std::to_string(hvs.size()) + ")");

  droidfp::AutoEncoderTrainConfig ac;
  ac.epochs = cfg.ae_epochs;
  ac.lr = cfg.ae_lr;
  ac.seed = cfg.seed;
  std::cerr << "cluster: training auto-encoder on " << hvs.size()
            << " vectors of length " << L << "\n";
  auto ae = droidfp::train_autoencoder(hvs, ac);

  std::vector<std::vector<double>> digests;
  for (const auto& hv : hvs) digests.push_back(droidfp::encode(hv, ae.model));

  const double eps = droidfp::choose_eps(digests, cfg.min_pts);
  auto assignments = droidfp::dbscan(digests, eps, cfg.min_pts);
  auto matched = droidfp::family_match(assignments, digests);

  std::vector<std::string> families;
  for (std::size_t i : kept)
    families.push_back(corpus.records[i].family.value_or("benign"));
  std::size_t clustered = 0;
  for (int a : assignments)
    if (a != droidfp::kNoise) ++clustered;

  ordered_json j;
  j["eps"] = eps;
  j["min_pts"] = cfg.min_pts;
  j["n"] = kept.size();
  j["coverage"] =
      static_cast<double>(clustered) / static_cast<double>(kept.size());
  j["homogeneity"] = droidfp::homogeneity(assignments, families);
  j["homogeneity_matched"] = droidfp::homogeneity(matched, families);
  j["ae_final_loss"] = ae.epoch_loss.back();
  auto& items = j["apps"] = ordered_json::array();
  for (std::size_t k = 0; k < kept.size(); ++k) {
    ordered_json it;
    it["id"] = corpus.records[kept[k]].id;
    it["family"] = families[k];
    it["cluster"] = assignments[k];
    it["matched"] = matched[k];
    items.push_back(std::move(it));
  }
  OutputGuard guard;
  fs::create_directories(run.reports());
  guard.track(run.cluster_report());
  std::ofstream out(run.cluster_report());
  out << j.dump(2) << '\n';
  guard.dismiss();
  std::cerr << "cluster: homogeneity " << j["homogeneity"] << " at coverage "
            << j["coverage"] << " -> " << run.cluster_report().string()
            << "\n";
  return 0;
}

struct AdaptOpts {
  CommonOpts common;
  std::size_t drift_epochs = 6;
  std::size_t base_mal = 300, base_ben = 300;
  std::size_t stream_mal = 150, stream_ben = 150;
  std::size_t families = 10;
};

int cmd_adapt(const AdaptOpts& o) {
  droidfp::RunDir run{o.common.out};
  auto cfg = resolve_config(o.common, run);
  auto profile = droidfp::default_profile();

  auto base = droidfp::generate_corpus(profile, o.base_mal, o.base_ben,
                                       o.families, cfg.seed, 0);
  droidfp::write_corpus(base, run.corpus());
  auto vocab =
      droidfp::Vocabulary::from_names(profile.all_platform_assets());
  vocab.save(run.vocab().string());

  auto base_apps = droidfp::represent_records(base, vocab);
  std::vector<std::vector<droidfp::TokenId>> sequences;
  for (const auto& a : base_apps)
    for (const auto& seq : a.rep.sequences) sequences.push_back(seq.tokens);
  droidfp::EmbeddingTrainConfig ec;
  ec.dim = cfg.embed_dim;
  ec.window = cfg.window;
  ec.epochs = cfg.embed_epochs;
  ec.lr = cfg.embed_lr;
  ec.seed = cfg.seed;
  std::cerr << "adapt: training embeddings\n";
  auto table = droidfp::train_embeddings(sequences, vocab.size(), ec).table;
  table.to_checkpoint().save(run.embedding().string());

  droidfp::AdaptationConfig ac;
  ac.detect = detect_config(cfg);
  ac.seed = cfg.seed;
  std::cerr << "adapt: building initial ensemble on " << base_apps.size()
            << " apps\n";
  droidfp::AdaptationRun loop(std::move(base_apps), table, ac);

  OutputGuard guard;
  fs::create_directories(run.reports());
  guard.track(run.adapt_report());
  std::ofstream out(run.adapt_report());
  for (std::size_t t = 1; t <= o.drift_epochs; ++t) {
    auto stream_records = droidfp::generate_corpus(
        profile, o.stream_mal, o.stream_ben, o.families,
        cfg.seed + 7919 * t, static_cast<int>(t));
    droidfp::write_corpus(stream_records,
                          run.corpus().string() + "-epoch" + std::to_string(t));
    auto stream = droidfp::represent_records(stream_records, vocab);
    auto rep = loop.step(stream, static_cast<int>(t));
    ordered_json j;
    j["epoch"] = rep.epoch;
    j["stream_size"] = rep.stream_size;
    j["build_size"] = rep.build_size;
    j["exten_size"] = rep.exten_size;
    j["uncertain_size"] = rep.uncertain_size;
    j["f1_no_update"] = rep.f1_no_update;
    j["f1_general"] = rep.f1_general;
    j["f1_confidence"] = rep.f1_confidence;
    j["f1_update"] = rep.f1_update;
    j["coverage"] = rep.coverage;
    j["zeta"] = rep.zeta;
    j["eta"] = rep.eta;
    j["eta_satisfiable"] = rep.eta_satisfiable;
    j["pseudo_label_error"] = rep.pseudo_label_error;
    out << j.dump() << '\n';
    std::cerr << "adapt: epoch " << t << " no-update " << rep.f1_no_update
              << " general " << rep.f1_general << " update " << rep.f1_update
              << "\n";
  }
  guard.dismiss();
  return 0;
}

struct TransformOpts {
  CommonOpts common;
  std::string kind;
  std::string dest;
};

int cmd_transform(const TransformOpts& o) {
  droidfp::RunDir run{o.common.out};
  auto cfg = resolve_config(o.common, run);
  const std::map<std::string, droidfp::TransformKind> kinds = {
      {"rename", droidfp::TransformKind::RenameIdentifiers},
      {"junk", droidfp::TransformKind::JunkInsertion},
      {"reorder", droidfp::TransformKind::MethodReordering},
      {"indirect", droidfp::TransformKind::CallIndirection},
      {"stringenc", droidfp::TransformKind::StringEncryptionStub}};
  auto it = kinds.find(o.kind);
  if (it == kinds.end())
    throw CLI::ValidationError(
        "--kind must be rename|junk|reorder|indirect|stringenc");

  auto records = load_corpus(run.corpus());
  std::vector<droidfp::AppRecord> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back(droidfp::transform(r, it->second, cfg.seed));
  const fs::path dest = o.dest.empty()
                            ? fs::path(run.corpus().string() + "-" + o.kind)
                            : fs::path(o.dest);
  OutputGuard guard;
  guard.track(dest);
  droidfp::write_corpus(out, dest);
  guard.dismiss();
  std::cerr << "transform: " << o.kind << " -> " << dest.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"malware fingerprinting pipeline"};
  app.require_subcommand(1);

  GenOpts gen;
  auto* c_gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  add_common(c_gen, gen.common);
  c_gen->add_option("--n-mal", gen.n_mal, "malware apps");
  c_gen->add_option("--n-ben", gen.n_ben, "benign apps");
  c_gen->add_option("--families", gen.families, "malware families");
  c_gen->add_option("--epoch-tag", gen.epoch_tag, "drift epoch tag");

  VocabOpts voc;
  auto* c_voc = app.add_subcommand("build-vocab", "build the token vocabulary");
  add_common(c_voc, voc.common);
  c_voc->add_flag("--observed", voc.observed,
                  "use assets observed in the corpus instead of the full "
                  "generator universe");

  CommonOpts emb;
  auto* c_emb =
      app.add_subcommand("train-embed", "train instruction embeddings");
  add_common(c_emb, emb);

  CommonOpts det_train;
  auto* c_dt = app.add_subcommand("train-detect",
                                  "train the CNN ensemble and thresholds");
  add_common(c_dt, det_train);

  DetectOpts det;
  auto* c_det = app.add_subcommand("detect", "score apps and write verdicts");
  add_common(c_det, det.common);
  c_det->add_option("--corpus", det.corpus_dir,
                    "score an external corpus directory instead of the run "
                    "test split");
  c_det->add_flag("--all", det.all, "score the whole run corpus");

  CommonOpts ev;
  auto* c_ev = app.add_subcommand("eval", "metrics over a detection report");
  add_common(c_ev, ev);

  ClusterOpts clu;
  auto* c_clu = app.add_subcommand("cluster", "family clustering");
  add_common(c_clu, clu.common);
  c_clu->add_option("--select", clu.select,
                    "apps to cluster: detected|malware|all|auto");

  AdaptOpts ad;
  auto* c_ad = app.add_subcommand("adapt", "drift adaptation run");
  add_common(c_ad, ad.common);
  c_ad->add_option("--epochs", ad.drift_epochs, "drift epochs");
  c_ad->add_option("--base-mal", ad.base_mal, "base malware apps");
  c_ad->add_option("--base-ben", ad.base_ben, "base benign apps");
  c_ad->add_option("--stream-mal", ad.stream_mal, "stream malware per epoch");
  c_ad->add_option("--stream-ben", ad.stream_ben, "stream benign per epoch");
  c_ad->add_option("--families", ad.families, "malware families");

  TransformOpts tr;
  auto* c_tr = app.add_subcommand("transform", "rewrite a corpus");
  add_common(c_tr, tr.common);
  c_tr->add_option("--kind", tr.kind,
                   "rename|junk|reorder|indirect|stringenc")
      ->required();
  c_tr->add_option("--dest", tr.dest, "output corpus directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_gen) return cmd_gen_corpus(gen);
    if (*c_voc) return cmd_build_vocab(voc);
    if (*c_emb) return cmd_train_embed(emb);
    if (*c_dt) return cmd_train_detect(det_train);
    if (*c_det) return cmd_detect(det);
    if (*c_ev) return cmd_eval(ev);
    if (*c_clu) return cmd_cluster(clu);
    if (*c_ad) return cmd_adapt(ad);
    if (*c_tr) return cmd_transform(tr);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 1;
}
