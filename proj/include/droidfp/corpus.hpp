#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "droidfp/asmparse.hpp"
#include "droidfp/rng.hpp"

namespace droidfp {

enum class Label { Benign, Malware };

inline std::string to_string(Label l) {
  return l == Label::Malware ? "malware" : "benign";
}
inline Label label_from_string(const std::string& s) {
  if (s == "malware") return Label::Malware;
  if (s == "benign") return Label::Benign;
  throw std::runtime_error("unknown label '" + s + "'");
}

struct AppRecord {
  std::string id;
  Label label = Label::Benign;
  std::optional<std::string> family;  // present iff label == Malware
  int epoch_tag = 0;
  std::string source_text;
};

// ---------------------------------------------------------------------------
// Generator profile: synthetic asset universe with planted class and family
// structure plus a drift pool that rotates vocabulary over epoch tags.
// ---------------------------------------------------------------------------

struct GeneratorProfile {
  // asset pools (names in the normative platform spelling)
  std::vector<std::string> shared_assets;
  std::vector<std::string> benign_pool;   // active window slides with drift
  std::vector<std::string> malware_pool;  // ditto
  std::vector<std::vector<std::string>> family_tokens;  // [family][asset]
  std::vector<std::vector<std::vector<std::string>>>
      family_signatures;  // [family][signature][position]
  std::vector<std::string> junk_assets;  // non-platform, never in vocabulary

  int active_class_assets = 48;  // window width into the drift pools
  double drift_rate = 0.1;       // fraction of the window replaced per epoch

  double class_weight = 0.50;   // P(token from the class window)
  double family_weight = 0.32;  // P(token from the family set), malware only

  int methods_min = 8, methods_max = 18;
  int instrs_min = 4, instrs_max = 14;
  int signature_copies_min = 3;  // occurrences of a signature per malware app

  // family size skew: 0 = round-robin; > 0 biases toward low family indices
  double family_skew = 0.0;

  std::size_t window_offset(int epoch_tag) const {
    const auto step = static_cast<std::size_t>(
        std::llround(drift_rate * active_class_assets));
    return step * static_cast<std::size_t>(epoch_tag);
  }

  // Active slice of a drift pool at a given epoch; clamped to the pool end.
  std::pair<std::size_t, std::size_t> active_window(
      const std::vector<std::string>& pool, int epoch_tag) const {
    std::size_t off = window_offset(epoch_tag);
    std::size_t width = static_cast<std::size_t>(active_class_assets);
    if (off + width > pool.size()) off = pool.size() - width;
    return {off, width};
  }

  // Every platform asset this profile can ever emit (for vocabulary builds).
  std::vector<std::string> all_platform_assets() const {
    std::vector<std::string> out = shared_assets;
    out.insert(out.end(), benign_pool.begin(), benign_pool.end());
    out.insert(out.end(), malware_pool.begin(), malware_pool.end());
    for (const auto& f : family_tokens)
      out.insert(out.end(), f.begin(), f.end());
    for (const auto& f : family_signatures)
      for (const auto& sig : f) out.insert(out.end(), sig.begin(), sig.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // Explicit token-frequency distribution for one class at one epoch
  // (family < 0 for benign). Sums to 1 within 1e-9.
  std::map<std::string, double> token_distribution(Label label, int family,
                                                   int epoch_tag) const {
    std::map<std::string, double> dist;
    const double fam_w = label == Label::Malware ? family_weight : 0.0;
    const double shared_w = 1.0 - class_weight - fam_w;

    // shared assets carry Zipf-ish weights
    double zsum = 0.0;
    for (std::size_t i = 0; i < shared_assets.size(); ++i)
      zsum += 1.0 / static_cast<double>(i + 1);
    for (std::size_t i = 0; i < shared_assets.size(); ++i)
      dist[shared_assets[i]] +=
          shared_w * (1.0 / static_cast<double>(i + 1)) / zsum;

    const auto& pool = label == Label::Malware ? malware_pool : benign_pool;
    auto [off, width] = active_window(pool, epoch_tag);
    for (std::size_t i = 0; i < width; ++i)
      dist[pool[off + i]] += class_weight / static_cast<double>(width);

    if (label == Label::Malware && family >= 0) {
      const auto& fam = family_tokens.at(static_cast<std::size_t>(family));
      for (const auto& a : fam)
        dist[a] += fam_w / static_cast<double>(fam.size());
    }
    return dist;
  }
};

namespace detail {

inline std::string asset_member(const std::string& pkg, int cls, int m) {
  return pkg + "/C" + std::to_string(cls) + ".m" + std::to_string(m);
}
inline std::string asset_class(const std::string& pkg, int cls) {
  return pkg + "/C" + std::to_string(cls);
}

}  // namespace detail

// Deterministic default profile sized for desk-scale experiments. The drift
// pools are long enough for 12 epochs at drift_rate 0.1.
inline GeneratorProfile default_profile(int max_families = 32) {
  GeneratorProfile p;
  for (int i = 0; i < 120; ++i)
    p.shared_assets.push_back(
        detail::asset_member("android/shared/s" + std::to_string(i / 8),
                             i / 8, i % 8));
  const int pool_len = p.active_class_assets +
                       static_cast<int>(std::llround(
                           p.drift_rate * p.active_class_assets)) *
                           12;
  for (int i = 0; i < pool_len; ++i) {
    p.benign_pool.push_back(
        detail::asset_member("android/ben/b" + std::to_string(i / 6), i / 6,
                             i % 6));
    p.malware_pool.push_back(
        detail::asset_member("android/mal/m" + std::to_string(i / 6), i / 6,
                             i % 6));
  }
  p.family_tokens.resize(max_families);
  p.family_signatures.resize(max_families);
  for (int f = 0; f < max_families; ++f) {
    const std::string pkg = "android/fam/f" + std::to_string(f);
    for (int i = 0; i < 12; ++i)
      p.family_tokens[f].push_back(detail::asset_member(pkg, i / 4, i % 4));
    // several long signatures per family: shared sequential code is what
    // gives same-family apps overlapping n-grams, mirroring real code reuse
    for (int s = 0; s < 4; ++s) {
      std::vector<std::string> sig;
      for (int k = 0; k < 8; ++k)
        sig.push_back(detail::asset_member(pkg + "/sig", s, k));
      p.family_signatures[f].push_back(std::move(sig));
    }
  }
  p.signature_copies_min = 6;
  for (int i = 0; i < 64; ++i)
    p.junk_assets.push_back("com/thirdparty/j" + std::to_string(i / 4) +
                            "/J" + std::to_string(i % 4));
  return p;
}

// ---------------------------------------------------------------------------
// App synthesis: token plan -> assembly text in the normative grammar.
// ---------------------------------------------------------------------------

namespace detail {

inline bool member_like(const std::string& asset) {
  return asset.find('.') != std::string::npos;
}

// Renders a planned token run as instruction lines whose canonical output
// equals the plan, interleaved with non-canonical filler.
inline void render_method(std::ostringstream& out,
                          const std::vector<std::string>& plan, Rng& rng) {
  std::size_t i = 0;
  while (i < plan.size()) {
    if (rng.real() < 0.3) {
      static const char* filler[] = {"move v1, v2", "const/4 v3, 1",
                                     "if-eqz v4, 003e",
                                     "move-result-object v5",
                                     "goto 0051"};
      out << "  " << filler[rng.below(5)] << "\n";
    }
    const std::string& a = plan[i];
    if (!member_like(a)) {
      out << "  new-instance v" << rng.below(16) << ", " << a << "\n";
      ++i;
      continue;
    }
    // member-like: invocation, field access, or invocation with args/return
    if (i + 2 < plan.size() && !member_like(plan[i + 1]) &&
        !member_like(plan[i + 2]) && rng.real() < 0.25) {
      out << "  invoke-virtual {v" << rng.below(16) << ", v" << rng.below(16)
          << "}, " << a << "(" << plan[i + 1] << ")" << plan[i + 2] << "\n";
      i += 3;
      continue;
    }
    if (i + 1 < plan.size() && !member_like(plan[i + 1]) &&
        rng.real() < 0.25) {
      out << "  iget-object v0, v0, " << a << " " << plan[i + 1] << "\n";
      i += 2;
      continue;
    }
    out << "  invoke-virtual {v" << rng.below(16) << "}, " << a << "()\n";
    ++i;
    if (rng.real() < 0.15)
      out << "  const-string v" << rng.below(16) << ", \"cfg"
          << rng.below(1000) << "\"\n";
  }
}

// Weighted draw from a cumulative table built once per (label, family, epoch).
struct TokenSampler {
  std::vector<std::string> assets;
  std::vector<double> cumulative;

  explicit TokenSampler(const std::map<std::string, double>& dist) {
    double acc = 0.0;
    for (const auto& [name, w] : dist) {
      acc += w;
      assets.push_back(name);
      cumulative.push_back(acc);
    }
  }

  const std::string& draw(Rng& rng) const {
    const double u = rng.real() * cumulative.back();
    auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    return assets[static_cast<std::size_t>(it - cumulative.begin())];
  }
};

}  // namespace detail

inline AppRecord synthesize_app(const GeneratorProfile& profile,
                                const std::string& id, Label label,
                                std::optional<int> family, int epoch_tag,
                                Rng rng) {
  const detail::TokenSampler sampler(profile.token_distribution(
      label, family ? *family : -1, epoch_tag));

  const int n_methods =
      profile.methods_min +
      static_cast<int>(rng.below(
          static_cast<std::uint64_t>(profile.methods_max - profile.methods_min + 1)));
  std::vector<std::vector<std::string>> plans(
      static_cast<std::size_t>(n_methods));
  for (auto& plan : plans) {
    const int n_instr =
        profile.instrs_min +
        static_cast<int>(rng.below(static_cast<std::uint64_t>(
            profile.instrs_max - profile.instrs_min + 1)));
    for (int i = 0; i < n_instr; ++i) plan.push_back(sampler.draw(rng));
  }

  if (label == Label::Malware && family) {
    const auto& sigs =
        profile.family_signatures.at(static_cast<std::size_t>(*family));
    const int copies = profile.signature_copies_min +
                       static_cast<int>(rng.below(2));
    for (int c = 0; c < copies; ++c) {
      const auto& sig = sigs[rng.below(sigs.size())];
      auto& plan = plans[rng.below(plans.size())];
      const std::size_t at = rng.below(plan.size() + 1);
      plan.insert(plan.begin() + static_cast<std::ptrdiff_t>(at), sig.begin(),
                  sig.end());
    }
  }

  std::ostringstream text;
  const int n_classes = std::max(1, n_methods / 4);
  int mi = 0;
  for (int c = 0; c < n_classes; ++c) {
    text << "class com/app/" << id << "/K" << c << "\n";
    const int upto = c == n_classes - 1 ? n_methods
                                        : mi + n_methods / n_classes;
    for (; mi < upto; ++mi) {
      text << "method run" << mi << "\n";
      detail::render_method(text, plans[static_cast<std::size_t>(mi)], rng);
      text << "end\n";
    }
    text << "end\n";
  }

  AppRecord rec;
  rec.id = id;
  rec.label = label;
  if (label == Label::Malware && family)
    rec.family = "family" + std::to_string(*family);
  rec.epoch_tag = epoch_tag;
  rec.source_text = text.str();
  return rec;
}

// Seeded, reproducible corpus with planted family structure. Malware family
// assignment is round-robin at skew 0, geometric-biased otherwise.
inline std::vector<AppRecord> generate_corpus(const GeneratorProfile& profile,
                                              std::size_t n_mal,
                                              std::size_t n_ben,
                                              std::size_t n_families,
                                              std::uint64_t seed,
                                              int epoch_tag = 0) {
  if (n_families < 1) throw std::invalid_argument("n_families must be >= 1");
  if (n_mal > 0 && n_families > n_mal)
    throw std::invalid_argument("more families than malware records");
  if (n_families > profile.family_tokens.size())
    throw std::invalid_argument("profile supports at most " +
                                std::to_string(profile.family_tokens.size()) +
                                " families");
  Rng root(seed ^ (0x5eedc0de00000000ULL + static_cast<std::uint64_t>(epoch_tag)));
  std::vector<AppRecord> records;
  records.reserve(n_mal + n_ben);

  Rng fam_rng = root.split(1);
  for (std::size_t i = 0; i < n_mal; ++i) {
    int family;
    if (profile.family_skew <= 0.0) {
      family = static_cast<int>(i % n_families);
    } else {
      // geometric-ish bias toward low family indices
      double u = fam_rng.real();
      family = static_cast<int>(std::floor(
          std::log1p(-u * (1.0 - std::pow(1.0 - profile.family_skew,
                                          static_cast<double>(n_families)))) /
          std::log(1.0 - profile.family_skew)));
      family = std::min(family, static_cast<int>(n_families) - 1);
    }
    std::ostringstream id;
    id << "mal-e" << epoch_tag << "-" << std::setw(5) << std::setfill('0')
       << i;
    records.push_back(synthesize_app(profile, id.str(), Label::Malware,
                                     family, epoch_tag,
                                     root.split(1000 + i)));
  }
  for (std::size_t i = 0; i < n_ben; ++i) {
    std::ostringstream id;
    id << "ben-e" << epoch_tag << "-" << std::setw(5) << std::setfill('0')
       << i;
    records.push_back(synthesize_app(profile, id.str(), Label::Benign,
                                     std::nullopt, epoch_tag,
                                     root.split(2000000 + i)));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Dataset splits (stratified by label).
// ---------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<std::string> build_ids;
  std::vector<std::string> test_ids;
  std::vector<std::string> train_ids;
  std::vector<std::string> valid_ids;
  std::uint64_t seed = 0;
};

namespace detail {

// Stratified partition of `ids` grouped by class; takes round(ratio * n) per
// class into the first part.
inline std::pair<std::vector<std::string>, std::vector<std::string>>
stratified_take(const std::vector<std::vector<std::string>>& groups,
                double ratio) {
  std::vector<std::string> first, second;
  for (const auto& g : groups) {
    const std::size_t k = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(g.size())));
    first.insert(first.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(k));
    second.insert(second.end(), g.begin() + static_cast<std::ptrdiff_t>(k),
                  g.end());
  }
  return {std::move(first), std::move(second)};
}

}  // namespace detail

inline DatasetSplit split_dataset(const std::vector<AppRecord>& records,
                                  double build_ratio, std::uint64_t seed) {
  if (!(build_ratio > 0.0 && build_ratio < 1.0))
    throw std::invalid_argument("build_ratio must be in (0, 1)");
  if (records.size() < 4)
    throw std::invalid_argument("need at least 4 records to split");

  std::vector<std::string> mal, ben;
  for (const auto& r : records)
    (r.label == Label::Malware ? mal : ben).push_back(r.id);
  Rng rng(seed ^ 0x51b17da7a5e7ULL);
  rng.shuffle(mal);
  rng.shuffle(ben);

  DatasetSplit s;
  s.seed = seed;
  auto [build, test] = detail::stratified_take({mal, ben}, build_ratio);
  s.build_ids = std::move(build);
  s.test_ids = std::move(test);

  // re-stratify the build half for the 80/20 train/valid cut
  std::vector<std::string> bmal, bben;
  {
    std::set<std::string> malset(mal.begin(), mal.end());
    for (const auto& id : s.build_ids)
      (malset.count(id) ? bmal : bben).push_back(id);
  }
  auto [train, valid] = detail::stratified_take({bmal, bben}, 0.8);
  s.train_ids = std::move(train);
  s.valid_ids = std::move(valid);
  return s;
}

// ---------------------------------------------------------------------------
// Obfuscation-style transformations at the assembly-text level.
// ---------------------------------------------------------------------------

enum class TransformKind {
  RenameIdentifiers,
  JunkInsertion,
  MethodReordering,
  CallIndirection,
  StringEncryptionStub,
};

inline TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "rename_identifiers") return TransformKind::RenameIdentifiers;
  if (s == "junk_insertion") return TransformKind::JunkInsertion;
  if (s == "method_reordering") return TransformKind::MethodReordering;
  if (s == "call_indirection") return TransformKind::CallIndirection;
  if (s == "string_encryption_stub")
    return TransformKind::StringEncryptionStub;
  throw std::invalid_argument("unknown transform kind '" + s + "'");
}

namespace detail {

inline std::string render_app(const ParsedApp& app) {
  std::ostringstream out;
  for (const auto& cls : app.classes) {
    out << "class " << cls.name << "\n";
    for (const auto& m : cls.methods) {
      out << "method " << m.name << "\n";
      for (const auto& ins : m.instructions) out << "  " << ins.text << "\n";
      out << "end\n";
    }
    out << "end\n";
  }
  return out.str();
}

inline Instruction opaque_line(std::string text) {
  Instruction ins;
  ins.kind = InstrKind::Other;
  ins.text = std::move(text);
  return ins;
}

}  // namespace detail

inline AppRecord transform(const AppRecord& record, TransformKind kind,
                           std::uint64_t seed) {
  ParsedApp app = parse(record.source_text);  // throws on unparseable input
  Rng rng(seed ^ 0x0bf05ca7edULL);

  switch (kind) {
    case TransformKind::RenameIdentifiers: {
      int c = 0;
      for (auto& cls : app.classes) {
        cls.name = "o/r" + std::to_string(rng.below(1 << 20)) + "/X" +
                   std::to_string(c++);
        int m = 0;
        for (auto& method : cls.methods)
          method.name = "q" + std::to_string(m++) + "_" +
                        std::to_string(rng.below(1 << 16));
      }
      break;
    }
    case TransformKind::JunkInsertion: {
      for (auto& cls : app.classes) {
        for (auto& method : cls.methods) {
          std::vector<Instruction> out;
          for (auto& ins : method.instructions) {
            if (rng.real() < 0.2) {
              out.push_back(detail::opaque_line(
                  "new-instance v9, com/junkgen/G" +
                  std::to_string(rng.below(4096))));
            }
            out.push_back(std::move(ins));
          }
          method.instructions = std::move(out);
        }
      }
      break;
    }
    case TransformKind::MethodReordering: {
      rng.shuffle(app.classes);
      for (auto& cls : app.classes) rng.shuffle(cls.methods);
      break;
    }
    case TransformKind::CallIndirection: {
      // collect candidate invocations (parenthesized calls only)
      std::vector<std::pair<std::size_t, std::size_t>> sites;
      std::vector<std::size_t> site_instr;
      for (std::size_t ci = 0; ci < app.classes.size(); ++ci)
        for (std::size_t mi = 0; mi < app.classes[ci].methods.size(); ++mi)
          for (std::size_t ii = 0;
               ii < app.classes[ci].methods[mi].instructions.size(); ++ii) {
            const auto& ins = app.classes[ci].methods[mi].instructions[ii];
            if (ins.kind == InstrKind::Invoke && !ins.bare_callee) {
              sites.emplace_back(ci, mi);
              site_instr.push_back(ii);
            }
          }
      if (sites.empty()) break;
      const std::size_t pick = rng.below(sites.size());
      auto [ci, mi] = sites[pick];
      auto& method = app.classes[ci].methods[mi];
      Instruction moved = method.instructions[site_instr[pick]];
      const std::string stub =
          "com/app/indirect/H" + std::to_string(rng.below(1 << 20));
      method.instructions[site_instr[pick]] = detail::opaque_line(
          "invoke-static {v0}, " + stub + ".fwd()");
      ParsedMethod wrapper;
      wrapper.name = "fwd" + std::to_string(rng.below(1 << 16));
      wrapper.instructions.push_back(std::move(moved));
      app.classes[ci].methods.push_back(std::move(wrapper));
      break;
    }
    case TransformKind::StringEncryptionStub: {
      for (auto& cls : app.classes)
        for (auto& method : cls.methods)
          for (auto& ins : method.instructions) {
            if (ins.kind != InstrKind::Other) continue;
            const std::size_t q = ins.text.find('"');
            if (ins.text.rfind("const-string", 0) == 0 &&
                q != std::string::npos) {
              ins.text = ins.text.substr(0, q) + "\"enc$" +
                         std::to_string(rng.below(1u << 30)) + "$\"";
            }
          }
      break;
    }
  }

  AppRecord out = record;  // label/family/epoch unchanged
  out.source_text = detail::render_app(app);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus serialization: one assembly file per app plus a JSON-lines manifest
// with the normative fields id, label, family, epoch_tag, path.
// ---------------------------------------------------------------------------

inline void write_corpus(const std::vector<AppRecord>& records,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "apps");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest)
    throw std::runtime_error("cannot write manifest under " + dir.string());
  for (const auto& r : records) {
    const std::string rel = "apps/" + r.id + ".asm";
    std::ofstream app(dir / rel);
    app << r.source_text;
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["label"] = to_string(r.label);
    j["family"] = r.family ? nlohmann::json(*r.family) : nlohmann::json();
    j["epoch_tag"] = r.epoch_tag;
    j["path"] = rel;
    manifest << j.dump() << "\n";
  }
}

inline std::vector<AppRecord> read_corpus(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest)
    throw std::runtime_error("cannot read manifest under " + dir.string());
  std::vector<AppRecord> records;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    AppRecord r;
    r.id = j.at("id").get<std::string>();
    r.label = label_from_string(j.at("label").get<std::string>());
    if (!j.at("family").is_null())
      r.family = j.at("family").get<std::string>();
    r.epoch_tag = j.at("epoch_tag").get<int>();
    std::ifstream app(dir / j.at("path").get<std::string>());
    if (!app)
      throw std::runtime_error("missing app file " +
                               j.at("path").get<std::string>());
    std::ostringstream text;
    text << app.rdbuf();
    r.source_text = text.str();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace droidfp
