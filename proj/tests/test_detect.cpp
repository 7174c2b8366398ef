#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "droidfp/detect.hpp"
#include "droidfp/rng.hpp"

using droidfp::AppRepresentation;
using droidfp::AppScore;
using droidfp::Decision;
using droidfp::DecisionStrategy;
using droidfp::DecisionThresholds;
using droidfp::DetectConfig;
using droidfp::EmbeddingTable;
using droidfp::Ensemble;
using droidfp::fit_confidence_threshold;
using droidfp::fit_general_threshold;
using droidfp::LabeledApp;
using droidfp::MethodSequence;
using droidfp::metrics;
using droidfp::Rng;
using droidfp::score;
using droidfp::score_batch;
using droidfp::select_ensemble;
using droidfp::Snapshot;
using droidfp::TokenId;
using droidfp::Verdict;

namespace {

Snapshot snapshot_with(double loss_v, double loss_t, std::size_t epoch) {
  Snapshot s;
  s.loss_v = loss_v;
  s.loss_t = loss_t;
  s.epoch = epoch;
  return s;
}

EmbeddingTable small_table(std::size_t vocab, std::size_t dim,
                           std::uint64_t seed) {
  EmbeddingTable t;
  t.vocab_size = vocab;
  t.dim = dim;
  t.input_vectors.assign(vocab * dim, 0.0f);
  t.output_vectors.assign(vocab * dim, 0.0f);
  Rng rng(seed);
  for (std::size_t i = 2 * dim; i < t.input_vectors.size(); ++i)
    t.input_vectors[i] = static_cast<float>(rng.real() * 2.0 - 1.0);
  return t;
}

AppRepresentation rep_of(std::vector<std::vector<TokenId>> seqs) {
  AppRepresentation rep;
  for (auto& s : seqs) rep.sequences.push_back(MethodSequence{"", "", std::move(s)});
  return rep;
}

// A model whose output is exactly `p` for any input: all weights zero, the
// final bias set to the logit of p, batch statistics left at (0, 1).
droidfp::CnnModel<float> constant_model(double p) {
  droidfp::CnnModel<float> m;
  Rng rng(1);
  m.init(4, rng);
  std::fill(m.conv_w.begin(), m.conv_w.end(), 0.0f);
  std::fill(m.fc1_w.begin(), m.fc1_w.end(), 0.0f);
  std::fill(m.fc2_w.begin(), m.fc2_w.end(), 0.0f);
  std::fill(m.fc3_w.begin(), m.fc3_w.end(), 0.0f);
  m.fc3_b[0] = static_cast<float>(std::log(p / (1.0 - p)));
  return m;
}

double exhaustive_best_f1(const std::vector<double>& scores,
                          const std::vector<int>& labels) {
  auto f1_at = [&](double z) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool pred = scores[i] > z;
      if (pred && labels[i]) ++tp;
      if (pred && !labels[i]) ++fp;
      if (!pred && labels[i]) ++fn;
    }
    if (tp == 0) return 0.0;
    const double p = double(tp) / double(tp + fp);
    const double r = double(tp) / double(tp + fn);
    return 2.0 * p * r / (p + r);
  };
  // F1 as a function of the threshold over [0, 1] is piecewise constant with
  // breakpoints at the distinct scores; the endpoints and midpoints cover
  // every piece
  double best = std::max(f1_at(0.0), f1_at(1.0));
  auto sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    best = std::max(best, f1_at(0.5 * (sorted[i] + sorted[i + 1])));
  return best;
}

}  // namespace

TEST_CASE("ensemble selection orders by validation, training, then epoch") {
  std::vector<Snapshot> snaps{snapshot_with(0.5, 0.2, 1),
                              snapshot_with(0.4, 0.2, 2),
                              snapshot_with(0.4, 0.1, 3)};
  auto e = select_ensemble(snaps, 2);
  REQUIRE(e.members.size() == 2);
  REQUIRE(e.members[0].epoch == 3);  // (0.4, 0.1)
  REQUIRE(e.members[1].epoch == 2);  // (0.4, 0.2)

  auto all = select_ensemble(snaps, 3);
  REQUIRE(all.members[2].epoch == 1);

  REQUIRE_THROWS(select_ensemble(snaps, 4));
  REQUIRE_THROWS(select_ensemble(snaps, 0));

  // epoch breaks exact (loss_v, loss_t) ties toward the earlier snapshot
  std::vector<Snapshot> tied{snapshot_with(0.3, 0.3, 2),
                             snapshot_with(0.3, 0.3, 1)};
  REQUIRE(select_ensemble(tied, 1).members[0].epoch == 1);
}

TEST_CASE("general threshold on worked examples") {
  REQUIRE(fit_general_threshold({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 0.5);
  REQUIRE(fit_general_threshold({0.4, 0.6}, {0, 1}) == 0.5);
  REQUIRE_THROWS(fit_general_threshold({0.1, 0.2}, {0, 0}));
  REQUIRE_THROWS(fit_general_threshold({}, {}));
}

TEST_CASE("general threshold matches an exhaustive search") {
  Rng rng(41);
  for (int it = 0; it < 50; ++it) {
    const std::size_t n = 4 + rng.below(30);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::round(rng.real() * 20.0) / 20.0;  // force ties
      labels[i] = rng.below(2) ? 1 : 0;
      (labels[i] ? pos : neg) = true;
    }
    if (!pos) labels[0] = 1;
    if (!neg) labels[1] = 0;

    const double zeta = fit_general_threshold(scores, labels);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = scores[i] > zeta;
      if (pred && labels[i]) ++tp;
      if (pred && !labels[i]) ++fp;
      if (!pred && labels[i]) ++fn;
    }
    double f1 = 0.0;
    if (tp > 0) {
      const double p = double(tp) / double(tp + fp);
      const double r = double(tp) / double(tp + fn);
      f1 = 2.0 * p * r / (p + r);
    }
    REQUIRE(f1 == exhaustive_best_f1(scores, labels));
  }
}

TEST_CASE("confidence threshold: separated scores give maximal coverage") {
  auto fit = fit_confidence_threshold({0.95, 0.9, 0.05, 0.1}, {1, 1, 0, 0},
                                      0.01);
  REQUIRE(fit.satisfiable);
  REQUIRE(fit.eta == 0.5);  // ties resolve toward larger coverage
}

TEST_CASE("confidence threshold: impossible bound flags eta = 1") {
  // a maximally confident wrong score is decided at every eta
  auto fit = fit_confidence_threshold({1.0, 0.0}, {0, 1}, 0.01);
  REQUIRE_FALSE(fit.satisfiable);
  REQUIRE(fit.eta == 1.0);
}

TEST_CASE("confidence threshold prefers error-bounded subsets") {
  // one borderline mistake at 0.6; eta above 0.6 excludes it
  std::vector<double> scores{0.95, 0.9, 0.6, 0.05, 0.1};
  std::vector<int> labels{1, 1, 0, 0, 0};
  auto fit = fit_confidence_threshold(scores, labels, 0.01);
  REQUIRE(fit.satisfiable);
  REQUIRE(fit.eta > 0.6);
}

TEST_CASE("decision rules") {
  DecisionThresholds th;
  th.zeta = 0.5;
  th.eta = 0.8;

  REQUIRE(droidfp::decide(0.7, th, DecisionStrategy::General).verdict ==
          Verdict::Malware);
  REQUIRE(droidfp::decide(0.5, th, DecisionStrategy::General).verdict ==
          Verdict::Benign);  // strict inequality at zeta

  REQUIRE(droidfp::decide(0.85, th, DecisionStrategy::Confidence).verdict ==
          Verdict::Malware);
  REQUIRE(droidfp::decide(0.15, th, DecisionStrategy::Confidence).verdict ==
          Verdict::Benign);
  REQUIRE(droidfp::decide(0.7, th, DecisionStrategy::Confidence).verdict ==
          Verdict::Uncertain);

  th.eta = 0.5;  // pm = pb = 0.5 is never confident: neither side dominates
  REQUIRE(droidfp::decide(0.5, th, DecisionStrategy::Confidence).verdict ==
          Verdict::Uncertain);
}

TEST_CASE("metrics over the decided subset") {
  auto mk = [](Verdict v) {
    Decision d;
    d.verdict = v;
    return d;
  };
  std::vector<Decision> ds;
  std::vector<int> labels;
  for (int i = 0; i < 9; ++i) {  // 9 true positives
    ds.push_back(mk(Verdict::Malware));
    labels.push_back(1);
  }
  ds.push_back(mk(Verdict::Malware));  // 1 false positive
  labels.push_back(0);
  ds.push_back(mk(Verdict::Benign));  // 1 false negative
  labels.push_back(1);
  ds.push_back(mk(Verdict::Benign));  // 1 true negative
  labels.push_back(0);
  for (int i = 0; i < 3; ++i) {  // uncertain: excluded from P/R/F1
    ds.push_back(mk(Verdict::Uncertain));
    labels.push_back(i % 2);
  }
  auto r = metrics(ds, labels);
  REQUIRE(r.precision == Catch::Approx(0.9));
  REQUIRE(r.recall == Catch::Approx(0.9));
  REQUIRE(r.f1 == Catch::Approx(0.9));
  REQUIRE(r.coverage == Catch::Approx(12.0 / 15.0));
  REQUIRE_FALSE(r.degenerate);

  auto none = metrics({mk(Verdict::Benign)}, {0});
  REQUIRE(none.degenerate);
  REQUIRE(none.f1 == 0.0);
  REQUIRE_THROWS(metrics(ds, {1}));
}

TEST_CASE("app score is the mean of member means, exactly") {
  Ensemble e;
  e.members.push_back(constant_model(0.2));
  e.members.push_back(constant_model(0.8));
  auto table = small_table(8, 4, 5);
  auto rep = rep_of({{2, 3, 4, 5, 6}, {7}});

  auto s = score(rep, e, table, 8, 6, Rng(3));
  REQUIRE(s.member_means.size() == 2);
  REQUIRE(s.member_means[0] == Catch::Approx(0.2).margin(1e-6));
  REQUIRE(s.member_means[1] == Catch::Approx(0.8).margin(1e-6));
  REQUIRE(s.y_hat == Catch::Approx(0.5).margin(1e-6));
  const double direct = (s.member_means[0] + s.member_means[1]) / 2.0;
  REQUIRE(std::abs(s.y_hat - direct) <= 1e-12);

  REQUIRE_THROWS(score(AppRepresentation{}, e, table, 8, 6, Rng(3)));
  REQUIRE_THROWS(score(rep, e, table, 8, 0, Rng(3)));
  Ensemble empty;
  REQUIRE_THROWS(score(rep, empty, table, 8, 6, Rng(3)));
}

TEST_CASE("batch scoring is worker-count independent") {
  Ensemble e;
  Rng init(9);
  droidfp::CnnModel<float> m;
  m.init(4, init);
  m.bn.running_var.assign(m.bn.running_var.size(), 1.0f);
  e.members.push_back(m);

  auto table = small_table(16, 4, 6);
  std::vector<AppRepresentation> reps;
  for (TokenId t = 2; t < 10; ++t)
    reps.push_back(rep_of({{t, TokenId(t + 1), t}, {TokenId(t + 2)}}));
  std::vector<const AppRepresentation*> ptrs;
  for (auto& r : reps) ptrs.push_back(&r);

  auto one = score_batch(ptrs, e, table, 8, 4, Rng(55), 1);
  auto four = score_batch(ptrs, e, table, 8, 4, Rng(55), 4);
  REQUIRE(one.size() == ptrs.size());
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    REQUIRE(one[i].y_hat == four[i].y_hat);
    // and each app's stream matches a direct call with its own split
    auto direct = score(reps[i], e, table, 8, 4, Rng(55).split(i + 1));
    REQUIRE(one[i].y_hat == direct.y_hat);
  }
}

TEST_CASE("training yields one snapshot per epoch, deterministically") {
  auto table = small_table(12, 4, 77);
  std::vector<AppRepresentation> reps;
  std::vector<LabeledApp> train_set, valid_set;
  for (int i = 0; i < 8; ++i) {
    const TokenId base = i % 2 ? 2 : 7;  // class-distinct token ranges
    reps.push_back(rep_of({{base, TokenId(base + 1), TokenId(base + 2)},
                           {TokenId(base + 3), base}}));
  }
  for (int i = 0; i < 6; ++i) train_set.push_back({&reps[i], i % 2});
  for (int i = 6; i < 8; ++i) valid_set.push_back({&reps[i], i % 2});

  DetectConfig cfg;
  cfg.fragment_len = 8;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 13;
  auto snaps = droidfp::train_single(train_set, valid_set, table, cfg);
  REQUIRE(snaps.size() == 2);
  REQUIRE(snaps[0].epoch == 1);
  REQUIRE(snaps[1].epoch == 2);
  for (const auto& s : snaps) {
    REQUIRE(std::isfinite(s.loss_t));
    REQUIRE(std::isfinite(s.loss_v));
    REQUIRE(s.loss_t > 0.0);
  }

  auto again = droidfp::train_single(train_set, valid_set, table, cfg);
  REQUIRE(snaps[1].conv_w == again[1].conv_w);
  REQUIRE(snaps[1].loss_v == again[1].loss_v);

  std::vector<LabeledApp> one_class{{&reps[0], 1}, {&reps[1], 1}};
  REQUIRE_THROWS(droidfp::train_single(one_class, valid_set, table, cfg));
  REQUIRE_THROWS(droidfp::train_single({}, valid_set, table, cfg));
}

TEST_CASE("cnn checkpoint round-trips") {
  auto m = constant_model(0.3);
  m.epoch = 4;
  m.loss_t = 0.25;
  m.loss_v = 0.5;
  const auto path =
      (std::filesystem::temp_directory_path() / "droidfp_cnn_rt.json")
          .string();
  m.to_checkpoint().save(path);
  auto back = droidfp::CnnModel<float>::from_checkpoint(
      droidfp::Checkpoint::load(path));
  REQUIRE(back.input_dim == m.input_dim);
  REQUIRE(back.epoch == 4);
  REQUIRE(back.loss_v == 0.5);
  REQUIRE(back.conv_w == m.conv_w);
  REQUIRE(back.fc3_b == m.fc3_b);
  REQUIRE(back.bn.running_var == m.bn.running_var);
  std::filesystem::remove(path);
}
