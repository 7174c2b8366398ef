#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "droidfp/corpus.hpp"
#include "droidfp/detect.hpp"

namespace droidfp {

// One app inside the adaptation loop. `record.label` is the label used for
// training (the pseudo-label once an app is absorbed from a stream); `truth`
// is the generator's ground truth, used for reporting only.
struct AdaptApp {
  AppRecord record;
  AppRepresentation rep;
  int truth = 0;
};

inline std::vector<AdaptApp> represent_records(
    const std::vector<AppRecord>& records, const Vocabulary& vocab) {
  std::vector<AdaptApp> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    AdaptApp a;
    a.record = r;
    a.rep = tokenize(parse(r.source_text), vocab);
    a.truth = r.label == Label::Malware ? 1 : 0;
    out.push_back(std::move(a));
  }
  return out;
}

struct AdaptationEpochReport {
  int epoch = 0;
  std::size_t stream_size = 0;
  std::size_t build_size = 0;      // after this epoch's rebuild
  std::size_t exten_size = 0;      // confident decisions absorbed this epoch
  std::size_t uncertain_size = 0;  // carried over to the next epoch
  double f1_no_update = 0.0;   // frozen first ensemble, full stream
  double f1_general = 0.0;     // lagged current ensemble, full stream
  double f1_confidence = 0.0;  // lagged ensemble, confident subset only
  double f1_update = 0.0;      // rebuilt ensemble, archive minus build set
  double coverage = 0.0;       // confident fraction of the stream
  double zeta = 0.5;           // thresholds after the rebuild
  double eta = 1.0;
  bool eta_satisfiable = false;
  double pseudo_label_error = 0.0;  // wrong pseudo-labels / |X_exten|
};

struct AdaptationConfig {
  DetectConfig detect;
  double train_ratio = 0.8;  // train share of the build set at each rebuild
  std::uint64_t seed = 0;
};

namespace detail {

// Stratified index split by label; at least one app of each present class
// lands on each side.
inline void stratified_split(const std::vector<AdaptApp>& apps,
                             double train_ratio, Rng rng,
                             std::vector<std::size_t>& train_idx,
                             std::vector<std::size_t>& valid_idx) {
  train_idx.clear();
  valid_idx.clear();
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < apps.size(); ++i)
    (apps[i].record.label == Label::Malware ? pos : neg).push_back(i);
  auto take = [&](std::vector<std::size_t>& group) {
    if (group.empty()) return;
    rng.shuffle(group);
    auto k = static_cast<std::size_t>(
        std::llround(train_ratio * static_cast<double>(group.size())));
    k = std::clamp<std::size_t>(k, 1, group.size() - 1);
    train_idx.insert(train_idx.end(), group.begin(),
                     group.begin() + static_cast<std::ptrdiff_t>(k));
    valid_idx.insert(valid_idx.end(),
                     group.begin() + static_cast<std::ptrdiff_t>(k),
                     group.end());
  };
  take(pos);
  take(neg);
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(valid_idx.begin(), valid_idx.end());
}

}  // namespace detail

// Self-training loop: decide a stream with the confidence strategy, absorb
// confident verdicts as pseudo-labeled build data, retrain from scratch on
// the union, and re-score the unabsorbed archive with the new ensemble.
class AdaptationRun {
 public:
  AdaptationRun(std::vector<AdaptApp> base_build, const EmbeddingTable& table,
                const AdaptationConfig& cfg)
      : table_(table), cfg_(cfg), build_(std::move(base_build)) {
    if (build_.size() < 4)
      throw std::invalid_argument("AdaptationRun: build set too small");
    for (const auto& a : build_) build_ids_.insert(a.record.id);
    rebuild(0);
    frozen_ensemble_ = ensemble_;
    frozen_thresholds_ = thresholds_;
  }

  const Ensemble& ensemble() const { return ensemble_; }
  const DecisionThresholds& thresholds() const { return thresholds_; }
  std::size_t carry_over_size() const { return carry_over_.size(); }
  std::size_t build_size() const { return build_.size(); }

  // Runs one adaptation epoch over `incoming` plus the carry-over pool.
  AdaptationEpochReport step(const std::vector<AdaptApp>& incoming,
                             int epoch) {
    std::vector<AdaptApp> stream = std::move(carry_over_);
    carry_over_.clear();
    for (const auto& a : incoming) {
      if (build_ids_.count(a.record.id)) continue;  // no-leak rule
      stream.push_back(a);
    }
    if (stream.empty())
      throw std::invalid_argument("AdaptationRun::step: empty stream");

    AdaptationEpochReport rep;
    rep.epoch = epoch;
    rep.stream_size = stream.size();

    std::vector<const AppRepresentation*> reps;
    std::vector<int> truth;
    for (const auto& a : stream) {
      reps.push_back(&a.rep);
      truth.push_back(a.truth);
    }
    Rng score_rng =
        Rng(cfg_.seed ^ 0xada9700ULL).split(1000 + static_cast<std::uint64_t>(epoch));

    // frozen baseline and lagged-ensemble metrics on the full stream
    {
      auto scores = score_batch(reps, frozen_ensemble_, table_,
                                cfg_.detect.fragment_len,
                                cfg_.detect.fragments_per_app, score_rng,
                                cfg_.detect.workers);
      std::vector<Decision> d;
      for (const auto& s : scores)
        d.push_back(decide(s.y_hat, frozen_thresholds_,
                           DecisionStrategy::General));
      rep.f1_no_update = metrics(d, truth).f1;
    }
    std::vector<AppScore> scores =
        score_batch(reps, ensemble_, table_, cfg_.detect.fragment_len,
                    cfg_.detect.fragments_per_app, score_rng,
                    cfg_.detect.workers);
    {
      std::vector<Decision> d;
      for (const auto& s : scores)
        d.push_back(decide(s.y_hat, thresholds_, DecisionStrategy::General));
      rep.f1_general = metrics(d, truth).f1;
    }

    // confidence pass: absorb confident verdicts, carry over the rest
    std::vector<Decision> conf;
    for (const auto& s : scores)
      conf.push_back(decide(s.y_hat, thresholds_,
                            DecisionStrategy::Confidence));
    const MetricsReport conf_metrics = metrics(conf, truth);
    rep.f1_confidence = conf_metrics.f1;
    rep.coverage = conf_metrics.coverage;

    std::size_t wrong_pseudo = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
      if (conf[i].verdict == Verdict::Uncertain) {
        carry_over_.push_back(stream[i]);
        archive_[stream[i].record.id] = stream[i];
        continue;
      }
      AdaptApp absorbed = stream[i];
      const Label pseudo = conf[i].verdict == Verdict::Malware
                               ? Label::Malware
                               : Label::Benign;
      if ((pseudo == Label::Malware ? 1 : 0) != absorbed.truth)
        ++wrong_pseudo;
      absorbed.record.label = pseudo;
      if (build_ids_.insert(absorbed.record.id).second)
        build_.push_back(std::move(absorbed));
      ++rep.exten_size;
      archive_.erase(stream[i].record.id);
    }
    rep.uncertain_size = carry_over_.size();
    rep.pseudo_label_error =
        rep.exten_size == 0 ? 0.0
                            : static_cast<double>(wrong_pseudo) /
                                  static_cast<double>(rep.exten_size);

    // batch retrain on the unioned build set, refit thresholds
    rebuild(epoch);
    rep.build_size = build_.size();
    rep.zeta = thresholds_.zeta;
    rep.eta = thresholds_.eta;
    rep.eta_satisfiable = thresholds_.eta_satisfiable;

    // revisit: rescore everything streamed but never absorbed
    rep.f1_update = revisit(epoch);
    return rep;
  }

  // General-strategy F1 of the current ensemble over the archive (streamed
  // apps not absorbed into the build set). 0 when the archive is empty.
  double revisit(int epoch) {
    if (archive_.empty()) return 0.0;
    std::vector<const AppRepresentation*> reps;
    std::vector<int> truth;
    for (const auto& [id, a] : archive_) {
      (void)id;
      reps.push_back(&a.rep);
      truth.push_back(a.truth);
    }
    Rng rng = Rng(cfg_.seed ^ 0xada9700ULL)
                  .split(2000 + static_cast<std::uint64_t>(epoch));
    auto scores = score_batch(reps, ensemble_, table_,
                              cfg_.detect.fragment_len,
                              cfg_.detect.fragments_per_app, rng,
                              cfg_.detect.workers);
    std::vector<Decision> d;
    for (const auto& s : scores)
      d.push_back(decide(s.y_hat, thresholds_, DecisionStrategy::General));
    return metrics(d, truth).f1;
  }

 private:
  void rebuild(int epoch) {
    std::vector<std::size_t> train_idx, valid_idx;
    Rng split_rng = Rng(cfg_.seed ^ 0xada9700ULL)
                        .split(3000 + static_cast<std::uint64_t>(epoch));
    detail::stratified_split(build_, cfg_.train_ratio, split_rng, train_idx,
                             valid_idx);
    std::vector<LabeledApp> train_set, valid_set;
    for (std::size_t i : train_idx)
      train_set.push_back(
          {&build_[i].rep, build_[i].record.label == Label::Malware ? 1 : 0});
    for (std::size_t i : valid_idx)
      valid_set.push_back(
          {&build_[i].rep, build_[i].record.label == Label::Malware ? 1 : 0});

    DetectConfig dc = cfg_.detect;
    dc.seed = Rng(cfg_.seed ^ 0xada9700ULL)
                  .split(4000 + static_cast<std::uint64_t>(epoch))
                  .u64();
    auto snapshots = train_single(train_set, valid_set, table_, dc);
    ensemble_ = select_ensemble(snapshots, dc.ensemble_size);

    std::vector<const AppRepresentation*> vreps;
    std::vector<int> vlabels;
    for (const auto& a : valid_set) {
      vreps.push_back(a.rep);
      vlabels.push_back(a.label);
    }
    Rng vrng = Rng(cfg_.seed ^ 0xada9700ULL)
                   .split(5000 + static_cast<std::uint64_t>(epoch));
    auto vscores = score_batch(vreps, ensemble_, table_, dc.fragment_len,
                               dc.fragments_per_app, vrng, dc.workers);
    std::vector<double> ys;
    for (const auto& s : vscores) ys.push_back(s.y_hat);
    thresholds_.zeta = fit_general_threshold(ys, vlabels);
    const ConfidenceFit fit =
        fit_confidence_threshold(ys, vlabels, dc.target_error);
    thresholds_.eta = fit.eta;
    thresholds_.eta_satisfiable = fit.satisfiable;
    thresholds_.target_error = dc.target_error;
  }

  const EmbeddingTable& table_;
  AdaptationConfig cfg_;

  std::vector<AdaptApp> build_;        // monotone; pseudo-labels inside
  std::set<std::string> build_ids_;
  std::vector<AdaptApp> carry_over_;   // uncertain, re-enter next stream
  std::map<std::string, AdaptApp> archive_;  // streamed, never absorbed

  Ensemble ensemble_;
  DecisionThresholds thresholds_;
  Ensemble frozen_ensemble_;           // first build, never updated
  DecisionThresholds frozen_thresholds_;
};

}  // namespace droidfp
