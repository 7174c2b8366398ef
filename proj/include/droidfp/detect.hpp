#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "droidfp/checkpoint.hpp"
#include "droidfp/fragment.hpp"
#include "droidfp/inst2vec.hpp"
#include "droidfp/nn.hpp"
#include "droidfp/rng.hpp"

namespace droidfp {

// ---------------------------------------------------------------------------
// Single CNN classifier:
//   conv(d -> 128, width 5, stride 1) -> batchnorm -> global max pool
//   -> 128 -> 512 -> ReLU -> 256 -> ReLU -> 1 -> sigmoid
// ---------------------------------------------------------------------------

template <typename T>
struct CnnModel {
  static constexpr std::size_t kFilters = 128;
  static constexpr std::size_t kKernel = 5;
  static constexpr std::size_t kFc1 = 512;
  static constexpr std::size_t kFc2 = 256;

  std::size_t input_dim = 0;  // embedding dimension
  std::vector<T> conv_w, conv_b;
  nn::BatchNorm1d<T> bn{kFilters};
  std::vector<T> fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b;

  // training metadata
  std::size_t epoch = 0;
  double loss_t = 0.0, loss_v = 0.0;

  void init(std::size_t dim, Rng& rng) {
    input_dim = dim;
    conv_w.resize(kFilters * dim * kKernel);
    conv_b.assign(kFilters, T(0));
    fc1_w.resize(kFc1 * kFilters);
    fc1_b.assign(kFc1, T(0));
    fc2_w.resize(kFc2 * kFc1);
    fc2_b.assign(kFc2, T(0));
    fc3_w.resize(1 * kFc2);
    fc3_b.assign(1, T(0));
    nn::init_uniform(conv_w, dim * kKernel, rng);
    nn::init_uniform(fc1_w, kFilters, rng);
    nn::init_uniform(fc2_w, kFc1, rng);
    nn::init_uniform(fc3_w, kFc2, rng);
    bn = nn::BatchNorm1d<T>(kFilters);
  }

  std::vector<std::vector<T>*> params() {
    return {&conv_w, &conv_b, &bn.gamma, &bn.beta, &fc1_w,
            &fc1_b,  &fc2_w,  &fc2_b,    &fc3_w,   &fc3_b};
  }

  struct Cache {
    std::size_t n = 0, len = 0, lo = 0;
    const std::vector<T>* x = nullptr;
    std::vector<T> conv_out, bn_out, pool_out;
    nn::BatchNormCache<T> bn_cache;
    std::vector<std::size_t> argmax;
    std::vector<T> fc1_out, relu1_out, fc2_out, relu2_out, logit, prob;
  };

  // x is [N][input_dim][L]; returns maliciousness probabilities.
  std::vector<T> forward(const std::vector<T>& x, std::size_t n,
                         std::size_t len, bool training, Cache& cache) {
    cache.n = n;
    cache.len = len;
    cache.x = &x;
    cache.lo = nn::conv1d_out_len(len, kKernel, 1);
    nn::conv1d_forward(x, n, input_dim, len, conv_w, conv_b, kFilters,
                       kKernel, 1, cache.conv_out);
    if (training)
      bn.forward_train(cache.conv_out, n, cache.lo, cache.bn_out,
                       cache.bn_cache);
    else
      bn.forward_eval(cache.conv_out, n, cache.lo, cache.bn_out);
    nn::global_max_pool_forward(cache.bn_out, n, kFilters, cache.lo,
                                cache.pool_out, cache.argmax);
    nn::linear_forward(cache.pool_out, n, kFilters, fc1_w, fc1_b, kFc1,
                       cache.fc1_out);
    nn::relu_forward(cache.fc1_out, cache.relu1_out);
    nn::linear_forward(cache.relu1_out, n, kFc1, fc2_w, fc2_b, kFc2,
                       cache.fc2_out);
    nn::relu_forward(cache.fc2_out, cache.relu2_out);
    nn::linear_forward(cache.relu2_out, n, kFc2, fc3_w, fc3_b, 1,
                       cache.logit);
    nn::sigmoid_forward(cache.logit, cache.prob);
    return cache.prob;
  }

  // grad_prob is dLoss/dprob per sample; returns gradients in params() order.
  std::vector<std::vector<T>> backward(const Cache& cache,
                                       const std::vector<T>& grad_prob) {
    std::vector<T> g_logit, g_relu2, g_fc2in, g_relu1, g_fc1in, g_pool,
        g_bnout, g_convout, g_x;
    std::vector<std::vector<T>> grads(10);
    nn::sigmoid_backward(grad_prob, cache.prob, g_logit);
    nn::linear_backward(g_logit, cache.relu2_out, cache.n, kFc2, fc3_w, 1,
                        g_relu2, grads[8], grads[9]);
    nn::relu_backward(g_relu2, cache.fc2_out, g_fc2in);
    nn::linear_backward(g_fc2in, cache.relu1_out, cache.n, kFc1, fc2_w, kFc2,
                        g_relu1, grads[6], grads[7]);
    nn::relu_backward(g_relu1, cache.fc1_out, g_fc1in);
    nn::linear_backward(g_fc1in, cache.pool_out, cache.n, kFilters, fc1_w,
                        kFc1, g_pool, grads[4], grads[5]);
    nn::global_max_pool_backward(g_pool, cache.argmax, cache.n, kFilters,
                                 cache.lo, g_bnout);
    bn.backward(g_bnout, cache.bn_cache, g_convout, grads[2], grads[3]);
    nn::conv1d_backward(g_convout, *cache.x, cache.n, input_dim, cache.len,
                        conv_w, kFilters, kKernel, 1, g_x, grads[0],
                        grads[1]);
    return grads;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.meta["kind"] = "cnn";
    c.meta["input_dim"] = input_dim;
    c.meta["epoch"] = epoch;
    c.meta["loss_t"] = loss_t;
    c.meta["loss_v"] = loss_v;
    c.put("conv_w", {kFilters, input_dim, kKernel}, conv_w);
    c.put("conv_b", {kFilters}, conv_b);
    c.put("bn_gamma", {kFilters}, bn.gamma);
    c.put("bn_beta", {kFilters}, bn.beta);
    c.put("bn_running_mean", {kFilters}, bn.running_mean);
    c.put("bn_running_var", {kFilters}, bn.running_var);
    c.put("fc1_w", {kFc1, kFilters}, fc1_w);
    c.put("fc1_b", {kFc1}, fc1_b);
    c.put("fc2_w", {kFc2, kFc1}, fc2_w);
    c.put("fc2_b", {kFc2}, fc2_b);
    c.put("fc3_w", {1, kFc2}, fc3_w);
    c.put("fc3_b", {1}, fc3_b);
    return c;
  }

  static CnnModel from_checkpoint(const Checkpoint& c) {
    CnnModel m;
    m.input_dim = c.meta.at("input_dim").get<std::size_t>();
    m.epoch = c.meta.at("epoch").get<std::size_t>();
    m.loss_t = c.meta.at("loss_t").get<double>();
    m.loss_v = c.meta.at("loss_v").get<double>();
    m.conv_w = c.get<T>("conv_w");
    m.conv_b = c.get<T>("conv_b");
    m.bn = nn::BatchNorm1d<T>(kFilters);
    m.bn.gamma = c.get<T>("bn_gamma");
    m.bn.beta = c.get<T>("bn_beta");
    m.bn.running_mean = c.get<T>("bn_running_mean");
    m.bn.running_var = c.get<T>("bn_running_var");
    m.fc1_w = c.get<T>("fc1_w");
    m.fc1_b = c.get<T>("fc1_b");
    m.fc2_w = c.get<T>("fc2_w");
    m.fc2_b = c.get<T>("fc2_b");
    m.fc3_w = c.get<T>("fc3_w");
    m.fc3_b = c.get<T>("fc3_b");
    return m;
  }
};

// ---------------------------------------------------------------------------
// Training with per-epoch snapshots and losses.
// ---------------------------------------------------------------------------

struct DetectConfig {
  std::size_t fragment_len = 256;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 3e-4;
  std::size_t ensemble_size = 6;       // phi
  std::size_t fragments_per_app = 6;   // inference fragments per member
  double target_error = 0.01;
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0 = hardware concurrency
};

struct LabeledApp {
  const AppRepresentation* rep;
  int label;  // 1 = malware
};

using Snapshot = CnnModel<float>;

namespace detail {

// Mean log loss over apps, one deterministic fragment each, eval mode.
inline double dataset_loss(CnnModel<float>& model,
                           const std::vector<LabeledApp>& apps,
                           const EmbeddingTable& table, std::size_t frag_len,
                           Rng rng) {
  double acc = 0.0;
  typename CnnModel<float>::Cache cache;
  const std::size_t chunk = 32;
  std::vector<float> x;
  for (std::size_t start = 0; start < apps.size(); start += chunk) {
    const std::size_t n = std::min(chunk, apps.size() - start);
    x.assign(n * model.input_dim * frag_len, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      Rng frng = rng.split(start + i + 1);
      Fragment f = make_fragment(*apps[start + i].rep, frag_len, frng);
      auto xi = embed_fragment<float>(f, table);
      std::copy(xi.begin(), xi.end(),
                x.begin() + static_cast<std::ptrdiff_t>(
                                i * model.input_dim * frag_len));
    }
    auto probs = model.forward(x, n, frag_len, false, cache);
    for (std::size_t i = 0; i < n; ++i)
      acc += nn::log_loss(apps[start + i].label, probs[i]);
  }
  return acc / static_cast<double>(apps.size());
}

}  // namespace detail

// Trains one CNN for cfg.epochs epochs, drawing fresh fragments for every
// minibatch, and returns one snapshot per epoch with Loss_T / Loss_V.
inline std::vector<Snapshot> train_single(
    const std::vector<LabeledApp>& train_set,
    const std::vector<LabeledApp>& valid_set, const EmbeddingTable& table,
    const DetectConfig& cfg) {
  if (train_set.empty() || valid_set.empty())
    throw std::invalid_argument("train_single: empty train or valid set");
  {
    bool has_pos = false, has_neg = false;
    for (const auto& a : train_set) (a.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
      throw std::invalid_argument(
          "train_single: training set must contain both classes");
  }

  Rng root(cfg.seed ^ 0xde7ec7ULL);
  CnnModel<float> model;
  {
    Rng init_rng = root.split(1);
    model.init(table.dim, init_rng);
  }
  nn::AdamState<float> adam;
  adam.lr = static_cast<float>(cfg.lr);
  adam.init(model.params());

  std::vector<Snapshot> snapshots;
  snapshots.reserve(cfg.epochs);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  typename CnnModel<float>::Cache cache;
  std::vector<float> x;
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    Rng erng = root.split(100 + ep);
    erng.shuffle(order);
    Rng frng = erng.split(7);
    for (std::size_t start = 0; start < order.size();) {
      std::size_t n = std::min(cfg.batch_size, order.size() - start);
      // batchnorm needs >= 2 samples; fold a trailing singleton in
      if (order.size() - start - n == 1) ++n;
      if (n < 2) break;  // cannot form a final batch from one leftover app
      x.assign(n * model.input_dim * cfg.fragment_len, 0.0f);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& app = train_set[order[start + i]];
        labels[i] = app.label;
        Fragment f = make_fragment(*app.rep, cfg.fragment_len, frng);
        auto xi = embed_fragment<float>(f, table);
        std::copy(xi.begin(), xi.end(),
                  x.begin() + static_cast<std::ptrdiff_t>(
                                  i * model.input_dim * cfg.fragment_len));
      }
      auto probs = model.forward(x, n, cfg.fragment_len, true, cache);
      std::vector<float> grad_prob(n);
      for (std::size_t i = 0; i < n; ++i)
        grad_prob[i] = nn::log_loss_grad(labels[i], probs[i]) /
                       static_cast<float>(n);
      auto grads = model.backward(cache, grad_prob);
      std::vector<const std::vector<float>*> gptrs;
      for (auto& g : grads) gptrs.push_back(&g);
      adam.apply(model.params(), gptrs);
      start += n;
    }
    model.epoch = ep + 1;
    model.loss_t = detail::dataset_loss(model, train_set, table,
                                        cfg.fragment_len, erng.split(11));
    model.loss_v = detail::dataset_loss(model, valid_set, table,
                                        cfg.fragment_len, erng.split(13));
    snapshots.push_back(model);
  }
  return snapshots;
}

// ---------------------------------------------------------------------------
// Ensemble: top-phi snapshots by validation loss.
// ---------------------------------------------------------------------------

struct Ensemble {
  std::vector<CnnModel<float>> members;
};

inline Ensemble select_ensemble(const std::vector<Snapshot>& snapshots,
                                std::size_t phi) {
  if (phi < 1) throw std::invalid_argument("select_ensemble: phi must be >= 1");
  if (snapshots.size() < phi)
    throw std::invalid_argument("select_ensemble: fewer snapshots than phi");
  std::vector<std::size_t> idx(snapshots.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = snapshots[a];
    const auto& sb = snapshots[b];
    if (sa.loss_v != sb.loss_v) return sa.loss_v < sb.loss_v;
    if (sa.loss_t != sb.loss_t) return sa.loss_t < sb.loss_t;
    return sa.epoch < sb.epoch;
  });
  Ensemble e;
  for (std::size_t i = 0; i < phi; ++i) e.members.push_back(snapshots[idx[i]]);
  return e;
}

// ---------------------------------------------------------------------------
// Scoring: per-member mean over per-app fragments, then the ensemble mean.
// ---------------------------------------------------------------------------

struct AppScore {
  double y_hat = 0.0;                  // ensemble mean
  std::vector<double> member_means;    // one per member
};

inline AppScore score(const AppRepresentation& app, Ensemble& ensemble,
                      const EmbeddingTable& table, std::size_t frag_len,
                      std::size_t per_app, Rng rng) {
  if (ensemble.members.empty())
    throw std::invalid_argument("score: empty ensemble");
  if (app.sequences.empty())
    throw std::invalid_argument("score: degenerate app (no sequences)");
  if (per_app < 1) throw std::invalid_argument("score: per_app must be >= 1");

  const std::size_t dim = ensemble.members.front().input_dim;
  std::vector<float> x(per_app * dim * frag_len, 0.0f);
  for (std::size_t i = 0; i < per_app; ++i) {
    Fragment f = make_fragment(app, frag_len, rng);
    auto xi = embed_fragment<float>(f, table);
    std::copy(xi.begin(), xi.end(),
              x.begin() + static_cast<std::ptrdiff_t>(i * dim * frag_len));
  }
  AppScore s;
  typename CnnModel<float>::Cache cache;
  for (auto& member : ensemble.members) {
    auto probs = member.forward(x, per_app, frag_len, false, cache);
    double mean = 0.0;
    for (auto p : probs) mean += p;
    mean /= static_cast<double>(per_app);
    s.member_means.push_back(mean);
    s.y_hat += mean;
  }
  s.y_hat /= static_cast<double>(ensemble.members.size());
  return s;
}

// Scores a batch of apps; deterministic per-app rng streams, optionally
// parallel across apps (read-only models).
inline std::vector<AppScore> score_batch(
    const std::vector<const AppRepresentation*>& apps, Ensemble& ensemble,
    const EmbeddingTable& table, std::size_t frag_len, std::size_t per_app,
    Rng rng, std::size_t workers = 0) {
  std::vector<AppScore> out(apps.size());
  if (workers == 0) workers = std::thread::hardware_concurrency();
  workers = std::max<std::size_t>(1, std::min(workers, apps.size()));
  auto run = [&](std::size_t w) {
    // each worker keeps its own ensemble copy: forward caches mutate state
    Ensemble local = ensemble;
    for (std::size_t i = w; i < apps.size(); i += workers)
      out[i] = score(*apps[i], local, table, frag_len, per_app,
                     rng.split(i + 1));
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Thresholds and decisions.
// ---------------------------------------------------------------------------

struct DecisionThresholds {
  double zeta = 0.5;
  double eta = 0.5;
  double target_error = 0.01;
  bool eta_satisfiable = true;  // false when no grid point met the error bound
};

enum class Verdict { Malware, Benign, Uncertain };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Malware: return "malware";
    case Verdict::Benign: return "benign";
    default: return "uncertain";
  }
}

enum class DecisionStrategy { General, Confidence };

struct Decision {
  Verdict verdict = Verdict::Uncertain;
  double prob_mal = 0.0;
  double prob_ben = 0.0;
};

inline Decision decide(double y_hat, const DecisionThresholds& th,
                       DecisionStrategy strategy) {
  Decision d;
  d.prob_mal = y_hat;
  d.prob_ben = 1.0 - y_hat;
  if (strategy == DecisionStrategy::General) {
    d.verdict = y_hat > th.zeta ? Verdict::Malware : Verdict::Benign;
    return d;
  }
  if (d.prob_mal >= th.eta && d.prob_mal > d.prob_ben)
    d.verdict = Verdict::Malware;
  else if (d.prob_ben >= th.eta && d.prob_ben > d.prob_mal)
    d.verdict = Verdict::Benign;
  else
    d.verdict = Verdict::Uncertain;
  return d;
}

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double coverage = 1.0;
  bool degenerate = false;  // no positive predictions or no positives present
};

// Uncertain decisions count only toward coverage; P/R/F1 are over the
// decided subset.
inline MetricsReport metrics(const std::vector<Decision>& decisions,
                             const std::vector<int>& labels) {
  if (decisions.size() != labels.size())
    throw std::invalid_argument("metrics: size mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, decided = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i].verdict == Verdict::Uncertain) continue;
    ++decided;
    const bool pred_mal = decisions[i].verdict == Verdict::Malware;
    if (pred_mal && labels[i]) ++tp;
    if (pred_mal && !labels[i]) ++fp;
    if (!pred_mal && labels[i]) ++fn;
  }
  MetricsReport r;
  r.coverage = decisions.empty()
                   ? 1.0
                   : static_cast<double>(decided) /
                         static_cast<double>(decisions.size());
  if (tp + fp == 0 || tp + fn == 0) r.degenerate = true;
  r.precision = tp + fp == 0 ? 0.0
                             : static_cast<double>(tp) /
                                   static_cast<double>(tp + fp);
  r.recall = tp + fn == 0
                 ? 0.0
                 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = r.precision + r.recall == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

namespace detail {

inline double f1_at_threshold(const std::vector<double>& scores,
                              const std::vector<int>& labels, double zeta) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > zeta;
    if (pred && labels[i]) ++tp;
    if (pred && !labels[i]) ++fp;
    if (!pred && labels[i]) ++fn;
  }
  if (tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * p * r / (p + r);
}

}  // namespace detail

// Grid over distinct-score midpoints plus {0, 1}; argmax F1, ties toward the
// smaller threshold.
inline double fit_general_threshold(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("fit_general_threshold: bad input");
  {
    bool pos = false, neg = false;
    for (int l : labels) (l ? pos : neg) = true;
    if (!pos || !neg)
      throw std::invalid_argument(
          "fit_general_threshold: validation set must contain both classes");
  }
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates = {0.0, 1.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  std::sort(candidates.begin(), candidates.end());

  double best_zeta = candidates.front();
  double best_f1 = -1.0;
  for (double z : candidates) {
    const double f1 = detail::f1_at_threshold(scores, labels, z);
    if (f1 > best_f1) {  // strict: ties keep the smaller candidate
      best_f1 = f1;
      best_zeta = z;
    }
  }
  return best_zeta;
}

struct ConfidenceFit {
  double eta = 1.0;
  bool satisfiable = false;
};

// Grid on [0.5, 1] at 1e-3; keep candidates whose confident subset has
// FPR and FNR below target_error, maximize F1 there, ties toward larger
// coverage (i.e. the smaller eta).
inline ConfidenceFit fit_confidence_threshold(
    const std::vector<double>& scores, const std::vector<int>& labels,
    double target_error) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("fit_confidence_threshold: bad input");
  ConfidenceFit fit;
  double best_f1 = -1.0;
  std::size_t best_decided = 0;
  for (int step = 0; step <= 500; ++step) {
    const double eta = 0.5 + static_cast<double>(step) * 1e-3;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0, decided = 0;
    DecisionThresholds th;
    th.eta = eta;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const Decision d = decide(scores[i], th, DecisionStrategy::Confidence);
      if (d.verdict == Verdict::Uncertain) continue;
      ++decided;
      const bool pred = d.verdict == Verdict::Malware;
      if (pred && labels[i]) ++tp;
      if (pred && !labels[i]) ++fp;
      if (!pred && labels[i]) ++fn;
      if (!pred && !labels[i]) ++tn;
    }
    const double fpr =
        fp + tn == 0 ? 0.0
                     : static_cast<double>(fp) / static_cast<double>(fp + tn);
    const double fnr =
        fn + tp == 0 ? 0.0
                     : static_cast<double>(fn) / static_cast<double>(fn + tp);
    if (!(fpr < target_error && fnr < target_error)) continue;
    double f1 = 0.0;
    if (tp > 0) {
      const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
      f1 = 2.0 * p * r / (p + r);
    }
    if (f1 > best_f1 || (f1 == best_f1 && decided > best_decided)) {
      best_f1 = f1;
      best_decided = decided;
      fit.eta = eta;
      fit.satisfiable = true;
    }
  }
  if (!fit.satisfiable) fit.eta = 1.0;
  return fit;
}

}  // namespace droidfp
