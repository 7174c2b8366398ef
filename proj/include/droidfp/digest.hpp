#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "droidfp/checkpoint.hpp"
#include "droidfp/featurize.hpp"
#include "droidfp/nn.hpp"
#include "droidfp/rng.hpp"

namespace droidfp {

inline constexpr std::size_t kDigestDim = 64;

// Deep auto-encoder: |V| -> 512 -> 256 -> 128 -> 64 and mirrored decoder,
// Tanh everywhere. Inputs are unit-norm hash vectors so the Tanh output
// range covers the targets.
template <typename T>
struct AutoEncoder {
  std::size_t input_dim = 0;
  // weights/biases per layer, encoder then decoder
  std::vector<std::vector<T>> w, b;
  std::vector<std::size_t> widths;  // layer output widths

  // training metadata
  std::size_t epochs_trained = 0;
  double final_loss = 0.0;

  void init(std::size_t in_dim, Rng& rng) {
    input_dim = in_dim;
    widths = {512, 256, 128, kDigestDim, 128, 256, 512, in_dim};
    w.clear();
    b.clear();
    std::size_t prev = in_dim;
    for (std::size_t width : widths) {
      w.emplace_back(width * prev);
      b.emplace_back(width, T(0));
      nn::init_uniform(w.back(), prev, rng);
      prev = width;
    }
  }

  std::size_t n_layers() const { return widths.size(); }

  std::vector<std::vector<T>*> params() {
    std::vector<std::vector<T>*> p;
    for (std::size_t i = 0; i < w.size(); ++i) {
      p.push_back(&w[i]);
      p.push_back(&b[i]);
    }
    return p;
  }

  struct Cache {
    std::size_t n = 0;
    std::vector<std::vector<T>> pre;   // pre-activation per layer
    std::vector<std::vector<T>> act;   // tanh output per layer
  };

  // x is [N][input_dim]; returns the reconstruction [N][input_dim].
  const std::vector<T>& forward(const std::vector<T>& x, std::size_t n,
                                Cache& cache) const {
    cache.n = n;
    cache.pre.resize(n_layers());
    cache.act.resize(n_layers());
    const std::vector<T>* cur = &x;
    std::size_t prev = input_dim;
    for (std::size_t i = 0; i < n_layers(); ++i) {
      nn::linear_forward(*cur, n, prev, w[i], b[i], widths[i], cache.pre[i]);
      nn::tanh_forward(cache.pre[i], cache.act[i]);
      cur = &cache.act[i];
      prev = widths[i];
    }
    return cache.act.back();
  }

  // grad_recon is dLoss/d(reconstruction); returns grads in params() order.
  std::vector<std::vector<T>> backward(const std::vector<T>& x,
                                       const Cache& cache,
                                       const std::vector<T>& grad_recon) const {
    std::vector<std::vector<T>> grads(2 * n_layers());
    std::vector<T> g = grad_recon, g_pre, g_in;
    for (std::size_t i = n_layers(); i-- > 0;) {
      nn::tanh_backward(g, cache.act[i], g_pre);
      const std::vector<T>& input = i == 0 ? x : cache.act[i - 1];
      const std::size_t in_dim = i == 0 ? input_dim : widths[i - 1];
      nn::linear_backward(g_pre, input, cache.n, in_dim, w[i], widths[i],
                          g_in, grads[2 * i], grads[2 * i + 1]);
      g = std::move(g_in);
    }
    return grads;
  }

  // Encoder half only: [N][input_dim] -> [N][64], components in (-1, 1).
  std::vector<T> encode(const std::vector<T>& x, std::size_t n) const {
    std::vector<T> cur = x, next;
    std::size_t prev = input_dim;
    for (std::size_t i = 0; i < 4; ++i) {
      nn::linear_forward(cur, n, prev, w[i], b[i], widths[i], next);
      nn::tanh_forward(next, cur);
      prev = widths[i];
    }
    return cur;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.meta["kind"] = "autoencoder";
    c.meta["input_dim"] = input_dim;
    c.meta["digest_dim"] = kDigestDim;
    c.meta["epochs_trained"] = epochs_trained;
    c.meta["final_loss"] = final_loss;
    std::size_t prev = input_dim;
    for (std::size_t i = 0; i < n_layers(); ++i) {
      c.put("w" + std::to_string(i), {widths[i], prev}, w[i]);
      c.put("b" + std::to_string(i), {widths[i]}, b[i]);
      prev = widths[i];
    }
    return c;
  }

  static AutoEncoder from_checkpoint(const Checkpoint& c) {
    AutoEncoder ae;
    ae.input_dim = c.meta.at("input_dim").get<std::size_t>();
    ae.epochs_trained = c.meta.at("epochs_trained").get<std::size_t>();
    ae.final_loss = c.meta.at("final_loss").get<double>();
    ae.widths = {512, 256, 128, kDigestDim, 128, 256, 512, ae.input_dim};
    for (std::size_t i = 0; i < ae.widths.size(); ++i) {
      ae.w.push_back(c.get<T>("w" + std::to_string(i)));
      ae.b.push_back(c.get<T>("b" + std::to_string(i)));
    }
    return ae;
  }
};

struct AutoEncoderTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 3e-4;
  std::uint64_t seed = 0;
};

struct AutoEncoderTrainResult {
  AutoEncoder<float> model;
  std::vector<double> epoch_loss;  // mean squared reconstruction error
};

// Unsupervised reconstruction training on hash vectors (all labels mixed).
inline AutoEncoderTrainResult train_autoencoder(
    const std::vector<HashVector>& vectors,
    const AutoEncoderTrainConfig& cfg) {
  if (vectors.size() < 2)
    throw std::invalid_argument("train_autoencoder: need at least 2 vectors");
  const std::size_t dim = vectors.front().values.size();
  for (const auto& v : vectors)
    if (v.values.size() != dim)
      throw std::invalid_argument(
          "train_autoencoder: inconsistent vector lengths");

  Rng root(cfg.seed ^ 0xae5eedULL);
  AutoEncoderTrainResult result;
  {
    Rng init_rng = root.split(1);
    result.model.init(dim, init_rng);
  }
  auto& model = result.model;
  nn::AdamState<float> adam;
  adam.lr = static_cast<float>(cfg.lr);
  adam.init(model.params());

  std::vector<std::size_t> order(vectors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  typename AutoEncoder<float>::Cache cache;
  std::vector<float> x;
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    Rng erng = root.split(100 + ep);
    erng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      x.assign(n * dim, 0.0f);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j)
          x[i * dim + j] =
              static_cast<float>(vectors[order[start + i]].values[j]);
      const auto& recon = model.forward(x, n, cache);
      std::vector<float> grad(recon.size());
      for (std::size_t i = 0; i < recon.size(); ++i) {
        const float d = recon[i] - x[i];
        grad[i] = 2.0f * d / static_cast<float>(n);
        loss_sum += static_cast<double>(d) * d;
      }
      seen += n;
      auto grads = model.backward(x, cache, grad);
      std::vector<const std::vector<float>*> gptrs;
      for (auto& g : grads) gptrs.push_back(&g);
      adam.apply(model.params(), gptrs);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  model.epochs_trained = cfg.epochs;
  model.final_loss = result.epoch_loss.empty() ? 0.0
                                               : result.epoch_loss.back();
  return result;
}

// Digest of one hash vector.
inline std::vector<double> encode(const HashVector& hv,
                                  const AutoEncoder<float>& ae) {
  std::vector<float> x(hv.values.begin(), hv.values.end());
  auto z = ae.encode(x, 1);
  return std::vector<double>(z.begin(), z.end());
}

}  // namespace droidfp
