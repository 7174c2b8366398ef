#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "droidfp/asmparse.hpp"
#include "droidfp/checkpoint.hpp"
#include "droidfp/fragment.hpp"
#include "droidfp/nn.hpp"
#include "droidfp/rng.hpp"

namespace droidfp {

enum class EmbeddingObjective { FullSoftmax, NegativeSampling };

struct EmbeddingTable {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  std::size_t window = 0;
  EmbeddingObjective objective = EmbeddingObjective::FullSoftmax;
  std::vector<float> input_vectors;   // [V][d]; rows 0 and 1 stay zero
  std::vector<float> output_vectors;  // [V][d]

  const float* row(TokenId t) const {
    return input_vectors.data() + static_cast<std::size_t>(t) * dim;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.meta["kind"] = "embedding";
    c.meta["vocab_size"] = vocab_size;
    c.meta["dim"] = dim;
    c.meta["window"] = window;
    c.meta["objective"] = objective == EmbeddingObjective::FullSoftmax
                              ? "full_softmax"
                              : "negative_sampling";
    c.put("input_vectors", {vocab_size, dim}, input_vectors);
    c.put("output_vectors", {vocab_size, dim}, output_vectors);
    return c;
  }

  static EmbeddingTable from_checkpoint(const Checkpoint& c) {
    EmbeddingTable t;
    t.vocab_size = c.meta.at("vocab_size").get<std::size_t>();
    t.dim = c.meta.at("dim").get<std::size_t>();
    t.window = c.meta.at("window").get<std::size_t>();
    t.objective = c.meta.at("objective").get<std::string>() == "full_softmax"
                      ? EmbeddingObjective::FullSoftmax
                      : EmbeddingObjective::NegativeSampling;
    t.input_vectors = c.get<float>("input_vectors");
    t.output_vectors = c.get<float>("output_vectors");
    return t;
  }
};

// (center, context) pairs within a window of radius m; windows never cross
// method boundaries.
inline std::vector<std::pair<TokenId, TokenId>> context_pairs(
    const std::vector<TokenId>& sequence, std::size_t m) {
  std::vector<std::pair<TokenId, TokenId>> out;
  const std::size_t n = sequence.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= m ? i - m : 0;
    const std::size_t hi = std::min(n - 1, i + m);
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != i) out.emplace_back(sequence[i], sequence[j]);
  }
  return out;
}

struct EmbeddingTrainConfig {
  std::size_t dim = 64;
  std::size_t window = 5;
  std::size_t epochs = 5;
  double lr = 0.05;
  std::uint64_t seed = 0;
  // full softmax is exact but only tractable at small vocabularies
  std::size_t full_softmax_max_vocab = 4096;
  std::size_t negative_samples = 5;
  // caps the pair count per epoch (0 = no cap); pairs are subsampled
  // uniformly with the run seed
  std::size_t max_pairs_per_epoch = 200000;
  // force an objective regardless of vocabulary size
  std::optional<EmbeddingObjective> objective;
};

struct EmbeddingTrainResult {
  EmbeddingTable table;
  std::vector<double> epoch_loss;  // mean negative log-likelihood
};

namespace detail {

struct NegativeTable {
  std::vector<TokenId> slots;

  NegativeTable(const std::vector<double>& counts, std::size_t table_size) {
    double total = 0.0;
    std::vector<double> pw(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
      pw[i] = std::pow(counts[i], 0.75);
      total += pw[i];
    }
    slots.reserve(table_size);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const auto k = static_cast<std::size_t>(
          std::llround(pw[i] / total * static_cast<double>(table_size)));
      for (std::size_t s = 0; s < k; ++s)
        slots.push_back(static_cast<TokenId>(i));
    }
    if (slots.empty()) slots.push_back(kFirstAssetToken);
  }

  TokenId draw(Rng& rng) const { return slots[rng.below(slots.size())]; }
};

}  // namespace detail

// Skip-gram training over per-method token sequences.
inline EmbeddingTrainResult train_embeddings(
    const std::vector<std::vector<TokenId>>& sequences,
    std::size_t vocab_size, const EmbeddingTrainConfig& cfg) {
  if (vocab_size < 2)
    throw std::invalid_argument("train_embeddings: vocabulary too small");

  std::vector<std::pair<TokenId, TokenId>> pairs;
  std::vector<double> counts(vocab_size, 0.0);
  for (const auto& seq : sequences) {
    auto p = context_pairs(seq, cfg.window);
    pairs.insert(pairs.end(), p.begin(), p.end());
    for (TokenId t : seq) counts.at(t) += 1.0;
  }
  if (pairs.empty())
    throw std::invalid_argument(
        "train_embeddings: no context pairs (corpus degenerate)");

  const EmbeddingObjective objective =
      cfg.objective ? *cfg.objective
      : vocab_size <= cfg.full_softmax_max_vocab
          ? EmbeddingObjective::FullSoftmax
          : EmbeddingObjective::NegativeSampling;

  EmbeddingTable table;
  table.vocab_size = vocab_size;
  table.dim = cfg.dim;
  table.window = cfg.window;
  table.objective = objective;
  table.input_vectors.assign(vocab_size * cfg.dim, 0.0f);
  table.output_vectors.assign(vocab_size * cfg.dim, 0.0f);

  Rng rng(cfg.seed ^ 0x1257a6e57ULL);
  const float bound = 0.5f / static_cast<float>(cfg.dim);
  for (std::size_t t = kFirstAssetToken; t < vocab_size; ++t)
    for (std::size_t j = 0; j < cfg.dim; ++j)
      table.input_vectors[t * cfg.dim + j] =
          static_cast<float>(rng.real() * 2.0 - 1.0) * bound;

  detail::NegativeTable neg_table(counts, 1 << 16);
  const std::size_t d = cfg.dim;
  const auto lr = static_cast<float>(cfg.lr);

  EmbeddingTrainResult result;
  std::vector<float> logits(vocab_size);
  std::vector<float> grad_center(d);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(pairs);
    const std::size_t use =
        cfg.max_pairs_per_epoch == 0
            ? pairs.size()
            : std::min(pairs.size(), cfg.max_pairs_per_epoch);
    double loss_sum = 0.0;
    for (std::size_t pi = 0; pi < use; ++pi) {
      const auto [center, context] = pairs[pi];
      float* vc = table.input_vectors.data() + center * d;
      std::fill(grad_center.begin(), grad_center.end(), 0.0f);

      if (objective == EmbeddingObjective::FullSoftmax) {
        float mx = -1e30f;
        for (std::size_t w = 0; w < vocab_size; ++w) {
          const float* vo = table.output_vectors.data() + w * d;
          float dot = 0.0f;
          for (std::size_t j = 0; j < d; ++j) dot += vo[j] * vc[j];
          logits[w] = dot;
          mx = std::max(mx, dot);
        }
        float z = 0.0f;
        for (std::size_t w = 0; w < vocab_size; ++w) {
          logits[w] = std::exp(logits[w] - mx);
          z += logits[w];
        }
        loss_sum += -std::log(
            std::max(static_cast<double>(logits[context] / z), 1e-30));
        for (std::size_t w = 0; w < vocab_size; ++w) {
          const float g = logits[w] / z - (w == context ? 1.0f : 0.0f);
          float* vo = table.output_vectors.data() + w * d;
          for (std::size_t j = 0; j < d; ++j) {
            grad_center[j] += g * vo[j];
            vo[j] -= lr * g * vc[j];
          }
        }
      } else {
        auto update = [&](TokenId w, float target) {
          float* vo = table.output_vectors.data() + w * d;
          float dot = 0.0f;
          for (std::size_t j = 0; j < d; ++j) dot += vo[j] * vc[j];
          const float p = nn::sigmoid(dot);
          loss_sum += -std::log(std::max(
              static_cast<double>(target > 0.5f ? p : 1.0f - p), 1e-30));
          const float g = p - target;
          for (std::size_t j = 0; j < d; ++j) {
            grad_center[j] += g * vo[j];
            vo[j] -= lr * g * vc[j];
          }
        };
        update(context, 1.0f);
        for (std::size_t k = 0; k < cfg.negative_samples; ++k) {
          TokenId w = neg_table.draw(rng);
          if (w == context) continue;
          update(w, 0.0f);
        }
      }
      for (std::size_t j = 0; j < d; ++j) vc[j] -= lr * grad_center[j];
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(use));
  }
  result.table = std::move(table);
  return result;
}

// Column i of the output is the input vector of token i; PAD columns zero.
template <typename T>
std::vector<T> embed_fragment(const Fragment& fragment,
                              const EmbeddingTable& table) {
  const std::size_t d = table.dim;
  const std::size_t len = fragment.tokens.size();
  std::vector<T> out(d * len, T(0));
  for (std::size_t i = 0; i < len; ++i) {
    const TokenId t = fragment.tokens[i];
    if (t == kPadToken) continue;
    if (t >= table.vocab_size)
      throw std::out_of_range("embed_fragment: token beyond vocabulary");
    const float* row = table.row(t);
    for (std::size_t j = 0; j < d; ++j)
      out[j * len + i] = static_cast<T>(row[j]);
  }
  return out;
}

}  // namespace droidfp
