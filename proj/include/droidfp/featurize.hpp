#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "droidfp/asmparse.hpp"

namespace droidfp {

// Seeded FNV-1a over the little-endian 4-byte encoding of the token ids.
// This hash and encoding are normative for the vector dump format: the same
// (n-gram, seed) pair must hash identically everywhere.
inline std::uint64_t ngram_hash(const TokenId* tokens, std::size_t n,
                                std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t t = tokens[i];
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<std::uint64_t>(t & 0xffu);
      h *= 1099511628211ULL;
      t >>= 8;
    }
  }
  return h;
}

using NgramCounts = std::map<std::vector<TokenId>, std::uint64_t>;

// Contiguous n-grams within each method sequence (never across methods),
// aggregated over the app's multiset.
inline NgramCounts ngrams(const AppRepresentation& app, std::size_t n) {
  if (n < 1) throw std::invalid_argument("ngrams: n must be >= 1");
  NgramCounts counts;
  for (const auto& seq : app.sequences) {
    if (seq.tokens.size() < n) continue;
    for (std::size_t i = 0; i + n <= seq.tokens.size(); ++i) {
      std::vector<TokenId> g(seq.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                             seq.tokens.begin() +
                                 static_cast<std::ptrdiff_t>(i + n));
      ++counts[std::move(g)];
    }
  }
  return counts;
}

struct HashVector {
  std::vector<double> values;  // unit L2 norm unless degenerate
  bool degenerate = false;     // empty app -> zero vector
};

// Signed feature hashing of an n-gram count stream into length L, then L2
// normalization. The sign comes from bit 63 of an independent second hash;
// unsigned accumulation is available behind `signed_hashing = false`.
inline HashVector hash_vectorize(const NgramCounts& counts, std::size_t L,
                                 std::uint64_t seed,
                                 bool signed_hashing = true) {
  if (L == 0) throw std::invalid_argument("hash_vectorize: L must be > 0");
  HashVector hv;
  hv.values.assign(L, 0.0);
  constexpr std::uint64_t kSignSeedMix = 0xa5a5a5a55a5a5a5aULL;
  for (const auto& [gram, count] : counts) {
    const std::uint64_t h = ngram_hash(gram.data(), gram.size(), seed);
    const std::uint64_t s =
        ngram_hash(gram.data(), gram.size(), seed ^ kSignSeedMix);
    const double sign = !signed_hashing || (s >> 63) == 0 ? 1.0 : -1.0;
    hv.values[h % L] += sign * static_cast<double>(count);
  }
  double norm = 0.0;
  for (double v : hv.values) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    hv.degenerate = true;
    return hv;
  }
  for (double& v : hv.values) v /= norm;
  return hv;
}

inline HashVector instngram2bag(const AppRepresentation& app, std::size_t n,
                                std::size_t L, std::uint64_t seed,
                                bool signed_hashing = true) {
  return hash_vectorize(ngrams(app, n), L, seed, signed_hashing);
}

// Fraction of hashed n-grams that landed on an index already taken by a
// different n-gram (reported, not assumed zero).
inline double collision_rate(const NgramCounts& counts, std::size_t L,
                             std::uint64_t seed) {
  if (counts.empty()) return 0.0;
  std::map<std::uint64_t, std::uint64_t> first_at;
  std::uint64_t collisions = 0;
  std::uint64_t distinct = 0;
  for (const auto& [gram, count] : counts) {
    (void)count;
    ++distinct;
    const std::uint64_t h = ngram_hash(gram.data(), gram.size(), seed);
    const std::uint64_t idx = h % L;
    auto [it, inserted] = first_at.emplace(idx, h);
    if (!inserted && it->second != h) ++collisions;
  }
  return static_cast<double>(collisions) / static_cast<double>(distinct);
}

}  // namespace droidfp
