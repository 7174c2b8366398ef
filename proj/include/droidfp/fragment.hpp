#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "droidfp/asmparse.hpp"
#include "droidfp/rng.hpp"

namespace droidfp {

// Fixed-length token window over a freshly shuffled concatenation of method
// sequences. Intra-sequence order is preserved; inter-sequence order is
// randomized on every draw.
struct Fragment {
  std::vector<TokenId> tokens;  // length == fragment_len
  std::size_t pad_count = 0;
  bool degenerate = false;  // empty app -> all PAD

  // (sequence index in the source representation, tokens taken) in emission
  // order; the last entry may be a truncated prefix.
  std::vector<std::pair<std::size_t, std::size_t>> segments;
};

inline Fragment make_fragment(const AppRepresentation& app,
                              std::size_t fragment_len, Rng& rng) {
  if (fragment_len < 1)
    throw std::invalid_argument("fragment_len must be >= 1");
  Fragment f;
  f.tokens.reserve(fragment_len);

  std::vector<std::size_t> order(app.sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  for (std::size_t idx : order) {
    if (f.tokens.size() >= fragment_len) break;
    const auto& seq = app.sequences[idx].tokens;
    const std::size_t take =
        std::min(seq.size(), fragment_len - f.tokens.size());
    f.tokens.insert(f.tokens.end(), seq.begin(),
                    seq.begin() + static_cast<std::ptrdiff_t>(take));
    f.segments.emplace_back(idx, take);
  }
  f.pad_count = fragment_len - f.tokens.size();
  f.tokens.resize(fragment_len, kPadToken);
  f.degenerate = f.pad_count == fragment_len;
  return f;
}

// h!/(h-k)! exactly.
inline boost::multiprecision::cpp_int permutation_count(std::uint64_t h,
                                                        std::uint64_t k) {
  if (k > h) throw std::invalid_argument("permutation_count: k > h");
  boost::multiprecision::cpp_int out = 1;
  for (std::uint64_t i = 0; i < k; ++i) out *= (h - i);
  return out;
}

struct FragmentBatchEntry {
  std::size_t app_index;
  Fragment fragment;
};

// per_app independent fragments per app; deterministic under a fixed root
// rng by giving each app its own child stream.
inline std::vector<FragmentBatchEntry> fragment_batch(
    const std::vector<const AppRepresentation*>& apps,
    std::size_t fragment_len, std::size_t per_app, Rng& rng) {
  if (per_app < 1) throw std::invalid_argument("per_app must be >= 1");
  std::vector<FragmentBatchEntry> out;
  out.reserve(apps.size() * per_app);
  for (std::size_t a = 0; a < apps.size(); ++a) {
    Rng stream = rng.split(a + 1);
    for (std::size_t i = 0; i < per_app; ++i)
      out.push_back({a, make_fragment(*apps[a], fragment_len, stream)});
  }
  return out;
}

}  // namespace droidfp
