#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "droidfp/corpus.hpp"

using droidfp::AppRecord;
using droidfp::default_profile;
using droidfp::generate_corpus;
using droidfp::Label;
using droidfp::split_dataset;
using droidfp::tokenize;
using droidfp::transform;
using droidfp::TransformKind;
using droidfp::Vocabulary;

namespace {

Vocabulary profile_vocab() {
  return Vocabulary::from_names(default_profile().all_platform_assets());
}

std::vector<droidfp::TokenId> flat_sorted_tokens(
    const droidfp::AppRepresentation& rep) {
  std::vector<droidfp::TokenId> all;
  for (const auto& s : rep.sequences)
    all.insert(all.end(), s.tokens.begin(), s.tokens.end());
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TEST_CASE("generator honors counts and labels") {
  auto profile = default_profile();
  auto recs = generate_corpus(profile, 0, 5, 1, 7);
  REQUIRE(recs.size() == 5);
  for (const auto& r : recs) {
    REQUIRE(r.label == Label::Benign);
    REQUIRE_FALSE(r.family.has_value());
  }
}

TEST_CASE("generator is deterministic") {
  auto profile = default_profile();
  auto a = generate_corpus(profile, 20, 20, 4, 1);
  auto b = generate_corpus(profile, 20, 20, 4, 1);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].id == b[i].id);
    REQUIRE(a[i].source_text == b[i].source_text);
  }
}

TEST_CASE("round-robin family assignment is balanced") {
  auto recs = generate_corpus(default_profile(), 100, 100, 10, 1);
  std::map<std::string, int> fam_count;
  for (const auto& r : recs)
    if (r.family) ++fam_count[*r.family];
  REQUIRE(fam_count.size() == 10);
  for (const auto& [fam, n] : fam_count) REQUIRE(n == 10);
}

TEST_CASE("generator rejects more families than malware") {
  REQUIRE_THROWS(generate_corpus(default_profile(), 3, 0, 5, 1));
}

TEST_CASE("every malware app embeds its family signature") {
  auto profile = default_profile();
  auto vocab = profile_vocab();
  auto recs = generate_corpus(profile, 12, 0, 3, 9);
  for (const auto& r : recs) {
    const int fam = std::stoi(r.family->substr(6));
    auto rep = tokenize(droidfp::parse(r.source_text), vocab);
    // count non-overlapping signature occurrences across methods; a later
    // insertion may split an earlier copy, so only presence is guaranteed
    int hits = 0;
    for (const auto& sig :
         profile.family_signatures[static_cast<std::size_t>(fam)]) {
      std::vector<droidfp::TokenId> sig_tokens;
      for (const auto& a : sig) sig_tokens.push_back(vocab.id_of(a));
      for (const auto& seq : rep.sequences) {
        for (std::size_t i = 0;
             i + sig_tokens.size() <= seq.tokens.size(); ++i) {
          if (std::equal(sig_tokens.begin(), sig_tokens.end(),
                         seq.tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
            ++hits;
            i += sig_tokens.size() - 1;
          }
        }
      }
    }
    REQUIRE(hits >= 1);
  }
}

TEST_CASE("split sizes follow the 50/50 and 80/20 rules") {
  auto recs = generate_corpus(default_profile(), 50, 50, 5, 3);
  auto s = split_dataset(recs, 0.5, 11);
  REQUIRE(s.build_ids.size() == 50);
  REQUIRE(s.test_ids.size() == 50);
  REQUIRE(s.train_ids.size() == 40);
  REQUIRE(s.valid_ids.size() == 10);

  std::set<std::string> build(s.build_ids.begin(), s.build_ids.end());
  std::set<std::string> test(s.test_ids.begin(), s.test_ids.end());
  for (const auto& id : test) REQUIRE(build.count(id) == 0);
  std::set<std::string> tv(s.train_ids.begin(), s.train_ids.end());
  tv.insert(s.valid_ids.begin(), s.valid_ids.end());
  REQUIRE(tv == build);

  // stratification: class proportion within 5 points
  std::map<std::string, Label> labels;
  for (const auto& r : recs) labels[r.id] = r.label;
  auto mal_share = [&](const std::vector<std::string>& ids) {
    int m = 0;
    for (const auto& id : ids)
      if (labels[id] == Label::Malware) ++m;
    return static_cast<double>(m) / static_cast<double>(ids.size());
  };
  REQUIRE(std::abs(mal_share(s.build_ids) - 0.5) <= 0.05);
  REQUIRE(std::abs(mal_share(s.test_ids) - 0.5) <= 0.05);
}

TEST_CASE("split is stratified at skewed ratios and deterministic") {
  auto recs = generate_corpus(default_profile(), 20, 80, 4, 5);
  auto a = split_dataset(recs, 0.5, 3);
  auto b = split_dataset(recs, 0.5, 3);
  REQUIRE(a.build_ids == b.build_ids);
  REQUIRE(a.valid_ids == b.valid_ids);
  std::map<std::string, Label> labels;
  for (const auto& r : recs) labels[r.id] = r.label;
  int mal = 0;
  for (const auto& id : a.build_ids)
    if (labels[id] == Label::Malware) ++mal;
  REQUIRE(std::abs(mal / 50.0 - 0.2) <= 0.05);
}

TEST_CASE("split edge cases") {
  auto recs = generate_corpus(default_profile(), 2, 2, 1, 5);
  auto s = split_dataset(recs, 0.5, 1);
  REQUIRE(s.build_ids.size() == 2);
  REQUIRE(s.test_ids.size() == 2);
  auto three = generate_corpus(default_profile(), 2, 1, 1, 5);
  REQUIRE_THROWS(split_dataset(three, 0.5, 1));
  REQUIRE_THROWS(split_dataset(recs, 0.0, 1));
  REQUIRE_THROWS(split_dataset(recs, 1.0, 1));
}

TEST_CASE("transforms preserve canonical content") {
  auto vocab = profile_vocab();
  auto recs = generate_corpus(default_profile(), 6, 6, 3, 13);
  for (const auto& r : recs) {
    auto before = tokenize(droidfp::parse(r.source_text), vocab);

    for (auto kind :
         {TransformKind::RenameIdentifiers, TransformKind::JunkInsertion,
          TransformKind::MethodReordering,
          TransformKind::StringEncryptionStub}) {
      auto t = transform(r, kind, 99);
      REQUIRE(t.label == r.label);
      REQUIRE(t.family == r.family);
      auto after = tokenize(droidfp::parse(t.source_text), vocab);
      // bit-identical sequence multiset
      REQUIRE(after == before);
    }

    // call indirection preserves the token multiset (order ignored)
    auto t = transform(r, TransformKind::CallIndirection, 99);
    auto after = tokenize(droidfp::parse(t.source_text), vocab);
    REQUIRE(flat_sorted_tokens(after) == flat_sorted_tokens(before));
  }
}

TEST_CASE("method reordering changes file order but not the multiset") {
  auto r = generate_corpus(default_profile(), 1, 0, 1, 21)[0];
  auto t = transform(r, TransformKind::MethodReordering, 4);
  REQUIRE(t.source_text != r.source_text);
}

TEST_CASE("transform is deterministic in its seed") {
  auto r = generate_corpus(default_profile(), 1, 1, 1, 8)[0];
  auto a = transform(r, TransformKind::JunkInsertion, 5);
  auto b = transform(r, TransformKind::JunkInsertion, 5);
  REQUIRE(a.source_text == b.source_text);
}

TEST_CASE("corpus directory round-trips through the manifest") {
  namespace fs = std::filesystem;
  auto recs = generate_corpus(default_profile(), 3, 3, 2, 17);
  const auto dir = fs::temp_directory_path() / "droidfp_corpus_rt";
  fs::remove_all(dir);
  droidfp::write_corpus(recs, dir);
  auto back = droidfp::read_corpus(dir);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    REQUIRE(back[i].id == recs[i].id);
    REQUIRE(back[i].label == recs[i].label);
    REQUIRE(back[i].family == recs[i].family);
    REQUIRE(back[i].epoch_tag == recs[i].epoch_tag);
    REQUIRE(back[i].source_text == recs[i].source_text);
  }
  fs::remove_all(dir);
}

TEST_CASE("token distribution sums to one") {
  auto profile = default_profile();
  for (int epoch : {0, 3}) {
    auto mal = profile.token_distribution(Label::Malware, 2, epoch);
    auto ben = profile.token_distribution(Label::Benign, -1, epoch);
    double ms = 0.0, bs = 0.0;
    for (const auto& [a, w] : mal) ms += w;
    for (const auto& [a, w] : ben) bs += w;
    REQUIRE(ms == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(bs == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("drift shifts the active class window") {
  auto profile = default_profile();
  auto d0 = profile.token_distribution(Label::Benign, -1, 0);
  auto d5 = profile.token_distribution(Label::Benign, -1, 5);
  std::set<std::string> k0, k5;
  for (const auto& [a, w] : d0) k0.insert(a);
  for (const auto& [a, w] : d5) k5.insert(a);
  REQUIRE(k0 != k5);
}
