#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace droidfp {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadToken = 0;
inline constexpr TokenId kUnusedToken = 1;
inline constexpr TokenId kFirstAssetToken = 2;

// Bijective mapping from platform asset names to token ids. Ids start at 2
// (0 is padding, 1 reserved) and are contiguous.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Builds from a set of asset names; ids are assigned in lexicographic
  // name order so the mapping is stable across runs.
  static Vocabulary from_names(std::vector<std::string> names) {
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    Vocabulary v;
    TokenId next = kFirstAssetToken;
    for (auto& n : names) {
      v.name_to_id_.emplace(std::move(n), next++);
    }
    v.rebuild_reverse();
    return v;
  }

  // Total id space including the two reserved ids.
  std::size_t size() const { return name_to_id_.size() + kFirstAssetToken; }
  std::size_t asset_count() const { return name_to_id_.size(); }

  bool contains(const std::string& name) const {
    return name_to_id_.count(name) != 0;
  }

  TokenId id_of(const std::string& name) const {
    auto it = name_to_id_.find(name);
    if (it == name_to_id_.end())
      throw std::out_of_range("vocabulary: unknown asset '" + name + "'");
    return it->second;
  }

  // nullptr-style lookup: returns false when the asset is out of vocabulary.
  bool lookup(const std::string& name, TokenId& out) const {
    auto it = name_to_id_.find(name);
    if (it == name_to_id_.end()) return false;
    out = it->second;
    return true;
  }

  const std::string& name_of(TokenId id) const {
    if (id < kFirstAssetToken || id >= size())
      throw std::out_of_range("vocabulary: id out of range");
    return id_to_name_[id - kFirstAssetToken];
  }

  void save(const std::string& path) const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, id] : name_to_id_) j[name] = id;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("vocabulary: cannot write " + path);
    out << j.dump(1) << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("vocabulary: cannot read " + path);
    nlohmann::json j;
    in >> j;
    if (!j.is_object()) throw std::runtime_error("vocabulary: not an object");
    Vocabulary v;
    for (auto it = j.begin(); it != j.end(); ++it) {
      TokenId id = it.value().get<TokenId>();
      if (id < kFirstAssetToken)
        throw std::runtime_error("vocabulary: reserved id used by '" +
                                 it.key() + "'");
      if (!v.name_to_id_.emplace(it.key(), id).second)
        throw std::runtime_error("vocabulary: duplicate name '" + it.key() +
                                 "'");
    }
    v.rebuild_reverse();  // also validates contiguity / injectivity
    return v;
  }

  bool operator==(const Vocabulary& other) const {
    return name_to_id_ == other.name_to_id_;
  }

  const std::map<std::string, TokenId>& table() const { return name_to_id_; }

 private:
  void rebuild_reverse() {
    id_to_name_.assign(name_to_id_.size(), {});
    for (const auto& [name, id] : name_to_id_) {
      std::size_t slot = id - kFirstAssetToken;
      if (slot >= id_to_name_.size())
        throw std::runtime_error("vocabulary: non-contiguous ids");
      if (!id_to_name_[slot].empty())
        throw std::runtime_error("vocabulary: duplicate id " +
                                 std::to_string(id));
      id_to_name_[slot] = name;
    }
  }

  std::map<std::string, TokenId> name_to_id_;
  std::vector<std::string> id_to_name_;
};

}  // namespace droidfp
