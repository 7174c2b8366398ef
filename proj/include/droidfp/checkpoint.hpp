#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace droidfp {

// Versioned JSON container of named shaped arrays plus free-form metadata.
// Shared by the CNN members, the embedding table and the auto-encoder.
struct Checkpoint {
  static constexpr int kVersion = 1;

  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::map<std::string, std::pair<std::vector<std::size_t>,
                                  std::vector<double>>>
      arrays;

  template <typename T>
  void put(const std::string& name, std::vector<std::size_t> shape,
           const std::vector<T>& data) {
    std::size_t expect = 1;
    for (auto d : shape) expect *= d;
    if (expect != data.size())
      throw std::invalid_argument("checkpoint: shape/data mismatch for '" +
                                  name + "'");
    std::vector<double> d(data.begin(), data.end());
    arrays[name] = {std::move(shape), std::move(d)};
  }

  template <typename T>
  std::vector<T> get(const std::string& name,
                     std::vector<std::size_t>* shape = nullptr) const {
    auto it = arrays.find(name);
    if (it == arrays.end())
      throw std::out_of_range("checkpoint: missing array '" + name + "'");
    if (shape) *shape = it->second.first;
    return std::vector<T>(it->second.second.begin(), it->second.second.end());
  }

  void save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["format"] = "droidfp-ckpt";
    j["version"] = kVersion;
    j["meta"] = meta;
    auto& arr = j["arrays"] = nlohmann::ordered_json::object();
    for (const auto& [name, sd] : arrays) {
      arr[name]["shape"] = sd.first;
      arr[name]["data"] = sd.second;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out << j.dump() << '\n';
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "droidfp-ckpt")
      throw std::runtime_error("checkpoint: bad format tag in " + path);
    if (j.value("version", -1) != kVersion)
      throw std::runtime_error("checkpoint: unsupported version in " + path);
    Checkpoint c;
    c.meta = j.at("meta");
    for (auto it = j.at("arrays").begin(); it != j.at("arrays").end(); ++it) {
      c.arrays[it.key()] = {
          it.value().at("shape").get<std::vector<std::size_t>>(),
          it.value().at("data").get<std::vector<double>>()};
    }
    return c;
  }
};

}  // namespace droidfp
