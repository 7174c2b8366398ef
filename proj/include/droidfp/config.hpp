#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace droidfp {

// All pipeline hyperparameters. The *_full constants record the full-scale
// settings; the defaults here are desk scale so the whole pipeline runs in
// minutes on a laptop.
struct RunConfig {
  static constexpr std::size_t kFullFragmentLen = 10000;
  static constexpr std::size_t kFullEpochs = 100;
  static constexpr std::size_t kFullEnsembleSize = 6;

  // detection
  std::size_t fragment_len = 256;      // |F| (full scale: 10,000)
  std::size_t epochs = 20;             // CNN epochs (full scale: 100)
  std::size_t minibatch = 32;
  double lr = 3e-4;
  std::size_t ensemble_size = 6;       // phi
  std::size_t fragments_per_app = 6;   // inference fragments per member
  double target_error = 0.01;

  // embeddings
  std::size_t embed_dim = 64;          // d
  std::size_t window = 5;              // m
  std::size_t embed_epochs = 5;
  double embed_lr = 0.05;

  // clustering features
  std::size_t ngram_n = 4;
  std::size_t hash_len = 0;            // L; 0 means L = |V|
  std::uint64_t hash_seed = 0x9a58f00dULL;
  std::size_t ae_epochs = 100;
  double ae_lr = 3e-4;
  std::size_t min_pts = 5;

  // splits
  double build_ratio = 0.5;            // build vs test share of the corpus

  // plumbing
  std::uint64_t seed = 42;
  std::size_t workers = 0;             // 0 = available parallelism

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["fragment_len"] = fragment_len;
    j["epochs"] = epochs;
    j["minibatch"] = minibatch;
    j["lr"] = lr;
    j["ensemble_size"] = ensemble_size;
    j["fragments_per_app"] = fragments_per_app;
    j["target_error"] = target_error;
    j["embed_dim"] = embed_dim;
    j["window"] = window;
    j["embed_epochs"] = embed_epochs;
    j["embed_lr"] = embed_lr;
    j["ngram_n"] = ngram_n;
    j["hash_len"] = hash_len;
    j["hash_seed"] = hash_seed;
    j["ae_epochs"] = ae_epochs;
    j["ae_lr"] = ae_lr;
    j["min_pts"] = min_pts;
    j["build_ratio"] = build_ratio;
    j["seed"] = seed;
    j["workers"] = workers;
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key))
        field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    opt("fragment_len", c.fragment_len);
    opt("epochs", c.epochs);
    opt("minibatch", c.minibatch);
    opt("lr", c.lr);
    opt("ensemble_size", c.ensemble_size);
    opt("fragments_per_app", c.fragments_per_app);
    opt("target_error", c.target_error);
    opt("embed_dim", c.embed_dim);
    opt("window", c.window);
    opt("embed_epochs", c.embed_epochs);
    opt("embed_lr", c.embed_lr);
    opt("ngram_n", c.ngram_n);
    opt("hash_len", c.hash_len);
    opt("hash_seed", c.hash_seed);
    opt("ae_epochs", c.ae_epochs);
    opt("ae_lr", c.ae_lr);
    opt("min_pts", c.min_pts);
    opt("build_ratio", c.build_ratio);
    opt("seed", c.seed);
    opt("workers", c.workers);
    if (c.fragment_len == 0 || c.minibatch == 0 || c.ensemble_size == 0 ||
        c.fragments_per_app == 0 || c.embed_dim == 0 || c.ngram_n == 0 ||
        c.min_pts == 0)
      throw std::runtime_error("config: size parameters must be positive");
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot read " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out)
      throw std::runtime_error("config: cannot write " + path.string());
    out << to_json().dump(2) << '\n';
  }
};

// Normative run-directory layout; every stage reads and writes these paths
// so runs compose across machines.
struct RunDir {
  std::filesystem::path root;

  explicit RunDir(std::filesystem::path r) : root(std::move(r)) {}

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path vocab() const { return root / "vocab.json"; }
  std::filesystem::path embedding() const {
    return root / "embedding.ckpt.json";
  }
  std::filesystem::path detector() const { return root / "detector"; }
  std::filesystem::path member(std::size_t k) const {
    return detector() / ("member_" + std::to_string(k) + ".ckpt.json");
  }
  std::filesystem::path thresholds() const {
    return detector() / "thresholds.json";
  }
  std::filesystem::path autoencoder() const {
    return root / "autoencoder.ckpt.json";
  }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path detect_report() const {
    return reports() / "detect.jsonl";
  }
  std::filesystem::path cluster_report() const {
    return reports() / "cluster.json";
  }
  std::filesystem::path adapt_report() const {
    return reports() / "adapt.jsonl";
  }
  std::filesystem::path eval_report() const { return reports() / "eval.json"; }

  void ensure() const { std::filesystem::create_directories(root); }
};

}  // namespace droidfp
