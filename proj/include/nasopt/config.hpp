#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nasopt/checkpoint.hpp"
#include "nasopt/search.hpp"

namespace nasopt {

inline constexpr int kConfigVersion = 1;

/// One file fully determines a run: objective, strategy, budget, seeds and
/// every build / train / strategy setting.
struct ExperimentConfig {
  std::string objective = "sphere:10";
  std::string strategy = "random";
  std::uint64_t budget = 100000;
  std::vector<std::uint64_t> seeds{0};  // one search per seed
  std::size_t workers = 0;              // 0: hardware concurrency
  std::size_t proposals_per_iteration = 8;
  std::size_t max_stall_batches = 1000;
  BuildConfig build;  // bounds come from the objective
  TrainConfig train;
  PenaltyConfig penalty;
  ControllerConfig controller;
  MacConfig mac;
  std::string out = "runs";

  void validate() const;
};

Json config_to_json(const ExperimentConfig& cfg);
/// Strict: unknown keys and wrong types are ConfigErrors naming the field path.
ExperimentConfig config_from_json(const Json& j);
/// Parse errors report line and column.
ExperimentConfig load_config(const std::filesystem::path& path);

Json train_config_to_json(const TrainConfig& t);
Json train_report_to_json(const TrainReport& r);

/// Search settings for one seed; files go under `run_dir`.
SearchConfig make_search_config(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& run_dir);

std::size_t resolve_workers(std::size_t requested);

}  // namespace nasopt
