#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "nasopt/checkpoint.hpp"
#include "nasopt/controller.hpp"
#include "nasopt/surrogate.hpp"
#include "nasopt/trainer.hpp"

namespace nasopt {

/// Cost charged to a genotype that is never trained: the invalid offset plus
/// its penalty (buildability failures carry penalty 0).
inline double sentinel_cost(double penalty) { return kInvalidCostOffset + penalty; }

enum class RecordKind { trained, invalid, unbuildable, duplicate };
std::string record_kind_name(RecordKind k);

struct SearchRecord {
  std::uint64_t iter = 0;  // 1-based record index
  std::string strategy;
  Genotype genotype;
  std::string key;  // dedup key
  double cost = 0.0;
  std::uint64_t evals = 0;
  std::uint64_t cum_evals = 0;
  double best_cost = 0.0;
  RecordKind kind = RecordKind::trained;
};

inline constexpr const char* kSearchLogMagic = "# nasopt search log v1";
inline constexpr const char* kSearchLogHeader = "iter,strategy,genotype,canonical_key,cost,evals_spent,cum_evals,best_cost";

std::string format_record(const SearchRecord& r);
/// Parses one CSV row; the kind is inferred from cost and evals.
SearchRecord parse_record(std::string_view line);
/// Reads a search log; a trailing line without newline is dropped.
std::vector<SearchRecord> read_search_log(std::istream& in);

class SearchHistory {
 public:
  void add(SearchRecord r);
  const std::vector<SearchRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  std::uint64_t evals() const noexcept { return evals_; }
  double best_cost() const noexcept { return best_cost_; }
  /// Record holding the best cost (first one on ties).
  const SearchRecord* best() const;
  std::optional<double> cost_of(const std::string& key) const;
  const std::unordered_set<std::string>& keys() const noexcept { return key_set_; }

 private:
  std::vector<SearchRecord> records_;
  std::unordered_map<std::string, double> keys_;
  std::unordered_set<std::string> key_set_;
  std::uint64_t evals_ = 0;
  double best_cost_ = std::numeric_limits<double>::infinity();
  std::optional<std::size_t> best_;
};

struct SearchConfig {
  std::string strategy = "random";  // random | rl | mac
  std::uint64_t budget = 0;         // total objective evaluations
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t proposals_per_iteration = 8;
  std::size_t max_stall_batches = 1000;  // consecutive batches without any evaluation
  BuildConfig build;                     // bounds taken from the objective
  TrainConfig train;
  PenaltyConfig penalty;
  ControllerConfig controller;
  MacConfig mac;
  std::filesystem::path log_path;         // empty: no log file
  std::filesystem::path checkpoint_path;  // empty: best network kept in memory only
  bool resume = false;

  void validate() const;
};

/// Read-only view of the run handed to strategies.
struct SearchContext {
  const SearchHistory& history;
  const SearchConfig& config;
  const BuildConfig& build;
};

class SearchStrategy {
 public:
  virtual ~SearchStrategy() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Genotype> propose(std::size_t count, const SearchContext& ctx) = 0;
  /// Called with the records committed by one batch, in order.
  virtual void observe(std::span<const SearchRecord> /*records*/, const SearchContext& /*ctx*/) {}
};

class RandomStrategy final : public SearchStrategy {
 public:
  explicit RandomStrategy(std::uint64_t seed) : rng_(seed) {}
  std::string name() const override { return "random"; }
  std::vector<Genotype> propose(std::size_t count, const SearchContext& ctx) override;

 private:
  Rng rng_;
};

class ControllerStrategy final : public SearchStrategy {
 public:
  ControllerStrategy(const ControllerConfig& cfg, std::uint64_t seed);
  std::string name() const override { return "rl"; }
  std::vector<Genotype> propose(std::size_t count, const SearchContext& ctx) override;
  void observe(std::span<const SearchRecord> records, const SearchContext& ctx) override;
  const Controller& controller() const noexcept { return controller_; }

 private:
  Controller controller_;
  Rng rng_;
  std::size_t batch_;
  std::vector<std::vector<int>> pending_seqs_;
  std::vector<double> pending_rewards_;
};

class MacStrategy final : public SearchStrategy {
 public:
  MacStrategy(const MacConfig& cfg, std::uint64_t seed);
  std::string name() const override { return "mac"; }
  std::vector<Genotype> propose(std::size_t count, const SearchContext& ctx) override;
  /// Proposals that came from the surrogate (the rest were random).
  std::size_t surrogate_proposals() const noexcept { return surrogate_proposals_; }

 private:
  MacConfig cfg_;
  Rng rng_;
  std::size_t surrogate_proposals_ = 0;
};

std::unique_ptr<SearchStrategy> make_strategy(const SearchConfig& cfg);

struct SearchResult {
  SearchHistory history;
  std::optional<Genotype> best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::optional<Json> best_checkpoint;
  std::uint64_t objective_evals = 0;  // counter delta on the shared objective
  std::size_t replayed = 0;           // records taken from an existing log
};

/// Proposes batches, skips duplicates by dedup key, charges sentinels to
/// genotypes that cannot be trained, trains the rest with budgeted_train under
/// per-candidate allowances, and stops once the evaluation budget is spent.
/// Records and network seeds depend only on the configuration, never on the
/// worker count.
SearchResult run_search(const Objective& objective, const SearchConfig& cfg);

}  // namespace nasopt
