#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nasopt/network.hpp"

namespace nasopt {

struct TrainConfig {
  int max_epochs = 200;
  AdamConfig adam;
  double psi = 0.01;      // minimum relative improvement between epochs
  int initial_epochs = 5; // first rung
  int growth = 3;         // rung growth factor
  int max_budget = 200;   // last rung, in epochs
  double f_star = 0.0;    // reference value subtracted in the loss
  std::uint64_t eval_budget = 0;  // 0: unlimited
  std::optional<std::size_t> batch_size;  // defaults to the genotype's batch size
  bool early_stop_each_epoch = false;     // train(): apply the check after every epoch
  std::ostream* epoch_log = nullptr;      // receives `epoch,loss,best_f,evals` rows

  void validate() const;
};

enum class StopReason { budget, early_stop, max_epochs, numeric_error };
std::string stop_reason_name(StopReason r);

struct TrainReport {
  std::vector<double> x_best;
  double f_best = std::numeric_limits<double>::infinity();
  std::uint64_t evals = 0;
  int epochs = 0;  // completed epochs
  std::vector<double> loss_history;  // mean loss per completed epoch
  std::vector<double> epoch_best;    // running best at the end of each epoch
  StopReason stop = StopReason::max_epochs;
  std::string error;  // set with numeric_error
};

inline constexpr const char* kEpochLogHeader = "epoch,loss,best_f,evals";

/// Epoch-level training of one network on one objective. Each step takes the
/// next slice of the fixed inputs in cyclic order, evaluates the objective on
/// the emitted solutions, backpropagates the mean objective gap through the
/// analytic gradient and applies one Adam step.
class Trainer {
 public:
  Trainer(Network& net, const Objective& objective, const InputBatch& inputs, TrainConfig cfg);

  /// Runs one full pass over the inputs. Returns false when training had to
  /// stop inside the epoch (evaluation budget or numeric failure).
  bool run_epoch();
  /// Marks the run as finished for `reason` (when no stop was recorded yet).
  void finish(StopReason reason);
  bool stopped() const noexcept { return stopped_; }

  const TrainReport& report() const noexcept { return report_; }
  TrainReport take_report() { return std::move(report_); }
  std::size_t batch_size() const noexcept { return batch_; }

 private:
  bool step(std::size_t begin, std::size_t len, double& loss_sum);

  Network& net_;
  const Objective& objective_;
  const InputBatch& inputs_;
  TrainConfig cfg_;
  std::size_t batch_;
  TrainReport report_;
  bool stopped_ = false;
};

/// Plain loop: up to max_epochs, stopping on the budget, numeric failure, or
/// (with early_stop_each_epoch) the improvement check.
TrainReport train(Network& net, const Objective& objective, const InputBatch& inputs, const TrainConfig& cfg);

/// True when the last epoch improved on the one before by less than psi,
/// relative to max(1, |previous|). Needs at least two entries.
bool early_stop_check(std::span<const double> epoch_best, double psi);

/// r, g r, g^2 r, ... capped at `cap` (the cap itself is the final rung).
std::vector<int> rung_schedule(int initial, int growth, int cap);

/// Trains rung by rung; after each rung except the last, continues only while
/// the improvement check passes.
TrainReport budgeted_train(Network& net, const Objective& objective, const InputBatch& inputs, const TrainConfig& cfg);

}  // namespace nasopt
