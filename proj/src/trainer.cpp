#include "nasopt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nasopt/errors.hpp"

namespace nasopt {

void TrainConfig::validate() const {
  adam.validate();
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (initial_epochs < 1) throw ConfigError("train: initial_epochs must be >= 1");
  if (max_budget < initial_epochs) throw ConfigError("train: max_budget must be >= initial_epochs");
  if (max_budget > max_epochs) throw ConfigError("train: max_budget must be <= max_epochs");
  if (growth < 2) throw ConfigError("train: growth must be >= 2");
  if (!(psi >= 0.0)) throw ConfigError("train: psi must be >= 0");
  if (!std::isfinite(f_star)) throw ConfigError("train: f_star must be finite");
  if (batch_size && *batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
}

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::budget: return "budget";
    case StopReason::early_stop: return "early-stop";
    case StopReason::max_epochs: return "max-epochs";
    case StopReason::numeric_error: return "numeric-error";
  }
  return "unknown";
}

Trainer::Trainer(Network& net, const Objective& objective, const InputBatch& inputs, TrainConfig cfg)
    : net_(net), objective_(objective), inputs_(inputs), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (!net_.built()) throw StateError("train: network is not built");
  if (net_.dimension() != objective_.dimension()) {
    throw ShapeError("train: network emits " + std::to_string(net_.dimension()) + " coordinates, objective " +
                     objective_.id() + " has dimension " + std::to_string(objective_.dimension()));
  }
  if (cfg_.batch_size) {
    batch_ = *cfg_.batch_size;
  } else {
    batch_ = net_.genotype() ? static_cast<std::size_t>(net_.genotype()->batch_size()) : 1;
  }
}

void Trainer::finish(StopReason reason) {
  if (stopped_) return;
  stopped_ = true;
  report_.stop = reason;
}

bool Trainer::step(std::size_t begin, std::size_t len, double& loss_sum) {
  Tape tape;
  const Network::Pass pass = net_.forward(tape, inputs_.slice(begin, len));
  const Tensor& x = tape.value(pass.solutions);
  const std::size_t dim = x.dim(1);
  Tensor grad({len, dim});
  std::vector<double> f(len);
  report_.evals += len;
  for (std::size_t i = 0; i < len; ++i) {
    std::span<const double> xi(x.data().data() + i * dim, dim);
    std::span<double> gi(grad.data().data() + i * dim, dim);
    f[i] = objective_.value_and_gradient(xi, gi);
    if (f[i] < report_.f_best) {
      report_.f_best = f[i];
      report_.x_best.assign(xi.begin(), xi.end());
    }
  }
  double loss = 0.0;
  for (double fi : f) loss += fi - cfg_.f_star;
  loss /= static_cast<double>(len);
  const double scale = 1.0 / static_cast<double>(len);
  for (double& g : grad.data()) g *= scale;
  if (!std::isfinite(loss) || !grad.all_finite()) {
    report_.error = "non-finite objective value or gradient on " + objective_.id();
    finish(StopReason::numeric_error);
    return false;
  }
  const Var l = ops::external_scalar(tape, pass.solutions, loss, std::move(grad));
  tape.backward(l);
  try {
    adam_step(net_.params(), cfg_.adam);
  } catch (const NumericError& e) {
    net_.params().zero_grad();
    report_.error = e.what();
    finish(StopReason::numeric_error);
    return false;
  }
  for (double fi : f) loss_sum += fi - cfg_.f_star;
  return true;
}

bool Trainer::run_epoch() {
  if (stopped_) return false;
  const std::size_t total = inputs_.count();
  double loss_sum = 0.0;
  std::size_t pos = 0;
  while (pos < total) {
    std::size_t len = std::min(batch_, total - pos);
    if (cfg_.eval_budget > 0) {
      const std::uint64_t left = cfg_.eval_budget - std::min(cfg_.eval_budget, report_.evals);
      len = static_cast<std::size_t>(std::min<std::uint64_t>(len, left));
      if (len == 0) {
        finish(StopReason::budget);
        return false;
      }
    }
    if (!step(pos, len, loss_sum)) return false;
    pos += len;
  }
  ++report_.epochs;
  const double mean_loss = loss_sum / static_cast<double>(total);
  report_.loss_history.push_back(mean_loss);
  report_.epoch_best.push_back(report_.f_best);
  if (cfg_.epoch_log) {
    char line[128];
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%llu\n", report_.epochs, mean_loss, report_.f_best,
                  static_cast<unsigned long long>(report_.evals));
    *cfg_.epoch_log << line;
  }
  if (cfg_.eval_budget > 0 && report_.evals >= cfg_.eval_budget) {
    finish(StopReason::budget);
    return false;
  }
  return true;
}

TrainReport train(Network& net, const Objective& objective, const InputBatch& inputs, const TrainConfig& cfg) {
  Trainer t(net, objective, inputs, cfg);
  for (int e = 0; e < cfg.max_epochs; ++e) {
    if (!t.run_epoch()) break;
    if (cfg.early_stop_each_epoch && early_stop_check(t.report().epoch_best, cfg.psi)) {
      t.finish(StopReason::early_stop);
      break;
    }
  }
  t.finish(StopReason::max_epochs);
  return t.take_report();
}

bool early_stop_check(std::span<const double> epoch_best, double psi) {
  if (epoch_best.size() < 2) return false;
  const double prev = epoch_best[epoch_best.size() - 2];
  const double curr = epoch_best.back();
  return (prev - curr) / std::max(1.0, std::abs(prev)) < psi;
}

std::vector<int> rung_schedule(int initial, int growth, int cap) {
  if (initial < 1 || growth < 2 || cap < initial) throw ConfigError("invalid rung schedule");
  std::vector<int> rungs;
  long long r = initial;
  while (r < cap) {
    rungs.push_back(static_cast<int>(r));
    r *= growth;
  }
  rungs.push_back(cap);
  return rungs;
}

TrainReport budgeted_train(Network& net, const Objective& objective, const InputBatch& inputs, const TrainConfig& cfg) {
  Trainer t(net, objective, inputs, cfg);
  const std::vector<int> rungs = rung_schedule(cfg.initial_epochs, cfg.growth, cfg.max_budget);
  for (std::size_t k = 0; k < rungs.size() && !t.stopped(); ++k) {
    while (t.report().epochs < rungs[k]) {
      if (!t.run_epoch()) break;
    }
    if (t.stopped()) break;
    if (k + 1 < rungs.size() && early_stop_check(t.report().epoch_best, cfg.psi)) {
      t.finish(StopReason::early_stop);
    }
  }
  t.finish(StopReason::max_epochs);
  return t.take_report();
}

}  // namespace nasopt
