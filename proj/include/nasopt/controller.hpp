#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nasopt/autodiff.hpp"
#include "nasopt/rng.hpp"

namespace nasopt {

struct ControllerConfig {
  std::size_t hidden = 35;
  std::size_t batch = 8;          // sequences per policy update
  double baseline_decay = 0.95;
  double init_scale = 0.1;        // recurrent weights uniform(-s, s); heads start at zero
  double entropy_weight = 5.0;    // bonus on the summed per-position entropy of each sequence; 0 is plain REINFORCE
  AdamConfig adam{0.1, 0.9, 0.999, 1e-8, 1e-4};

  void validate() const;
};

/// Two-layer tanh recurrent policy over a fixed sequence of categorical
/// tokens. Position t samples from alphabets[t]; the input at t is the
/// embedding of the token emitted at t-1 (a start token at t = 0).
class Controller {
 public:
  Controller(std::vector<int> alphabets, const ControllerConfig& cfg, std::uint64_t seed);

  struct Sample {
    std::vector<int> tokens;
    std::vector<double> log_probs;  // per position
  };

  /// Draws every position from its softmax; greedy takes the argmax instead.
  Sample sample(Rng& rng, bool greedy = false) const;
  /// Per-position distributions along a given token sequence.
  std::vector<std::vector<double>> distributions(std::span<const int> tokens) const;
  double log_prob(std::span<const int> tokens) const;

  /// Accumulates -sum_k [coef_k * grad log P(tokens_k) + entropy_k * grad H(tokens_k)]
  /// into the parameter gradients, H being the summed entropy of the
  /// per-position distributions along the sequence.
  void policy_gradient(std::span<const std::vector<int>> sequences, std::span<const double> coefficients,
                       std::span<const double> entropy = {});
  /// Summed entropy of the per-position distributions along a sequence.
  double entropy(std::span<const int> tokens) const;

  /// Baseline-centred policy-gradient step. Non-finite rewards are skipped.
  /// Returns the number of sequences used.
  std::size_t update(std::span<const std::vector<int>> sequences, std::span<const double> rewards);

  std::optional<double> baseline() const noexcept { return baseline_; }
  std::size_t skipped_rewards() const noexcept { return skipped_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  const std::vector<int>& alphabets() const noexcept { return alphabets_; }

 private:
  struct Trace;
  void run(std::span<const int> tokens, Trace& tr, Rng* rng, bool greedy) const;
  std::size_t token_id(std::size_t pos, int value) const { return offsets_[pos] + static_cast<std::size_t>(value); }

  std::vector<int> alphabets_;
  std::vector<std::size_t> offsets_;  // embedding row of (pos, 0); start token is the last row
  ControllerConfig cfg_;
  ParamStore params_;
  std::size_t emb_, w1x_, w1h_, b1_, w2x_, w2h_, b2_;
  std::vector<std::size_t> head_w_, head_b_;
  std::optional<double> baseline_;
  std::size_t skipped_ = 0;
};

/// -log10(cost) for positive costs, clipped to [-12, 12]; costs <= 0 map to
/// 12 + log10(1 + |cost|), capped at 24. Sentinel costs of untrainable
/// genotypes map to -12 - log10(1 + penalty), floored at -24, so the penalty
/// still ranks them.
double reward_from_cost(double cost);

}  // namespace nasopt
