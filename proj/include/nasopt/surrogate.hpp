#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "nasopt/genotype.hpp"
#include "nasopt/network.hpp"
#include "nasopt/rng.hpp"

namespace nasopt {

inline double cubic_kernel(double r) noexcept { return r * r * r; }

/// Cubic radial basis interpolant with a linear polynomial tail:
///   s(x) = sum_i lambda_i |x - x_i|^3 + c_0 + sum_j c_j x_j
/// with the side condition P^T lambda = 0.
class RbfSurrogate {
 public:
  /// Solves the interpolation system; if it is singular or leaves a large
  /// residual, retries with `ridge` added to the whole diagonal and keeps the
  /// better solution. Returns nullopt when both fail or when there
  /// are fewer than d + 2 centers.
  static std::optional<RbfSurrogate> fit(std::vector<std::vector<double>> centers, std::vector<double> values,
                                         double ridge = 1e-8);

  double predict(std::span<const double> x) const;
  std::size_t size() const noexcept { return centers_.size(); }
  std::size_t dimension() const noexcept { return dim_; }
  const std::vector<double>& weights() const noexcept { return lambda_; }
  const std::vector<double>& tail() const noexcept { return tail_; }
  bool used_ridge() const noexcept { return ridge_; }

 private:
  std::vector<std::vector<double>> centers_;
  std::vector<double> lambda_;
  std::vector<double> tail_;
  std::vector<long double> lambda_wide_;
  std::vector<long double> tail_wide_;
  std::size_t dim_ = 0;
  bool ridge_ = false;
};

/// Genes scaled to [0, 1] by their alphabet size.
std::vector<double> genotype_features(const Genotype& g);

/// sign(c) * log10(1 + |c|): compresses costs spanning many decades.
double symlog(double c);

/// Per-gene weights, nonnegative, summing to one. The better half of the
/// samples (lowest cost) is labelled promising; each gene's weight is the
/// absolute difference of its mean scaled value between the two halves.
/// Uniform when fewer than four samples are given or all differences vanish.
std::vector<double> feature_weights(std::span<const Genotype> samples, std::span<const double> costs);

struct MacConfig {
  double warmup_fraction = 0.5;  // of the evaluation budget spent on random proposals
  std::size_t trials = 10000;
  double ridge = 1e-8;
  double base_rate = 0.002;      // mixed into the weights before sampling
  double mutation_scale = 2.0;   // per-gene mutation probability = min(1, scale * weight)

  void validate() const;
};

/// Perturbation of `incumbent`: gene g mutates with probability
/// min(1, scale * w'_g), w' = (1 - base) w + base / 27; a mutated gene takes a
/// different value uniformly. At least one gene always mutates.
Genotype perturb(const Genotype& incumbent, std::span<const double> weights, const MacConfig& cfg, Rng& rng);

/// Generates cfg.trials perturbations of the incumbent, keeps those that are
/// valid, buildable and whose dedup key is not in `seen`, and returns the one
/// with the smallest surrogate prediction (first on ties). nullopt when no
/// trial survives.
std::optional<Genotype> mac_propose(const Genotype& incumbent, const RbfSurrogate& surrogate,
                                    std::span<const double> weights, const std::unordered_set<std::string>& seen,
                                    const BuildConfig& build, const MacConfig& cfg, Rng& rng);

}  // namespace nasopt
