#include "nasopt/surrogate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "nasopt/errors.hpp"

namespace nasopt {

namespace {

using Wide = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

Wide wide_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Wide& x) {
  Wide r(b.size());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    long double s = b[i];
    for (Eigen::Index j = 0; j < a.cols(); ++j) s -= static_cast<long double>(a(i, j)) * x[j];
    r[i] = s;
  }
  return r;
}

// Double LU, refined with residuals and solution kept in extended precision so
// the stored coefficients reproduce the data well past double round-off.
// Returns the residual norm, or infinity on exact rank loss or a non-finite
// solution.
double solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, Wide& x) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  lu.setThreshold(0.0);
  if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
  x = lu.solve(b).cast<long double>();
  long double best = std::numeric_limits<long double>::infinity();
  Wide best_x = x;
  for (int k = 0; k < 6; ++k) {
    const Wide r = wide_residual(a, b, x);
    const long double norm = std::sqrt(r.squaredNorm());
    if (!std::isfinite(static_cast<double>(norm))) break;
    if (norm < best) {
      best = norm;
      best_x = x;
    }
    if (norm == 0.0L) break;
    const Eigen::VectorXd dx = lu.solve(r.cast<double>());
    if (!dx.allFinite()) break;
    x += dx.cast<long double>();
  }
  x = best_x;
  return static_cast<double>(best);
}

}  // namespace

std::optional<RbfSurrogate> RbfSurrogate::fit(std::vector<std::vector<double>> centers, std::vector<double> values,
                                              double ridge) {
  if (centers.empty() || centers.size() != values.size()) throw ShapeError("surrogate: one value per center");
  const std::size_t n = centers.size();
  const std::size_t d = centers[0].size();
  for (const auto& c : centers) {
    if (c.size() != d) throw ShapeError("surrogate: centers of mixed dimension");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("surrogate: non-finite target");
  }
  if (n < d + 2) return std::nullopt;
  const auto N = static_cast<Eigen::Index>(n), M = static_cast<Eigen::Index>(d + 1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(N + M, N + M);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < N; ++j) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = centers[i][k] - centers[j][k];
        r2 += diff * diff;
      }
      a(i, j) = cubic_kernel(std::sqrt(r2));
    }
    a(i, N) = 1.0;
    a(N, i) = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      a(i, N + 1 + static_cast<Eigen::Index>(k)) = centers[i][k];
      a(N + 1 + static_cast<Eigen::Index>(k), i) = centers[i][k];
    }
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(N + M);
  for (Eigen::Index i = 0; i < N; ++i) b[i] = values[i];

  // Clustered centers make the system badly conditioned but usually still
  // solvable; the ridge is tried only when the plain residual is poor and is
  // kept only if it does better.
  RbfSurrogate s;
  Wide x;
  const double tol = 1e-8 * std::max(1.0, b.norm());
  const double plain = solve(a, b, x);
  if (!(plain <= tol)) {
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += ridge;
    Wide xr;
    if (solve(shifted, b, xr) < std::numeric_limits<double>::infinity() &&
        std::sqrt(wide_residual(a, b, xr).squaredNorm()) < plain) {
      x = std::move(xr);
      s.ridge_ = true;
    } else if (!std::isfinite(plain)) {
      return std::nullopt;
    }
  }
  s.centers_ = std::move(centers);
  s.dim_ = d;
  s.lambda_wide_.assign(x.data(), x.data() + N);
  s.tail_wide_.assign(x.data() + N, x.data() + N + M);
  s.lambda_.assign(x.data(), x.data() + N);
  s.tail_.assign(x.data() + N, x.data() + N + M);
  return s;
}

double RbfSurrogate::predict(std::span<const double> x) const {
  if (x.size() != dim_) throw ShapeError("surrogate: query of wrong dimension");
  long double s = tail_wide_[0];
  for (std::size_t k = 0; k < dim_; ++k) s += tail_wide_[k + 1] * x[k];
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    double r2 = 0.0;
    const auto& c = centers_[i];
    for (std::size_t k = 0; k < dim_; ++k) {
      const double diff = x[k] - c[k];
      r2 += diff * diff;
    }
    s += lambda_wide_[i] * cubic_kernel(std::sqrt(r2));
  }
  return static_cast<double>(s);
}

std::vector<double> genotype_features(const Genotype& g) {
  const auto genes = g.genes();
  const auto alpha = gene_alphabets();
  std::vector<double> f(genes.size());
  for (std::size_t i = 0; i < genes.size(); ++i) f[i] = static_cast<double>(genes[i]) / (alpha[i] - 1);
  return f;
}

double symlog(double c) { return std::copysign(std::log10(1.0 + std::abs(c)), c); }

std::vector<double> feature_weights(std::span<const Genotype> samples, std::span<const double> costs) {
  if (samples.size() != costs.size()) throw ShapeError("feature_weights: one cost per sample");
  const std::size_t d = kGenotypeLength;
  std::vector<double> w(d, 1.0 / d);
  const std::size_t n = samples.size();
  if (n < 4) return w;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
  const std::size_t top = n / 2;
  std::vector<double> mp(d, 0.0), mn(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto f = genotype_features(samples[order[r]]);
    auto& acc = r < top ? mp : mn;
    for (std::size_t k = 0; k < d; ++k) acc[k] += f[k];
  }
  double total = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    w[k] = std::abs(mp[k] / static_cast<double>(top) - mn[k] / static_cast<double>(n - top));
    total += w[k];
  }
  if (!(total > 1e-15)) return std::vector<double>(d, 1.0 / d);
  for (double& v : w) v /= total;
  return w;
}

void MacConfig::validate() const {
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("mac: warmup_fraction in [0, 1]");
  if (trials == 0) throw ConfigError("mac: trials must be >= 1");
  if (!(ridge > 0.0)) throw ConfigError("mac: ridge must be > 0");
  if (!(base_rate >= 0.0 && base_rate <= 1.0)) throw ConfigError("mac: base_rate in [0, 1]");
  if (!(mutation_scale > 0.0)) throw ConfigError("mac: mutation_scale must be > 0");
}

Genotype perturb(const Genotype& incumbent, std::span<const double> weights, const MacConfig& cfg, Rng& rng) {
  if (weights.size() != kGenotypeLength) throw ShapeError("perturb: one weight per gene");
  const auto alpha = gene_alphabets();
  std::array<double, kGenotypeLength> wp{};
  for (std::size_t k = 0; k < wp.size(); ++k) {
    wp[k] = (1.0 - cfg.base_rate) * weights[k] + cfg.base_rate / kGenotypeLength;
  }
  auto genes = incumbent.genes();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto mutate = [&](std::size_t k) {
    std::uniform_int_distribution<int> pick(1, alpha[k] - 1);
    genes[k] = (genes[k] + pick(rng)) % alpha[k];
  };
  bool any = false;
  for (std::size_t k = 0; k < genes.size(); ++k) {
    if (u(rng) < std::min(1.0, cfg.mutation_scale * wp[k])) {
      mutate(k);
      any = true;
    }
  }
  if (!any) {
    std::discrete_distribution<std::size_t> pick(wp.begin(), wp.end());
    mutate(pick(rng));
  }
  return Genotype::from_genes(genes);
}

std::optional<Genotype> mac_propose(const Genotype& incumbent, const RbfSurrogate& surrogate,
                                    std::span<const double> weights, const std::unordered_set<std::string>& seen,
                                    const BuildConfig& build, const MacConfig& cfg, Rng& rng) {
  std::optional<Genotype> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const Genotype trial = perturb(incumbent, weights, cfg, rng);
    if (!buildable(trial, build)) continue;
    const double v = surrogate.predict(genotype_features(trial));
    if (!(v < best_value) && best) continue;
    if (seen.contains(dedup_key(trial))) continue;
    best = trial;
    best_value = v;
  }
  return best;
}

}  // namespace nasopt
