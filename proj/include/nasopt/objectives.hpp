#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nasopt {

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;

  static Bounds uniform(std::size_t dim, double lo, double hi);
  std::size_t size() const noexcept { return lo.size(); }
  void validate() const;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

/// Box-constrained objective with an analytic gradient. Evaluations are counted
/// atomically so concurrent trainers can share one instance.
class Objective {
 public:
  Objective(std::string id, Bounds bounds);
  virtual ~Objective() = default;
  Objective(const Objective&) = delete;
  Objective& operator=(const Objective&) = delete;

  const std::string& id() const noexcept { return id_; }
  std::size_t dimension() const noexcept { return bounds_.size(); }
  const Bounds& bounds() const noexcept { return bounds_; }

  /// f(x); counts one evaluation.
  double value(std::span<const double> x) const;
  /// f(x) and its gradient; counts one evaluation.
  double value_and_gradient(std::span<const double> x, std::span<double> grad) const;

  std::uint64_t evaluations() const noexcept { return evals_.load(std::memory_order_relaxed); }

  /// Known minimiser, when the family has one.
  virtual std::optional<std::vector<double>> optimum() const { return std::nullopt; }
  /// True when x lies within `margin` of a point where f is not differentiable.
  virtual bool near_nonsmooth(std::span<const double> /*x*/, double /*margin*/) const { return false; }

 protected:
  /// Value at x; when `grad` is non-empty it receives the gradient.
  virtual double compute(std::span<const double> x, std::span<double> grad) const = 0;

 private:
  void check_dimension(std::span<const double> x) const;

  std::string id_;
  Bounds bounds_;
  mutable std::atomic<std::uint64_t> evals_{0};
};

// -------------------------------------------------------------- benchmarks

enum class Family {
  bent_cigar = 1,
  zakharov = 3,
  rosenbrock = 4,
  rastrigin = 5,
  expanded_schaffer = 6,
  lunacek_bi_rastrigin = 7,
  noncontinuous_rastrigin = 8,
  levy = 9,
  schwefel = 10,
};

std::span<const Family> benchmark_families();
std::string family_name(Family f);

/// f(x) = base(R (x - o)) on [-100, 100]^D with a seeded shift o in [-80, 80]^D
/// and a seeded orthogonal rotation R.
class BenchmarkFunction final : public Objective {
 public:
  BenchmarkFunction(Family family, std::size_t dim, std::uint64_t seed);
  /// Instance with explicit shift and row-major rotation (tests).
  BenchmarkFunction(Family family, std::vector<double> shift, std::vector<double> rotation);

  Family family() const noexcept { return family_; }
  const std::vector<double>& shift() const noexcept { return shift_; }
  const std::vector<double>& rotation() const noexcept { return rotation_; }
  /// z = R (x - o).
  std::vector<double> transform(std::span<const double> x) const;
  /// Family base function on already-transformed coordinates.
  double base(std::span<const double> z, std::span<double> grad_z) const;

  std::optional<std::vector<double>> optimum() const override { return shift_; }
  bool near_nonsmooth(std::span<const double> x, double margin) const override;

 protected:
  double compute(std::span<const double> x, std::span<double> grad) const override;

 private:
  Family family_;
  std::vector<double> shift_;
  std::vector<double> rotation_;
};

/// Sum of squares on [-100, 100]^D (smoke-test objective, optimum at 0).
class Sphere final : public Objective {
 public:
  explicit Sphere(std::size_t dim);
  std::optional<std::vector<double>> optimum() const override;

 protected:
  double compute(std::span<const double> x, std::span<double> grad) const override;
};

/// Shifted quadratic family sum (x_i - o_i)^2 on [-100, 100]^D. The shift is
/// generated coordinate by coordinate from the seed, so instances of different
/// dimension share their leading coordinates.
class ShiftedQuadratic final : public Objective {
 public:
  ShiftedQuadratic(std::size_t dim, std::uint64_t seed);
  std::optional<std::vector<double>> optimum() const override { return shift_; }

 protected:
  double compute(std::span<const double> x, std::span<double> grad) const override;

 private:
  std::vector<double> shift_;
};

std::unique_ptr<BenchmarkFunction> make_benchmark(int family_id, std::size_t dim, std::uint64_t seed);

/// Objective from its textual id:
///   F<k>:<D>:<seed>        benchmark family k
///   sphere:<D>
///   quadratic:<D>:<seed>   shifted quadratic family
///   protein:<PDB-ID>       AB off-lattice model of a built-in sequence
///   protein:<SEQUENCE>     AB off-lattice model of an explicit A/B string
/// Throws ConfigError on unknown ids.
std::unique_ptr<Objective> make_objective(std::string_view spec);

/// max_i |(f(x+h e_i) - f(x-h e_i)) / 2h - g_i| / max(1, |g_i|).
double finite_diff_oracle(const Objective& objective, std::span<const double> x, double h);

}  // namespace nasopt
