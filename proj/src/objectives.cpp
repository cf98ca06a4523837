#include "nasopt/objectives.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "nasopt/errors.hpp"
#include "nasopt/protein.hpp"
#include "nasopt/rng.hpp"

namespace nasopt {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSchwefelOffset = 420.9687462275036;
constexpr double kSchwefelConstant = 4.189828872724338e+02;

double family_scale(Family f) {
  switch (f) {
    case Family::rosenbrock: return 2.048 / 100.0;
    case Family::rastrigin:
    case Family::noncontinuous_rastrigin: return 5.12 / 100.0;
    case Family::lunacek_bi_rastrigin: return 2.0 * 10.0 / 100.0;
    case Family::schwefel: return 1000.0 / 100.0;
    default: return 1.0;
  }
}

struct LunacekTerms {
  double a, b, s, mu0, mu1;
};

LunacekTerms lunacek_terms(std::span<const double> y) {
  const double dim = static_cast<double>(y.size());
  LunacekTerms t{};
  t.mu0 = 2.5;
  t.s = 1.0 - 1.0 / (2.0 * std::sqrt(dim + 20.0) - 8.2);
  t.mu1 = -std::sqrt((t.mu0 * t.mu0 - 1.0) / t.s);
  t.a = 0.0;
  double sb = 0.0;
  for (double v : y) {
    t.a += v * v;
    const double w = v + t.mu0 - t.mu1;
    sb += w * w;
  }
  t.b = dim + t.s * sb;
  return t;
}

double noncontinuous_round(double y) { return std::abs(y) <= 0.5 ? y : std::floor(2.0 * y + 0.5) / 2.0; }

}  // namespace

Bounds Bounds::uniform(std::size_t dim, double lo, double hi) {
  return Bounds{std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
}

void Bounds::validate() const {
  if (lo.size() != hi.size()) throw ConfigError("bounds: lo/hi length mismatch");
  if (lo.empty()) throw ConfigError("bounds: dimension must be >= 1");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] < hi[i])) throw ConfigError("bounds: lo must be < hi in coordinate " + std::to_string(i));
  }
}

// ----------------------------------------------------------------- Objective

Objective::Objective(std::string id, Bounds bounds) : id_(std::move(id)), bounds_(std::move(bounds)) {
  bounds_.validate();
}

void Objective::check_dimension(std::span<const double> x) const {
  if (x.size() != dimension()) {
    throw ShapeError("objective " + id_ + " expects dimension " + std::to_string(dimension()) + ", got " +
                     std::to_string(x.size()));
  }
}

double Objective::value(std::span<const double> x) const {
  check_dimension(x);
  evals_.fetch_add(1, std::memory_order_relaxed);
  return compute(x, {});
}

double Objective::value_and_gradient(std::span<const double> x, std::span<double> grad) const {
  check_dimension(x);
  if (grad.size() != x.size()) throw ShapeError("gradient buffer size mismatch for " + id_);
  evals_.fetch_add(1, std::memory_order_relaxed);
  return compute(x, grad);
}

// ---------------------------------------------------------------- benchmarks

std::span<const Family> benchmark_families() {
  static constexpr Family kAll[] = {Family::bent_cigar,
                                    Family::zakharov,
                                    Family::rosenbrock,
                                    Family::rastrigin,
                                    Family::expanded_schaffer,
                                    Family::lunacek_bi_rastrigin,
                                    Family::noncontinuous_rastrigin,
                                    Family::levy,
                                    Family::schwefel};
  return kAll;
}

std::string family_name(Family f) {
  switch (f) {
    case Family::bent_cigar: return "bent-cigar";
    case Family::zakharov: return "zakharov";
    case Family::rosenbrock: return "rosenbrock";
    case Family::rastrigin: return "rastrigin";
    case Family::expanded_schaffer: return "expanded-schaffer";
    case Family::lunacek_bi_rastrigin: return "lunacek-bi-rastrigin";
    case Family::noncontinuous_rastrigin: return "noncontinuous-rastrigin";
    case Family::levy: return "levy";
    case Family::schwefel: return "schwefel";
  }
  return "unknown";
}

BenchmarkFunction::BenchmarkFunction(Family family, std::size_t dim, std::uint64_t seed)
    : Objective("F" + std::to_string(static_cast<int>(family)) + ":" + std::to_string(dim) + ":" +
                    std::to_string(seed),
                Bounds::uniform(dim, -100.0, 100.0)),
      family_(family) {
  if (dim < 2) throw ConfigError("benchmark dimension must be >= 2");
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(family)));
  std::uniform_real_distribution<double> shift_dist(-80.0, 80.0);
  shift_.resize(dim);
  for (auto& o : shift_) o = shift_dist(rng);

  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd a(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) a(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < dim; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  rotation_.resize(dim * dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) rotation_[i * dim + j] = q(i, j);
  }
}

BenchmarkFunction::BenchmarkFunction(Family family, std::vector<double> shift, std::vector<double> rotation)
    : Objective("F" + std::to_string(static_cast<int>(family)) + ":" + std::to_string(shift.size()) + ":custom",
                Bounds::uniform(shift.size(), -100.0, 100.0)),
      family_(family),
      shift_(std::move(shift)),
      rotation_(std::move(rotation)) {
  if (shift_.size() < 2) throw ConfigError("benchmark dimension must be >= 2");
  if (rotation_.size() != shift_.size() * shift_.size()) throw ShapeError("rotation must be D x D");
}

std::vector<double> BenchmarkFunction::transform(std::span<const double> x) const {
  const std::size_t dim = shift_.size();
  std::vector<double> d(dim), z(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) d[j] = x[j] - shift_[j];
  for (std::size_t i = 0; i < dim; ++i) {
    const double* row = rotation_.data() + i * dim;
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) s += row[j] * d[j];
    z[i] = s;
  }
  return z;
}

double BenchmarkFunction::base(std::span<const double> z, std::span<double> gz) const {
  const std::size_t dim = z.size();
  const double sc = family_scale(family_);
  std::vector<double> y(dim);
  for (std::size_t i = 0; i < dim; ++i) y[i] = sc * z[i];
  const bool want = !gz.empty();
  std::vector<double> gy(want ? dim : 0, 0.0);
  double f = 0.0;

  switch (family_) {
    case Family::bent_cigar: {
      f = y[0] * y[0];
      if (want) gy[0] = 2.0 * y[0];
      for (std::size_t i = 1; i < dim; ++i) {
        f += 1e6 * y[i] * y[i];
        if (want) gy[i] = 2e6 * y[i];
      }
      break;
    }
    case Family::zakharov: {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        s1 += y[i] * y[i];
        s2 += 0.5 * static_cast<double>(i + 1) * y[i];
      }
      f = s1 + s2 * s2 + s2 * s2 * s2 * s2;
      if (want) {
        const double ds2 = 2.0 * s2 + 4.0 * s2 * s2 * s2;
        for (std::size_t i = 0; i < dim; ++i) gy[i] = 2.0 * y[i] + ds2 * 0.5 * static_cast<double>(i + 1);
      }
      break;
    }
    case Family::rosenbrock: {
      for (std::size_t i = 0; i + 1 < dim; ++i) {
        const double u = y[i] + 1.0, v = y[i + 1] + 1.0;
        const double t = u * u - v;
        f += 100.0 * t * t + (u - 1.0) * (u - 1.0);
        if (want) {
          gy[i] += 400.0 * u * t + 2.0 * (u - 1.0);
          gy[i + 1] += -200.0 * t;
        }
      }
      break;
    }
    case Family::rastrigin: {
      for (std::size_t i = 0; i < dim; ++i) {
        f += y[i] * y[i] - 10.0 * std::cos(2.0 * kPi * y[i]) + 10.0;
        if (want) gy[i] = 2.0 * y[i] + 20.0 * kPi * std::sin(2.0 * kPi * y[i]);
      }
      break;
    }
    case Family::noncontinuous_rastrigin: {
      for (std::size_t i = 0; i < dim; ++i) {
        const double r = noncontinuous_round(y[i]);
        f += r * r - 10.0 * std::cos(2.0 * kPi * r) + 10.0;
        // rounded coordinates are locally constant
        if (want) gy[i] = std::abs(y[i]) <= 0.5 ? 2.0 * r + 20.0 * kPi * std::sin(2.0 * kPi * r) : 0.0;
      }
      break;
    }
    case Family::expanded_schaffer: {
      for (std::size_t i = 0; i < dim; ++i) {
        const std::size_t j = (i + 1) % dim;
        const double r2 = y[i] * y[i] + y[j] * y[j];
        const double r = std::sqrt(r2);
        const double sn = std::sin(r);
        const double den = 1.0 + 0.001 * r2;
        f += 0.5 + (sn * sn - 0.5) / (den * den);
        if (want) {
          const double ds = r > 0 ? std::sin(2.0 * r) / (2.0 * r) : 1.0;
          const double dg = ds / (den * den) - 0.002 * (sn * sn - 0.5) / (den * den * den);
          gy[i] += dg * 2.0 * y[i];
          gy[j] += dg * 2.0 * y[j];
        }
      }
      break;
    }
    case Family::lunacek_bi_rastrigin: {
      const LunacekTerms t = lunacek_terms(y);
      const bool first = t.a < t.b;
      f = first ? t.a : t.b;
      for (std::size_t i = 0; i < dim; ++i) {
        f += 10.0 * (1.0 - std::cos(2.0 * kPi * y[i]));
        if (want) {
          gy[i] = (first ? 2.0 * y[i] : 2.0 * t.s * (y[i] + t.mu0 - t.mu1)) + 20.0 * kPi * std::sin(2.0 * kPi * y[i]);
        }
      }
      break;
    }
    case Family::levy: {
      std::vector<double> w(dim);
      for (std::size_t i = 0; i < dim; ++i) w[i] = 1.0 + y[i] / 4.0;
      const double s0 = std::sin(kPi * w[0]);
      f = s0 * s0;
      if (want) gy[0] += kPi * std::sin(2.0 * kPi * w[0]) / 4.0;
      for (std::size_t i = 0; i + 1 < dim; ++i) {
        const double a = w[i] - 1.0;
        const double sv = std::sin(kPi * w[i] + 1.0);
        f += a * a * (1.0 + 10.0 * sv * sv);
        if (want) {
          gy[i] += (2.0 * a * (1.0 + 10.0 * sv * sv) + a * a * 10.0 * kPi * std::sin(2.0 * (kPi * w[i] + 1.0))) / 4.0;
        }
      }
      const double a = w[dim - 1] - 1.0;
      const double sl = std::sin(2.0 * kPi * w[dim - 1]);
      f += a * a * (1.0 + sl * sl);
      if (want) {
        gy[dim - 1] += (2.0 * a * (1.0 + sl * sl) + a * a * 2.0 * kPi * std::sin(4.0 * kPi * w[dim - 1])) / 4.0;
      }
      break;
    }
    case Family::schwefel: {
      const double dd = static_cast<double>(dim);
      f = kSchwefelConstant * dd;
      for (std::size_t i = 0; i < dim; ++i) {
        const double u = y[i] + kSchwefelOffset;
        double c = 0.0, dc = 0.0;
        if (u > 500.0) {
          const double q = 500.0 - std::fmod(u, 500.0);
          const double sq = std::sqrt(q);
          const double p = (u - 500.0) / 100.0;
          c = -q * std::sin(sq) + p * p / dd;
          dc = std::sin(sq) + 0.5 * sq * std::cos(sq) + 2.0 * p / (100.0 * dd);
        } else if (u < -500.0) {
          const double q = 500.0 - std::fmod(std::abs(u), 500.0);
          const double sq = std::sqrt(q);
          const double p = (u + 500.0) / 100.0;
          c = q * std::sin(sq) + p * p / dd;
          dc = std::sin(sq) + 0.5 * sq * std::cos(sq) + 2.0 * p / (100.0 * dd);
        } else {
          const double sq = std::sqrt(std::abs(u));
          c = -u * std::sin(sq);
          dc = -std::sin(sq) - 0.5 * sq * std::cos(sq);
        }
        f += c;
        if (want) gy[i] = dc;
      }
      break;
    }
  }
  if (want) {
    for (std::size_t i = 0; i < dim; ++i) gz[i] = sc * gy[i];
  }
  return f;
}

double BenchmarkFunction::compute(std::span<const double> x, std::span<double> grad) const {
  const std::vector<double> z = transform(x);
  if (grad.empty()) return base(z, {});
  const std::size_t dim = z.size();
  std::vector<double> gz(dim);
  const double f = base(z, gz);
  // grad = R^T gz
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    const double* row = rotation_.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) grad[j] += row[j] * gz[i];
  }
  return f;
}

bool BenchmarkFunction::near_nonsmooth(std::span<const double> x, double margin) const {
  const std::vector<double> z = transform(x);
  const double sc = family_scale(family_);
  // A coordinate step of h moves every z_i by at most h.
  const double reach = sc * margin;
  switch (family_) {
    case Family::noncontinuous_rastrigin:
      for (double zi : z) {
        const double y2 = 2.0 * sc * zi;
        const double to_half = std::abs(y2 - (std::floor(y2) + 0.5));
        if (std::abs(std::abs(y2) - 1.0) < 2.0 * reach || (std::abs(y2) > 0.5 && to_half < 2.0 * reach)) {
          return true;
        }
      }
      return false;
    case Family::schwefel:
      for (double zi : z) {
        const double u = sc * zi + kSchwefelOffset;
        const double au = std::abs(u);
        if (au < reach) return true;
        if (au >= 500.0 - reach) {
          const double m = std::fmod(au, 500.0);
          if (m < reach || 500.0 - m < reach) return true;
        }
      }
      return false;
    case Family::lunacek_bi_rastrigin: {
      std::vector<double> y(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) y[i] = sc * z[i];
      const LunacekTerms t = lunacek_terms(y);
      double g2 = 0.0;
      for (double v : y) {
        const double d = 2.0 * v - 2.0 * t.s * (v + t.mu0 - t.mu1);
        g2 += d * d;
      }
      return std::abs(t.a - t.b) < margin * sc * std::sqrt(g2) * 4.0;
    }
    default:
      return false;
  }
}

std::unique_ptr<BenchmarkFunction> make_benchmark(int family_id, std::size_t dim, std::uint64_t seed) {
  for (Family f : benchmark_families()) {
    if (static_cast<int>(f) == family_id) return std::make_unique<BenchmarkFunction>(f, dim, seed);
  }
  throw ConfigError("unknown benchmark family F" + std::to_string(family_id));
}

// ------------------------------------------------------------ smooth extras

Sphere::Sphere(std::size_t dim) : Objective("sphere:" + std::to_string(dim), Bounds::uniform(dim, -100.0, 100.0)) {}

std::optional<std::vector<double>> Sphere::optimum() const { return std::vector<double>(dimension(), 0.0); }

double Sphere::compute(std::span<const double> x, std::span<double> grad) const {
  double f = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    f += x[i] * x[i];
    if (!grad.empty()) grad[i] = 2.0 * x[i];
  }
  return f;
}

ShiftedQuadratic::ShiftedQuadratic(std::size_t dim, std::uint64_t seed)
    : Objective("quadratic:" + std::to_string(dim) + ":" + std::to_string(seed), Bounds::uniform(dim, -100.0, 100.0)) {
  shift_.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const std::uint64_t bits = derive_seed(seed, i) >> 11;
    shift_[i] = -80.0 + 160.0 * (static_cast<double>(bits) * 0x1.0p-53);
  }
}

double ShiftedQuadratic::compute(std::span<const double> x, std::span<double> grad) const {
  double f = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - shift_[i];
    f += d * d;
    if (!grad.empty()) grad[i] = 2.0 * d;
  }
  return f;
}

// ------------------------------------------------------------------ factory

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::uint64_t parse_uint(std::string_view s, std::string_view spec) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("objective '" + std::string(spec) + "': '" + std::string(s) + "' is not an unsigned integer");
  }
  return v;
}

}  // namespace

std::unique_ptr<Objective> make_objective(std::string_view spec) {
  const auto parts = split(spec, ':');
  if (parts.size() == 3 && parts[0].size() >= 2 && parts[0][0] == 'F') {
    const auto family = parse_uint(parts[0].substr(1), spec);
    return make_benchmark(static_cast<int>(family), parse_uint(parts[1], spec), parse_uint(parts[2], spec));
  }
  if (parts.size() == 2 && parts[0] == "sphere") return std::make_unique<Sphere>(parse_uint(parts[1], spec));
  if (parts.size() == 3 && parts[0] == "quadratic") {
    return std::make_unique<ShiftedQuadratic>(parse_uint(parts[1], spec), parse_uint(parts[2], spec));
  }
  if (parts.size() == 2 && parts[0] == "protein") {
    const std::string_view key = parts[1];
    const bool raw = !key.empty() && key.find_first_not_of("AB") == std::string_view::npos;
    if (raw) return std::make_unique<ProteinObjective>(std::string(spec), ProteinModel(std::string(key)));
    const ProteinInstance& inst = find_protein(key);
    return std::make_unique<ProteinObjective>("protein:" + inst.id, ProteinModel(inst.sequence));
  }
  throw ConfigError("unknown objective '" + std::string(spec) + "'");
}

double finite_diff_oracle(const Objective& objective, std::span<const double> x, double h) {
  const std::size_t dim = x.size();
  std::vector<double> grad(dim);
  objective.value_and_gradient(x, grad);
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    probe[i] = x[i] + h;
    const double fp = objective.value(probe);
    probe[i] = x[i] - h;
    const double fm = objective.value(probe);
    probe[i] = x[i];
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(grad[i])));
  }
  return worst;
}

}  // namespace nasopt
