#include "checks.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

#include "nasopt/autodiff.hpp"
#include "nasopt/network.hpp"
#include "nasopt/objectives.hpp"
#include "nasopt/protein.hpp"
#include "nasopt/surrogate.hpp"
#include "oracles.hpp"

namespace checks {

using namespace nasopt;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

using LayerFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Max relative error between tape gradients of sum(c * layer(leaves)) and
/// central differences of the same forward.
double layer_fd(const LayerFn& fn, std::vector<Tensor> leaves, Rng& rng) {
  Tape probe;
  std::vector<Var> pv;
  for (const auto& t : leaves) pv.push_back(probe.constant(t));
  const Shape out_shape = probe.value(fn(probe, pv)).shape();
  const Tensor c = random_tensor(out_shape, rng);

  auto loss = [&](const std::vector<Tensor>& ls) {
    Tape t;
    std::vector<Var> vs;
    for (const auto& l : ls) vs.push_back(t.constant(l));
    const Tensor& y = t.value(fn(t, vs));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += c[i] * y[i];
    return s;
  };

  Tape t;
  std::vector<Var> vs;
  for (const auto& l : leaves) vs.push_back(t.variable(l));
  const Var y = fn(t, vs);
  t.backward(ops::external_scalar(t, y, loss(leaves), c));

  double worst = 0.0;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const Tensor g = t.grad(vs[k]);
    std::vector<Tensor> work = leaves;
    auto f = [&](std::span<const double> x) {
      std::copy(x.begin(), x.end(), work[k].data().begin());
      return loss(work);
    };
    const auto fd = oracle::central_diff(f, leaves[k].data(), 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, oracle::rel_err(g[i], fd[i]));
  }
  return worst;
}

double layer_gradients(int points, Rng& rng, std::string& where) {
  double worst = 0.0;
  auto track = [&](const char* name, double e) {
    if (e > worst) {
      worst = e;
      where = name;
    }
  };
  std::uniform_int_distribution<int> pick(0, 1);
  for (int p = 0; p < points; ++p) {
    const std::size_t stride = 1 + pick(rng), pad = pick(rng);
    track("conv2d", layer_fd(
                        [=](Tape& t, const std::vector<Var>& v) { return ops::conv2d(t, v[0], v[1], v[2], stride, pad); },
                        {random_tensor({2, 2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
                        rng));
    track("max_pool2d",
          layer_fd([=](Tape& t, const std::vector<Var>& v) { return ops::max_pool2d(t, v[0], 3, stride); },
                   {random_tensor({2, 2, 7, 7}, rng)}, rng));
    track("avg_pool2d",
          layer_fd([=](Tape& t, const std::vector<Var>& v) { return ops::avg_pool2d(t, v[0], 3, stride); },
                   {random_tensor({2, 2, 7, 7}, rng)}, rng));
    track("dense", layer_fd([](Tape& t, const std::vector<Var>& v) { return ops::dense(t, v[0], v[1], v[2]); },
                            {random_tensor({3, 5}, rng), random_tensor({5, 4}, rng), random_tensor({4}, rng)}, rng));
    track("concat", layer_fd([](Tape& t, const std::vector<Var>& v) { return ops::concat_channels(t, v); },
                             {random_tensor({2, 1, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)}, rng));
    track("add", layer_fd([](Tape& t, const std::vector<Var>& v) { return ops::add(t, v); },
                          {random_tensor({2, 2, 4, 4}, rng), random_tensor({2, 2, 4, 4}, rng),
                           random_tensor({2, 2, 4, 4}, rng)},
                          rng));
    track("crop", layer_fd([](Tape& t, const std::vector<Var>& v) { return ops::crop(t, v[0], 1, 2, 3, 2); },
                           {random_tensor({2, 2, 5, 5}, rng)}, rng));
    track("flatten", layer_fd([](Tape& t, const std::vector<Var>& v) { return ops::flatten(t, v[0]); },
                              {random_tensor({2, 2, 3, 3}, rng)}, rng));
    const std::vector<double> lo{-5.0, 0.0, -100.0}, hi{5.0, 1.0, 100.0};
    track("scaled_tanh",
          layer_fd([&](Tape& t, const std::vector<Var>& v) { return ops::scaled_tanh(t, v[0], lo, hi); },
                   {random_tensor({4, 3}, rng, -2.0, 2.0)}, rng));
  }
  return worst;
}

double objective_fd(const Objective& f, int points, Rng& rng, double margin) {
  double worst = 0.0;
  const std::size_t d = f.dimension();
  std::vector<double> x(d), g(d);
  for (int p = 0; p < points; ++p) {
    do {
      for (std::size_t i = 0; i < d; ++i) {
        std::uniform_real_distribution<double> u(f.bounds().lo[i] * 0.99, f.bounds().hi[i] * 0.99);
        x[i] = u(rng);
      }
    } while (f.near_nonsmooth(x, margin));
    f.value_and_gradient(x, g);
    const auto fd = oracle::central_diff([&](std::span<const double> z) { return f.value(z); }, x, 1e-5);
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, oracle::rel_err(g[i], fd[i]));
  }
  return worst;
}

/// Self-avoiding random conformation: each angle is redrawn until the new
/// monomer keeps `clearance` from all earlier ones, restarting the chain when
/// it gets trapped. Closer contacts put the energy near 1e14, where central
/// differences are pure rounding noise.
std::vector<double> open_conformation(std::size_t length, double clearance, Rng& rng) {
  std::uniform_real_distribution<double> u(-179.0, 179.0);
  for (;;) {
    std::vector<double> angles;
    std::vector<std::array<double, 2>> p{{0.0, 0.0}, {1.0, 0.0}};
    double heading = 0.0;
    bool trapped = false;
    while (p.size() < length && !trapped) {
      trapped = true;
      for (int attempt = 0; attempt < 200; ++attempt) {
        const double a = u(rng);
        const double h = heading + a * std::numbers::pi / 180.0;
        const std::array<double, 2> q{p.back()[0] + std::cos(h), p.back()[1] + std::sin(h)};
        bool clear = true;
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
          if (std::hypot(q[0] - p[i][0], q[1] - p[i][1]) < clearance) clear = false;
        }
        if (clear) {
          angles.push_back(a);
          heading = h;
          p.push_back(q);
          trapped = false;
          break;
        }
      }
    }
    if (!trapped) return angles;
  }
}

}  // namespace

Result shape_arithmetic() {
  Result r{"shape arithmetic (5x5 -> conv 2x2 -> max-pool 2x2 -> R^9)", false, ""};
  Network net;
  const auto in = net.input(1, 5, 5);
  const auto c = net.conv(in, 1, 2, 1, "conv");
  const auto m = net.max_pool(c, 2, 1);
  const auto f = net.flatten(m);
  const long conv_side = oracle::output_size(5, 2, 1, 0);
  const long pool_side = oracle::output_size(conv_side, 2, 1, 0);
  net.init_weights(1);
  const Tensor y = net.solutions(Tensor({1, 1, 5, 5}, 0.5));
  std::ostringstream d;
  d << "conv " << shape_string(net.layer(c).shape) << ", pool " << shape_string(net.layer(m).shape) << ", features "
    << net.layer(f).shape[0] << ", forward " << shape_string(y.shape());
  r.detail = d.str();
  r.passed = conv_side == 4 && pool_side == 3 && net.layer(c).shape == Shape{1, 4, 4} &&
             net.layer(m).shape == Shape{1, 3, 3} && net.layer(f).shape == Shape{9} && y.shape() == Shape{1, 9};
  return r;
}

Result parameter_count() {
  Result r{"parameter count (10 filters of 5x5 plus biases)", false, ""};
  Network net;
  const auto in = net.input(1, 12, 12);
  const auto c = net.conv(in, 10, 5, 1, "conv");
  const std::size_t n = net.layer_parameter_count(c);
  r.detail = std::to_string(n) + " parameters";
  r.passed = n == 10 * 5 * 5 + 10 && n == 260;
  return r;
}

Result space_cardinality() {
  Result r{"search-space cardinality", false, ""};
  std::uint64_t expect = 1;
  for (int i = 0; i < kEdgeGenes; ++i) expect *= 2;
  for (int i = 0; i < kOpGenes; ++i) expect *= 3;
  expect *= 2;
  std::uint64_t product = 1;
  for (int a : gene_alphabets()) product *= static_cast<std::uint64_t>(a);
  r.detail = std::to_string(space_size());
  r.passed = space_size() == expect && expect == 1019215872ULL && product == expect;
  return r;
}

Result gradients(int points, std::uint64_t seed) {
  Result r{"gradients vs central differences", false, ""};
  Rng rng(seed);
  std::string where;
  const double layers = layer_gradients(points, rng, where);

  double objectives = 0.0;
  std::string worst_obj;
  std::vector<std::unique_ptr<Objective>> fs;
  for (Family fam : benchmark_families()) fs.push_back(std::make_unique<BenchmarkFunction>(fam, 10, seed + 1));
  fs.push_back(make_objective("sphere:10"));
  fs.push_back(make_objective("quadratic:10:3"));
  for (const auto& f : fs) {
    const double e = objective_fd(*f, points, rng, 1e-3);
    if (e > objectives) {
      objectives = e;
      worst_obj = f->id();
    }
  }

  double proteins = 0.0;
  for (const auto& inst : builtin_proteins()) {
    ProteinObjective f("protein:" + inst.id, ProteinModel(inst.sequence));
    const std::size_t d = f.dimension();
    std::vector<double> g(d);
    for (int p = 0; p < points; ++p) {
      const auto x = open_conformation(inst.sequence.size(), 0.8, rng);
      f.value_and_gradient(x, g);
      const auto fd = oracle::central_diff([&](std::span<const double> z) { return f.value(z); }, x, 1e-5);
      for (std::size_t i = 0; i < d; ++i) proteins = std::max(proteins, oracle::rel_err(g[i], fd[i]));
    }
  }
  r.detail = "layers " + fmt("%.2e", layers) + " (worst " + where + "), objectives " + fmt("%.2e", objectives) +
             " (worst " + worst_obj + "), proteins " + fmt("%.2e", proteins);
  r.passed = layers < 1e-4 && objectives < 1e-4 && proteins < 1e-5;
  return r;
}

Result rbf_surrogate(int fits, std::uint64_t seed) {
  Result r{"cubic RBF interpolation and 1-D cubic recovery", false, ""};
  Rng rng(seed);
  // Random 1-D centers cluster (spacing ~ 1/N^2) and the system's condition
  // number passes 1/eps, past what refinement on a double LU can recover, so
  // random fits use d >= 2; the 1-D case is covered by the cubic recovery below.
  std::uniform_int_distribution<int> nd(10, 100), dd(2, 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_center = 0.0;
  int failed = 0;
  for (int k = 0; k < fits; ++k) {
    const int n = nd(rng);
    const int d = std::min(dd(rng), n - 2);
    std::vector<std::vector<double>> c(n, std::vector<double>(d));
    std::vector<double> y(n);
    for (auto& row : c)
      for (double& v : row) v = u(rng);
    for (double& v : y) v = 10.0 * u(rng);
    const auto s = RbfSurrogate::fit(c, y);
    if (!s) {
      ++failed;
      continue;
    }
    for (int i = 0; i < n; ++i) worst_center = std::max(worst_center, std::abs(s->predict(c[i]) - y[i]));
  }
  // Cubic generator on 41 equispaced centers of [-1, 1], held-out points in
  // the interior half.
  auto cubic = [](double x) { return 0.3 - 1.2 * x + 0.7 * x * x + 2.0 * x * x * x; };
  std::vector<std::vector<double>> c;
  std::vector<double> y;
  for (int i = 0; i <= 40; ++i) {
    const double x = -1.0 + 2.0 * i / 40.0;
    c.push_back({x});
    y.push_back(cubic(x));
  }
  const auto s = RbfSurrogate::fit(c, y);
  double worst_cubic = s ? 0.0 : INFINITY;
  if (s) {
    for (int i = 0; i < 50; ++i) {
      const double x = -0.5 + (i + 0.5) / 50.0;
      worst_cubic = std::max(worst_cubic, std::abs(s->predict(std::vector<double>{x}) - cubic(x)));
    }
  }
  const double kernel = cubic_kernel(2.0);
  r.detail = "center residual " + fmt("%.2e", worst_center) + " over " + std::to_string(fits) + " fits (" +
             std::to_string(failed) + " unavailable), cubic held-out error " + fmt("%.2e", worst_cubic) +
             ", phi(2) = " + fmt("%g", kernel);
  r.passed = failed == 0 && worst_center < 1e-8 && worst_cubic < 1e-6 && kernel == 8.0;
  return r;
}

Result penalty() {
  Result r{"penalty cases", false, ""};
  const PenaltyConfig cfg;
  CellGraph ten;
  // path 1-2-7 plus eight more edges: 10 in total
  const int pairs[][2] = {{1, 2}, {2, 7}, {1, 3}, {3, 7}, {1, 4}, {4, 7}, {1, 5}, {5, 7}, {1, 6}, {6, 7}};
  for (const auto& p : pairs) ten.set_edge(p[0], p[1], true);
  CellGraph empty;
  CellGraph path;
  path.set_edge(1, 2, true);
  path.set_edge(2, 7, true);
  const auto a = validate(ten, cfg), b = validate(empty, cfg), c = validate(path, cfg);
  r.detail = "10 edges -> " + fmt("%g", a.penalty) + ", edgeless -> " + fmt("%g", b.penalty) + ", path -> " +
             fmt("%g", c.penalty);
  r.passed = a.edge_count == 10 && a.penalty == cfg.eta1 && b.penalty == 6 * cfg.eta2 && c.penalty == 0.0;
  return r;
}

Result isomorphism() {
  Result r{"isomorphism classes on the 4-node space", false, ""};
  const auto all = enumerate_reduced(4);
  std::set<std::string> keys;
  for (const auto& g : all) keys.insert(canonical_form(decode(g)));
  const std::size_t oracle_count = oracle::iso_class_count(all);
  r.detail = std::to_string(all.size()) + " genotypes, " + std::to_string(keys.size()) + " keys, oracle " +
             std::to_string(oracle_count) + " classes";
  r.passed = keys.size() == oracle_count;
  return r;
}

Result protein_oracle(int conformations, std::uint64_t seed) {
  Result r{"protein energy vs coordinate oracle", false, ""};
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-180.0, 180.0);
  double worst = 0.0;
  for (const auto& inst : builtin_proteins()) {
    const ProteinModel model(inst.sequence);
    std::vector<double> x(model.angle_count());
    for (int k = 0; k < conformations; ++k) {
      for (double& v : x) v = u(rng);
      const double got = protein_energy(model, x).value;
      const double want = oracle::protein_energy(inst.sequence, x);
      worst = std::max(worst, std::abs(got - want) / std::abs(want));
    }
  }
  const double aaa = protein_energy(ProteinModel("AAA"), std::vector<double>{0.0}).value;
  const double exact = std::ldexp(1.0, -12) - std::ldexp(1.0, -6);
  r.detail = "max relative error " + fmt("%.2e", worst) + ", AAA straight " + fmt("%.17g", aaa);
  r.passed = worst < 1e-10 && aaa == exact;
  return r;
}

std::vector<Result> verify_suite() {
  return {shape_arithmetic(), parameter_count(), space_cardinality(), penalty(),
          gradients(3, 11),   rbf_surrogate(10, 12), isomorphism(),   protein_oracle(10, 13)};
}

}  // namespace checks
