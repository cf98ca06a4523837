#include <cmath>
#include <unordered_set>

#include "doctest.h"
#include "helpers.hpp"
#include "nasopt/surrogate.hpp"

using namespace nasopt;

TEST_SUITE("surrogate") {

TEST_CASE("kernel and interpolation") {
  CHECK(cubic_kernel(2.0) == 8.0);
  Rng rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int fit = 0; fit < 20; ++fit) {
    const std::size_t n = 10 + fit * 4, d = 2 + fit % 4;
    std::vector<std::vector<double>> c(n, std::vector<double>(d));
    std::vector<double> y(n);
    for (auto& row : c)
      for (double& v : row) v = u(rng);
    for (double& v : y) v = std::exp(3.0 * u(rng));
    const auto s = RbfSurrogate::fit(c, y);
    REQUIRE(s.has_value());
    CHECK(s->size() == n);
    CHECK(s->dimension() == d);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(s->predict(c[i]) - y[i]) < 1e-8);
    // side condition P^T lambda = 0
    double total = 0.0;
    for (double l : s->weights()) total += l;
    CHECK(std::abs(total) < 1e-8);
  }
}

TEST_CASE("too few centers or a singular system") {
  CHECK_FALSE(RbfSurrogate::fit({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {1.0, 2.0, 3.0}).has_value());
  // duplicated centers make the plain system singular
  const auto s = RbfSurrogate::fit({{0.0}, {0.0}, {1.0}, {2.0}}, {1.0, 1.0, 2.0, 0.0}, 1e-8);
  if (s) {
    CHECK(s->used_ridge());
    CHECK(std::abs(s->predict(std::vector<double>{1.0}) - 2.0) < 1e-6);
  }
}

TEST_CASE("linear data is reproduced by the tail") {
  std::vector<std::vector<double>> c;
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) {
    const double a = i * 0.37 - 1.0, b = std::cos(i * 1.3);
    c.push_back({a, b});
    y.push_back(2.0 - 3.0 * a + 0.5 * b);
  }
  const auto s = RbfSurrogate::fit(c, y);
  REQUIRE(s);
  CHECK(std::abs(s->predict(std::vector<double>{0.3, -0.2}) - (2.0 - 0.9 - 0.1)) < 1e-9);
  for (double l : s->weights()) CHECK(std::abs(l) < 1e-9);
}

TEST_CASE("features and symlog") {
  const Genotype g = Genotype::parse("E:100000000010000000000|O:20100|B:1");
  const auto f = genotype_features(g);
  REQUIRE(f.size() == 27);
  CHECK(f[0] == 1.0);
  CHECK(f[21] == 1.0);
  CHECK(f[22] == 0.0);
  CHECK(f[23] == 0.5);
  CHECK(f[26] == 1.0);
  CHECK(symlog(0.0) == 0.0);
  CHECK(symlog(9.0) == doctest::Approx(1.0));
  CHECK(symlog(-99.0) == doctest::Approx(-2.0));
}

TEST_CASE("feature weights") {
  Rng rng(42);
  std::vector<Genotype> samples;
  std::vector<double> costs;
  for (int k = 0; k < 200; ++k) {
    const Genotype g = sample_uniform(rng);
    samples.push_back(g);
    costs.push_back(g.edges[3] ? 1.0 : 100.0);
  }
  const auto w = feature_weights(samples, costs);
  double sum = 0.0;
  for (double v : w) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::max_element(w.begin(), w.end()) - w.begin() == 3);

  const std::vector<Genotype> same(8, samples[0]);
  const std::vector<double> c8{1, 2, 3, 4, 5, 6, 7, 8};
  for (double v : feature_weights(same, c8)) CHECK(v == doctest::Approx(1.0 / 27.0).epsilon(1e-12));
  for (double v : feature_weights(std::span(samples).first(3), std::span(costs).first(3))) {
    CHECK(v == doctest::Approx(1.0 / 27.0).epsilon(1e-12));
  }
}

TEST_CASE("perturbation concentrates on heavy genes") {
  const MacConfig cfg;
  const Genotype inc = Genotype::parse("E:100000000010000000000|O:00000|B:0");
  std::vector<double> w(27, 0.0);
  w[3] = 1.0;
  Rng rng(43);
  int only_three = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto a = inc.genes(), b = perturb(inc, w, cfg, rng).genes();
    bool others = false;
    for (int i = 0; i < 27; ++i) others = others || (i != 3 && a[i] != b[i]);
    only_three += a[3] != b[3] && !others;
  }
  CHECK(only_three > 0.99 * n);
}

TEST_CASE("equal weights mutate every gene equally often") {
  const MacConfig cfg;
  const Genotype inc = Genotype::parse("E:010101010101010101010|O:01201|B:1");
  const std::vector<double> w(27, 1.0 / 27.0);
  Rng rng(44);
  std::vector<double> counts(27, 0.0);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto a = inc.genes(), b = perturb(inc, w, cfg, rng).genes();
    bool any = false;
    for (int i = 0; i < 27; ++i) {
      counts[i] += a[i] != b[i];
      any = any || a[i] != b[i];
    }
    CHECK(any);
  }
  double mean = 0.0;
  for (double c : counts) mean += c / 27.0;
  const double p = mean / n, sigma = std::sqrt(n * p * (1.0 - p));
  for (double c : counts) CHECK(std::abs(c - mean) < 3.0 * sigma);
}

TEST_CASE("proposal is the surrogate argmin over novel buildable trials") {
  BuildConfig build;
  build.cells = 1;
  build.channels = 2;
  build.input_size = 12;
  build.bounds = Bounds::uniform(2, -1.0, 1.0);
  Rng rng(45);
  std::vector<std::vector<double>> centers;
  std::vector<double> values;
  std::vector<Genotype> gs;
  while (gs.size() < 40) {
    const Genotype g = sample_uniform(rng);
    gs.push_back(g);
    centers.push_back(genotype_features(g));
    values.push_back(symlog(static_cast<double>(rng() % 1000)));
  }
  const auto s = RbfSurrogate::fit(centers, values);
  REQUIRE(s);
  const Genotype inc = Genotype::parse(testing::kConvPath);
  std::unordered_set<std::string> seen{dedup_key(inc)};
  const std::vector<double> w(27, 1.0 / 27.0);
  MacConfig cfg;
  cfg.trials = 500;

  Rng a(46), b(46);
  const auto got = mac_propose(inc, *s, w, seen, build, cfg, a);
  std::optional<Genotype> best;
  double best_v = INFINITY;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const Genotype trial = perturb(inc, w, cfg, b);
    if (!buildable(trial, build) || seen.contains(dedup_key(trial))) continue;
    const double v = s->predict(genotype_features(trial));
    if (v < best_v) {
      best_v = v;
      best = trial;
    }
  }
  REQUIRE(got.has_value());
  REQUIRE(best.has_value());
  CHECK(*got == *best);
  CHECK(buildable(*got, build));
  CHECK_FALSE(seen.contains(dedup_key(*got)));

  cfg.trials = 0;
  CHECK_FALSE(mac_propose(inc, *s, w, seen, build, cfg, a).has_value());
}

}  // TEST_SUITE
