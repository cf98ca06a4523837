#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "nasopt/ensemble.hpp"
#include "nasopt/errors.hpp"
#include "nasopt/objectives.hpp"
#include "oracles.hpp"

using namespace nasopt;

namespace {

BuildConfig tiny(std::size_t dim) {
  BuildConfig c;
  c.cells = 1;
  c.channels = 2;
  c.input_size = 8;
  c.num_sol = 10;
  c.bounds = Bounds::uniform(dim, -100.0, 100.0);
  return c;
}

std::vector<Network> members(std::size_t k, std::size_t dim) {
  std::vector<Network> out;
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(build(Genotype::parse(testing::kConvPath), tiny(dim)));
    out.back().init_weights(100 + i);
  }
  return out;
}

bool is_head(const Parameter& p) { return p.name.rfind("head", 0) == 0; }

std::vector<Tensor> body_of(const Network& n) {
  std::vector<Tensor> b;
  for (const auto& p : n.params()) {
    if (!is_head(p)) b.push_back(p.value);
  }
  return b;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(a.data().data() + i, b.data().data() + i, sizeof(double)) != 0) return false;
  }
  return true;
}

bool same_bodies(const std::vector<std::vector<Tensor>>& before, const std::vector<Network>& ms) {
  for (std::size_t k = 0; k < ms.size(); ++k) {
    const auto after = body_of(ms[k]);
    if (after.size() != before[k].size()) return false;
    for (std::size_t i = 0; i < after.size(); ++i) {
      if (!bit_equal(after[i], before[k][i])) return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("ensemble") {
  TEST_CASE("bagging of identical members equals the member") {
    auto ms = members(1, 4);
    const InputBatch in = InputBatch::from_config(tiny(4));
    const Tensor x = in.slice(0, 10);
    const Tensor single = ms[0].logits(x);
    std::vector<Network> copies(4, ms[0]);
    const Tensor avg = bagging_logits(copies, x);
    CHECK(bit_equal(avg, single));
    CHECK(bit_equal(bagging_solutions(copies, x), ms[0].solutions(x)));
  }

  TEST_CASE("members emitting x and -x average to the bounds midpoint") {
    auto ms = members(1, 5);
    ms.push_back(ms[0]);
    for (auto& p : ms[1].params()) {
      if (is_head(p)) {
        for (double& v : p.value.data()) v = -v;
      }
    }
    const InputBatch in = InputBatch::from_config(tiny(5));
    const Tensor x = in.slice(0, 10);
    const Tensor a = ms[0].solutions(x), b = ms[1].solutions(x);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(-b[i]).epsilon(1e-12));
    const Tensor mid = bagging_solutions(ms, x);
    for (double v : mid.data()) CHECK(v == 0.0);

    std::vector<Network> asym = ms;
    for (auto& m : asym) m.replace_head(Bounds::uniform(5, 2.0, 10.0), 7);
    for (auto& p : asym[1].params()) {
      if (is_head(p)) {
        for (double& v : p.value.data()) v = -v;
      }
    }
    const Tensor shifted = bagging_solutions(asym, x);
    for (double v : shifted.data()) CHECK(v == doctest::Approx(6.0).epsilon(1e-15));
  }

  TEST_CASE("stacking at the averaging matrix reproduces bagging") {
    auto ms = members(3, 4);
    const InputBatch in = InputBatch::from_config(tiny(4));
    const Tensor x = in.slice(0, 10);
    const Tensor bag = bagging_logits(ms, x);
    StackingModel model(ms);
    Tape t;
    const auto pass = model.forward(t, x);
    CHECK(testing::max_abs_diff(t.value(pass.logits), bag) < 1e-12);
    CHECK(testing::max_abs_diff(t.value(pass.solutions), bagging_solutions(ms, x)) < 1e-12);
  }

  TEST_CASE("hybrid joint loss is the mean of member losses") {
    auto ms = members(4, 6);
    const auto f = make_objective("F5:6:1");
    const InputBatch in = InputBatch::from_config(tiny(6));
    const Tensor x = in.slice(2, 5);
    const HybridLoss h = hybrid_loss(ms, *f, x);
    double mean = 0.0;
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const Tensor s = ms[k].solutions(x);
      double sum = 0.0;
      for (std::size_t i = 0; i < 5; ++i) sum += f->value(std::span<const double>(s.data().data() + i * 6, 6));
      CHECK(h.member[k] == doctest::Approx(sum / 5).epsilon(1e-14));
      mean += sum / 5;
    }
    CHECK(std::abs(h.joint - mean / 4) <= 1e-12 * std::max(1.0, std::abs(mean)));
  }

  TEST_CASE("blend gradient matches central differences") {
    auto ms = members(3, 4);
    const auto f = make_objective("sphere:4");
    const InputBatch in = InputBatch::from_config(tiny(4));
    const Tensor x = in.slice(0, 3);
    StackingModel model(ms);
    Rng rng(3);
    // Move off the averaging matrix so every blend entry matters.
    for (auto idx : {model.weight(), model.bias()}) {
      for (double& v : model.params()[idx].value.data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    }
    auto loss = [&] {
      const Tensor s = [&] {
        Tape t;
        return Tensor(t.value(model.forward(t, x).solutions));
      }();
      double sum = 0.0;
      for (std::size_t i = 0; i < 3; ++i) sum += f->value(std::span<const double>(s.data().data() + i * 4, 4));
      return sum / 3;
    };
    Tape t;
    const auto pass = model.forward(t, x);
    const Tensor& s = t.value(pass.solutions);
    Tensor g(s.shape());
    double l = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      l += f->value_and_gradient(std::span<const double>(s.data().data() + i * 4, 4),
                                 std::span<double>(g.data().data() + i * 4, 4)) / 3;
    }
    for (double& v : g.data()) v /= 3;
    model.params().zero_grad();
    t.backward(ops::external_scalar(t, pass.solutions, l, g));
    double worst = 0.0;
    for (auto idx : {model.weight(), model.bias()}) {
      auto& p = model.params()[idx];
      const Tensor analytic = p.grad;
      const Tensor saved = p.value;
      const auto fd = oracle::central_diff(
          [&](std::span<const double> v) {
            std::copy(v.begin(), v.end(), p.value.data().begin());
            return loss();
          },
          saved.data(), 1e-5);
      p.value = saved;
      for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, oracle::rel_err(analytic[i], fd[i]));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("stacking training lowers the batch loss") {
    auto ms = members(3, 4);
    const auto f = make_objective("sphere:4");
    const InputBatch in = InputBatch::from_config(tiny(4));
    prepare_members(ms, *f, 0);
    StackingModel model(ms);
    auto batch_loss = [&] {
      Tape t;
      const Tensor s = t.value(model.forward(t, in.slice(0, in.count())).solutions);
      double sum = 0.0;
      for (std::size_t i = 0; i < in.count(); ++i) sum += f->value(std::span<const double>(s.data().data() + i * 4, 4));
      return sum / static_cast<double>(in.count());
    };
    const double before = batch_loss();
    AdamConfig adam;
    adam.learning_rate = 0.01;
    for (int step = 0; step < 200; ++step) {
      Tape t;
      const auto pass = model.forward(t, in.slice(step % in.count(), 1));
      const Tensor& s = t.value(pass.solutions);
      Tensor g(s.shape());
      const double l = f->value_and_gradient(s.data(), g.data());
      t.backward(ops::external_scalar(t, pass.solutions, l, g));
      adam_step(model.params(), adam);
    }
    CHECK(batch_loss() <= before);
  }

  TEST_CASE("scheme accounting and frozen bodies") {
    const auto f = make_objective("quadratic:6:0");
    const InputBatch in = InputBatch::from_config(tiny(6));
    for (auto scheme : {EnsembleScheme::bagging, EnsembleScheme::stacking, EnsembleScheme::hybrid}) {
      CAPTURE(scheme_name(scheme));
      auto ms = members(3, 4);
      std::vector<std::vector<Tensor>> before;
      for (const auto& m : ms) before.push_back(body_of(m));
      EnsembleConfig ec;
      ec.scheme = scheme;
      ec.cutoff = 100;
      ec.workers = 2;
      const std::uint64_t start = f->evaluations();
      const EnsembleReport rep = run_ensemble(ms, *f, in, ec);
      const std::uint64_t expected = scheme == EnsembleScheme::hybrid ? 300 : 100;
      CHECK(rep.train.evals == expected);
      CHECK(f->evaluations() - start == expected);
      CHECK(same_bodies(before, ms));
      CHECK(std::isfinite(rep.train.f_best));
      for (auto& m : ms) CHECK(m.dimension() == 6);
      REQUIRE(rep.train.x_best.size() == 6);
      for (double v : rep.train.x_best) CHECK(std::abs(v) <= 100.0);
      if (scheme != EnsembleScheme::stacking) {
        double worst_member = 0.0;
        for (double b : rep.member_best) worst_member = std::max(worst_member, b);
        CHECK(rep.train.f_best <= worst_member);
      }
      CHECK(rep.train.f_best <= rep.ensemble_best);
    }
  }

  TEST_CASE("bagging candidates stay inside the target bounds") {
    auto ms = members(3, 4);
    const auto f = make_objective("F3:10:2");
    prepare_members(ms, *f, 5);
    const InputBatch in = InputBatch::from_config(tiny(10));
    const Tensor s = bagging_solutions(ms, in.slice(0, in.count()));
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(s[i] >= f->bounds().lo[i % 10]);
      CHECK(s[i] <= f->bounds().hi[i % 10]);
    }
  }

  TEST_CASE("hybrid with one member is the frozen-body transfer") {
    const auto f = make_objective("quadratic:6:0");
    const InputBatch in = InputBatch::from_config(tiny(6));
    auto a = members(1, 4);
    Network b = a[0];
    EnsembleConfig ec;
    ec.scheme = EnsembleScheme::hybrid;
    ec.cutoff = 60;
    ec.seed = 9;
    const EnsembleReport h = hybrid(a, *f, in, ec);
    TransferConfig tc;
    tc.cutoff = 60;
    tc.seed = derive_seed(9, 0);
    const TrainReport t = transfer_nas1(b, *f, in, tc);
    CHECK(h.train.evals == t.evals);
    CHECK(h.train.f_best == t.f_best);
    CHECK(h.train.x_best == t.x_best);
    for (std::size_t i = 0; i < a[0].params().size(); ++i) CHECK(bit_equal(a[0].params()[i].value, b.params()[i].value));
  }

  TEST_CASE("mismatched members are rejected") {
    std::vector<Network> ms = members(1, 4);
    auto other = members(1, 5);
    ms.push_back(other[0]);
    const InputBatch in = InputBatch::from_config(tiny(4));
    CHECK_THROWS_AS(bagging_logits(ms, in.slice(0, 2)), BuildError);
    std::vector<Network> none;
    CHECK_THROWS_AS(bagging_logits(none, in.slice(0, 2)), ConfigError);
    CHECK_THROWS_AS(parse_scheme("boosting"), ConfigError);
  }

  TEST_CASE("manifest round trip and version check") {
    EnsembleManifest m;
    m.scheme = EnsembleScheme::stacking;
    m.members = {"a/model.json", "b/model.json"};
    m.objective = "quadratic:50:0";
    m.cutoff = 1234;
    m.seed = 17;
    const EnsembleManifest back = manifest_from_json(manifest_to_json(m));
    CHECK(back.scheme == m.scheme);
    CHECK(back.members == m.members);
    CHECK(back.objective == m.objective);
    CHECK(back.cutoff == m.cutoff);
    CHECK(back.seed == m.seed);

    Json j = manifest_to_json(m);
    j["version"] = 2;
    CHECK_THROWS_AS(manifest_from_json(j), LoadError);
    j = manifest_to_json(m);
    j["members"] = Json::array();
    CHECK_THROWS_AS(manifest_from_json(j), LoadError);
    j = manifest_to_json(m);
    j["scheme"] = "boosting";
    CHECK_THROWS_AS(manifest_from_json(j), LoadError);

    const auto dir = std::filesystem::temp_directory_path() / "nasopt-manifest-test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "m.json") << manifest_to_json(m).dump();
    const EnsembleManifest loaded = load_manifest(dir / "m.json");
    CHECK(loaded.members[0] == dir / "a/model.json");
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("transfer") {
  TEST_CASE("frozen-body transfer keeps the body and resizes the head") {
    auto ms = members(1, 30);
    Network& net = ms[0];
    const auto before = body_of(net);
    std::vector<Shape> body_shapes;
    for (const auto& p : net.params()) {
      if (!is_head(p)) body_shapes.push_back(p.value.shape());
    }
    const auto f = make_objective("quadratic:50:0");
    const InputBatch in = InputBatch::from_config(tiny(50));
    TransferConfig tc;
    tc.cutoff = 50;
    const std::uint64_t start = f->evaluations();
    const TrainReport rep = transfer_nas1(net, *f, in, tc);
    CHECK(rep.evals == 50);
    CHECK(f->evaluations() - start == 50);
    CHECK(net.dimension() == 50);
    CHECK(same_bodies({before}, ms));
    for (const auto& p : net.params()) {
      if (is_head(p)) CHECK(p.value.shape().back() == 50);
    }
  }

  TEST_CASE("from-scratch transfer spends the cutoff and depends on the seed") {
    const auto f = make_objective("quadratic:8:0");
    const InputBatch in = InputBatch::from_config(tiny(8));
    const Genotype g = Genotype::parse(testing::kConvPath);
    TransferConfig tc;
    tc.cutoff = 37;
    tc.seed = 1;
    const TrainReport a = transfer_nas2(g, tiny(8), *f, in, tc);
    tc.seed = 2;
    const TrainReport b = transfer_nas2(g, tiny(8), *f, in, tc);
    CHECK(a.evals == 37);
    CHECK(b.evals == 37);
    CHECK(a.x_best != b.x_best);
    tc.seed = 1;
    const TrainReport again = transfer_nas2(g, tiny(8), *f, in, tc);
    CHECK(again.x_best == a.x_best);
    tc.cutoff = 0;
    CHECK_THROWS_AS(transfer_nas2(g, tiny(8), *f, in, tc), ConfigError);
  }
}
