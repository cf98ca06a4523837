// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `--only N[,M...]` restricts the run.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "checks.hpp"
#include "nasopt/ensemble.hpp"
#include "nasopt/objectives.hpp"
#include "nasopt/search.hpp"

using namespace nasopt;
namespace fs = std::filesystem;

namespace {

constexpr const char* kConvPath = "E:100000000010000000000|O:00000|B:0";

// Reduced network used wherever training is involved: 16x16 inputs, 4
// channels, 2 cells, 100 solutions per epoch.
BuildConfig reduced(const Objective& f) {
  BuildConfig b;
  b.cells = 2;
  b.channels = 4;
  b.input_size = 16;
  b.num_sol = 100;
  b.bounds = f.bounds();
  return b;
}

TrainConfig plain_epochs(int n) {
  TrainConfig t;
  t.max_epochs = n;
  t.max_budget = n;
  t.initial_epochs = std::min(5, n);
  return t;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

checks::Result training_sanity() {
  checks::Result r{"training sanity (sphere D=10 conv path; rastrigin D=10 random search, T=100000)", false, ""};
  std::ostringstream d;
  int sphere_ok = 0;
  d << "sphere f_best:";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = make_objective("sphere:10");
    const BuildConfig b = reduced(*f);
    Network net = build(Genotype::parse(kConvPath), b);
    net.init_weights(seed);
    TrainConfig tc = plain_epochs(200);
    tc.batch_size = 1;
    const TrainReport rep = train(net, *f, InputBatch::from_config(b), tc);
    sphere_ok += rep.f_best < 1e-3;
    d << " " << fmt("%.2e", rep.f_best);
  }
  int rastrigin_ok = 0;
  d << "; rastrigin first/best:";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = make_objective("F5:10:0");
    SearchConfig sc;
    sc.strategy = "random";
    sc.budget = 100000;
    sc.seed = seed;
    sc.build = reduced(*f);
    sc.train = plain_epochs(200);
    const SearchResult res = run_search(*f, sc);
    double first = std::numeric_limits<double>::quiet_NaN();
    for (const auto& rec : res.history.records()) {
      if (rec.kind == RecordKind::trained) {
        first = rec.cost;
        break;
      }
    }
    const double ratio = first / res.best_cost;
    rastrigin_ok += ratio >= 100.0;
    d << " " << fmt("%.3g", first) << "/" << fmt("%.3g", res.best_cost) << " (x" << fmt("%.1f", ratio) << ")";
  }
  d << "; sphere " << sphere_ok << "/5, rastrigin " << rastrigin_ok << "/5 (need 4/5 each)";
  r.detail = d.str();
  r.passed = sphere_ok >= 4 && rastrigin_ok >= 4;
  return r;
}

checks::Result f_star_invariance() {
  checks::Result r{"f* invariance (reference shifted by 1e6)", false, ""};
  auto run = [](double f_star, std::vector<std::vector<double>>& weights) {
    const auto f = make_objective("F4:10:3");
    const BuildConfig b = reduced(*f);
    Network net = build(Genotype::parse("E:110000000010001000000|O:01000|B:1"), b);
    net.init_weights(21);
    TrainConfig tc = plain_epochs(10);
    tc.f_star = f_star;
    const TrainReport rep = train(net, *f, InputBatch::from_config(b), tc);
    for (const auto& p : net.params()) weights.emplace_back(p.value.data().begin(), p.value.data().end());
    return rep;
  };
  std::vector<std::vector<double>> wa, wb;
  const TrainReport a = run(0.0, wa), b = run(1e6, wb);
  bool weights_equal = wa.size() == wb.size();
  for (std::size_t i = 0; weights_equal && i < wa.size(); ++i) weights_equal = same_bits(wa[i], wb[i]);
  const bool x_equal = same_bits(a.x_best, b.x_best) && std::memcmp(&a.f_best, &b.f_best, sizeof(double)) == 0;
  r.detail = std::string("weights ") + (weights_equal ? "bit-identical" : "differ") + ", x_best " +
             (x_equal ? "bit-identical" : "differs") + " after " + std::to_string(a.epochs) + " epochs";
  r.passed = weights_equal && x_equal && a.evals == b.evals;
  return r;
}

checks::Result transfer_direction() {
  checks::Result r{"transfer direction (quadratic 30 -> 50, cutoff 1000, 15 paired seeds)", false, ""};
  const Genotype g = Genotype::parse(kConvPath);
  int wins = 0;
  std::ostringstream d;
  double sum_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto source = make_objective("quadratic:30:0");
    const auto target = make_objective("quadratic:50:0");
    const BuildConfig sb = reduced(*source);
    Network net = build(g, sb);
    net.init_weights(seed);
    train(net, *source, InputBatch::from_config(sb), plain_epochs(100));

    const BuildConfig tb = reduced(*target);
    const InputBatch inputs = InputBatch::from_config(tb);
    TransferConfig tc;
    tc.cutoff = 1000;
    tc.seed = derive_seed(seed, 1);
    const TrainReport nas1 = transfer_nas1(net, *target, inputs, tc);
    const TrainReport nas2 = transfer_nas2(g, tb, *target, inputs, tc);
    wins += nas1.f_best < nas2.f_best;
    sum_ratio += std::log10(nas2.f_best / nas1.f_best);
  }
  d << "NAS-1 better on " << wins << "/15 (need 10), mean log10(NAS-2 / NAS-1) = " << fmt("%.2f", sum_ratio / 15);
  r.detail = d.str();
  r.passed = wins >= 10;
  return r;
}

checks::Result ensemble_identities() {
  checks::Result r{"ensemble identities (bagging, stacking, hybrid)", false, ""};
  const auto f = make_objective("F5:10:1");
  const BuildConfig b = reduced(*f);
  const InputBatch inputs = InputBatch::from_config(b);
  const Tensor x = inputs.slice(0, 20);
  std::vector<Network> members;
  for (std::uint64_t k = 0; k < 5; ++k) {
    members.push_back(build(Genotype::parse(kConvPath), b));
    members.back().init_weights(40 + k);
  }

  std::vector<Network> same(5, members[0]);
  const Tensor single = members[0].solutions(x), bag_same = bagging_solutions(same, x);
  double bag_err = 0.0;
  for (std::size_t i = 0; i < single.size(); ++i) bag_err = std::max(bag_err, std::abs(single[i] - bag_same[i]));

  const Tensor bag = bagging_logits(members, x);
  StackingModel model(members);
  Tape tape;
  const Tensor stack = tape.value(model.forward(tape, x).logits);
  double stack_err = 0.0;
  for (std::size_t i = 0; i < bag.size(); ++i) stack_err = std::max(stack_err, std::abs(stack[i] - bag[i]));

  const HybridLoss h = hybrid_loss(members, *f, x);
  double mean = 0.0;
  for (auto& m : members) {
    const Tensor s = m.solutions(x);
    double sum = 0.0;
    for (std::size_t i = 0; i < x.dim(0); ++i) sum += f->value(std::span<const double>(s.data().data() + i * 10, 10));
    mean += sum / static_cast<double>(x.dim(0)) / static_cast<double>(members.size());
  }
  const double hybrid_err = std::abs(h.joint - mean) / std::max(1.0, std::abs(mean));

  r.detail = "bagging of identical members " + fmt("%.1e", bag_err) + ", stacking vs bagging pre-tanh " +
             fmt("%.1e", stack_err) + ", hybrid joint vs mean " + fmt("%.1e", hybrid_err) + " (relative)";
  r.passed = bag_err == 0.0 && stack_err <= 1e-12 && hybrid_err <= 1e-12;
  return r;
}

checks::Result determinism() {
  checks::Result r{"determinism (search logs byte-identical for 1 and 3 workers)", false, ""};
  const fs::path root = fs::temp_directory_path() / "nasopt-acceptance-determinism";
  fs::remove_all(root);
  bool all = true;
  std::ostringstream d;
  for (const char* strategy : {"random", "rl", "mac"}) {
    std::string logs[2], best[2];
    std::size_t records = 0, trained = 0;
    for (int w = 0; w < 2; ++w) {
      const auto f = make_objective("F3:10:0");
      SearchConfig sc;
      sc.strategy = strategy;
      sc.budget = 6000;
      sc.seed = 5;
      sc.workers = w == 0 ? 1 : 3;
      sc.build = reduced(*f);
      sc.build.num_sol = 20;
      sc.train = plain_epochs(20);
      sc.train.initial_epochs = 1;
      sc.mac.trials = 2000;
      const fs::path dir = root / (std::string(strategy) + "-" + std::to_string(sc.workers));
      fs::create_directories(dir);
      sc.log_path = dir / "search.csv";
      sc.checkpoint_path = dir / "best.json";
      const SearchResult res = run_search(*f, sc);
      records = res.history.size();
      trained = 0;
      for (const auto& rec : res.history.records()) trained += rec.kind == RecordKind::trained;
      logs[w] = slurp(sc.log_path);
      best[w] = slurp(sc.checkpoint_path);
    }
    const bool same = logs[0] == logs[1] && best[0] == best[1] && !logs[0].empty();
    all = all && same;
    d << strategy << " " << (same ? "identical" : "DIFFERENT") << " (" << records << " records, " << trained << " trained); ";
  }
  fs::remove_all(root);
  r.detail = d.str();
  r.passed = all;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream s(argv[++i]);
      for (std::string tok; std::getline(s, tok, ',');) only.insert(std::stoi(tok));
    }
  }
  const std::vector<std::pair<int, std::function<checks::Result()>>> criteria{
      {1, checks::shape_arithmetic},
      {2, checks::parameter_count},
      {3, checks::space_cardinality},
      {4, [] { return checks::gradients(20, 4); }},
      {5, [] { return checks::rbf_surrogate(50, 5); }},
      {6, checks::penalty},
      {7, checks::isomorphism},
      {8, training_sanity},
      {9, f_star_invariance},
      {10, transfer_direction},
      {11, ensemble_identities},
      {12, [] { return checks::protein_oracle(100, 12); }},
      {13, determinism},
  };
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    const checks::Result res = run();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (res.passed ? "PASS" : "FAIL") << "  [" << id << "] " << res.name << ": " << res.detail << " ("
              << fmt("%.1f", secs) << " s)" << std::endl;
    failed += !res.passed;
  }
  return failed == 0 ? 0 : 1;
}
