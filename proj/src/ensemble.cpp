#include "nasopt/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

#include "nasopt/errors.hpp"

namespace nasopt {

namespace {

/// Training config that runs until exactly `budget` evaluations are spent.
TrainConfig cutoff_config(std::uint64_t budget, std::size_t num_sol, const AdamConfig& adam, std::size_t batch) {
  TrainConfig tc;
  const auto epochs = static_cast<int>(budget / num_sol + 2);
  tc.max_epochs = epochs;
  tc.max_budget = epochs;
  tc.initial_epochs = epochs;
  tc.eval_budget = budget;
  tc.adam = adam;
  tc.batch_size = batch;
  return tc;
}

void see(TrainReport& rep, std::span<const double> x, double f) {
  if (f < rep.f_best) {
    rep.f_best = f;
    rep.x_best.assign(x.begin(), x.end());
  }
}

void merge(TrainReport& into, const TrainReport& from) {
  into.evals += from.evals;
  if (from.f_best < into.f_best) {
    into.f_best = from.f_best;
    into.x_best = from.x_best;
  }
  if (from.stop == StopReason::numeric_error && into.error.empty()) into.error = from.error;
}

/// Evaluates every row of x; returns the mean objective value. When `grad` is
/// given it receives d(mean)/dx.
double evaluate_rows(const Objective& f, const Tensor& x, Tensor* grad, TrainReport& rep, double* best = nullptr) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> xi(x.data().data() + i * d, d);
    double fi = 0.0;
    if (grad) {
      fi = f.value_and_gradient(xi, std::span<double>(grad->data().data() + i * d, d));
    } else {
      fi = f.value(xi);
    }
    ++rep.evals;
    see(rep, xi, fi);
    if (best && fi < *best) *best = fi;
    sum += fi;
  }
  if (grad) {
    for (double& g : grad->data()) g /= static_cast<double>(n);
  }
  return sum / static_cast<double>(n);
}

void check_members(std::vector<Network>& members) {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  for (auto& m : members) {
    if (!m.built()) throw StateError("ensemble member is not built");
  }
}

void check_same_head(std::vector<Network>& members) {
  const Bounds& b = members[0].bounds();
  const Shape& in = members[0].layer(0).shape;
  for (auto& m : members) {
    if (m.bounds() != b) throw BuildError("ensemble members disagree on the target head", 0.0);
    if (m.layer(0).shape != in) throw BuildError("ensemble members disagree on the input shape", 0.0);
  }
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TransferConfig::validate() const {
  if (cutoff == 0) throw ConfigError("transfer: cutoff must be > 0");
  if (batch_size == 0) throw ConfigError("transfer: batch_size must be >= 1");
  adam.validate();
}

TrainReport transfer_nas1(Network& net, const Objective& target, const InputBatch& inputs, const TransferConfig& cfg) {
  cfg.validate();
  net.replace_head(target.bounds(), cfg.seed);
  net.freeze_body();
  net.params().reset_optimizer();
  return train(net, target, inputs, cutoff_config(cfg.cutoff, inputs.count(), cfg.adam, cfg.batch_size));
}

TrainReport transfer_nas2(const Genotype& genotype, const BuildConfig& build_cfg, const Objective& target,
                          const InputBatch& inputs, const TransferConfig& cfg) {
  cfg.validate();
  BuildConfig b = build_cfg;
  b.bounds = target.bounds();
  Network net = build(genotype, b);
  net.init_weights(cfg.seed);
  return train(net, target, inputs, cutoff_config(cfg.cutoff, inputs.count(), cfg.adam, cfg.batch_size));
}

std::string scheme_name(EnsembleScheme s) {
  switch (s) {
    case EnsembleScheme::bagging: return "bagging";
    case EnsembleScheme::stacking: return "stacking";
    case EnsembleScheme::hybrid: return "hybrid";
  }
  return "unknown";
}

EnsembleScheme parse_scheme(std::string_view s) {
  if (s == "bagging") return EnsembleScheme::bagging;
  if (s == "stacking") return EnsembleScheme::stacking;
  if (s == "hybrid") return EnsembleScheme::hybrid;
  throw ConfigError("unknown ensemble scheme '" + std::string(s) + "' (bagging, stacking, hybrid)");
}

void EnsembleConfig::validate() const {
  if (cutoff == 0) throw ConfigError("ensemble: cutoff must be > 0");
  if (workers == 0) throw ConfigError("ensemble: workers must be >= 1");
  adam.validate();
}

Tensor bagging_logits(std::vector<Network>& members, const Tensor& inputs) {
  check_members(members);
  check_same_head(members);
  Tensor z = members[0].logits(inputs);
  const double inv = 1.0 / static_cast<double>(members.size());
  std::vector<double> acc(z.size(), 0.0);
  for (std::size_t k = 1; k < members.size(); ++k) {
    const Tensor u = members[k].logits(inputs);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (u[i] - z[i]) * inv;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) z[i] += acc[i];
  return z;
}

Tensor bagging_solutions(std::vector<Network>& members, const Tensor& inputs) {
  Tape tape;
  const Var z = tape.constant(bagging_logits(members, inputs));
  const Bounds& b = members[0].bounds();
  return tape.value(ops::scaled_tanh(tape, z, b.lo, b.hi));
}

void prepare_members(std::vector<Network>& members, const Objective& target, std::uint64_t seed) {
  check_members(members);
  for (std::size_t k = 0; k < members.size(); ++k) {
    Network& m = members[k];
    if (m.dimension() != target.dimension() || m.bounds() != target.bounds()) {
      m.replace_head(target.bounds(), derive_seed(seed, k));
    }
    m.freeze_body();
    m.params().reset_optimizer();
  }
}

EnsembleReport bagging(std::vector<Network>& members, const Objective& target, const InputBatch& inputs,
                       const EnsembleConfig& cfg) {
  cfg.validate();
  prepare_members(members, target, cfg.seed);
  check_same_head(members);
  const std::size_t K = members.size();
  const std::uint64_t share = cfg.cutoff / (K + 1);
  EnsembleReport out;
  out.member_best.assign(K, std::numeric_limits<double>::infinity());
  std::vector<TrainReport> reports(K);
  if (share > 0) {
    parallel_for(K, cfg.workers, [&](std::size_t k) {
      reports[k] = train(members[k], target, inputs, cutoff_config(share, inputs.count(), cfg.adam, 1));
    });
  }
  for (std::size_t k = 0; k < K; ++k) {
    merge(out.train, reports[k]);
    out.member_best[k] = reports[k].f_best;
  }
  std::uint64_t left = cfg.cutoff - share * K;
  std::size_t pos = 0;
  while (left > 0) {
    const std::size_t len = static_cast<std::size_t>(std::min<std::uint64_t>({left, 32, inputs.count() - pos}));
    const Tensor x = bagging_solutions(members, inputs.slice(pos, len));
    evaluate_rows(target, x, nullptr, out.train, &out.ensemble_best);
    left -= len;
    pos = (pos + len) % inputs.count();
  }
  out.train.epochs = static_cast<int>(out.train.evals / inputs.count());
  out.train.stop = StopReason::budget;
  return out;
}

StackingModel::StackingModel(std::vector<Network>& members) : members_(members) {
  check_members(members_);
  check_same_head(members_);
  bounds_ = members_[0].bounds();
  const std::size_t K = members_.size(), D = bounds_.size();
  Tensor w({K * D, D});
  const double inv = 1.0 / static_cast<double>(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t d = 0; d < D; ++d) w[(k * D + d) * D + d] = inv;
  }
  w_ = params_.add("blend.w", std::move(w));
  b_ = params_.add("blend.b", Tensor({D}));
}

Network::Pass StackingModel::forward(Tape& tape, const Tensor& inputs) {
  const std::size_t K = members_.size(), D = bounds_.size();
  const std::size_t n = inputs.dim(0);
  Tensor cat({n, K * D});
  for (std::size_t k = 0; k < K; ++k) {
    const Tensor u = members_[k].logits(inputs);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < D; ++d) cat[i * K * D + k * D + d] = u[i * D + d];
    }
  }
  const Var x = tape.constant(std::move(cat));
  const Var z = ops::dense(tape, x, tape.parameter(params_, w_), tape.parameter(params_, b_));
  return Network::Pass{ops::scaled_tanh(tape, z, bounds_.lo, bounds_.hi), z};
}

EnsembleReport stacking(std::vector<Network>& members, const Objective& target, const InputBatch& inputs,
                        const EnsembleConfig& cfg) {
  cfg.validate();
  prepare_members(members, target, cfg.seed);
  for (auto& m : members) {
    for (auto& p : m.params()) p.frozen = true;
  }
  StackingModel model(members);
  EnsembleReport out;
  out.member_best.assign(members.size(), std::numeric_limits<double>::infinity());
  for (std::uint64_t s = 0; s < cfg.cutoff; ++s) {
    Tape tape;
    const Network::Pass pass = model.forward(tape, inputs.slice(s % inputs.count(), 1));
    const Tensor& x = tape.value(pass.solutions);
    Tensor grad(x.shape());
    const double loss = evaluate_rows(target, x, &grad, out.train, &out.ensemble_best);
    if (!std::isfinite(loss) || !grad.all_finite()) {
      out.train.stop = StopReason::numeric_error;
      out.train.error = "non-finite objective value or gradient on " + target.id();
      return out;
    }
    tape.backward(ops::external_scalar(tape, pass.solutions, loss, std::move(grad)));
    adam_step(model.params(), cfg.adam);
  }
  out.train.epochs = static_cast<int>(out.train.evals / inputs.count());
  out.train.stop = StopReason::budget;
  return out;
}

HybridLoss hybrid_loss(std::vector<Network>& members, const Objective& target, const Tensor& inputs) {
  check_members(members);
  HybridLoss out;
  TrainReport scratch;
  for (auto& m : members) {
    const double l = evaluate_rows(target, m.solutions(inputs), nullptr, scratch);
    out.member.push_back(l);
    out.joint += l / static_cast<double>(members.size());
  }
  return out;
}

EnsembleReport hybrid(std::vector<Network>& members, const Objective& target, const InputBatch& inputs,
                      const EnsembleConfig& cfg) {
  cfg.validate();
  prepare_members(members, target, cfg.seed);
  const std::size_t K = members.size();
  const double inv = 1.0 / static_cast<double>(K);
  EnsembleReport out;
  out.member_best.assign(K, std::numeric_limits<double>::infinity());
  for (std::uint64_t s = 0; s < cfg.cutoff; ++s) {
    const Tensor in = inputs.slice(s % inputs.count(), 1);
    std::vector<Tape> tapes(K);
    std::vector<Var> losses(K);
    for (std::size_t k = 0; k < K; ++k) {
      const Network::Pass pass = members[k].forward(tapes[k], in);
      const Tensor& x = tapes[k].value(pass.solutions);
      Tensor grad(x.shape());
      const double loss = evaluate_rows(target, x, &grad, out.train, &out.member_best[k]);
      if (!std::isfinite(loss) || !grad.all_finite()) {
        out.train.stop = StopReason::numeric_error;
        out.train.error = "non-finite objective value or gradient on " + target.id();
        for (auto& m : members) m.params().zero_grad();
        return out;
      }
      for (double& g : grad.data()) g *= inv;
      losses[k] = ops::external_scalar(tapes[k], pass.solutions, loss * inv, std::move(grad));
    }
    for (std::size_t k = 0; k < K; ++k) {
      tapes[k].backward(losses[k]);
      adam_step(members[k].params(), cfg.adam);
    }
  }
  out.train.epochs = static_cast<int>(out.train.evals / (inputs.count() * K));
  out.train.stop = StopReason::budget;
  return out;
}

EnsembleReport run_ensemble(std::vector<Network>& members, const Objective& target, const InputBatch& inputs,
                            const EnsembleConfig& cfg) {
  switch (cfg.scheme) {
    case EnsembleScheme::bagging: return bagging(members, target, inputs, cfg);
    case EnsembleScheme::stacking: return stacking(members, target, inputs, cfg);
    case EnsembleScheme::hybrid: return hybrid(members, target, inputs, cfg);
  }
  throw ConfigError("unknown ensemble scheme");
}

Json manifest_to_json(const EnsembleManifest& m) {
  Json members = Json::array();
  for (const auto& p : m.members) members.push_back(p.generic_string());
  return Json{{"format", "nasopt-ensemble"},
              {"version", kManifestVersion},
              {"scheme", scheme_name(m.scheme)},
              {"members", std::move(members)},
              {"objective", m.objective},
              {"cutoff", m.cutoff},
              {"seed", m.seed}};
}

EnsembleManifest manifest_from_json(const Json& j) {
  try {
    if (j.value("format", "") != "nasopt-ensemble") throw LoadError("not an ensemble manifest");
    const int version = j.at("version").get<int>();
    if (version != kManifestVersion) throw LoadError("unsupported manifest version " + std::to_string(version));
    EnsembleManifest m;
    m.scheme = parse_scheme(j.at("scheme").get<std::string>());
    for (const auto& p : j.at("members")) m.members.emplace_back(p.get<std::string>());
    if (m.members.empty()) throw LoadError("manifest lists no members");
    m.objective = j.at("objective").get<std::string>();
    m.cutoff = j.value("cutoff", std::uint64_t{1000});
    m.seed = j.value("seed", std::uint64_t{0});
    return m;
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("malformed manifest: ") + e.what());
  }
}

EnsembleManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw LoadError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  EnsembleManifest m = manifest_from_json(j);
  for (auto& p : m.members) {
    if (p.is_relative()) p = path.parent_path() / p;
  }
  return m;
}

}  // namespace nasopt
