#include "nasopt/controller.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>

#include "nasopt/errors.hpp"
#include "nasopt/genotype.hpp"

namespace nasopt {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

CMatMap mat(const Tensor& t) { return CMatMap(t.data().data(), t.dim(0), t.dim(1)); }
MatMap mat(Tensor& t) { return MatMap(t.data().data(), t.dim(0), t.dim(1)); }
CVecMap vec(const Tensor& t) { return CVecMap(t.data().data(), t.size()); }
VecMap vec(Tensor& t) { return VecMap(t.data().data(), t.size()); }

}  // namespace

void ControllerConfig::validate() const {
  if (hidden == 0) throw ConfigError("controller: hidden must be >= 1");
  if (batch == 0) throw ConfigError("controller: batch must be >= 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) throw ConfigError("controller: baseline_decay in [0, 1)");
  if (!(init_scale >= 0.0)) throw ConfigError("controller: init_scale must be >= 0");
  if (!(entropy_weight >= 0.0)) throw ConfigError("controller: entropy_weight must be >= 0");
  adam.validate();
}

struct Controller::Trace {
  std::vector<Eigen::VectorXd> h1, h2, probs;  // index t+1 holds step t; index 0 is the zero state
  std::vector<std::size_t> inputs;             // embedding row fed at step t
  std::vector<int> tokens;
  std::vector<double> log_probs;
};

Controller::Controller(std::vector<int> alphabets, const ControllerConfig& cfg, std::uint64_t seed)
    : alphabets_(std::move(alphabets)), cfg_(cfg) {
  cfg_.validate();
  if (alphabets_.empty()) throw ConfigError("controller needs at least one position");
  std::size_t rows = 0;
  for (int a : alphabets_) {
    if (a < 2) throw ConfigError("controller alphabets must have at least two symbols");
    offsets_.push_back(rows);
    rows += static_cast<std::size_t>(a);
  }
  const std::size_t H = cfg_.hidden;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-cfg_.init_scale, cfg_.init_scale);
  auto random = [&](Shape s) {
    Tensor t(std::move(s));
    for (double& v : t.data()) v = u(rng);
    return t;
  };
  emb_ = params_.add("embedding", random({rows + 1, H}));
  w1x_ = params_.add("rnn1.wx", random({H, H}));
  w1h_ = params_.add("rnn1.wh", random({H, H}));
  b1_ = params_.add("rnn1.b", Tensor({H}));
  w2x_ = params_.add("rnn2.wx", random({H, H}));
  w2h_ = params_.add("rnn2.wh", random({H, H}));
  b2_ = params_.add("rnn2.b", Tensor({H}));
  for (std::size_t t = 0; t < alphabets_.size(); ++t) {
    const auto a = static_cast<std::size_t>(alphabets_[t]);
    head_w_.push_back(params_.add("head" + std::to_string(t) + ".w", Tensor({a, H})));
    head_b_.push_back(params_.add("head" + std::to_string(t) + ".b", Tensor({a})));
  }
}

void Controller::run(std::span<const int> tokens, Trace& tr, Rng* rng, bool greedy) const {
  const std::size_t T = alphabets_.size();
  const std::size_t H = cfg_.hidden;
  const std::size_t start_row = params_[emb_].value.dim(0) - 1;
  const auto emb = mat(params_[emb_].value);
  const auto w1x = mat(params_[w1x_].value), w1h = mat(params_[w1h_].value);
  const auto w2x = mat(params_[w2x_].value), w2h = mat(params_[w2h_].value);
  const auto b1 = vec(params_[b1_].value), b2 = vec(params_[b2_].value);
  tr.h1.assign(1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(H)));
  tr.h2.assign(1, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(H)));
  tr.probs.clear();
  tr.inputs.clear();
  tr.tokens.clear();
  tr.log_probs.clear();
  std::size_t row = start_row;
  for (std::size_t t = 0; t < T; ++t) {
    tr.inputs.push_back(row);
    const Eigen::VectorXd x = emb.row(static_cast<Eigen::Index>(row)).transpose();
    Eigen::VectorXd h1 = (w1x * x + w1h * tr.h1.back() + b1).array().tanh();
    Eigen::VectorXd h2 = (w2x * h1 + w2h * tr.h2.back() + b2).array().tanh();
    Eigen::VectorXd logits = mat(params_[head_w_[t]].value) * h2 + vec(params_[head_b_[t]].value);
    const double mx = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - mx).exp();
    p /= p.sum();
    int a = 0;
    if (!rng) {
      a = tokens[t];
      if (a < 0 || a >= alphabets_[t]) throw DomainError("token out of range at position " + std::to_string(t));
    } else if (greedy) {
      Eigen::Index best = 0;
      p.maxCoeff(&best);
      a = static_cast<int>(best);
    } else {
      std::discrete_distribution<int> d(p.data(), p.data() + p.size());
      a = d(*rng);
    }
    tr.tokens.push_back(a);
    tr.log_probs.push_back(std::log(p[a]));
    tr.h1.push_back(std::move(h1));
    tr.h2.push_back(std::move(h2));
    tr.probs.push_back(std::move(p));
    row = token_id(t, a);
  }
}

Controller::Sample Controller::sample(Rng& rng, bool greedy) const {
  Trace tr;
  run({}, tr, &rng, greedy);
  return Sample{std::move(tr.tokens), std::move(tr.log_probs)};
}

std::vector<std::vector<double>> Controller::distributions(std::span<const int> tokens) const {
  if (tokens.size() != alphabets_.size()) throw ShapeError("controller: sequence length mismatch");
  Trace tr;
  run(tokens, tr, nullptr, false);
  std::vector<std::vector<double>> out;
  for (const auto& p : tr.probs) out.emplace_back(p.data(), p.data() + p.size());
  return out;
}

double Controller::log_prob(std::span<const int> tokens) const {
  if (tokens.size() != alphabets_.size()) throw ShapeError("controller: sequence length mismatch");
  Trace tr;
  run(tokens, tr, nullptr, false);
  double s = 0.0;
  for (double lp : tr.log_probs) s += lp;
  return s;
}

double Controller::entropy(std::span<const int> tokens) const {
  if (tokens.size() != alphabets_.size()) throw ShapeError("controller: sequence length mismatch");
  Trace tr;
  run(tokens, tr, nullptr, false);
  double h = 0.0;
  for (const auto& p : tr.probs) h -= (p.array() * p.array().max(1e-300).log()).sum();
  return h;
}

void Controller::policy_gradient(std::span<const std::vector<int>> sequences, std::span<const double> coefficients,
                                 std::span<const double> entropy) {
  if (sequences.size() != coefficients.size()) throw ShapeError("controller: one coefficient per sequence");
  if (!entropy.empty() && entropy.size() != sequences.size()) throw ShapeError("controller: one entropy weight per sequence");
  const std::size_t T = alphabets_.size();
  const auto H = static_cast<Eigen::Index>(cfg_.hidden);
  const auto w1x = mat(params_[w1x_].value), w1h = mat(params_[w1h_].value);
  const auto w2x = mat(params_[w2x_].value), w2h = mat(params_[w2h_].value);
  auto g_emb = mat(params_[emb_].grad);
  auto g_w1x = mat(params_[w1x_].grad), g_w1h = mat(params_[w1h_].grad);
  auto g_w2x = mat(params_[w2x_].grad), g_w2h = mat(params_[w2h_].grad);
  auto g_b1 = vec(params_[b1_].grad), g_b2 = vec(params_[b2_].grad);
  const auto emb = mat(params_[emb_].value);
  Trace tr;
  for (std::size_t k = 0; k < sequences.size(); ++k) {
    const double c = coefficients[k];
    const double e = entropy.empty() ? 0.0 : entropy[k];
    if (c == 0.0 && e == 0.0) continue;
    if (sequences[k].size() != T) throw ShapeError("controller: sequence length mismatch");
    run(sequences[k], tr, nullptr, false);
    Eigen::VectorXd carry1 = Eigen::VectorXd::Zero(H), carry2 = Eigen::VectorXd::Zero(H);
    for (std::size_t t = T; t-- > 0;) {
      // d(-c log p_a)/dlogits = -c (onehot(a) - p)
      const Eigen::VectorXd& p = tr.probs[t];
      Eigen::VectorXd dlogits = c * p;
      dlogits[tr.tokens[t]] -= c;
      if (e != 0.0) {
        // d(-e H)/dlogits = e p (log p + H)
        const Eigen::ArrayXd logp = p.array().max(1e-300).log();
        const double h = -(p.array() * logp).sum();
        dlogits += (e * p.array() * (logp + h)).matrix();
      }
      const Eigen::VectorXd& h2 = tr.h2[t + 1];
      const Eigen::VectorXd& h1 = tr.h1[t + 1];
      mat(params_[head_w_[t]].grad) += dlogits * h2.transpose();
      vec(params_[head_b_[t]].grad) += dlogits;
      const Eigen::VectorXd dh2 = mat(params_[head_w_[t]].value).transpose() * dlogits + carry2;
      const Eigen::VectorXd dz2 = dh2.array() * (1.0 - h2.array().square());
      g_w2x += dz2 * h1.transpose();
      g_w2h += dz2 * tr.h2[t].transpose();
      g_b2 += dz2;
      carry2 = w2h.transpose() * dz2;
      const Eigen::VectorXd dh1 = w2x.transpose() * dz2 + carry1;
      const Eigen::VectorXd dz1 = dh1.array() * (1.0 - h1.array().square());
      const auto row = static_cast<Eigen::Index>(tr.inputs[t]);
      g_w1x += dz1 * emb.row(row);
      g_w1h += dz1 * tr.h1[t].transpose();
      g_b1 += dz1;
      carry1 = w1h.transpose() * dz1;
      g_emb.row(row) += (w1x.transpose() * dz1).transpose();
    }
  }
}

std::size_t Controller::update(std::span<const std::vector<int>> sequences, std::span<const double> rewards) {
  if (sequences.size() != rewards.size()) throw ShapeError("controller: one reward per sequence");
  std::vector<std::vector<int>> seqs;
  std::vector<double> r;
  for (std::size_t k = 0; k < rewards.size(); ++k) {
    if (!std::isfinite(rewards[k])) {
      ++skipped_;
      std::cerr << "warning: controller skipped a non-finite reward\n";
      continue;
    }
    seqs.push_back(sequences[k]);
    r.push_back(rewards[k]);
  }
  if (r.empty()) return 0;
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  if (!baseline_) baseline_ = mean;
  std::vector<double> coef(r.size());
  bool any = cfg_.entropy_weight > 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    coef[k] = (r[k] - *baseline_) / static_cast<double>(r.size());
    any = any || coef[k] != 0.0;
  }
  if (any) {
    params_.zero_grad();
    const std::vector<double> ent(r.size(), cfg_.entropy_weight / static_cast<double>(r.size()));
    policy_gradient(seqs, coef, ent);
    adam_step(params_, cfg_.adam);
  }
  baseline_ = cfg_.baseline_decay * *baseline_ + (1.0 - cfg_.baseline_decay) * mean;
  return r.size();
}

double reward_from_cost(double cost) {
  if (std::isnan(cost)) return cost;
  if (cost >= kInvalidCostOffset) return std::max(-24.0, -12.0 - std::log10(1.0 + (cost - kInvalidCostOffset)));
  if (cost > 0.0) return std::clamp(-std::log10(std::max(cost, 1e-12)), -12.0, 12.0);
  return std::min(24.0, 12.0 + std::log10(1.0 + std::abs(cost)));
}

}  // namespace nasopt
