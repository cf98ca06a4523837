#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nasopt/checkpoint.hpp"
#include "nasopt/trainer.hpp"

namespace nasopt {

struct TransferConfig {
  std::uint64_t cutoff = 1000;  // objective evaluations
  AdamConfig adam;
  std::uint64_t seed = 0;       // head / weight initialisation
  std::size_t batch_size = 1;

  void validate() const;
};

/// Frozen body, fresh head sized to the target, reset optimizer state, then
/// training under the cutoff.
TrainReport transfer_nas1(Network& net, const Objective& target, const InputBatch& inputs, const TransferConfig& cfg);
/// Same architecture built and initialised from scratch for the target.
TrainReport transfer_nas2(const Genotype& genotype, const BuildConfig& build, const Objective& target,
                          const InputBatch& inputs, const TransferConfig& cfg);

enum class EnsembleScheme { bagging, stacking, hybrid };
std::string scheme_name(EnsembleScheme s);
EnsembleScheme parse_scheme(std::string_view s);

struct EnsembleConfig {
  EnsembleScheme scheme = EnsembleScheme::bagging;
  std::uint64_t cutoff = 1000;  // per fine-tune pass; hybrid spends K times this
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

struct EnsembleReport {
  TrainReport train;                 // best over every evaluated candidate, total evals
  std::vector<double> member_best;   // per member
  double ensemble_best = std::numeric_limits<double>::infinity();  // combined candidates only
};

/// Pre-tanh averaged output: u_0 + sum_k (u_k - u_0) / K, mapped through the
/// shared scaled tanh. Members must agree on dimension and bounds.
Tensor bagging_logits(std::vector<Network>& members, const Tensor& inputs);
Tensor bagging_solutions(std::vector<Network>& members, const Tensor& inputs);

/// Gives every member a head for the target (fresh when the dimension
/// differs) and freezes its body.
void prepare_members(std::vector<Network>& members, const Objective& target, std::uint64_t seed);

/// Members fine-tuned NAS-1 style on floor(cutoff / (K+1)) evaluations each,
/// the remainder spent on averaged candidates.
EnsembleReport bagging(std::vector<Network>& members, const Objective& target, const InputBatch& inputs,
                       const EnsembleConfig& cfg);

/// A dense blending layer over the concatenated member pre-tanh outputs,
/// initialised to the averaging matrix.
class StackingModel {
 public:
  explicit StackingModel(std::vector<Network>& members);
  Network::Pass forward(Tape& tape, const Tensor& inputs);
  ParamStore& params() noexcept { return params_; }
  std::size_t weight() const noexcept { return w_; }
  std::size_t bias() const noexcept { return b_; }
  const Bounds& bounds() const noexcept { return bounds_; }

 private:
  std::vector<Network>& members_;
  ParamStore params_;
  std::size_t w_ = 0, b_ = 0;
  Bounds bounds_;
};

/// Trains only the blending layer for `cutoff` evaluations at batch size 1.
EnsembleReport stacking(std::vector<Network>& members, const Objective& target, const InputBatch& inputs,
                        const EnsembleConfig& cfg);

struct HybridLoss {
  double joint = 0.0;
  std::vector<double> member;  // mean objective over the slice per member
};
/// Loss of each member on one input slice and their mean (no update).
HybridLoss hybrid_loss(std::vector<Network>& members, const Objective& target, const Tensor& inputs);

/// Joint training of all member heads on the mean member loss; K * cutoff
/// evaluations.
EnsembleReport hybrid(std::vector<Network>& members, const Objective& target, const InputBatch& inputs,
                      const EnsembleConfig& cfg);

EnsembleReport run_ensemble(std::vector<Network>& members, const Objective& target, const InputBatch& inputs,
                            const EnsembleConfig& cfg);

inline constexpr int kManifestVersion = 1;

struct EnsembleManifest {
  EnsembleScheme scheme = EnsembleScheme::bagging;
  std::vector<std::filesystem::path> members;  // checkpoint files
  std::string objective;                       // target objective id
  std::uint64_t cutoff = 1000;
  std::uint64_t seed = 0;
};

Json manifest_to_json(const EnsembleManifest& m);
EnsembleManifest manifest_from_json(const Json& j);
/// Relative member paths are resolved against the manifest's directory.
EnsembleManifest load_manifest(const std::filesystem::path& path);

}  // namespace nasopt
