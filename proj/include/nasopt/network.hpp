#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nasopt/autodiff.hpp"
#include "nasopt/genotype.hpp"
#include "nasopt/objectives.hpp"

namespace nasopt {

struct BuildConfig {
  int cells = 3;
  std::size_t channels = 8;
  Bounds bounds;  // one entry per output coordinate
  std::size_t num_sol = 500;
  std::size_t input_size = 32;
  std::uint64_t input_seed = 0;

  std::size_t dimension() const noexcept { return bounds.size(); }
  void validate() const;
  friend bool operator==(const BuildConfig&, const BuildConfig&) = default;
};

/// The fixed network inputs: `count` single-channel size x size matrices,
/// uniform [0, 1), regenerated bit-identically from the seed.
class InputBatch {
 public:
  InputBatch(std::size_t count, std::size_t size, std::uint64_t seed);
  static InputBatch from_config(const BuildConfig& cfg) { return {cfg.num_sol, cfg.input_size, cfg.input_seed}; }

  std::size_t count() const noexcept { return count_; }
  std::size_t size() const noexcept { return size_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const Tensor& data() const noexcept { return data_; }
  /// Inputs [begin, begin+len) as a [len, 1, size, size] tensor.
  Tensor slice(std::size_t begin, std::size_t len) const;

 private:
  std::size_t count_, size_;
  std::uint64_t seed_;
  Tensor data_;
};

enum class LayerKind { input, conv, max_pool, avg_pool, add, concat, crop, flatten, dense, scaled_tanh };

inline constexpr std::size_t kNoParam = static_cast<std::size_t>(-1);

struct Layer {
  LayerKind kind = LayerKind::input;
  std::vector<std::size_t> inputs;  // earlier layer indices
  std::size_t weight = kNoParam;
  std::size_t bias = kNoParam;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t top = 0, left = 0;  // crop origin
  Shape shape;                    // per-sample output shape: {C,H,W} or {F}
  Bounds bounds;                  // scaled_tanh range
  std::string name;
};

/// A layer program over a ParamStore. Layers are appended with their output
/// shape inferred immediately; the last layer is the network output.
class Network {
 public:
  Network() = default;

  // Program construction. Each returns the new layer index; shape errors throw
  // ShapeError at the call.
  std::size_t input(std::size_t channels, std::size_t height, std::size_t width);
  std::size_t conv(std::size_t x, std::size_t out_channels, std::size_t kernel, std::size_t stride, std::string name);
  std::size_t max_pool(std::size_t x, std::size_t kernel, std::size_t stride);
  std::size_t avg_pool(std::size_t x, std::size_t kernel, std::size_t stride);
  std::size_t add(std::vector<std::size_t> xs);
  std::size_t concat(std::vector<std::size_t> xs);
  std::size_t crop(std::size_t x, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
  std::size_t flatten(std::size_t x);
  std::size_t dense(std::size_t x, std::size_t out_features, std::string name);
  std::size_t scaled_tanh(std::size_t x, Bounds bounds);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  const Shape& output_shape() const;
  /// Scalars held by the weight and bias of one layer.
  std::size_t layer_parameter_count(std::size_t i) const;

  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  const std::optional<Genotype>& genotype() const noexcept { return genotype_; }
  const BuildConfig& config() const noexcept { return config_; }
  bool built() const noexcept { return !layers_.empty(); }

  /// Index of the head dense layer, if any.
  std::optional<std::size_t> head() const noexcept { return head_; }
  const Bounds& bounds() const;
  std::size_t dimension() const { return bounds().size(); }

  struct Pass {
    Var solutions;  // [b, D]
    Var logits;     // pre-tanh head output [b, D]
  };
  /// Records one forward pass of a [b, C, H, W] input batch.
  Pass forward(Tape& tape, const Tensor& inputs);
  /// Solutions without keeping the tape.
  Tensor solutions(const Tensor& inputs);
  Tensor logits(const Tensor& inputs);

  /// Glorot-uniform weights, zero biases, reproducible from the seed. Frozen
  /// parameters are left untouched.
  void init_weights(std::uint64_t seed);
  /// Freezes every parameter that is not part of the head.
  void freeze_body();
  void unfreeze_all();
  /// Swaps the head dense layer for a freshly initialized one emitting
  /// bounds.size() coordinates. Body weights are kept bit-exactly.
  void replace_head(const Bounds& bounds, std::uint64_t seed);

 private:
  friend Network build(const Genotype&, const BuildConfig&);
  std::size_t push(Layer layer);
  const Shape& shape_of(std::size_t x) const;
  void init_parameter(std::size_t index, Rng& rng);

  std::vector<Layer> layers_;
  ParamStore params_;
  std::optional<Genotype> genotype_;
  BuildConfig config_;
  std::optional<std::size_t> head_;
};

/// Compiles a valid genotype into `cfg.cells` stacked cells followed by the
/// flatten -> dense -> scaled tanh head. Weights are zero until init_weights.
/// Throws BuildError carrying the penalty for invalid genotypes, and a
/// BuildError with penalty 0 when a map would shrink below 1 x 1.
Network build(const Genotype& genotype, const BuildConfig& cfg);

/// True when build() would succeed.
bool buildable(const Genotype& genotype, const BuildConfig& cfg);

/// Stride of the 1 x 1 projection that brings a size `from` map down to at
/// least `to` before the center crop.
std::size_t projection_stride(std::size_t from, std::size_t to);

}  // namespace nasopt
