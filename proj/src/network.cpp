#include "nasopt/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nasopt/errors.hpp"

namespace nasopt {

void BuildConfig::validate() const {
  if (cells < 1) throw ConfigError("build: cells must be >= 1");
  if (channels < 1) throw ConfigError("build: channels must be >= 1");
  if (num_sol < 1) throw ConfigError("build: num_sol must be >= 1");
  if (input_size < 1) throw ConfigError("build: input_size must be >= 1");
  bounds.validate();
}

// -------------------------------------------------------------- InputBatch

InputBatch::InputBatch(std::size_t count, std::size_t size, std::uint64_t seed)
    : count_(count), size_(size), seed_(seed), data_({count, 1, size, size}) {
  if (count == 0 || size == 0) throw ConfigError("input batch must be non-empty");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : data_.data()) v = u(rng);
}

Tensor InputBatch::slice(std::size_t begin, std::size_t len) const {
  if (len == 0 || begin + len > count_) {
    throw ShapeError("input slice [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
                     ") outside batch of " + std::to_string(count_));
  }
  const std::size_t per = size_ * size_;
  const auto first = data_.storage().begin() + static_cast<std::ptrdiff_t>(begin * per);
  return Tensor({len, 1, size_, size_}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len * per)));
}

// ------------------------------------------------------- program assembly

std::size_t Network::push(Layer layer) {
  for (std::size_t in : layer.inputs) {
    if (in >= layers_.size()) throw StateError("layer input refers to a later layer");
  }
  layers_.push_back(std::move(layer));
  return layers_.size() - 1;
}

const Shape& Network::shape_of(std::size_t x) const {
  if (x >= layers_.size()) throw StateError("no layer " + std::to_string(x));
  return layers_[x].shape;
}

std::size_t Network::input(std::size_t channels, std::size_t height, std::size_t width) {
  if (!layers_.empty()) throw StateError("input must be the first layer");
  if (channels == 0 || height == 0 || width == 0) throw ShapeError("input extents must be positive");
  Layer l;
  l.kind = LayerKind::input;
  l.shape = {channels, height, width};
  l.name = "input";
  return push(std::move(l));
}

std::size_t Network::conv(std::size_t x, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                          std::string name) {
  const Shape& s = shape_of(x);
  if (s.size() != 3) throw ShapeError("conv expects a feature map, got " + shape_string(s));
  Layer l;
  l.kind = LayerKind::conv;
  l.inputs = {x};
  l.kernel = kernel;
  l.stride = stride;
  l.shape = {out_channels, conv_output_size(s[1], kernel, stride, 0), conv_output_size(s[2], kernel, stride, 0)};
  l.weight = params_.add(name + ".w", Tensor({out_channels, s[0], kernel, kernel}));
  l.bias = params_.add(name + ".b", Tensor({out_channels}));
  l.name = std::move(name);
  return push(std::move(l));
}

namespace {

Layer pool_layer(LayerKind kind, std::size_t x, const Shape& s, std::size_t kernel, std::size_t stride) {
  if (s.size() != 3) throw ShapeError("pooling expects a feature map, got " + shape_string(s));
  Layer l;
  l.kind = kind;
  l.inputs = {x};
  l.kernel = kernel;
  l.stride = stride;
  l.shape = {s[0], conv_output_size(s[1], kernel, stride, 0), conv_output_size(s[2], kernel, stride, 0)};
  l.name = kind == LayerKind::max_pool ? "max_pool" : "avg_pool";
  return l;
}

}  // namespace

std::size_t Network::max_pool(std::size_t x, std::size_t kernel, std::size_t stride) {
  return push(pool_layer(LayerKind::max_pool, x, shape_of(x), kernel, stride));
}

std::size_t Network::avg_pool(std::size_t x, std::size_t kernel, std::size_t stride) {
  return push(pool_layer(LayerKind::avg_pool, x, shape_of(x), kernel, stride));
}

std::size_t Network::add(std::vector<std::size_t> xs) {
  if (xs.empty()) throw ShapeError("add needs at least one input");
  const Shape& s = shape_of(xs[0]);
  for (std::size_t x : xs) {
    if (shape_of(x) != s) throw ShapeError("add: " + shape_string(shape_of(x)) + " vs " + shape_string(s));
  }
  Layer l;
  l.kind = LayerKind::add;
  l.shape = s;
  l.inputs = std::move(xs);
  l.name = "add";
  return push(std::move(l));
}

std::size_t Network::concat(std::vector<std::size_t> xs) {
  if (xs.empty()) throw ShapeError("concat needs at least one input");
  const Shape& s = shape_of(xs[0]);
  if (s.size() != 3) throw ShapeError("concat expects feature maps");
  std::size_t channels = 0;
  for (std::size_t x : xs) {
    const Shape& t = shape_of(x);
    if (t.size() != 3 || t[1] != s[1] || t[2] != s[2]) {
      throw ShapeError("concat: " + shape_string(t) + " vs " + shape_string(s));
    }
    channels += t[0];
  }
  Layer l;
  l.kind = LayerKind::concat;
  l.shape = {channels, s[1], s[2]};
  l.inputs = std::move(xs);
  l.name = "concat";
  return push(std::move(l));
}

std::size_t Network::crop(std::size_t x, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  const Shape& s = shape_of(x);
  if (s.size() != 3 || height == 0 || width == 0 || top + height > s[1] || left + width > s[2]) {
    throw ShapeError("crop window does not fit " + shape_string(s));
  }
  Layer l;
  l.kind = LayerKind::crop;
  l.inputs = {x};
  l.top = top;
  l.left = left;
  l.shape = {s[0], height, width};
  l.name = "crop";
  return push(std::move(l));
}

std::size_t Network::flatten(std::size_t x) {
  Layer l;
  l.kind = LayerKind::flatten;
  l.inputs = {x};
  l.shape = {shape_numel(shape_of(x))};
  l.name = "flatten";
  return push(std::move(l));
}

std::size_t Network::dense(std::size_t x, std::size_t out_features, std::string name) {
  const Shape& s = shape_of(x);
  if (s.size() != 1) throw ShapeError("dense expects a flat input, got " + shape_string(s));
  if (out_features == 0) throw ShapeError("dense needs at least one output");
  Layer l;
  l.kind = LayerKind::dense;
  l.inputs = {x};
  l.shape = {out_features};
  l.weight = params_.add(name + ".w", Tensor({s[0], out_features}));
  l.bias = params_.add(name + ".b", Tensor({out_features}));
  l.name = std::move(name);
  return push(std::move(l));
}

std::size_t Network::scaled_tanh(std::size_t x, Bounds bounds) {
  const Shape& s = shape_of(x);
  bounds.validate();
  if (s.size() != 1 || s[0] != bounds.size()) {
    throw ShapeError("scaled_tanh: bounds of length " + std::to_string(bounds.size()) + " for " + shape_string(s));
  }
  Layer l;
  l.kind = LayerKind::scaled_tanh;
  l.inputs = {x};
  l.shape = s;
  l.bounds = std::move(bounds);
  l.name = "scaled_tanh";
  return push(std::move(l));
}

const Shape& Network::output_shape() const {
  if (layers_.empty()) throw StateError("network has no layers");
  return layers_.back().shape;
}

std::size_t Network::layer_parameter_count(std::size_t i) const {
  const Layer& l = layers_.at(i);
  std::size_t n = 0;
  if (l.weight != kNoParam) n += params_[l.weight].value.size();
  if (l.bias != kNoParam) n += params_[l.bias].value.size();
  return n;
}

const Bounds& Network::bounds() const {
  if (layers_.empty() || layers_.back().kind != LayerKind::scaled_tanh) {
    throw StateError("network has no bounded output");
  }
  return layers_.back().bounds;
}

// ------------------------------------------------------------------ forward

Network::Pass Network::forward(Tape& tape, const Tensor& inputs) {
  if (layers_.empty()) throw StateError("forward on an empty network");
  const Shape& in = layers_[0].shape;
  if (inputs.rank() != 4 || inputs.dim(0) == 0 || inputs.dim(1) != in[0] || inputs.dim(2) != in[1] ||
      inputs.dim(3) != in[2]) {
    throw ShapeError("network expects [b, " + std::to_string(in[0]) + ", " + std::to_string(in[1]) + ", " +
                     std::to_string(in[2]) + "] inputs, got " + shape_string(inputs.shape()));
  }
  std::vector<Var> out(layers_.size());
  std::vector<Var> args;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    args.clear();
    for (std::size_t x : l.inputs) args.push_back(out[x]);
    switch (l.kind) {
      case LayerKind::input:
        out[i] = tape.constant(inputs);
        break;
      case LayerKind::conv:
        out[i] = ops::conv2d(tape, args[0], tape.parameter(params_, l.weight), tape.parameter(params_, l.bias),
                             l.stride, 0);
        break;
      case LayerKind::max_pool:
        out[i] = ops::max_pool2d(tape, args[0], l.kernel, l.stride);
        break;
      case LayerKind::avg_pool:
        out[i] = ops::avg_pool2d(tape, args[0], l.kernel, l.stride);
        break;
      case LayerKind::add:
        out[i] = args.size() == 1 ? args[0] : ops::add(tape, args);
        break;
      case LayerKind::concat:
        out[i] = args.size() == 1 ? args[0] : ops::concat_channels(tape, args);
        break;
      case LayerKind::crop:
        out[i] = ops::crop(tape, args[0], l.top, l.left, l.shape[1], l.shape[2]);
        break;
      case LayerKind::flatten:
        out[i] = ops::flatten(tape, args[0]);
        break;
      case LayerKind::dense:
        out[i] = ops::dense(tape, args[0], tape.parameter(params_, l.weight), tape.parameter(params_, l.bias));
        break;
      case LayerKind::scaled_tanh:
        out[i] = ops::scaled_tanh(tape, args[0], l.bounds.lo, l.bounds.hi);
        break;
    }
  }
  Pass pass;
  pass.solutions = out.back();
  pass.logits = layers_.back().kind == LayerKind::scaled_tanh ? out[layers_.back().inputs[0]] : out.back();
  return pass;
}

Tensor Network::solutions(const Tensor& inputs) {
  Tape tape;
  return tape.value(forward(tape, inputs).solutions);
}

Tensor Network::logits(const Tensor& inputs) {
  Tape tape;
  return tape.value(forward(tape, inputs).logits);
}

// ------------------------------------------------------------------ weights

void Network::init_parameter(std::size_t index, Rng& rng) {
  Parameter& p = params_[index];
  const Shape& s = p.value.shape();
  if (s.size() == 1) {
    p.value.fill(0.0);
    return;
  }
  double fan_in = 0, fan_out = 0;
  if (s.size() == 4) {
    const double area = static_cast<double>(s[2] * s[3]);
    fan_in = static_cast<double>(s[1]) * area;
    fan_out = static_cast<double>(s[0]) * area;
  } else {
    fan_in = static_cast<double>(s[0]);
    fan_out = static_cast<double>(s[1]);
  }
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  for (double& v : p.value.data()) v = u(rng);
}

void Network::init_weights(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].frozen) init_parameter(i, rng);
  }
}

void Network::freeze_body() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const bool in_head = head_ && (i == layers_[*head_].weight || i == layers_[*head_].bias);
    params_[i].frozen = !in_head;
  }
}

void Network::unfreeze_all() {
  for (auto& p : params_) p.frozen = false;
}

void Network::replace_head(const Bounds& bounds, std::uint64_t seed) {
  if (!built() || !head_) throw StateError("replace_head needs a built network with a dense head");
  bounds.validate();
  Layer& h = layers_[*head_];
  const std::size_t features = shape_of(h.inputs[0])[0];
  const std::size_t dim = bounds.size();
  params_.reset(h.weight, Tensor({features, dim}));
  params_.reset(h.bias, Tensor({dim}));
  params_[h.weight].frozen = false;
  params_[h.bias].frozen = false;
  h.shape = {dim};
  Rng rng(seed);
  init_parameter(h.weight, rng);
  init_parameter(h.bias, rng);
  for (std::size_t i = *head_ + 1; i < layers_.size(); ++i) {
    layers_[i].shape = {dim};
    if (layers_[i].kind == LayerKind::scaled_tanh) layers_[i].bounds = bounds;
  }
  config_.bounds = bounds;
}

// -------------------------------------------------------------------- build

std::size_t projection_stride(std::size_t from, std::size_t to) {
  if (to == 0 || from < to) throw ShapeError("projection target larger than source");
  return std::max<std::size_t>(1, from / to);
}

namespace {

std::string cell_name(int cell) { return "cell" + std::to_string(cell); }

/// Brings every map in xs to the smallest spatial size among them.
std::vector<std::size_t> match_sizes(Network& net, std::vector<std::size_t> xs, std::vector<int> labels,
                                     const std::string& prefix, std::size_t channels) {
  std::size_t target = static_cast<std::size_t>(-1);
  for (std::size_t x : xs) target = std::min(target, net.layer(x).shape[1]);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t size = net.layer(xs[k]).shape[1];
    if (size == target) continue;
    const std::size_t p =
        net.conv(xs[k], channels, 1, projection_stride(size, target), prefix + ".from" + std::to_string(labels[k]));
    const std::size_t got = net.layer(p).shape[1];
    const std::size_t off = (got - target) / 2;
    xs[k] = got == target ? p : net.crop(p, off, off, target, target);
  }
  return xs;
}

std::size_t compile_cell(Network& net, const CellGraph& g, std::size_t x, int cell, std::size_t channels) {
  const std::string cn = cell_name(cell);
  std::array<std::size_t, kCellNodes + 1> node_out{};
  node_out[1] = net.conv(x, channels, 1, 1, cn + ".in");
  const std::vector<int> active = g.active_intermediates();
  for (int j : active) {
    const std::vector<int> preds = g.predecessors(j);
    std::vector<std::size_t> xs;
    for (int i : preds) xs.push_back(node_out[i]);
    const std::string prefix = cn + ".n" + std::to_string(j);
    xs = match_sizes(net, std::move(xs), preds, prefix, channels);
    const std::size_t sum = xs.size() == 1 ? xs[0] : net.add(xs);
    switch (g.op(j)) {
      case CellOp::conv3x3: node_out[j] = net.conv(sum, channels, 3, 1, prefix + ".conv"); break;
      case CellOp::max_pool3x3: node_out[j] = net.max_pool(sum, 3, 1); break;
      case CellOp::avg_pool3x3: node_out[j] = net.avg_pool(sum, 3, 1); break;
    }
  }
  std::vector<int> members;
  if (g.edge(1, kCellNodes)) members.push_back(1);
  members.insert(members.end(), active.begin(), active.end());
  std::vector<std::size_t> xs;
  for (int j : members) xs.push_back(node_out[j]);
  xs = match_sizes(net, std::move(xs), members, cn + ".out", channels);
  const std::size_t cat = xs.size() == 1 ? xs[0] : net.concat(xs);
  return net.conv(cat, channels, 1, 1, cn + ".out");
}

/// Spatial size after one cell, or 0 when some map collapses.
std::size_t cell_output_size(const CellGraph& g, std::size_t n) {
  std::array<std::size_t, kCellNodes + 1> size{};
  size[1] = n;
  std::size_t out = g.edge(1, kCellNodes) ? n : static_cast<std::size_t>(-1);
  for (int j : g.active_intermediates()) {
    std::size_t s = static_cast<std::size_t>(-1);
    for (int i : g.predecessors(j)) s = std::min(s, size[i]);
    if (s < 3) return 0;
    size[j] = s - 2;
    out = std::min(out, size[j]);
  }
  return out;
}

}  // namespace

Network build(const Genotype& genotype, const BuildConfig& cfg) {
  cfg.validate();
  const CellGraph graph = decode(genotype);
  const ValidityReport report = validate(graph);
  if (!report.valid()) {
    throw BuildError("invalid genotype " + genotype.str() + " (penalty " + std::to_string(report.penalty) + ")",
                     report.penalty);
  }
  Network net;
  net.genotype_ = genotype;
  net.config_ = cfg;
  try {
    std::size_t x = net.input(1, cfg.input_size, cfg.input_size);
    for (int c = 0; c < cfg.cells; ++c) x = compile_cell(net, graph, x, c, cfg.channels);
    const std::size_t flat = net.flatten(x);
    net.head_ = net.dense(flat, cfg.dimension(), "head");
    net.scaled_tanh(*net.head_, cfg.bounds);
  } catch (const ShapeError&) {
    throw BuildError("cell depth exceeds input size", 0.0);
  }
  return net;
}

bool buildable(const Genotype& genotype, const BuildConfig& cfg) {
  const CellGraph graph = decode(genotype);
  if (!validate(graph).valid()) return false;
  std::size_t n = cfg.input_size;
  for (int c = 0; c < cfg.cells; ++c) {
    n = cell_output_size(graph, n);
    if (n == 0) return false;
  }
  return true;
}

}  // namespace nasopt
