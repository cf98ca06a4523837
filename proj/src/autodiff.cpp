#include "nasopt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nasopt/errors.hpp"

namespace nasopt {

std::size_t conv_output_size(std::size_t n, std::size_t k, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be >= 1");
  if (k == 0) throw ShapeError("window must be >= 1");
  if (n + 2 * padding < k) {
    throw ShapeError("window " + std::to_string(k) + " larger than padded input " +
                     std::to_string(n + 2 * padding));
  }
  return (n + 2 * padding - k) / stride + 1;
}

// ---------------------------------------------------------------- ParamStore

std::size_t ParamStore::add(std::string name, Tensor init) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor(init.shape());
  p.m = Tensor(init.shape());
  p.v = Tensor(init.shape());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

void ParamStore::reset(std::size_t index, Tensor init) {
  Parameter& p = params_.at(index);
  p.grad = Tensor(init.shape());
  p.m = Tensor(init.shape());
  p.v = Tensor(init.shape());
  p.value = std::move(init);
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

void ParamStore::reset_optimizer() {
  for (auto& p : params_) {
    p.m.fill(0.0);
    p.v.fill(0.0);
  }
  step_ = 0;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("adam: learning rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("adam: beta1 must lie in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam: beta2 must lie in [0,1)");
  if (!(epsilon > 0)) throw ConfigError("adam: epsilon must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("adam: weight decay must be >= 0");
}

void adam_step(ParamStore& params, const AdamConfig& cfg) {
  for (const auto& p : params) {
    if (p.frozen) continue;
    if (!p.grad.all_finite()) {
      throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const std::int64_t t = params.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& p : params) {
    if (!p.frozen) {
      auto w = p.value.data();
      auto g = p.grad.data();
      auto m = p.m.data();
      auto v = p.v.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] + cfg.weight_decay * w[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
    }
    p.grad.fill(0.0);
  }
  params.set_step(t);
}

// ---------------------------------------------------------------------- Tape

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(ParamStore& store, std::size_t index) {
  const Parameter& p = store[index];
  Node n;
  n.value = p.value;
  n.store = &store;
  n.param = index;
  n.requires_grad = !p.frozen;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](Var v) { return nodes_.at(v.id).requires_grad; });
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (!backward_done_) throw StateError("grad() read before backward()");
  if (n.grad.empty()) {
    static thread_local Tensor zeros;
    zeros = Tensor(n.value.shape());
    return zeros;
  }
  return n.grad;
}

Tensor& Tape::accumulate(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (backward_done_) throw StateError("backward() called twice on the same forward pass");
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  accumulate(loss).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
    } else if (n.store != nullptr) {
      auto dst = (*n.store)[n.param].grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

// ----------------------------------------------------------------------- ops

namespace ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + " input, got " +
                     shape_string(t.shape()));
  }
}

// Range of output positions o with 0 <= o*stride + offset - padding < n.
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t n, std::size_t stride,
                                                std::size_t offset, std::size_t padding) {
  std::size_t lo = 0;
  if (padding > offset) lo = (padding - offset + stride - 1) / stride;
  std::size_t hi = 0;
  // largest o with o*stride + offset - padding <= n-1
  if (n + padding > offset) hi = std::min(out, (n - 1 + padding - offset) / stride + 1);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

enum class PoolKind { max, avg };

Var pool2d(Tape& tape, Var input, std::size_t window, std::size_t stride, PoolKind kind) {
  const Tensor& x = tape.value(input);
  require_rank(x, 4, "pool2d");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (window > H || window > W) {
    throw ShapeError("pool2d: window " + std::to_string(window) + " larger than input " + shape_string(x.shape()));
  }
  const std::size_t OH = conv_output_size(H, window, stride, 0);
  const std::size_t OW = conv_output_size(W, window, stride, 0);
  Tensor y({N, C, OH, OW});
  std::vector<std::uint32_t> argmax;
  if (kind == PoolKind::max) argmax.resize(y.size());
  const double inv = 1.0 / static_cast<double>(window * window);
  const double* xd = x.data().data();
  double* yd = y.data().data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const double* plane = xd + nc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const std::size_t out = (nc * OH + oy) * OW + ox;
        if (kind == PoolKind::max) {
          double best = -std::numeric_limits<double>::infinity();
          std::uint32_t at = 0;
          for (std::size_t ky = 0; ky < window; ++ky) {
            const std::size_t row = (oy * stride + ky) * W;
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t idx = row + ox * stride + kx;
              // strict '>' keeps the first row-major maximum
              if (plane[idx] > best || (ky == 0 && kx == 0)) {
                best = plane[idx];
                at = static_cast<std::uint32_t>(idx);
              }
            }
          }
          yd[out] = best;
          argmax[out] = at;
        } else {
          double s = 0.0;
          for (std::size_t ky = 0; ky < window; ++ky) {
            const double* row = plane + (oy * stride + ky) * W + ox * stride;
            for (std::size_t kx = 0; kx < window; ++kx) s += inv * row[kx];
          }
          yd[out] = s;
        }
      }
    }
  }
  const Var ins[] = {input};
  return tape.record(std::move(y), ins,
                     [input, window, stride, kind, N, C, H, W, OH, OW, inv,
                      argmax = std::move(argmax)](Tape& t, const Tensor& gy) {
                       double* gx = t.accumulate(input).data().data();
                       const double* g = gy.data().data();
                       for (std::size_t nc = 0; nc < N * C; ++nc) {
                         double* plane = gx + nc * H * W;
                         for (std::size_t oy = 0; oy < OH; ++oy) {
                           for (std::size_t ox = 0; ox < OW; ++ox) {
                             const std::size_t out = (nc * OH + oy) * OW + ox;
                             if (kind == PoolKind::max) {
                               plane[argmax[out]] += g[out];
                             } else {
                               const double share = inv * g[out];
                               for (std::size_t ky = 0; ky < window; ++ky) {
                                 double* row = plane + (oy * stride + ky) * W + ox * stride;
                                 for (std::size_t kx = 0; kx < window; ++kx) row[kx] += share;
                               }
                             }
                           }
                         }
                       }
                     });
}

}  // namespace

Var conv2d(Tape& tape, Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(weight);
  const Tensor& b = tape.value(bias);
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d weight");
  if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: input " + shape_string(x.shape()) + " incompatible with filters " +
                     shape_string(w.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw ShapeError("conv2d: bias " + shape_string(b.shape()) + " incompatible with filters " +
                     shape_string(w.shape()));
  }
  const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(0), K = w.dim(2);
  const std::size_t OH = conv_output_size(H, K, stride, padding);
  const std::size_t OW = conv_output_size(W, K, stride, padding);

  Tensor y({N, Cout, OH, OW});
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  double* yd = y.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Cout; ++co) {
      double* yp = yd + (n * Cout + co) * OH * OW;
      std::fill(yp, yp + OH * OW, b[co]);
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* xp = xd + (n * Cin + ci) * H * W;
        for (std::size_t ky = 0; ky < K; ++ky) {
          const auto [oy0, oy1] = valid_range(OH, H, stride, ky, padding);
          for (std::size_t kx = 0; kx < K; ++kx) {
            const auto [ox0, ox1] = valid_range(OW, W, stride, kx, padding);
            const double wv = wd[((co * Cin + ci) * K + ky) * K + kx];
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>((oy * stride + ky - padding) * W + kx) -
                                         static_cast<std::ptrdiff_t>(padding);
              const double* xr = xp + off;
              double* yr = yp + oy * OW;
              if (stride == 1) {
                for (std::size_t ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox];
              } else {
                for (std::size_t ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox * stride];
              }
            }
          }
        }
      }
    }
  }

  const Var ins[] = {input, weight, bias};
  return tape.record(std::move(y), ins, [=](Tape& t, const Tensor& gy) {
    const Tensor& xv = t.value(input);
    const Tensor& wv_t = t.value(weight);
    const double* xd2 = xv.data().data();
    const double* wd2 = wv_t.data().data();
    const double* g = gy.data().data();
    const bool need_x = t.requires_grad(input);
    const bool need_w = t.requires_grad(weight);
    const bool need_b = t.requires_grad(bias);
    double* gx = need_x ? t.accumulate(input).data().data() : nullptr;
    double* gw = need_w ? t.accumulate(weight).data().data() : nullptr;
    double* gb = need_b ? t.accumulate(bias).data().data() : nullptr;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t co = 0; co < Cout; ++co) {
        const double* gp = g + (n * Cout + co) * OH * OW;
        if (gb) {
          double s = 0.0;
          for (std::size_t i = 0; i < OH * OW; ++i) s += gp[i];
          gb[co] += s;
        }
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          const double* xp = xd2 + (n * Cin + ci) * H * W;
          double* gxp = gx ? gx + (n * Cin + ci) * H * W : nullptr;
          for (std::size_t ky = 0; ky < K; ++ky) {
            const auto [oy0, oy1] = valid_range(OH, H, stride, ky, padding);
            for (std::size_t kx = 0; kx < K; ++kx) {
              const auto [ox0, ox1] = valid_range(OW, W, stride, kx, padding);
              const std::size_t widx = ((co * Cin + ci) * K + ky) * K + kx;
              const double wval = wd2[widx];
              double acc = 0.0;
              for (std::size_t oy = oy0; oy < oy1; ++oy) {
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>((oy * stride + ky - padding) * W + kx) -
                                           static_cast<std::ptrdiff_t>(padding);
                const double* xr = xp + off;
                const double* gr = gp + oy * OW;
                if (stride == 1) {
                  for (std::size_t ox = ox0; ox < ox1; ++ox) acc += gr[ox] * xr[ox];
                  if (gxp) {
                    double* gxr = gxp + off;
                    for (std::size_t ox = ox0; ox < ox1; ++ox) gxr[ox] += wval * gr[ox];
                  }
                } else {
                  for (std::size_t ox = ox0; ox < ox1; ++ox) acc += gr[ox] * xr[ox * stride];
                  if (gxp) {
                    double* gxr = gxp + off;
                    for (std::size_t ox = ox0; ox < ox1; ++ox) gxr[ox * stride] += wval * gr[ox];
                  }
                }
              }
              if (gw) gw[widx] += acc;
            }
          }
        }
      }
    }
  });
}

Var max_pool2d(Tape& tape, Var input, std::size_t window, std::size_t stride) {
  return pool2d(tape, input, window, stride, PoolKind::max);
}

Var avg_pool2d(Tape& tape, Var input, std::size_t window, std::size_t stride) {
  return pool2d(tape, input, window, stride, PoolKind::avg);
}

Var dense(Tape& tape, Var input, Var weight, Var bias) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(weight);
  const Tensor& b = tape.value(bias);
  require_rank(x, 2, "dense");
  require_rank(w, 2, "dense weight");
  if (x.dim(1) != w.dim(0) || b.rank() != 1 || b.dim(0) != w.dim(1)) {
    throw ShapeError("dense: input " + shape_string(x.shape()) + " incompatible with weight " +
                     shape_string(w.shape()) + " and bias " + shape_string(b.shape()));
  }
  const std::size_t N = x.dim(0), F = w.dim(0), D = w.dim(1);
  Tensor y({N, D});
  for (std::size_t n = 0; n < N; ++n) {
    double* yr = y.data().data() + n * D;
    std::copy(b.data().begin(), b.data().end(), yr);
    const double* xr = x.data().data() + n * F;
    for (std::size_t f = 0; f < F; ++f) {
      const double xv = xr[f];
      const double* wr = w.data().data() + f * D;
      for (std::size_t d = 0; d < D; ++d) yr[d] += xv * wr[d];
    }
  }
  const Var ins[] = {input, weight, bias};
  return tape.record(std::move(y), ins, [=](Tape& t, const Tensor& gy) {
    const double* xd = t.value(input).data().data();
    const double* wd = t.value(weight).data().data();
    const double* g = gy.data().data();
    double* gx = t.requires_grad(input) ? t.accumulate(input).data().data() : nullptr;
    double* gw = t.requires_grad(weight) ? t.accumulate(weight).data().data() : nullptr;
    double* gb = t.requires_grad(bias) ? t.accumulate(bias).data().data() : nullptr;
    for (std::size_t n = 0; n < N; ++n) {
      const double* gr = g + n * D;
      if (gb) {
        for (std::size_t d = 0; d < D; ++d) gb[d] += gr[d];
      }
      const double* xr = xd + n * F;
      for (std::size_t f = 0; f < F; ++f) {
        const double* wr = wd + f * D;
        if (gw) {
          double* gwr = gw + f * D;
          const double xv = xr[f];
          for (std::size_t d = 0; d < D; ++d) gwr[d] += xv * gr[d];
        }
        if (gx) {
          double s = 0.0;
          for (std::size_t d = 0; d < D; ++d) s += wr[d] * gr[d];
          gx[n * F + f] += s;
        }
      }
    }
  });
}

Var concat_channels(Tape& tape, std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = tape.value(inputs[0]);
  require_rank(first, 4, "concat_channels");
  const std::size_t N = first.dim(0), H = first.dim(2), W = first.dim(3);
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (Var v : inputs) {
    const Tensor& t = tape.value(v);
    require_rank(t, 4, "concat_channels");
    if (t.dim(0) != N || t.dim(2) != H || t.dim(3) != W) {
      throw ShapeError("concat_channels: spatial mismatch " + shape_string(first.shape()) + " vs " +
                       shape_string(t.shape()));
    }
    channels.push_back(t.dim(1));
    total += t.dim(1);
  }
  const std::size_t plane = H * W;
  Tensor y({N, total, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const double* src = tape.value(inputs[k]).data().data() + n * channels[k] * plane;
      std::copy(src, src + channels[k] * plane, y.data().data() + (n * total + offset) * plane);
      offset += channels[k];
    }
  }
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return tape.record(std::move(y), inputs, [ins, channels, N, total, plane](Tape& t, const Tensor& gy) {
    for (std::size_t n = 0; n < N; ++n) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < ins.size(); ++k) {
        if (t.requires_grad(ins[k])) {
          const double* src = gy.data().data() + (n * total + offset) * plane;
          double* dst = t.accumulate(ins[k]).data().data() + n * channels[k] * plane;
          for (std::size_t i = 0; i < channels[k] * plane; ++i) dst[i] += src[i];
        }
        offset += channels[k];
      }
    }
  });
}

Var add(Tape& tape, std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("add: no inputs");
  Tensor y = tape.value(inputs[0]);
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    const Tensor& t = tape.value(inputs[k]);
    if (t.shape() != y.shape()) {
      throw ShapeError("add: shape mismatch " + shape_string(y.shape()) + " vs " + shape_string(t.shape()));
    }
    auto yd = y.data();
    auto td = t.data();
    for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += td[i];
  }
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return tape.record(std::move(y), inputs, [ins](Tape& t, const Tensor& gy) {
    for (Var v : ins) {
      if (!t.requires_grad(v)) continue;
      auto dst = t.accumulate(v).data();
      auto src = gy.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  });
}

Var crop(Tape& tape, Var input, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  const Tensor& x = tape.value(input);
  require_rank(x, 4, "crop");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (top + height > H || left + width > W || height == 0 || width == 0) {
    throw ShapeError("crop: window exceeds input " + shape_string(x.shape()));
  }
  Tensor y({N, C, height, width});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    for (std::size_t r = 0; r < height; ++r) {
      const double* src = x.data().data() + (nc * H + top + r) * W + left;
      std::copy(src, src + width, y.data().data() + (nc * height + r) * width);
    }
  }
  const Var ins[] = {input};
  return tape.record(std::move(y), ins, [=](Tape& t, const Tensor& gy) {
    double* gx = t.accumulate(input).data().data();
    for (std::size_t nc = 0; nc < N * C; ++nc) {
      for (std::size_t r = 0; r < height; ++r) {
        const double* src = gy.data().data() + (nc * height + r) * width;
        double* dst = gx + (nc * H + top + r) * W + left;
        for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
      }
    }
  });
}

Var flatten(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  if (x.rank() < 2) throw ShapeError("flatten: input must have a batch axis");
  const std::size_t N = x.dim(0);
  Tensor y({N, x.size() / std::max<std::size_t>(N, 1)}, x.storage());
  const Var ins[] = {input};
  return tape.record(std::move(y), ins, [input](Tape& t, const Tensor& gy) {
    auto dst = t.accumulate(input).data();
    auto src = gy.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

Var scaled_tanh(Tape& tape, Var input, std::span<const double> lo, std::span<const double> hi) {
  const Tensor& z = tape.value(input);
  require_rank(z, 2, "scaled_tanh");
  const std::size_t N = z.dim(0), D = z.dim(1);
  if (lo.size() != D || hi.size() != D) {
    throw ShapeError("scaled_tanh: bounds of length " + std::to_string(lo.size()) + " for input " +
                     shape_string(z.shape()));
  }
  Tensor y({N, D});
  Tensor slope({N, D});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t i = n * D + d;
      const double th = std::tanh(z[i]);
      const double half = 0.5 * (hi[d] - lo[d]);
      double v = lo[d] + half * (th + 1.0);
      v = std::clamp(v, std::nextafter(lo[d], hi[d]), std::nextafter(hi[d], lo[d]));
      y[i] = v;
      slope[i] = half * (1.0 - th * th);
    }
  }
  const Var ins[] = {input};
  return tape.record(std::move(y), ins, [input, slope = std::move(slope)](Tape& t, const Tensor& gy) {
    auto dst = t.accumulate(input).data();
    auto src = gy.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += slope[i] * src[i];
  });
}

Var sum(Tape& tape, Var input) {
  double s = 0.0;
  for (double v : tape.value(input).data()) s += v;
  const Var ins[] = {input};
  return tape.record(Tensor({1}, s), ins, [input](Tape& t, const Tensor& gy) {
    const double g = gy[0];
    for (double& v : t.accumulate(input).data()) v += g;
  });
}

Var external_scalar(Tape& tape, Var input, double value, Tensor grad) {
  if (grad.shape() != tape.value(input).shape()) {
    throw ShapeError("external_scalar: gradient " + shape_string(grad.shape()) + " does not match input " +
                     shape_string(tape.value(input).shape()));
  }
  const Var ins[] = {input};
  return tape.record(Tensor({1}, value), ins, [input, grad = std::move(grad)](Tape& t, const Tensor& gy) {
    const double g = gy[0];
    auto dst = t.accumulate(input).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g * grad[i];
  });
}

}  // namespace ops
}  // namespace nasopt
