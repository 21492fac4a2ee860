#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "sigdfp/common.hpp"
#include "sigdfp/fastmath.hpp"
#include "sigdfp/linalg.hpp"
#include "sigdfp/rng.hpp"

namespace sigdfp {

enum class Activation { Tanh, Softplus, Relu };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
    case Activation::Relu: return "relu";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  if (s == "relu") return Activation::Relu;
  throw config_error("unknown activation: " + s);
}

// hidden-layer nonlinearity, in place
inline void apply_activation(Activation a, double* x, std::size_t n) {
  switch (a) {
    case Activation::Tanh:
      vtanh(x, n);
      return;
    case Activation::Softplus:
      // log(1+e^x) = max(x,0) + log1p(e^-|x|)
      for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        const double ax = v > 0.0 ? v : -v;
        x[i] = (v > 0.0 ? v : 0.0) + std::log1p(fast_exp(-ax));
      }
      return;
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
      return;
  }
}

// derivative expressed through the post-activation value h
inline double activation_deriv(Activation a, double h) {
  switch (a) {
    case Activation::Tanh: return 1.0 - h * h;
    case Activation::Softplus: return 1.0 - fast_exp(-h);  // sigmoid(pre)
    case Activation::Relu: return h > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

// Feedforward control network. Hidden layers apply the activation, the
// output layer is affine. Weights are kept both as in x out and transposed
// (out x in) so forward and backward passes share the same row-major kernel.
struct ControlNet {
  struct Layer {
    int in = 0, out = 0;
    std::vector<double> w;   // in x out
    std::vector<double> wt;  // out x in
    std::vector<double> b;   // out
  };
  std::vector<Layer> layers;
  Activation activation = Activation::Tanh;

  int input_dim() const { return layers.front().in; }
  int output_dim() const { return layers.back().out; }
  std::size_t n_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }
};

// widths = {in, hidden..., out}; uniform(+-sqrt(6/(fan_in+fan_out))) weights,
// zero biases. last_scale multiplies the output layer's weights (0 starts
// the control at zero, useful when the objective explodes for large
// controls).
inline ControlNet make_net(const std::vector<int>& widths, std::uint64_t seed,
                           Activation act = Activation::Tanh, double last_scale = 1.0) {
  SIGDFP_REQUIRE(widths.size() >= 2, "make_net: need at least input and output widths");
  ControlNet net;
  net.activation = act;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    ControlNet::Layer layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
    layer.wt.resize(layer.w.size());
    layer.b.assign(layer.out, 0.0);
    double bound = std::sqrt(6.0 / (layer.in + layer.out));
    if (l + 2 == widths.size()) bound *= last_scale;
    for (int i = 0; i < layer.in; ++i)
      for (int o = 0; o < layer.out; ++o) {
        const double v = rng.uniform(-bound, bound);
        layer.w[static_cast<std::size_t>(i) * layer.out + o] = v;
        layer.wt[static_cast<std::size_t>(o) * layer.in + i] = v;
      }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

// Gradient accumulator with the same shape as the parameters.
struct NetGrad {
  struct Layer {
    std::vector<double> dw;
    std::vector<double> db;
  };
  std::vector<Layer> layers;

  explicit NetGrad(const ControlNet& net) {
    layers.resize(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      layers[l].dw.assign(net.layers[l].w.size(), 0.0);
      layers[l].db.assign(net.layers[l].b.size(), 0.0);
    }
  }
  void zero() {
    for (auto& l : layers) {
      std::fill(l.dw.begin(), l.dw.end(), 0.0);
      std::fill(l.db.begin(), l.db.end(), 0.0);
    }
  }
  void add(const NetGrad& o) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t i = 0; i < layers[l].dw.size(); ++i) layers[l].dw[i] += o.layers[l].dw[i];
      for (std::size_t i = 0; i < layers[l].db.size(); ++i) layers[l].db[i] += o.layers[l].db[i];
    }
  }
};

// Per-step activations of one chunk of paths, kept for the backward sweep.
struct NetTape {
  // act[l] holds the post-activation output of hidden layer l (rows x width);
  // input holds the network input (rows x in).
  std::vector<double> input;
  std::vector<std::vector<double>> act;
};

// rows x in  ->  rows x out. If tape is non-null the input and hidden
// activations are recorded there. scratch provides two ping-pong buffers so
// consecutive hidden layers never alias.
struct NetScratch {
  std::vector<double> a, b;
};

inline void net_forward(const ControlNet& net, int rows, const double* x,
                        double* out, NetTape* tape, NetScratch& scratch) {
  const std::size_t n_layers = net.layers.size();
  if (tape) {
    tape->input.assign(x, x + static_cast<std::size_t>(rows) * net.input_dim());
    tape->act.resize(n_layers - 1);
  }
  const double* cur = x;
  bool use_a = true;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = net.layers[l];
    double* dst;
    if (l + 1 == n_layers) {
      dst = out;
    } else if (tape) {
      tape->act[l].resize(static_cast<std::size_t>(rows) * layer.out);
      dst = tape->act[l].data();
    } else {
      auto& buf = use_a ? scratch.a : scratch.b;
      use_a = !use_a;
      buf.resize(static_cast<std::size_t>(rows) * layer.out);
      dst = buf.data();
    }
    matmul(rows, layer.in, layer.out, cur, layer.w.data(), layer.b.data(), dst);
    if (l + 1 < n_layers)
      apply_activation(net.activation, dst, static_cast<std::size_t>(rows) * layer.out);
    cur = dst;
  }
}

// Reverse pass for one chunk: d_out is rows x out; parameter gradients are
// accumulated into grad and the gradient w.r.t. the network input is written
// to d_in (rows x in) when it is non-null.
inline void net_backward(const ControlNet& net, int rows, const NetTape& tape,
                         const double* d_out, NetGrad& grad, double* d_in,
                         std::vector<double>& scratch_a, std::vector<double>& scratch_b) {
  const int n_layers = static_cast<int>(net.layers.size());
  scratch_a.assign(d_out, d_out + static_cast<std::size_t>(rows) * net.output_dim());
  std::vector<double>* dh = &scratch_a;
  std::vector<double>* dx = &scratch_b;
  for (int l = n_layers - 1; l >= 0; --l) {
    const auto& layer = net.layers[l];
    const double* x_l = (l == 0) ? tape.input.data() : tape.act[l - 1].data();
    acc_weight_grad(rows, layer.in, layer.out, x_l, dh->data(), grad.layers[l].dw.data());
    acc_bias_grad(rows, layer.out, dh->data(), grad.layers[l].db.data());
    const bool need_dx = (l > 0) || (d_in != nullptr);
    if (!need_dx) break;
    double* dst = (l == 0) ? d_in : (dx->resize(static_cast<std::size_t>(rows) * layer.in),
                                     dx->data());
    matmul(rows, layer.out, layer.in, dh->data(), layer.wt.data(), nullptr, dst);
    if (l > 0) {
      const double* act = tape.act[l - 1].data();
      const std::size_t nv = static_cast<std::size_t>(rows) * layer.in;
      if (net.activation == Activation::Tanh) {
        for (std::size_t i = 0; i < nv; ++i) dst[i] *= 1.0 - act[i] * act[i];
      } else {
        for (std::size_t i = 0; i < nv; ++i) dst[i] *= activation_deriv(net.activation, act[i]);
      }
      std::swap(dh, dx);
    }
  }
}

// Piecewise-constant schedule: lr(round) = base / factor^(#boundaries <= round).
struct SgdSchedule {
  double base = 0.1;
  double factor = 5.0;
  std::vector<long> boundaries;

  double lr(long round) const {
    int hits = 0;
    for (long b : boundaries)
      if (b <= round) ++hits;
    double v = base;
    for (int i = 0; i < hits; ++i) v /= factor;
    if (!(v > 0.0)) throw config_error("SgdSchedule: learning rate must stay positive");
    return v;
  }
};

// theta <- theta - lr * scale * grad. scale carries the 1/batch factor so
// accumulated per-path gradients become the batch mean.
inline void sgd_step(ControlNet& net, const NetGrad& grad, double lr, double scale = 1.0) {
  SIGDFP_REQUIRE(grad.layers.size() == net.layers.size(), "sgd_step: shape mismatch");
  const double step = lr * scale;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    const auto& g = grad.layers[l];
    for (int i = 0; i < layer.in; ++i)
      for (int o = 0; o < layer.out; ++o) {
        const std::size_t iw = static_cast<std::size_t>(i) * layer.out + o;
        const double v = layer.w[iw] - step * g.dw[iw];
        layer.w[iw] = v;
        layer.wt[static_cast<std::size_t>(o) * layer.in + i] = v;
      }
    for (int o = 0; o < layer.out; ++o) layer.b[o] -= step * g.db[o];
  }
}

// ---- checkpoint I/O ----------------------------------------------------

inline void write_net(std::FILE* f, const ControlNet& net) {
  const std::uint32_t nl = static_cast<std::uint32_t>(net.layers.size());
  std::fwrite(&nl, 4, 1, f);
  const std::uint32_t act = static_cast<std::uint32_t>(net.activation);
  std::fwrite(&act, 4, 1, f);
  for (const auto& l : net.layers) {
    const std::uint32_t in = l.in, out = l.out;
    std::fwrite(&in, 4, 1, f);
    std::fwrite(&out, 4, 1, f);
    std::fwrite(l.w.data(), sizeof(double), l.w.size(), f);
    std::fwrite(l.b.data(), sizeof(double), l.b.size(), f);
  }
}

inline bool read_net(std::FILE* f, ControlNet& net) {
  std::uint32_t nl = 0, act = 0;
  if (std::fread(&nl, 4, 1, f) != 1 || std::fread(&act, 4, 1, f) != 1) return false;
  net.layers.resize(nl);
  net.activation = static_cast<Activation>(act);
  for (auto& l : net.layers) {
    std::uint32_t in = 0, out = 0;
    if (std::fread(&in, 4, 1, f) != 1 || std::fread(&out, 4, 1, f) != 1) return false;
    l.in = in;
    l.out = out;
    l.w.resize(static_cast<std::size_t>(in) * out);
    l.wt.resize(l.w.size());
    l.b.resize(out);
    if (std::fread(l.w.data(), sizeof(double), l.w.size(), f) != l.w.size()) return false;
    if (std::fread(l.b.data(), sizeof(double), l.b.size(), f) != l.b.size()) return false;
    for (int i = 0; i < l.in; ++i)
      for (int o = 0; o < l.out; ++o)
        l.wt[static_cast<std::size_t>(o) * l.in + i] = l.w[static_cast<std::size_t>(i) * l.out + o];
  }
  return true;
}

}  // namespace sigdfp
