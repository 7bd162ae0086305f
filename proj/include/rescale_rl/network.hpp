#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rescale_rl/activation.hpp"
#include "rescale_rl/matrix.hpp"

namespace rescale {

using Rng = std::mt19937_64;

struct DenseLayer {
  Matrix weight;             // out x in
  std::vector<double> bias;  // out
  Activation activation;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Feed-forward stack of dense layers. Layer i maps h_{i-1} to act_i(W_i h_{i-1} + b_i).
struct Network {
  std::vector<DenseLayer> layers;

  std::size_t n_layers() const { return layers.size(); }
  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Throws std::invalid_argument when the layer chain or parameter values are malformed.
  void validate() const {
    if (layers.empty()) throw std::invalid_argument("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.bias.size() != l.out_dim())
        throw std::invalid_argument("layer " + std::to_string(i) + ": bias size mismatch");
      if (i > 0 && l.in_dim() != layers[i - 1].out_dim())
        throw std::invalid_argument("layer " + std::to_string(i) + ": input width " +
                                    std::to_string(l.in_dim()) + " does not match previous output " +
                                    std::to_string(layers[i - 1].out_dim()));
      for (double w : l.weight.values())
        if (!std::isfinite(w)) throw std::invalid_argument("layer " + std::to_string(i) + ": non-finite weight");
      for (double b : l.bias)
        if (!std::isfinite(b)) throw std::invalid_argument("layer " + std::to_string(i) + ": non-finite bias");
    }
  }

  friend bool operator==(const Network&, const Network&) = default;
};

// Uniform Glorot initialisation, zero biases.
inline Network make_network(std::span<const std::size_t> widths, Activation hidden, Activation output, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("make_network: need at least input and output widths");
  Network net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i], out = widths[i + 1];
    if (in == 0 || out == 0) throw std::invalid_argument("make_network: zero width");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0), i + 2 == widths.size() ? output : hidden};
    for (double& w : layer.weight.values()) w = dist(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline Network make_network(std::initializer_list<std::size_t> widths, Activation hidden, Activation output,
                            Rng& rng) {
  const std::vector<std::size_t> w(widths);
  return make_network(std::span<const std::size_t>(w), hidden, output, rng);
}

// Per-layer preactivations z_i and postactivations h_i for one batch.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  std::vector<Activation> activations;

  std::size_t batch_size() const { return input.rows(); }
  std::size_t n_layers() const { return pre.size(); }
  const Matrix& output() const { return post.back(); }
};

inline ForwardTrace forward(const Network& net, const Matrix& inputs) {
  if (net.layers.empty()) throw std::invalid_argument("forward: network has no layers");
  if (inputs.cols() != net.input_dim() && !(inputs.rows() == 0 && inputs.cols() == 0))
    throw std::invalid_argument("forward: input width " + std::to_string(inputs.cols()) + " != network input " +
                                std::to_string(net.input_dim()));
  const std::size_t batch = inputs.rows();
  ForwardTrace trace;
  trace.input = inputs.cols() == net.input_dim() ? inputs : Matrix(0, net.input_dim());
  trace.pre.reserve(net.n_layers());
  trace.post.reserve(net.n_layers());
  const Matrix* h = &trace.input;
  for (const auto& layer : net.layers) {
    const std::size_t out = layer.out_dim(), in = layer.in_dim();
    Matrix z(batch, out);
    Matrix a(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto x = h->row(b);
      for (std::size_t o = 0; o < out; ++o) {
        const auto w = layer.weight.row(o);
        double s = layer.bias[o];
        for (std::size_t i = 0; i < in; ++i) s += w[i] * x[i];
        z(b, o) = s;
        a(b, o) = activation_value(layer.activation, s);
      }
    }
    trace.pre.push_back(std::move(z));
    trace.post.push_back(std::move(a));
    trace.activations.push_back(layer.activation);
    h = &trace.post.back();
  }
  return trace;
}

inline Matrix predict(const Network& net, const Matrix& inputs) { return forward(net, inputs).output(); }

inline std::vector<double> predict_one(const Network& net, std::span<const double> x) {
  Matrix in(1, x.size(), std::vector<double>(x.begin(), x.end()));
  const auto out = predict(net, in);
  return {out.values().begin(), out.values().end()};
}

// Parameter-shaped container: one weight matrix and one bias vector per layer.
struct Gradients {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  static Gradients zeros_like(const Network& net) {
    Gradients g;
    for (const auto& l : net.layers) {
      g.weight.emplace_back(l.weight.rows(), l.weight.cols());
      g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }

  bool matches(const Network& net) const {
    if (weight.size() != net.n_layers() || bias.size() != net.n_layers()) return false;
    for (std::size_t i = 0; i < weight.size(); ++i)
      if (!weight[i].same_shape(net.layers[i].weight) || bias[i].size() != net.layers[i].bias.size()) return false;
    return true;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weight)
      for (double v : w.values()) s += v * v;
    for (const auto& b : bias)
      for (double v : b) s += v * v;
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  void scale(double c) {
    for (auto& w : weight)
      for (double& v : w.values()) v *= c;
    for (auto& b : bias)
      for (double& v : b) v *= c;
  }

  bool all_finite() const {
    for (const auto& w : weight)
      for (double v : w.values())
        if (!std::isfinite(v)) return false;
    for (const auto& b : bias)
      for (double v : b)
        if (!std::isfinite(v)) return false;
    return true;
  }
};

struct BackwardResult {
  Gradients params;
  Matrix input_grad;  // dL/dinput, same shape as the traced input
};

// Reverse-mode pass. `output_grad` holds dL/doutput per sample; parameter gradients are
// summed over the batch, so any 1/N belongs in `output_grad`.
inline BackwardResult backward(const Network& net, const ForwardTrace& trace, const Matrix& output_grad) {
  const std::size_t n = net.n_layers();
  if (trace.n_layers() != n || trace.post.size() != n)
    throw std::invalid_argument("backward: trace has " + std::to_string(trace.n_layers()) + " layers, network has " +
                                std::to_string(n));
  const std::size_t batch = trace.batch_size();
  for (std::size_t i = 0; i < n; ++i)
    if (trace.pre[i].rows() != batch || trace.pre[i].cols() != net.layers[i].out_dim())
      throw std::invalid_argument("backward: stale trace at layer " + std::to_string(i));
  if (trace.input.cols() != net.input_dim())
    throw std::invalid_argument("backward: stale trace input width");
  if (output_grad.rows() != batch || output_grad.cols() != net.output_dim())
    throw std::invalid_argument("backward: output gradient " + shape_string(output_grad) + " does not match " +
                                std::to_string(batch) + "x" + std::to_string(net.output_dim()));

  BackwardResult result{Gradients::zeros_like(net), Matrix()};
  Matrix delta = output_grad;  // dL/dh_i, becomes dL/dz_i in place
  for (std::size_t li = n; li-- > 0;) {
    const auto& layer = net.layers[li];
    const Matrix& z = trace.pre[li];
    const Matrix& h_prev = li == 0 ? trace.input : trace.post[li - 1];
    const std::size_t out = layer.out_dim(), in = layer.in_dim();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < out; ++o) delta(b, o) *= activation_value_and_grad(layer.activation, z(b, o)).derivative;

    auto& gw = result.params.weight[li];
    auto& gb = result.params.bias[li];
    Matrix prev_delta(batch, in);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto x = h_prev.row(b);
      auto pd = prev_delta.row(b);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta(b, o);
        if (d == 0.0) continue;
        gb[o] += d;
        auto gwr = gw.row(o);
        const auto w = layer.weight.row(o);
        for (std::size_t i = 0; i < in; ++i) {
          gwr[i] += d * x[i];
          pd[i] += d * w[i];
        }
      }
    }
    delta = std::move(prev_delta);
  }
  result.input_grad = std::move(delta);
  return result;
}

struct MseResult {
  double loss;
  std::vector<double> grad;  // dL/dpred
};

// loss = (1/N) sum (pred - target)^2, grad = (2/N)(pred - target).
inline MseResult mse_loss_and_grad(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw std::invalid_argument("mse: prediction length " + std::to_string(pred.size()) + " != target length " +
                                std::to_string(target.size()));
  if (pred.empty()) throw std::invalid_argument("mse: empty input");
  const double n = static_cast<double>(pred.size());
  MseResult r{0.0, std::vector<double>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

// Calls fn(param_span, grad_span) for every weight and bias tensor in layer order.
template <typename Fn>
void for_each_parameter(Network& net, const Gradients& grads, Fn&& fn) {
  for (std::size_t i = 0; i < net.n_layers(); ++i) {
    fn(net.layers[i].weight.values(), grads.weight[i].values());
    fn(std::span<double>(net.layers[i].bias), std::span<const double>(grads.bias[i]));
  }
}

// ---------------------------------------------------------------------------
// Text serialisation. Layout:
//   rescale_rl.network v1
//   layers=<n>
//   layer <i> <activation> <in> <out>
//   <out lines of <in> weights, row-major>
//   <one line of <out> biases>
// All numbers are written with 17 significant digits so a round trip is exact.

inline void write_network(std::ostream& os, const Network& net) {
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  os << "rescale_rl.network v1\n";
  os << "layers=" << net.n_layers() << "\n";
  for (std::size_t i = 0; i < net.n_layers(); ++i) {
    const auto& l = net.layers[i];
    os << "layer " << i << ' ' << to_string(l.activation) << ' ' << l.in_dim() << ' ' << l.out_dim() << "\n";
    for (std::size_t r = 0; r < l.out_dim(); ++r) {
      for (std::size_t c = 0; c < l.in_dim(); ++c) os << (c ? " " : "") << num(l.weight(r, c));
      os << "\n";
    }
    for (std::size_t r = 0; r < l.out_dim(); ++r) os << (r ? " " : "") << num(l.bias[r]);
    os << "\n";
  }
}

inline std::string network_to_string(const Network& net) {
  std::ostringstream os;
  write_network(os, net);
  return os.str();
}

inline Network read_network(std::istream& is) {
  auto fail = [](const std::string& what) -> void { throw std::runtime_error("network file: " + what); };
  std::string magic, version;
  if (!(is >> magic >> version) || magic != "rescale_rl.network") fail("missing header");
  if (version != "v1") fail("unsupported version '" + version + "'");
  std::string count_tok;
  if (!(is >> count_tok) || count_tok.rfind("layers=", 0) != 0) fail("missing layers= line");
  std::size_t n = 0;
  try {
    n = std::stoul(count_tok.substr(7));
  } catch (const std::exception&) {
    fail("bad layer count");
  }
  if (n == 0) fail("network has no layers");
  Network net;
  for (std::size_t i = 0; i < n; ++i) {
    std::string tag, act;
    std::size_t idx = 0, in = 0, out = 0;
    if (!(is >> tag >> idx >> act >> in >> out) || tag != "layer" || idx != i)
      fail("bad header for layer " + std::to_string(i));
    DenseLayer layer{Matrix(out, in), std::vector<double>(out), parse_activation(act)};
    for (double& w : layer.weight.values())
      if (!(is >> w)) fail("truncated weights in layer " + std::to_string(i));
    for (double& b : layer.bias)
      if (!(is >> b)) fail("truncated biases in layer " + std::to_string(i));
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

inline Network network_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_network(is);
}

}  // namespace rescale
