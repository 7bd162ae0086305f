#pragma once

#include <cstddef>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "rescale_rl/network.hpp"

namespace rescale {

// A ReLU neuron is pseudo-dying with respect to a batch when its preactivation is <= 0 on
// every sample of that batch.
inline std::vector<bool> pseudo_dying_mask(const ForwardTrace& trace, std::size_t layer) {
  if (layer >= trace.n_layers())
    throw std::out_of_range("pseudo_dying_mask: layer " + std::to_string(layer) + " out of range");
  if (trace.activations[layer].type != ActivationType::ReLU)
    throw std::invalid_argument("pseudo_dying_mask: layer " + std::to_string(layer) + " is " +
                                to_string(trace.activations[layer]) + ", not relu");
  const Matrix& z = trace.pre[layer];
  if (z.rows() == 0) throw std::invalid_argument("pseudo_dying_mask: empty batch");
  std::vector<bool> mask(z.cols(), true);
  for (std::size_t b = 0; b < z.rows(); ++b) {
    const auto row = z.row(b);
    for (std::size_t n = 0; n < z.cols(); ++n)
      if (row[n] > 0.0) mask[n] = false;
  }
  return mask;
}

struct LayerPdrr {
  std::size_t layer = 0;  // index into Network::layers
  std::size_t n_neurons = 0;
  std::size_t n_pseudo_dying = 0;
  double ratio = 0.0;

  friend bool operator==(const LayerPdrr&, const LayerPdrr&) = default;
};

struct PdrrReport {
  std::size_t window_size = 0;
  std::vector<LayerPdrr> layers;  // one entry per ReLU layer, in network order

  double mean_ratio() const {
    if (layers.empty()) return 0.0;
    double s = 0.0;
    for (const auto& l : layers) s += l.ratio;
    return s / static_cast<double>(layers.size());
  }

  friend bool operator==(const PdrrReport&, const PdrrReport&) = default;
};

inline PdrrReport pdrr_report(const ForwardTrace& trace) {
  if (trace.batch_size() == 0) throw std::invalid_argument("pdrr_report: empty sample window");
  PdrrReport report;
  report.window_size = trace.batch_size();
  for (std::size_t i = 0; i < trace.n_layers(); ++i) {
    if (trace.activations[i].type != ActivationType::ReLU) continue;
    const auto mask = pseudo_dying_mask(trace, i);
    LayerPdrr l;
    l.layer = i;
    l.n_neurons = mask.size();
    for (bool m : mask) l.n_pseudo_dying += m ? 1 : 0;
    l.ratio = static_cast<double>(l.n_pseudo_dying) / static_cast<double>(l.n_neurons);
    report.layers.push_back(l);
  }
  return report;
}

inline PdrrReport pdrr_report(const Network& net, const Matrix& window) {
  if (window.rows() == 0) throw std::invalid_argument("pdrr_report: empty sample window");
  return pdrr_report(forward(net, window));
}

inline std::size_t count_relu_layers(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) n += l.activation.type == ActivationType::ReLU ? 1 : 0;
  return n;
}

// Rolling buffer of the most recent `capacity` network inputs.
class SampleWindow {
 public:
  explicit SampleWindow(std::size_t capacity = 256, std::size_t width = 0) : capacity_(capacity), width_(width) {
    if (capacity_ == 0) throw std::invalid_argument("SampleWindow: capacity must be >= 1");
  }

  void push(std::span<const double> x) {
    if (width_ == 0) width_ = x.size();
    if (x.size() != width_) throw std::invalid_argument("SampleWindow: sample width mismatch");
    if (rows_.size() == capacity_) rows_.pop_front();
    rows_.emplace_back(x.begin(), x.end());
  }

  std::size_t size() const { return rows_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return rows_.empty(); }
  void clear() { rows_.clear(); }

  Matrix to_matrix() const {
    Matrix m(rows_.size(), width_);
    for (std::size_t r = 0; r < rows_.size(); ++r) std::copy(rows_[r].begin(), rows_[r].end(), m.row(r).begin());
    return m;
  }

 private:
  std::size_t capacity_;
  std::size_t width_;
  std::deque<std::vector<double>> rows_;
};

}  // namespace rescale
