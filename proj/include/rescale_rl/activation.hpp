#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rescale {

enum class ActivationType { ReLU, LeakyReLU, ELU, Tanh, Sigmoid, Identity };

// Activation kind plus its shape parameter. `alpha` is the negative-side slope for
// LeakyReLU and the saturation level for ELU; it is ignored by the other kinds.
struct Activation {
  ActivationType type = ActivationType::Identity;
  double alpha = 0.0;

  static Activation relu() { return {ActivationType::ReLU, 0.0}; }
  static Activation leaky_relu(double alpha = 0.01) { return checked({ActivationType::LeakyReLU, alpha}); }
  static Activation elu(double alpha = 1.0) { return checked({ActivationType::ELU, alpha}); }
  static Activation tanh() { return {ActivationType::Tanh, 0.0}; }
  static Activation sigmoid() { return {ActivationType::Sigmoid, 0.0}; }
  static Activation identity() { return {ActivationType::Identity, 0.0}; }

  // True when act(c*x) == c*act(x) for every c > 0.
  bool positively_homogeneous() const {
    return type == ActivationType::ReLU || type == ActivationType::LeakyReLU ||
           type == ActivationType::Identity;
  }

  friend bool operator==(const Activation&, const Activation&) = default;

 private:
  static Activation checked(Activation a) {
    if (!(a.alpha > 0.0) || !std::isfinite(a.alpha))
      throw std::invalid_argument("activation alpha must be positive and finite");
    return a;
  }
};

struct ActivationValue {
  double value;
  double derivative;
};

inline ActivationValue activation_value_and_grad(const Activation& act, double x) {
  switch (act.type) {
    case ActivationType::ReLU:
      // derivative at exactly 0 is 0: a neuron sitting at zero stays dead
      return x > 0.0 ? ActivationValue{x, 1.0} : ActivationValue{0.0, 0.0};
    case ActivationType::LeakyReLU:
      return x > 0.0 ? ActivationValue{x, 1.0} : ActivationValue{act.alpha * x, act.alpha};
    case ActivationType::ELU: {
      if (x > 0.0) return {x, 1.0};
      const double v = act.alpha * std::expm1(x);
      return {v, v + act.alpha};
    }
    case ActivationType::Tanh: {
      const double t = std::tanh(x);
      return {t, 1.0 - t * t};
    }
    case ActivationType::Sigmoid: {
      const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      return {s, s * (1.0 - s)};
    }
    case ActivationType::Identity:
      return {x, 1.0};
  }
  return {x, 1.0};
}

inline double activation_value(const Activation& act, double x) {
  return activation_value_and_grad(act, x).value;
}

// Text form used by configs and the network file format: "relu", "leaky_relu:0.01", "elu:1", ...
inline std::string to_string(const Activation& act) {
  auto with_alpha = [&](const char* name) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s:%.17g", name, act.alpha);
    return std::string(buf);
  };
  switch (act.type) {
    case ActivationType::ReLU: return "relu";
    case ActivationType::LeakyReLU: return with_alpha("leaky_relu");
    case ActivationType::ELU: return with_alpha("elu");
    case ActivationType::Tanh: return "tanh";
    case ActivationType::Sigmoid: return "sigmoid";
    case ActivationType::Identity: return "identity";
  }
  return "identity";
}

inline Activation parse_activation(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  double alpha = 0.0;
  bool has_alpha = false;
  if (colon != std::string_view::npos) {
    const std::string num(text.substr(colon + 1));
    std::size_t used = 0;
    try {
      alpha = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != num.size())
      throw std::invalid_argument("bad activation parameter in '" + std::string(text) + "'");
    has_alpha = true;
  }
  if (name == "relu") return Activation::relu();
  if (name == "leaky_relu") return Activation::leaky_relu(has_alpha ? alpha : 0.01);
  if (name == "elu") return Activation::elu(has_alpha ? alpha : 1.0);
  if (name == "tanh") return Activation::tanh();
  if (name == "sigmoid") return Activation::sigmoid();
  if (name == "identity" || name == "linear") return Activation::identity();
  throw std::invalid_argument("unknown activation '" + std::string(text) + "'");
}

}  // namespace rescale
