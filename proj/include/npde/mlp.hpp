#pragma once

// Fully connected tanh network f_NN with explicit reverse-mode adjoints.
//
// Parameters of all layers live in one flat binary64 buffer; weight(l) is an
// out x in row-major block followed by bias(l).

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npde/error.hpp"
#include "npde/grid.hpp"

namespace npde {

class MlpLayout {
 public:
  MlpLayout() = default;
  explicit MlpLayout(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw Error(ErrorKind::config, "network needs at least an input and output layer");
    for (int s : sizes_)
      if (s <= 0) throw Error(ErrorKind::config, "layer sizes must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weight_offset_.push_back(off);
      off += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1];
      bias_offset_.push_back(off);
      off += static_cast<std::size_t>(sizes_[l + 1]);
    }
    total_ = off;
  }

  [[nodiscard]] const std::vector<int>& sizes() const noexcept { return sizes_; }
  [[nodiscard]] std::size_t n_layers() const noexcept { return weight_offset_.size(); }
  [[nodiscard]] int fan_in(std::size_t l) const { return sizes_[l]; }
  [[nodiscard]] int fan_out(std::size_t l) const { return sizes_[l + 1]; }
  [[nodiscard]] int input_width() const { return sizes_.front(); }
  [[nodiscard]] int output_width() const { return sizes_.back(); }
  [[nodiscard]] std::size_t weight_offset(std::size_t l) const { return weight_offset_[l]; }
  [[nodiscard]] std::size_t bias_offset(std::size_t l) const { return bias_offset_[l]; }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return total_; }

  friend bool operator==(const MlpLayout& a, const MlpLayout& b) { return a.sizes_ == b.sizes_; }

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::size_t total_ = 0;
};

/// A flat tensor tree shaped by an MlpLayout. The tag keeps parameters,
/// gradients and optimizer moments from being mixed up.
template <class Tag>
struct ParameterTree {
  MlpLayout layout;
  std::vector<double> values;

  ParameterTree() = default;
  explicit ParameterTree(MlpLayout l) : layout(std::move(l)), values(layout.parameter_count(), 0.0) {}

  template <class OtherTag>
  static ParameterTree zeros_like(const ParameterTree<OtherTag>& other) {
    return ParameterTree(other.layout);
  }

  [[nodiscard]] std::span<double> weight(std::size_t l) {
    return {values.data() + layout.weight_offset(l),
            static_cast<std::size_t>(layout.fan_in(l)) * layout.fan_out(l)};
  }
  [[nodiscard]] std::span<const double> weight(std::size_t l) const {
    return {values.data() + layout.weight_offset(l),
            static_cast<std::size_t>(layout.fan_in(l)) * layout.fan_out(l)};
  }
  [[nodiscard]] std::span<double> bias(std::size_t l) {
    return {values.data() + layout.bias_offset(l), static_cast<std::size_t>(layout.fan_out(l))};
  }
  [[nodiscard]] std::span<const double> bias(std::size_t l) const {
    return {values.data() + layout.bias_offset(l), static_cast<std::size_t>(layout.fan_out(l))};
  }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return values.size(); }

  void set_zero() { std::fill(values.begin(), values.end(), 0.0); }

  template <class OtherTag>
  [[nodiscard]] bool congruent(const ParameterTree<OtherTag>& other) const {
    return layout == other.layout && values.size() == other.values.size();
  }

  friend bool operator==(const ParameterTree&, const ParameterTree&) = default;
};

struct ParamsTag;
struct GradientTag;
using MlpParams = ParameterTree<ParamsTag>;
using GradientBundle = ParameterTree<GradientTag>;

/// Layer widths used for every experiment: [n, 20, 20, 20, n].
inline std::vector<int> default_layer_sizes(int n_points, std::vector<int> hidden = {20, 20, 20}) {
  std::vector<int> sizes{n_points};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(n_points);
  return sizes;
}

/// Glorot-uniform weights, zero biases. The uniform variate is built from the
/// top 53 bits of mt19937_64 so the result does not depend on the standard
/// library's distribution implementation.
inline MlpParams mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  MlpParams p{MlpLayout(layer_sizes)};
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < p.layout.n_layers(); ++l) {
    const double bound = std::sqrt(6.0 / (p.layout.fan_in(l) + p.layout.fan_out(l)));
    for (double& w : p.weight(l)) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      w = (2.0 * u - 1.0) * bound;
    }
  }
  return p;
}

/// Activations recorded by a forward pass; enough to run the adjoint.
struct MlpTape {
  std::vector<std::vector<double>> inputs;  // input of each affine layer
};

namespace detail {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMutMap = Eigen::Map<Eigen::VectorXd>;

}  // namespace detail

/// Forward pass: affine -> tanh on hidden layers, identity output. If `tape`
/// is non-null the per-layer inputs are recorded.
inline void mlp_forward(const MlpParams& net, std::span<const double> x, std::span<double> out,
                        MlpTape* tape = nullptr) {
  const auto& L = net.layout;
  if (static_cast<int>(x.size()) != L.input_width() || static_cast<int>(out.size()) != L.output_width())
    throw Error(ErrorKind::config, "network width mismatch: input " + std::to_string(x.size()) +
                                       " vs " + std::to_string(L.input_width()));
  const std::size_t nl = L.n_layers();
  thread_local std::vector<double> a, z;
  a.assign(x.begin(), x.end());
  if (tape) tape->inputs.resize(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    if (tape) tape->inputs[l] = a;
    const int fi = L.fan_in(l), fo = L.fan_out(l);
    detail::RowMajorMap W(net.weight(l).data(), fo, fi);
    detail::VecMap b(net.bias(l).data(), fo);
    z.resize(fo);
    detail::VecMutMap zv(z.data(), fo);
    zv.noalias() = W * detail::VecMap(a.data(), fi);
    zv += b;
    if (l + 1 < nl) {
      for (double& v : z) v = std::tanh(v);
      a.swap(z);
    } else {
      std::copy(z.begin(), z.end(), out.begin());
    }
  }
}

inline Field mlp_forward(const MlpParams& net, const Field& x) {
  Field out(x.grid);
  mlp_forward(net, x.values, out.values);
  return out;
}

/// Reverse pass. Accumulates dL/dx into x_bar (if non-empty) and dL/dtheta
/// into grads, given cot = dL/d(output).
inline void mlp_backward(const MlpParams& net, const MlpTape& tape, std::span<const double> cot,
                         std::span<double> x_bar, GradientBundle& grads) {
  const auto& L = net.layout;
  const std::size_t nl = L.n_layers();
  thread_local std::vector<double> delta, prev;
  delta.assign(cot.begin(), cot.end());
  for (std::size_t l = nl; l-- > 0;) {
    const int fi = L.fan_in(l), fo = L.fan_out(l);
    const auto& a = tape.inputs[l];
    detail::VecMap d(delta.data(), fo);
    detail::VecMap av(a.data(), fi);
    detail::RowMajorMutMap gW(grads.weight(l).data(), fo, fi);
    gW.noalias() += d * av.transpose();
    detail::VecMutMap(grads.bias(l).data(), fo) += d;
    if (l == 0 && x_bar.empty()) break;
    detail::RowMajorMap W(net.weight(l).data(), fo, fi);
    prev.resize(fi);
    detail::VecMutMap pv(prev.data(), fi);
    pv.noalias() = W.transpose() * d;
    if (l > 0) {
      for (int i = 0; i < fi; ++i) prev[i] *= (1.0 - a[i] * a[i]);  // a = tanh(z)
      delta.swap(prev);
    } else {
      for (int i = 0; i < fi; ++i) x_bar[i] += prev[i];
    }
  }
}

}  // namespace npde
