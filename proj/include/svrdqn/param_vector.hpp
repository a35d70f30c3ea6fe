#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace svrdqn {

struct BlockShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t count() const { return rows * cols; }
  bool operator==(const BlockShape&) const = default;
};

// Flat vector of 64-bit reals plus the (rows, cols) block layout needed to
// view it as per-layer matrices. Parameter vectors, gradients and optimizer
// moments all share this representation so they can be mixed freely.
class ParamVector {
 public:
  ParamVector() = default;

  explicit ParamVector(std::vector<BlockShape> layout) : layout_(std::move(layout)) {
    std::size_t total = 0;
    for (const auto& b : layout_) total += b.count();
    data_.assign(total, 0.0);
  }

  ParamVector(std::vector<double> data, std::vector<BlockShape> layout)
      : data_(std::move(data)), layout_(std::move(layout)) {
    std::size_t total = 0;
    for (const auto& b : layout_) total += b.count();
    if (total != data_.size())
      throw std::invalid_argument("ParamVector: layout does not cover data");
  }

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<BlockShape>& layout() const { return layout_; }

  std::size_t block_count() const { return layout_.size(); }

  std::size_t block_offset(std::size_t i) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < i; ++k) off += layout_[k].count();
    return off;
  }

  std::span<double> block(std::size_t i) {
    return std::span<double>(data_).subspan(block_offset(i), layout_[i].count());
  }
  std::span<const double> block(std::size_t i) const {
    return std::span<const double>(data_).subspan(block_offset(i), layout_[i].count());
  }

  bool same_shape(const ParamVector& o) const {
    return data_.size() == o.data_.size() && layout_ == o.layout_;
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double x) {
    for (auto& v : data_) v = x;
  }

  // this += s * o
  void add_scaled(const ParamVector& o, double s) {
    check_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  }

  void scale(double s) {
    for (auto& v : data_) v *= s;
  }

  ParamVector zero_like() const {
    ParamVector out;
    out.layout_ = layout_;
    out.data_.assign(data_.size(), 0.0);
    return out;
  }

  double squared_norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return s;
  }

  // Bit equality, used by the determinism and round-trip tests.
  bool operator==(const ParamVector& o) const {
    return layout_ == o.layout_ && data_ == o.data_;
  }

  void check_shape(const ParamVector& o) const {
    if (!same_shape(o)) throw std::invalid_argument("ParamVector: shape mismatch");
  }

 private:
  std::vector<double> data_;
  std::vector<BlockShape> layout_;
};

enum class GradSource { SingleSample, Minibatch, Anchor, SvrgCorrected, Composite };

// A gradient is a ParamVector tagged with how it was estimated.
struct Gradient {
  ParamVector v;
  GradSource source = GradSource::Minibatch;
};

}  // namespace svrdqn
