#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <vector>

#include "ran/error.hpp"

namespace ran {

using Index = Eigen::Index;

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using ArrayXd = ArrayX<double>;

template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// NCHW extents of a rank-4 tensor.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  constexpr Index size() const { return n * c * h * w; }
  constexpr Index plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) {
  return os << '(' << s.n << ',' << s.c << ',' << s.h << ',' << s.w << ')';
}

/// Dense rank-4 array in row-major NCHW order with an optional gradient buffer.
template <typename Scalar>
class DenseTensor {
 public:
  using Storage = ArrayX<Scalar>;

  Shape shape;
  Storage data;
  bool requires_grad = false;
  std::optional<Storage> grad;

  DenseTensor() = default;
  explicit DenseTensor(Shape s) : shape(s), data(Storage::Zero(s.size())) {}
  DenseTensor(Shape s, Storage values) : shape(s), data(std::move(values)) {
    if (data.size() != shape.size()) throw ShapeError("tensor data length does not match shape");
  }
  DenseTensor(Shape s, std::initializer_list<Scalar> values) : shape(s), data(static_cast<Index>(values.size())) {
    if (data.size() != shape.size()) throw ShapeError("tensor data length does not match shape");
    Index i = 0;
    for (Scalar v : values) data[i++] = v;
  }

  static DenseTensor zeros(Shape s) { return DenseTensor(s); }
  static DenseTensor constant(Shape s, Scalar v) { return DenseTensor(s, Storage::Constant(s.size(), v)); }

  Index size() const { return data.size(); }

  Index offset(Index n, Index c, Index y, Index x) const {
    return ((n * shape.c + c) * shape.h + y) * shape.w + x;
  }
  Scalar& operator()(Index n, Index c, Index y, Index x) { return data[offset(n, c, y, x)]; }
  Scalar operator()(Index n, Index c, Index y, Index x) const { return data[offset(n, c, y, x)]; }

  Scalar* plane(Index n, Index c) { return data.data() + offset(n, c, 0, 0); }
  const Scalar* plane(Index n, Index c) const { return data.data() + offset(n, c, 0, 0); }

  template <typename Other>
  DenseTensor<Other> cast() const {
    DenseTensor<Other> out(shape, data.template cast<Other>().eval());
    out.requires_grad = requires_grad;
    return out;
  }

  bool all_finite() const { return data.isFinite().all(); }
};

using Tensor = DenseTensor<double>;

/// Per-pixel class indices, shape (N,H,W). 255 marks ignored pixels.
struct LabelMap {
  Index n = 0;
  Index h = 0;
  Index w = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(Index n_, Index h_, Index w_, std::uint8_t fill = 0)
      : n(n_), h(h_), w(w_), data(static_cast<std::size_t>(n_ * h_ * w_), fill) {}

  Index size() const { return n * h * w; }
  std::size_t offset(Index i, Index y, Index x) const { return static_cast<std::size_t>((i * h + y) * w + x); }
  std::uint8_t& operator()(Index i, Index y, Index x) { return data[offset(i, y, x)]; }
  std::uint8_t operator()(Index i, Index y, Index x) const { return data[offset(i, y, x)]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

inline constexpr std::uint8_t kIgnoreLabel = 255;

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": operand shapes differ");
}

}  // namespace ran
