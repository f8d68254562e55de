#pragma once

// Scalar-generic dense kernels behind the differentiable ops. All loops are
// sequential so results are bit-reproducible for a given build.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ran/tensor.hpp"

namespace ran::kernels {

struct ConvGeometry {
  Index stride = 1;
  Index pad = 0;
  Index dilation = 1;
};

/// Output extent along one axis; throws when the window does not tile the input.
inline Index conv_out_extent(Index in, Index k, const ConvGeometry& g) {
  const Index span = in + 2 * g.pad - g.dilation * (k - 1) - 1;
  if (span < 0) throw GeometryError("conv2d: kernel does not fit the padded input");
  if (span % g.stride != 0) throw GeometryError("conv2d: output size is not an integer for this stride");
  return span / g.stride + 1;
}

// Unfold one image (C,H,W) into a (C*k*k, oh*ow) row-major column matrix.
template <typename Scalar>
void im2col(const Scalar* image, Index channels, Index height, Index width, Index k, const ConvGeometry& g,
            Index oh, Index ow, RowMatrixX<Scalar>& cols) {
  cols.resize(channels * k * k, oh * ow);
  for (Index c = 0; c < channels; ++c) {
    const Scalar* src = image + c * height * width;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = cols.data() + ((c * k + ky) * k + kx) * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= height) {
            std::fill(row + y * ow, row + (y + 1) * ow, Scalar(0));
            continue;
          }
          for (Index x = 0; x < ow; ++x) {
            const Index ix = x * g.stride - g.pad + kx * g.dilation;
            row[y * ow + x] = (ix >= 0 && ix < width) ? src[iy * width + ix] : Scalar(0);
          }
        }
      }
    }
  }
}

// Inverse of im2col: scatter-add the column matrix back into an image buffer.
template <typename Scalar>
void col2im_add(const RowMatrixX<Scalar>& cols, Index channels, Index height, Index width, Index k,
                const ConvGeometry& g, Index oh, Index ow, Scalar* image) {
  for (Index c = 0; c < channels; ++c) {
    Scalar* dst = image + c * height * width;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = cols.data() + ((c * k + ky) * k + kx) * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= height) continue;
          for (Index x = 0; x < ow; ++x) {
            const Index ix = x * g.stride - g.pad + kx * g.dilation;
            if (ix >= 0 && ix < width) dst[iy * width + ix] += row[y * ow + x];
          }
        }
      }
    }
  }
}

template <typename Scalar>
Shape conv2d_output_shape(const Shape& input, const Shape& weight, const Shape& bias, const ConvGeometry& g) {
  if (weight.h != weight.w) throw ShapeError("conv2d: kernel must be square");
  if (weight.h < 1) throw ShapeError("conv2d: kernel size must be at least 1");
  if (input.c != weight.c) throw ShapeError("conv2d: input channels do not match weight");
  if (bias.size() != weight.n) throw ShapeError("conv2d: bias length does not match output channels");
  if (g.stride < 1 || g.dilation < 1 || g.pad < 0) throw GeometryError("conv2d: invalid stride, pad or dilation");
  return {input.n, weight.n, conv_out_extent(input.h, weight.h, g), conv_out_extent(input.w, weight.w, g)};
}

template <typename Scalar>
DenseTensor<Scalar> conv2d_forward(const DenseTensor<Scalar>& input, const DenseTensor<Scalar>& weight,
                                   const DenseTensor<Scalar>& bias, const ConvGeometry& g) {
  const Shape out_shape = conv2d_output_shape<Scalar>(input.shape, weight.shape, bias.shape, g);
  const Index k = weight.shape.h;
  const Index kdim = weight.shape.c * k * k;
  const Index pixels = out_shape.plane();
  DenseTensor<Scalar> out(out_shape);

  Eigen::Map<const RowMatrixX<Scalar>> w(weight.data.data(), weight.shape.n, kdim);
  RowMatrixX<Scalar> cols;
  for (Index n = 0; n < input.shape.n; ++n) {
    im2col(input.plane(n, 0), input.shape.c, input.shape.h, input.shape.w, k, g, out_shape.h, out_shape.w, cols);
    Eigen::Map<RowMatrixX<Scalar>> y(out.plane(n, 0), out_shape.c, pixels);
    y.noalias() = w * cols;
    y.colwise() += bias.data.matrix();
  }
  return out;
}

/// Accumulates input, weight and bias gradients. Null targets are skipped.
template <typename Scalar>
void conv2d_backward(const DenseTensor<Scalar>& input, const DenseTensor<Scalar>& weight, const ArrayX<Scalar>& dout,
                     const Shape& out_shape, const ConvGeometry& g, ArrayX<Scalar>* dinput, ArrayX<Scalar>* dweight,
                     ArrayX<Scalar>* dbias) {
  const Index k = weight.shape.h;
  const Index kdim = weight.shape.c * k * k;
  const Index pixels = out_shape.plane();
  Eigen::Map<const RowMatrixX<Scalar>> w(weight.data.data(), weight.shape.n, kdim);

  RowMatrixX<Scalar> cols;
  RowMatrixX<Scalar> dcols;
  for (Index n = 0; n < input.shape.n; ++n) {
    Eigen::Map<const RowMatrixX<Scalar>> dy(dout.data() + n * out_shape.c * pixels, out_shape.c, pixels);
    if (dbias) dbias->matrix() += dy.rowwise().sum();
    if (dweight) {
      im2col(input.plane(n, 0), input.shape.c, input.shape.h, input.shape.w, k, g, out_shape.h, out_shape.w, cols);
      Eigen::Map<RowMatrixX<Scalar>> dw(dweight->data(), weight.shape.n, kdim);
      dw.noalias() += dy * cols.transpose();
    }
    if (dinput) {
      dcols.noalias() = w.transpose() * dy;
      col2im_add(dcols, input.shape.c, input.shape.h, input.shape.w, k, g, out_shape.h, out_shape.w,
                 dinput->data() + n * input.shape.c * input.shape.plane());
    }
  }
}

/// Max pooling without padding. argmax receives the flat input index chosen for
/// each output; the first (lowest-index) maximum in a window wins.
template <typename Scalar>
DenseTensor<Scalar> max_pool2d_forward(const DenseTensor<Scalar>& input, Index k, Index stride,
                                       std::vector<Index>& argmax) {
  if (k < 1 || stride < 1) throw GeometryError("max_pool2d: kernel and stride must be positive");
  if (input.shape.h < k || input.shape.w < k) throw GeometryError("max_pool2d: window larger than input");
  const Index oh = (input.shape.h - k) / stride + 1;
  const Index ow = (input.shape.w - k) / stride + 1;
  DenseTensor<Scalar> out({input.shape.n, input.shape.c, oh, ow});
  argmax.assign(static_cast<std::size_t>(out.size()), 0);
  Index o = 0;
  for (Index n = 0; n < input.shape.n; ++n) {
    for (Index c = 0; c < input.shape.c; ++c) {
      for (Index y = 0; y < oh; ++y) {
        for (Index x = 0; x < ow; ++x, ++o) {
          Index best = input.offset(n, c, y * stride, x * stride);
          Scalar best_value = input.data[best];
          for (Index dy = 0; dy < k; ++dy) {
            for (Index dx = 0; dx < k; ++dx) {
              const Index idx = input.offset(n, c, y * stride + dy, x * stride + dx);
              if (input.data[idx] > best_value) {
                best_value = input.data[idx];
                best = idx;
              }
            }
          }
          out.data[o] = best_value;
          argmax[static_cast<std::size_t>(o)] = best;
        }
      }
    }
  }
  return out;
}

/// Half-pixel (align_corners=false) source coordinate, clamped at the low edge.
inline double bilinear_source(Index dst, Index in, Index out) {
  const double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  return src < 0.0 ? 0.0 : src;
}

template <typename Scalar>
DenseTensor<Scalar> resize_bilinear(const DenseTensor<Scalar>& input, Index out_h, Index out_w) {
  if (out_h < 1 || out_w < 1) throw GeometryError("resize_bilinear: output size must be positive");
  if (out_h == input.shape.h && out_w == input.shape.w) {
    DenseTensor<Scalar> copy(input.shape, input.data);
    return copy;
  }
  const Shape& s = input.shape;
  DenseTensor<Scalar> out({s.n, s.c, out_h, out_w});

  struct Tap {
    Index lo, hi;
    Scalar frac;
  };
  auto taps = [](Index in, Index out_extent) {
    std::vector<Tap> t(static_cast<std::size_t>(out_extent));
    for (Index i = 0; i < out_extent; ++i) {
      const double src = bilinear_source(i, in, out_extent);
      Index lo = static_cast<Index>(std::floor(src));
      if (lo > in - 1) lo = in - 1;
      const Index hi = std::min(lo + 1, in - 1);
      t[static_cast<std::size_t>(i)] = {lo, hi, static_cast<Scalar>(src - static_cast<double>(lo))};
    }
    return t;
  };
  const auto ty = taps(s.h, out_h);
  const auto tx = taps(s.w, out_w);

  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      const Scalar* src = input.plane(n, c);
      Scalar* dst = out.plane(n, c);
      for (Index y = 0; y < out_h; ++y) {
        const Tap& a = ty[static_cast<std::size_t>(y)];
        for (Index x = 0; x < out_w; ++x) {
          const Tap& b = tx[static_cast<std::size_t>(x)];
          const Scalar top = src[a.lo * s.w + b.lo] * (1 - b.frac) + src[a.lo * s.w + b.hi] * b.frac;
          const Scalar bottom = src[a.hi * s.w + b.lo] * (1 - b.frac) + src[a.hi * s.w + b.hi] * b.frac;
          dst[y * out_w + x] = top * (1 - a.frac) + bottom * a.frac;
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
DenseTensor<Scalar> elementwise_max(const DenseTensor<Scalar>& a, const DenseTensor<Scalar>& b) {
  require_same_shape(a.shape, b.shape, "elementwise_max");
  return DenseTensor<Scalar>(a.shape, a.data.max(b.data).eval());
}

/// Nearest-neighbour source index using pixel centres.
inline Index nearest_source(Index dst, Index in, Index out) {
  const Index src = static_cast<Index>(std::floor((static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                                                  static_cast<double>(out)));
  return std::min(src, in - 1);
}

inline LabelMap resize_labels_nearest(const LabelMap& labels, Index out_h, Index out_w) {
  if (out_h < 1 || out_w < 1) throw GeometryError("resize_labels_nearest: output size must be positive");
  if (out_h == labels.h && out_w == labels.w) return labels;
  LabelMap out(labels.n, out_h, out_w);
  for (Index i = 0; i < labels.n; ++i)
    for (Index y = 0; y < out_h; ++y)
      for (Index x = 0; x < out_w; ++x)
        out(i, y, x) = labels(i, nearest_source(y, labels.h, out_h), nearest_source(x, labels.w, out_w));
  return out;
}

}  // namespace ran::kernels
