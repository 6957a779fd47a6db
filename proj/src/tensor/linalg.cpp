// Copyright 2026 The ProtoDiff Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// matmul, conv2d (im2col + GEMM), pooling and upsampling.

#include <Eigen/Core>

#include <algorithm>

#include "protodiff/error.hpp"
#include "protodiff/tensor.hpp"
#include "tensor_impl.hpp"

namespace protodiff {

namespace detail {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, const double* b, double beta, double* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] *= beta;
    return;
  }
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Matrix>;
  Eigen::Map<Matrix> out(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  const auto rows_a = static_cast<Eigen::Index>(trans_a ? k : m);
  const auto cols_a = static_cast<Eigen::Index>(trans_a ? m : k);
  const auto rows_b = static_cast<Eigen::Index>(trans_b ? n : k);
  const auto cols_b = static_cast<Eigen::Index>(trans_b ? k : n);
  ConstMap ma(a, rows_a, cols_a);
  ConstMap mb(b, rows_b, cols_b);
  if (beta == 0.0) {
    out.setZero();
  } else if (beta != 1.0) {
    out *= beta;
  }
  if (trans_a && trans_b) {
    out.noalias() += alpha * ma.transpose() * mb.transpose();
  } else if (trans_a) {
    out.noalias() += alpha * ma.transpose() * mb;
  } else if (trans_b) {
    out.noalias() += alpha * ma * mb.transpose();
  } else {
    out.noalias() += alpha * ma * mb;
  }
}

}  // namespace detail

using detail::gemm;
using detail::make_result;

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, ErrorKind::kShapeMismatch,
          "matmul expects rank-2 operands, got " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, ErrorKind::kShapeMismatch,
          "matmul inner extents differ: " + shape_string(a.shape()) + " x " +
              shape_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm(false, false, m, n, k, 1.0, a.data().data(), b.data().data(), 0.0, out.data());
  auto a_impl = a.impl();
  auto b_impl = b.impl();
  return make_result({m, n}, std::move(out), "matmul", {a, b},
                     [a_impl, b_impl, m, n, k](const std::vector<double>& g,
                                               const std::vector<std::vector<double>*>& sinks) {
                       // dA = G * B^T, dB = A^T * G
                       if (sinks[0]) {
                         gemm(false, true, m, k, n, 1.0, g.data(), b_impl->data.data(), 1.0,
                              sinks[0]->data());
                       }
                       if (sinks[1]) {
                         gemm(true, false, k, n, m, 1.0, a_impl->data.data(), g.data(), 1.0,
                              sinks[1]->data());
                       }
                     });
}

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, ksize, stride, padding;
  std::size_t out_h, out_w;

  std::size_t col_rows() const { return channels * ksize * ksize; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// Unfolds one image [C,H,W] into columns [C*k*k, H'*W'].
void im2col(const ConvGeometry& geo, const double* image, double* col) {
  const std::size_t cols = geo.col_cols();
  for (std::size_t c = 0; c < geo.channels; ++c) {
    for (std::size_t ki = 0; ki < geo.ksize; ++ki) {
      for (std::size_t kj = 0; kj < geo.ksize; ++kj) {
        double* dst = col + ((c * geo.ksize + ki) * geo.ksize + kj) * cols;
        for (std::size_t oh = 0; oh < geo.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * geo.stride + ki) -
                          static_cast<std::ptrdiff_t>(geo.padding);
          for (std::size_t ow = 0; ow < geo.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * geo.stride + kj) -
                            static_cast<std::ptrdiff_t>(geo.padding);
            const bool inside = ih >= 0 && iw >= 0 &&
                                ih < static_cast<std::ptrdiff_t>(geo.height) &&
                                iw < static_cast<std::ptrdiff_t>(geo.width);
            dst[oh * geo.out_w + ow] =
                inside ? image[(c * geo.height + static_cast<std::size_t>(ih)) * geo.width +
                               static_cast<std::size_t>(iw)]
                       : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image.
void col2im(const ConvGeometry& geo, const double* col, double* image) {
  const std::size_t cols = geo.col_cols();
  for (std::size_t c = 0; c < geo.channels; ++c) {
    for (std::size_t ki = 0; ki < geo.ksize; ++ki) {
      for (std::size_t kj = 0; kj < geo.ksize; ++kj) {
        const double* src = col + ((c * geo.ksize + ki) * geo.ksize + kj) * cols;
        for (std::size_t oh = 0; oh < geo.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * geo.stride + ki) -
                          static_cast<std::ptrdiff_t>(geo.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(geo.height)) continue;
          for (std::size_t ow = 0; ow < geo.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * geo.stride + kj) -
                            static_cast<std::ptrdiff_t>(geo.padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(geo.width)) continue;
            image[(c * geo.height + static_cast<std::size_t>(ih)) * geo.width +
                  static_cast<std::size_t>(iw)] += src[oh * geo.out_w + ow];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding) {
  require(input.rank() == 4 && kernel.rank() == 4, ErrorKind::kShapeMismatch,
          "conv2d expects [B,C,H,W] input and [O,C,k,k] kernel, got " +
              shape_string(input.shape()) + " and " + shape_string(kernel.shape()));
  require(stride >= 1, ErrorKind::kInvalidArgument, "conv2d stride must be >= 1");
  ConvGeometry geo{};
  geo.batch = input.dim(0);
  geo.channels = input.dim(1);
  geo.height = input.dim(2);
  geo.width = input.dim(3);
  geo.out_channels = kernel.dim(0);
  geo.ksize = kernel.dim(2);
  geo.stride = stride;
  geo.padding = padding;
  require(kernel.dim(1) == geo.channels && kernel.dim(3) == geo.ksize,
          ErrorKind::kShapeMismatch,
          "conv2d kernel " + shape_string(kernel.shape()) + " incompatible with input " +
              shape_string(input.shape()));
  require(geo.ksize >= 1 && geo.ksize <= geo.height + 2 * padding &&
              geo.ksize <= geo.width + 2 * padding,
          ErrorKind::kInvalidArgument, "conv2d produces a non-positive output extent");
  geo.out_h = (geo.height + 2 * padding - geo.ksize) / stride + 1;
  geo.out_w = (geo.width + 2 * padding - geo.ksize) / stride + 1;

  const std::size_t in_plane = geo.channels * geo.height * geo.width;
  const std::size_t out_plane = geo.out_channels * geo.col_cols();
  std::vector<double> out(geo.batch * out_plane, 0.0);
  std::vector<double> col(geo.col_rows() * geo.col_cols());
  auto in_v = input.data();
  auto k_v = kernel.data();
  for (std::size_t b = 0; b < geo.batch; ++b) {
    im2col(geo, in_v.data() + b * in_plane, col.data());
    gemm(false, false, geo.out_channels, geo.col_cols(), geo.col_rows(), 1.0, k_v.data(),
         col.data(), 0.0, out.data() + b * out_plane);
  }

  auto in_impl = input.impl();
  auto k_impl = kernel.impl();
  return make_result(
      {geo.batch, geo.out_channels, geo.out_h, geo.out_w}, std::move(out), "conv2d",
      {input, kernel},
      [geo, in_impl, k_impl, in_plane, out_plane](
          const std::vector<double>& g, const std::vector<std::vector<double>*>& sinks) {
        std::vector<double> col(geo.col_rows() * geo.col_cols());
        for (std::size_t b = 0; b < geo.batch; ++b) {
          const double* g_b = g.data() + b * out_plane;
          if (sinks[1]) {
            im2col(geo, in_impl->data.data() + b * in_plane, col.data());
            // dK += G_b * col^T
            gemm(false, true, geo.out_channels, geo.col_rows(), geo.col_cols(), 1.0, g_b,
                 col.data(), 1.0, sinks[1]->data());
          }
          if (sinks[0]) {
            // dcol = K^T * G_b
            gemm(true, false, geo.col_rows(), geo.col_cols(), geo.out_channels, 1.0,
                 k_impl->data.data(), g_b, 0.0, col.data());
            col2im(geo, col.data(), sinks[0]->data() + b * in_plane);
          }
        }
      });
}

Tensor avg_pool2x(const Tensor& input) {
  require(input.rank() == 4, ErrorKind::kShapeMismatch, "avg_pool2x expects [B,C,H,W]");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  require(h % 2 == 0 && w % 2 == 0 && h > 0 && w > 0, ErrorKind::kShapeMismatch,
          "avg_pool2x needs even spatial extents, got " + shape_string(input.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  auto v = input.data();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = v.data() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        out[(p * oh + i) * ow + j] = 0.25 * (src[(2 * i) * w + 2 * j] + src[(2 * i) * w + 2 * j + 1] +
                                             src[(2 * i + 1) * w + 2 * j] +
                                             src[(2 * i + 1) * w + 2 * j + 1]);
      }
    }
  }
  return make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), "avg_pool2x", {input},
                     [planes, h, w, oh, ow](const std::vector<double>& g,
                                            const std::vector<std::vector<double>*>& sinks) {
                       if (!sinks[0]) return;
                       auto& gin = *sinks[0];
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t i = 0; i < h; ++i) {
                           for (std::size_t j = 0; j < w; ++j) {
                             gin[(p * h + i) * w + j] += 0.25 * g[(p * oh + i / 2) * ow + j / 2];
                           }
                         }
                       }
                     });
}

Tensor upsample2x(const Tensor& input) {
  require(input.rank() == 4, ErrorKind::kShapeMismatch, "upsample2x expects [B,C,H,W]");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t oh = 2 * h, ow = 2 * w;
  auto v = input.data();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        out[(p * oh + i) * ow + j] = v[(p * h + i / 2) * w + j / 2];
      }
    }
  }
  return make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), "upsample2x", {input},
                     [planes, h, w, oh, ow](const std::vector<double>& g,
                                            const std::vector<std::vector<double>*>& sinks) {
                       if (!sinks[0]) return;
                       auto& gin = *sinks[0];
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t i = 0; i < oh; ++i) {
                           for (std::size_t j = 0; j < ow; ++j) {
                             gin[(p * h + i / 2) * w + j / 2] += g[(p * oh + i) * ow + j];
                           }
                         }
                       }
                     });
}

}  // namespace protodiff
