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

// Elementwise, reduction and shape ops.

#include <algorithm>
#include <cmath>
#include <memory>

#include "protodiff/error.hpp"
#include "protodiff/tensor.hpp"
#include "tensor_impl.hpp"

namespace protodiff {

using detail::make_result;

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      fail(ErrorKind::kShapeMismatch,
           "cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

namespace {

// Offsets into each operand for every element of the broadcast output.
struct BroadcastPlan {
  Shape out_shape;
  bool trivial = false;  // identical shapes
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

std::vector<std::size_t> operand_offsets(const Shape& operand, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = operand.size(); i-- > 0;) {
    const std::size_t axis = i + (rank - operand.size());
    strides[axis] = operand[i] == 1 ? 0 : stride;
    stride *= operand[i];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    offsets[flat] = offset;
    for (std::size_t axis = rank; axis-- > 0;) {
      if (++counter[axis] < out[axis]) {
        offset += strides[axis];
        break;
      }
      offset -= strides[axis] * (out[axis] - 1);
      counter[axis] = 0;
    }
  }
  return offsets;
}

std::shared_ptr<const BroadcastPlan> plan_broadcast(const Tensor& a, const Tensor& b) {
  auto plan = std::make_shared<BroadcastPlan>();
  if (a.shape() == b.shape()) {
    plan->out_shape = a.shape();
    plan->trivial = true;
    return plan;
  }
  plan->out_shape = broadcast_shape(a.shape(), b.shape());
  plan->a_index = operand_offsets(a.shape(), plan->out_shape);
  plan->b_index = operand_offsets(b.shape(), plan->out_shape);
  return plan;
}

// Applies f(x, y) over the broadcast; dfa/dfb give the local partials.
template <typename F, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  auto plan = plan_broadcast(a, b);
  const std::size_t n = shape_numel(plan->out_shape);
  std::vector<double> out(n);
  auto av = a.data();
  auto bv = b.data();
  if (plan->trivial) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[plan->a_index[i]], bv[plan->b_index[i]]);
  }
  auto a_impl = a.impl();
  auto b_impl = b.impl();
  return make_result(
      plan->out_shape, std::move(out), name, {a, b},
      [plan, a_impl, b_impl, dfa, dfb](const std::vector<double>& g,
                                       const std::vector<std::vector<double>*>& sinks) {
        const auto& x = a_impl->data;
        const auto& y = b_impl->data;
        const std::size_t count = g.size();
        for (std::size_t i = 0; i < count; ++i) {
          const std::size_t ia = plan->trivial ? i : plan->a_index[i];
          const std::size_t ib = plan->trivial ? i : plan->b_index[i];
          if (sinks[0]) (*sinks[0])[ia] += g[i] * dfa(x[ia], y[ib]);
          if (sinks[1]) (*sinks[1])[ib] += g[i] * dfb(x[ia], y[ib]);
        }
      });
}

// out = f(x); dfdx(x, out) is the local derivative.
template <typename F, typename D>
Tensor unary_op(const char* name, const Tensor& a, F f, D dfdx) {
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto a_impl = a.impl();
  auto result = make_result(a.shape(), std::move(out), name, {a}, nullptr);
  if (result.tracked()) {
    // The rule needs the output values; hold them weakly to avoid a cycle.
    std::weak_ptr<detail::TensorImpl> weak_out = result.impl();
    result.impl()->node->backward =
        [a_impl, weak_out, dfdx](const std::vector<double>& g,
                                 const std::vector<std::vector<double>*>& sinks) {
          if (!sinks[0]) return;
          auto out_impl = weak_out.lock();
          const auto& x = a_impl->data;
          for (std::size_t i = 0; i < g.size(); ++i) {
            (*sinks[0])[i] += g[i] * dfdx(x[i], out_impl->data[i]);
          }
        };
  }
  return result;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::size_t> normalize_axes(const Tensor& a, std::vector<std::size_t> axes) {
  if (axes.empty()) {
    axes.resize(a.rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  }
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (auto axis : axes) {
    require(axis < a.rank(), ErrorKind::kInvalidArgument,
            "reduction axis " + std::to_string(axis) + " out of range for " +
                shape_string(a.shape()));
    require(a.shape()[axis] > 0, ErrorKind::kInvalidArgument, "empty reduction axis");
  }
  return axes;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
  return unary_op(
      "silu", a, [](double x) { return x * sigmoid(x); },
      [](double x, double) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      "add_scalar", a, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes_in, bool keepdim) {
  const auto axes = normalize_axes(a, axes_in);
  const auto& in_shape = a.shape();
  Shape kept = in_shape;
  for (auto axis : axes) kept[axis] = 1;

  // Map every input element onto its output slot.
  const std::size_t n = a.numel();
  auto target = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<double> out(shape_numel(kept), 0.0);
  {
    const auto offsets = operand_offsets(kept, in_shape);
    auto av = a.data();
    for (std::size_t i = 0; i < n; ++i) {
      (*target)[i] = offsets[i];
      out[offsets[i]] += av[i];
    }
  }
  Shape out_shape;
  if (keepdim) {
    out_shape = kept;
  } else {
    for (std::size_t i = 0; i < in_shape.size(); ++i) {
      if (!std::binary_search(axes.begin(), axes.end(), i)) out_shape.push_back(in_shape[i]);
    }
  }
  return make_result(std::move(out_shape), std::move(out), "sum", {a},
                     [target](const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& sinks) {
                       if (!sinks[0]) return;
                       auto& gin = *sinks[0];
                       for (std::size_t i = 0; i < target->size(); ++i) gin[i] += g[(*target)[i]];
                     });
}

Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes_in, bool keepdim) {
  const auto axes = normalize_axes(a, axes_in);
  std::size_t count = 1;
  for (auto axis : axes) count *= a.shape()[axis];
  return scale(sum(a, axes, keepdim), 1.0 / static_cast<double>(count));
}

MaxResult max(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), ErrorKind::kInvalidArgument,
          "max axis out of range for " + shape_string(a.shape()));
  const auto& shape = a.shape();
  const std::size_t extent = shape[axis];
  require(extent > 0, ErrorKind::kInvalidArgument, "empty reduction axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];

  auto av = a.data();
  std::vector<double> out(outer * inner);
  std::vector<std::size_t> indices(outer * inner);
  auto sources = std::make_shared<std::vector<std::size_t>>(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t best = 0;
      double best_value = av[o * extent * inner + in];
      for (std::size_t k = 1; k < extent; ++k) {
        const double v = av[(o * extent + k) * inner + in];
        if (v > best_value) {
          best_value = v;
          best = k;
        }
      }
      out[o * inner + in] = best_value;
      indices[o * inner + in] = best;
      (*sources)[o * inner + in] = (o * extent + best) * inner + in;
    }
  }
  Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out_shape.push_back(shape[i]);
  }
  auto values = make_result(std::move(out_shape), std::move(out), "max", {a},
                            [sources](const std::vector<double>& g,
                                      const std::vector<std::vector<double>*>& sinks) {
                              if (!sinks[0]) return;
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*sinks[0])[(*sources)[i]] += g[i];
                              }
                            });
  return {values, std::move(indices)};
}

MaxResult max(const Tensor& a) {
  require(a.numel() > 0, ErrorKind::kInvalidArgument, "max of an empty tensor");
  auto flat = reshape(a, {a.numel()});
  return max(flat, 0);
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), ErrorKind::kInvalidArgument,
          "softmax axis out of range for " + shape_string(a.shape()));
  const auto& shape = a.shape();
  const std::size_t extent = shape[axis];
  require(extent > 0, ErrorKind::kInvalidArgument, "empty softmax axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];

  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      double peak = av[base];
      for (std::size_t k = 1; k < extent; ++k) peak = std::max(peak, av[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < extent; ++k) {
        out[base + k * inner] = std::exp(av[base + k * inner] - peak);
        total += out[base + k * inner];
      }
      for (std::size_t k = 0; k < extent; ++k) out[base + k * inner] /= total;
    }
  }
  auto result = make_result(shape, std::move(out), "softmax", {a}, nullptr);
  if (result.tracked()) {
    std::weak_ptr<detail::TensorImpl> weak_out = result.impl();
    result.impl()->node->backward = [weak_out, outer, inner, extent](
                                        const std::vector<double>& g,
                                        const std::vector<std::vector<double>*>& sinks) {
      if (!sinks[0]) return;
      const auto& s = weak_out.lock()->data;
      auto& gin = *sinks[0];
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * extent * inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < extent; ++k) dot += g[base + k * inner] * s[base + k * inner];
          for (std::size_t k = 0; k < extent; ++k) {
            gin[base + k * inner] += s[base + k * inner] * (g[base + k * inner] - dot);
          }
        }
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), ErrorKind::kShapeMismatch,
          "cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  auto av = a.data();
  return make_result(std::move(shape), std::vector<double>(av.begin(), av.end()), "reshape",
                     {a},
                     [](const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& sinks) {
                       if (!sinks[0]) return;
                       for (std::size_t i = 0; i < g.size(); ++i) (*sinks[0])[i] += g[i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), ErrorKind::kInvalidArgument, "concat of zero tensors");
  const auto& first = parts.front().shape();
  require(axis < first.size(), ErrorKind::kInvalidArgument, "concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& part : parts) {
    const auto& s = part.shape();
    bool compatible = s.size() == first.size();
    for (std::size_t i = 0; compatible && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) compatible = false;
    }
    require(compatible, ErrorKind::kShapeMismatch,
            "concat shape mismatch: " + shape_string(first) + " vs " + shape_string(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<double> out(shape_numel(out_shape));
  auto extents = std::make_shared<std::vector<std::size_t>>();
  const std::size_t out_row = out_shape[axis] * inner;
  std::size_t column = 0;
  for (const auto& part : parts) {
    const std::size_t row = part.shape()[axis] * inner;
    auto pv = part.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * row, row, out.begin() + o * out_row + column);
    }
    extents->push_back(row);
    column += row;
  }
  return make_result(std::move(out_shape), std::move(out), "concat", parts,
                     [extents, outer, out_row](const std::vector<double>& g,
                                               const std::vector<std::vector<double>*>& sinks) {
                       std::size_t col = 0;
                       for (std::size_t p = 0; p < sinks.size(); ++p) {
                         const std::size_t row = (*extents)[p];
                         if (sinks[p]) {
                           auto& gin = *sinks[p];
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t i = 0; i < row; ++i) {
                               gin[o * row + i] += g[o * out_row + col + i];
                             }
                           }
                         }
                         col += row;
                       }
                     });
}

Tensor take(const Tensor& a, const std::vector<std::size_t>& flat_indices) {
  auto av = a.data();
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    require(flat_indices[i] < av.size(), ErrorKind::kInvalidArgument,
            "take index out of range");
    out[i] = av[flat_indices[i]];
  }
  auto indices = std::make_shared<std::vector<std::size_t>>(flat_indices);
  return make_result({flat_indices.size()}, std::move(out), "take", {a},
                     [indices](const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& sinks) {
                       if (!sinks[0]) return;
                       for (std::size_t i = 0; i < g.size(); ++i) (*sinks[0])[(*indices)[i]] += g[i];
                     });
}

Tensor nchw_to_rows(const Tensor& a) {
  require(a.rank() == 4, ErrorKind::kShapeMismatch,
          "nchw_to_rows expects rank 4, got " + shape_string(a.shape()));
  const std::size_t batch = a.dim(0), channels = a.dim(1), height = a.dim(2), width = a.dim(3);
  const std::size_t plane = height * width;
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        out[(b * plane + p) * channels + c] = av[(b * channels + c) * plane + p];
      }
    }
  }
  return make_result({batch * plane, channels}, std::move(out), "nchw_to_rows", {a},
                     [batch, channels, plane](const std::vector<double>& g,
                                              const std::vector<std::vector<double>*>& sinks) {
                       if (!sinks[0]) return;
                       auto& gin = *sinks[0];
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t c = 0; c < channels; ++c) {
                           for (std::size_t p = 0; p < plane; ++p) {
                             gin[(b * channels + c) * plane + p] += g[(b * plane + p) * channels + c];
                           }
                         }
                       }
                     });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

}  // namespace protodiff
