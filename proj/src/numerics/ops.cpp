// Copyright 2026 The emetts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "emetts/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

namespace emetts::ops {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using MapC = Eigen::Map<const Mat<T>>;

template <typename T>
MapC<T> as_mat(const Tensor<T>& t) {
  return MapC<T>(t.storage().data(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
MapM<T> as_mat(Tensor<T>& t) {
  return MapM<T>(t.storage().data(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
MapC<T> as_mat(const Tensor<T>& t, std::size_t r, std::size_t c) {
  return MapC<T>(t.storage().data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <typename T>
MapM<T> as_mat(Tensor<T>& t, std::size_t r, std::size_t c) {
  return MapM<T>(t.storage().data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank2(const Var<T>& a, const char* op, const char* what) {
  if (a.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": " + what + " must be rank 2, got " + shape_str(a.shape()));
  }
}

Shape with_last(Shape s, std::size_t last) {
  s.back() = last;
  return s;
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  auto& d = dst.storage();
  const auto& s = src.storage();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_rank2(b, "matmul", "right operand");
  if (a.cols() != b.shape()[0]) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), n = b.shape()[1];
  Tensor<T> out(with_last(a.shape(), n));
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value());
  return a.tape().push(
      std::move(out), {a, b},
      [a, b, m, n](Tape<T>& tape, std::uint32_t self) {
        auto dy = as_mat(tape.grad(self), m, n);
        if (a.requires_grad()) as_mat(tape.grad(a.id())).noalias() += dy * as_mat(b.value()).transpose();
        if (b.requires_grad()) as_mat(tape.grad(b.id())).noalias() += as_mat(a.value()).transpose() * dy;
      },
      "matmul");
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  require_rank2(a, "matmul_nt", "left operand");
  require_rank2(b, "matmul_nt", "right operand");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), n = b.rows();
  Tensor<T> out({m, n});
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value()).transpose();
  return a.tape().push(
      std::move(out), {a, b},
      [a, b, m, n](Tape<T>& tape, std::uint32_t self) {
        auto dy = as_mat(tape.grad(self), m, n);
        if (a.requires_grad()) as_mat(tape.grad(a.id())).noalias() += dy * as_mat(b.value());
        if (b.requires_grad()) as_mat(tape.grad(b.id())).noalias() += dy.transpose() * as_mat(a.value());
      },
      "matmul_nt");
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, std::optional<Var<T>> bias) {
  if (weight.shape().size() != 2 || x.cols() != weight.shape()[0]) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t m = x.rows(), n = weight.shape()[1];
  if (bias && bias->value().size() != n) {
    throw ShapeError("linear: bias " + shape_str(bias->shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  Tensor<T> out(with_last(x.shape(), n));
  auto y = as_mat(out);
  y.noalias() = as_mat(x.value()) * as_mat(weight.value());
  std::vector<Var<T>> parents{x, weight};
  if (bias) {
    const auto& bv = bias->value().storage();
    for (std::size_t r = 0; r < m; ++r) {
      T* row = out.storage().data() + r * n;
      for (std::size_t c = 0; c < n; ++c) row[c] += bv[c];
    }
    parents.push_back(*bias);
  }
  return x.tape().push(
      std::move(out), parents,
      [x, weight, bias, m, n](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        auto dy = as_mat(g, m, n);
        if (x.requires_grad()) as_mat(tape.grad(x.id())).noalias() += dy * as_mat(weight.value()).transpose();
        if (weight.requires_grad()) as_mat(tape.grad(weight.id())).noalias() += as_mat(x.value()).transpose() * dy;
        if (bias && bias->requires_grad()) {
          auto& db = tape.grad(bias->id()).storage();
          for (std::size_t r = 0; r < m; ++r) {
            const T* row = g.storage().data() + r * n;
            for (std::size_t c = 0; c < n; ++c) db[c] += row[c];
          }
        }
      },
      "linear");
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  return a.tape().push(
      std::move(out), {a, b},
      [a, b](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        if (a.requires_grad()) accumulate(tape.grad(a.id()), g);
        if (b.requires_grad()) accumulate(tape.grad(b.id()), g);
      },
      "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().push(
      std::move(out), {a, b},
      [a, b](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        if (a.requires_grad()) accumulate(tape.grad(a.id()), g);
        if (b.requires_grad()) {
          auto& db = tape.grad(b.id());
          for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
        }
      },
      "sub");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().push(
      std::move(out), {a, b},
      [a, b](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        if (a.requires_grad()) {
          auto& da = tape.grad(a.id());
          const auto& bv = b.value();
          for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
        }
        if (b.requires_grad()) {
          auto& db = tape.grad(b.id());
          const auto& av = a.value();
          for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
        }
      },
      "mul");
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= factor;
  return a.tape().push(
      std::move(out), {a},
      [a, factor](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        auto& da = tape.grad(a.id());
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += factor * g[i];
      },
      "scale");
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> r) {
  const std::size_t m = a.rows(), n = a.cols();
  if (r.value().size() != n) {
    throw ShapeError("add_row: row " + shape_str(r.shape()) + " does not match " + shape_str(a.shape()));
  }
  Tensor<T> out = a.value();
  const auto& rv = r.value().storage();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.storage().data() + i * n;
    for (std::size_t c = 0; c < n; ++c) row[c] += rv[c];
  }
  return a.tape().push(
      std::move(out), {a, r},
      [a, r, m, n](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        if (a.requires_grad()) accumulate(tape.grad(a.id()), g);
        if (r.requires_grad()) {
          auto& dr = tape.grad(r.id()).storage();
          for (std::size_t i = 0; i < m; ++i) {
            const T* row = g.storage().data() + i * n;
            for (std::size_t c = 0; c < n; ++c) dr[c] += row[c];
          }
        }
      },
      "add_row");
}

template <typename T>
Var<T> mul_row(Var<T> a, Var<T> r) {
  const std::size_t m = a.rows(), n = a.cols();
  if (r.value().size() != n) {
    throw ShapeError("mul_row: row " + shape_str(r.shape()) + " does not match " + shape_str(a.shape()));
  }
  Tensor<T> out = a.value();
  const auto& rv = r.value().storage();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.storage().data() + i * n;
    for (std::size_t c = 0; c < n; ++c) row[c] *= rv[c];
  }
  return a.tape().push(
      std::move(out), {a, r},
      [a, r, m, n](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        const auto& rv = r.value().storage();
        const auto& av = a.value().storage();
        if (a.requires_grad()) {
          auto& da = tape.grad(a.id()).storage();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < n; ++c) da[i * n + c] += g[i * n + c] * rv[c];
        }
        if (r.requires_grad()) {
          auto& dr = tape.grad(r.id()).storage();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < n; ++c) dr[c] += g[i * n + c] * av[i * n + c];
        }
      },
      "mul_row");
}

template <typename T>
Var<T> add_const(Var<T> a, const Tensor<T>& c) {
  if (a.shape() != c.shape()) {
    throw ShapeError("add_const: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(c.shape()));
  }
  Tensor<T> out = a.value();
  accumulate(out, c);
  return a.tape().push(
      std::move(out), {a},
      [a](Tape<T>& tape, std::uint32_t self) { accumulate(tape.grad(a.id()), tape.grad(self)); },
      "add_const");
}

template <typename T>
Var<T> mul_const(Var<T> a, const Tensor<T>& c) {
  if (a.shape() != c.shape()) {
    throw ShapeError("mul_const: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(c.shape()));
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return a.tape().push(
      std::move(out), {a},
      [a, c](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        auto& da = tape.grad(a.id());
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * c[i];
      },
      "mul_const");
}

template <typename T>
Var<T> mask_rows(Var<T> a, std::span<const std::uint8_t> keep) {
  if (keep.size() != a.rows()) {
    throw ShapeError("mask_rows: " + std::to_string(keep.size()) + " flags for " + shape_str(a.shape()));
  }
  const std::size_t cols = a.cols();
  Tensor<T> out(a.shape());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    if (!keep[r]) continue;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a.value()[r * cols + c];
  }
  std::vector<std::uint8_t> flags(keep.begin(), keep.end());
  return a.tape().push(
      std::move(out), {a},
      [a, flags = std::move(flags), cols](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        auto& da = tape.grad(a.id());
        for (std::size_t r = 0; r < flags.size(); ++r) {
          if (!flags[r]) continue;
          for (std::size_t c = 0; c < cols; ++c) da[r * cols + c] += g[r * cols + c];
        }
      },
      "mask_rows");
}

template <typename T>
Var<T> silu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v = v / (T(1) + std::exp(-v));
  return a.tape().push(
      std::move(out), {a},
      [a](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        const auto& x = a.value();
        auto& da = tape.grad(a.id());
        for (std::size_t i = 0; i < da.size(); ++i) {
          const T s = T(1) / (T(1) + std::exp(-x[i]));
          da[i] += g[i] * s * (T(1) + x[i] * (T(1) - s));
        }
      },
      "silu");
}

template <typename T>
Var<T> softplus(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
  return a.tape().push(
      std::move(out), {a},
      [a](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        const auto& x = a.value();
        auto& da = tape.grad(a.id());
        for (std::size_t i = 0; i < da.size(); ++i) {
          T s = x[i] >= T(0) ? T(1) / (T(1) + std::exp(-x[i])) : std::exp(x[i]) / (T(1) + std::exp(x[i]));
          da[i] += g[i] * s;
        }
      },
      "softplus");
}

template <typename T>
Var<T> softmax(Var<T> a, std::size_t axis) {
  const Shape& shape = a.shape();
  if (axis >= shape.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  Tensor<T> out = a.value();
  auto& y = out.storage();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = y[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, y[base + k * inner]);
      T total = 0;
      for (std::size_t k = 0; k < len; ++k) {
        T e = std::exp(y[base + k * inner] - mx);
        y[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) y[base + k * inner] /= total;
    }
  }
  return a.tape().push(
      std::move(out), {a},
      [a, outer, inner, len](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        const auto& y = tape.value(self).storage();
        auto& da = tape.grad(a.id()).storage();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T dot = 0;
            for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
            for (std::size_t k = 0; k < len; ++k) {
              const std::size_t idx = base + k * inner;
              da[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      },
      "softmax");
}

template <typename T>
Var<T> layer_norm(Var<T> a, T eps) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = a.value();
  auto inv_std = std::make_shared<std::vector<T>>(m);
  auto& y = out.storage();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = y.data() + i * n;
    T mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= T(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= T(n);
    const T s = T(1) / std::sqrt(var + eps);
    (*inv_std)[i] = s;
    for (std::size_t c = 0; c < n; ++c) row[c] = (row[c] - mu) * s;
  }
  return a.tape().push(
      std::move(out), {a},
      [a, inv_std, m, n](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        const auto& xh = tape.value(self).storage();
        auto& da = tape.grad(a.id()).storage();
        for (std::size_t i = 0; i < m; ++i) {
          const T* gr = g.data() + i * n;
          const T* xr = xh.data() + i * n;
          T mg = 0, mgx = 0;
          for (std::size_t c = 0; c < n; ++c) {
            mg += gr[c];
            mgx += gr[c] * xr[c];
          }
          mg /= T(n);
          mgx /= T(n);
          const T s = (*inv_std)[i];
          for (std::size_t c = 0; c < n; ++c) da[i * n + c] += s * (gr[c] - mg - xr[c] * mgx);
        }
      },
      "layer_norm");
}

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> kernel, std::optional<Var<T>> bias) {
  require_rank2(x, "conv1d", "input");
  const Shape& ks = kernel.shape();
  if (ks.size() != 3 || ks[1] != x.cols()) {
    throw ShapeError("conv1d: input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(ks));
  }
  const std::size_t k = ks[0], cin = ks[1], cout = ks[2], t_len = x.rows();
  if (k % 2 == 0) throw ShapeError("conv1d: kernel width must be odd, got " + std::to_string(k));
  if (bias && bias->value().size() != cout) {
    throw ShapeError("conv1d: bias " + shape_str(bias->shape()) + " incompatible with kernel " + shape_str(ks));
  }
  const std::size_t half = k / 2;

  // im2col: row t holds x[t - half .. t + half] flattened, zeros off the ends.
  auto cols = std::make_shared<Tensor<T>>(Shape{t_len, k * cin});
  const auto& xv = x.value().storage();
  for (std::size_t t = 0; t < t_len; ++t) {
    T* dst = cols->storage().data() + t * k * cin;
    for (std::size_t j = 0; j < k; ++j) {
      const long src = static_cast<long>(t + j) - static_cast<long>(half);
      if (src < 0 || src >= static_cast<long>(t_len)) continue;
      std::copy_n(xv.data() + static_cast<std::size_t>(src) * cin, cin, dst + j * cin);
    }
  }
  Tensor<T> out({t_len, cout});
  as_mat(out).noalias() = as_mat(*cols) * as_mat(kernel.value(), k * cin, cout);
  std::vector<Var<T>> parents{x, kernel};
  if (bias) {
    const auto& bv = bias->value().storage();
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t c = 0; c < cout; ++c) out.storage()[t * cout + c] += bv[c];
    parents.push_back(*bias);
  }
  return x.tape().push(
      std::move(out), parents,
      [x, kernel, bias, cols, k, cin, cout, t_len, half](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self);
        auto dy = as_mat(g, t_len, cout);
        if (kernel.requires_grad()) {
          as_mat(tape.grad(kernel.id()), k * cin, cout).noalias() += as_mat(*cols).transpose() * dy;
        }
        if (bias && bias->requires_grad()) {
          auto& db = tape.grad(bias->id()).storage();
          for (std::size_t t = 0; t < t_len; ++t)
            for (std::size_t c = 0; c < cout; ++c) db[c] += g.storage()[t * cout + c];
        }
        if (x.requires_grad()) {
          Tensor<T> dcols({t_len, k * cin});
          as_mat(dcols).noalias() = dy * as_mat(kernel.value(), k * cin, cout).transpose();
          auto& dx = tape.grad(x.id()).storage();
          for (std::size_t t = 0; t < t_len; ++t) {
            const T* src = dcols.storage().data() + t * k * cin;
            for (std::size_t j = 0; j < k; ++j) {
              const long pos = static_cast<long>(t + j) - static_cast<long>(half);
              if (pos < 0 || pos >= static_cast<long>(t_len)) continue;
              T* d = dx.data() + static_cast<std::size_t>(pos) * cin;
              for (std::size_t c = 0; c < cin; ++c) d[c] += src[j * cin + c];
            }
          }
        }
      },
      "conv1d");
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len) {
  const std::size_t m = a.rows(), n = a.cols();
  if (len == 0 || start + len > n) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for " + shape_str(a.shape()));
  }
  Tensor<T> out({m, len});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.value().storage().data() + i * n + start, len, out.storage().data() + i * len);
  }
  return a.tape().push(
      std::move(out), {a},
      [a, start, len, m, n](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        auto& da = tape.grad(a.id()).storage();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t c = 0; c < len; ++c) da[i * n + start + c] += g[i * len + c];
      },
      "slice_cols");
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    total += p.cols();
  }
  Tensor<T> out({m, total});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.value().storage().data() + i * w, w, out.storage().data() + i * total + off);
    }
    off += w;
  }
  return parts[0].tape().push(
      std::move(out), parts,
      [parts, offsets, m, total](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (!parts[p].requires_grad()) continue;
          const std::size_t w = parts[p].cols();
          auto& dp = tape.grad(parts[p].id()).storage();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < w; ++c) dp[i * w + c] += g[i * total + offsets[p] + c];
        }
      },
      "concat_cols");
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    m += p.rows();
  }
  std::vector<T> data;
  data.reserve(m * n);
  for (const auto& p : parts) data.insert(data.end(), p.value().storage().begin(), p.value().storage().end());
  return parts[0].tape().push(
      Tensor<T>({m, n}, std::move(data)), parts,
      [parts](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        std::size_t off = 0;
        for (const auto& p : parts) {
          const std::size_t sz = p.value().size();
          if (p.requires_grad()) {
            auto& dp = tape.grad(p.id()).storage();
            for (std::size_t i = 0; i < sz; ++i) dp[i] += g[off + i];
          }
          off += sz;
        }
      },
      "concat_rows");
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids) {
  require_rank2(table, "gather_rows", "table");
  const std::size_t v = table.rows(), n = table.cols();
  if (ids.empty()) throw ShapeError("gather_rows: empty index list");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw std::out_of_range("gather_rows: index " + std::to_string(id) + " outside table of " +
                              std::to_string(v) + " rows");
    }
  }
  Tensor<T> out({ids.size(), n});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.value().storage().data() + static_cast<std::size_t>(ids[i]) * n, n,
                out.storage().data() + i * n);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.tape().push(
      std::move(out), {table},
      [table, idx, n](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        auto& dt = tape.grad(table.id()).storage();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          T* row = dt.data() + static_cast<std::size_t>(idx[i]) * n;
          for (std::size_t c = 0; c < n; ++c) row[c] += g[i * n + c];
        }
      },
      "gather_rows");
}

template <typename T>
Var<T> repeat_rows(Var<T> a, std::span<const int> counts) {
  const std::size_t m = a.rows(), n = a.cols();
  if (counts.size() != m) {
    throw ShapeError("repeat_rows: " + std::to_string(counts.size()) + " counts for " + std::to_string(m) + " rows");
  }
  std::size_t total = 0;
  for (int c : counts) {
    if (c < 1) throw std::invalid_argument("repeat_rows: count " + std::to_string(c) + " < 1");
    total += static_cast<std::size_t>(c);
  }
  Tensor<T> out({total, n});
  std::size_t r = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (int k = 0; k < counts[i]; ++k, ++r) {
      std::copy_n(a.value().storage().data() + i * n, n, out.storage().data() + r * n);
    }
  }
  std::vector<int> cnt(counts.begin(), counts.end());
  return a.tape().push(
      std::move(out), {a},
      [a, cnt, n](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        auto& da = tape.grad(a.id()).storage();
        std::size_t r = 0;
        for (std::size_t i = 0; i < cnt.size(); ++i) {
          for (int k = 0; k < cnt[i]; ++k, ++r)
            for (std::size_t c = 0; c < n; ++c) da[i * n + c] += g[r * n + c];
        }
      },
      "repeat_rows");
}

template <typename T>
Var<T> sum_rows(Var<T> a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < n; ++c) out[c] += a.value()[i * n + c];
  return a.tape().push(
      std::move(out), {a},
      [a, m, n](Tape<T>& tape, std::uint32_t self) {
        const auto& g = tape.grad(self).storage();
        auto& da = tape.grad(a.id()).storage();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t c = 0; c < n; ++c) da[i * n + c] += g[c];
      },
      "sum_rows");
}

template <typename T>
Var<T> sum(Var<T> a) {
  const auto& v = a.value().storage();
  Tensor<T> out({1}, std::vector<T>{std::accumulate(v.begin(), v.end(), T(0))});
  return a.tape().push(
      std::move(out), {a},
      [a](Tape<T>& tape, std::uint32_t self) {
        const T g = tape.grad(self)[0];
        for (auto& d : tape.grad(a.id()).storage()) d += g;
      },
      "sum");
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / T(a.value().size()));
}

template <typename T>
Var<T> mse(Var<T> pred, Var<T> target) {
  require_same_shape(pred, target, "mse");
  const auto& p = pred.value().storage();
  const auto& q = target.value().storage();
  const T inv_n = T(1) / T(p.size());
  T acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - q[i]) * (p[i] - q[i]);
  return pred.tape().push(
      Tensor<T>({1}, std::vector<T>{acc * inv_n}), {pred, target},
      [pred, target, inv_n](Tape<T>& tape, std::uint32_t self) {
        const T g = tape.grad(self)[0] * T(2) * inv_n;
        const auto& p = pred.value().storage();
        const auto& q = target.value().storage();
        if (pred.requires_grad()) {
          auto& dp = tape.grad(pred.id()).storage();
          for (std::size_t i = 0; i < p.size(); ++i) dp[i] += g * (p[i] - q[i]);
        }
        if (target.requires_grad()) {
          auto& dq = tape.grad(target.id()).storage();
          for (std::size_t i = 0; i < p.size(); ++i) dq[i] -= g * (p[i] - q[i]);
        }
      },
      "mse");
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape().push(
      std::move(out), {a},
      [a](Tape<T>& tape, std::uint32_t self) { accumulate(tape.grad(a.id()), tape.grad(self)); },
      "reshape");
}

#define EMETTS_INSTANTIATE_OPS(T)                                                       \
  template Var<T> matmul(Var<T>, Var<T>);                                               \
  template Var<T> matmul_nt(Var<T>, Var<T>);                                            \
  template Var<T> linear(Var<T>, Var<T>, std::optional<Var<T>>);                        \
  template Var<T> add(Var<T>, Var<T>);                                                  \
  template Var<T> sub(Var<T>, Var<T>);                                                  \
  template Var<T> mul(Var<T>, Var<T>);                                                  \
  template Var<T> scale(Var<T>, T);                                                     \
  template Var<T> add_row(Var<T>, Var<T>);                                              \
  template Var<T> mul_row(Var<T>, Var<T>);                                              \
  template Var<T> add_const(Var<T>, const Tensor<T>&);                                  \
  template Var<T> mul_const(Var<T>, const Tensor<T>&);                                  \
  template Var<T> mask_rows(Var<T>, std::span<const std::uint8_t>);                     \
  template Var<T> silu(Var<T>);                                                         \
  template Var<T> softplus(Var<T>);                                                     \
  template Var<T> softmax(Var<T>, std::size_t);                                         \
  template Var<T> layer_norm(Var<T>, T);                                                \
  template Var<T> conv1d(Var<T>, Var<T>, std::optional<Var<T>>);                        \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                         \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                              \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                              \
  template Var<T> gather_rows(Var<T>, std::span<const int>);                            \
  template Var<T> repeat_rows(Var<T>, std::span<const int>);                            \
  template Var<T> sum_rows(Var<T>);                                                     \
  template Var<T> sum(Var<T>);                                                          \
  template Var<T> mean(Var<T>);                                                         \
  template Var<T> mse(Var<T>, Var<T>);                                                  \
  template Var<T> reshape(Var<T>, Shape);

EMETTS_INSTANTIATE_OPS(float)
EMETTS_INSTANTIATE_OPS(double)

#undef EMETTS_INSTANTIATE_OPS

}  // namespace emetts::ops
