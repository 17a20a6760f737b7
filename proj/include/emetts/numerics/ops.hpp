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

// Differentiable operations. Matrices are row-major; an N-d tensor used as a
// matrix is viewed as [prod(shape[:-1]), shape[-1]].

#ifndef EMETTS_NUMERICS_OPS_HPP_
#define EMETTS_NUMERICS_OPS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "emetts/numerics/tape.hpp"

namespace emetts::ops {

/// a[M,K] * b[K,N].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

/// a[M,K] * b[N,K]^T.
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);

/// x[*, in] * weight[in, out] + bias[out].
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, std::optional<Var<T>> bias);
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight) {
  return linear(x, weight, std::optional<Var<T>>{});
}
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  return linear(x, weight, std::optional<Var<T>>(bias));
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);

/// Adds r (cols(a) elements) to every row of a.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> r);
/// Multiplies every row of a elementwise by r.
template <typename T>
Var<T> mul_row(Var<T> a, Var<T> r);

/// Elementwise with a non-differentiable constant of the same shape.
template <typename T>
Var<T> add_const(Var<T> a, const Tensor<T>& c);
template <typename T>
Var<T> mul_const(Var<T> a, const Tensor<T>& c);

/// Rows with keep[r] == 0 become +0; the rest pass through unchanged.
template <typename T>
Var<T> mask_rows(Var<T> a, std::span<const std::uint8_t> keep);

/// x * sigmoid(x).
template <typename T>
Var<T> silu(Var<T> a);
template <typename T>
Var<T> softplus(Var<T> a);

/// Max-subtracted softmax along `axis`.
template <typename T>
Var<T> softmax(Var<T> a, std::size_t axis);

/// Normalizes each row to zero mean, unit variance (no affine part).
template <typename T>
Var<T> layer_norm(Var<T> a, T eps = T(1e-5));

/// x[T, C_in] convolved with kernel[k, C_in, C_out] (odd k, zero "same"
/// padding) plus bias[C_out].
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> kernel, std::optional<Var<T>> bias);
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> kernel) {
  return conv1d(x, kernel, std::optional<Var<T>>{});
}
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> kernel, Var<T> bias) {
  return conv1d(x, kernel, std::optional<Var<T>>(bias));
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len);
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);

/// Rows of table[V, C] selected by ids.
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids);

/// Row i repeated counts[i] times; every count must be >= 1.
template <typename T>
Var<T> repeat_rows(Var<T> a, std::span<const int> counts);

/// Column sums as a [1, C] row.
template <typename T>
Var<T> sum_rows(Var<T> a);

template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a);

/// Mean of squared differences, as a one-element tensor.
template <typename T>
Var<T> mse(Var<T> pred, Var<T> target);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

}  // namespace emetts::ops

#endif  // EMETTS_NUMERICS_OPS_HPP_
