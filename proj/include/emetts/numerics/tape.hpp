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

// Reverse-mode autodiff over a linear tape. Every op appends one node whose
// backward closure scatters the node's gradient into its parents. Nodes are
// created in topological order, so backward() is a single reverse sweep.

#ifndef EMETTS_NUMERICS_TAPE_HPP_
#define EMETTS_NUMERICS_TAPE_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <string_view>
#include <vector>

#include "emetts/numerics/params.hpp"
#include "emetts/numerics/tensor.hpp"

namespace emetts {

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value);
  /// A differentiable leaf that is not a registered parameter.
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to a parameter; backward() accumulates into param.grad.
  Var<T> param(Parameter<T>& p);

  /// Append an op result. `backward` runs only when the result needs a gradient.
  Var<T> push(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn backward,
              std::string_view op);
  Var<T> push(Tensor<T> value, const std::vector<Var<T>>& parents, BackwardFn backward,
              std::string_view op);

  const Tensor<T>& value(std::uint32_t id) const {
    const auto& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-initialized on first access. Parameter
  /// leaves alias Parameter::grad, so gradients accumulate across tapes until
  /// the registry is zeroed.
  Tensor<T>& grad(std::uint32_t id);
  bool has_grad(std::uint32_t id) const { return !nodes_[id].grad.empty(); }

  /// Seed d(root)/d(root) = seed (root must hold one element) and sweep.
  void backward(Var<T> root, T seed = T(1));

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  // A deque keeps value() references valid while later ops append nodes.
  std::deque<Node> nodes_;
  bool grad_enabled_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace emetts

#endif  // EMETTS_NUMERICS_TAPE_HPP_
