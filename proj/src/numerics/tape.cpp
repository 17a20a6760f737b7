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

#include "emetts/numerics/tape.hpp"

#include <string>

namespace emetts {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  Node n;
  n.requires_grad = grad_enabled_;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::push(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn backward,
                     std::string_view op) {
  return push(std::move(value), std::vector<Var<T>>(parents), std::move(backward), op);
}

template <typename T>
Var<T> Tape<T>::push(Tensor<T> value, const std::vector<Var<T>>& parents, BackwardFn backward,
                     std::string_view op) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op) + " " +
                       shape_str(value.shape()));
  }
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const auto& p : parents) {
      if (&p.tape() != this) throw std::logic_error("operands live on different tapes");
      if (nodes_[p.id()].requires_grad) n.requires_grad = true;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.param) return n.param->grad;
  if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root, T seed) {
  if (root.value().size() != 1) {
    throw ShapeError("backward() needs a single-element root, got " + shape_str(root.shape()));
  }
  if (!nodes_[root.id()].requires_grad) return;
  if (nodes_[root.id()].param) throw std::logic_error("backward() root cannot be a parameter leaf");
  grad(root.id())[0] += seed;
  for (std::uint32_t i = root.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace emetts
