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

#ifndef EMETTS_NUMERICS_PARAMS_HPP_
#define EMETTS_NUMERICS_PARAMS_HPP_

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "emetts/numerics/tensor.hpp"

namespace emetts {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named trainable tensors. Iteration follows registration order, which is
/// fixed by the model constructor, so it is stable across runs.
template <typename T>
class ParameterRegistry {
 public:
  ParameterRegistry() = default;
  ParameterRegistry(const ParameterRegistry&) = delete;
  ParameterRegistry& operator=(const ParameterRegistry&) = delete;
  ParameterRegistry(ParameterRegistry&&) noexcept = default;
  ParameterRegistry& operator=(ParameterRegistry&&) noexcept = default;

  Parameter<T>& add(std::string name, Tensor<T> init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->grad = Tensor<T>(init.shape());
    p->value = std::move(init);
    index_.emplace(std::move(name), params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  Parameter<T>& get(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
    return *params_[it->second];
  }
  const Parameter<T>& get(std::string_view name) const {
    return const_cast<ParameterRegistry*>(this)->get(name);
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->name);
    return out;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace emetts

#endif  // EMETTS_NUMERICS_PARAMS_HPP_
