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

// Tensor file format: one JSON header line {"shape":[...],"dtype":"f32"},
// a '\n', then little-endian float32 payload in row-major order.

#ifndef EMETTS_NUMERICS_TENSOR_IO_HPP_
#define EMETTS_NUMERICS_TENSOR_IO_HPP_

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "emetts/numerics/tensor.hpp"

namespace emetts {

/// Malformed or incompatible on-disk data. The message carries the path or
/// record context and one of: "corrupt header", "truncated tensor",
/// "unsupported schema".
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensor(std::ostream& os, const TensorF& t);
TensorF read_tensor(std::istream& is, const std::string& context);

void save_tensor(const std::filesystem::path& path, const TensorF& t);
TensorF load_tensor(const std::filesystem::path& path);

}  // namespace emetts

#endif  // EMETTS_NUMERICS_TENSOR_IO_HPP_
