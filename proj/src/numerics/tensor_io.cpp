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

#include "emetts/numerics/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace emetts {
namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void write_tensor(std::ostream& os, const TensorF& t) {
  nlohmann::json header;
  header["shape"] = t.shape();
  header["dtype"] = "f32";
  os << header.dump() << '\n';
  std::vector<std::uint32_t> raw(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) raw[i] = to_le(std::bit_cast<std::uint32_t>(t[i]));
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

TensorF read_tensor(std::istream& is, const std::string& context) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(context + ": corrupt header (missing tensor header line)");
  Shape shape;
  try {
    auto header = nlohmann::json::parse(line);
    if (header.at("dtype").get<std::string>() != "f32") {
      throw FormatError(context + ": unsupported schema (dtype " + header.at("dtype").dump() + ")");
    }
    shape = header.at("shape").get<Shape>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(context + ": corrupt header (" + e.what() + ")");
  }
  if (shape.empty() || shape_numel(shape) == 0) {
    throw FormatError(context + ": corrupt header (shape " + shape_str(shape) + ")");
  }
  const std::size_t n = shape_numel(shape);
  std::vector<std::uint32_t> raw(n);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(is.gcount()) != n * 4) {
    throw FormatError(context + ": truncated tensor (expected " + std::to_string(n * 4) + " bytes, got " +
                      std::to_string(is.gcount()) + ")");
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(to_le(raw[i]));
  return TensorF(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const TensorF& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  write_tensor(os, t);
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

TensorF load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(path.string() + ": cannot open for reading");
  return read_tensor(is, path.string());
}

}  // namespace emetts
