// Copyright 2026 The LexBridge Authors
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

#ifndef LEXBRIDGE_IO_HPP
#define LEXBRIDGE_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "lexbridge/common.hpp"

namespace lexbridge::io {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr char kMatrixMagic[4] = {'L', 'X', 'B', '1'};
inline constexpr char kCheckpointMagic[4] = {'L', 'X', 'C', 'K'};

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) {
    throw DataError(std::string("truncated tensor data while reading ") + what);
  }
  return v;
}

}  // namespace detail

/// Dense f32 matrix block: magic "LXB1", u32 rows, u32 cols, then rows*cols
/// IEEE-754 single-precision values, row-major, little-endian.
inline void save_matrix(std::ostream& out, const MatrixF& m) {
  out.write(kMatrixMagic, 4);
  detail::write_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::write_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * m.size()));
}

inline MatrixF load_matrix(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMatrixMagic, 4) != 0) {
    throw DataError("bad tensor block: expected LXB1 magic");
  }
  const std::uint32_t rows = detail::read_u32(in, "rows");
  const std::uint32_t cols = detail::read_u32(in, "cols");
  MatrixF m(rows, cols);
  if (m.size() > 0 &&
      !in.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(sizeof(float) * m.size()))) {
    throw DataError("truncated tensor payload");
  }
  return m;
}

inline void save_matrix(const std::filesystem::path& path, const MatrixF& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write tensor file: " + path.string());
  save_matrix(out, m);
}

inline MatrixF load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file: " + path.string());
  return load_matrix(in);
}

/// Named tensor collection with a free-form JSON meta object. On disk:
/// magic "LXCK", u32 manifest length, manifest JSON, then one LXB1 block per
/// tensor. Manifest offsets are relative to the start of the payload area.
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, MatrixF>> tensors;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream payload(std::ios::binary);
  nlohmann::json tensor_list = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.tensors) {
    tensor_list.push_back({{"name", name},
                           {"rows", m.rows()},
                           {"cols", m.cols()},
                           {"offset", static_cast<std::uint64_t>(payload.tellp())}});
    save_matrix(payload, m);
  }
  nlohmann::json manifest{
      {"format", "lxck-v1"}, {"meta", ckpt.meta}, {"tensors", std::move(tensor_list)}};
  const std::string manifest_str = manifest.dump();
  const std::string payload_str = payload.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint file: " + path.string());
  out.write(kCheckpointMagic, 4);
  detail::write_u32(out, static_cast<std::uint32_t>(manifest_str.size()));
  out.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
  out.write(payload_str.data(), static_cast<std::streamsize>(payload_str.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw DataError("not a checkpoint file (missing LXCK magic): " + path.string());
  }
  const std::uint32_t manifest_len = detail::read_u32(in, "manifest length");
  std::string manifest_str(manifest_len, '\0');
  if (!in.read(manifest_str.data(), manifest_len)) {
    throw DataError("truncated checkpoint manifest: " + path.string());
  }
  nlohmann::json manifest = nlohmann::json::parse(manifest_str, nullptr, false);
  if (manifest.is_discarded() || manifest.value("format", "") != "lxck-v1") {
    throw DataError("unrecognized checkpoint manifest: " + path.string());
  }
  const std::streampos payload_start = in.tellg();
  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    MatrixF m = load_matrix(in);
    if (m.rows() != entry.at("rows").get<Eigen::Index>() ||
        m.cols() != entry.at("cols").get<Eigen::Index>()) {
      throw DataError("checkpoint tensor '" + name + "' shape disagrees with manifest");
    }
    ckpt.tensors.emplace_back(name, std::move(m));
  }
  return ckpt;
}

/// FNV-1a 64-bit content digest; used in run manifests to record input and
/// output identities.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for digest: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + hex;
}

}  // namespace lexbridge::io

#endif  // LEXBRIDGE_IO_HPP
