#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The embedrl Authors

// Embedding dumps: a JSON sidecar {"dim", "count", "dtype": "f32le", "ids"}
// next to a raw file of count*dim little-endian float32 values, row-major.

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "embedrl/embedding.hpp"
#include "embedrl/error.hpp"

namespace embedrl::embedding {

struct EmbeddingDump {
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<float> values;  // ids.size() * dim, row-major

  std::span<const float> row(std::size_t i) const { return std::span<const float>(values).subspan(i * dim, dim); }

  /// Rows as unit vectors keyed by id.
  std::map<std::string, EmbeddingVector, std::less<>> by_id() const {
    std::map<std::string, EmbeddingVector, std::less<>> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto r = row(i);
      out.insert_or_assign(ids[i], EmbeddingVector::from_unit(std::vector<double>(r.begin(), r.end())));
    }
    return out;
  }
};

inline void encode_f32le(float v, std::array<char, 4>& out) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out[b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
}

inline float decode_f32le(const char* in) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[b])) << (8 * b);
  return std::bit_cast<float>(bits);
}

inline EmbeddingDump make_dump(const std::vector<std::string>& ids, std::span<const EmbeddingVector> vectors) {
  if (ids.size() != vectors.size()) throw Error(Errc::shape_mismatch, "one id per vector required");
  EmbeddingDump dump;
  dump.dim = vectors.empty() ? 0 : vectors.front().dim();
  dump.ids = ids;
  dump.values.reserve(ids.size() * dump.dim);
  for (const auto& v : vectors) {
    if (v.dim() != dump.dim) throw Error(Errc::dimension_mismatch, "ragged embedding dump");
    for (double x : v.values()) dump.values.push_back(static_cast<float>(x));
  }
  return dump;
}

inline void write_dump(const EmbeddingDump& dump, const std::filesystem::path& header_path,
                       const std::filesystem::path& data_path) {
  nlohmann::ordered_json header;
  header["dim"] = dump.dim;
  header["count"] = dump.ids.size();
  header["dtype"] = "f32le";
  header["ids"] = dump.ids;
  std::ofstream h(header_path, std::ios::binary);
  if (!h) throw Error(Errc::io_error, "cannot write " + header_path.string());
  h << header.dump() << '\n';

  std::ofstream d(data_path, std::ios::binary);
  if (!d) throw Error(Errc::io_error, "cannot write " + data_path.string());
  std::array<char, 4> buf{};
  for (float v : dump.values) {
    encode_f32le(v, buf);
    d.write(buf.data(), 4);
  }
  if (!d) throw Error(Errc::io_error, "short write to " + data_path.string());
}

inline EmbeddingDump read_dump(const std::filesystem::path& header_path, const std::filesystem::path& data_path) {
  std::ifstream h(header_path, std::ios::binary);
  if (!h) throw Error(Errc::io_error, "cannot read " + header_path.string());
  nlohmann::json header = nlohmann::json::parse(h, nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw Error(Errc::parse_error, header_path.string());
  if (header.value("dtype", "") != "f32le") throw Error(Errc::parse_error, "dtype must be f32le");

  EmbeddingDump dump;
  try {
    dump.dim = header.at("dim").get<std::size_t>();
    dump.ids = header.at("ids").get<std::vector<std::string>>();
    if (header.at("count").get<std::size_t>() != dump.ids.size()) {
      throw Error(Errc::parse_error, "count does not match ids");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, header_path.string() + ": " + e.what());
  }

  std::ifstream d(data_path, std::ios::binary);
  if (!d) throw Error(Errc::io_error, "cannot read " + data_path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(d)), std::istreambuf_iterator<char>());
  const std::size_t expected = dump.ids.size() * dump.dim * 4;
  if (bytes.size() != expected) {
    throw Error(Errc::parse_error, data_path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                                       std::to_string(bytes.size()));
  }
  dump.values.resize(dump.ids.size() * dump.dim);
  for (std::size_t i = 0; i < dump.values.size(); ++i) dump.values[i] = decode_f32le(bytes.data() + 4 * i);
  return dump;
}

}  // namespace embedrl::embedding
