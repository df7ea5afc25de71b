#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reco/config.hpp"
#include "reco/param_store.hpp"

namespace reco {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig config;
  std::size_t epoch = 0;
  std::string rng_state;
  ParameterStore store;
};

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

inline void put_f64_le(std::vector<unsigned char>& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<unsigned char>((bits >> (8 * k)) & 0xFFu));
}

inline double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(p[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

template <class T>
void put_uint_le(std::ofstream& out, T v) {
  for (std::size_t k = 0; k < sizeof(T); ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

template <class T>
T get_uint_le(std::ifstream& in) {
  T v = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    const int c = in.get();
    if (c == EOF) throw IoError("truncated checkpoint header");
    v |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * k);
  }
  return v;
}

}  // namespace detail

// Binary container: "RECO" magic, u32 version, u64 header length, JSON header
// (config, epoch, RNG state, tensor directory with byte offsets, payload
// size, CRC32 of the payload), then the float64 payload in little-endian
// order: values, first moments, second moments per tensor.
inline void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::vector<unsigned char> payload;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& [name, e] : cp.store.entries()) {
    nlohmann::ordered_json t;
    t["name"] = name;
    t["shape"] = e.value.shape;
    t["offset"] = payload.size();
    for (double v : e.value.values) detail::put_f64_le(payload, v);
    t["m_offset"] = payload.size();
    for (double v : e.m) detail::put_f64_le(payload, v);
    t["v_offset"] = payload.size();
    for (double v : e.v) detail::put_f64_le(payload, v);
    t["step"] = e.step;
    tensors.push_back(std::move(t));
  }

  nlohmann::ordered_json header;
  header["config"] = config_to_json(cp.config);
  header["epoch"] = cp.epoch;
  header["rng"] = cp.rng_state;
  header["payload_bytes"] = payload.size();
  header["crc32"] = detail::crc32(payload.data(), payload.size());
  header["tensors"] = std::move(tensors);
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write("RECO", 4);
  detail::put_uint_le<std::uint32_t>(out, cp.version);
  detail::put_uint_le<std::uint64_t>(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "RECO", 4) != 0)
    throw ValidationError(path + " is not a checkpoint (bad magic)");
  Checkpoint cp;
  cp.version = detail::get_uint_le<std::uint32_t>(in);
  if (cp.version != kCheckpointVersion)
    throw ValidationError("checkpoint version " + std::to_string(cp.version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t header_len = detail::get_uint_le<std::uint64_t>(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len) throw IoError("truncated checkpoint header");

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint header: ") + e.what());
  }
  cp.config = config_from_json(header.at("config"));
  cp.epoch = header.at("epoch").get<std::size_t>();
  cp.rng_state = header.at("rng").get<std::string>();
  const std::uint64_t payload_bytes = header.at("payload_bytes").get<std::uint64_t>();

  std::vector<unsigned char> payload(payload_bytes);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_bytes));
  if (static_cast<std::uint64_t>(in.gcount()) != payload_bytes) throw IoError("truncated checkpoint payload");
  const std::uint32_t crc = detail::crc32(payload.data(), payload.size());
  if (crc != header.at("crc32").get<std::uint32_t>()) throw ValidationError("checkpoint checksum failure");

  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::vector<std::size_t> shape = t.at("shape").get<std::vector<std::size_t>>();
    Tensor value = Tensor::zeros(shape);
    const std::size_t n = value.numel();
    const std::uint64_t off = t.at("offset").get<std::uint64_t>();
    const std::uint64_t m_off = t.at("m_offset").get<std::uint64_t>();
    const std::uint64_t v_off = t.at("v_offset").get<std::uint64_t>();
    if (m_off != off + 8 * n || v_off != m_off + 8 * n || v_off + 8 * n > payload_bytes)
      throw ValidationError("checkpoint tensor " + name + ": directory disagrees with payload layout");
    std::vector<double> m(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      value.values[i] = detail::get_f64_le(payload.data() + off + 8 * i);
      m[i] = detail::get_f64_le(payload.data() + m_off + 8 * i);
      v[i] = detail::get_f64_le(payload.data() + v_off + 8 * i);
    }
    cp.store.add_with_state(name, std::move(value), std::move(m), std::move(v), t.at("step").get<std::int64_t>());
  }
  return cp;
}

}  // namespace reco
