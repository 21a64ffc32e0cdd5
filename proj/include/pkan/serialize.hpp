#pragma once

// Binary model file, all integers and floats little-endian:
//
//   "PKAN"  u32 version
//   u8 family  u8 likelihood  u64 context  u64 horizon
//   u64 n_hidden  u64 width[n_hidden]
//   i32 spline_order  u64 num_basis  f64 grid_min  f64 grid_max  u64 seed
//   f64 standardizer_mean  f64 standardizer_std
//   u64 n_params  f64 params[n_params]
//   u32 crc32 of every preceding byte

#include <bit>
#include <boost/crc.hpp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "pkan/error.hpp"
#include "pkan/nets.hpp"

namespace pkan {

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    static_assert(sizeof(T) == sizeof(U));
    U bits;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    if (pos_ + sizeof(U) > bytes_.size()) throw FormatError("model file truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

}  // namespace detail

/// CRC-32 of the flattened parameter vector's little-endian bytes.
inline std::uint32_t parameter_checksum(const ModelState& model) {
  detail::ByteWriter w;
  for (double v : model.flatten()) w.put(v);
  return detail::crc32(w.bytes());
}

inline std::vector<std::uint8_t> serialize(const ModelState& model) {
  const ModelConfig& c = model.config;
  detail::ByteWriter w;
  for (char ch : std::string("PKAN")) w.put(static_cast<std::uint8_t>(ch));
  w.put(kModelFormatVersion);
  w.put(static_cast<std::uint8_t>(c.family));
  w.put(static_cast<std::uint8_t>(c.likelihood));
  w.put(static_cast<std::uint64_t>(c.context));
  w.put(static_cast<std::uint64_t>(c.horizon));
  w.put(static_cast<std::uint64_t>(c.hidden_sizes.size()));
  for (auto h : c.hidden_sizes) w.put(static_cast<std::uint64_t>(h));
  w.put(static_cast<std::int32_t>(c.spline_order));
  w.put(static_cast<std::uint64_t>(c.num_basis));
  w.put(c.grid_min);
  w.put(c.grid_max);
  w.put(c.seed);
  w.put(model.standardizer.mean);
  w.put(model.standardizer.std);
  const auto flat = model.flatten();
  w.put(static_cast<std::uint64_t>(flat.size()));
  for (double v : flat) w.put(v);
  w.put(detail::crc32(w.bytes()));
  return std::move(w.bytes());
}

inline ModelState deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "PKAN", 4) != 0) throw FormatError("missing PKAN magic");
  if (bytes.size() < 12) throw FormatError("model file truncated");
  const auto body = bytes.first(bytes.size() - 4);
  detail::ByteReader tail(bytes.subspan(bytes.size() - 4));
  if (tail.get<std::uint32_t>() != detail::crc32(body)) throw FormatError("model checksum mismatch");

  detail::ByteReader r(body);
  for (int i = 0; i < 4; ++i) r.get<std::uint8_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) throw FormatError("unsupported model format version " + std::to_string(version));
  ModelConfig c;
  const auto family = r.get<std::uint8_t>();
  const auto likelihood = r.get<std::uint8_t>();
  if (family > 3 || likelihood > 2) throw FormatError("invalid family or likelihood tag");
  c.family = static_cast<Family>(family);
  c.likelihood = static_cast<Likelihood>(likelihood);
  c.context = r.get<std::uint64_t>();
  c.horizon = r.get<std::uint64_t>();
  const auto n_hidden = r.get<std::uint64_t>();
  if (n_hidden > 1024) throw FormatError("implausible hidden layer count");
  c.hidden_sizes.clear();
  for (std::uint64_t i = 0; i < n_hidden; ++i) c.hidden_sizes.push_back(r.get<std::uint64_t>());
  c.spline_order = r.get<std::int32_t>();
  c.num_basis = r.get<std::uint64_t>();
  c.grid_min = r.get<double>();
  c.grid_max = r.get<double>();
  c.seed = r.get<std::uint64_t>();
  ModelState model;
  try {
    model = init_model(c);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("invalid model configuration: ") + e.what());
  }
  model.standardizer.mean = r.get<double>();
  model.standardizer.std = r.get<double>();
  const auto n_params = r.get<std::uint64_t>();
  if (n_params != count_parameters(c)) throw FormatError("parameter count does not match architecture");
  std::vector<double> flat(n_params);
  for (auto& v : flat) v = r.get<double>();
  if (r.position() != body.size()) throw FormatError("trailing bytes in model file");
  model.assign(flat);
  return model;
}

inline void save_model(const ModelState& model, const std::filesystem::path& path) {
  const auto bytes = serialize(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline ModelState load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace pkan
