#pragma once

// Binary field dumps. Layout, all little-endian:
//   8 bytes  magic "LICHFLD1"
//   uint64   dim
//   uint64   resolutions[dim]
//   float64  periods[dim]
//   float64  values[prod resolutions], row-major (last axis fastest)

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/torus_grid.hpp"

namespace lich::harness {

class IoError : public Error {
 public:
  using Error::Error;
};

inline constexpr char kFieldMagic[8] = {'L', 'I', 'C', 'H', 'F', 'L', 'D', '1'};

namespace detail {

template <class T>
void put_le(std::string& buf, T value) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, 8);
  return value;
}

}  // namespace detail

inline std::string encode_field(const ScalarField& u) {
  const TorusGrid& g = *u.grid();
  std::string buf(kFieldMagic, 8);
  buf.reserve(8 + 8 * (1 + 2 * g.dim() + g.size()));
  detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(g.dim()));
  for (int r : g.resolutions()) detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(r));
  for (double l : g.periods()) detail::put_le<double>(buf, l);
  for (double v : u.values()) detail::put_le<double>(buf, v);
  return buf;
}

inline ScalarField decode_field(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(p, kFieldMagic, 8) != 0) throw IoError("field dump: bad magic");
  const auto dim = detail::get_le<std::uint64_t>(p + 8);
  if (dim < 3 || dim > 5) throw IoError("field dump: bad dimension");
  std::size_t off = 16;
  if (bytes.size() < off + 16 * dim) throw IoError("field dump: truncated header");
  std::vector<int> res(dim);
  std::vector<double> periods(dim);
  std::size_t count = 1;
  for (std::size_t i = 0; i < dim; ++i, off += 8) {
    const auto r = detail::get_le<std::uint64_t>(p + off);
    if (r == 0 || r > (1u << 20)) throw IoError("field dump: bad resolution");
    res[i] = static_cast<int>(r);
    count *= r;
  }
  for (std::size_t i = 0; i < dim; ++i, off += 8) periods[i] = detail::get_le<double>(p + off);
  if (bytes.size() != off + 8 * count) throw IoError("field dump: payload size mismatch");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i, off += 8) values[i] = detail::get_le<double>(p + off);
  return ScalarField(build_grid(static_cast<int>(dim), res, periods), std::move(values));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

inline ScalarField read_field(const std::filesystem::path& path) { return decode_field(read_file(path)); }

/// Point coordinates and value per row; intended for small grids.
inline std::string field_csv(const ScalarField& u) {
  const TorusGrid& g = *u.grid();
  std::string out;
  for (int d = 0; d < g.dim(); ++d) out += "x" + std::to_string(d) + ",";
  out += "u\n";
  char buf[32];
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (double x : g.point(i)) {
      std::snprintf(buf, sizeof buf, "%.17g,", x);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", u[i]);
    out += buf;
  }
  return out;
}

}  // namespace lich::harness
