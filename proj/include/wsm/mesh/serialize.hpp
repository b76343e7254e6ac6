#pragma once

// Binary mesh artifact, little-endian:
//
//   char[8]  magic "WSMMESH\0"
//   u32      format version (1)
//   u64      N, u64 L
//   f64      truncation radius (inf = none)
//   u8       has_cap, f64 cap
//   f64      u0, f64 max row-sum error
//   f64[N * (L+1)]  values,        row-major (path n, step l)
//   f64[N * L]      continuation,  row-major (path n, step l)
//   f64[N * L]      log D,         row-major (path n, step l)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "wsm/core.hpp"
#include "wsm/mesh/backward.hpp"

namespace wsm {

inline constexpr std::array<char, 8> kMeshMagic{'W', 'S', 'M', 'M', 'E', 'S', 'H', '\0'};
inline constexpr std::uint32_t kMeshFormatVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "mesh artifacts assume little-endian hosts");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("mesh artifact is truncated");
  return v;
}

}  // namespace detail

inline void write_mesh(std::ostream& os, const MeshValue& mesh) {
  using detail::put;
  os.write(kMeshMagic.data(), kMeshMagic.size());
  put<std::uint32_t>(os, kMeshFormatVersion);
  const std::size_t n = mesh.paths(), steps = mesh.steps();
  put<std::uint64_t>(os, n);
  put<std::uint64_t>(os, steps);
  put<double>(os, mesh.truncation().radius);
  put<std::uint8_t>(os, mesh.cap() ? 1 : 0);
  put<double>(os, mesh.cap().value_or(0.0));
  put<double>(os, mesh.u0());
  put<double>(os, mesh.max_row_sum_error());
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t l = 0; l <= steps; ++l) put<double>(os, mesh.value(p, l));
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t l = 0; l < steps; ++l) put<double>(os, mesh.continuation(p, l));
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t l = 0; l < steps; ++l) put<double>(os, mesh.log_denominators_at(l)[p]);
  if (!os) throw Error("failed to write mesh artifact");
}

inline MeshValue read_mesh(std::istream& is) {
  using detail::get;
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMeshMagic) throw Error("not a mesh artifact (bad magic)");
  const auto version = get<std::uint32_t>(is);
  if (version != kMeshFormatVersion)
    throw Error("unsupported mesh artifact version " + std::to_string(version));
  const auto n = static_cast<std::size_t>(get<std::uint64_t>(is));
  const auto steps = static_cast<std::size_t>(get<std::uint64_t>(is));
  const double radius = get<double>(is);
  const bool has_cap = get<std::uint8_t>(is) != 0;
  const double cap = get<double>(is);
  const double u0 = get<double>(is);
  const double row_err = get<double>(is);
  TruncationConfig trunc;
  if (radius != kInf) trunc = TruncationConfig(radius);
  MeshValue mesh(n, steps, trunc, has_cap ? std::optional<double>(cap) : std::nullopt);
  mesh.set_u0(u0);
  mesh.note_row_sum_error(row_err);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t l = 0; l <= steps; ++l) mesh.mutable_values_at(l)[p] = get<double>(is);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t l = 0; l < steps; ++l) mesh.mutable_continuation_at(l)[p] = get<double>(is);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t l = 0; l < steps; ++l) mesh.mutable_log_denominators_at(l)[p] = get<double>(is);
  return mesh;
}

inline void save_mesh(const std::string& path, const MeshValue& mesh) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_mesh(os, mesh);
}

inline MeshValue load_mesh(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_mesh(is);
}

}  // namespace wsm
