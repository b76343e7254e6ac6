#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "wsm/core.hpp"

namespace wsm {

using Engine = std::mt19937_64;

/// Engine for path `index` of the family `record`. The stream depends only on
/// (seed, stream, index), so paths can be generated in any order or thread.
inline Engine path_engine(const SeedRecord& record, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(record.seed),
                    static_cast<std::uint32_t>(record.seed >> 32),
                    static_cast<std::uint32_t>(record.stream),
                    static_cast<std::uint32_t>(record.stream >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32),
                    0x57534du};
  return Engine(seq);
}

inline void fill_normals(Engine& engine, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& z : out) z = normal(engine);
}

inline double uniform01(Engine& engine) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine);
}

}  // namespace wsm
