#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "wsm/core.hpp"

namespace wsm {

/// N trajectories of a d-dimensional chain over steps 0..L. Storage is
/// step-major so that all states of one exercise date are contiguous.
class PathSet {
 public:
  PathSet() = default;
  PathSet(std::size_t paths, std::size_t steps, std::vector<double> x0,
          std::optional<double> step_size, SeedRecord seed)
      : paths_(paths),
        steps_(steps),
        dim_(x0.size()),
        x0_(std::move(x0)),
        step_size_(step_size),
        seed_(seed),
        values_((steps + 1) * paths * dim_) {
    for (std::size_t n = 0; n < paths_; ++n)
      for (std::size_t i = 0; i < dim_; ++i) at(n, 0)[i] = x0_[i];
  }

  std::size_t paths() const { return paths_; }
  /// Number of transitions L; states exist for l = 0..L.
  std::size_t steps() const { return steps_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> x0() const { return x0_; }
  std::optional<double> step_size() const { return step_size_; }
  const SeedRecord& seed_record() const { return seed_; }

  StateView step(std::size_t l) const {
    return {std::span<const double>(values_).subspan(l * paths_ * dim_, paths_ * dim_), paths_,
            dim_};
  }
  std::span<const double> at(std::size_t n, std::size_t l) const {
    return std::span<const double>(values_).subspan((l * paths_ + n) * dim_, dim_);
  }
  std::span<double> at(std::size_t n, std::size_t l) {
    return std::span<double>(values_).subspan((l * paths_ + n) * dim_, dim_);
  }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const PathSet&, const PathSet&) = default;

 private:
  std::size_t paths_ = 0;
  std::size_t steps_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> x0_;
  std::optional<double> step_size_;
  SeedRecord seed_;
  std::vector<double> values_;
};

}  // namespace wsm
