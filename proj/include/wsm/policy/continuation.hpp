#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wsm/core.hpp"
#include "wsm/mesh/backward.hpp"
#include "wsm/mesh/weights.hpp"
#include "wsm/model/concepts.hpp"
#include "wsm/model/path_set.hpp"
#include "wsm/policy/lower_bound.hpp"
#include "wsm/policy/neighbours.hpp"

namespace wsm {

enum class ContinuationVariant { Direct, Knn };

/// Continuation values (l, x) -> E[U_{l+1} | Z_l = x] estimated from a built
/// mesh. Holds references: the path set, mesh and model must outlive it.
///
/// Direct weights the next-step mesh values by p(Z_{l+1}^j | x) / D_j with
/// the training denominators (normalised like the mesh rows). Knn averages
/// the weight rows of the k training points nearest to x, which for the
/// reduction against U_{l+1} is the average of their stored continuations.
template <TransitionModel Model>
class ContinuationEstimator {
 public:
  static ContinuationEstimator direct(const PathSet& paths, const MeshValue& mesh, const Model& model) {
    return ContinuationEstimator(paths, mesh, model, ContinuationVariant::Direct, 0);
  }
  static ContinuationEstimator knn(const PathSet& paths, const MeshValue& mesh, const Model& model,
                                   std::size_t k) {
    if (k == 0 || k > paths.paths())
      throw ConfigError("k-NN continuation: need 1 <= k <= N (k = " + std::to_string(k) +
                        ", N = " + std::to_string(paths.paths()) + ")");
    return ContinuationEstimator(paths, mesh, model, ContinuationVariant::Knn, k);
  }

  ContinuationVariant variant() const { return variant_; }
  std::size_t neighbours() const { return k_; }
  std::size_t steps() const { return paths_->steps(); }
  const SeedRecord& training_seed() const { return paths_->seed_record(); }
  std::span<const double> x0() const { return paths_->x0(); }

  double operator()(std::size_t l, std::span<const double> x) const {
    return variant_ == ContinuationVariant::Direct ? direct_value(l, x) : knn_value(l, x);
  }

  double direct_value(std::size_t l, std::span<const double> x) const {
    check(l, x);
    const auto sources = model_->prepare_sources(StateView(x, 1, x.size()));
    Scratch lambda, scratch;
    const RowReduction r = detail::mesh_row(*model_, targets_[l], sources, 0, mesh_->log_denominators_at(l),
                                            mesh_->values_at(l + 1), lambda, scratch);
    if (r.weight_sum == 0.0)
      throw DegenerateDenominatorError("direct continuation: no training successor is reachable from x at step " +
                                       std::to_string(l));
    return r.continuation;
  }

  double knn_value(std::size_t l, std::span<const double> x) const {
    check(l, x);
    if (index_.empty()) throw ConfigError("estimator was not built for k-NN queries");
    const auto idx = index_[l].query(x, k_);
    const auto cont = mesh_->continuation_at(l);
    double sum = 0.0;
    for (std::size_t i : idx) sum += cont[i];
    return sum / static_cast<double>(idx.size());
  }

 private:
  ContinuationEstimator(const PathSet& paths, const MeshValue& mesh, const Model& model,
                        ContinuationVariant variant, std::size_t k)
      : paths_(&paths), mesh_(&mesh), model_(&model), variant_(variant), k_(k) {
    if (mesh.paths() != paths.paths() || mesh.steps() != paths.steps())
      throw ConfigError("continuation estimator: mesh does not match the training paths");
    if (paths.dim() != model.dim()) throw ConfigError("continuation estimator: model dimension mismatch");
    if (variant == ContinuationVariant::Direct) {
      targets_.reserve(paths.steps());
      for (std::size_t l = 0; l < paths.steps(); ++l) targets_.push_back(model.prepare_targets(paths.step(l + 1)));
    } else {
      index_.reserve(paths.steps());
      for (std::size_t l = 0; l < paths.steps(); ++l) index_.emplace_back(paths.step(l));
    }
  }

  void check(std::size_t l, std::span<const double> x) const {
    if (l >= paths_->steps()) throw ConfigError("continuation: step must satisfy 0 <= l < L");
    if (x.size() != paths_->dim()) throw ConfigError("continuation: x has wrong dimension");
    if (!all_finite(x)) throw DomainError("continuation: x must be finite");
  }

  const PathSet* paths_;
  const MeshValue* mesh_;
  const Model* model_;
  ContinuationVariant variant_;
  std::size_t k_;
  std::vector<typename Model::Targets> targets_;
  std::vector<NearestNeighbours> index_;
};

/// Lower bound of the mesh-induced policy on fresh paths from `test_seed`.
template <TransitionModel Model>
LowerBoundEstimate evaluate_lower_bound(const ContinuationEstimator<Model>& est, const RewardFunction& reward,
                                        const Model& model, std::size_t n_test,
                                        const SeedRecord& test_seed) {
  if (test_seed == est.training_seed())
    throw ContaminationError("test seed equals the training seed; lower bounds need independent paths");
  return evaluate_policy(est, reward, model, est.x0(), est.steps(), n_test, test_seed);
}

}  // namespace wsm
