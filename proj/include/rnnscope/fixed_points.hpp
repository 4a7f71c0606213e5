#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "rnnscope/cells.hpp"
#include "rnnscope/linearization.hpp"

namespace rnnscope {

/// An approximate fixed point of h -> F(h, 0) with its local linear model.
struct FixedPoint {
  Eigen::VectorXd h;
  double residual_q = 0.0;  // 1/2 |h - F(h,0)|^2
  double speed = 0.0;       // |h - F(h,0)|
  double readout_value = 0.0;
  Linearization lin;  // expansion point (h, 0)
};

struct FixedPointConfig {
  double learning_rate = 1e-2;
  int max_iters = 5000;
  // Adam dithers at the learning-rate scale, so the rate decays exponentially
  // to lr_final over max_iters; a constant rate cannot reach speeds ~1e-6.
  double lr_final = 1e-7;
  double adam_beta1 = 0.9;
  // Short second-moment memory: with the default 0.999 the RMS denominator
  // remembers stale large gradients and stalls the descent three orders of
  // magnitude above the tolerance.
  double adam_beta2 = 0.9;
  double tol = 1e-6;        // strict speed tier, used for linearization claims
  double loose_tol = 1e-4;  // visualization-only tier, flagged separately
  double merge_radius = 1e-3;
  // Points whose readout falls outside this window are dropped before
  // dedup (the toy analyses examine the valence-relevant span).
  double readout_min = -std::numeric_limits<double>::infinity();
  double readout_max = std::numeric_limits<double>::infinity();
};

struct FixedPointSearchResult {
  std::vector<FixedPoint> points;        // speed < tol, deduplicated, readout-sorted
  std::vector<FixedPoint> loose_points;  // tol <= speed < loose_tol, same treatment
  int n_initial = 0;
  int n_converged = 0;  // reached the strict tier before dedup
  int n_dropped = 0;    // neither tier
};

/// States drawn uniformly (with replacement) from the hidden trajectories of
/// the given sequences; deterministic in `seed`.
std::vector<Eigen::VectorXd> sample_initial_states(
    const RnnParams& params, const std::vector<std::vector<int>>& sequences, int n,
    std::uint64_t seed);

/// Minimizes q(h) = 1/2 |h - F(h,0)|^2 from every initial state (batched Adam
/// with an exact gradient via the transposed recurrent Jacobian), keeps
/// points under the speed tolerances, deduplicates within the merge radius
/// and returns them sorted by readout value.
FixedPointSearchResult find_fixed_points(const RnnParams& params,
                                         const std::vector<Eigen::VectorXd>& inits,
                                         const FixedPointConfig& cfg);

struct LineAttractor {
  std::vector<FixedPoint> points;        // sorted ascending by readout
  std::vector<Eigen::VectorXd> tangents; // unit tangent per point
  double readout_min = 0.0;
  double readout_max = 0.0;
  Eigen::VectorXd principal_direction;   // top PC of the point cloud
  double pc1_variance_fraction = 0.0;
};

/// Requires at least 3 points. Tangents are normalized differences of
/// readout-neighbors; the top principal component of the cloud and its
/// variance fraction quantify how one-dimensional the manifold is.
LineAttractor assemble_line_attractor(std::vector<FixedPoint> points);

/// Euclidean nearest point; ties broken toward the lower index.
const FixedPoint& nearest_fixed_point(const LineAttractor& attractor,
                                      const Eigen::VectorXd& h);
std::size_t nearest_fixed_point_index(const LineAttractor& attractor,
                                      const Eigen::VectorXd& h);

/// Fixed-point report: h*, speed, readout and eigenvalue list per point.
void save_line_attractor(const std::filesystem::path& path, const LineAttractor& attractor);
LineAttractor load_line_attractor(const std::filesystem::path& path,
                                  const RnnParams& params);

}  // namespace rnnscope
