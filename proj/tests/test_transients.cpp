#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "rnnscope/cells.hpp"
#include "rnnscope/fixed_points.hpp"
#include "rnnscope/linearization.hpp"
#include "rnnscope/rng.hpp"
#include "rnnscope/transients.hpp"

using namespace rnnscope;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Vanilla cell with zero bias: the origin is an exact fixed point and the
// recurrent Jacobian there is exactly W, so a planted eigensystem carries
// over. Inputs are scaled small enough that tanh stays linear.
struct PlantedSystem {
  RnnParams params;
  FixedPoint fp;
};

PlantedSystem make_planted() {
  const int N = 6, D = 4;
  // Eigenvalues: one integration-like mode, one visible transient (tau ~ 6.2
  // tokens at 0.85), the rest fast and tiny.
  VectorXd lambdas(N);
  lambdas << 0.999, 0.85, 0.3, 0.2, 0.1, 0.05;
  Rng rng(5);
  MatrixXd R(N, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) R(i, j) = rng.uniform(-1, 1) + (i == j ? 2.0 : 0.0);
  const MatrixXd W = R * lambdas.asDiagonal() * R.inverse();

  RnnParams p = init_params(CellKind::Vanilla, N, D, 0, /*null_token=*/0);
  p.W[0] = W;
  p.bias[0].setZero();
  p.U[0].setZero();
  // Probe word 1 excites the integration mode and the transient mode.
  p.U[0].col(1) = 0.01 * (R.col(0) + 2.0 * R.col(1));
  // Probe word 2 excites only the integration mode.
  p.U[0].col(2) = 0.01 * R.col(0);
  // Readout sees both modes.
  p.readout_w = (R.inverse().row(0) + R.inverse().row(1)).transpose();
  p.readout_b = 0.0;
  p.h0.setZero();

  PlantedSystem sys;
  sys.fp.h = VectorXd::Zero(N);
  sys.fp.residual_q = 0.0;
  sys.fp.speed = 0.0;
  sys.fp.readout_value = 0.0;
  sys.fp.lin = linearize_at_zero_input(p, sys.fp.h);
  sys.params = std::move(p);
  return sys;
}

}  // namespace

TEST_CASE("planted transient mode is identified, scored and removable") {
  const PlantedSystem sys = make_planted();
  TransientConfig cfg;
  cfg.n_steps = 80;
  cfg.n_transient_modes = 1;
  cfg.min_timescale = 2.0;
  cfg.max_timescale = 50.0;
  const TransientAnalysis out =
      eod_transient_analysis(sys.params, sys.fp, {1, 2}, /*pad_token=*/0, cfg);

  // The identified group must be the planted 0.85 mode.
  REQUIRE(out.identified_groups.size() == 1);
  const EigenSystem es = eig(sys.fp.lin.J_rec);
  const int idx = out.identified_groups[0][0];
  CHECK(std::abs(es.values[idx]) == doctest::Approx(0.85).epsilon(1e-6));

  // Word 1 rides the transient: initially large readout, decaying toward the
  // integration-mode steady state => suppression ratio < 1.
  const auto& word1 = out.responses[0];
  CHECK(word1.initial > word1.steady);
  CHECK(word1.suppression_ratio < 1.0);
  CHECK(word1.suppression_ratio > 0.0);
  // Removing the transient mode flattens the response: the ratio moves
  // toward 1.
  CHECK(std::abs(word1.suppression_ratio_removed - 1.0) <
        std::abs(word1.suppression_ratio - 1.0));

  // Word 2 has no transient content: its response is already flat.
  const auto& word2 = out.responses[1];
  CHECK(word2.suppression_ratio == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("modes invisible to the readout have zero instantaneous effect") {
  PlantedSystem sys = make_planted();
  const EigenSystem es = eig(sys.fp.lin.J_rec);
  // Readout along left eigenvector 0 only: every other mode is invisible.
  sys.params.readout_w = es.left.row(0).real().transpose();
  sys.fp.lin = linearize_at_zero_input(sys.params, sys.fp.h);

  TransientConfig cfg;
  cfg.n_steps = 10;
  const TransientAnalysis out =
      eod_transient_analysis(sys.params, sys.fp, {1}, /*pad_token=*/0, cfg);
  int zero_effect = 0;
  for (const auto& mode : out.modes) {
    const double mag = std::abs(es.values[mode.group[0]]);
    if (std::abs(mag - std::abs(es.values[0])) < 1e-9) continue;  // the visible one
    CHECK(mode.readout_effect < 1e-12);
    zero_effect++;
  }
  CHECK(zero_effect >= 4);
}

TEST_CASE("probe validation") {
  const PlantedSystem sys = make_planted();
  TransientConfig cfg;
  CHECK_THROWS(eod_transient_analysis(sys.params, sys.fp, {}, 0, cfg));
  CHECK_THROWS(eod_transient_analysis(sys.params, sys.fp, {99}, 0, cfg));
}
