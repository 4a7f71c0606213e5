#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "rnnscope/cells.hpp"
#include "rnnscope/context.hpp"
#include "rnnscope/fixed_points.hpp"
#include "rnnscope/rng.hpp"
#include "rnnscope/toy_language.hpp"
#include "rnnscope/training.hpp"

using namespace rnnscope;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// All-zero GRU with pad as the null token: the origin is an exact fixed point
// of the zero-input map, and every zero-input step halves the state.
RnnParams contraction_gru(int n, int d, int null_token) {
  RnnParams p = init_params(CellKind::GRU, n, d, 0, null_token);
  VectorXd flat = VectorXd::Zero(param_count(p));
  unflatten_params(flat, p);
  p.null_token = null_token;
  p.readout_w[0] = 1.0;
  return p;
}

RnnParams random_gru(int n, int d, std::uint64_t seed, int null_token = -1) {
  RnnParams p = init_params(CellKind::GRU, n, d, seed, null_token);
  Rng rng(seed + 3);
  VectorXd flat = flatten_params(p);
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = rng.uniform(-0.7, 0.7);
  unflatten_params(flat, p);
  if (null_token >= 0) {
    for (auto& u : p.U) u.col(null_token).setZero();
  }
  return p;
}

LineAttractor synthetic_attractor(int dim, const std::vector<double>& readouts) {
  std::vector<FixedPoint> pts;
  for (double r : readouts) {
    FixedPoint fp;
    fp.h = VectorXd::Zero(dim);
    fp.h[0] = r;
    fp.readout_value = r;
    pts.push_back(fp);
  }
  return assemble_line_attractor(std::move(pts));
}

}  // namespace

TEST_CASE("delta input jacobian vanishes when the word leaves the state unchanged") {
  const RnnParams p = contraction_gru(6, 8, 7);
  const VectorXd h_star = VectorXd::Zero(6);  // exact fixed point of h -> 0.5h
  const MatrixXd delta = delta_input_jacobian(p, 7, h_star);  // pad: F(h*,pad)=h*
  CHECK(delta.norm() == 0.0);
}

TEST_CASE("rank_modifiers scores every word and respects the threshold") {
  const RnnParams p = random_gru(6, 8, 11);
  const VectorXd h_star = VectorXd::Constant(6, 0.1);
  const ModifierRanking ranking = rank_modifiers(p, h_star, 1e18);
  CHECK(ranking.selected.empty());
  REQUIRE(ranking.all.size() == 8);
  for (std::size_t i = 1; i < ranking.all.size(); ++i) {
    CHECK(ranking.all[i - 1].delta_jinp_norm >= ranking.all[i].delta_jinp_norm);
  }
  // A tiny threshold selects everything with nonzero score, in rank order.
  const ModifierRanking low = rank_modifiers(p, h_star, 1e-12);
  CHECK(low.selected.size() == 8);
  CHECK_THROWS(rank_modifiers(p, h_star, 0.0));
}

TEST_CASE("barcode at the reference point is identically zero") {
  const RnnParams p = random_gru(5, 8, 13);
  const VectorXd h_star = VectorXd::Constant(5, -0.2);
  const std::vector<int> probes{4, 3, 1, 0};
  const Barcode bc = barcode(p, h_star, h_star, probes);
  REQUIRE(bc.values.size() == 4);
  CHECK(bc.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(bc.probe_ids == probes);
  CHECK_THROWS(barcode(p, h_star, h_star, std::vector<int>{99}));
}

TEST_CASE("select_probe_words returns descending positive then ascending negative block") {
  VectorXd weights(8);
  // Mirror the toy valence layout: awful -2, bad -1, the 0, good 1, awesome 2.
  weights << -2, -1, 0, 1, 2, 0.1, -0.1, 0;
  const auto probes = select_probe_words(weights, 2);
  CHECK(probes == std::vector<int>{4, 3, 0, 1});
  CHECK(select_probe_words(weights, 0).empty());
  CHECK_THROWS(select_probe_words(weights, 5));
}

TEST_CASE("fit_modifier_subspace orthogonalizes against the attractor direction") {
  Rng rng(5);
  const int N = 12;
  VectorXd attractor_dir = VectorXd::Zero(N);
  attractor_dir[0] = 2.0;  // non-unit on purpose
  std::vector<VectorXd> deflections;
  for (int i = 0; i < 6; ++i) {
    VectorXd d = VectorXd::Zero(N);
    d[0] = rng.uniform(-1, 1);       // along-attractor content to be removed
    d[1] = rng.uniform(0.5, 1.5);    // structured content
    d[2] = rng.uniform(-1.5, -0.5);
    d[3 + i % 3] = rng.uniform(-0.2, 0.2);
    deflections.push_back(d);
  }
  const ModifierSubspace sub = fit_modifier_subspace(deflections, attractor_dir, 2);
  CHECK(sub.P == 2);
  for (int a = 0; a < 2; ++a) {
    CHECK(std::abs(sub.components.col(a).norm() - 1.0) < 1e-10);
    CHECK(std::abs(sub.components.col(a).dot(attractor_dir.normalized())) < 1e-8);
    for (int b = a + 1; b < 2; ++b) {
      CHECK(std::abs(sub.components.col(a).dot(sub.components.col(b))) < 1e-10);
    }
  }
  CHECK(sub.variance_explained[0] >= sub.variance_explained[1]);
  CHECK(sub.variance_explained.sum() <= 1.0 + 1e-12);

  // Permutation invariance of the fit.
  std::vector<VectorXd> shuffled{deflections[3], deflections[0], deflections[5],
                                 deflections[1], deflections[4], deflections[2]};
  const ModifierSubspace sub2 = fit_modifier_subspace(shuffled, attractor_dir, 2);
  CHECK((sub2.components - sub.components).cwiseAbs().maxCoeff() < 1e-9);

  // Deflections parallel to the attractor leave nothing.
  std::vector<VectorXd> parallel{attractor_dir, 2.0 * attractor_dir, -attractor_dir};
  CHECK_THROWS_AS(fit_modifier_subspace(parallel, attractor_dir, 1), std::domain_error);
  CHECK_THROWS_AS(fit_modifier_subspace(deflections, attractor_dir, 7),
                  std::invalid_argument);
}

TEST_CASE("modifier deflection samples follow the pad relaxation") {
  const RnnParams p = contraction_gru(6, 8, 7);
  // Give word 3 a real input column so it deflects the state.
  RnnParams q = p;
  q.U[2].col(3).setConstant(2.0);  // candidate pulls the state off the origin
  const VectorXd h_star = VectorXd::Zero(6);
  const auto samples = modifier_deflection_samples(q, {3}, h_star, 7, 6, 1e-3);
  REQUIRE(samples.size() >= 3);
  CHECK(samples.front().step == 0);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    CHECK(samples[i].step == samples[i - 1].step + 1);
    // The contraction halves the deflection per pad step.
    CHECK(samples[i].deflection.norm() ==
          doctest::Approx(0.5 * samples[i - 1].deflection.norm()).epsilon(1e-9));
  }
}

TEST_CASE("impulse response on the contraction decays at the analytic rate") {
  RnnParams p = contraction_gru(6, 8, 7);
  p.U[2].col(4).setConstant(-1.5);  // word 4 deflects via the candidate gate
  const LineAttractor att = synthetic_attractor(6, {-40.0, 0.0, 40.0});
  const ImpulseResponse resp = impulse_response(p, att, 4, 12, 7, nullptr);
  REQUIRE(resp.distances.size() == 13);
  REQUIRE(resp.distance_tau.has_value());
  // h -> 0.5 h: tau = -1/ln(0.5).
  CHECK(*resp.distance_tau == doctest::Approx(-1.0 / std::log(0.5)).epsilon(1e-3));

  // A pad impulse produces no deflection and no fit.
  const ImpulseResponse none = impulse_response(p, att, 7, 8, 7, nullptr);
  CHECK(none.distances.front() == 0.0);
  CHECK(!none.distance_tau.has_value());
}

TEST_CASE("projecting out a zero-dimensional subspace changes nothing") {
  const RnnParams p = random_gru(6, 8, 21, 7);
  const ToyVocab vocab = build_toy_vocab();
  const LabeledCorpus corpus = generate_classification_corpus(vocab, 5, 64, 10);
  const LineAttractor att = synthetic_attractor(6, {-1.0, 0.0, 1.0});
  const MatrixXd empty_basis = MatrixXd::Zero(6, 0);
  const double base = evaluate_accuracy(p, corpus);
  CHECK(project_out_subspace_eval(p, att, corpus, empty_basis) == base);
}

TEST_CASE("per-step removal is idempotent") {
  Rng rng(3);
  const MatrixXd basis = random_orthonormal_basis(10, 3, 17);
  VectorXd h(10), p0(10);
  for (int i = 0; i < 10; ++i) h[i] = rng.uniform(-1, 1);
  for (int i = 0; i < 10; ++i) p0[i] = rng.uniform(-1, 1);
  const VectorXd once = h - basis * (basis.transpose() * (h - p0));
  const VectorXd twice = once - basis * (basis.transpose() * (once - p0));
  CHECK((twice - once).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("random orthonormal basis is orthonormal and deterministic") {
  const MatrixXd b1 = random_orthonormal_basis(20, 3, 5);
  const MatrixXd b2 = random_orthonormal_basis(20, 3, 5);
  CHECK((b1 - b2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b1.transpose() * b1 - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(random_orthonormal_basis(20, 0, 5).cols() == 0);
  const MatrixXd b3 = random_orthonormal_basis(20, 3, 6);
  CHECK((b1 - b3).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("eod_pad_eval with zero pads is exactly zero") {
  const RnnParams p = random_gru(6, 8, 31, 7);
  const ToyVocab vocab = build_toy_vocab();
  const LabeledCorpus corpus = generate_classification_corpus(vocab, 6, 48, 10);
  CHECK(eod_pad_eval(p, corpus, 0, vocab.pad_id()) == 0.0);
  const RnnParams c = contraction_gru(6, 8, 7);
  const double delta = eod_pad_eval(c, corpus, 50, vocab.pad_id());
  CHECK(std::isfinite(delta));
}
