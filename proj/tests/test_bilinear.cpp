#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>

#include "rnnscope/bilinear.hpp"
#include "rnnscope/rng.hpp"

using namespace rnnscope;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

VectorXd random_vector(Rng& rng, int n, double scale = 1.0) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

// Exact rank-2 synthetic data straight from the model equation.
struct Synthetic {
  std::vector<JacobianSample> samples;
  MatrixXd base;
  VectorXd h_star;
  MatrixXd m;                    // N x 2
  std::vector<MatrixXd> coeffs;  // 2 matrices
};

Synthetic make_rank2(std::uint64_t seed, int n_samples) {
  Rng rng(seed);
  const int N = 10, D = 6;
  Synthetic s;
  s.base = random_matrix(rng, N, D);
  s.h_star = random_vector(rng, N);
  s.m = random_matrix(rng, N, 2);
  s.coeffs.push_back(random_matrix(rng, N, D));
  s.coeffs.push_back(random_matrix(rng, N, D));
  for (int i = 0; i < n_samples; ++i) {
    JacobianSample sample;
    // Deflections span far more than two dimensions.
    sample.h_mod = s.h_star + random_vector(rng, N);
    MatrixXd j = s.base;
    for (int p = 0; p < 2; ++p) {
      j += (sample.h_mod - s.h_star).dot(s.m.col(p)) * s.coeffs[static_cast<std::size_t>(p)];
    }
    sample.jacobian = j;
    s.samples.push_back(std::move(sample));
  }
  return s;
}

}  // namespace

TEST_CASE("identical samples need no bilinear terms") {
  Rng rng(1);
  const MatrixXd base = random_matrix(rng, 8, 5);
  const VectorXd h_star = random_vector(rng, 8);
  std::vector<JacobianSample> samples;
  for (int i = 0; i < 4; ++i) {
    samples.push_back({h_star + random_vector(rng, 8), base});
  }
  const BilinearFit fit = fit_bilinear(samples, base, h_star, 0);
  CHECK(fit.variance_explained == 1.0);
  const BilinearFit fit2 = fit_bilinear(samples, base, h_star, 2);
  CHECK(fit2.variance_explained == 1.0);
}

TEST_CASE("exact recovery of rank-2 synthetic data") {
  const Synthetic s = make_rank2(7, 12);
  const BilinearFit fit = fit_bilinear(s.samples, s.base, s.h_star, 2);
  CHECK(fit.variance_explained >= 1.0 - 1e-8);
  for (const auto& sample : s.samples) {
    const MatrixXd pred = predict_jacobian(fit.model, sample.h_mod);
    CHECK((pred - sample.jacobian).norm() < 1e-8 * (1.0 + sample.jacobian.norm()));
  }
}

TEST_CASE("variance explained is non-decreasing in P") {
  Rng rng(9);
  Synthetic s = make_rank2(11, 16);
  // Add noise so no rank is exact.
  for (auto& sample : s.samples) sample.jacobian += random_matrix(rng, 10, 6, 0.05);
  const BilinearFit fit = fit_bilinear(s.samples, s.base, s.h_star, 5);
  for (int p = 1; p < 5; ++p) {
    CHECK(fit.variance_explained_by_p[p] >= fit.variance_explained_by_p[p - 1] - 1e-12);
  }
  CHECK(fit.variance_explained == fit.variance_explained_by_p[4]);
  CHECK(fit.variance_explained_by_p[1] > 0.8);  // the rank-2 core dominates
}

TEST_CASE("fit is invariant under an orthogonal change of state basis") {
  const Synthetic s = make_rank2(13, 10);
  const BilinearFit fit = fit_bilinear(s.samples, s.base, s.h_star, 2);

  // Rotate states and Jacobian rows jointly.
  Rng rng(5);
  MatrixXd g = random_matrix(rng, 10, 10);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  const MatrixXd Q = qr.householderQ();
  std::vector<JacobianSample> rotated;
  for (const auto& sample : s.samples) {
    rotated.push_back({Q * sample.h_mod, Q * sample.jacobian});
  }
  const BilinearFit rfit = fit_bilinear(rotated, Q * s.base, Q * s.h_star, 2);
  CHECK(rfit.variance_explained == doctest::Approx(fit.variance_explained).epsilon(1e-9));
}

TEST_CASE("prediction is the base at the reference and linear in the deflection") {
  const Synthetic s = make_rank2(17, 8);
  const BilinearFit fit = fit_bilinear(s.samples, s.base, s.h_star, 2);
  CHECK((predict_jacobian(fit.model, s.h_star) - s.base).norm() < 1e-12);

  Rng rng(3);
  const VectorXd d = random_vector(rng, 10);
  const MatrixXd one = predict_jacobian(fit.model, s.h_star + d) - s.base;
  const MatrixXd two = predict_jacobian(fit.model, s.h_star + 2.0 * d) - s.base;
  CHECK((two - 2.0 * one).norm() < 1e-10);

  BilinearModel p0 = fit.model;
  p0.P = 0;
  p0.coefficients.clear();
  p0.components = MatrixXd::Zero(10, 0);
  CHECK((predict_jacobian(p0, s.h_star + d) - s.base).norm() == 0.0);
}

TEST_CASE("bilinear readout matches a hand-computed rank-1 chain") {
  Rng rng(23);
  const int N = 6, D = 4;
  BilinearModel model;
  model.base_jacobian = random_matrix(rng, N, D);
  model.h_star = random_vector(rng, N);
  model.P = 1;
  model.components = random_matrix(rng, N, 1);
  model.coefficients.push_back(random_matrix(rng, N, D));
  const VectorXd w = random_vector(rng, N);
  const double b = 0.4;
  const VectorXd h_mod = model.h_star + random_vector(rng, N);
  const int token = 2;

  double expect = b;
  for (int i = 0; i < N; ++i) expect += w[i] * model.base_jacobian(i, token);
  double proj = 0.0;
  for (int i = 0; i < N; ++i) proj += (h_mod[i] - model.h_star[i]) * model.components(i, 0);
  double wa = 0.0;
  for (int i = 0; i < N; ++i) wa += w[i] * model.coefficients[0](i, token);
  expect += proj * wa;

  CHECK(bilinear_readout(model, w, b, h_mod, token) ==
        doctest::Approx(expect).epsilon(1e-12));

  // The modifier term decays to zero monotonically in the projection.
  const double at_ref = bilinear_readout(model, w, b, model.h_star, token);
  double prev = std::abs(bilinear_readout(model, w, b, h_mod, token) - at_ref);
  for (double scale : {0.5, 0.25, 0.1, 0.0}) {
    const VectorXd h = model.h_star + scale * (h_mod - model.h_star);
    const double term = std::abs(bilinear_readout(model, w, b, h, token) - at_ref);
    CHECK(term <= prev + 1e-12);
    prev = term;
  }

  const VectorXd ww = modifier_word_weights(model, w, 0);
  CHECK(ww.size() == D);
  CHECK(ww[token] == doctest::Approx(wa).epsilon(1e-12));
}

TEST_CASE("degenerate inputs are rejected") {
  const Synthetic s = make_rank2(29, 3);
  CHECK_THROWS_AS(fit_bilinear(s.samples, s.base, s.h_star, 4), std::invalid_argument);

  // Identical deflections have rank 1.
  std::vector<JacobianSample> flat;
  for (int i = 0; i < 5; ++i) flat.push_back(s.samples[0]);
  CHECK_THROWS_AS(fit_bilinear(flat, s.base, s.h_star, 2), std::invalid_argument);
}

TEST_CASE("bilinear model round-trips through its file format") {
  const Synthetic s = make_rank2(31, 9);
  const BilinearFit fit = fit_bilinear(s.samples, s.base, s.h_star, 2);
  const auto dir = std::filesystem::temp_directory_path() / "rnnscope_bilinear_test";
  std::filesystem::create_directories(dir);
  save_bilinear(dir / "model.json", fit.model);
  const BilinearModel back = load_bilinear(dir / "model.json");
  CHECK(back.P == fit.model.P);
  CHECK((back.base_jacobian - fit.model.base_jacobian).norm() == 0.0);
  CHECK((back.h_star - fit.model.h_star).norm() == 0.0);
  CHECK((back.components - fit.model.components).norm() == 0.0);
  for (int p = 0; p < 2; ++p) {
    CHECK((back.coefficients[p] - fit.model.coefficients[p]).norm() == 0.0);
  }
  std::filesystem::remove_all(dir);
}
