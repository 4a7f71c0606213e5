#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

namespace rnnscope {

/// Context-dependent input Jacobian modeled as a base matrix plus P bilinear
/// terms:  J(h) = J_base + sum_p ((h - h_star) . m_p) A_p.
struct BilinearModel {
  Eigen::MatrixXd base_jacobian;  // state_dim x D
  Eigen::VectorXd h_star;
  Eigen::MatrixXd components;                 // state_dim x P columns m_p
  std::vector<Eigen::MatrixXd> coefficients;  // P matrices A_p, state_dim x D
  int P = 0;
};

struct JacobianSample {
  Eigen::VectorXd h_mod;
  Eigen::MatrixXd jacobian;  // J_inp at (h_mod, 0)
};

struct BilinearFit {
  BilinearModel model;
  double variance_explained = 0.0;          // at rank P
  Eigen::VectorXd variance_explained_by_p;  // index q: fraction captured at rank q+1
};

/// Closed-form least squares via reduced-rank regression: ordinary least
/// squares of the vectorized Jacobian deviations on the deflections, followed
/// by a rank-P truncated SVD of the fitted values. Deflections are not
/// whitened; variance explained is the captured fraction of the squared
/// Frobenius deviation. Throws when P exceeds the sample count or the
/// deflection rank.
BilinearFit fit_bilinear(const std::vector<JacobianSample>& samples,
                         const Eigen::MatrixXd& base_jacobian,
                         const Eigen::VectorXd& h_star, int P);

Eigen::MatrixXd predict_jacobian(const BilinearModel& model, const Eigen::VectorXd& h_mod);

/// Readout-level prediction for a one-hot probe:
///   w . J(h_mod) . e_token + b.
double bilinear_readout(const BilinearModel& model, const Eigen::VectorXd& w_state,
                        double bias, const Eigen::VectorXd& h_mod, int token);

/// Per-word modifier weights contributed by component p: w^T A_p.
Eigen::VectorXd modifier_word_weights(const BilinearModel& model,
                                      const Eigen::VectorXd& w_state, int p);

void save_bilinear(const std::filesystem::path& path, const BilinearModel& model);
BilinearModel load_bilinear(const std::filesystem::path& path);

}  // namespace rnnscope
