#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace rnnscope {

/// Full complex eigendecomposition of a real square matrix, ordered by
/// descending |lambda| with conjugate pairs adjacent (positive imaginary
/// part first). Left eigenvectors are the rows of the inverse of the right
/// eigenvector matrix, so L * R = I holds to machine precision and
/// sum_a r_a (l_a . v) reconstructs any v.
struct EigenSystem {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd right;  // columns r_a
  Eigen::MatrixXcd left;   // rows l_a
  double reconstruction_residual = 0.0;  // ||J - R diag(values) L|| / ||J||, Frobenius
  double eigenvector_condition = 0.0;    // condition number of R

  int size() const { return static_cast<int>(values.size()); }
  bool is_complex_mode(int a) const;
  /// Partner index of a complex pair; returns `a` itself for real modes.
  int pair_of(int a) const;
};

/// Throws std::runtime_error (with condition diagnostics) if the QR iteration
/// fails to converge. Warns via the returned condition number when the
/// eigenvector matrix is near-defective (caller checks > 1e8).
EigenSystem eig(const Eigen::MatrixXd& J);

/// Decay timescale in tokens: tau = -1 / ln|lambda|. Requires 0 < |lambda| < 1,
/// otherwise throws std::domain_error.
double eigen_timescale(std::complex<double> lambda);

/// Principal angle in degrees via the magnitude of the Hermitian inner
/// product: arccos(|v . u| / (|v| |u|)). Throws on zero vectors.
double subspace_angle_deg(const Eigen::VectorXcd& v, const Eigen::VectorXcd& u);
double subspace_angle_deg(const Eigen::VectorXd& v, const Eigen::VectorXcd& u);

/// h' = h - Re( sum_{a in set} r_a (l_a . (h - h_star)) ). Complex pairs must
/// be removed jointly (throws std::invalid_argument otherwise); the pairwise
/// sum is real, so the result is real.
Eigen::VectorXd remove_modes(const Eigen::VectorXd& h, const Eigen::VectorXd& h_star,
                             const EigenSystem& sys, const std::vector<int>& mode_indices);

/// Mode indices grouped so complex-conjugate pairs travel together.
std::vector<std::vector<int>> mode_groups(const EigenSystem& sys);

/// Groups ranked by |l_a . deflection| descending (pair projections summed).
std::vector<std::vector<int>> rank_mode_groups(const EigenSystem& sys,
                                               const Eigen::VectorXd& deflection);

}  // namespace rnnscope
