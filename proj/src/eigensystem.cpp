#include "rnnscope/eigensystem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rnnscope {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

bool EigenSystem::is_complex_mode(int a) const {
  return std::abs(values[a].imag()) > 1e-12 * (1.0 + std::abs(values[a]));
}

int EigenSystem::pair_of(int a) const {
  if (!is_complex_mode(a)) return a;
  const auto partner_matches = [&](int b) {
    if (b < 0 || b >= size()) return false;
    const std::complex<double> conj_a = std::conj(values[a]);
    return std::abs(values[b] - conj_a) <= 1e-9 * (1.0 + std::abs(values[a]));
  };
  if (values[a].imag() > 0.0 && partner_matches(a + 1)) return a + 1;
  if (values[a].imag() < 0.0 && partner_matches(a - 1)) return a - 1;
  throw std::logic_error("EigenSystem: complex mode without adjacent conjugate partner");
}

EigenSystem eig(const MatrixXd& J) {
  if (J.rows() != J.cols()) throw std::invalid_argument("eig: matrix must be square");
  if (!J.allFinite()) throw std::invalid_argument("eig: non-finite entries");
  Eigen::EigenSolver<MatrixXd> solver(J, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("eig: QR iteration failed to converge (matrix 1-norm " +
                             std::to_string(J.cwiseAbs().colwise().sum().maxCoeff()) + ")");
  }
  const VectorXcd raw_values = solver.eigenvalues();
  const MatrixXcd raw_vectors = solver.eigenvectors();

  // Deterministic order: |lambda| desc, then real desc, then imag desc. Ties
  // from conjugate pairs land adjacent with the +imag member first.
  std::vector<int> order(static_cast<std::size_t>(raw_values.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = std::abs(raw_values[a]), mb = std::abs(raw_values[b]);
    if (ma != mb) return ma > mb;
    if (raw_values[a].real() != raw_values[b].real()) {
      return raw_values[a].real() > raw_values[b].real();
    }
    return raw_values[a].imag() > raw_values[b].imag();
  });

  EigenSystem sys;
  const auto n = raw_values.size();
  sys.values.resize(n);
  sys.right.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sys.values[i] = raw_values[order[static_cast<std::size_t>(i)]];
    sys.right.col(i) = raw_vectors.col(order[static_cast<std::size_t>(i)]);
  }
  // Biorthogonal left eigenvectors from the inverse of the right matrix; this
  // guarantees L * R = I instead of relying on a second decomposition.
  sys.left = sys.right.partialPivLu().inverse();

  const MatrixXcd recon = sys.right * sys.values.asDiagonal() * sys.left;
  const double denom = std::max(J.norm(), 1e-300);
  sys.reconstruction_residual = (recon - J.cast<std::complex<double>>()).norm() / denom;

  const Eigen::JacobiSVD<MatrixXcd> svd(sys.right);
  const double smin = svd.singularValues().minCoeff();
  sys.eigenvector_condition = smin > 0.0
                                  ? svd.singularValues().maxCoeff() / smin
                                  : std::numeric_limits<double>::infinity();
  return sys;
}

double eigen_timescale(std::complex<double> lambda) {
  const double mag = std::abs(lambda);
  if (!(mag > 0.0) || !(mag < 1.0)) {
    throw std::domain_error("eigen_timescale: |lambda| must lie in (0, 1), got " +
                            std::to_string(mag));
  }
  return -1.0 / std::log(mag);
}

double subspace_angle_deg(const VectorXcd& v, const VectorXcd& u) {
  const double nv = v.norm(), nu = u.norm();
  if (nv == 0.0 || nu == 0.0) {
    throw std::invalid_argument("subspace_angle: zero vector");
  }
  double cosine = std::abs(v.dot(u)) / (nv * nu);
  cosine = std::min(1.0, std::max(0.0, cosine));
  return std::acos(cosine) * 180.0 / M_PI;
}

double subspace_angle_deg(const VectorXd& v, const VectorXcd& u) {
  return subspace_angle_deg(VectorXcd(v.cast<std::complex<double>>()), u);
}

VectorXd remove_modes(const VectorXd& h, const VectorXd& h_star, const EigenSystem& sys,
                      const std::vector<int>& mode_indices) {
  if (h.size() != sys.right.rows() || h_star.size() != h.size()) {
    throw std::invalid_argument("remove_modes: dimension mismatch");
  }
  std::vector<bool> selected(static_cast<std::size_t>(sys.size()), false);
  for (int a : mode_indices) {
    if (a < 0 || a >= sys.size()) {
      throw std::invalid_argument("remove_modes: mode index out of range");
    }
    selected[static_cast<std::size_t>(a)] = true;
  }
  for (int a : mode_indices) {
    const int partner = sys.pair_of(a);
    if (partner != a && !selected[static_cast<std::size_t>(partner)]) {
      throw std::invalid_argument(
          "remove_modes: complex pair must be removed jointly (mode " + std::to_string(a) +
          " without its conjugate partner)");
    }
  }
  const VectorXcd d = (h - h_star).cast<std::complex<double>>();
  VectorXcd removed = VectorXcd::Zero(h.size());
  for (int a = 0; a < sys.size(); ++a) {
    if (!selected[static_cast<std::size_t>(a)]) continue;
    removed += sys.right.col(a) * (sys.left.row(a) * d)(0);
  }
  return h - removed.real();
}

std::vector<std::vector<int>> mode_groups(const EigenSystem& sys) {
  std::vector<std::vector<int>> groups;
  for (int a = 0; a < sys.size(); ++a) {
    if (sys.is_complex_mode(a)) {
      const int partner = sys.pair_of(a);
      if (partner < a) continue;  // already emitted with its +imag member
      groups.push_back({a, partner});
    } else {
      groups.push_back({a});
    }
  }
  return groups;
}

std::vector<std::vector<int>> rank_mode_groups(const EigenSystem& sys,
                                               const VectorXd& deflection) {
  const VectorXcd d = deflection.cast<std::complex<double>>();
  auto groups = mode_groups(sys);
  std::vector<double> score(groups.size(), 0.0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (int a : groups[g]) score[g] += std::abs((sys.left.row(a) * d)(0));
  }
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<std::vector<int>> out;
  out.reserve(groups.size());
  for (std::size_t g : order) out.push_back(groups[g]);
  return out;
}

}  // namespace rnnscope
