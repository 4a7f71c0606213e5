#include "rnnscope/bilinear.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rnnscope {

using Eigen::MatrixXd;
using Eigen::VectorXd;

BilinearFit fit_bilinear(const std::vector<JacobianSample>& samples,
                         const MatrixXd& base_jacobian, const VectorXd& h_star, int P) {
  if (P < 0) throw std::invalid_argument("fit_bilinear: P must be >= 0");
  const auto S = static_cast<Eigen::Index>(samples.size());
  if (S < P) throw std::invalid_argument("fit_bilinear: P exceeds sample count");
  const auto N = h_star.size();
  const auto D = base_jacobian.cols();
  if (base_jacobian.rows() != N) {
    throw std::invalid_argument("fit_bilinear: base jacobian shape mismatch");
  }

  MatrixXd defl(S, N);  // rows (h_mod - h_star)^T
  MatrixXd Y(S, N * D);  // rows vec(J - base), column-major
  for (Eigen::Index i = 0; i < S; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    if (s.h_mod.size() != N || s.jacobian.rows() != N || s.jacobian.cols() != D) {
      throw std::invalid_argument("fit_bilinear: sample shape mismatch");
    }
    defl.row(i) = (s.h_mod - h_star).transpose();
    const MatrixXd dj = s.jacobian - base_jacobian;
    Y.row(i) = Eigen::Map<const VectorXd>(dj.data(), N * D).transpose();
  }

  const double total = Y.squaredNorm();
  BilinearFit fit;
  fit.model.base_jacobian = base_jacobian;
  fit.model.h_star = h_star;
  fit.model.P = P;
  fit.model.components = MatrixXd::Zero(N, P);
  fit.variance_explained_by_p = VectorXd::Zero(P);
  if (total == 0.0) {
    // All sampled Jacobians equal the base: zero residual needs no terms.
    fit.variance_explained = 1.0;
    fit.variance_explained_by_p.setConstant(1.0);
    for (int q = 0; q < P; ++q) fit.model.coefficients.push_back(MatrixXd::Zero(N, D));
    return fit;
  }

  // Ordinary least squares Yhat = defl * pinv(defl) * Y, then Eckart-Young
  // truncation of Yhat at rank P (reduced-rank regression).
  Eigen::BDCSVD<MatrixXd> dsvd(defl, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd dsv = dsvd.singularValues();
  int defl_rank = 0;
  for (Eigen::Index i = 0; i < dsv.size(); ++i) {
    if (dsv[i] > 1e-12 * dsv[0]) defl_rank++;
  }
  if (defl_rank < P) {
    throw std::invalid_argument("fit_bilinear: deflection rank " +
                                std::to_string(defl_rank) + " below P = " +
                                std::to_string(P));
  }
  VectorXd inv_sv = VectorXd::Zero(dsv.size());
  for (int i = 0; i < defl_rank; ++i) inv_sv[i] = 1.0 / dsv[i];
  const MatrixXd pinv = dsvd.matrixV() * inv_sv.asDiagonal() * dsvd.matrixU().transpose();
  const MatrixXd B_ols = pinv * Y;        // N x ND
  const MatrixXd Yhat = defl * B_ols;     // S x ND
  const double ols_residual = (Y - Yhat).squaredNorm();

  Eigen::BDCSVD<MatrixXd> ysvd(Yhat, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd ysv = ysvd.singularValues();

  double tail = ysv.squaredNorm();
  for (int q = 0; q < P; ++q) {
    if (q < ysv.size()) tail -= ysv[q] * ysv[q];
    fit.variance_explained_by_p[q] = 1.0 - (ols_residual + std::max(tail, 0.0)) / total;
  }
  fit.variance_explained = P > 0 ? fit.variance_explained_by_p[P - 1]
                                 : 1.0 - (ols_residual + ysv.squaredNorm()) / total;

  // Factorization: fitted deviations = (defl * M) * V_P^T with columns of V_P
  // the vectorized A_p; M maps deflections to the P projection scalars.
  if (P > 0) {
    const MatrixXd Vp = ysvd.matrixV().leftCols(P);      // ND x P
    const MatrixXd scores = ysvd.matrixU().leftCols(P) *
                            ysv.head(P).asDiagonal();     // S x P
    fit.model.components = pinv * scores;                  // N x P: m_p = pinv * score_p
    for (int q = 0; q < P; ++q) {
      MatrixXd A(N, D);
      Eigen::Map<VectorXd>(A.data(), N * D) = Vp.col(q);
      fit.model.coefficients.push_back(std::move(A));
    }
    // Canonical signs: flip so each component's largest coefficient is
    // positive (A_p flips jointly, leaving predictions unchanged).
    for (int q = 0; q < P; ++q) {
      Eigen::Index argmax = 0;
      fit.model.components.col(q).cwiseAbs().maxCoeff(&argmax);
      if (fit.model.components(argmax, q) < 0.0) {
        fit.model.components.col(q) *= -1.0;
        fit.model.coefficients[static_cast<std::size_t>(q)] *= -1.0;
      }
    }
  }
  return fit;
}

MatrixXd predict_jacobian(const BilinearModel& model, const VectorXd& h_mod) {
  if (h_mod.size() != model.h_star.size()) {
    throw std::invalid_argument("predict_jacobian: state dimension mismatch");
  }
  MatrixXd J = model.base_jacobian;
  const VectorXd deflection = h_mod - model.h_star;
  for (int q = 0; q < model.P; ++q) {
    J += deflection.dot(model.components.col(q)) *
         model.coefficients[static_cast<std::size_t>(q)];
  }
  return J;
}

double bilinear_readout(const BilinearModel& model, const VectorXd& w_state, double bias,
                        const VectorXd& h_mod, int token) {
  if (token < 0 || token >= model.base_jacobian.cols()) {
    throw std::out_of_range("bilinear_readout: token id out of range");
  }
  double value = w_state.dot(model.base_jacobian.col(token)) + bias;
  const VectorXd deflection = h_mod - model.h_star;
  for (int q = 0; q < model.P; ++q) {
    value += deflection.dot(model.components.col(q)) *
             w_state.dot(model.coefficients[static_cast<std::size_t>(q)].col(token));
  }
  return value;
}

VectorXd modifier_word_weights(const BilinearModel& model, const VectorXd& w_state, int p) {
  if (p < 0 || p >= model.P) {
    throw std::out_of_range("modifier_word_weights: component out of range");
  }
  return model.coefficients[static_cast<std::size_t>(p)].transpose() * w_state;
}

namespace {

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  return m;
}

}  // namespace

void save_bilinear(const std::filesystem::path& path, const BilinearModel& model) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["P"] = model.P;
  doc["base_jacobian"] = matrix_to_json(model.base_jacobian);
  doc["h_star"] = matrix_to_json(model.h_star);
  doc["components"] = matrix_to_json(model.components);
  nlohmann::json coeffs = nlohmann::json::array();
  for (const auto& a : model.coefficients) coeffs.push_back(matrix_to_json(a));
  doc["coefficients"] = std::move(coeffs);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << doc.dump(1) << '\n';
}

BilinearModel load_bilinear(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  nlohmann::json doc;
  in >> doc;
  BilinearModel model;
  model.P = doc.at("P").get<int>();
  model.base_jacobian = matrix_from_json(doc.at("base_jacobian"));
  model.h_star = matrix_from_json(doc.at("h_star")).col(0);
  model.components = matrix_from_json(doc.at("components"));
  for (const auto& a : doc.at("coefficients")) {
    model.coefficients.push_back(matrix_from_json(a));
  }
  return model;
}

}  // namespace rnnscope
