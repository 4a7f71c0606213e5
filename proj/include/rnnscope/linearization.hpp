#pragma once

#include <Eigen/Dense>

#include "rnnscope/cells.hpp"

namespace rnnscope {

/// Closed-form partial derivatives of the cell update at (state, x).
/// For the LSTM these are with respect to the full [hidden; cell] state.
Eigen::MatrixXd recurrent_jacobian(const RnnParams& p, const Eigen::VectorXd& state,
                                   const Eigen::VectorXd& x);
Eigen::MatrixXd input_jacobian(const RnnParams& p, const Eigen::VectorXd& state,
                               const Eigen::VectorXd& x);

/// First-order model of the update around an expansion point.
struct Linearization {
  Eigen::VectorXd expansion_state;  // h^e
  Eigen::VectorXd expansion_input;  // x^e
  Eigen::VectorXd update_at_point;  // F(h^e, x^e)
  Eigen::MatrixXd J_rec;
  Eigen::MatrixXd J_inp;
};

Linearization linearize(const RnnParams& p, const Eigen::VectorXd& state,
                        const Eigen::VectorXd& x);
Linearization linearize_at_zero_input(const RnnParams& p, const Eigen::VectorXd& state);

/// Local linear dynamics around an approximate fixed point (x^e = 0):
///   h* + J_rec (h_prev - h*) + J_inp x
Eigen::VectorXd linear_step(const Linearization& lin, const Eigen::VectorXd& h_prev,
                            const Eigen::VectorXd& x);

/// Linearized readout effect of word `token` in context `h_context`:
///   w . J_inp|(h_context, 0) . e_token + b
double modified_valence(const RnnParams& p, const Eigen::VectorXd& h_context, int token);

}  // namespace rnnscope
