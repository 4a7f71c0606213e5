#include "rnnscope/linearization.hpp"

#include <stdexcept>

namespace rnnscope {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct GateValues {
  // Gate activations at (state, x), one entry per gate in the kind's order.
  std::vector<ArrayXd> act;
};

ArrayXd sigmoid(const ArrayXd& a) { return 1.0 / (1.0 + (-a).exp()); }

GateValues evaluate_gates(const RnnParams& p, const VectorXd& state, const VectorXd& x) {
  const int N = p.hidden_size;
  const auto pre = [&](int k, const VectorXd& h_in) -> ArrayXd {
    return (p.W[k] * h_in + p.U[k] * x + p.bias[k]).array();
  };
  GateValues gv;
  switch (p.kind) {
    case CellKind::Vanilla:
      gv.act.push_back(pre(0, state).tanh());
      break;
    case CellKind::GRU: {
      ArrayXd r = sigmoid(pre(0, state));
      ArrayXd z = sigmoid(pre(1, state));
      VectorXd rh = (r * state.array()).matrix();
      ArrayXd c = pre(2, rh).tanh();
      gv.act = {std::move(r), std::move(z), std::move(c)};
      break;
    }
    case CellKind::LSTM: {
      const VectorXd h = state.head(N);
      gv.act = {sigmoid(pre(0, h)), sigmoid(pre(1, h)), pre(2, h).tanh(),
                sigmoid(pre(3, h))};
      break;
    }
    case CellKind::UGRNN: {
      gv.act = {sigmoid(pre(0, state)), pre(1, state).tanh()};
      break;
    }
  }
  return gv;
}

inline MatrixXd dmul(const ArrayXd& d, const MatrixXd& m) {
  // diag(d) * m
  return d.matrix().asDiagonal() * m;
}

}  // namespace

MatrixXd recurrent_jacobian(const RnnParams& p, const VectorXd& state, const VectorXd& x) {
  if (state.size() != p.state_dim() || x.size() != p.input_size) {
    throw std::invalid_argument("recurrent_jacobian: shape mismatch");
  }
  const int N = p.hidden_size;
  const GateValues gv = evaluate_gates(p, state, x);
  switch (p.kind) {
    case CellKind::Vanilla: {
      const ArrayXd& h_new = gv.act[0];
      return dmul(1.0 - h_new.square(), p.W[0]);
    }
    case CellKind::GRU: {
      const ArrayXd& r = gv.act[0];
      const ArrayXd& z = gv.act[1];
      const ArrayXd& c = gv.act[2];
      const ArrayXd h = state.array();
      MatrixXd da_c_dh = p.W[2] * r.matrix().asDiagonal() +
                         p.W[2] * (h * r * (1.0 - r)).matrix().asDiagonal() * p.W[0];
      MatrixXd J = MatrixXd(z.matrix().asDiagonal());
      J += dmul((h - c) * z * (1.0 - z), p.W[1]);
      J += dmul((1.0 - z) * (1.0 - c.square()), da_c_dh);
      return J;
    }
    case CellKind::LSTM: {
      const ArrayXd& i = gv.act[0];
      const ArrayXd& f = gv.act[1];
      const ArrayXd& g = gv.act[2];
      const ArrayXd& o = gv.act[3];
      const ArrayXd c_prev = state.tail(N).array();
      const ArrayXd c_new = f * c_prev + i * g;
      const ArrayXd tc = c_new.tanh();
      MatrixXd dcdh = dmul(c_prev * f * (1.0 - f), p.W[1]) +
                      dmul(g * i * (1.0 - i), p.W[0]) + dmul(i * (1.0 - g.square()), p.W[2]);
      MatrixXd dhdh = dmul(tc * o * (1.0 - o), p.W[3]) + dmul(o * (1.0 - tc.square()), dcdh);
      MatrixXd J = MatrixXd::Zero(2 * N, 2 * N);
      J.topLeftCorner(N, N) = dhdh;
      J.topRightCorner(N, N) = (o * (1.0 - tc.square()) * f).matrix().asDiagonal();
      J.bottomLeftCorner(N, N) = dcdh;
      J.bottomRightCorner(N, N) = f.matrix().asDiagonal();
      return J;
    }
    case CellKind::UGRNN: {
      const ArrayXd& g = gv.act[0];
      const ArrayXd& c = gv.act[1];
      const ArrayXd h = state.array();
      MatrixXd J = MatrixXd(g.matrix().asDiagonal());
      J += dmul((h - c) * g * (1.0 - g), p.W[0]);
      J += dmul((1.0 - g) * (1.0 - c.square()), p.W[1]);
      return J;
    }
  }
  throw std::logic_error("unknown CellKind");
}

MatrixXd input_jacobian(const RnnParams& p, const VectorXd& state, const VectorXd& x) {
  if (state.size() != p.state_dim() || x.size() != p.input_size) {
    throw std::invalid_argument("input_jacobian: shape mismatch");
  }
  const int N = p.hidden_size;
  const GateValues gv = evaluate_gates(p, state, x);
  switch (p.kind) {
    case CellKind::Vanilla: {
      const ArrayXd& h_new = gv.act[0];
      return dmul(1.0 - h_new.square(), p.U[0]);
    }
    case CellKind::GRU: {
      const ArrayXd& r = gv.act[0];
      const ArrayXd& z = gv.act[1];
      const ArrayXd& c = gv.act[2];
      const ArrayXd h = state.array();
      MatrixXd da_c_dx =
          p.U[2] + p.W[2] * (h * r * (1.0 - r)).matrix().asDiagonal() * p.U[0];
      return dmul((h - c) * z * (1.0 - z), p.U[1]) +
             dmul((1.0 - z) * (1.0 - c.square()), da_c_dx);
    }
    case CellKind::LSTM: {
      const ArrayXd& i = gv.act[0];
      const ArrayXd& f = gv.act[1];
      const ArrayXd& g = gv.act[2];
      const ArrayXd& o = gv.act[3];
      const ArrayXd c_prev = state.tail(N).array();
      const ArrayXd c_new = f * c_prev + i * g;
      const ArrayXd tc = c_new.tanh();
      MatrixXd dcdx = dmul(c_prev * f * (1.0 - f), p.U[1]) +
                      dmul(g * i * (1.0 - i), p.U[0]) + dmul(i * (1.0 - g.square()), p.U[2]);
      MatrixXd dhdx = dmul(tc * o * (1.0 - o), p.U[3]) + dmul(o * (1.0 - tc.square()), dcdx);
      MatrixXd J(2 * N, p.input_size);
      J.topRows(N) = dhdx;
      J.bottomRows(N) = dcdx;
      return J;
    }
    case CellKind::UGRNN: {
      const ArrayXd& g = gv.act[0];
      const ArrayXd& c = gv.act[1];
      const ArrayXd h = state.array();
      return dmul((h - c) * g * (1.0 - g), p.U[0]) +
             dmul((1.0 - g) * (1.0 - c.square()), p.U[1]);
    }
  }
  throw std::logic_error("unknown CellKind");
}

Linearization linearize(const RnnParams& p, const VectorXd& state, const VectorXd& x) {
  Linearization lin;
  lin.expansion_state = state;
  lin.expansion_input = x;
  lin.update_at_point = cell_step(p, state, x);
  lin.J_rec = recurrent_jacobian(p, state, x);
  lin.J_inp = input_jacobian(p, state, x);
  return lin;
}

Linearization linearize_at_zero_input(const RnnParams& p, const VectorXd& state) {
  return linearize(p, state, VectorXd::Zero(p.input_size));
}

VectorXd linear_step(const Linearization& lin, const VectorXd& h_prev, const VectorXd& x) {
  return lin.expansion_state + lin.J_rec * (h_prev - lin.expansion_state) + lin.J_inp * x;
}

double modified_valence(const RnnParams& p, const VectorXd& h_context, int token) {
  if (token < 0 || token >= p.input_size) {
    throw std::out_of_range("modified_valence: token id out of range");
  }
  const MatrixXd J = input_jacobian(p, h_context, VectorXd::Zero(p.input_size));
  return p.readout_state_vector().dot(J.col(token)) + p.readout_b;
}

}  // namespace rnnscope
