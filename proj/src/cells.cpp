#include "rnnscope/cells.hpp"

#include <cmath>
#include <stdexcept>

#include "rnnscope/rng.hpp"

namespace rnnscope {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(CellKind kind) {
  switch (kind) {
    case CellKind::Vanilla: return "vanilla";
    case CellKind::GRU: return "gru";
    case CellKind::LSTM: return "lstm";
    case CellKind::UGRNN: return "ugrnn";
  }
  throw std::logic_error("unknown CellKind");
}

CellKind cell_kind_from_string(const std::string& name) {
  if (name == "vanilla") return CellKind::Vanilla;
  if (name == "gru") return CellKind::GRU;
  if (name == "lstm") return CellKind::LSTM;
  if (name == "ugrnn") return CellKind::UGRNN;
  throw std::invalid_argument("unknown cell kind: " + name);
}

bool is_gated(CellKind kind) { return kind != CellKind::Vanilla; }

int RnnParams::gate_count() const {
  switch (kind) {
    case CellKind::Vanilla: return 1;
    case CellKind::UGRNN: return 2;
    case CellKind::GRU: return 3;
    case CellKind::LSTM: return 4;
  }
  throw std::logic_error("unknown CellKind");
}

VectorXd RnnParams::readout_state_vector() const {
  VectorXd w = VectorXd::Zero(state_dim());
  w.head(hidden_size) = readout_w;
  return w;
}

void RnnParams::validate() const {
  const int g = gate_count();
  if (static_cast<int>(W.size()) != g || static_cast<int>(U.size()) != g ||
      static_cast<int>(bias.size()) != g) {
    throw std::invalid_argument("RnnParams: gate array size mismatch");
  }
  for (int k = 0; k < g; ++k) {
    if (W[k].rows() != hidden_size || W[k].cols() != hidden_size ||
        U[k].rows() != hidden_size || U[k].cols() != input_size ||
        bias[k].size() != hidden_size) {
      throw std::invalid_argument("RnnParams: gate " + std::to_string(k) +
                                  " shape mismatch");
    }
  }
  if (readout_w.size() != hidden_size || h0.size() != state_dim()) {
    throw std::invalid_argument("RnnParams: readout/h0 shape mismatch");
  }
}

RnnParams init_params(CellKind kind, int hidden_size, int input_size, std::uint64_t seed,
                      int null_token) {
  if (hidden_size < 1 || input_size < 1) {
    throw std::invalid_argument("init_params: sizes must be >= 1");
  }
  if (null_token >= input_size) {
    throw std::invalid_argument("init_params: null_token out of range");
  }
  Rng rng(seed);
  RnnParams p;
  p.kind = kind;
  p.hidden_size = hidden_size;
  p.input_size = input_size;
  p.null_token = null_token;
  const int g = p.gate_count();
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  const double u_scale = 1.0 / std::sqrt(static_cast<double>(input_size));
  for (int k = 0; k < g; ++k) {
    MatrixXd W(hidden_size, hidden_size), U(hidden_size, input_size);
    for (int j = 0; j < W.cols(); ++j)
      for (int i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-w_scale, w_scale);
    for (int j = 0; j < U.cols(); ++j)
      for (int i = 0; i < U.rows(); ++i) U(i, j) = rng.uniform(-u_scale, u_scale);
    if (null_token >= 0) U.col(null_token).setZero();
    p.W.push_back(std::move(W));
    p.U.push_back(std::move(U));
    p.bias.push_back(VectorXd::Zero(hidden_size));
  }
  // Retention gates start open (the standard forget-gate trick): integration
  // tasks train faster and the hold behavior saturates sooner.
  if (kind == CellKind::LSTM) {
    p.bias[1].setConstant(1.0);  // forget gate
  } else if (kind == CellKind::GRU) {
    p.bias[1].setConstant(2.0);  // update gate keeps h
  } else if (kind == CellKind::UGRNN) {
    p.bias[0].setConstant(2.0);  // update gate keeps h
  }
  p.readout_w = VectorXd::Zero(hidden_size);
  for (int i = 0; i < hidden_size; ++i) p.readout_w[i] = rng.uniform(-w_scale, w_scale);
  p.readout_b = 0.0;
  p.h0 = VectorXd::Zero(p.state_dim());
  return p;
}

ParamGrads ParamGrads::zeros_like(const RnnParams& p) {
  ParamGrads g;
  for (int k = 0; k < p.gate_count(); ++k) {
    g.W.push_back(MatrixXd::Zero(p.hidden_size, p.hidden_size));
    g.U.push_back(MatrixXd::Zero(p.hidden_size, p.input_size));
    g.bias.push_back(VectorXd::Zero(p.hidden_size));
  }
  g.readout_w = VectorXd::Zero(p.hidden_size);
  g.readout_b = 0.0;
  g.h0 = VectorXd::Zero(p.state_dim());
  return g;
}

void ParamGrads::set_zero() {
  for (auto& m : W) m.setZero();
  for (auto& m : U) m.setZero();
  for (auto& v : bias) v.setZero();
  readout_w.setZero();
  readout_b = 0.0;
  h0.setZero();
}

long param_count(const RnnParams& p) {
  const long g = p.gate_count();
  return g * (static_cast<long>(p.hidden_size) * p.hidden_size +
              static_cast<long>(p.hidden_size) * p.input_size + p.hidden_size) +
         p.hidden_size + 1 + p.state_dim();
}

VectorXd flatten_params(const RnnParams& p) {
  VectorXd flat(param_count(p));
  long off = 0;
  auto put = [&](const auto& block) {
    const long n = block.size();
    flat.segment(off, n) = Eigen::Map<const VectorXd>(block.data(), n);
    off += n;
  };
  for (const auto& m : p.W) put(m);
  for (const auto& m : p.U) put(m);
  for (const auto& v : p.bias) put(v);
  put(p.readout_w);
  flat[off++] = p.readout_b;
  put(p.h0);
  return flat;
}

void unflatten_params(const VectorXd& flat, RnnParams& p) {
  if (flat.size() != param_count(p)) {
    throw std::invalid_argument("unflatten_params: size mismatch");
  }
  long off = 0;
  auto take = [&](auto& block) {
    const long n = block.size();
    Eigen::Map<VectorXd>(block.data(), n) = flat.segment(off, n);
    off += n;
  };
  for (auto& m : p.W) take(m);
  for (auto& m : p.U) take(m);
  for (auto& v : p.bias) take(v);
  take(p.readout_w);
  p.readout_b = flat[off++];
  take(p.h0);
}

VectorXd flatten_grads(const ParamGrads& g) {
  long total = 0;
  for (const auto& m : g.W) total += m.size();
  for (const auto& m : g.U) total += m.size();
  for (const auto& v : g.bias) total += v.size();
  total += g.readout_w.size() + 1 + g.h0.size();
  VectorXd flat(total);
  long off = 0;
  auto put = [&](const auto& block) {
    const long n = block.size();
    flat.segment(off, n) = Eigen::Map<const VectorXd>(block.data(), n);
    off += n;
  };
  for (const auto& m : g.W) put(m);
  for (const auto& m : g.U) put(m);
  for (const auto& v : g.bias) put(v);
  put(g.readout_w);
  flat[off++] = g.readout_b;
  put(g.h0);
  return flat;
}

namespace {

inline void check_tokens(const std::vector<int>& toks, int input_size) {
  for (int t : toks) {
    if (t < 0 || t >= input_size) {
      throw std::out_of_range("token id " + std::to_string(t) + " out of vocabulary (D=" +
                              std::to_string(input_size) + ")");
    }
  }
}

// a += U x over the batch, for the three input forms. The null token
// contributes nothing (its encoding is the zero vector).
void add_input_term(const MatrixXd& U, const BatchInput& input, int null_token,
                    MatrixXd& a) {
  if (input.tokens != nullptr) {
    for (int j = 0; j < a.cols(); ++j) {
      const int tok = (*input.tokens)[static_cast<std::size_t>(j)];
      if (tok == null_token) continue;
      a.col(j) += U.col(tok);
    }
  } else if (input.dense != nullptr) {
    a.noalias() += U * (*input.dense);
  }
}

// dU += da x^T over the batch.
void accumulate_input_grad(const BatchInput& input, int null_token, const MatrixXd& da,
                           MatrixXd& dU) {
  if (input.tokens != nullptr) {
    for (int j = 0; j < da.cols(); ++j) {
      const int tok = (*input.tokens)[static_cast<std::size_t>(j)];
      if (tok == null_token) continue;
      dU.col(tok) += da.col(j);
    }
  } else if (input.dense != nullptr) {
    dU.noalias() += da * input.dense->transpose();
  }
}

inline MatrixXd gate_preact(const RnnParams& p, int k, const MatrixXd& h,
                            const BatchInput& input) {
  MatrixXd a = p.W[k] * h;
  a.colwise() += p.bias[k];
  add_input_term(p.U[k], input, p.null_token, a);
  return a;
}

inline void sigmoid_inplace(MatrixXd& a) {
  a = (1.0 + (-a.array()).exp()).inverse().matrix();
}

inline void tanh_inplace(MatrixXd& a) { a = a.array().tanh().matrix(); }

}  // namespace

void step_batch(const RnnParams& p, const Eigen::MatrixXd& state, const BatchInput& input,
                Eigen::MatrixXd& next_state, StepCache* cache) {
  const int N = p.hidden_size;
  const auto B = state.cols();
  if (state.rows() != p.state_dim()) {
    throw std::invalid_argument("step_batch: state dimension mismatch");
  }
  if (input.tokens != nullptr) {
    if (static_cast<Eigen::Index>(input.tokens->size()) != B) {
      throw std::invalid_argument("step_batch: token batch size mismatch");
    }
    check_tokens(*input.tokens, p.input_size);
  }
  if (input.dense != nullptr &&
      (input.dense->rows() != p.input_size || input.dense->cols() != B)) {
    throw std::invalid_argument("step_batch: dense input shape mismatch");
  }
  next_state.resize(p.state_dim(), B);

  switch (p.kind) {
    case CellKind::Vanilla: {
      MatrixXd a = gate_preact(p, 0, state, input);
      tanh_inplace(a);
      next_state = a;
      if (cache) cache->act = {std::move(a)};
      break;
    }
    case CellKind::GRU: {
      MatrixXd r = gate_preact(p, 0, state, input);
      sigmoid_inplace(r);
      MatrixXd z = gate_preact(p, 1, state, input);
      sigmoid_inplace(z);
      MatrixXd rh = r.cwiseProduct(state);
      MatrixXd c = p.W[2] * rh;
      c.colwise() += p.bias[2];
      add_input_term(p.U[2], input, p.null_token, c);
      tanh_inplace(c);
      next_state = z.cwiseProduct(state) + (1.0 - z.array()).matrix().cwiseProduct(c);
      if (cache) {
        cache->act = {std::move(r), std::move(z), std::move(c)};
        cache->aux = std::move(rh);
      }
      break;
    }
    case CellKind::LSTM: {
      const auto h = state.topRows(N);
      const auto c_prev = state.bottomRows(N);
      MatrixXd i = gate_preact(p, 0, h, input);
      sigmoid_inplace(i);
      MatrixXd f = gate_preact(p, 1, h, input);
      sigmoid_inplace(f);
      MatrixXd g = gate_preact(p, 2, h, input);
      tanh_inplace(g);
      MatrixXd o = gate_preact(p, 3, h, input);
      sigmoid_inplace(o);
      MatrixXd c_new = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
      MatrixXd tanh_c = c_new.array().tanh().matrix();
      next_state.topRows(N) = o.cwiseProduct(tanh_c);
      next_state.bottomRows(N) = c_new;
      if (cache) {
        cache->act = {std::move(i), std::move(f), std::move(g), std::move(o)};
        cache->aux = std::move(tanh_c);
      }
      break;
    }
    case CellKind::UGRNN: {
      MatrixXd g = gate_preact(p, 0, state, input);
      sigmoid_inplace(g);
      MatrixXd c = gate_preact(p, 1, state, input);
      tanh_inplace(c);
      next_state = g.cwiseProduct(state) + (1.0 - g.array()).matrix().cwiseProduct(c);
      if (cache) cache->act = {std::move(g), std::move(c)};
      break;
    }
  }
}

void step_backward(const RnnParams& p, const Eigen::MatrixXd& state_prev,
                   const BatchInput& input, const Eigen::MatrixXd& next_state,
                   const StepCache& cache, const Eigen::MatrixXd& dnext,
                   Eigen::MatrixXd& dprev, ParamGrads* grads) {
  const int N = p.hidden_size;
  dprev.resize(state_prev.rows(), state_prev.cols());

  auto accumulate_gate = [&](int k, const MatrixXd& da, const MatrixXd& h_in) {
    if (!grads) return;
    grads->W[k].noalias() += da * h_in.transpose();
    accumulate_input_grad(input, p.null_token, da, grads->U[k]);
    grads->bias[k] += da.rowwise().sum();
  };

  switch (p.kind) {
    case CellKind::Vanilla: {
      const MatrixXd& h_new = cache.act[0];
      MatrixXd da = dnext.cwiseProduct((1.0 - h_new.array().square()).matrix());
      accumulate_gate(0, da, state_prev);
      dprev.noalias() = p.W[0].transpose() * da;
      break;
    }
    case CellKind::GRU: {
      const MatrixXd& r = cache.act[0];
      const MatrixXd& z = cache.act[1];
      const MatrixXd& c = cache.act[2];
      const MatrixXd& rh = cache.aux;
      MatrixXd dz = dnext.cwiseProduct(state_prev - c);
      MatrixXd dc = dnext.cwiseProduct((1.0 - z.array()).matrix());
      dprev = dnext.cwiseProduct(z);
      MatrixXd da_c = dc.cwiseProduct((1.0 - c.array().square()).matrix());
      accumulate_gate(2, da_c, rh);
      MatrixXd drh = p.W[2].transpose() * da_c;
      MatrixXd dr = drh.cwiseProduct(state_prev);
      dprev += drh.cwiseProduct(r);
      MatrixXd da_r = dr.cwiseProduct((r.array() * (1.0 - r.array())).matrix());
      accumulate_gate(0, da_r, state_prev);
      dprev.noalias() += p.W[0].transpose() * da_r;
      MatrixXd da_z = dz.cwiseProduct((z.array() * (1.0 - z.array())).matrix());
      accumulate_gate(1, da_z, state_prev);
      dprev.noalias() += p.W[1].transpose() * da_z;
      break;
    }
    case CellKind::LSTM: {
      const MatrixXd& i = cache.act[0];
      const MatrixXd& f = cache.act[1];
      const MatrixXd& g = cache.act[2];
      const MatrixXd& o = cache.act[3];
      const MatrixXd& tanh_c = cache.aux;
      const auto h_prev = state_prev.topRows(N);
      const auto c_prev = state_prev.bottomRows(N);
      const auto dh = dnext.topRows(N);
      const auto dc_ext = dnext.bottomRows(N);
      MatrixXd dout = dh.cwiseProduct(tanh_c);
      MatrixXd dc = dc_ext + dh.cwiseProduct(o).cwiseProduct(
                                 (1.0 - tanh_c.array().square()).matrix());
      MatrixXd df = dc.cwiseProduct(c_prev);
      MatrixXd di = dc.cwiseProduct(g);
      MatrixXd dg = dc.cwiseProduct(i);
      dprev.bottomRows(N) = dc.cwiseProduct(f);
      MatrixXd da_i = di.cwiseProduct((i.array() * (1.0 - i.array())).matrix());
      MatrixXd da_f = df.cwiseProduct((f.array() * (1.0 - f.array())).matrix());
      MatrixXd da_g = dg.cwiseProduct((1.0 - g.array().square()).matrix());
      MatrixXd da_o = dout.cwiseProduct((o.array() * (1.0 - o.array())).matrix());
      accumulate_gate(0, da_i, h_prev);
      accumulate_gate(1, da_f, h_prev);
      accumulate_gate(2, da_g, h_prev);
      accumulate_gate(3, da_o, h_prev);
      dprev.topRows(N).noalias() = p.W[0].transpose() * da_i;
      dprev.topRows(N).noalias() += p.W[1].transpose() * da_f;
      dprev.topRows(N).noalias() += p.W[2].transpose() * da_g;
      dprev.topRows(N).noalias() += p.W[3].transpose() * da_o;
      break;
    }
    case CellKind::UGRNN: {
      const MatrixXd& g = cache.act[0];
      const MatrixXd& c = cache.act[1];
      MatrixXd dg = dnext.cwiseProduct(state_prev - c);
      MatrixXd dc = dnext.cwiseProduct((1.0 - g.array()).matrix());
      dprev = dnext.cwiseProduct(g);
      MatrixXd da_c = dc.cwiseProduct((1.0 - c.array().square()).matrix());
      accumulate_gate(1, da_c, state_prev);
      dprev.noalias() += p.W[1].transpose() * da_c;
      MatrixXd da_g = dg.cwiseProduct((g.array() * (1.0 - g.array())).matrix());
      accumulate_gate(0, da_g, state_prev);
      dprev.noalias() += p.W[0].transpose() * da_g;
      break;
    }
  }
}

VectorXd cell_step(const RnnParams& p, const VectorXd& state, const VectorXd& x) {
  if (x.size() != p.input_size) {
    throw std::invalid_argument("cell_step: input dimension mismatch");
  }
  MatrixXd s = state;
  MatrixXd xs = x;
  MatrixXd out;
  step_batch(p, s, BatchInput::dense_input(xs), out, nullptr);
  return out.col(0);
}

VectorXd cell_step_token(const RnnParams& p, const VectorXd& state, int token) {
  std::vector<int> toks{token};
  MatrixXd s = state;
  MatrixXd out;
  step_batch(p, s, BatchInput::one_hot(toks), out, nullptr);
  return out.col(0);
}

VectorXd cell_step_zero(const RnnParams& p, const VectorXd& state) {
  MatrixXd s = state;
  MatrixXd out;
  step_batch(p, s, BatchInput::zero(), out, nullptr);
  return out.col(0);
}

double readout(const RnnParams& p, const VectorXd& state) {
  if (state.size() != p.state_dim()) {
    throw std::invalid_argument("readout: state dimension mismatch");
  }
  return p.readout_w.dot(state.head(p.hidden_size)) + p.readout_b;
}

VectorXd one_hot(int token, int input_size) {
  if (token < 0 || token >= input_size) {
    throw std::out_of_range("one_hot: token id out of range");
  }
  VectorXd x = VectorXd::Zero(input_size);
  x[token] = 1.0;
  return x;
}

SequenceRun run_sequence(const RnnParams& p, std::span<const int> tokens) {
  SequenceRun run;
  const auto L = static_cast<Eigen::Index>(tokens.size());
  run.trajectory.resize(p.state_dim(), L);
  run.logits.resize(L);
  VectorXd state = p.h0;
  for (Eigen::Index t = 0; t < L; ++t) {
    state = cell_step_token(p, state, tokens[static_cast<std::size_t>(t)]);
    run.trajectory.col(t) = state;
    run.logits[t] = readout(p, state);
  }
  return run;
}

}  // namespace rnnscope
