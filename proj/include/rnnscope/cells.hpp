#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rnnscope {

enum class CellKind { Vanilla, GRU, LSTM, UGRNN };

std::string to_string(CellKind kind);
CellKind cell_kind_from_string(const std::string& name);
bool is_gated(CellKind kind);

/// Parameters of one recurrent cell plus the scalar readout.
///
/// All four cells are stored as parallel arrays of gate weights; the gate
/// order per kind is fixed and documented here together with the update
/// equations (h = previous hidden, x = input, a_k = W[k] h + U[k] x + b[k]):
///
/// Vanilla, gates {pre}:
///     h' = tanh(a_0)
/// GRU (Cho et al. 2014), gates {r, z, c}; z gates retention of h:
///     r = sigmoid(a_0), z = sigmoid(a_1), c = tanh(W[2](r*h) + U[2]x + b[2])
///     h' = z*h + (1-z)*c
/// LSTM (Hochreiter & Schmidhuber 1997), gates {i, f, g, o}; the state vector
/// is [hidden; cell] of dimension 2N, gates read the hidden partition:
///     i = sigmoid(a_0), f = sigmoid(a_1), g = tanh(a_2), o = sigmoid(a_3)
///     cell' = f*cell + i*g,  h' = o*tanh(cell')
/// UGRNN (Collins et al. 2016), gates {g, c}:
///     g = sigmoid(a_0), c = tanh(a_1)
///     h' = g*h + (1-g)*c
///
/// The readout is w . hidden + b; for the LSTM it reads only the hidden
/// partition of the state.
struct RnnParams {
  CellKind kind = CellKind::GRU;
  int hidden_size = 0;  // N
  int input_size = 0;   // D

  // Token whose input encoding is the zero vector instead of a one-hot
  // (-1 = none). The pad token is mapped here so that the zero-input map
  // F(h, 0) -- the one the fixed-point objective probes -- is exactly the
  // trained between-words dynamics. Its U columns are zero and receive no
  // gradient.
  int null_token = -1;

  std::vector<Eigen::MatrixXd> W;     // gate recurrent weights, N x N
  std::vector<Eigen::MatrixXd> U;     // gate input weights, N x D
  std::vector<Eigen::VectorXd> bias;  // gate biases, N

  Eigen::VectorXd readout_w;  // N
  double readout_b = 0.0;
  Eigen::VectorXd h0;  // state_dim, trainable initial state

  int gate_count() const;
  int state_dim() const { return kind == CellKind::LSTM ? 2 * hidden_size : hidden_size; }

  /// Readout weights lifted into state space ([w; 0] for the LSTM), so that
  /// expressions like w^T J x are uniform across cell kinds.
  Eigen::VectorXd readout_state_vector() const;

  /// Checks internal shape consistency; throws std::invalid_argument.
  void validate() const;
};

/// Uniform init scaled by 1/sqrt(fan-in); biases zero except the LSTM forget
/// gate (1.0); h0 zero; the null token's input columns zero.
RnnParams init_params(CellKind kind, int hidden_size, int input_size, std::uint64_t seed,
                      int null_token = -1);

/// Gradient (or moment) storage shaped like the trainable parameters.
struct ParamGrads {
  std::vector<Eigen::MatrixXd> W, U;
  std::vector<Eigen::VectorXd> bias;
  Eigen::VectorXd readout_w;
  double readout_b = 0.0;
  Eigen::VectorXd h0;

  static ParamGrads zeros_like(const RnnParams& p);
  void set_zero();
};

/// Flat views with a fixed block order (W gates, U gates, biases, readout_w,
/// readout_b, h0); used by the optimizer and the finite-difference checks.
long param_count(const RnnParams& p);
Eigen::VectorXd flatten_params(const RnnParams& p);
void unflatten_params(const Eigen::VectorXd& flat, RnnParams& p);
Eigen::VectorXd flatten_grads(const ParamGrads& g);

/// Input to a batched step: exactly one of the three forms.
struct BatchInput {
  const std::vector<int>* tokens = nullptr;   // one-hot columns, size B
  const Eigen::MatrixXd* dense = nullptr;     // D x B
  static BatchInput zero() { return {}; }     // x = 0
  static BatchInput one_hot(const std::vector<int>& toks) { return {&toks, nullptr}; }
  static BatchInput dense_input(const Eigen::MatrixXd& x) { return {nullptr, &x}; }
};

/// Per-step activations retained for the backward pass.
struct StepCache {
  std::vector<Eigen::MatrixXd> act;  // gate activations, N x B
  Eigen::MatrixXd aux;               // GRU: r*h_prev; LSTM: tanh(cell')
};

/// One cell update on a batch of states (state_dim x B columns).
void step_batch(const RnnParams& p, const Eigen::MatrixXd& state, const BatchInput& input,
                Eigen::MatrixXd& next_state, StepCache* cache);

/// Reverse-mode step: given d(next_state), produces d(state) and accumulates
/// parameter gradients (grads may be null when only the state gradient is
/// needed, e.g. for fixed-point objectives).
void step_backward(const RnnParams& p, const Eigen::MatrixXd& state_prev,
                   const BatchInput& input, const Eigen::MatrixXd& next_state,
                   const StepCache& cache, const Eigen::MatrixXd& dnext,
                   Eigen::MatrixXd& dprev, ParamGrads* grads);

/// Single-state convenience wrappers.
Eigen::VectorXd cell_step(const RnnParams& p, const Eigen::VectorXd& state,
                          const Eigen::VectorXd& x);
Eigen::VectorXd cell_step_token(const RnnParams& p, const Eigen::VectorXd& state, int token);
Eigen::VectorXd cell_step_zero(const RnnParams& p, const Eigen::VectorXd& state);

double readout(const RnnParams& p, const Eigen::VectorXd& state);
Eigen::VectorXd one_hot(int token, int input_size);

struct SequenceRun {
  Eigen::MatrixXd trajectory;  // state_dim x L, trajectory.col(t) = state after token t
  Eigen::VectorXd logits;      // L
};

/// Runs the cell over a token sequence starting from h0.
/// Throws std::out_of_range for out-of-vocabulary ids.
SequenceRun run_sequence(const RnnParams& p, std::span<const int> tokens);

}  // namespace rnnscope
