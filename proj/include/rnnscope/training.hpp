#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rnnscope/cells.hpp"
#include "rnnscope/toy_language.hpp"

namespace rnnscope {

enum class LossKind { PerStepMse, FinalBce };

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // multiplicative, applied per epoch
  int batch_size = 64;
  int max_epochs = 100;
  double grad_clip_norm = 10.0;
  double l2_penalty = 0.0;      // applied to W, U and readout weights
  double input_dropout = 0.0;   // probability of replacing a token with pad
  std::uint64_t seed = 0;
  int patience = 5;             // early stopping on the validation metric
  double stop_at_val_metric = 0.0;  // stop once val loss falls below (0 = off)
  bool verbose = false;

  void validate() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
  static AdamState zeros(Eigen::Index n);
};

/// Standard bias-corrected Adam update, in place.
void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& cfg);

/// A batch of equal-length token sequences with either per-step regression
/// targets or a final binary label, depending on the loss kind.
struct Batch {
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<double>> step_targets;  // PerStepMse
  std::vector<int> labels;                        // FinalBce
};

struct LossAndGrads {
  double loss = 0.0;
  ParamGrads grads;
};

struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Exact gradients of the mean batch loss (plus the L2 term) with respect to
/// every parameter including h0. Throws TrainingDivergence on NaN loss.
LossAndGrads bptt_gradients(const RnnParams& params, const Batch& batch, LossKind kind,
                            double l2_penalty);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;  // classification mode only
};

struct ToyTrainResult {
  RnnParams params;
  std::vector<EpochStats> curve;
  double val_mse = 0.0;
};

struct ClassifierTrainResult {
  RnnParams params;
  std::vector<EpochStats> curve;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Per-step least-squares regression on the toy task.
ToyTrainResult train_toy(CellKind kind, int hidden_size, const ToyCorpus& train,
                         const ToyCorpus& val, const TrainConfig& cfg);

/// Final-logit sigmoid cross-entropy classification.
ClassifierTrainResult train_classifier(CellKind kind, int hidden_size,
                                       const LabeledCorpus& train, const LabeledCorpus& val,
                                       const LabeledCorpus& test, const TrainConfig& cfg);

/// Final logits for a set of sequences, evaluated in column batches.
Eigen::VectorXd final_logits(const RnnParams& params,
                             const std::vector<std::vector<int>>& sequences);

double evaluate_accuracy(const RnnParams& params, const LabeledCorpus& corpus);
/// Accuracy with the trained initial state replaced by `h0`.
double evaluate_accuracy_with_h0(const RnnParams& params, const LabeledCorpus& corpus,
                                 const Eigen::VectorXd& h0);
double evaluate_mse(const RnnParams& params, const ToyCorpus& corpus);

/// Accuracy on token-shuffled copies of each example (labels unchanged).
double shuffle_eval(const RnnParams& params, const LabeledCorpus& corpus,
                    std::uint64_t seed);

}  // namespace rnnscope
