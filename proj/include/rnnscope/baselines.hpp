#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rnnscope/toy_language.hpp"

namespace rnnscope {

/// The six augmented Bag-of-Words variants. Every model is the base word-sum
/// plus optional exponentially-decaying modifier convolutions that scale
/// either the shared weights or dedicated learned weight vectors.
enum class BaselineVariant {
  BagOfWords,
  ConvModifierWords,         // modifiers scale the shared beta
  ConvBodEod,                // BOD/EOD pseudo-tokens scale the shared beta
  ConvModifierWordsLearned,  // modifiers scale P learned weight vectors
  ConvBodEodLearned,         // BOD/EOD scale two learned weight vectors
  Full,                      // both modifier and BOD/EOD learned weights
};

std::string to_string(BaselineVariant v);
BaselineVariant baseline_variant_from_string(const std::string& name);
const std::vector<BaselineVariant>& all_baseline_variants();

struct BaselineSpec {
  BaselineVariant variant = BaselineVariant::BagOfWords;
  int vocab_size = 0;               // W
  std::vector<int> modifier_words;  // M word ids (modifier-convolution variants)
  int weight_vector_count = 3;      // P (learned-modifier variants)

  bool has_word_modifiers() const;
  bool has_bod_eod() const;
  bool has_learned_modifier_weights() const;
  bool has_learned_bod_eod_weights() const;
  int modifier_count() const { return static_cast<int>(modifier_words.size()); }

  /// Trainable scalar count; matches the per-variant closed forms
  /// (W+1, W+1+2M, W+1+4, W+1+2M+PW, W+1+4+2W, W+1+4+2W+2M+PW).
  long parameter_count() const;

  void validate() const;
};

struct BaselineWeights {
  Eigen::VectorXd beta;  // W
  double bias = 0.0;
  // Filter parameters per modifier word; tau is stored as log(tau) so
  // positivity is structural.
  Eigen::VectorXd alpha;    // M
  Eigen::VectorXd log_tau;  // M
  double alpha_bod = 0.0, log_tau_bod = 0.0;
  double alpha_eod = 0.0, log_tau_eod = 0.0;
  Eigen::MatrixXd beta_mod;            // W x P
  Eigen::VectorXd beta_bod, beta_eod;  // W

  static BaselineWeights init(const BaselineSpec& spec);
};

/// Pseudo-token ids on the augmented timeline.
int bod_token(const BaselineSpec& spec);  // == W
int eod_token(const BaselineSpec& spec);  // == W + 1

/// [BOD] + tokens + [EOD] for BOD/EOD variants, otherwise a copy.
std::vector<int> augment_tokens(const BaselineSpec& spec, const std::vector<int>& tokens);

/// mu[t] = 1 iff tokens[t] == modifier_word.
std::vector<double> modifier_indicator(const std::vector<int>& tokens, int modifier_word);

enum class ConvDirection { Causal, Acausal };

/// Exponential-filter convolution with strictly off-position support:
/// causal covers subsequent positions (out[t] = sum_{s>=1} alpha e^{-s/tau}
/// mu[t-s]), acausal the mirror (preceding positions). tau must be > 0.
std::vector<double> conv_modifier_signal(const std::vector<double>& mu, double alpha,
                                         double tau, ConvDirection direction);

/// Variant logit for one example. The base word sum is accumulated in word-id
/// order (not position order), so it is bitwise order-invariant.
double predict(const BaselineSpec& spec, const BaselineWeights& weights,
               const std::vector<int>& tokens);

struct BaselineTrainConfig {
  double learning_rate = 5e-2;
  double lr_decay = 0.99;
  int batch_size = 64;
  int max_epochs = 150;
  double l2_penalty = 0.0;       // on the beta weight vectors
  double input_dropout = 0.0;    // replacement with the pad token
  int pad_token = 7;
  std::uint64_t seed = 0;
  int patience = 15;
};

struct BaselineTrainResult {
  BaselineWeights weights;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Sigmoid cross-entropy with Adam on all weights (analytic gradients).
BaselineTrainResult train_baseline(const BaselineSpec& spec, const LabeledCorpus& train,
                                   const LabeledCorpus& val, const LabeledCorpus& test,
                                   const BaselineTrainConfig& cfg);

struct BaselineSearchConfig {
  int n_draws = 20;
  double lr_min = 1e-2, lr_max = 2e-1;           // log-uniform
  double decay_min = 0.97, decay_max = 1.0;      // uniform
  double l2_min = 1e-7, l2_max = 1e-3;           // log-uniform; draw may be 0
  std::vector<double> dropout_choices{0.0, 0.1, 0.2};
  BaselineTrainConfig base;  // epochs, batch, pad token, patience
};

struct BaselineSearchResult {
  BaselineTrainResult best;
  BaselineTrainConfig best_config;
  int best_draw = 0;
};

/// Random hyperparameter search selecting on validation accuracy
/// (deterministic; ties keep the earliest draw).
BaselineSearchResult search_baseline(const BaselineSpec& spec, const LabeledCorpus& train,
                                     const LabeledCorpus& val, const LabeledCorpus& test,
                                     const BaselineSearchConfig& cfg);

/// Loss and analytic gradients for one batch (exposed for gradient checks).
struct BaselineLossGrads {
  double loss = 0.0;
  Eigen::VectorXd grad;  // flattened like flatten_baseline_weights
};
Eigen::VectorXd flatten_baseline_weights(const BaselineSpec& spec,
                                         const BaselineWeights& w);
void unflatten_baseline_weights(const BaselineSpec& spec, const Eigen::VectorXd& flat,
                                BaselineWeights& w);
BaselineLossGrads baseline_loss_grads(const BaselineSpec& spec, const BaselineWeights& w,
                                      const std::vector<const LabeledExample*>& batch,
                                      double l2_penalty);

double baseline_accuracy(const BaselineSpec& spec, const BaselineWeights& w,
                         const LabeledCorpus& corpus);

/// Top-M word ids by the given scores (ties by word id). M may be 0.
std::vector<int> extract_modifier_list(const Eigen::VectorXd& scores, int m);

void save_baseline(const std::filesystem::path& path, const BaselineSpec& spec,
                   const BaselineWeights& w);
std::pair<BaselineSpec, BaselineWeights> load_baseline(const std::filesystem::path& path);

}  // namespace rnnscope
