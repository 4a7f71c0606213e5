#include "rnnscope/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "rnnscope/rng.hpp"

namespace rnnscope {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(BaselineVariant v) {
  switch (v) {
    case BaselineVariant::BagOfWords: return "bow";
    case BaselineVariant::ConvModifierWords: return "comw";
    case BaselineVariant::ConvBodEod: return "conv_bod_eod";
    case BaselineVariant::ConvModifierWordsLearned: return "comw_beta_mod";
    case BaselineVariant::ConvBodEodLearned: return "conv_bod_eod_beta";
    case BaselineVariant::Full: return "comw_beta_mod_bod_eod";
  }
  throw std::logic_error("unknown BaselineVariant");
}

BaselineVariant baseline_variant_from_string(const std::string& name) {
  for (BaselineVariant v : all_baseline_variants()) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown baseline variant: " + name);
}

const std::vector<BaselineVariant>& all_baseline_variants() {
  static const std::vector<BaselineVariant> kAll{
      BaselineVariant::BagOfWords,          BaselineVariant::ConvBodEod,
      BaselineVariant::ConvBodEodLearned,   BaselineVariant::ConvModifierWords,
      BaselineVariant::ConvModifierWordsLearned, BaselineVariant::Full,
  };
  return kAll;
}

bool BaselineSpec::has_word_modifiers() const {
  return variant == BaselineVariant::ConvModifierWords ||
         variant == BaselineVariant::ConvModifierWordsLearned ||
         variant == BaselineVariant::Full;
}

bool BaselineSpec::has_bod_eod() const {
  return variant == BaselineVariant::ConvBodEod ||
         variant == BaselineVariant::ConvBodEodLearned || variant == BaselineVariant::Full;
}

bool BaselineSpec::has_learned_modifier_weights() const {
  return variant == BaselineVariant::ConvModifierWordsLearned ||
         variant == BaselineVariant::Full;
}

bool BaselineSpec::has_learned_bod_eod_weights() const {
  return variant == BaselineVariant::ConvBodEodLearned || variant == BaselineVariant::Full;
}

long BaselineSpec::parameter_count() const {
  const long W = vocab_size;
  long count = W + 1;
  if (has_word_modifiers()) count += 2 * modifier_count();
  if (has_bod_eod()) count += 4;
  if (has_learned_modifier_weights()) count += static_cast<long>(weight_vector_count) * W;
  if (has_learned_bod_eod_weights()) count += 2 * W;
  return count;
}

void BaselineSpec::validate() const {
  if (vocab_size < 1) throw std::invalid_argument("BaselineSpec: vocab_size >= 1");
  for (int m : modifier_words) {
    if (m < 0 || m >= vocab_size) {
      throw std::invalid_argument("BaselineSpec: modifier word out of vocabulary");
    }
  }
  if (has_learned_modifier_weights() && weight_vector_count < 1) {
    throw std::invalid_argument("BaselineSpec: P must be >= 1 for learned variants");
  }
}

BaselineWeights BaselineWeights::init(const BaselineSpec& spec) {
  spec.validate();
  BaselineWeights w;
  w.beta = VectorXd::Zero(spec.vocab_size);
  w.bias = 0.0;
  const int M = spec.modifier_count();
  // Starting point: modest positive scaling, four-token scope.
  w.alpha = VectorXd::Constant(spec.has_word_modifiers() ? M : 0, 0.5);
  w.log_tau = VectorXd::Constant(spec.has_word_modifiers() ? M : 0, std::log(4.0));
  w.alpha_bod = w.alpha_eod = spec.has_bod_eod() ? 0.5 : 0.0;
  w.log_tau_bod = w.log_tau_eod = spec.has_bod_eod() ? std::log(4.0) : 0.0;
  w.beta_mod = MatrixXd::Zero(
      spec.vocab_size, spec.has_learned_modifier_weights() ? spec.weight_vector_count : 0);
  w.beta_bod = VectorXd::Zero(spec.has_learned_bod_eod_weights() ? spec.vocab_size : 0);
  w.beta_eod = VectorXd::Zero(spec.has_learned_bod_eod_weights() ? spec.vocab_size : 0);
  return w;
}

int bod_token(const BaselineSpec& spec) { return spec.vocab_size; }
int eod_token(const BaselineSpec& spec) { return spec.vocab_size + 1; }

std::vector<int> augment_tokens(const BaselineSpec& spec, const std::vector<int>& tokens) {
  if (!spec.has_bod_eod()) return tokens;
  std::vector<int> out;
  out.reserve(tokens.size() + 2);
  out.push_back(bod_token(spec));
  out.insert(out.end(), tokens.begin(), tokens.end());
  out.push_back(eod_token(spec));
  return out;
}

std::vector<double> modifier_indicator(const std::vector<int>& tokens, int modifier_word) {
  std::vector<double> mu(tokens.size(), 0.0);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] == modifier_word) mu[t] = 1.0;
  }
  return mu;
}

std::vector<double> conv_modifier_signal(const std::vector<double>& mu, double alpha,
                                         double tau, ConvDirection direction) {
  if (!(tau > 0.0)) throw std::invalid_argument("conv_modifier_signal: tau must be > 0");
  const std::size_t L = mu.size();
  std::vector<double> out(L, 0.0);
  const double decay = std::exp(-1.0 / tau);
  if (direction == ConvDirection::Causal) {
    // out[t] = decay * (alpha * mu[t-1] + out[t-1]); a modifier affects only
    // strictly subsequent positions.
    for (std::size_t t = 1; t < L; ++t) {
      out[t] = decay * (alpha * mu[t - 1] + out[t - 1]);
    }
  } else {
    for (std::size_t t = L; t-- > 0;) {
      if (t + 1 < L) out[t] = decay * (alpha * mu[t + 1] + out[t + 1]);
    }
  }
  return out;
}

namespace {

// Unit-alpha convolution u and its lag-weighted companion v, sharing support:
//   d conv / d alpha = u,   d conv / d tau = alpha / tau^2 * v.
void conv_pair(const std::vector<double>& mu, double tau, ConvDirection dir,
               std::vector<double>& u, std::vector<double>& v) {
  const std::size_t L = mu.size();
  u.assign(L, 0.0);
  v.assign(L, 0.0);
  const double decay = std::exp(-1.0 / tau);
  if (dir == ConvDirection::Causal) {
    for (std::size_t t = 1; t < L; ++t) {
      u[t] = decay * (mu[t - 1] + u[t - 1]);
      v[t] = decay * (mu[t - 1] + u[t - 1] + v[t - 1]);
    }
  } else {
    for (std::size_t t = L; t-- > 0;) {
      if (t + 1 < L) {
        u[t] = decay * (mu[t + 1] + u[t + 1]);
        v[t] = decay * (mu[t + 1] + u[t + 1] + v[t + 1]);
      }
    }
  }
}

struct FlatLayout {
  long beta = 0, bias = 0, alpha = 0, log_tau = 0, bodeod = 0, beta_mod = 0, beta_bod = 0,
       beta_eod = 0, total = 0;
};

FlatLayout layout(const BaselineSpec& spec) {
  FlatLayout l;
  long off = 0;
  l.beta = off;
  off += spec.vocab_size;
  l.bias = off;
  off += 1;
  const int M = spec.has_word_modifiers() ? spec.modifier_count() : 0;
  l.alpha = off;
  off += M;
  l.log_tau = off;
  off += M;
  l.bodeod = off;
  off += spec.has_bod_eod() ? 4 : 0;
  l.beta_mod = off;
  off += spec.has_learned_modifier_weights()
             ? static_cast<long>(spec.vocab_size) * spec.weight_vector_count
             : 0;
  l.beta_bod = off;
  off += spec.has_learned_bod_eod_weights() ? spec.vocab_size : 0;
  l.beta_eod = off;
  off += spec.has_learned_bod_eod_weights() ? spec.vocab_size : 0;
  l.total = off;
  return l;
}

}  // namespace

VectorXd flatten_baseline_weights(const BaselineSpec& spec, const BaselineWeights& w) {
  const FlatLayout l = layout(spec);
  VectorXd flat = VectorXd::Zero(l.total);
  flat.segment(l.beta, spec.vocab_size) = w.beta;
  flat[l.bias] = w.bias;
  if (spec.has_word_modifiers()) {
    flat.segment(l.alpha, w.alpha.size()) = w.alpha;
    flat.segment(l.log_tau, w.log_tau.size()) = w.log_tau;
  }
  if (spec.has_bod_eod()) {
    flat[l.bodeod + 0] = w.alpha_bod;
    flat[l.bodeod + 1] = w.log_tau_bod;
    flat[l.bodeod + 2] = w.alpha_eod;
    flat[l.bodeod + 3] = w.log_tau_eod;
  }
  if (spec.has_learned_modifier_weights()) {
    flat.segment(l.beta_mod, w.beta_mod.size()) =
        Eigen::Map<const VectorXd>(w.beta_mod.data(), w.beta_mod.size());
  }
  if (spec.has_learned_bod_eod_weights()) {
    flat.segment(l.beta_bod, spec.vocab_size) = w.beta_bod;
    flat.segment(l.beta_eod, spec.vocab_size) = w.beta_eod;
  }
  return flat;
}

void unflatten_baseline_weights(const BaselineSpec& spec, const VectorXd& flat,
                                BaselineWeights& w) {
  const FlatLayout l = layout(spec);
  if (flat.size() != l.total) {
    throw std::invalid_argument("unflatten_baseline_weights: size mismatch");
  }
  w.beta = flat.segment(l.beta, spec.vocab_size);
  w.bias = flat[l.bias];
  const int M = spec.has_word_modifiers() ? spec.modifier_count() : 0;
  w.alpha = flat.segment(l.alpha, M);
  w.log_tau = flat.segment(l.log_tau, M);
  if (spec.has_bod_eod()) {
    w.alpha_bod = flat[l.bodeod + 0];
    w.log_tau_bod = flat[l.bodeod + 1];
    w.alpha_eod = flat[l.bodeod + 2];
    w.log_tau_eod = flat[l.bodeod + 3];
  }
  if (spec.has_learned_modifier_weights()) {
    w.beta_mod.resize(spec.vocab_size, spec.weight_vector_count);
    Eigen::Map<VectorXd>(w.beta_mod.data(), w.beta_mod.size()) =
        flat.segment(l.beta_mod, w.beta_mod.size());
  } else {
    w.beta_mod.resize(spec.vocab_size, 0);
  }
  if (spec.has_learned_bod_eod_weights()) {
    w.beta_bod = flat.segment(l.beta_bod, spec.vocab_size);
    w.beta_eod = flat.segment(l.beta_eod, spec.vocab_size);
  } else {
    w.beta_bod.resize(0);
    w.beta_eod.resize(0);
  }
}

namespace {

struct ExampleSignals {
  std::vector<int> timeline;             // augmented tokens
  std::vector<double> conv_sum;          // sum over word modifiers of conv_m
  std::vector<std::vector<double>> u_m;  // unit-alpha conv per modifier
  std::vector<std::vector<double>> v_m;  // lag-weighted companion
  std::vector<double> c_bod, u_bod, v_bod;
  std::vector<double> c_eod, u_eod, v_eod;
};

ExampleSignals compute_signals(const BaselineSpec& spec, const BaselineWeights& w,
                               const std::vector<int>& tokens, bool with_grads) {
  ExampleSignals s;
  s.timeline = augment_tokens(spec, tokens);
  const std::size_t L = s.timeline.size();
  if (spec.has_word_modifiers()) {
    s.conv_sum.assign(L, 0.0);
    const int M = spec.modifier_count();
    if (with_grads) {
      s.u_m.resize(static_cast<std::size_t>(M));
      s.v_m.resize(static_cast<std::size_t>(M));
    }
    for (int m = 0; m < M; ++m) {
      const auto mu =
          modifier_indicator(s.timeline, spec.modifier_words[static_cast<std::size_t>(m)]);
      const double tau = std::exp(w.log_tau[m]);
      if (with_grads) {
        conv_pair(mu, tau, ConvDirection::Causal, s.u_m[static_cast<std::size_t>(m)],
                  s.v_m[static_cast<std::size_t>(m)]);
        for (std::size_t t = 0; t < L; ++t) {
          s.conv_sum[t] += w.alpha[m] * s.u_m[static_cast<std::size_t>(m)][t];
        }
      } else {
        const auto conv = conv_modifier_signal(mu, w.alpha[m], tau, ConvDirection::Causal);
        for (std::size_t t = 0; t < L; ++t) s.conv_sum[t] += conv[t];
      }
    }
  }
  if (spec.has_bod_eod()) {
    const auto mu_bod = modifier_indicator(s.timeline, bod_token(spec));
    const auto mu_eod = modifier_indicator(s.timeline, eod_token(spec));
    const double tau_bod = std::exp(w.log_tau_bod);
    const double tau_eod = std::exp(w.log_tau_eod);
    if (with_grads) {
      conv_pair(mu_bod, tau_bod, ConvDirection::Causal, s.u_bod, s.v_bod);
      conv_pair(mu_eod, tau_eod, ConvDirection::Acausal, s.u_eod, s.v_eod);
      s.c_bod.resize(L);
      s.c_eod.resize(L);
      for (std::size_t t = 0; t < L; ++t) {
        s.c_bod[t] = w.alpha_bod * s.u_bod[t];
        s.c_eod[t] = w.alpha_eod * s.u_eod[t];
      }
    } else {
      s.c_bod = conv_modifier_signal(mu_bod, w.alpha_bod, tau_bod, ConvDirection::Causal);
      s.c_eod = conv_modifier_signal(mu_eod, w.alpha_eod, tau_eod, ConvDirection::Acausal);
    }
  }
  return s;
}

// Per-position weight the convolution scales: shared beta for the plain
// variants, learned vectors for the +beta variants. Pseudo-tokens weigh 0.
inline double mod_weight(const BaselineSpec& spec, const BaselineWeights& w, int token) {
  if (token >= spec.vocab_size) return 0.0;
  if (spec.has_learned_modifier_weights()) return w.beta_mod.row(token).sum();
  return w.beta[token];
}

inline double bod_weight(const BaselineSpec& spec, const BaselineWeights& w, int token) {
  if (token >= spec.vocab_size) return 0.0;
  if (spec.has_learned_bod_eod_weights()) return w.beta_bod[token];
  return w.beta[token];
}

inline double eod_weight(const BaselineSpec& spec, const BaselineWeights& w, int token) {
  if (token >= spec.vocab_size) return 0.0;
  if (spec.has_learned_bod_eod_weights()) return w.beta_eod[token];
  return w.beta[token];
}

double predict_with_signals(const BaselineSpec& spec, const BaselineWeights& w,
                            const ExampleSignals& s) {
  // Base word sum accumulated in word-id order: bitwise order-invariant.
  std::vector<int> counts(static_cast<std::size_t>(spec.vocab_size), 0);
  for (int tok : s.timeline) {
    if (tok < spec.vocab_size) counts[static_cast<std::size_t>(tok)] += 1;
  }
  double z = w.bias;
  for (int word = 0; word < spec.vocab_size; ++word) {
    if (counts[static_cast<std::size_t>(word)] > 0) {
      z += counts[static_cast<std::size_t>(word)] * w.beta[word];
    }
  }
  const std::size_t L = s.timeline.size();
  if (spec.has_word_modifiers()) {
    for (std::size_t t = 0; t < L; ++t) {
      if (s.conv_sum[t] != 0.0) z += s.conv_sum[t] * mod_weight(spec, w, s.timeline[t]);
    }
  }
  if (spec.has_bod_eod()) {
    for (std::size_t t = 0; t < L; ++t) {
      if (s.c_bod[t] != 0.0) z += s.c_bod[t] * bod_weight(spec, w, s.timeline[t]);
      if (s.c_eod[t] != 0.0) z += s.c_eod[t] * eod_weight(spec, w, s.timeline[t]);
    }
  }
  return z;
}

}  // namespace

double predict(const BaselineSpec& spec, const BaselineWeights& weights,
               const std::vector<int>& tokens) {
  for (int tok : tokens) {
    if (tok < 0 || tok >= spec.vocab_size) {
      throw std::out_of_range("predict: token out of vocabulary");
    }
  }
  return predict_with_signals(spec, weights, compute_signals(spec, weights, tokens, false));
}

BaselineLossGrads baseline_loss_grads(const BaselineSpec& spec, const BaselineWeights& w,
                                      const std::vector<const LabeledExample*>& batch,
                                      double l2_penalty) {
  if (batch.empty()) throw std::invalid_argument("baseline_loss_grads: empty batch");
  const FlatLayout l = layout(spec);
  BaselineLossGrads out;
  out.grad = VectorXd::Zero(l.total);
  const double scale = 1.0 / static_cast<double>(batch.size());

  for (const LabeledExample* ex : batch) {
    const ExampleSignals s = compute_signals(spec, w, ex->tokens, true);
    const double z = predict_with_signals(spec, w, s);
    const double y = static_cast<double>(ex->label);
    out.loss += (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)))) * scale;
    const double dz = (1.0 / (1.0 + std::exp(-z)) - y) * scale;

    const std::size_t L = s.timeline.size();
    for (std::size_t t = 0; t < L; ++t) {
      const int tok = s.timeline[t];
      if (tok < spec.vocab_size) out.grad[l.beta + tok] += dz;
    }
    out.grad[l.bias] += dz;

    if (spec.has_word_modifiers()) {
      const int M = spec.modifier_count();
      for (std::size_t t = 0; t < L; ++t) {
        const int tok = s.timeline[t];
        const double g = mod_weight(spec, w, tok);
        if (s.conv_sum[t] != 0.0 && tok < spec.vocab_size) {
          if (spec.has_learned_modifier_weights()) {
            for (int p = 0; p < spec.weight_vector_count; ++p) {
              out.grad[l.beta_mod + static_cast<long>(p) * spec.vocab_size + tok] +=
                  dz * s.conv_sum[t];
            }
          } else {
            out.grad[l.beta + tok] += dz * s.conv_sum[t];
          }
        }
        if (g != 0.0) {
          for (int m = 0; m < M; ++m) {
            const double u = s.u_m[static_cast<std::size_t>(m)][t];
            if (u != 0.0) out.grad[l.alpha + m] += dz * g * u;
            const double vv = s.v_m[static_cast<std::size_t>(m)][t];
            if (vv != 0.0) {
              const double tau = std::exp(w.log_tau[m]);
              out.grad[l.log_tau + m] += dz * g * w.alpha[m] * vv / tau;
            }
          }
        }
      }
    }
    if (spec.has_bod_eod()) {
      const double tau_bod = std::exp(w.log_tau_bod);
      const double tau_eod = std::exp(w.log_tau_eod);
      for (std::size_t t = 0; t < L; ++t) {
        const int tok = s.timeline[t];
        if (tok >= spec.vocab_size) continue;
        const double gb = bod_weight(spec, w, tok);
        const double ge = eod_weight(spec, w, tok);
        if (s.c_bod[t] != 0.0) {
          if (spec.has_learned_bod_eod_weights()) {
            out.grad[l.beta_bod + tok] += dz * s.c_bod[t];
          } else {
            out.grad[l.beta + tok] += dz * s.c_bod[t];
          }
        }
        if (s.c_eod[t] != 0.0) {
          if (spec.has_learned_bod_eod_weights()) {
            out.grad[l.beta_eod + tok] += dz * s.c_eod[t];
          } else {
            out.grad[l.beta + tok] += dz * s.c_eod[t];
          }
        }
        if (gb != 0.0 && s.u_bod[t] != 0.0) {
          out.grad[l.bodeod + 0] += dz * gb * s.u_bod[t];
          out.grad[l.bodeod + 1] += dz * gb * w.alpha_bod * s.v_bod[t] / tau_bod;
        }
        if (ge != 0.0 && s.u_eod[t] != 0.0) {
          out.grad[l.bodeod + 2] += dz * ge * s.u_eod[t];
          out.grad[l.bodeod + 3] += dz * ge * w.alpha_eod * s.v_eod[t] / tau_eod;
        }
      }
    }
  }

  if (l2_penalty > 0.0) {
    // Penalty on the weight vectors only; filter parameters and bias are free.
    out.loss += l2_penalty * (w.beta.squaredNorm() + w.beta_mod.squaredNorm() +
                              w.beta_bod.squaredNorm() + w.beta_eod.squaredNorm());
    out.grad.segment(l.beta, spec.vocab_size) += 2.0 * l2_penalty * w.beta;
    if (spec.has_learned_modifier_weights()) {
      out.grad.segment(l.beta_mod, w.beta_mod.size()) +=
          2.0 * l2_penalty *
          Eigen::Map<const VectorXd>(w.beta_mod.data(), w.beta_mod.size());
    }
    if (spec.has_learned_bod_eod_weights()) {
      out.grad.segment(l.beta_bod, spec.vocab_size) += 2.0 * l2_penalty * w.beta_bod;
      out.grad.segment(l.beta_eod, spec.vocab_size) += 2.0 * l2_penalty * w.beta_eod;
    }
  }
  if (!std::isfinite(out.loss)) {
    throw std::runtime_error("baseline_loss_grads: non-finite loss");
  }
  return out;
}

double baseline_accuracy(const BaselineSpec& spec, const BaselineWeights& w,
                         const LabeledCorpus& corpus) {
  if (corpus.examples.empty()) {
    throw std::invalid_argument("baseline_accuracy: empty corpus");
  }
  int correct = 0;
  for (const auto& ex : corpus.examples) {
    const double z = predict(spec, w, ex.tokens);
    correct += ((z > 0.0) == (ex.label == 1)) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.examples.size());
}

BaselineTrainResult train_baseline(const BaselineSpec& spec, const LabeledCorpus& train,
                                   const LabeledCorpus& val, const LabeledCorpus& test,
                                   const BaselineTrainConfig& cfg) {
  spec.validate();
  if (train.examples.empty() || val.examples.empty()) {
    throw std::invalid_argument("train_baseline: empty corpus");
  }
  BaselineWeights w = BaselineWeights::init(spec);
  VectorXd x = flatten_baseline_weights(spec, w);
  VectorXd m = VectorXd::Zero(x.size()), v = VectorXd::Zero(x.size());
  long step = 0;
  double lr = cfg.learning_rate;
  Rng rng(Rng::mix(cfg.seed, 0xba5e));
  std::vector<std::size_t> order(train.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_val = -1.0;
  VectorXd best_x = x;
  int epochs_since_best = 0;
  std::vector<LabeledExample> dropped;  // dropout scratch

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const LabeledExample*> batch;
      dropped.clear();
      dropped.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const LabeledExample& ex = train.examples[order[k]];
        if (cfg.input_dropout > 0.0) {
          LabeledExample copy = ex;
          for (auto& tok : copy.tokens) {
            if (rng.uniform() < cfg.input_dropout) tok = cfg.pad_token;
          }
          dropped.push_back(std::move(copy));
        }
      }
      if (cfg.input_dropout > 0.0) {
        for (const auto& ex : dropped) batch.push_back(&ex);
      } else {
        for (std::size_t k = start; k < end; ++k) {
          batch.push_back(&train.examples[order[k]]);
        }
      }
      unflatten_baseline_weights(spec, x, w);
      const BaselineLossGrads lg = baseline_loss_grads(spec, w, batch, cfg.l2_penalty);
      step += 1;
      m = 0.9 * m + 0.1 * lg.grad;
      v = 0.999 * v + 0.001 * lg.grad.cwiseProduct(lg.grad);
      const double mc = 1.0 - std::pow(0.9, static_cast<double>(step));
      const double vc = 1.0 - std::pow(0.999, static_cast<double>(step));
      x.array() -= lr * (m.array() / mc) / ((v.array() / vc).sqrt() + 1e-8);
    }
    lr *= cfg.lr_decay;
    unflatten_baseline_weights(spec, x, w);
    const double val_acc = baseline_accuracy(spec, w, val);
    if (val_acc > best_val) {
      best_val = val_acc;
      best_x = x;
      epochs_since_best = 0;
    } else {
      epochs_since_best += 1;
    }
    if (epochs_since_best > cfg.patience) break;
  }

  BaselineTrainResult result;
  unflatten_baseline_weights(spec, best_x, result.weights);
  result.train_accuracy = baseline_accuracy(spec, result.weights, train);
  result.val_accuracy = best_val;
  result.test_accuracy =
      test.examples.empty() ? 0.0 : baseline_accuracy(spec, result.weights, test);
  return result;
}

BaselineSearchResult search_baseline(const BaselineSpec& spec, const LabeledCorpus& train,
                                     const LabeledCorpus& val, const LabeledCorpus& test,
                                     const BaselineSearchConfig& cfg) {
  if (cfg.n_draws < 1) throw std::invalid_argument("search_baseline: n_draws >= 1");
  BaselineSearchResult best;
  double best_val = -1.0;
  for (int draw = 0; draw < cfg.n_draws; ++draw) {
    Rng rng(Rng::mix(cfg.base.seed, 0x5ea2c4 + static_cast<std::uint64_t>(draw)));
    BaselineTrainConfig tc = cfg.base;
    tc.learning_rate = std::exp(rng.uniform(std::log(cfg.lr_min), std::log(cfg.lr_max)));
    tc.lr_decay = rng.uniform(cfg.decay_min, cfg.decay_max);
    // Half the draws run unregularized.
    tc.l2_penalty = rng.uniform() < 0.5
                        ? 0.0
                        : std::exp(rng.uniform(std::log(cfg.l2_min), std::log(cfg.l2_max)));
    tc.input_dropout = cfg.dropout_choices[rng.below(cfg.dropout_choices.size())];
    tc.seed = Rng::mix(cfg.base.seed, static_cast<std::uint64_t>(draw));
    const BaselineTrainResult r = train_baseline(spec, train, val, test, tc);
    if (r.val_accuracy > best_val) {
      best_val = r.val_accuracy;
      best.best = r;
      best.best_config = tc;
      best.best_draw = draw;
    }
  }
  return best;
}

std::vector<int> extract_modifier_list(const VectorXd& scores, int m) {
  if (m < 0 || m > scores.size()) {
    throw std::invalid_argument("extract_modifier_list: M out of range");
  }
  std::vector<int> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  order.resize(static_cast<std::size_t>(m));
  return order;
}

void save_baseline(const std::filesystem::path& path, const BaselineSpec& spec,
                   const BaselineWeights& w) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["variant"] = to_string(spec.variant);
  doc["vocab_size"] = spec.vocab_size;
  doc["modifier_words"] = spec.modifier_words;
  doc["weight_vector_count"] = spec.weight_vector_count;
  const VectorXd flat = flatten_baseline_weights(spec, w);
  std::vector<double> values(flat.data(), flat.data() + flat.size());
  doc["weights"] = values;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << doc.dump(1) << '\n';
}

std::pair<BaselineSpec, BaselineWeights> load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  nlohmann::json doc;
  in >> doc;
  BaselineSpec spec;
  spec.variant = baseline_variant_from_string(doc.at("variant").get<std::string>());
  spec.vocab_size = doc.at("vocab_size").get<int>();
  spec.modifier_words = doc.at("modifier_words").get<std::vector<int>>();
  spec.weight_vector_count = doc.at("weight_vector_count").get<int>();
  const auto values = doc.at("weights").get<std::vector<double>>();
  VectorXd flat =
      Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  BaselineWeights w;
  unflatten_baseline_weights(spec, flat, w);
  return {spec, w};
}

}  // namespace rnnscope
