#include "rnnscope/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>

#include "rnnscope/rng.hpp"

namespace rnnscope {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainConfig::validate() const {
  if (learning_rate < 0 || lr_decay < 0 || grad_clip_norm < 0 || l2_penalty < 0 ||
      input_dropout < 0 || input_dropout > 1) {
    throw std::invalid_argument("TrainConfig: rates must be >= 0 (dropout in [0,1])");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs >= 1");
}

AdamState AdamState::zeros(Eigen::Index n) {
  AdamState s;
  s.m = VectorXd::Zero(n);
  s.v = VectorXd::Zero(n);
  s.t = 0;
  return s;
}

void adam_step(VectorXd& x, const VectorXd& grad, AdamState& state, const AdamConfig& cfg) {
  if (grad.size() != x.size() || state.m.size() != x.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  x.array() -= cfg.lr * (state.m.array() / m_corr) /
               ((state.v.array() / v_corr).sqrt() + cfg.eps);
}

namespace {

double l2_term(const RnnParams& p) {
  double s = 0.0;
  for (const auto& m : p.W) s += m.squaredNorm();
  for (const auto& m : p.U) s += m.squaredNorm();
  s += p.readout_w.squaredNorm();
  return s;
}

void add_l2_grads(const RnnParams& p, double l2, ParamGrads& g) {
  if (l2 == 0.0) return;
  for (std::size_t k = 0; k < p.W.size(); ++k) g.W[k] += 2.0 * l2 * p.W[k];
  for (std::size_t k = 0; k < p.U.size(); ++k) g.U[k] += 2.0 * l2 * p.U[k];
  g.readout_w += 2.0 * l2 * p.readout_w;
}

}  // namespace

LossAndGrads bptt_gradients(const RnnParams& params, const Batch& batch, LossKind kind,
                            double l2_penalty) {
  const auto B = static_cast<Eigen::Index>(batch.tokens.size());
  if (B == 0) throw std::invalid_argument("bptt_gradients: empty batch");
  const std::size_t L = batch.tokens.front().size();
  for (const auto& seq : batch.tokens) {
    if (seq.size() != L) {
      throw std::invalid_argument("bptt_gradients: sequences must share a length");
    }
  }
  if (kind == LossKind::PerStepMse) {
    if (batch.step_targets.size() != batch.tokens.size()) {
      throw std::invalid_argument("bptt_gradients: missing step targets");
    }
    for (const auto& t : batch.step_targets) {
      if (t.size() != L) throw std::invalid_argument("bptt_gradients: target length");
    }
  } else if (batch.labels.size() != batch.tokens.size()) {
    throw std::invalid_argument("bptt_gradients: missing labels");
  }
  const int N = params.hidden_size;

  // Forward with cached activations.
  std::vector<MatrixXd> states(L + 1);
  std::vector<StepCache> caches(L);
  std::vector<std::vector<int>> step_tokens(L, std::vector<int>(static_cast<std::size_t>(B)));
  states[0] = params.h0.replicate(1, B);
  for (std::size_t t = 0; t < L; ++t) {
    for (Eigen::Index j = 0; j < B; ++j) {
      step_tokens[t][static_cast<std::size_t>(j)] =
          batch.tokens[static_cast<std::size_t>(j)][t];
    }
    step_batch(params, states[t], BatchInput::one_hot(step_tokens[t]), states[t + 1],
               &caches[t]);
  }

  LossAndGrads out;
  out.grads = ParamGrads::zeros_like(params);
  double loss = 0.0;
  MatrixXd dlogits = MatrixXd::Zero(static_cast<Eigen::Index>(L), B);
  if (kind == LossKind::PerStepMse) {
    const double scale = 1.0 / (static_cast<double>(L) * static_cast<double>(B));
    for (std::size_t t = 0; t < L; ++t) {
      for (Eigen::Index j = 0; j < B; ++j) {
        const double logit =
            params.readout_w.dot(states[t + 1].col(j).head(N)) + params.readout_b;
        const double err = logit - batch.step_targets[static_cast<std::size_t>(j)][t];
        loss += err * err * scale;
        dlogits(static_cast<Eigen::Index>(t), j) = 2.0 * err * scale;
      }
    }
  } else {
    const double scale = 1.0 / static_cast<double>(B);
    for (Eigen::Index j = 0; j < B; ++j) {
      const double z = params.readout_w.dot(states[L].col(j).head(N)) + params.readout_b;
      const double y = static_cast<double>(batch.labels[static_cast<std::size_t>(j)]);
      // Stable sigmoid cross-entropy: max(z,0) - z*y + log(1 + exp(-|z|)).
      loss += (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)))) * scale;
      const double sig = 1.0 / (1.0 + std::exp(-z));
      dlogits(static_cast<Eigen::Index>(L) - 1, j) = (sig - y) * scale;
    }
  }
  loss += l2_penalty * l2_term(params);
  if (!std::isfinite(loss)) {
    throw TrainingDivergence("bptt_gradients: non-finite loss");
  }
  out.loss = loss;

  // Backward through time.
  MatrixXd dstate = MatrixXd::Zero(params.state_dim(), B);
  MatrixXd dprev;
  for (std::size_t t = L; t-- > 0;) {
    const auto drow = dlogits.row(static_cast<Eigen::Index>(t));
    if (drow.cwiseAbs().maxCoeff() > 0.0) {
      dstate.topRows(N).noalias() += params.readout_w * drow;
      out.grads.readout_w.noalias() += states[t + 1].topRows(N) * drow.transpose();
      out.grads.readout_b += drow.sum();
    }
    step_backward(params, states[t], BatchInput::one_hot(step_tokens[t]), states[t + 1],
                  caches[t], dstate, dprev, &out.grads);
    dstate.swap(dprev);
  }
  out.grads.h0 += dstate.rowwise().sum();
  add_l2_grads(params, l2_penalty, out.grads);
  return out;
}

namespace {

void clip_gradient(VectorXd& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = g.norm();
  if (n > max_norm) g *= max_norm / n;
}

std::vector<int> apply_dropout(const std::vector<int>& tokens, double rate, int pad_token,
                               Rng& rng) {
  if (rate <= 0.0) return tokens;
  std::vector<int> out = tokens;
  for (auto& t : out) {
    if (rng.uniform() < rate) t = pad_token;
  }
  return out;
}

// Shared minibatch Adam loop for both regimes.
struct LoopCallbacks {
  std::function<Batch(const std::vector<std::size_t>&, Rng&)> make_batch;
  // Returns (early-stopping metric, accuracy-for-curve); lower metric is better.
  std::function<std::pair<double, double>(const RnnParams&)> validate;
  std::size_t n_examples = 0;
  LossKind loss_kind = LossKind::PerStepMse;
};

struct LoopResult {
  RnnParams params;
  std::vector<EpochStats> curve;
  double best_val = 0.0;
};

LoopResult run_training_loop(RnnParams params, const TrainConfig& cfg,
                             const LoopCallbacks& cb) {
  cfg.validate();
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.learning_rate;
  AdamState adam = AdamState::zeros(param_count(params));
  Rng rng(Rng::mix(cfg.seed, 0xbeef));

  std::vector<std::size_t> order(cb.n_examples);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double initial_loss = -1.0;
  double best_val = std::numeric_limits<double>::infinity();
  RnnParams best_params = params;
  int epochs_since_best = 0;
  LoopResult result;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    // Deterministic shuffle of the example order.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(end));
      const Batch batch = cb.make_batch(idx, rng);
      LossAndGrads lg = bptt_gradients(params, batch, cb.loss_kind, cfg.l2_penalty);
      if (initial_loss < 0.0) initial_loss = lg.loss;
      if (!std::isfinite(lg.loss) || lg.loss > 10.0 * initial_loss + 1e3) {
        throw TrainingDivergence("training diverged at epoch " + std::to_string(epoch) +
                                 " (loss " + std::to_string(lg.loss) + ")");
      }
      epoch_loss += lg.loss;
      n_batches += 1;
      VectorXd g = flatten_grads(lg.grads);
      clip_gradient(g, cfg.grad_clip_norm);
      VectorXd x = flatten_params(params);
      adam_step(x, g, adam, adam_cfg);
      unflatten_params(x, params);
    }
    adam_cfg.lr *= cfg.lr_decay;

    const auto [val_loss, val_acc] = cb.validate(params);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = n_batches ? epoch_loss / static_cast<double>(n_batches) : 0.0;
    stats.val_loss = val_loss;
    stats.val_accuracy = val_acc;
    result.curve.push_back(stats);
    if (cfg.verbose) {
      std::fprintf(stderr, "epoch %3d  train %.5f  val %.5f  acc %.4f\n", epoch,
                   stats.train_loss, val_loss, val_acc);
    }

    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = params;
      epochs_since_best = 0;
    } else {
      epochs_since_best += 1;
    }
    if (cfg.stop_at_val_metric > 0.0 && val_loss < cfg.stop_at_val_metric) break;
    if (epochs_since_best > cfg.patience) break;
  }
  result.params = std::move(best_params);
  result.best_val = best_val;
  return result;
}

}  // namespace

ToyTrainResult train_toy(CellKind kind, int hidden_size, const ToyCorpus& train,
                         const ToyCorpus& val, const TrainConfig& cfg) {
  if (train.examples.empty() || val.examples.empty()) {
    throw std::invalid_argument("train_toy: empty corpus");
  }
  const ToyVocab vocab = build_toy_vocab();
  RnnParams params = init_params(kind, hidden_size, vocab.size(), cfg.seed, vocab.pad_id());
  const int pad = vocab.pad_id();

  LoopCallbacks cb;
  cb.n_examples = train.examples.size();
  cb.loss_kind = LossKind::PerStepMse;
  cb.make_batch = [&](const std::vector<std::size_t>& idx, Rng& rng) {
    Batch b;
    for (std::size_t i : idx) {
      const auto& ex = train.examples[i];
      b.tokens.push_back(apply_dropout(ex.tokens, cfg.input_dropout, pad, rng));
      b.step_targets.push_back(ex.targets);
    }
    return b;
  };
  cb.validate = [&](const RnnParams& p) {
    return std::pair<double, double>(evaluate_mse(p, val), 0.0);
  };
  LoopResult loop = run_training_loop(std::move(params), cfg, cb);
  ToyTrainResult result;
  result.params = std::move(loop.params);
  result.curve = std::move(loop.curve);
  result.val_mse = loop.best_val;
  return result;
}

ClassifierTrainResult train_classifier(CellKind kind, int hidden_size,
                                       const LabeledCorpus& train, const LabeledCorpus& val,
                                       const LabeledCorpus& test, const TrainConfig& cfg) {
  if (train.examples.empty() || val.examples.empty()) {
    throw std::invalid_argument("train_classifier: empty corpus");
  }
  const ToyVocab vocab = build_toy_vocab();
  RnnParams params = init_params(kind, hidden_size, vocab.size(), cfg.seed, vocab.pad_id());
  const int pad = vocab.pad_id();

  LoopCallbacks cb;
  cb.n_examples = train.examples.size();
  cb.loss_kind = LossKind::FinalBce;
  cb.make_batch = [&](const std::vector<std::size_t>& idx, Rng& rng) {
    Batch b;
    for (std::size_t i : idx) {
      const auto& ex = train.examples[i];
      b.tokens.push_back(apply_dropout(ex.tokens, cfg.input_dropout, pad, rng));
      b.labels.push_back(ex.label);
    }
    return b;
  };
  cb.validate = [&](const RnnParams& p) {
    std::vector<std::vector<int>> seqs;
    seqs.reserve(val.examples.size());
    for (const auto& ex : val.examples) seqs.push_back(ex.tokens);
    const VectorXd z = final_logits(p, seqs);
    double loss = 0.0;
    int correct = 0;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      const double y = val.examples[static_cast<std::size_t>(j)].label;
      loss += std::max(z[j], 0.0) - z[j] * y + std::log1p(std::exp(-std::abs(z[j])));
      correct += ((z[j] > 0.0) == (y > 0.5)) ? 1 : 0;
    }
    loss /= static_cast<double>(z.size());
    return std::pair<double, double>(
        loss, static_cast<double>(correct) / static_cast<double>(z.size()));
  };
  LoopResult loop = run_training_loop(std::move(params), cfg, cb);
  ClassifierTrainResult result;
  result.params = std::move(loop.params);
  result.curve = std::move(loop.curve);
  result.train_accuracy = evaluate_accuracy(result.params, train);
  result.val_accuracy = evaluate_accuracy(result.params, val);
  result.test_accuracy = test.examples.empty() ? 0.0 : evaluate_accuracy(result.params, test);
  return result;
}

VectorXd final_logits(const RnnParams& params,
                      const std::vector<std::vector<int>>& sequences) {
  VectorXd logits(static_cast<Eigen::Index>(sequences.size()));
  constexpr std::size_t kChunk = 256;
  // Group by sequence length within each chunk; generated corpora share one
  // length, so this is normally a single batch per chunk.
  std::size_t pos = 0;
  while (pos < sequences.size()) {
    const std::size_t end = std::min(sequences.size(), pos + kChunk);
    std::vector<std::size_t> idx;
    for (std::size_t i = pos; i < end; ++i) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return sequences[a].size() < sequences[b].size();
    });
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      const std::size_t len = sequences[idx[i]].size();
      while (j < idx.size() && sequences[idx[j]].size() == len) ++j;
      const auto B = static_cast<Eigen::Index>(j - i);
      MatrixXd state = params.h0.replicate(1, B);
      MatrixXd next;
      std::vector<int> step(static_cast<std::size_t>(B));
      for (std::size_t t = 0; t < len; ++t) {
        for (Eigen::Index k = 0; k < B; ++k) {
          step[static_cast<std::size_t>(k)] =
              sequences[idx[i + static_cast<std::size_t>(k)]][t];
        }
        step_batch(params, state, BatchInput::one_hot(step), next, nullptr);
        state.swap(next);
      }
      for (Eigen::Index k = 0; k < B; ++k) {
        const std::size_t which = idx[i + static_cast<std::size_t>(k)];
        logits[static_cast<Eigen::Index>(which)] = readout(params, state.col(k));
      }
      i = j;
    }
    pos = end;
  }
  return logits;
}

double evaluate_accuracy(const RnnParams& params, const LabeledCorpus& corpus) {
  if (corpus.examples.empty()) {
    throw std::invalid_argument("evaluate_accuracy: empty corpus");
  }
  std::vector<std::vector<int>> seqs;
  seqs.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) seqs.push_back(ex.tokens);
  const VectorXd z = final_logits(params, seqs);
  int correct = 0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    correct +=
        ((z[j] > 0.0) == (corpus.examples[static_cast<std::size_t>(j)].label == 1)) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(z.size());
}

double evaluate_accuracy_with_h0(const RnnParams& params, const LabeledCorpus& corpus,
                                 const VectorXd& h0) {
  if (h0.size() != params.state_dim()) {
    throw std::invalid_argument("evaluate_accuracy_with_h0: h0 dimension mismatch");
  }
  RnnParams patched = params;
  patched.h0 = h0;
  return evaluate_accuracy(patched, corpus);
}

double evaluate_mse(const RnnParams& params, const ToyCorpus& corpus) {
  if (corpus.examples.empty()) throw std::invalid_argument("evaluate_mse: empty corpus");
  const int N = params.hidden_size;
  double total = 0.0;
  long count = 0;
  constexpr std::size_t kChunk = 256;
  std::size_t pos = 0;
  while (pos < corpus.examples.size()) {
    const std::size_t end = std::min(corpus.examples.size(), pos + kChunk);
    const auto B = static_cast<Eigen::Index>(end - pos);
    const std::size_t L = corpus.examples[pos].tokens.size();
    for (std::size_t i = pos; i < end; ++i) {
      if (corpus.examples[i].tokens.size() != L) {
        throw std::invalid_argument("evaluate_mse: corpus has mixed lengths");
      }
    }
    MatrixXd state = params.h0.replicate(1, B);
    MatrixXd next;
    std::vector<int> step(static_cast<std::size_t>(B));
    for (std::size_t t = 0; t < L; ++t) {
      for (Eigen::Index k = 0; k < B; ++k) {
        step[static_cast<std::size_t>(k)] =
            corpus.examples[pos + static_cast<std::size_t>(k)].tokens[t];
      }
      step_batch(params, state, BatchInput::one_hot(step), next, nullptr);
      state.swap(next);
      for (Eigen::Index k = 0; k < B; ++k) {
        const double logit = params.readout_w.dot(state.col(k).head(N)) + params.readout_b;
        const double err =
            logit - corpus.examples[pos + static_cast<std::size_t>(k)].targets[t];
        total += err * err;
        count += 1;
      }
    }
    pos = end;
  }
  return total / static_cast<double>(count);
}

double shuffle_eval(const RnnParams& params, const LabeledCorpus& corpus,
                    std::uint64_t seed) {
  LabeledCorpus shuffled = corpus;
  for (std::size_t i = 0; i < shuffled.examples.size(); ++i) {
    auto& toks = shuffled.examples[i].tokens;
    Rng rng(Rng::mix(seed, i));
    for (std::size_t k = toks.size(); k > 1; --k) {
      std::swap(toks[k - 1], toks[rng.below(k)]);
    }
  }
  return evaluate_accuracy(params, shuffled);
}

}  // namespace rnnscope
