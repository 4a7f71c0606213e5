#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "rnnscope/baselines.hpp"
#include "rnnscope/rng.hpp"
#include "rnnscope/toy_language.hpp"

using namespace rnnscope;
using Eigen::VectorXd;

namespace {

BaselineSpec make_spec(BaselineVariant v, int W = 8, int P = 3) {
  BaselineSpec spec;
  spec.variant = v;
  spec.vocab_size = W;
  spec.weight_vector_count = P;
  if (spec.has_word_modifiers()) spec.modifier_words = {6, 5};  // not, extremely
  return spec;
}

BaselineWeights random_weights(const BaselineSpec& spec, std::uint64_t seed) {
  BaselineWeights w = BaselineWeights::init(spec);
  VectorXd flat = flatten_baseline_weights(spec, w);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = rng.uniform(-0.8, 0.8);
  unflatten_baseline_weights(spec, flat, w);
  // Keep taus in a sane range after randomization.
  for (Eigen::Index i = 0; i < w.log_tau.size(); ++i) w.log_tau[i] = rng.uniform(0.3, 1.8);
  if (spec.has_bod_eod()) {
    w.log_tau_bod = rng.uniform(0.3, 1.8);
    w.log_tau_eod = rng.uniform(0.3, 1.8);
  }
  return w;
}

// Direct-sum reference for the exponential convolution.
std::vector<double> conv_direct(const std::vector<double>& mu, double alpha, double tau,
                                ConvDirection dir) {
  const std::size_t L = mu.size();
  std::vector<double> out(L, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t s = 1; s < L; ++s) {
      if (dir == ConvDirection::Causal) {
        if (s <= t) out[t] += alpha * std::exp(-static_cast<double>(s) / tau) * mu[t - s];
      } else {
        if (t + s < L) out[t] += alpha * std::exp(-static_cast<double>(s) / tau) * mu[t + s];
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("parameter counts match the per-variant closed forms") {
  const int W = 8, M = 2, P = 3;
  CHECK(make_spec(BaselineVariant::BagOfWords).parameter_count() == W + 1);
  CHECK(make_spec(BaselineVariant::ConvModifierWords).parameter_count() == W + 1 + 2 * M);
  CHECK(make_spec(BaselineVariant::ConvBodEod).parameter_count() == W + 1 + 4);
  CHECK(make_spec(BaselineVariant::ConvModifierWordsLearned).parameter_count() ==
        W + 1 + 2 * M + P * W);
  CHECK(make_spec(BaselineVariant::ConvBodEodLearned).parameter_count() ==
        W + 1 + 4 + 2 * W);
  CHECK(make_spec(BaselineVariant::Full).parameter_count() ==
        W + 1 + 4 + 2 * W + 2 * M + P * W);
  // The audit holds against the actual instantiated weight vector too.
  for (BaselineVariant v : all_baseline_variants()) {
    const BaselineSpec spec = make_spec(v);
    const BaselineWeights w = BaselineWeights::init(spec);
    CHECK(flatten_baseline_weights(spec, w).size() == spec.parameter_count());
  }
}

TEST_CASE("modifier indicator marks exact positions") {
  CHECK(modifier_indicator({1, 2, 3}, 6) == std::vector<double>{0, 0, 0});
  CHECK(modifier_indicator({6, 3, 6}, 6) == std::vector<double>{1, 0, 1});
  const BaselineSpec spec = make_spec(BaselineVariant::ConvBodEod);
  const auto augmented = augment_tokens(spec, {3, 4});
  const auto mu = modifier_indicator(augmented, bod_token(spec));
  CHECK(mu == std::vector<double>{1, 0, 0, 0});
  const auto mu_eod = modifier_indicator(augmented, eod_token(spec));
  CHECK(mu_eod == std::vector<double>{0, 0, 0, 1});
}

TEST_CASE("exponential convolution matches the direct sum") {
  const std::vector<double> mu{1, 0, 0, 0};
  const auto causal = conv_modifier_signal(mu, 1.0, 1.0, ConvDirection::Causal);
  REQUIRE(causal.size() == 4);
  CHECK(causal[0] == 0.0);
  CHECK(causal[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(causal[2] == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(causal[3] == doctest::Approx(std::exp(-3.0)).epsilon(1e-12));

  const std::vector<double> mu_end{0, 0, 0, 1};
  const auto acausal = conv_modifier_signal(mu_end, 1.0, 1.0, ConvDirection::Acausal);
  CHECK(acausal[0] == doctest::Approx(std::exp(-3.0)).epsilon(1e-12));
  CHECK(acausal[1] == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(acausal[2] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(acausal[3] == 0.0);

  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> random_mu(12, 0.0);
    for (auto& x : random_mu) x = rng.below(3) == 0 ? 1.0 : 0.0;
    const double alpha = rng.uniform(-2, 2);
    const double tau = rng.uniform(0.5, 6.0);
    for (ConvDirection dir : {ConvDirection::Causal, ConvDirection::Acausal}) {
      const auto fast = conv_modifier_signal(random_mu, alpha, tau, dir);
      const auto slow = conv_direct(random_mu, alpha, tau, dir);
      for (std::size_t t = 0; t < random_mu.size(); ++t) {
        CHECK(fast[t] == doctest::Approx(slow[t]).epsilon(1e-10));
      }
    }
  }
  CHECK(conv_modifier_signal({}, 1.0, 1.0, ConvDirection::Causal).empty());
  CHECK_THROWS(conv_modifier_signal(mu, 1.0, 0.0, ConvDirection::Causal));

  // All-zero indicator stays zero.
  const auto silent = conv_modifier_signal({0, 0, 0, 0, 0}, 2.0, 3.0, ConvDirection::Causal);
  for (double x : silent) CHECK(x == 0.0);
}

TEST_CASE("variants with silent convolutions reduce to bag of words bitwise") {
  const BaselineSpec bow = make_spec(BaselineVariant::BagOfWords);
  BaselineWeights wb = random_weights(bow, 3);

  const std::vector<int> no_modifiers{0, 1, 2, 3, 4, 7, 3};
  const double bow_logit = predict(bow, wb, no_modifiers);

  for (BaselineVariant v : {BaselineVariant::ConvModifierWords,
                            BaselineVariant::ConvModifierWordsLearned}) {
    const BaselineSpec spec = make_spec(v);
    BaselineWeights w = random_weights(spec, 3);
    w.beta = wb.beta;
    w.bias = wb.bias;
    CHECK(predict(spec, w, no_modifiers) == bow_logit);
  }
  // BOD/EOD variants collapse when both filter scalings are zero.
  const BaselineSpec be = make_spec(BaselineVariant::ConvBodEod);
  BaselineWeights w = random_weights(be, 3);
  w.beta = wb.beta;
  w.bias = wb.bias;
  w.alpha_bod = 0.0;
  w.alpha_eod = 0.0;
  CHECK(predict(be, w, no_modifiers) == bow_logit);
}

TEST_CASE("comw logit for modifier-then-word matches the closed form") {
  const BaselineSpec spec = make_spec(BaselineVariant::ConvModifierWords);
  BaselineWeights w = BaselineWeights::init(spec);
  Rng rng(11);
  for (Eigen::Index i = 0; i < w.beta.size(); ++i) w.beta[i] = rng.uniform(-1, 1);
  w.bias = 0.3;
  w.alpha[0] = 0.7;          // "not"
  w.log_tau[0] = std::log(2.5);
  const std::vector<int> tokens{6, 3};  // not good
  const double expect = w.beta[6] + w.beta[3] * (1.0 + 0.7 * std::exp(-1.0 / 2.5)) + w.bias;
  CHECK(predict(spec, w, tokens) == doctest::Approx(expect).epsilon(1e-12));

  // A modifier at the end affects nothing (causality).
  const std::vector<int> tail{3, 6};
  CHECK(predict(spec, w, tail) == w.beta[3] + w.beta[6] + w.bias);
}

TEST_CASE("empty document scores the bias") {
  for (BaselineVariant v : all_baseline_variants()) {
    const BaselineSpec spec = make_spec(v);
    BaselineWeights w = random_weights(spec, 5);
    w.bias = -1.25;
    CHECK(predict(spec, w, {}) == -1.25);
  }
}

TEST_CASE("bag of words is bitwise order-invariant, comw is not") {
  const BaselineSpec bow = make_spec(BaselineVariant::BagOfWords);
  const BaselineWeights wb = random_weights(bow, 9);
  const std::vector<int> a{6, 3, 1, 4, 2, 0, 3};
  std::vector<int> b = a;
  std::reverse(b.begin(), b.end());
  CHECK(predict(bow, wb, a) == predict(bow, wb, b));

  const BaselineSpec comw = make_spec(BaselineVariant::ConvModifierWords);
  const BaselineWeights wc = random_weights(comw, 9);
  // "not good ... " vs "... good not": the convolution sees different words.
  CHECK(predict(comw, wc, a) != predict(comw, wc, b));
}

TEST_CASE("analytic gradients match finite differences for every variant") {
  const ToyVocab vocab = build_toy_vocab();
  const LabeledCorpus corpus = generate_classification_corpus(vocab, 17, 6, 12);
  std::vector<const LabeledExample*> batch;
  for (const auto& ex : corpus.examples) batch.push_back(&ex);

  for (BaselineVariant v : all_baseline_variants()) {
    CAPTURE(to_string(v));
    const BaselineSpec spec = make_spec(v);
    const BaselineWeights w = random_weights(spec, 23 + static_cast<int>(v));
    const double l2 = 1e-3;
    const BaselineLossGrads lg = baseline_loss_grads(spec, w, batch, l2);
    VectorXd flat = flatten_baseline_weights(spec, w);
    const double step = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      auto loss_at = [&](double delta) {
        VectorXd mod = flat;
        mod[i] += delta;
        BaselineWeights wm;
        unflatten_baseline_weights(spec, mod, wm);
        return baseline_loss_grads(spec, wm, batch, l2).loss;
      };
      const double fd = (loss_at(step) - loss_at(-step)) / (2.0 * step);
      const double scale = std::max({std::abs(fd), std::abs(lg.grad[i]), 1e-6});
      worst = std::max(worst, std::abs(fd - lg.grad[i]) / scale);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("bag of words training learns the valence signs") {
  const ToyVocab vocab = build_toy_vocab();
  const LabeledCorpus train = generate_classification_corpus(vocab, 1, 512, 20);
  const LabeledCorpus val = generate_classification_corpus(vocab, 2, 128, 20);
  const LabeledCorpus test = generate_classification_corpus(vocab, 3, 128, 20);
  const BaselineSpec spec = make_spec(BaselineVariant::BagOfWords);
  BaselineTrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.patience = 60;
  const BaselineTrainResult r = train_baseline(spec, train, val, test, cfg);
  // Word order carries most of the signal in this language (negation flips
  // large swaths), so an order-blind model tops out just above chance; the
  // oracle-valence BoW itself scores ~0.62.
  CHECK(r.test_accuracy > 0.55);
  CHECK(r.weights.beta[4] > r.weights.beta[3]);  // awesome above good
  CHECK(r.weights.beta[3] > r.weights.beta[1]);  // good above bad
  CHECK(r.weights.beta[1] > r.weights.beta[0]);  // bad above awful

  // Determinism of the whole training path.
  const BaselineTrainResult r2 = train_baseline(spec, train, val, test, cfg);
  CHECK((flatten_baseline_weights(spec, r2.weights) -
         flatten_baseline_weights(spec, r.weights))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("extract_modifier_list ranks with deterministic ties") {
  VectorXd scores(6);
  scores << 0.1, 0.9, 0.9, 0.05, 0.3, 0.9;
  CHECK(extract_modifier_list(scores, 0).empty());
  CHECK(extract_modifier_list(scores, 4) == std::vector<int>{1, 2, 5, 4});
  CHECK_THROWS(extract_modifier_list(scores, 7));
}

TEST_CASE("baseline weights round-trip through the file format") {
  const auto dir = std::filesystem::temp_directory_path() / "rnnscope_baseline_test";
  std::filesystem::create_directories(dir);
  for (BaselineVariant v : all_baseline_variants()) {
    const BaselineSpec spec = make_spec(v);
    const BaselineWeights w = random_weights(spec, 31);
    save_baseline(dir / "model.json", spec, w);
    const auto [spec2, w2] = load_baseline(dir / "model.json");
    CHECK(spec2.variant == spec.variant);
    CHECK(spec2.modifier_words == spec.modifier_words);
    CHECK((flatten_baseline_weights(spec2, w2) - flatten_baseline_weights(spec, w))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  std::filesystem::remove_all(dir);
}
