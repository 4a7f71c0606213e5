#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "rnnscope/toy_language.hpp"

using namespace rnnscope;

namespace {

// Independent brute-force simulator of the modifier rules, written as a
// forward state machine over pending effects (multiplier, steps remaining).
// Deliberately structured differently from oracle_targets, which scans
// backwards over the token window.
std::vector<double> brute_force_targets(const ToyVocab& vocab,
                                        const std::vector<int>& tokens) {
  struct Effect {
    double multiplier;
    int steps_remaining;
  };
  std::vector<Effect> active;
  std::vector<double> out;
  double running = 0.0;
  for (int id : tokens) {
    const ToyToken& tok = vocab.token(id);
    double m = 1.0;
    for (const auto& e : active) {
      if (e.steps_remaining > 0) m *= e.multiplier;
    }
    running += m * tok.valence;
    out.push_back(running);
    for (auto& e : active) e.steps_remaining -= 1;
    std::erase_if(active, [](const Effect& e) { return e.steps_remaining <= 0; });
    if (tok.kind == ToyTokenKind::Intensifier) {
      active.push_back({2.0, ToyVocab::kIntensifierScope});
    } else if (tok.kind == ToyTokenKind::Negator) {
      active.push_back({-1.0, ToyVocab::kNegatorScope});
    }
  }
  return out;
}

std::vector<int> ids(const ToyVocab& v, std::initializer_list<const char*> names) {
  std::vector<int> out;
  for (const char* n : names) out.push_back(v.id_of(n));
  return out;
}

}  // namespace

TEST_CASE("vocab has the documented eight tokens") {
  const ToyVocab vocab = build_toy_vocab();
  CHECK(vocab.size() == 8);
  std::vector<int> valences;
  int n_intensifier = 0, n_negator = 0, n_pad = 0;
  for (const auto& t : vocab.tokens) {
    if (t.kind == ToyTokenKind::Valence) valences.push_back(t.valence);
    if (t.kind == ToyTokenKind::Intensifier) n_intensifier++;
    if (t.kind == ToyTokenKind::Negator) n_negator++;
    if (t.kind == ToyTokenKind::Pad) {
      n_pad++;
      CHECK(t.valence == 0);
    }
  }
  CHECK(valences == std::vector<int>{-2, -1, 0, 1, 2});
  CHECK(n_intensifier == 1);
  CHECK(n_negator == 1);
  CHECK(n_pad == 1);

  const ToyVocab again = build_toy_vocab();
  for (int i = 0; i < vocab.size(); ++i) {
    CHECK(again.token(i).name == vocab.token(i).name);
    CHECK(again.token(i).valence == vocab.token(i).valence);
  }
}

TEST_CASE("oracle matches the worked phrases") {
  const ToyVocab v = build_toy_vocab();
  CHECK(oracle_targets(v, ids(v, {"good"})) == std::vector<double>{1.0});
  CHECK(oracle_targets(v, ids(v, {"extremely", "good"})) == std::vector<double>{0.0, 2.0});
  CHECK(oracle_targets(v, ids(v, {"not", "the", "the", "the", "good"})) ==
        std::vector<double>{0.0, 0.0, 0.0, 0.0, -1.0});
  CHECK(oracle_targets(v, ids(v, {"not", "good"})) == std::vector<double>{0.0, -1.0});
  CHECK(oracle_targets(v, std::vector<int>{}) == std::vector<double>{});
  // The negator scope ends after four inputs.
  CHECK(oracle_targets(v, ids(v, {"not", "the", "the", "the", "the", "good"})).back() ==
        1.0);
  // Overlapping modifiers compose multiplicatively.
  CHECK(oracle_targets(v, ids(v, {"not", "extremely", "good"})).back() == -2.0);
  CHECK(oracle_targets(v, ids(v, {"extremely", "not", "good"})).back() == -1.0);
  CHECK_THROWS(oracle_targets(v, std::vector<int>{42}));
}

TEST_CASE("oracle agrees with an independent simulator on all sequences up to length 6") {
  const ToyVocab v = build_toy_vocab();
  const int W = v.size();
  long checked = 0;
  for (int len = 1; len <= 6; ++len) {
    long count = 1;
    for (int i = 0; i < len; ++i) count *= W;
    std::vector<int> seq(static_cast<std::size_t>(len), 0);
    for (long code = 0; code < count; ++code) {
      long c = code;
      for (int i = 0; i < len; ++i) {
        seq[static_cast<std::size_t>(i)] = static_cast<int>(c % W);
        c /= W;
      }
      const auto a = oracle_targets(v, seq);
      const auto b = brute_force_targets(v, seq);
      if (a != b) {  // avoid 300k CHECK bookkeeping; fail loudly on mismatch
        CAPTURE(code);
        REQUIRE(a == b);
      }
      ++checked;
    }
  }
  CHECK(checked == 8 + 64 + 512 + 4096 + 32768 + 262144);
}

TEST_CASE("generated sequences satisfy the placement constraints") {
  const ToyVocab v = build_toy_vocab();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ToyExample ex = generate_example(v, seed, 50);
    REQUIRE(ex.tokens.size() == 50);
    REQUIRE(ex.targets.size() == 50);
    for (std::size_t s = 0; s < ex.tokens.size(); ++s) {
      const auto kind = v.token(ex.tokens[s]).kind;
      if (kind == ToyTokenKind::Negator) {
        for (std::size_t back = 1; back <= ToyVocab::kNegatorScope && back <= s; ++back) {
          CHECK(v.token(ex.tokens[s - back]).kind != ToyTokenKind::Negator);
        }
      }
      if (kind == ToyTokenKind::Intensifier && s >= 1) {
        CHECK(v.token(ex.tokens[s - 1]).kind != ToyTokenKind::Intensifier);
      }
    }
    CHECK(ex.targets == oracle_targets(v, ex.tokens));
  }
}

TEST_CASE("generation is deterministic and works at length 1") {
  const ToyVocab v = build_toy_vocab();
  const ToyExample a = generate_example(v, 0, 50);
  const ToyExample b = generate_example(v, 0, 50);
  CHECK(a.tokens == b.tokens);
  CHECK(a.targets == b.targets);
  const ToyExample one = generate_example(v, 1, 1);
  CHECK(one.tokens.size() == 1);
  CHECK_THROWS(generate_example(v, 0, 0));
}

TEST_CASE("prefix increments stay in the reachable step set") {
  const ToyVocab v = build_toy_vocab();
  const std::vector<double> allowed{-4, -2, -1, 0, 1, 2, 4};
  for (std::uint64_t seed = 100; seed < 300; ++seed) {
    const ToyExample ex = generate_example(v, seed, 50);
    double prev = 0.0;
    for (double t : ex.targets) {
      const double step = t - prev;
      CHECK(std::find(allowed.begin(), allowed.end(), step) != allowed.end());
      prev = t;
    }
  }
}

TEST_CASE("classification corpus labels match the oracle sign and stay balanced") {
  const ToyVocab v = build_toy_vocab();
  const LabeledCorpus corpus = generate_classification_corpus(v, 0, 1000, 50);
  REQUIRE(corpus.examples.size() == 1000);
  int n_pos = 0;
  for (const auto& ex : corpus.examples) {
    const auto targets = oracle_targets(v, ex.tokens);
    REQUIRE(targets.back() != 0.0);
    CHECK(ex.label == (targets.back() > 0.0 ? 1 : 0));
    n_pos += ex.label;
  }
  CHECK(n_pos >= 450);
  CHECK(n_pos <= 550);

  const LabeledCorpus again = generate_classification_corpus(v, 0, 1000, 50);
  REQUIRE(again.examples.size() == corpus.examples.size());
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    CHECK(again.examples[i].tokens == corpus.examples[i].tokens);
    CHECK(again.examples[i].label == corpus.examples[i].label);
  }
}

TEST_CASE("corpus files round-trip") {
  const ToyVocab v = build_toy_vocab();
  const auto dir = std::filesystem::temp_directory_path() / "rnnscope_toy_io_test";
  std::filesystem::create_directories(dir);

  const ToyCorpus toy = generate_toy_corpus(v, 7, 20, 12);
  save_toy_corpus(dir / "toy.jsonl", toy);
  const ToyCorpus toy2 = load_toy_corpus(dir / "toy.jsonl");
  REQUIRE(toy2.examples.size() == toy.examples.size());
  for (std::size_t i = 0; i < toy.examples.size(); ++i) {
    CHECK(toy2.examples[i].tokens == toy.examples[i].tokens);
    CHECK(toy2.examples[i].targets == toy.examples[i].targets);
  }

  const LabeledCorpus lab = generate_classification_corpus(v, 7, 20, 12);
  save_labeled_corpus(dir / "lab.jsonl", lab);
  const LabeledCorpus lab2 = load_labeled_corpus(dir / "lab.jsonl");
  REQUIRE(lab2.examples.size() == lab.examples.size());
  for (std::size_t i = 0; i < lab.examples.size(); ++i) {
    CHECK(lab2.examples[i].tokens == lab.examples[i].tokens);
    CHECK(lab2.examples[i].label == lab.examples[i].label);
  }
  std::filesystem::remove_all(dir);
}
