#include "rnnscope/toy_language.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rnnscope/rng.hpp"

namespace rnnscope {

const ToyToken& ToyVocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("ToyVocab::token: unknown token id " + std::to_string(id));
  }
  return tokens[static_cast<std::size_t>(id)];
}

int ToyVocab::id_of(std::string_view name) const {
  for (const auto& t : tokens) {
    if (t.name == name) return t.id;
  }
  throw std::out_of_range("ToyVocab::id_of: unknown token name " + std::string(name));
}

int ToyVocab::intensifier_id() const {
  for (const auto& t : tokens) {
    if (t.kind == ToyTokenKind::Intensifier) return t.id;
  }
  throw std::logic_error("ToyVocab: no intensifier");
}

int ToyVocab::negator_id() const {
  for (const auto& t : tokens) {
    if (t.kind == ToyTokenKind::Negator) return t.id;
  }
  throw std::logic_error("ToyVocab: no negator");
}

int ToyVocab::pad_id() const {
  for (const auto& t : tokens) {
    if (t.kind == ToyTokenKind::Pad) return t.id;
  }
  throw std::logic_error("ToyVocab: no pad");
}

std::vector<int> ToyVocab::valence_token_ids(bool nonzero_only) const {
  std::vector<int> ids;
  for (const auto& t : tokens) {
    if (t.kind != ToyTokenKind::Valence) continue;
    if (nonzero_only && t.valence == 0) continue;
    ids.push_back(t.id);
  }
  return ids;
}

ToyVocab build_toy_vocab() {
  ToyVocab vocab;
  auto add = [&](ToyTokenKind kind, int valence, std::string name) {
    ToyToken t;
    t.id = vocab.size();
    t.kind = kind;
    t.valence = valence;
    t.name = std::move(name);
    vocab.tokens.push_back(std::move(t));
  };
  add(ToyTokenKind::Valence, -2, "awful");
  add(ToyTokenKind::Valence, -1, "bad");
  add(ToyTokenKind::Valence, 0, "the");
  add(ToyTokenKind::Valence, +1, "good");
  add(ToyTokenKind::Valence, +2, "awesome");
  add(ToyTokenKind::Intensifier, 0, "extremely");
  add(ToyTokenKind::Negator, 0, "not");
  add(ToyTokenKind::Pad, 0, "pad");
  return vocab;
}

std::vector<double> oracle_targets(const ToyVocab& vocab, std::span<const int> tokens) {
  std::vector<double> targets;
  targets.reserve(tokens.size());
  double running = 0.0;
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    const ToyToken& tok = vocab.token(tokens[s]);  // validates the id
    double multiplier = 1.0;
    if (s >= 1 && vocab.token(tokens[s - 1]).kind == ToyTokenKind::Intensifier) {
      multiplier *= 2.0;
    }
    // A negator at position p covers positions p+1 .. p+kNegatorScope.
    const std::size_t scope = static_cast<std::size_t>(ToyVocab::kNegatorScope);
    const std::size_t lo = s >= scope ? s - scope : 0;
    for (std::size_t p = lo; p < s; ++p) {
      if (vocab.token(tokens[p]).kind == ToyTokenKind::Negator) multiplier *= -1.0;
    }
    running += multiplier * static_cast<double>(tok.valence);
    targets.push_back(running);
  }
  return targets;
}

namespace {

// Token ids allowed at position `pos` given the prefix, under the two
// placement constraints.
std::vector<int> allowed_tokens(const ToyVocab& vocab, const std::vector<int>& prefix,
                                int pos) {
  std::vector<int> allowed;
  allowed.reserve(vocab.tokens.size());
  for (const auto& t : vocab.tokens) {
    if (t.kind == ToyTokenKind::Negator) {
      bool blocked = false;
      for (int back = 1; back <= ToyVocab::kNegatorScope; ++back) {
        const int p = pos - back;
        if (p >= 0 && vocab.token(prefix[static_cast<std::size_t>(p)]).kind ==
                          ToyTokenKind::Negator) {
          blocked = true;
          break;
        }
      }
      if (blocked) continue;
    }
    if (t.kind == ToyTokenKind::Intensifier && pos >= 1 &&
        vocab.token(prefix[static_cast<std::size_t>(pos - 1)]).kind ==
            ToyTokenKind::Intensifier) {
      continue;
    }
    allowed.push_back(t.id);
  }
  return allowed;
}

}  // namespace

ToyExample generate_example(const ToyVocab& vocab, std::uint64_t seed, int length) {
  if (length < 1) throw std::invalid_argument("generate_example: length must be >= 1");
  Rng rng(seed);
  ToyExample ex;
  ex.tokens.reserve(static_cast<std::size_t>(length));
  for (int pos = 0; pos < length; ++pos) {
    const auto allowed = allowed_tokens(vocab, ex.tokens, pos);
    ex.tokens.push_back(allowed[rng.below(allowed.size())]);
  }
  ex.targets = oracle_targets(vocab, ex.tokens);
  return ex;
}

ToyCorpus generate_toy_corpus(const ToyVocab& vocab, std::uint64_t seed, int n_examples,
                              int length) {
  if (n_examples < 1) throw std::invalid_argument("generate_toy_corpus: n_examples >= 1");
  ToyCorpus corpus;
  corpus.examples.reserve(static_cast<std::size_t>(n_examples));
  for (int i = 0; i < n_examples; ++i) {
    corpus.examples.push_back(
        generate_example(vocab, Rng::mix(seed, static_cast<std::uint64_t>(i)), length));
  }
  return corpus;
}

LabeledCorpus generate_classification_corpus(const ToyVocab& vocab, std::uint64_t seed,
                                             int n_examples, int length) {
  if (n_examples < 1) {
    throw std::invalid_argument("generate_classification_corpus: n_examples >= 1");
  }
  const int cap = static_cast<int>(
      std::ceil(0.55 * static_cast<double>(n_examples)));
  LabeledCorpus corpus;
  corpus.examples.reserve(static_cast<std::size_t>(n_examples));
  int n_pos = 0;
  int n_neg = 0;
  std::uint64_t counter = 0;
  while (static_cast<int>(corpus.examples.size()) < n_examples) {
    ToyExample ex = generate_example(vocab, Rng::mix(seed, counter++), length);
    const double final_target = ex.targets.back();
    if (final_target == 0.0) continue;  // ties dropped, a fresh draw replaces them
    const int label = final_target > 0.0 ? 1 : 0;
    if (label == 1 && n_pos >= cap) continue;
    if (label == 0 && n_neg >= cap) continue;
    (label == 1 ? n_pos : n_neg)++;
    corpus.examples.push_back(LabeledExample{std::move(ex.tokens), label});
  }
  return corpus;
}

void save_toy_corpus(const std::filesystem::path& path, const ToyCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& ex : corpus.examples) {
    nlohmann::json rec;
    rec["tokens"] = ex.tokens;
    rec["targets"] = ex.targets;
    out << rec.dump() << '\n';
  }
}

ToyCorpus load_toy_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  ToyCorpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    ToyExample ex;
    ex.tokens = rec.at("tokens").get<std::vector<int>>();
    ex.targets = rec.at("targets").get<std::vector<double>>();
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

void save_labeled_corpus(const std::filesystem::path& path, const LabeledCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& ex : corpus.examples) {
    nlohmann::json rec;
    rec["tokens"] = ex.tokens;
    rec["label"] = ex.label;
    out << rec.dump() << '\n';
  }
}

LabeledCorpus load_labeled_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  LabeledCorpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    LabeledExample ex;
    ex.tokens = rec.at("tokens").get<std::vector<int>>();
    ex.label = rec.at("label").get<int>();
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace rnnscope
