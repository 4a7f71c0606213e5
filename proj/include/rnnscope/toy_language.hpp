#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rnnscope {

enum class ToyTokenKind { Valence, Intensifier, Negator, Pad };

struct ToyToken {
  int id = 0;
  ToyTokenKind kind = ToyTokenKind::Valence;
  int valence = 0;  // 0 for modifiers and pad
  std::string name;
};

/// The eight-token modifier language. Ids are stable:
///   0 "awful"(-2)  1 "bad"(-1)  2 "the"(0)  3 "good"(+1)  4 "awesome"(+2)
///   5 "extremely" (intensifier, doubles the next input)
///   6 "not"       (negator, flips the sign of the next four inputs)
///   7 "pad"       (valence 0, no modifier effect)
struct ToyVocab {
  std::vector<ToyToken> tokens;

  // Scope of each modifier, counted in following inputs (pads and other
  // modifiers included).
  static constexpr int kIntensifierScope = 1;
  static constexpr int kNegatorScope = 4;

  int size() const { return static_cast<int>(tokens.size()); }
  const ToyToken& token(int id) const;  // throws std::out_of_range on bad id
  int id_of(std::string_view name) const;
  int intensifier_id() const;
  int negator_id() const;
  int pad_id() const;
  std::vector<int> valence_token_ids(bool nonzero_only) const;
};

ToyVocab build_toy_vocab();

struct ToyExample {
  std::vector<int> tokens;
  std::vector<double> targets;
};

struct LabeledExample {
  std::vector<int> tokens;
  int label = 0;  // 1 positive, 0 negative
};

struct ToyCorpus {
  std::vector<ToyExample> examples;
};

struct LabeledCorpus {
  std::vector<LabeledExample> examples;
};

/// targets[t] = sum_{s<=t} m(s)*v(s), where v is token valence and m is the
/// product of the active modifier multipliers at step s (x2 if an intensifier
/// occurred at s-1, x(-1) per negator whose 4-input scope covers s).
/// Multipliers of overlapping modifiers compose multiplicatively.
/// Throws std::invalid_argument on unknown token ids.
std::vector<double> oracle_targets(const ToyVocab& vocab, std::span<const int> tokens);

/// Uniformly random tokens subject to the two placement constraints:
/// no negator within 4 tokens after a negator, no intensifier immediately
/// after an intensifier. Targets are filled by the oracle.
ToyExample generate_example(const ToyVocab& vocab, std::uint64_t seed, int length);

ToyCorpus generate_toy_corpus(const ToyVocab& vocab, std::uint64_t seed, int n_examples,
                              int length);

/// Labels are sign(final target); zero-final examples are regenerated, and
/// per-class counts are capped at ceil(0.55 * n) so the balance always lands
/// in 45..55%.
LabeledCorpus generate_classification_corpus(const ToyVocab& vocab, std::uint64_t seed,
                                             int n_examples, int length);

// Line-delimited JSON serialization; one record per line.
void save_toy_corpus(const std::filesystem::path& path, const ToyCorpus& corpus);
ToyCorpus load_toy_corpus(const std::filesystem::path& path);
void save_labeled_corpus(const std::filesystem::path& path, const LabeledCorpus& corpus);
LabeledCorpus load_labeled_corpus(const std::filesystem::path& path);

}  // namespace rnnscope
