#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "rnnscope/cells.hpp"
#include "rnnscope/fixed_points.hpp"
#include "rnnscope/toy_language.hpp"

namespace rnnscope {

/// Change in input Jacobian induced by context state h_context relative to
/// the reference attractor point:  J_inp|(h_context,0) - J_inp|(h_star,0).
Eigen::MatrixXd delta_input_jacobian_at(const RnnParams& p, const Eigen::VectorXd& h_context,
                                        const Eigen::VectorXd& h_star);

/// Same, for the context produced by a single word entering at h_star.
Eigen::MatrixXd delta_input_jacobian(const RnnParams& p, int word,
                                     const Eigen::VectorXd& h_star);

struct ModifierReport {
  int word_id = 0;
  double delta_jinp_norm = 0.0;        // Frobenius norm of the change
  Eigen::VectorXd h_mod;               // F(h_star, word)
  Eigen::VectorXd deflection;          // h_mod - h_star
  Eigen::VectorXd subspace_projection; // filled once a subspace exists
  std::optional<double> timescale;     // filled by the impulse fit
};

struct ModifierRanking {
  std::vector<ModifierReport> all;  // every word, descending by norm
  std::vector<int> selected;        // word ids above threshold, same order
};

/// Scores every vocabulary word by its ||delta J_inp||_F at the reference
/// point and selects those above the threshold.
ModifierRanking rank_modifiers(const RnnParams& p, const Eigen::VectorXd& h_star,
                               double threshold);

struct Barcode {
  std::vector<int> probe_ids;  // positive block then negative block
  Eigen::VectorXd values;      // w . delta J_inp . e_probe per probe
};

Barcode barcode(const RnnParams& p, const Eigen::VectorXd& h_context,
                const Eigen::VectorXd& h_star, const std::vector<int>& probes);

/// Top-k (descending) then bottom-k (ascending, most negative first) word ids
/// by the given per-word weights. Throws if 2k exceeds the vocabulary.
std::vector<int> select_probe_words(const Eigen::VectorXd& word_weights, int k);

struct ModifierSubspace {
  Eigen::MatrixXd components;          // state_dim x P, orthonormal
  Eigen::VectorXd variance_explained;  // fraction per component
  Eigen::VectorXd attractor_direction; // direction the deflections were orthogonalized against
  int P = 0;
};

/// PCA (uncentered SVD) of the deflections after projecting out the attractor
/// direction. Throws std::domain_error when nothing is left after
/// orthogonalization and std::invalid_argument when fewer than P deflections
/// (or less rank) are supplied.
ModifierSubspace fit_modifier_subspace(const std::vector<Eigen::VectorXd>& deflections,
                                       const Eigen::VectorXd& attractor_direction, int P);

/// Deflection samples for subspace and bilinear fits: the state after each
/// modifier word at the reference point, optionally extended along the pad
/// relaxation trajectory while the deflection stays above rel_floor of its
/// initial norm (the toy language has too few modifier words to support
/// P = 3 otherwise).
struct DeflectionSample {
  int word_id = 0;
  int step = 0;  // 0 = immediately after the word, k = after k pads
  Eigen::VectorXd state;
  Eigen::VectorXd deflection;  // state - h_star (fixed reference)
};
std::vector<DeflectionSample> modifier_deflection_samples(
    const RnnParams& p, const std::vector<int>& modifier_words, const Eigen::VectorXd& h_star,
    int pad_token, int extend_steps, double rel_floor = 1e-3);

struct ImpulseResponse {
  int word_id = 0;
  std::vector<double> distances;   // index t: after word + t pads, to nearest point
  Eigen::MatrixXd projections;     // P x (n_pads+1), onto subspace components
  std::vector<std::optional<double>> component_taus;  // per component
  std::optional<double> distance_tau;                 // fit on the distance series
};

/// Runs `word` then n_pads pad tokens from the reference point; deflections
/// are measured against the nearest attractor point at each step. Exponential
/// timescales are least-squares fits of log-magnitudes over steps
/// 1..min(n_pads, 30), above a floor of 1e-4 x initial deflection norm.
ImpulseResponse impulse_response(const RnnParams& p, const LineAttractor& attractor,
                                 int word, int n_pads, int pad_token,
                                 const ModifierSubspace* subspace);

/// Evaluation with the hidden state projected out of `basis` (orthonormal
/// columns) after every step, relative to the nearest attractor point.
/// Returns accuracy; optionally captures per-step logits of the first
/// `n_traces` examples.
double project_out_subspace_eval(const RnnParams& p, const LineAttractor& attractor,
                                 const LabeledCorpus& corpus, const Eigen::MatrixXd& basis,
                                 int n_traces = 0,
                                 std::vector<std::vector<double>>* traces = nullptr);

/// Orthonormal random basis (QR of a Gaussian draw) for perturbation controls.
Eigen::MatrixXd random_orthonormal_basis(int dim, int p, std::uint64_t seed);

struct H0Report {
  Barcode h0_barcode;
  Eigen::VectorXd h0_projection;  // onto subspace components
  double baseline_accuracy = 0.0;
  double projected_accuracy = 0.0;  // h0 replaced by its out-of-subspace part
  double random_accuracy = 0.0;     // random-basis control
};

H0Report h0_analysis(const RnnParams& p, const LineAttractor& attractor,
                     const ModifierSubspace& subspace, const LabeledCorpus& corpus,
                     const std::vector<int>& probes, std::uint64_t seed);

/// Accuracy on pad-extended examples minus baseline accuracy.
double eod_pad_eval(const RnnParams& p, const LabeledCorpus& corpus, int n_pads,
                    int pad_token);

}  // namespace rnnscope
