#include "rnnscope/transients.hpp"

#include <algorithm>
#include <cmath>

namespace rnnscope {

using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

TransientAnalysis eod_transient_analysis(const RnnParams& p, const FixedPoint& fp,
                                         const std::vector<int>& probe_words,
                                         int pad_token, const TransientConfig& cfg) {
  if (probe_words.empty()) {
    throw std::invalid_argument("eod_transient_analysis: no probe words");
  }
  const EigenSystem sys = eig(fp.lin.J_rec);
  const VectorXd w = p.readout_state_vector();
  const Eigen::VectorXcd wc = w.cast<std::complex<double>>();

  // One-step linearized responses per probe word.
  std::vector<VectorXcd> responses;
  responses.reserve(probe_words.size());
  for (int word : probe_words) {
    if (word < 0 || word >= p.input_size) {
      throw std::out_of_range("eod_transient_analysis: probe id out of vocabulary");
    }
    responses.push_back(fp.lin.J_inp.col(word).cast<std::complex<double>>());
  }

  TransientAnalysis out;
  for (const auto& group : mode_groups(sys)) {
    TransientModeEntry entry;
    entry.group = group;
    entry.magnitude = std::abs(sys.values[group.front()]);
    entry.is_integration_mode =
        std::abs(sys.values[group.front()] - std::complex<double>(1.0, 0.0)) <
        cfg.integration_band;
    if (entry.magnitude > 0.0 && entry.magnitude < 1.0) {
      entry.timescale = eigen_timescale(sys.values[group.front()]);
    }
    // Instantaneous prediction change from removing this mode group out of
    // the one-step response, averaged over probe words.
    double total = 0.0;
    for (const auto& delta : responses) {
      std::complex<double> change = 0.0;
      for (int a : group) {
        change += wc.dot(sys.right.col(a)) * (sys.left.row(a) * delta)(0);
      }
      total += std::abs(change.real());
    }
    entry.readout_effect = total / static_cast<double>(responses.size());
    out.modes.push_back(std::move(entry));
  }

  // Identify: largest readout effect among non-integration modes inside the
  // intermediate-timescale window.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < out.modes.size(); ++i) {
    const auto& m = out.modes[i];
    if (m.is_integration_mode) continue;
    if (!m.timescale) continue;
    if (*m.timescale < cfg.min_timescale || *m.timescale > cfg.max_timescale) continue;
    candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return out.modes[a].readout_effect > out.modes[b].readout_effect;
  });
  std::vector<int> removal_set;
  for (std::size_t i = 0;
       i < candidates.size() && static_cast<int>(i) < cfg.n_transient_modes; ++i) {
    out.identified_groups.push_back(out.modes[candidates[i]].group);
    for (int a : out.modes[candidates[i]].group) removal_set.push_back(a);
  }

  // Full nonlinear step responses, with and without per-step mode removal.
  const double base = readout(p, fp.h);
  for (int word : probe_words) {
    StepResponseSeries series;
    series.word_id = word;
    VectorXd h = cell_step_token(p, fp.h, word);
    VectorXd h_removed = remove_modes(h, fp.h, sys, removal_set);
    series.readout.push_back(readout(p, h) - base);
    series.readout_removed.push_back(readout(p, h_removed) - base);
    for (int t = 1; t <= cfg.n_steps; ++t) {
      h = cell_step_token(p, h, pad_token);
      h_removed = cell_step_token(p, h_removed, pad_token);
      h_removed = remove_modes(h_removed, fp.h, sys, removal_set);
      series.readout.push_back(readout(p, h) - base);
      series.readout_removed.push_back(readout(p, h_removed) - base);
    }
    series.initial = series.readout.front();
    series.steady = series.readout.back();
    series.suppression_ratio =
        series.initial != 0.0 ? series.steady / series.initial : 0.0;
    series.suppression_ratio_removed =
        series.readout_removed.front() != 0.0
            ? series.readout_removed.back() / series.readout_removed.front()
            : 0.0;
    out.responses.push_back(std::move(series));
  }
  return out;
}

}  // namespace rnnscope
