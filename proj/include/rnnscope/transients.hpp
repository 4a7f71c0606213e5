#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "rnnscope/cells.hpp"
#include "rnnscope/eigensystem.hpp"
#include "rnnscope/fixed_points.hpp"

namespace rnnscope {

struct TransientModeEntry {
  std::vector<int> group;             // mode index or conjugate pair
  std::optional<double> timescale;    // tokens; unset for |lambda| >= 1
  double magnitude = 0.0;             // |lambda|
  double readout_effect = 0.0;        // mean |instantaneous prediction change|
  bool is_integration_mode = false;   // |lambda - 1| < integration band
};

struct StepResponseSeries {
  int word_id = 0;
  std::vector<double> readout;          // relative to the fixed point, per step
  std::vector<double> readout_removed;  // same with identified modes projected out
  double initial = 0.0;                 // step-1 response
  double steady = 0.0;                  // final-step response
  double suppression_ratio = 0.0;       // steady / initial
  double suppression_ratio_removed = 0.0;
};

struct TransientConfig {
  int n_steps = 60;           // pad steps following the probe word
  int n_transient_modes = 2;  // modes to identify and remove
  double integration_band = 0.05;   // |lambda - 1| below this = integration mode
  double min_timescale = 2.0;       // intermediate-timescale window
  double max_timescale = 100.0;
};

struct TransientAnalysis {
  std::vector<TransientModeEntry> modes;  // scatter data per mode group
  std::vector<std::vector<int>> identified_groups;
  std::vector<StepResponseSeries> responses;
};

/// End-of-document transient analysis around one fixed point: per eigenmode,
/// the instantaneous prediction change when the mode is removed from the
/// one-step response to each probe word; identifies the modes with large
/// readout effect and intermediate timescale, and compares full step
/// responses against responses with those modes projected out each step.
TransientAnalysis eod_transient_analysis(const RnnParams& p, const FixedPoint& fp,
                                         const std::vector<int>& probe_words,
                                         int pad_token, const TransientConfig& cfg);

}  // namespace rnnscope
