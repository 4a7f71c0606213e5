#include "rnnscope/fixed_points.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "rnnscope/eigensystem.hpp"
#include "rnnscope/rng.hpp"

namespace rnnscope {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<VectorXd> sample_initial_states(const RnnParams& params,
                                            const std::vector<std::vector<int>>& sequences,
                                            int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("sample_initial_states: n must be >= 0");
  if (n == 0) return {};
  if (sequences.empty()) {
    throw std::invalid_argument("sample_initial_states: empty corpus");
  }
  // Draw (example, step) pairs first, then run only the touched examples.
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  picks.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::size_t ex = rng.below(sequences.size());
    if (sequences[ex].empty()) {
      throw std::invalid_argument("sample_initial_states: empty sequence in corpus");
    }
    picks.emplace_back(ex, rng.below(sequences[ex].size()));
  }
  std::vector<std::size_t> order(picks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return picks[a].first < picks[b].first;
  });

  std::vector<VectorXd> states(picks.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    const std::size_t ex = picks[order[i]].first;
    while (j < order.size() && picks[order[j]].first == ex) ++j;
    const SequenceRun run = run_sequence(params, sequences[ex]);
    for (std::size_t k = i; k < j; ++k) {
      states[order[k]] = run.trajectory.col(
          static_cast<Eigen::Index>(picks[order[k]].second));
    }
    i = j;
  }
  return states;
}

namespace {

// Speeds |h - F(h,0)| per column.
VectorXd batch_speeds(const RnnParams& params, const MatrixXd& H) {
  MatrixXd FH;
  step_batch(params, H, BatchInput::zero(), FH, nullptr);
  return (H - FH).colwise().norm();
}

}  // namespace

FixedPointSearchResult find_fixed_points(const RnnParams& params,
                                         const std::vector<VectorXd>& inits,
                                         const FixedPointConfig& cfg) {
  if (inits.empty()) throw std::invalid_argument("find_fixed_points: no initial states");
  const int S = params.state_dim();
  FixedPointSearchResult result;
  result.n_initial = static_cast<int>(inits.size());

  MatrixXd H(S, static_cast<Eigen::Index>(inits.size()));
  for (std::size_t i = 0; i < inits.size(); ++i) {
    if (inits[i].size() != S) {
      throw std::invalid_argument("find_fixed_points: init dimension mismatch");
    }
    H.col(static_cast<Eigen::Index>(i)) = inits[i];
  }

  // Batched Adam on the states. Each column freezes the moment it satisfies
  // the speed tolerance (checked every iteration): optimizing past that point
  // does not improve the answer, it slides states along the attractor valley
  // toward the globally slowest point and collapses the manifold.
  std::vector<Eigen::Index> active(inits.size());
  std::iota(active.begin(), active.end(), Eigen::Index{0});

  MatrixXd A = H;  // active working copy
  MatrixXd adam_m = MatrixXd::Zero(S, A.cols());
  MatrixXd adam_v = MatrixXd::Zero(S, A.cols());
  Eigen::RowVectorXd mask = Eigen::RowVectorXd::Ones(A.cols());
  const double decay =
      cfg.max_iters > 0
          ? std::exp(std::log(std::max(cfg.lr_final, 1e-12) / cfg.learning_rate) /
                     static_cast<double>(cfg.max_iters))
          : 1.0;
  double lr = cfg.learning_rate;
  const double kBeta1 = cfg.adam_beta1, kBeta2 = cfg.adam_beta2;
  constexpr double kEps = 1e-8;
  constexpr int kCompactEvery = 200;

  MatrixXd FH, grad, dprev, update;
  StepCache cache;
  long t = 0;
  for (int iter = 0; iter < cfg.max_iters && A.cols() > 0; ++iter) {
    step_batch(params, A, BatchInput::zero(), FH, &cache);
    const MatrixXd diff = A - FH;  // d q / d F = -diff, d q / d h (direct) = diff
    for (Eigen::Index c = 0; c < A.cols(); ++c) {
      if (mask[c] != 0.0 && diff.col(c).norm() < cfg.tol) mask[c] = 0.0;
    }
    step_backward(params, A, BatchInput::zero(), FH, cache, diff, dprev, nullptr);
    grad = diff - dprev;

    t += 1;
    adam_m = kBeta1 * adam_m + (1.0 - kBeta1) * grad;
    adam_v = kBeta2 * adam_v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double m_corr = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double v_corr = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    update = (lr * (adam_m.array() / m_corr) /
              ((adam_v.array() / v_corr).sqrt() + kEps))
                 .matrix();
    update.array().rowwise() *= mask.array();  // frozen columns stay put
    A -= update;
    lr *= decay;

    if ((iter + 1) % kCompactEvery == 0) {
      // Persist every column, then drop the frozen ones from the working set.
      for (Eigen::Index c = 0; c < A.cols(); ++c) {
        H.col(active[static_cast<std::size_t>(c)]) = A.col(c);
      }
      std::vector<Eigen::Index> keep;
      for (Eigen::Index c = 0; c < A.cols(); ++c) {
        if (mask[c] != 0.0) keep.push_back(c);
      }
      if (static_cast<Eigen::Index>(keep.size()) < A.cols()) {
        MatrixXd A2(S, static_cast<Eigen::Index>(keep.size()));
        MatrixXd m2(S, A2.cols()), v2(S, A2.cols());
        std::vector<Eigen::Index> active2;
        active2.reserve(keep.size());
        for (std::size_t k = 0; k < keep.size(); ++k) {
          const Eigen::Index c = keep[k];
          A2.col(static_cast<Eigen::Index>(k)) = A.col(c);
          m2.col(static_cast<Eigen::Index>(k)) = adam_m.col(c);
          v2.col(static_cast<Eigen::Index>(k)) = adam_v.col(c);
          active2.push_back(active[static_cast<std::size_t>(c)]);
        }
        A.swap(A2);
        adam_m.swap(m2);
        adam_v.swap(v2);
        active.swap(active2);
        mask = Eigen::RowVectorXd::Ones(A.cols());
      }
    }
  }
  for (Eigen::Index c = 0; c < A.cols(); ++c) {
    H.col(active[static_cast<std::size_t>(c)]) = A.col(c);
  }

  // Classify by speed tier.
  const VectorXd speeds = batch_speeds(params, H);
  struct Candidate {
    VectorXd h;
    double q, speed, ro;
  };
  std::vector<Candidate> strict, loose;
  for (Eigen::Index c = 0; c < H.cols(); ++c) {
    const double sp = speeds[c];
    const double ro = readout(params, H.col(c));
    if (!(sp < cfg.loose_tol)) {
      result.n_dropped += 1;
      continue;
    }
    if (ro < cfg.readout_min || ro > cfg.readout_max) {
      result.n_dropped += 1;
      continue;
    }
    Candidate cand{H.col(c), 0.5 * sp * sp, sp, ro};
    if (sp < cfg.tol) {
      result.n_converged += 1;
      strict.push_back(std::move(cand));
    } else {
      loose.push_back(std::move(cand));
    }
  }

  // Greedy dedup in ascending-q order keeps the slowest representative of
  // each cluster; output sorted by readout.
  auto dedup = [&](std::vector<Candidate>& cands) {
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.q < b.q; });
    std::vector<Candidate> kept;
    for (auto& c : cands) {
      bool merged = false;
      for (const auto& k : kept) {
        if ((c.h - k.h).norm() < cfg.merge_radius) {
          merged = true;
          break;
        }
      }
      if (!merged) kept.push_back(std::move(c));
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const Candidate& a, const Candidate& b) { return a.ro < b.ro; });
    std::vector<FixedPoint> out;
    out.reserve(kept.size());
    for (auto& k : kept) {
      FixedPoint fp;
      fp.h = std::move(k.h);
      fp.residual_q = k.q;
      fp.speed = k.speed;
      fp.readout_value = k.ro;
      fp.lin = linearize_at_zero_input(params, fp.h);
      out.push_back(std::move(fp));
    }
    return out;
  };
  result.points = dedup(strict);
  result.loose_points = dedup(loose);
  return result;
}

LineAttractor assemble_line_attractor(std::vector<FixedPoint> points) {
  if (points.size() < 3) {
    throw std::invalid_argument("assemble_line_attractor: need at least 3 points");
  }
  std::stable_sort(points.begin(), points.end(), [](const FixedPoint& a, const FixedPoint& b) {
    return a.readout_value < b.readout_value;
  });
  LineAttractor attractor;
  attractor.points = std::move(points);
  const auto& pts = attractor.points;
  const std::size_t n = pts.size();
  attractor.readout_min = pts.front().readout_value;
  attractor.readout_max = pts.back().readout_value;

  attractor.tangents.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? i : i + 1;
    VectorXd d = pts[hi].h - pts[lo].h;
    const double norm = d.norm();
    if (norm == 0.0) {
      throw std::invalid_argument("assemble_line_attractor: duplicate points");
    }
    attractor.tangents[i] = d / norm;
  }

  // Top principal component of the (centered) point cloud.
  const auto S = pts.front().h.size();
  MatrixXd cloud(S, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) cloud.col(static_cast<Eigen::Index>(i)) = pts[i].h;
  const VectorXd mean = cloud.rowwise().mean();
  cloud.colwise() -= mean;
  Eigen::BDCSVD<MatrixXd> svd(cloud, Eigen::ComputeThinU);
  const VectorXd sv = svd.singularValues();
  const double total = sv.squaredNorm();
  attractor.principal_direction = svd.matrixU().col(0);
  attractor.pc1_variance_fraction = total > 0.0 ? sv[0] * sv[0] / total : 0.0;
  return attractor;
}

std::size_t nearest_fixed_point_index(const LineAttractor& attractor, const VectorXd& h) {
  if (attractor.points.empty()) {
    throw std::invalid_argument("nearest_fixed_point: empty attractor");
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < attractor.points.size(); ++i) {
    const double d = (attractor.points[i].h - h).norm();
    if (d < best_d) {  // strict: ties keep the lower index
      best_d = d;
      best = i;
    }
  }
  return best;
}

const FixedPoint& nearest_fixed_point(const LineAttractor& attractor, const VectorXd& h) {
  return attractor.points[nearest_fixed_point_index(attractor, h)];
}

void save_line_attractor(const std::filesystem::path& path, const LineAttractor& attractor) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["pc1_variance_fraction"] = attractor.pc1_variance_fraction;
  nlohmann::json pd = nlohmann::json::array();
  for (Eigen::Index i = 0; i < attractor.principal_direction.size(); ++i) {
    pd.push_back(attractor.principal_direction[i]);
  }
  doc["principal_direction"] = std::move(pd);
  nlohmann::json points = nlohmann::json::array();
  for (const auto& fp : attractor.points) {
    nlohmann::json rec;
    nlohmann::json h = nlohmann::json::array();
    for (Eigen::Index i = 0; i < fp.h.size(); ++i) h.push_back(fp.h[i]);
    rec["h"] = std::move(h);
    rec["speed"] = fp.speed;
    rec["readout"] = fp.readout_value;
    const EigenSystem sys = eig(fp.lin.J_rec);
    nlohmann::json eigs = nlohmann::json::array();
    for (int a = 0; a < sys.size(); ++a) {
      eigs.push_back({sys.values[a].real(), sys.values[a].imag()});
    }
    rec["eigenvalues"] = std::move(eigs);
    points.push_back(std::move(rec));
  }
  doc["points"] = std::move(points);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << doc.dump(1) << '\n';
}

LineAttractor load_line_attractor(const std::filesystem::path& path,
                                  const RnnParams& params) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  nlohmann::json doc;
  in >> doc;
  std::vector<FixedPoint> points;
  for (const auto& rec : doc.at("points")) {
    FixedPoint fp;
    const auto& h = rec.at("h");
    fp.h.resize(static_cast<Eigen::Index>(h.size()));
    for (Eigen::Index i = 0; i < fp.h.size(); ++i) {
      fp.h[i] = h[static_cast<std::size_t>(i)].get<double>();
    }
    fp.speed = rec.at("speed").get<double>();
    fp.residual_q = 0.5 * fp.speed * fp.speed;
    fp.readout_value = rec.at("readout").get<double>();
    fp.lin = linearize_at_zero_input(params, fp.h);
    points.push_back(std::move(fp));
  }
  return assemble_line_attractor(std::move(points));
}

}  // namespace rnnscope
