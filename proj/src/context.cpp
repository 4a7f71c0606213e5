#include "rnnscope/context.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rnnscope/linearization.hpp"
#include "rnnscope/rng.hpp"
#include "rnnscope/training.hpp"

namespace rnnscope {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd delta_input_jacobian_at(const RnnParams& p, const VectorXd& h_context,
                                 const VectorXd& h_star) {
  const VectorXd zero = VectorXd::Zero(p.input_size);
  return input_jacobian(p, h_context, zero) - input_jacobian(p, h_star, zero);
}

MatrixXd delta_input_jacobian(const RnnParams& p, int word, const VectorXd& h_star) {
  const VectorXd h_mod = cell_step_token(p, h_star, word);
  return delta_input_jacobian_at(p, h_mod, h_star);
}

ModifierRanking rank_modifiers(const RnnParams& p, const VectorXd& h_star,
                               double threshold) {
  if (!(threshold > 0.0)) {
    throw std::invalid_argument("rank_modifiers: threshold must be > 0");
  }
  ModifierRanking ranking;
  for (int w = 0; w < p.input_size; ++w) {
    ModifierReport report;
    report.word_id = w;
    report.h_mod = cell_step_token(p, h_star, w);
    report.deflection = report.h_mod - h_star;
    report.delta_jinp_norm = delta_input_jacobian_at(p, report.h_mod, h_star).norm();
    ranking.all.push_back(std::move(report));
  }
  std::stable_sort(ranking.all.begin(), ranking.all.end(),
                   [](const ModifierReport& a, const ModifierReport& b) {
                     if (a.delta_jinp_norm != b.delta_jinp_norm) {
                       return a.delta_jinp_norm > b.delta_jinp_norm;
                     }
                     return a.word_id < b.word_id;
                   });
  for (const auto& r : ranking.all) {
    if (r.delta_jinp_norm > threshold) ranking.selected.push_back(r.word_id);
  }
  return ranking;
}

Barcode barcode(const RnnParams& p, const VectorXd& h_context, const VectorXd& h_star,
                const std::vector<int>& probes) {
  const MatrixXd delta = delta_input_jacobian_at(p, h_context, h_star);
  const Eigen::RowVectorXd w_delta = p.readout_state_vector().transpose() * delta;
  Barcode bc;
  bc.probe_ids = probes;
  bc.values.resize(static_cast<Eigen::Index>(probes.size()));
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const int id = probes[i];
    if (id < 0 || id >= p.input_size) {
      throw std::out_of_range("barcode: probe id out of vocabulary");
    }
    bc.values[static_cast<Eigen::Index>(i)] = w_delta[id];
  }
  return bc;
}

std::vector<int> select_probe_words(const VectorXd& word_weights, int k) {
  if (k < 0) throw std::invalid_argument("select_probe_words: k must be >= 0");
  if (2 * k > word_weights.size()) {
    throw std::invalid_argument("select_probe_words: 2k exceeds vocabulary size");
  }
  std::vector<int> order(static_cast<std::size_t>(word_weights.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return word_weights[a] > word_weights[b]; });
  std::vector<int> probes;
  probes.reserve(static_cast<std::size_t>(2 * k));
  for (int i = 0; i < k; ++i) probes.push_back(order[static_cast<std::size_t>(i)]);
  // Negative block, most negative first.
  for (int i = 0; i < k; ++i) {
    probes.push_back(order[order.size() - 1 - static_cast<std::size_t>(i)]);
  }
  return probes;
}

ModifierSubspace fit_modifier_subspace(const std::vector<VectorXd>& deflections,
                                       const VectorXd& attractor_direction, int P) {
  if (P < 1) throw std::invalid_argument("fit_modifier_subspace: P must be >= 1");
  if (static_cast<int>(deflections.size()) < P) {
    throw std::invalid_argument("fit_modifier_subspace: fewer deflections than P");
  }
  const double dir_norm = attractor_direction.norm();
  if (dir_norm == 0.0) {
    throw std::invalid_argument("fit_modifier_subspace: zero attractor direction");
  }
  const VectorXd dir = attractor_direction / dir_norm;
  const auto S = static_cast<Eigen::Index>(deflections.size());
  const auto N = deflections.front().size();
  MatrixXd D(N, S);
  for (Eigen::Index i = 0; i < S; ++i) {
    const VectorXd& d = deflections[static_cast<std::size_t>(i)];
    if (d.size() != N) {
      throw std::invalid_argument("fit_modifier_subspace: deflection size mismatch");
    }
    D.col(i) = d - dir * dir.dot(d);
  }
  const double total = D.squaredNorm();
  if (total < 1e-24) {
    throw std::domain_error(
        "fit_modifier_subspace: no variance remains after removing the attractor "
        "direction (deflections are parallel to it)");
  }
  // Uncentered SVD: the subspace models the deflections themselves, matching
  // the no-intercept bilinear form.
  Eigen::BDCSVD<MatrixXd> svd(D, Eigen::ComputeThinU);
  const VectorXd sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > 1e-12 * sv[0]) rank++;
  }
  if (rank < P) {
    throw std::invalid_argument("fit_modifier_subspace: deflection rank " +
                                std::to_string(rank) + " below P = " + std::to_string(P));
  }
  ModifierSubspace sub;
  sub.P = P;
  sub.attractor_direction = dir;
  sub.components = svd.matrixU().leftCols(P);
  // Canonical sign: largest-magnitude coefficient positive, so results are
  // byte-stable across runs.
  for (int q = 0; q < P; ++q) {
    Eigen::Index argmax = 0;
    sub.components.col(q).cwiseAbs().maxCoeff(&argmax);
    if (sub.components(argmax, q) < 0.0) sub.components.col(q) *= -1.0;
  }
  sub.variance_explained.resize(P);
  for (int q = 0; q < P; ++q) sub.variance_explained[q] = sv[q] * sv[q] / total;
  return sub;
}

std::vector<DeflectionSample> modifier_deflection_samples(
    const RnnParams& p, const std::vector<int>& modifier_words, const VectorXd& h_star,
    int pad_token, int extend_steps, double rel_floor) {
  std::vector<DeflectionSample> samples;
  for (int word : modifier_words) {
    VectorXd h = cell_step_token(p, h_star, word);
    const double initial_norm = (h - h_star).norm();
    for (int step = 0; step <= extend_steps; ++step) {
      if (step > 0) h = cell_step_token(p, h, pad_token);
      VectorXd deflection = h - h_star;
      if (step > 0 && deflection.norm() < rel_floor * initial_norm) break;
      DeflectionSample s;
      s.word_id = word;
      s.step = step;
      s.state = h;
      s.deflection = std::move(deflection);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

namespace {

// Least-squares fit of log|y_t| = log a - t / tau over steps 1..last, using
// points with |y_t| >= floor. Needs two points and a decreasing trend.
std::optional<double> fit_exponential_tau(const std::vector<double>& magnitudes,
                                          double floor, int last_step) {
  const int last = std::min<int>(last_step, static_cast<int>(magnitudes.size()) - 1);
  std::vector<double> xs, ys;
  for (int t = 1; t <= last; ++t) {
    const double m = std::abs(magnitudes[static_cast<std::size_t>(t)]);
    if (m > 0.0 && m >= floor) {
      xs.push_back(static_cast<double>(t));
      ys.push_back(std::log(m));
    }
  }
  if (xs.size() < 2) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double n = static_cast<double>(xs.size());
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return std::nullopt;
  const double slope = (n * sxy - sx * sy) / denom;
  if (slope >= 0.0) return std::nullopt;  // not decaying
  return -1.0 / slope;
}

std::size_t readout_nearest_zero_index(const LineAttractor& attractor) {
  std::size_t idx = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < attractor.points.size(); ++i) {
    const double d = std::abs(attractor.points[i].readout_value);
    if (d < best) {
      best = d;
      idx = i;
    }
  }
  return idx;
}

}  // namespace

ImpulseResponse impulse_response(const RnnParams& p, const LineAttractor& attractor,
                                 int word, int n_pads, int pad_token,
                                 const ModifierSubspace* subspace) {
  if (n_pads < 1) throw std::invalid_argument("impulse_response: n_pads must be >= 1");
  VectorXd h = attractor.points[readout_nearest_zero_index(attractor)].h;

  ImpulseResponse resp;
  resp.word_id = word;
  const int P = subspace ? subspace->P : 0;
  resp.projections.resize(P, n_pads + 1);
  resp.distances.reserve(static_cast<std::size_t>(n_pads + 1));

  h = cell_step_token(p, h, word);
  for (int t = 0; t <= n_pads; ++t) {
    if (t > 0) h = cell_step_token(p, h, pad_token);
    const VectorXd& nearest = nearest_fixed_point(attractor, h).h;
    const VectorXd deflection = h - nearest;
    resp.distances.push_back(deflection.norm());
    for (int q = 0; q < P; ++q) {
      resp.projections(q, t) = subspace->components.col(q).dot(deflection);
    }
  }

  const double floor = 1e-4 * resp.distances.front();
  resp.distance_tau = fit_exponential_tau(resp.distances, floor, std::min(n_pads, 30));
  for (int q = 0; q < P; ++q) {
    std::vector<double> mags(static_cast<std::size_t>(n_pads + 1));
    for (int t = 0; t <= n_pads; ++t) {
      mags[static_cast<std::size_t>(t)] = resp.projections(q, t);
    }
    resp.component_taus.push_back(
        fit_exponential_tau(mags, floor, std::min(n_pads, 30)));
  }
  return resp;
}

double project_out_subspace_eval(const RnnParams& p, const LineAttractor& attractor,
                                 const LabeledCorpus& corpus, const MatrixXd& basis,
                                 int n_traces, std::vector<std::vector<double>>* traces) {
  if (corpus.examples.empty()) {
    throw std::invalid_argument("project_out_subspace_eval: empty corpus");
  }
  if (basis.cols() > 0 && basis.rows() != p.state_dim()) {
    throw std::invalid_argument("project_out_subspace_eval: basis dimension mismatch");
  }
  if (traces) traces->assign(static_cast<std::size_t>(n_traces), {});

  const auto K = static_cast<Eigen::Index>(attractor.points.size());
  MatrixXd points(p.state_dim(), K);
  for (Eigen::Index k = 0; k < K; ++k) points.col(k) = attractor.points[k].h;
  const VectorXd point_sq = points.colwise().squaredNorm();

  const std::size_t n = corpus.examples.size();
  const std::size_t L = corpus.examples.front().tokens.size();
  for (const auto& ex : corpus.examples) {
    if (ex.tokens.size() != L) {
      throw std::invalid_argument("project_out_subspace_eval: mixed lengths");
    }
  }
  int correct = 0;
  constexpr std::size_t kChunk = 512;
  std::size_t pos = 0;
  while (pos < n) {
    const std::size_t end = std::min(n, pos + kChunk);
    const auto B = static_cast<Eigen::Index>(end - pos);
    MatrixXd state = p.h0.replicate(1, B);
    MatrixXd next;
    std::vector<int> step(static_cast<std::size_t>(B));
    for (std::size_t t = 0; t < L; ++t) {
      for (Eigen::Index j = 0; j < B; ++j) {
        step[static_cast<std::size_t>(j)] =
            corpus.examples[pos + static_cast<std::size_t>(j)].tokens[t];
      }
      step_batch(p, state, BatchInput::one_hot(step), next, nullptr);
      state.swap(next);
      if (basis.cols() > 0) {
        const MatrixXd dots = points.transpose() * state;  // K x B
        for (Eigen::Index j = 0; j < B; ++j) {
          Eigen::Index best = 0;
          (point_sq - 2.0 * dots.col(j)).minCoeff(&best);
          const VectorXd deflection = state.col(j) - points.col(best);
          state.col(j) -= basis * (basis.transpose() * deflection);
        }
      }
      if (traces) {
        for (Eigen::Index j = 0; j < B; ++j) {
          const std::size_t which = pos + static_cast<std::size_t>(j);
          if (which < static_cast<std::size_t>(n_traces)) {
            (*traces)[which].push_back(readout(p, state.col(j)));
          }
        }
      }
    }
    for (Eigen::Index j = 0; j < B; ++j) {
      const double z = readout(p, state.col(j));
      const int label = corpus.examples[pos + static_cast<std::size_t>(j)].label;
      correct += ((z > 0.0) == (label == 1)) ? 1 : 0;
    }
    pos = end;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

MatrixXd random_orthonormal_basis(int dim, int p, std::uint64_t seed) {
  if (p < 0 || p > dim) throw std::invalid_argument("random_orthonormal_basis: bad p");
  if (p == 0) return MatrixXd::Zero(dim, 0);
  Rng rng(seed);
  MatrixXd g(dim, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < dim; ++i) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(dim, p);
  const MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  for (int j = 0; j < p; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

H0Report h0_analysis(const RnnParams& p, const LineAttractor& attractor,
                     const ModifierSubspace& subspace, const LabeledCorpus& corpus,
                     const std::vector<int>& probes, std::uint64_t seed) {
  H0Report report;
  const VectorXd& h_ref = attractor.points[readout_nearest_zero_index(attractor)].h;
  report.h0_barcode = barcode(p, p.h0, h_ref, probes);

  const VectorXd& h_near = nearest_fixed_point(attractor, p.h0).h;
  const VectorXd deflection = p.h0 - h_near;
  report.h0_projection = subspace.components.transpose() * deflection;

  report.baseline_accuracy = evaluate_accuracy(p, corpus);
  const VectorXd h0_projected =
      p.h0 - subspace.components * (subspace.components.transpose() * deflection);
  report.projected_accuracy = evaluate_accuracy_with_h0(p, corpus, h0_projected);
  const MatrixXd rand_basis = random_orthonormal_basis(p.state_dim(), subspace.P, seed);
  const VectorXd h0_random = p.h0 - rand_basis * (rand_basis.transpose() * deflection);
  report.random_accuracy = evaluate_accuracy_with_h0(p, corpus, h0_random);
  return report;
}

double eod_pad_eval(const RnnParams& p, const LabeledCorpus& corpus, int n_pads,
                    int pad_token) {
  if (n_pads < 0) throw std::invalid_argument("eod_pad_eval: n_pads must be >= 0");
  const double baseline = evaluate_accuracy(p, corpus);
  if (n_pads == 0) return 0.0;
  LabeledCorpus padded = corpus;
  for (auto& ex : padded.examples) {
    ex.tokens.insert(ex.tokens.end(), static_cast<std::size_t>(n_pads), pad_token);
  }
  return evaluate_accuracy(p, padded) - baseline;
}

}  // namespace rnnscope
