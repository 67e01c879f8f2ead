/*
 * Copyright 2026 The Excursion Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Growing-circle method for k segments sharing the origin: the first
// u-crossing met by a circle of radius t growing from 0 is counted by a Rice
// integral over t, with the conditional expectation E_i(t) evaluated on an
// equidistant grid by regression onto (X_{t v_i}, d_{v_i} X_{t v_i}).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "capacity2.hpp"
#include "covariance.hpp"
#include "gauss.hpp"
#include "geometry.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace excursion {

struct AlphaBeta {
  double alpha = 0.0; // E[X_{h v_j} X_{t v_i}]
  double beta = 0.0;  // E[X_{h v_j} d_{v_i} X_{t v_i}]
};

/// alpha = r(t v_i - h v_j), beta = grad r(t v_i - h v_j) . v_i.
inline AlphaBeta alpha_beta(const KSegmentProblem& p, std::size_t i, double t, std::size_t j, double h) {
  if (i >= p.k() || j >= p.k()) throw std::out_of_range("alpha_beta: segment index out of range");
  const Vec2 vi = p.direction(i);
  const Vec2 lag = t * vi - h * p.direction(j);
  if (lag.squaredNorm() == 0.0) return {1.0, 0.0};
  const Partials d = p.model.partials(lag);
  return {d.r, d.d10 * vi(0) + d.d01 * vi(1)};
}

/// Regression of the constrained grid values on the conditioning pair at
/// (i, t). Coordinates are the active cells (h_m, j) with h_m <= min(l_j, t),
/// the origin counted once, followed by the ray ends min(l_j, t) that are not
/// already grid points. The end on ray i is the conditioning point.
struct KRegressionState {
  std::size_t pivot = 0;
  double t = 0.0;
  std::vector<double> grid;                            // h_1..h_n on [0, max l_j]
  Eigen::MatrixXd alpha;                               // n x k
  Eigen::MatrixXd beta_std;                            // n x k, beta / sqrt(deriv_var)
  std::vector<std::pair<std::size_t, std::size_t>> cells; // active (m, j); m == n marks a ray end
  std::vector<double> cell_radius;
  Eigen::VectorXd cell_alpha;
  Eigen::VectorXd cell_beta_std;
  CovarianceMatrix z_cov;
  double deriv_var = 0.0;
};

inline KRegressionState make_k_regression_state(const KSegmentProblem& p, std::size_t i, double t, int n) {
  if (n < 2) throw std::invalid_argument("k-segment regression: n must be >= 2");
  if (i >= p.k()) throw std::out_of_range("k-segment regression: pivot index out of range");
  KRegressionState s;
  s.pivot = i;
  s.t = t;
  s.grid = equidistant_grid({0.0, p.max_length()}, n);
  s.deriv_var = directional_deriv_variance(p.model, p.direction(i));
  if (!(s.deriv_var > 0.0)) throw NumericalError("k-segment regression: derivative variance vanishes");
  const double sd = std::sqrt(s.deriv_var);
  const std::size_t k = p.k();
  s.alpha.resize(n, static_cast<Eigen::Index>(k));
  s.beta_std.resize(n, static_cast<Eigen::Index>(k));
  for (int m = 0; m < n; ++m)
    for (std::size_t j = 0; j < k; ++j) {
      const AlphaBeta ab = alpha_beta(p, i, t, j, s.grid[static_cast<std::size_t>(m)]);
      s.alpha(m, static_cast<Eigen::Index>(j)) = ab.alpha;
      s.beta_std(m, static_cast<Eigen::Index>(j)) = ab.beta / sd;
    }
  const double snap = 1e-9 * std::max(p.max_length(), 1.0);
  std::vector<Vec2> pts;
  std::vector<double> ca, cb;
  for (int m = 0; m < n; ++m) {
    const double h = s.grid[static_cast<std::size_t>(m)];
    for (std::size_t j = 0; j < k; ++j) {
      if (h > std::min(p.lengths[j], t) + snap) continue;
      if (m == 0 && j > 0) continue; // the shared origin
      s.cells.emplace_back(static_cast<std::size_t>(m), j);
      s.cell_radius.push_back(h);
      pts.push_back(h * p.direction(j));
      ca.push_back(s.alpha(m, static_cast<Eigen::Index>(j)));
      cb.push_back(s.beta_std(m, static_cast<Eigen::Index>(j)));
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    const double e = std::min(p.lengths[j], t);
    if (e <= snap) continue;
    const double pos = e / p.max_length() * (n - 1);
    if (std::abs(pos - std::round(pos)) * p.max_length() / (n - 1) <= snap) continue;
    const AlphaBeta ab = alpha_beta(p, i, t, j, e);
    s.cells.emplace_back(static_cast<std::size_t>(n), j);
    s.cell_radius.push_back(e);
    pts.push_back(e * p.direction(j));
    ca.push_back(ab.alpha);
    cb.push_back(ab.beta / sd);
  }
  if (std::none_of(pts.begin(), pts.end(), [&](const Vec2& q) { return (q - t * p.direction(i)).norm() <= snap; }))
    throw std::logic_error("k-segment regression: conditioning point missing");
  const auto dim = static_cast<Eigen::Index>(pts.size());
  s.cell_alpha = Eigen::Map<Eigen::VectorXd>(ca.data(), dim);
  s.cell_beta_std = Eigen::Map<Eigen::VectorXd>(cb.data(), dim);
  Eigen::MatrixXd cov(dim, dim);
  for (Eigen::Index a = 0; a < dim; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) {
      const double v = p.model.r(pts[static_cast<std::size_t>(a)] - pts[static_cast<std::size_t>(b)]) -
                       s.cell_alpha(a) * s.cell_alpha(b) - s.cell_beta_std(a) * s.cell_beta_std(b);
      cov(a, b) = cov(b, a) = v;
    }
  for (Eigen::Index a = 0; a < dim; ++a) {
    if (cov(a, a) < -1e-10) throw NumericalError("k-segment regression: negative residual variance");
    cov(a, a) = std::max(cov(a, a), 0.0);
  }
  s.z_cov = CovarianceMatrix(std::move(cov));
  return s;
}

/// w_{mj} = u (1 - alpha) - y beta / deriv_var when h_m <= min(l_j, t), +inf otherwise
/// (y is the value of d_{v_i} X at the conditioning point).
inline Eigen::MatrixXd w_matrix(const KSegmentProblem& p, const KRegressionState& s, double y, double u) {
  const auto n = static_cast<Eigen::Index>(s.grid.size());
  const auto k = static_cast<Eigen::Index>(p.k());
  const double sd = std::sqrt(s.deriv_var);
  Eigen::MatrixXd w(n, k);
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index j = 0; j < k; ++j) {
      if (s.grid[static_cast<std::size_t>(m)] > std::min(p.lengths[static_cast<std::size_t>(j)], s.t)) {
        w(m, j) = std::numeric_limits<double>::infinity();
      } else {
        w(m, j) = u * (1.0 - s.alpha(m, j)) - y * s.beta_std(m, j) / sd;
      }
    }
  return w;
}

/// E_i(t) = E[|d_{v_i} X_{t v_i}| 1(X_{h v_j} <= u, h <= min(l_j, t), all j) | X_{t v_i} = u]
/// on the n-point grid. Cells beyond min(l_j, t) are dropped before the cdf.
inline EstimateWithError e_i_of_t(const KSegmentProblem& p, std::size_t i, double t, int n,
                                  const CondIntegrandOptions& opts = {}) {
  if (!(t >= 0.0) || t > p.lengths.at(i) * (1.0 + 1e-12)) throw std::out_of_range("e_i_of_t: t outside [0, l_i]");
  const KRegressionState s = make_k_regression_state(p, i, t, n);
  const double sd = std::sqrt(s.deriv_var);
  const Eigen::VectorXd w = p.u * (Eigen::VectorXd::Ones(s.cell_alpha.size()) - s.cell_alpha);
  if (opts.method == YIntegration::joint_qmc) {
    const EstimateWithError e = abs_weighted_mvn_cdf(w, s.cell_beta_std, s.z_cov, opts.mvn);
    return {sd * e.value, sd * e.abs_error, "cond-joint-qmc"};
  }
  auto eval = [&](int order) {
    const quad::Rule& rule = quad::half_range_hermite(order);
    double sum = 0.0, err = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q)
      for (double sign : {1.0, -1.0}) {
        const double z = sign * rule.nodes[q];
        const EstimateWithError f = mvn_cdf(Eigen::VectorXd(w - z * s.cell_beta_std), s.z_cov, opts.mvn);
        sum += rule.weights[q] * std::abs(z) * f.value;
        err += rule.weights[q] * std::abs(z) * f.abs_error;
      }
    return std::pair{sum, err};
  };
  const auto fine = eval(opts.hermite_order);
  const auto coarse = eval(std::max(2, opts.hermite_order / 2));
  return {sd * fine.first, sd * (fine.second + std::abs(fine.first - coarse.first)), "cond-hermite"};
}

struct CapacityKOptions {
  int n = 24;
  int t_order = 16; // Gauss-Legendre nodes per panel
  bool refine = true;
  CondIntegrandOptions cond{};
};

struct SurvivalEstimate {
  double survival = 0.0; // P[L_1 > l_1, ..., L_k > l_k]
  double capacity = 0.0; // T(K) = 1 - survival
  double abs_error = 0.0;
  std::string method;
  double unclamped = 0.0;
  bool clamp_warning = false;
  double grid_change = 0.0;
  double t_error = 0.0;
  double sampling_error = 0.0;

  EstimateWithError estimate() const { return {survival, abs_error, method}; }
  EstimateWithError capacity_estimate() const { return {capacity, abs_error, method}; }
};

namespace detail {

inline KSegmentProblem canonical_order(const KSegmentProblem& p) {
  std::vector<std::size_t> idx(p.k());
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](std::size_t j) {
    double a = std::fmod(p.angles[j], 2.0 * std::numbers::pi);
    if (a < 0.0) a += 2.0 * std::numbers::pi;
    return std::pair{a, p.lengths[j]};
  };
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return key(x) < key(y); });
  KSegmentProblem q = p;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    q.angles[j] = p.angles[idx[j]];
    q.lengths[j] = p.lengths[idx[j]];
  }
  return q;
}

struct SurvivalSum {
  double value = 0.0;
  double var = 0.0;
};

// sum_i integral_0^{l_i} E_i(t) dt, panels broken at the lengths l_j < l_i;
// E_i(t) evaluations are cached on (i, t, n) across rules
inline SurvivalSum growing_circle_integral(const KSegmentProblem& p, const std::vector<std::pair<int, int>>& rules,
                                           const CondIntegrandOptions& cond, std::vector<SurvivalSum>& per_rule) {
  struct Node {
    std::size_t i;
    double t;
    int n;
  };
  std::map<std::tuple<std::size_t, double, int>, std::size_t> cache;
  std::vector<Node> tasks;
  std::vector<std::vector<std::pair<std::size_t, double>>> weighted(rules.size());
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const auto [n, order] = rules[r];
    const quad::Rule& base = quad::gauss_legendre(order);
    for (std::size_t i = 0; i < p.k(); ++i) {
      std::vector<double> breaks{0.0, p.lengths[i]};
      for (double l : p.lengths)
        if (l < p.lengths[i]) breaks.push_back(l);
      std::sort(breaks.begin(), breaks.end());
      breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
      for (std::size_t b = 0; b + 1 < breaks.size(); ++b) {
        const double half = 0.5 * (breaks[b + 1] - breaks[b]);
        const double mid = 0.5 * (breaks[b + 1] + breaks[b]);
        for (std::size_t q = 0; q < base.size(); ++q) {
          const double t = mid + half * base.nodes[q];
          const auto key = std::tuple{i, t, n};
          auto it = cache.find(key);
          if (it == cache.end()) {
            it = cache.emplace(key, tasks.size()).first;
            tasks.push_back({i, t, n});
          }
          weighted[r].emplace_back(it->second, half * base.weights[q]);
        }
      }
    }
  }
  auto values = parallel::map(tasks.size(), [&](std::size_t idx) {
    CondIntegrandOptions local = cond;
    local.mvn.seed = node_seed(cond.mvn.seed, 0x6b00000000ull ^ idx);
    return e_i_of_t(p, tasks[idx].i, tasks[idx].t, tasks[idx].n, local);
  });
  per_rule.assign(rules.size(), {});
  for (std::size_t r = 0; r < rules.size(); ++r)
    for (const auto& [idx, w] : weighted[r]) {
      per_rule[r].value += w * values[idx].value;
      per_rule[r].var += w * w * std::pow(values[idx].abs_error / 3.0, 2);
    }
  return per_rule.front();
}

} // namespace detail

/// P[L_1 > l_1, ..., L_k > l_k] = Phi(u) - phi(u) sum_i integral_0^{l_i} E_i(t) dt,
/// and T(K) = 1 - survival. Errors are assembled as in capacity_two_segments.
inline SurvivalEstimate joint_survival_k(const KSegmentProblem& problem, const CapacityKOptions& opts = {}) {
  problem.validate();
  if (opts.n < 2) throw std::invalid_argument("joint_survival_k: n must be >= 2");
  if (opts.t_order < 2) throw std::invalid_argument("joint_survival_k: t_order must be >= 2");
  const KSegmentProblem p = detail::canonical_order(problem);
  if (static_cast<std::size_t>(opts.n) * p.k() + 2 > kMvnMaxDimension)
    throw std::invalid_argument("joint_survival_k: n*k exceeds the cdf dimension cap");
  const int low_order = std::max(2, opts.t_order / 2);
  std::vector<std::pair<int, int>> rules{{opts.n, opts.t_order}, {opts.n, low_order}};
  if (opts.refine) rules.push_back({2 * opts.n - 1, low_order});
  std::vector<detail::SurvivalSum> sums;
  detail::growing_circle_integral(p, rules, opts.cond, sums);
  const double dens = normal_pdf(p.u);
  SurvivalEstimate out;
  out.t_error = dens * std::abs(sums[0].value - sums[1].value);
  if (opts.refine) out.grid_change = dens * std::abs(sums[1].value - sums[2].value);
  out.sampling_error = 3.0 * dens * std::sqrt(sums[0].var);
  out.unclamped = normal_cdf(p.u) - dens * sums[0].value;
  out.abs_error = out.sampling_error + out.t_error + out.grid_change;
  out.survival = std::clamp(out.unclamped, 0.0, 1.0);
  out.clamp_warning = std::abs(out.survival - out.unclamped) > out.abs_error;
  out.capacity = 1.0 - out.survival;
  out.method = "growing-circle";
  return out;
}

} // namespace excursion
