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

// Sweeping-line capacity functional of the excursion set {X >= u} for a
// bundle of two segments. Points of K are visited in order of distance from
// the origin; the first u-crossing is counted by a Rice integral whose
// integrand is a Gaussian conditional expectation, evaluated on a finite
// grid by regression onto (Y_c, Y'_c).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "covariance.hpp"
#include "gauss.hpp"
#include "geometry.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "random.hpp"

namespace excursion {

/// Direction of the derivative Y'_theta = -dY_theta/dtheta: v1 on the
/// first branch, -v2 on the second.
inline Vec2 path_derivative_direction(const TwoSegmentProblem& p, double theta) {
  return theta <= p.l1 ? p.v1() : Vec2(-p.v2());
}

/// E(Y'_theta^2) = v^T Lambda v for the branch containing theta (theta = l1
/// is assigned to the first branch).
inline double y_deriv_variance(const TwoSegmentProblem& p, double theta) {
  if (theta < 0.0 || theta > p.total_length() + 1e-12 * (1.0 + p.total_length()))
    throw std::out_of_range("y_deriv_variance: theta outside [0, l1+l2]");
  const Vec2 v = path_derivative_direction(p, theta);
  return std::max(0.0, v.dot(p.model.spectral_moments() * v));
}

struct RegressionCoeffs {
  double a = 0.0; // E[Y_alpha Y_theta]
  double b = 0.0; // E[Y_alpha Y'_theta]
};

/// Regression coefficients of Y_alpha on (Y_theta, Y'_theta), computed from
/// the lag rho(alpha) - rho(theta).
inline RegressionCoeffs regression_coeffs(const TwoSegmentProblem& p, double alpha, double theta) {
  const Vec2 lag = rho_map(p, alpha) - rho_map(p, theta);
  if (lag.squaredNorm() == 0.0) return {1.0, 0.0};
  const Partials d = p.model.partials(lag);
  const Vec2 v = path_derivative_direction(p, theta);
  // E[X_{s+h} d_v X_s] = -grad r(h) . v
  return {d.r, -(d.d10 * v(0) + d.d01 * v(1))};
}

/// Regression of the grid values (Y_eta_1..Y_eta_m) on (Y_c, Y'_c).
/// b_std = b / sqrt(y_var) is the coefficient against the standardized
/// derivative, so var(xi_i) = 1 - a_i^2 - b_std_i^2.
struct RegressionState {
  double theta = 0.0;
  std::vector<double> grid;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd b_std;
  double y_var = 0.0;
  CovarianceMatrix sigma;

  int m() const { return static_cast<int>(grid.size()); }
};

/// Equidistant grid of m points on [lo, hi], endpoints included.
inline std::vector<double> equidistant_grid(const Interval& iv, int m) {
  if (m < 2) throw std::invalid_argument("equidistant_grid: m must be >= 2");
  std::vector<double> g(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) g[static_cast<std::size_t>(i)] = iv.lo + (iv.hi - iv.lo) * i / (m - 1.0);
  g.back() = iv.hi;
  return g;
}

inline RegressionState make_regression_state(const TwoSegmentProblem& p, double c, const Interval& iv, int m) {
  RegressionState s;
  s.theta = c;
  s.grid = equidistant_grid(iv, m);
  s.y_var = y_deriv_variance(p, c);
  if (!(s.y_var > 0.0)) throw NumericalError("regression state: derivative variance vanishes");
  const double sd = std::sqrt(s.y_var);
  s.a.resize(m);
  s.b.resize(m);
  s.b_std.resize(m);
  for (int i = 0; i < m; ++i) {
    const RegressionCoeffs rc = regression_coeffs(p, s.grid[static_cast<std::size_t>(i)], c);
    s.a(i) = rc.a;
    s.b(i) = rc.b;
    s.b_std(i) = rc.b / sd;
  }
  Eigen::MatrixXd cov(m, m);
  for (int i = 0; i < m; ++i) {
    const Vec2 pi = rho_map(p, s.grid[static_cast<std::size_t>(i)]);
    for (int j = 0; j <= i; ++j) {
      const Vec2 pj = rho_map(p, s.grid[static_cast<std::size_t>(j)]);
      const double v = p.model.r(pi - pj) - s.a(i) * s.a(j) - s.b_std(i) * s.b_std(j);
      cov(i, j) = cov(j, i) = v;
    }
  }
  for (int i = 0; i < m; ++i) {
    if (cov(i, i) < -1e-10) throw NumericalError("regression state: negative residual variance");
    cov(i, i) = std::max(cov(i, i), 0.0);
  }
  s.sigma = CovarianceMatrix(std::move(cov));
  return s;
}

/// cov(xi_i, xi_j) = a(eta_i, eta_j) - a_i a_j - b_std_i b_std_j.
inline double xi_covariance(const RegressionState& s, int i, int j) {
  if (i < 0 || j < 0 || i >= s.m() || j >= s.m()) throw std::out_of_range("xi_covariance: index out of range");
  return s.sigma(i, j);
}

/// How the y-integral of the conditional expectation is evaluated.
enum class YIntegration {
  joint_qmc, // one weighted separation-of-variables integral (default)
  hermite,   // half-range Gauss-Hermite nodes in y, mvn_cdf at each node
};

struct CondIntegrandOptions {
  YIntegration method = YIntegration::joint_qmc;
  int hermite_order = 12; // per half line; the error estimate also uses order / 2
  MvnOptions mvn{};
};

/// E[|Y'_c| 1(Y_eta_i <= u, i = 1..m) | Y_c = u] on the equidistant m-grid
/// of iv, i.e. integral |y| F_xi(u (1 - a_i) - y b_i / E(Y'^2)) f_{Y'}(y) dy.
inline EstimateWithError cond_integrand(const TwoSegmentProblem& p, double c, const Interval& iv, int m,
                                        const CondIntegrandOptions& opts = {}) {
  if (m < 2) throw std::invalid_argument("cond_integrand: m must be >= 2");
  if (!(iv.hi >= iv.lo)) throw std::invalid_argument("cond_integrand: empty interval");
  const double y_var = y_deriv_variance(p, c);
  const double sd = std::sqrt(y_var);
  if (iv.length() <= 1e-14 * (1.0 + p.total_length())) {
    return {sd * std::sqrt(2.0 / std::numbers::pi), 0.0, "folded-normal"};
  }
  const RegressionState s = make_regression_state(p, c, iv, m);
  const Eigen::VectorXd w = p.u * (Eigen::VectorXd::Ones(m) - s.a);
  if (opts.method == YIntegration::joint_qmc) {
    EstimateWithError e = abs_weighted_mvn_cdf(w, s.b_std, s.sigma, opts.mvn);
    return {sd * e.value, sd * e.abs_error, "cond-joint-qmc"};
  }
  auto eval = [&](int order) {
    double err = 0.0;
    const quad::Rule& rule = quad::half_range_hermite(order);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
      for (double sign : {1.0, -1.0}) {
        const double z = sign * rule.nodes[i];
        const EstimateWithError f = mvn_cdf(Eigen::VectorXd(w - z * s.b_std), s.sigma, opts.mvn);
        sum += rule.weights[i] * std::abs(z) * f.value;
        err += rule.weights[i] * std::abs(z) * f.abs_error;
      }
    }
    return EstimateWithError{sum, err, ""};
  };
  const EstimateWithError fine = eval(opts.hermite_order);
  const EstimateWithError coarse = eval(std::max(2, opts.hermite_order / 2));
  return {sd * fine.value, sd * (fine.abs_error + std::abs(fine.value - coarse.value)), "cond-hermite"};
}

/// Which form of the capacity formula to use; the two agree for l1 = l2.
enum class CapacityRoute { automatic, shorter_first, longer_first };

struct Capacity2Options {
  int m = 24;
  int theta_order = 16; // Gauss-Legendre nodes per panel
  bool refine = true;   // also evaluate the nested 2m-1 grid and add the change to the error
  CapacityRoute route = CapacityRoute::automatic;
  CondIntegrandOptions cond{};
};

struct CapacityEstimate {
  double value = 0.0;
  double abs_error = 0.0;
  std::string method;
  double unclamped = 0.0;
  bool clamp_warning = false; // clamping to [0,1] moved the value by more than abs_error
  double grid_change = 0.0;   // |T_m - T_{2m-1}|
  double theta_error = 0.0;
  double sampling_error = 0.0;

  EstimateWithError estimate() const { return {value, abs_error, method}; }
};

namespace detail {

// One theta-range of the capacity integral: for each node, the conditional
// expectation at theta (and at 2 l1 - theta when paired) over interval_I.
struct ThetaRange {
  double lo = 0.0;
  double hi = 0.0;
  bool paired = false;
};

inline std::vector<ThetaRange> capacity_ranges(const TwoSegmentProblem& p, CapacityRoute route) {
  const double l1 = p.l1;
  const double l2 = p.l2;
  bool shorter_first = l1 <= l2;
  if (route == CapacityRoute::shorter_first) {
    if (l1 > l2) throw std::invalid_argument("capacity route shorter_first requires l1 <= l2");
    shorter_first = true;
  } else if (route == CapacityRoute::longer_first) {
    if (l1 < l2) throw std::invalid_argument("capacity route longer_first requires l1 >= l2");
    shorter_first = false;
  }
  std::vector<ThetaRange> out;
  if (shorter_first) {
    if (l1 > 0.0) out.push_back({0.0, l1, true});
    if (l1 + l2 > 2.0 * l1) out.push_back({2.0 * l1, l1 + l2, false});
  } else {
    if (l1 - l2 > 0.0) out.push_back({0.0, l1 - l2, false});
    if (l2 > 0.0) out.push_back({l1 - l2, l1, true});
  }
  return out;
}

inline Interval route_interval(const TwoSegmentProblem& p, const ThetaRange& r, double theta) {
  if (r.paired) return {theta, 2.0 * p.l1 - theta};
  if (r.lo >= 2.0 * p.l1 - 1e-15 && p.l1 <= p.l2) return {0.0, theta};
  return {theta, p.l1 + p.l2};
}

inline std::uint64_t node_seed(std::uint64_t seed, std::uint64_t tag) {
  auto rng = make_stream(seed, tag);
  return rng();
}

struct ThetaSum {
  double value = 0.0;
  double var = 0.0; // sum of (weight * err / 3)^2
};

// integral over the theta-ranges of the conditional expectations, with a
// composite Gauss-Legendre rule of `order` nodes per range
inline ThetaSum theta_integral(const TwoSegmentProblem& p, const std::vector<ThetaRange>& ranges, int m, int order,
                               const CondIntegrandOptions& cond, std::uint64_t tag) {
  struct Node {
    double theta;
    double weight;
    std::size_t range;
  };
  std::vector<Node> nodes;
  const quad::Rule& base = quad::gauss_legendre(order);
  for (std::size_t r = 0; r < ranges.size(); ++r) {
    const double half = 0.5 * (ranges[r].hi - ranges[r].lo);
    const double mid = 0.5 * (ranges[r].hi + ranges[r].lo);
    for (std::size_t i = 0; i < base.size(); ++i) nodes.push_back({mid + half * base.nodes[i], half * base.weights[i], r});
  }
  auto terms = parallel::map(nodes.size(), [&](std::size_t idx) {
    const Node& nd = nodes[idx];
    const ThetaRange& range = ranges[nd.range];
    const Interval iv = route_interval(p, range, nd.theta);
    CondIntegrandOptions local = cond;
    local.mvn.seed = node_seed(cond.mvn.seed, (tag << 32) ^ (2 * idx));
    EstimateWithError e = cond_integrand(p, nd.theta, iv, m, local);
    double value = e.value;
    double var = std::pow(e.abs_error / 3.0, 2);
    if (range.paired) {
      local.mvn.seed = node_seed(cond.mvn.seed, (tag << 32) ^ (2 * idx + 1));
      const EstimateWithError e2 = cond_integrand(p, 2.0 * p.l1 - nd.theta, iv, m, local);
      value += e2.value;
      var += std::pow(e2.abs_error / 3.0, 2);
    }
    return ThetaSum{value, var};
  });
  ThetaSum total;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    total.value += nodes[i].weight * terms[i].value;
    total.var += nodes[i].weight * nodes[i].weight * terms[i].var;
  }
  return total;
}

} // namespace detail

/// Capacity functional T(K) = P(K meets {X >= u}) for K = [0, l1 v1] u [0, l2 v2]:
///   T = 1 - Phi(u) + phi(u) * sum over theta-ranges of the Rice integrals.
/// The error combines the sampling error of the inner integrals (3 standard
/// errors), the theta-quadrature error (order vs order/2) and, when
/// `refine` is set, the change from the m-grid to the nested 2m-1 grid.
inline CapacityEstimate capacity_two_segments(const TwoSegmentProblem& p, const Capacity2Options& opts = {}) {
  p.validate();
  if (opts.m < 2) throw std::invalid_argument("capacity_two_segments: m must be >= 2");
  if (opts.theta_order < 2) throw std::invalid_argument("capacity_two_segments: theta_order must be >= 2");
  CapacityEstimate out;
  const double point = 1.0 - normal_cdf(p.u);
  const auto ranges = detail::capacity_ranges(p, opts.route);
  if (ranges.empty()) {
    out.value = out.unclamped = point;
    out.method = "point";
    return out;
  }
  const double dens = normal_pdf(p.u);
  const detail::ThetaSum main = detail::theta_integral(p, ranges, opts.m, opts.theta_order, opts.cond, 1);
  const int low_order = std::max(2, opts.theta_order / 2);
  const detail::ThetaSum low = detail::theta_integral(p, ranges, opts.m, low_order, opts.cond, 2);
  out.theta_error = dens * std::abs(main.value - low.value);
  if (opts.refine) {
    const detail::ThetaSum fine = detail::theta_integral(p, ranges, 2 * opts.m - 1, low_order, opts.cond, 3);
    out.grid_change = dens * std::abs(low.value - fine.value);
  }
  out.sampling_error = 3.0 * dens * std::sqrt(main.var);
  out.unclamped = point + dens * main.value;
  out.abs_error = out.sampling_error + out.theta_error + out.grid_change;
  out.value = std::clamp(out.unclamped, 0.0, 1.0);
  out.clamp_warning = std::abs(out.value - out.unclamped) > out.abs_error;
  out.method = "sweeping-line";
  return out;
}

} // namespace excursion
