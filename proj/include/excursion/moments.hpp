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

// Second moment measure of the boundary length of the excursion set, through
// the two-line Rice integrand and the Crofton double integral over line pairs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "covariance.hpp"
#include "gauss.hpp"
#include "geometry.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "random.hpp"

namespace excursion {

inline constexpr double kPointExcision = 1e-3;    // chord-coordinate radius excised around p
inline constexpr double kParallelTolerance = 1e-3; // radians
inline constexpr int kPairMomentOrder = 40;

/// Two non-parallel lines and their intersection. Chord coordinates are
/// centred at p: the points are p + s v1 and p + t v2.
struct LinePair {
  Line g1;
  Line g2;
  Vec2 p = Vec2::Zero();
  Vec2 v1 = Vec2::UnitX();
  Vec2 v2 = Vec2::UnitY();
  double weight = 1.0;

  static LinePair make(const Line& a, const Line& b, double weight = 1.0) {
    double diff = std::fmod(std::abs(a.angle - b.angle), std::numbers::pi);
    diff = std::min(diff, std::numbers::pi - diff);
    if (diff < kParallelTolerance) throw std::invalid_argument("line pair: lines are (nearly) parallel");
    const auto x = intersect(a, b);
    if (!x) throw std::invalid_argument("line pair: lines are parallel");
    return {a, b, *x, a.direction(), b.direction(), weight};
  }

  /// Chord of g1 in B1 in the s coordinate, if nonempty.
  std::optional<Interval> s_range(const Window& b1) const {
    auto c = b1.chord(g1);
    if (!c) return std::nullopt;
    const double at = v1.dot(p);
    return Interval{c->lo - at, c->hi - at};
  }
  std::optional<Interval> t_range(const Window& b2) const {
    auto c = b2.chord(g2);
    if (!c) return std::nullopt;
    const double at = v2.dot(p);
    return Interval{c->lo - at, c->hi - at};
  }
};

namespace detail {

// Covariances between the two sites: r(h), grad r(h).v1, grad r(h).v2 and
// E[d_{v1}X_1 d_{v2}X_2] = -v1^T H(h) v2, with h the lag from site 2 to site 1.
struct CrossTerms {
  double r = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
  double d12 = 0.0;
};

inline CrossTerms cross_terms(const CorrelationModel& model, const Vec2& lag, const Vec2& v1, const Vec2& v2) {
  const Partials d = model.partials(lag);
  return {d.r, d.d10 * v1(0) + d.d01 * v1(1), d.d10 * v2(0) + d.d01 * v2(1), directional_cross_cov(d, v1, v2)};
}

// E[|D1 D2| | X1 = X2 = u] f(u, u), conditioning on S = X1 + X2 and
// Dd = X1 - X2 (uncorrelated), which avoids forming the near-singular 2x2
// inverse when the sites are close.
inline double two_point_rice(double u, double lam1, double lam2, const CrossTerms& c, int order) {
  const double one_minus = 1.0 - c.r;
  const double one_plus = 1.0 + c.r;
  if (!(one_minus > 0.0) || !(one_plus > 0.0))
    throw NumericalError("pair_integrand: field values at the two points are degenerate");
  const Eigen::Vector2d a(c.g1, -c.g2);  // covariance of (D1, D2) with S
  const Eigen::Vector2d b(-c.g1, -c.g2); // with Dd
  const Eigen::Vector2d mean = a * (u / one_plus);
  Eigen::Matrix2d cov;
  cov << lam1, c.d12, c.d12, lam2;
  cov -= a * a.transpose() / (2.0 * one_plus) + b * b.transpose() / (2.0 * one_minus);
  for (int i = 0; i < 2; ++i) cov(i, i) = std::max(cov(i, i), 0.0);
  const double density = std::exp(-u * u / one_plus) / (kTwoPi * std::sqrt(one_minus * one_plus));
  return abs_product_moment_value(mean, cov, order) * density;
}

inline double pair_lag_check(const Vec2& lag) {
  const double d = lag.norm();
  if (d < kPointExcision) throw NumericalError("pair_integrand: points closer than the excision radius");
  return d;
}

} // namespace detail

/// E[|d_{v1}X d_{v2}X| | X = u at both points] f(u, u) at p + s v1, p + t v2.
inline double pair_integrand(const CorrelationModel& model, double u, const LinePair& pair, double s, double t) {
  const Vec2 lag = s * pair.v1 - t * pair.v2;
  detail::pair_lag_check(lag);
  const Eigen::Matrix2d& lam = model.spectral_moments();
  return detail::two_point_rice(u, pair.v1.dot(lam * pair.v1), pair.v2.dot(lam * pair.v2),
                                detail::cross_terms(model, lag, pair.v1, pair.v2), kPairMomentOrder);
}

/// pair_integrand minus its independence limit E|D1| E|D2| phi(u)^2. Tiny
/// cross covariances are scaled up before differencing and the difference
/// scaled back, so far-apart sites keep relative accuracy.
inline double pair_dependence(const CorrelationModel& model, double u, const LinePair& pair, double s, double t) {
  const Vec2 lag = s * pair.v1 - t * pair.v2;
  detail::pair_lag_check(lag);
  const Eigen::Matrix2d& lam = model.spectral_moments();
  const double lam1 = pair.v1.dot(lam * pair.v1);
  const double lam2 = pair.v2.dot(lam * pair.v2);
  detail::CrossTerms c = detail::cross_terms(model, lag, pair.v1, pair.v2);
  const double size = std::max({std::abs(c.r), std::abs(c.g1), std::abs(c.g2), std::abs(c.d12)});
  if (size == 0.0) return 0.0;
  const double base = detail::two_point_rice(u, lam1, lam2, {}, kPairMomentOrder);
  constexpr double kLinear = 1e-5;
  if (size >= kLinear) return detail::two_point_rice(u, lam1, lam2, c, kPairMomentOrder) - base;
  const double k = kLinear / size;
  const detail::CrossTerms scaled{k * c.r, k * c.g1, k * c.g2, k * c.d12};
  return (detail::two_point_rice(u, lam1, lam2, scaled, kPairMomentOrder) - base) / k;
}

/// Inner quadrature orders. The chord rectangle is integrated in polar
/// coordinates about the intersection point (s, t) = (0, 0).
struct PairQuadrature {
  int angular_order = 16;
  int radial_order = 16;
};

namespace detail {

struct PolarSum {
  double value = 0.0;
  double excised = 0.0;
  std::size_t evaluations = 0;
};

// Integral of f over [s0, s1] x [t0, t1] minus the ellipse |s v1 - t v2| < eps.
// Angular panels break at the corner directions; radial panels grow
// geometrically from the excision edge (or the entry point).
template <class F>
PolarSum polar_rectangle(F&& f, const Interval& sr, const Interval& tr, const Vec2& v1, const Vec2& v2, double eps,
                         int angular_order, int radial_order) {
  const bool inside = sr.lo <= 0.0 && sr.hi >= 0.0 && tr.lo <= 0.0 && tr.hi >= 0.0;
  const std::array<Vec2, 4> corners{Vec2(sr.lo, tr.lo), Vec2(sr.hi, tr.lo), Vec2(sr.hi, tr.hi), Vec2(sr.lo, tr.hi)};
  std::vector<double> breaks;
  if (inside) {
    for (const Vec2& c : corners) {
      double a = std::atan2(c(1), c(0));
      if (a < 0.0) a += kTwoPi;
      breaks.push_back(a);
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.push_back(breaks.front() + kTwoPi);
  } else {
    const Vec2 mid(0.5 * (sr.lo + sr.hi), 0.5 * (tr.lo + tr.hi));
    const double centre = std::atan2(mid(1), mid(0));
    for (const Vec2& c : corners)
      breaks.push_back(centre + std::remainder(std::atan2(c(1), c(0)) - centre, kTwoPi));
    std::sort(breaks.begin(), breaks.end());
  }
  auto ray = [&](double psi) -> std::pair<double, double> {
    const double dir[2] = {std::cos(psi), std::sin(psi)};
    const double lo[2] = {sr.lo, tr.lo};
    const double hi[2] = {sr.hi, tr.hi};
    double enter = 0.0, exit = kInf;
    for (int ax = 0; ax < 2; ++ax) {
      if (std::abs(dir[ax]) < 1e-300) {
        if (lo[ax] > 0.0 || hi[ax] < 0.0) return {0.0, 0.0};
        continue;
      }
      double a = lo[ax] / dir[ax], b = hi[ax] / dir[ax];
      if (a > b) std::swap(a, b);
      enter = std::max(enter, a);
      exit = std::min(exit, b);
    }
    return {enter, std::max(enter, exit)};
  };
  const quad::Rule& ang = quad::gauss_legendre(angular_order);
  const quad::Rule& rad = quad::gauss_legendre(radial_order);
  PolarSum out;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double half = 0.5 * (breaks[k + 1] - breaks[k]);
    const double mid = 0.5 * (breaks[k + 1] + breaks[k]);
    if (half <= 0.0) continue;
    for (std::size_t a = 0; a < ang.size(); ++a) {
      const double psi = mid + half * ang.nodes[a];
      const double wpsi = half * ang.weights[a];
      const Vec2 dir(std::cos(psi), std::sin(psi));
      const auto [rin, rout] = ray(psi);
      if (!(rout > rin)) continue;
      const double reps = eps / (dir(0) * v1 - dir(1) * v2).norm();
      const double rlo = std::max(rin, reps);
      if (rin < reps) {
        const double re = reps * (1.0 + 1e-9);
        const double g = f(re * dir(0), re * dir(1)) * re;
        out.excised += wpsi * g * (std::min(reps, rout) - rin);
        ++out.evaluations;
      }
      if (!(rout > rlo)) continue;
      std::vector<double> rb{rlo};
      for (double b = 4.0 * rlo; b < rout; b *= 4.0) rb.push_back(b);
      rb.push_back(rout);
      for (std::size_t q = 0; q + 1 < rb.size(); ++q) {
        const double rh = 0.5 * (rb[q + 1] - rb[q]);
        const double rm = 0.5 * (rb[q + 1] + rb[q]);
        for (std::size_t i = 0; i < rad.size(); ++i) {
          const double rho = rm + rh * rad.nodes[i];
          out.value += wpsi * rh * rad.weights[i] * rho * f(rho * dir(0), rho * dir(1));
          ++out.evaluations;
        }
      }
    }
  }
  return out;
}

template <class F>
EstimateWithError polar_estimate(F&& f, const Interval& sr, const Interval& tr, const LinePair& pair,
                                 const PairQuadrature& q, std::size_t* evaluations) {
  const PolarSum fine = polar_rectangle(f, sr, tr, pair.v1, pair.v2, kPointExcision, q.angular_order, q.radial_order);
  const PolarSum coarse = polar_rectangle(f, sr, tr, pair.v1, pair.v2, kPointExcision, std::max(2, q.angular_order / 2),
                                          std::max(2, q.radial_order / 2));
  if (evaluations) *evaluations += fine.evaluations + coarse.evaluations;
  return {fine.value, std::abs(fine.value - coarse.value) + 2.0 * std::abs(fine.excised), "polar-gauss-legendre"};
}

inline void check_quadrature(const PairQuadrature& q) {
  if (q.angular_order < 2 || q.radial_order < 2) throw std::invalid_argument("pair quadrature: orders must be >= 2");
}

} // namespace detail

/// E[C(g1 cap B1) C(g2 cap B2)] as the double chord integral of pair_integrand.
/// The error adds the order-halving difference and twice the estimated mass
/// of the excised neighbourhood of p.
inline EstimateWithError expected_crossing_product(const CorrelationModel& model, double u, const LinePair& pair,
                                                   const Window& b1, const Window& b2, const PairQuadrature& q = {},
                                                   std::size_t* evaluations = nullptr) {
  detail::check_quadrature(q);
  const auto sr = pair.s_range(b1);
  const auto tr = pair.t_range(b2);
  if (!sr || !tr) return {0.0, 0.0, "empty-chord"};
  return detail::polar_estimate([&](double s, double t) { return pair_integrand(model, u, pair, s, t); }, *sr, *tr,
                                pair, q, evaluations);
}

/// Double chord integral of pair_dependence: E[C1 C2] - E[C1] E[C2].
inline EstimateWithError crossing_product_dependence(const CorrelationModel& model, double u, const LinePair& pair,
                                                     const Window& b1, const Window& b2, const PairQuadrature& q = {},
                                                     std::size_t* evaluations = nullptr) {
  detail::check_quadrature(q);
  const auto sr = pair.s_range(b1);
  const auto tr = pair.t_range(b2);
  if (!sr || !tr) return {0.0, 0.0, "empty-chord"};
  return detail::polar_estimate([&](double s, double t) { return pair_dependence(model, u, pair, s, t); }, *sr, *tr,
                                pair, q, evaluations);
}

/// Mean number of u-crossings on a chord of length `length` in direction v.
inline double expected_crossings(const CorrelationModel& model, double u, const Vec2& v, double length) {
  return length * std::sqrt(directional_deriv_variance(model, v)) * std::exp(-0.5 * u * u) / std::numbers::pi;
}

struct SecondMomentOptions {
  std::size_t pairs = 1000;
  std::uint64_t seed = 0x5ec0;
  PairQuadrature quad{};
  bool dependence = false; // also integrate pair_dependence on the same pairs
};

struct SecondMomentResult {
  EstimateWithError mu2;
  EstimateWithError factorized; // 1/4 of the weighted mean of E[C1] E[C2]
  EstimateWithError dependence; // 1/4 of the weighted mean of E[C1 C2] - E[C1] E[C2]
  std::size_t pairs = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

/// mu2(B1 x B2) = 1/4 int int E[C(g1 cap B1) C(g2 cap B2)] dg1 dg2 by Monte
/// Carlo over independent Crofton lines hitting B1 and B2. Pairs closer than
/// kParallelTolerance to parallel are redrawn. abs_error is 3 standard errors
/// plus the mean inner quadrature error.
inline SecondMomentResult second_moment_measure(const CorrelationModel& model, double u, const Window& b1,
                                                const Window& b2, const SecondMomentOptions& opts = {}) {
  if (!std::isfinite(u)) throw std::invalid_argument("second_moment_measure: u must be finite");
  if (opts.pairs < 100) throw std::invalid_argument("second_moment_measure: pairs must be >= 100");
  detail::check_quadrature(opts.quad);
  SecondMomentResult out;
  out.pairs = opts.pairs;
  out.mu2 = {0.0, 0.0, "crofton-monte-carlo"};
  out.factorized = out.mu2;
  out.dependence = out.mu2;
  if (!(b1.area() > 0.0) || !(b2.area() > 0.0)) return out;
  const double h1 = b1.hitting_measure();
  const double h2 = b2.hitting_measure();
  const auto lines1 = sample_crofton_lines(b1, opts.pairs, make_stream(opts.seed, 1)());
  const auto lines2 = sample_crofton_lines(b2, opts.pairs, make_stream(opts.seed, 2)());
  std::vector<LinePair> pairs;
  pairs.reserve(opts.pairs);
  for (std::size_t i = 0; i < opts.pairs; ++i) {
    Line g2 = lines2[i].line;
    for (std::uint64_t attempt = 0;; ++attempt) {
      try {
        pairs.push_back(LinePair::make(lines1[i].line, g2, h1 * h2));
        break;
      } catch (const std::invalid_argument&) {
        ++out.rejected;
        if (attempt > 1000) throw NumericalError("second_moment_measure: every line pair is parallel");
        g2 = sample_crofton_lines(b2, 1, make_stream(opts.seed, (std::uint64_t{3} << 48) ^ (i << 12) ^ attempt)())[0].line;
      }
    }
  }
  struct PairValue {
    double value = 0.0, quad_error = 0.0, factorized = 0.0, dependence = 0.0, dep_error = 0.0;
    std::size_t evaluations = 0;
  };
  auto values = parallel::map(pairs.size(), [&](std::size_t i) {
    const LinePair& lp = pairs[i];
    PairValue pv;
    const EstimateWithError e = expected_crossing_product(model, u, lp, b1, b2, opts.quad, &pv.evaluations);
    pv.value = lp.weight * e.value;
    pv.quad_error = lp.weight * e.abs_error;
    const auto sr = lp.s_range(b1);
    const auto tr = lp.t_range(b2);
    if (sr && tr)
      pv.factorized = lp.weight * expected_crossings(model, u, lp.v1, sr->length()) *
                      expected_crossings(model, u, lp.v2, tr->length());
    if (opts.dependence) {
      const EstimateWithError d = crossing_product_dependence(model, u, lp, b1, b2, opts.quad, &pv.evaluations);
      pv.dependence = lp.weight * d.value;
      pv.dep_error = lp.weight * d.abs_error;
    }
    return pv;
  });
  const double n = static_cast<double>(values.size());
  auto summarize = [&](auto field, auto err_field) {
    double sum = 0.0, sum2 = 0.0, qerr = 0.0;
    for (const PairValue& v : values) {
      const double x = v.*field;
      sum += x;
      sum2 += x * x;
      if (err_field) qerr += v.*err_field;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
    return EstimateWithError{0.25 * mean, 0.25 * (3.0 * std::sqrt(var / n) + qerr / n), "crofton-monte-carlo"};
  };
  out.mu2 = summarize(&PairValue::value, &PairValue::quad_error);
  out.factorized = summarize(&PairValue::factorized, static_cast<double PairValue::*>(nullptr));
  if (opts.dependence) out.dependence = summarize(&PairValue::dependence, &PairValue::dep_error);
  for (const PairValue& v : values) out.evaluations += v.evaluations;
  return out;
}

/// Mean boundary length of the excursion set per unit area for an isotropic
/// model: (pi/2) times the crossing intensity sqrt(lambda) e^{-u^2/2} / pi.
inline double boundary_length_intensity(const CorrelationModel& model, double u) {
  if (!model.isotropic()) throw std::invalid_argument("boundary_length_intensity: model must be isotropic");
  if (std::isnan(u)) throw std::invalid_argument("boundary_length_intensity: u is NaN");
  const double lambda = model.spectral_moments()(0, 0);
  return 0.5 * std::sqrt(lambda) * std::exp(-0.5 * u * u);
}

} // namespace excursion
