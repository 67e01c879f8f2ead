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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "covariance.hpp"
#include "random.hpp"

namespace excursion {

/// Two segments [0, l1 v1] and [0, l2 v2] placed symmetrically about the
/// second axis: v1 = (-sin phi, cos phi), v2 = (sin phi, cos phi).
struct TwoSegmentProblem {
  double u = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double phi_tilde = std::numbers::pi / 4;
  CorrelationModel model = CorrelationModel::gaussian();

  Vec2 v1() const { return {-std::sin(phi_tilde), std::cos(phi_tilde)}; }
  Vec2 v2() const { return {std::sin(phi_tilde), std::cos(phi_tilde)}; }
  double total_length() const { return l1 + l2; }

  void validate() const {
    if (!std::isfinite(u)) throw std::invalid_argument("two-segment problem: u must be finite");
    if (!(l1 >= 0.0) || !(l2 >= 0.0) || !std::isfinite(l1) || !std::isfinite(l2))
      throw std::invalid_argument("two-segment problem: lengths must be finite and nonnegative");
    if (!(phi_tilde > 0.0) || phi_tilde > std::numbers::pi / 2 + 1e-15)
      throw std::invalid_argument("two-segment problem: phi_tilde must lie in (0, pi/2]");
  }
};

/// k segments [0, l_j v_j] sharing the origin, v_j = (cos phi_j, sin phi_j).
struct KSegmentProblem {
  double u = 0.0;
  std::vector<double> angles;
  std::vector<double> lengths;
  CorrelationModel model = CorrelationModel::gaussian();

  std::size_t k() const { return angles.size(); }
  Vec2 direction(std::size_t j) const { return {std::cos(angles[j]), std::sin(angles[j])}; }
  double max_length() const { return lengths.empty() ? 0.0 : *std::max_element(lengths.begin(), lengths.end()); }

  void validate() const {
    if (!std::isfinite(u)) throw std::invalid_argument("k-segment problem: u must be finite");
    if (angles.empty()) throw std::invalid_argument("k-segment problem: need at least one segment");
    if (angles.size() != lengths.size())
      throw std::invalid_argument("k-segment problem: angles and lengths differ in size");
    for (double l : lengths)
      if (!(l > 0.0) || !std::isfinite(l)) throw std::invalid_argument("k-segment problem: lengths must be positive");
    for (std::size_t i = 0; i < angles.size(); ++i) {
      if (!std::isfinite(angles[i])) throw std::invalid_argument("k-segment problem: angles must be finite");
      for (std::size_t j = 0; j < i; ++j) {
        const double d = std::remainder(angles[i] - angles[j], 2.0 * std::numbers::pi);
        if (std::abs(d) < 1e-9) throw std::invalid_argument("k-segment problem: directions must be distinct");
      }
    }
  }
};

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
};

/// Arc-length parametrization of the two-segment bundle: from l1 v1 through
/// the origin (theta = l1) to l2 v2.
inline Vec2 rho_map(const TwoSegmentProblem& p, double theta) {
  const double tol = 1e-12 * (1.0 + p.total_length());
  if (theta < -tol || theta > p.total_length() + tol) throw std::out_of_range("rho_map: theta outside [0, l1+l2]");
  if (theta <= p.l1) return (p.l1 - theta) * p.v1();
  return (theta - p.l1) * p.v2();
}

/// Direction of the derivative Y'_theta: v1 on the first branch
/// (theta <= l1) and v2 beyond it.
inline Vec2 rho_derivative_direction(const TwoSegmentProblem& p, double theta) {
  return theta <= p.l1 ? p.v1() : p.v2();
}

/// Parameters eta whose image rho(eta) is no farther from the origin than
/// rho(theta): the part of K already swept when the sweep reaches rho(theta).
inline Interval interval_I(const TwoSegmentProblem& p, double theta) {
  const double l1 = p.l1;
  const double l2 = p.l2;
  const double tol = 1e-12 * (1.0 + l1 + l2);
  if (l1 <= l2) {
    if (theta >= -tol && theta <= l1 + tol) {
      const double t = std::clamp(theta, 0.0, l1);
      return {t, 2.0 * l1 - t};
    }
    if (theta >= 2.0 * l1 - tol && theta <= l1 + l2 + tol) return {0.0, std::clamp(theta, 2.0 * l1, l1 + l2)};
  } else {
    if (theta >= -tol && theta <= l1 - l2) return {std::max(theta, 0.0), l1 + l2};
    if (theta > l1 - l2 && theta <= l1 + tol) {
      const double t = std::min(theta, l1);
      return {t, 2.0 * l1 - t};
    }
  }
  throw std::out_of_range("interval_I: theta outside the integration ranges");
}

/// A line { t (cos a, sin a) + offset (-sin a, cos a) : t real } with a in [0, pi).
struct Line {
  double angle = 0.0;
  double offset = 0.0;

  Vec2 direction() const { return {std::cos(angle), std::sin(angle)}; }
  Vec2 normal() const { return {-std::sin(angle), std::cos(angle)}; }
  Vec2 point(double t) const { return t * direction() + offset * normal(); }
};

/// Intersection point of two non-parallel lines.
inline std::optional<Vec2> intersect(const Line& a, const Line& b) {
  const Vec2 d1 = a.direction();
  const Vec2 d2 = b.direction();
  const double det = d1(0) * d2(1) - d1(1) * d2(0);
  if (std::abs(det) < 1e-15) return std::nullopt;
  // a.point(s) = b.point(t)
  const Vec2 rhs = b.offset * b.normal() - a.offset * a.normal();
  const double s = (rhs(0) * d2(1) - rhs(1) * d2(0)) / det;
  return a.point(s);
}

/// Convex observation window: a disc or an axis-aligned rectangle.
class Window {
public:
  struct Disc {
    Vec2 center;
    double radius;
  };
  struct Rect {
    Vec2 lo;
    Vec2 hi;
  };

  static Window disc(const Vec2& center, double radius) {
    if (!(radius >= 0.0) || !std::isfinite(radius)) throw std::invalid_argument("disc window: radius must be nonnegative");
    return Window(Disc{center, radius});
  }
  static Window rectangle(const Vec2& corner_a, const Vec2& corner_b) {
    const Vec2 lo = corner_a.cwiseMin(corner_b);
    const Vec2 hi = corner_a.cwiseMax(corner_b);
    if (!(hi(0) > lo(0)) || !(hi(1) > lo(1))) throw std::invalid_argument("rectangle window: empty rectangle");
    return Window(Rect{lo, hi});
  }

  bool is_disc() const { return std::holds_alternative<Disc>(shape_); }
  const Disc& as_disc() const { return std::get<Disc>(shape_); }
  const Rect& as_rect() const { return std::get<Rect>(shape_); }

  Vec2 center() const {
    if (is_disc()) return as_disc().center;
    return 0.5 * (as_rect().lo + as_rect().hi);
  }
  double area() const {
    if (is_disc()) return std::numbers::pi * as_disc().radius * as_disc().radius;
    const Vec2 d = as_rect().hi - as_rect().lo;
    return d(0) * d(1);
  }
  double perimeter() const {
    if (is_disc()) return 2.0 * std::numbers::pi * as_disc().radius;
    const Vec2 d = as_rect().hi - as_rect().lo;
    return 2.0 * (d(0) + d(1));
  }
  /// Radius of the smallest disc about center() containing the window.
  double circumradius() const {
    if (is_disc()) return as_disc().radius;
    return 0.5 * (as_rect().hi - as_rect().lo).norm();
  }
  bool contains(const Vec2& x) const {
    if (is_disc()) return (x - as_disc().center).norm() <= as_disc().radius;
    return (x.array() >= as_rect().lo.array()).all() && (x.array() <= as_rect().hi.array()).all();
  }

  /// Range of n.x over the window for a unit vector n.
  Interval support(const Vec2& n) const {
    if (is_disc()) {
      const double c = n.dot(as_disc().center);
      return {c - as_disc().radius, c + as_disc().radius};
    }
    const Rect& r = as_rect();
    double lo = kInfinity;
    double hi = -kInfinity;
    for (int cx = 0; cx < 2; ++cx)
      for (int cy = 0; cy < 2; ++cy) {
        const Vec2 corner(cx ? r.hi(0) : r.lo(0), cy ? r.hi(1) : r.lo(1));
        lo = std::min(lo, n.dot(corner));
        hi = std::max(hi, n.dot(corner));
      }
    return {lo, hi};
  }

  /// Invariant measure of the lines hitting the window (Cauchy: the perimeter).
  double hitting_measure() const { return perimeter(); }

  /// Parameter range of line.point(t) inside the window, if nonempty.
  std::optional<Interval> chord(const Line& line) const {
    const Vec2 d = line.direction();
    const Vec2 o = line.offset * line.normal();
    if (is_disc()) {
      const Vec2 c = as_disc().center;
      const double tc = d.dot(c - o);
      const double dist2 = (o + tc * d - c).squaredNorm();
      const double r2 = as_disc().radius * as_disc().radius;
      if (dist2 >= r2) return std::nullopt;
      const double half = std::sqrt(r2 - dist2);
      return Interval{tc - half, tc + half};
    }
    const Rect& r = as_rect();
    double lo = -kInfinity;
    double hi = kInfinity;
    for (int axis = 0; axis < 2; ++axis) {
      if (std::abs(d(axis)) < 1e-300) {
        if (o(axis) < r.lo(axis) || o(axis) > r.hi(axis)) return std::nullopt;
        continue;
      }
      double t0 = (r.lo(axis) - o(axis)) / d(axis);
      double t1 = (r.hi(axis) - o(axis)) / d(axis);
      if (t0 > t1) std::swap(t0, t1);
      lo = std::max(lo, t0);
      hi = std::min(hi, t1);
    }
    if (!(hi > lo)) return std::nullopt;
    return Interval{lo, hi};
  }

  Window translated(const Vec2& shift) const {
    if (is_disc()) return disc(as_disc().center + shift, as_disc().radius);
    return rectangle(as_rect().lo + shift, as_rect().hi + shift);
  }

private:
  static constexpr double kInfinity = std::numeric_limits<double>::infinity();

  explicit Window(std::variant<Disc, Rect> shape) : shape_(std::move(shape)) {}
  std::variant<Disc, Rect> shape_;
};

/// A sampled line with its importance weight.
struct WeightedLine {
  Line line;
  double weight = 0.0;
};

/// Lines hitting `window`, uniform with respect to d(angle) d(offset) on the
/// hitting set. Each weight is hitting_measure() / count, so weighted sums are
/// unbiased for the integral over lines hitting the window.
inline std::vector<WeightedLine> sample_crofton_lines(const Window& window, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("sample_crofton_lines: count must be >= 1");
  if (!(window.hitting_measure() > 0.0)) throw std::invalid_argument("sample_crofton_lines: empty window");
  auto rng = make_stream(seed, 0x11e5u);
  const Vec2 c = window.center();
  const double radius = window.circumradius();
  const double weight = window.hitting_measure() / static_cast<double>(count);
  std::vector<WeightedLine> out;
  out.reserve(count);
  while (out.size() < count) {
    Line line;
    line.angle = std::numbers::pi * uniform01(rng);
    const double centre_offset = line.normal().dot(c);
    line.offset = centre_offset + radius * (2.0 * uniform01(rng) - 1.0);
    if (window.chord(line)) out.push_back({line, weight});
  }
  return out;
}

} // namespace excursion
