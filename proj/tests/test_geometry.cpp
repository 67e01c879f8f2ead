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
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "excursion/geometry.hpp"
#include "excursion/quadrature.hpp"

using namespace excursion;

namespace {

TwoSegmentProblem problem(double l1, double l2, double phi) {
  TwoSegmentProblem p;
  p.u = 1.0;
  p.l1 = l1;
  p.l2 = l2;
  p.phi_tilde = phi;
  return p;
}

} // namespace

TEST(RhoMap, Examples) {
  const auto p = problem(1, 1, std::numbers::pi / 4);
  EXPECT_NEAR(rho_map(p, 1.0).norm(), 0.0, 1e-15);
  EXPECT_NEAR(rho_map(p, 0.0)(0), -std::sqrt(2.0) / 2, 1e-15);
  EXPECT_NEAR(rho_map(p, 0.0)(1), std::sqrt(2.0) / 2, 1e-15);
  const auto q = problem(1, 2, std::numbers::pi / 2);
  EXPECT_NEAR(rho_map(q, 3.0)(0), 2.0, 1e-15);
  EXPECT_NEAR(rho_map(q, 3.0)(1), 0.0, 1e-15);
  EXPECT_THROW(rho_map(q, 3.5), std::out_of_range);
  EXPECT_THROW(rho_map(q, -0.1), std::out_of_range);
}

TEST(RhoMap, IsometryOnEachBranch) {
  const auto p = problem(1.3, 0.8, 0.6);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> b1(0.0, 1.3), b2(1.3, 2.1);
  for (int i = 0; i < 100; ++i) {
    const double a = b1(rng), b = b1(rng);
    EXPECT_NEAR((rho_map(p, a) - rho_map(p, b)).norm(), std::abs(a - b), 1e-13);
    const double c = b2(rng), d = b2(rng);
    EXPECT_NEAR((rho_map(p, c) - rho_map(p, d)).norm(), std::abs(c - d), 1e-13);
  }
  EXPECT_NEAR(p.v1().norm(), 1.0, 1e-15);
  EXPECT_NEAR(p.v1()(0), -p.v2()(0), 1e-15);
  EXPECT_NEAR(p.v1()(1), p.v2()(1), 1e-15);
}

TEST(IntervalI, Cases) {
  const auto a = problem(1, 2, 0.7);
  auto i1 = interval_I(a, 0.5);
  EXPECT_DOUBLE_EQ(i1.lo, 0.5);
  EXPECT_DOUBLE_EQ(i1.hi, 1.5);
  auto i2 = interval_I(a, 2.5);
  EXPECT_DOUBLE_EQ(i2.lo, 0.0);
  EXPECT_DOUBLE_EQ(i2.hi, 2.5);
  EXPECT_THROW(interval_I(a, 1.5), std::out_of_range);
  const auto b = problem(2, 1, 0.7);
  // the part of K no farther from the origin than rho(0.5)
  auto i3 = interval_I(b, 0.5);
  EXPECT_DOUBLE_EQ(i3.lo, 0.5);
  EXPECT_DOUBLE_EQ(i3.hi, 3.0);
  auto i4 = interval_I(b, 1.5);
  EXPECT_DOUBLE_EQ(i4.lo, 1.5);
  EXPECT_DOUBLE_EQ(i4.hi, 2.5);
}

TEST(IntervalI, MatchesDistanceOrdering) {
  // I(theta) = { eta : |rho(eta)| <= |rho(theta)| }, checked pointwise
  for (auto [l1, l2] : {std::pair{1.0, 2.0}, std::pair{2.0, 1.0}, std::pair{1.0, 1.0}}) {
    const auto p = problem(l1, l2, 0.9);
    for (double theta = 0.0; theta <= l1 + l2; theta += 0.05) {
      Interval iv;
      try {
        iv = interval_I(p, theta);
      } catch (const std::out_of_range&) {
        continue;
      }
      EXPECT_TRUE(iv.lo >= 0.0 && iv.hi <= l1 + l2 + 1e-12);
      for (double eta = 0.0; eta <= l1 + l2; eta += 0.01) {
        const bool inside = rho_map(p, eta).norm() <= rho_map(p, theta).norm() - 1e-9;
        if (inside) EXPECT_TRUE(iv.contains(eta, 1e-9)) << theta << " " << eta;
        const bool outside = rho_map(p, eta).norm() >= rho_map(p, theta).norm() + 1e-9;
        if (outside) EXPECT_FALSE(iv.contains(eta, -1e-9)) << theta << " " << eta;
      }
    }
  }
}

TEST(Window, ChordsAndMeasures) {
  const auto disc = Window::disc(Vec2(0, 0), 1.0);
  EXPECT_NEAR(disc.hitting_measure(), 2 * std::numbers::pi, 1e-15);
  auto c = disc.chord(Line{0.0, 0.6});
  ASSERT_TRUE(c.has_value());
  EXPECT_NEAR(c->length(), 1.6, 1e-14);
  EXPECT_FALSE(disc.chord(Line{0.3, 1.2}).has_value());
  const auto sq = Window::rectangle(Vec2(0, 0), Vec2(1, 1));
  auto diag = sq.chord(Line{std::numbers::pi / 4, 0.0});
  ASSERT_TRUE(diag.has_value());
  EXPECT_NEAR(diag->length(), std::sqrt(2.0), 1e-14);
  EXPECT_THROW(Window::rectangle(Vec2(0, 0), Vec2(0, 1)), std::invalid_argument);
}

TEST(Crofton, HittingMeasures) {
  const auto unit = Window::disc(Vec2(0.3, -2.0), 1.0);
  double total = 0.0;
  for (const auto& wl : sample_crofton_lines(unit, 1000, 1)) total += wl.weight;
  EXPECT_NEAR(total, 2 * std::numbers::pi, 1e-12);
  const auto big = Window::disc(Vec2(0, 0), 2.5);
  total = 0.0;
  for (const auto& wl : sample_crofton_lines(big, 777, 2)) total += wl.weight;
  EXPECT_NEAR(total, 2 * std::numbers::pi * 2.5, 1e-12);
  // square: integrate the support width over the direction of the normal
  const auto sq = Window::rectangle(Vec2(0, 0), Vec2(1, 1));
  auto width = [&](double phi) { return sq.support(Line{phi, 0.0}.normal()).length(); };
  const double cauchy = quad::integrate_adaptive(width, 0.0, std::numbers::pi / 2, 1e-13) +
                        quad::integrate_adaptive(width, std::numbers::pi / 2, std::numbers::pi, 1e-13);
  EXPECT_NEAR(cauchy, 4.0, 1e-10);
  EXPECT_NEAR(sq.hitting_measure(), cauchy, 1e-10);
  EXPECT_THROW(sample_crofton_lines(Window::disc(Vec2(0, 0), 0.0), 10, 1), std::invalid_argument);
}

TEST(Crofton, SamplerIsUniformOnHittingSet) {
  // Cauchy-Crofton: integral over lines of #(g cap S) = 2 |S| for a segment S.
  const auto w = Window::rectangle(Vec2(-1, -1), Vec2(2, 1));
  const Vec2 a(-0.5, 0.2), b(1.2, -0.4);
  const double len = (b - a).norm();
  const auto lines = sample_crofton_lines(w, 200000, 9);
  double sum = 0.0, sum2 = 0.0;
  for (const auto& wl : lines) {
    const Vec2 n = wl.line.normal();
    const double sa = n.dot(a) - wl.line.offset, sb = n.dot(b) - wl.line.offset;
    const double hit = (sa * sb < 0.0) ? wl.weight : 0.0;
    sum += hit;
    sum2 += hit * hit;
  }
  const double nlines = static_cast<double>(lines.size());
  const double se = std::sqrt((sum2 - sum * sum / nlines) / (nlines - 1.0) * nlines);
  EXPECT_NEAR(sum, 2.0 * len, 3.0 * se);
  // deterministic given the seed
  const auto again = sample_crofton_lines(w, 100, 9);
  const auto first = sample_crofton_lines(w, 100, 9);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(again[i].line.offset, first[i].line.offset);
}

TEST(Line, Intersection) {
  const Line g1{0.0, 1.0}, g2{std::numbers::pi / 2, -2.0};
  auto p = intersect(g1, g2);
  ASSERT_TRUE(p.has_value());
  EXPECT_NEAR((*p - Vec2(2.0, 1.0)).norm(), 0.0, 1e-14);
  EXPECT_FALSE(intersect(g1, Line{0.0, 3.0}).has_value());
}
