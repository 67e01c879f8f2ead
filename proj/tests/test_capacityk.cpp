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
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "excursion/capacity2.hpp"
#include "excursion/capacityk.hpp"
#include "excursion/montecarlo.hpp"

using namespace excursion;

namespace {

constexpr double kPi = std::numbers::pi;

KSegmentProblem star(double u, std::vector<double> angles, std::vector<double> lengths,
                     CorrelationModel model = CorrelationModel::gaussian()) {
  KSegmentProblem p;
  p.u = u;
  p.angles = std::move(angles);
  p.lengths = std::move(lengths);
  p.model = std::move(model);
  return p;
}

TwoSegmentProblem two(double u, double l1, double l2, double phi) {
  TwoSegmentProblem p;
  p.u = u;
  p.l1 = l1;
  p.l2 = l2;
  p.phi_tilde = phi;
  return p;
}

// The same two segments as a 2-star: v1 at pi/2 + phi, v2 at pi/2 - phi
KSegmentProblem as_star(const TwoSegmentProblem& p) {
  return star(p.u, {kPi / 2 + p.phi_tilde, kPi / 2 - p.phi_tilde}, {p.l1, p.l2});
}

} // namespace

TEST(AlphaBeta, ZeroLag) {
  const auto p = star(1, {0.2, 1.9}, {1, 0.5});
  const auto ab = alpha_beta(p, 0, 0.6, 0, 0.6);
  EXPECT_EQ(ab.alpha, 1.0);
  EXPECT_EQ(ab.beta, 0.0);
}

TEST(AlphaBeta, OrthogonalGaussian) {
  const auto p = star(1, {0.0, kPi / 2}, {1, 1});
  EXPECT_NEAR(alpha_beta(p, 0, 1.0, 1, 1.0).alpha, std::exp(-1.0), 1e-14);
}

TEST(AlphaBeta, BetaIsFiniteDifferenceOfCovariance) {
  for (const auto& model : {CorrelationModel::gaussian(), CorrelationModel::cauchy(1.3, 1.5),
                            CorrelationModel::anisotropic_gaussian(1.4, 0.3, 0.7)}) {
    const auto p = star(1, {0.4, 2.1, 3.9}, {1.0, 0.8, 1.2}, model);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const double t = 0.55, h = 0.35;
        auto cov = [&](double d) { return model.r((t + d) * p.direction(i) - h * p.direction(j)); };
        auto central = [&](double d) { return (cov(d) - cov(-d)) / (2 * d); };
        const double fd = (4 * central(5e-4) - central(1e-3)) / 3;
        EXPECT_NEAR(alpha_beta(p, i, t, j, h).beta, fd, 1e-5) << model.descriptor() << " " << i << j;
      }
  }
}

TEST(WMatrix, ZeroLevelZeroSlope) {
  const auto p = star(0, {0.0, 2.0}, {1, 0.6});
  const auto s = make_k_regression_state(p, 0, 0.8, 9);
  const Eigen::MatrixXd w = w_matrix(p, s, 0.0, 0.0);
  for (Eigen::Index m = 0; m < w.rows(); ++m)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (std::isfinite(w(m, j))) EXPECT_EQ(w(m, j), 0.0);
}

TEST(WMatrix, DegenerateConditioningCell) {
  const auto p = star(1.3, {0.0, 2.0}, {1, 1});
  const int n = 11;
  const double t = 0.5; // grid point 5
  const auto s = make_k_regression_state(p, 0, t, n);
  const Eigen::MatrixXd w = w_matrix(p, s, 0.7, p.u);
  EXPECT_NEAR(w(5, 0), 0.0, 1e-12);
  for (std::size_t c = 0; c < s.cells.size(); ++c)
    if (s.cells[c] == std::pair<std::size_t, std::size_t>{5, 0}) {
      EXPECT_NEAR(s.z_cov(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)), 0.0, 1e-12);
      EXPECT_NEAR(s.cell_alpha(static_cast<Eigen::Index>(c)), 1.0, 1e-12);
    }
}

TEST(WMatrix, CellsBeyondShortSegmentsAreInfinite) {
  const auto p = star(1, {0.0, 2.0}, {0.3, 1.0});
  const auto s = make_k_regression_state(p, 1, 0.8, 11); // grid step 0.1
  const Eigen::MatrixXd w = w_matrix(p, s, 0.4, p.u);
  EXPECT_TRUE(std::isinf(w(5, 0)));
  EXPECT_TRUE(std::isfinite(w(5, 1)));
  EXPECT_TRUE(std::isfinite(w(3, 0)));
  EXPECT_TRUE(std::isinf(w(9, 1))); // beyond t
}

TEST(EiOfT, OriginIsTheOnlyConstraint) {
  const auto p = star(0.7, {0.3, 1.8}, {1, 1});
  const auto e = e_i_of_t(p, 0, 0.0, 8);
  EXPECT_NEAR(e.value, std::sqrt(2.0 * directional_deriv_variance(p.model, p.direction(0)) / kPi), 1e-12);
}

TEST(EiOfT, SmallRadiusLimit) {
  // as t -> 0+: X_0 <= u gives y >= 0 and X_{t v_1} <= u gives g.v_1 <= y,
  // so with g = (y, w) in the frame of v_0 the limit is E[y 1(y >= 0, w <= c y)]
  const double gap = 1.5;
  const auto p = star(0.7, {0.3, 0.3 + gap}, {1, 1});
  const auto e = e_i_of_t(p, 0, 1e-4, 8);
  const double c = (1 - std::cos(gap)) / std::sin(gap);
  const double limit = 0.5 / std::sqrt(2 * kPi) + c / (2 * kPi) * std::sqrt(kPi / (2 * (1 + c * c)));
  EXPECT_NEAR(e.value, limit, 1e-3 + e.abs_error);
}

TEST(EiOfT, HighLevelConstraintsInactive) {
  const auto p = star(120, {0.0, kPi / 2}, {1, 1});
  const auto e = e_i_of_t(p, 0, 6.0 / 11.0, 12);
  EXPECT_NEAR(e.value, std::sqrt(2.0 / kPi), 1e-4);
}

TEST(EiOfT, MatchesSweepingLineIntegrand) {
  // radius t on branch 1 <-> theta = l1 - t with I(theta) = [theta, 2 l1 - theta]
  const auto tp = two(1, 1, 1, kPi / 4);
  const auto kp = as_star(tp);
  const double t = 0.7, theta = 0.3;
  const auto e16 = e_i_of_t(kp, 0, t, 16);
  const auto e31 = e_i_of_t(kp, 0, t, 31);
  const auto c16 = cond_integrand(tp, theta, interval_I(tp, theta), 16);
  const auto c31 = cond_integrand(tp, theta, interval_I(tp, theta), 31);
  const double tol = e16.abs_error + c16.abs_error + std::abs(e16.value - e31.value) + std::abs(c16.value - c31.value);
  EXPECT_NEAR(e16.value, c16.value, tol);
}

TEST(EiOfT, FiniteGridMonteCarloOracle) {
  const auto p = star(1, {0.0, 2.2}, {1.0, 0.6});
  const std::size_t i = 0;
  const double t = 0.75;
  const int n = 9;
  const auto e = e_i_of_t(p, i, t, n);
  // the constraint set: grid points h <= min(l_j, t), origin once, plus the ray ends
  std::vector<Vec2> pts{Vec2::Zero()};
  for (std::size_t j = 0; j < 2; ++j) {
    const double end = std::min(p.lengths[j], t);
    for (int m = 1; m < n; ++m) {
      const double h = m / (n - 1.0);
      if (h <= end + 1e-12) pts.push_back(h * p.direction(j));
    }
    if (std::abs(std::round(end * (n - 1)) - end * (n - 1)) > 1e-9) pts.push_back(end * p.direction(j));
  }
  const Vec2 x0 = t * p.direction(i);
  const Vec2 vi = p.direction(i);
  // the conditioning point itself holds with equality, drop it
  std::erase_if(pts, [&](const Vec2& q) { return (q - x0).norm() < 1e-12; });
  const int d = static_cast<int>(pts.size());
  Eigen::MatrixXd c(d + 2, d + 2);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) c(a, b) = p.model.r(pts[a] - pts[b]);
    c(a, d) = c(d, a) = p.model.r(pts[a] - x0);
    c(a, d + 1) = c(d + 1, a) =
        deriv_cov(p.model, pts[a] - x0, {0, 0}, {1, 0}) * vi(0) + deriv_cov(p.model, pts[a] - x0, {0, 0}, {0, 1}) * vi(1);
  }
  c(d, d) = 1.0;
  c(d, d + 1) = c(d + 1, d) = 0.0;
  c(d + 1, d + 1) = directional_deriv_variance(p.model, vi);
  const Eigen::MatrixXd bb = c.topRightCorner(d, 2);
  const Eigen::MatrixXd dd = c.bottomRightCorner(2, 2);
  const Eigen::MatrixXd coef = bb * dd.inverse();
  const Eigen::MatrixXd resid = c.topLeftCorner(d, d) - bb * dd.inverse() * bb.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(resid);
  const Eigen::MatrixXd root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> z;
  const int samples = 1000000;
  double sum = 0.0, sum2 = 0.0;
  Eigen::VectorXd w(d);
  for (int k = 0; k < samples; ++k) {
    for (int a = 0; a < d; ++a) w(a) = z(rng);
    const double y = std::sqrt(dd(1, 1)) * z(rng);
    const Eigen::VectorXd path = root * w + coef.col(0) * p.u + coef.col(1) * y;
    const double x = (path.array() <= p.u + 1e-12).all() ? std::abs(y) : 0.0;
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / samples;
  const double se = std::sqrt((sum2 / samples - mean * mean) / samples);
  EXPECT_NEAR(e.value, mean, 3 * se + e.abs_error) << "engine " << e.value << " oracle " << mean;
}

TEST(JointSurvivalK, VanishingLengthsAtZeroLevel) {
  const auto s = joint_survival_k(star(0, {0.0, 2.0, 4.0}, {1e-6, 1e-6, 1e-6}));
  EXPECT_NEAR(s.survival, 0.5, 1e-5);
  EXPECT_NEAR(s.capacity, 1.0 - s.survival, 1e-15);
}

TEST(JointSurvivalK, SingleSegmentMatchesTwoSegmentReduction) {
  const auto s = joint_survival_k(star(1, {kPi / 2 + kPi / 4}, {1.0}));
  const auto c = capacity_two_segments(two(1, 1, 0, kPi / 4));
  EXPECT_NEAR(s.capacity, c.value, s.abs_error + c.abs_error);
}

TEST(JointSurvivalK, TwoSegmentsMatchSweepingLine) {
  for (const auto& tp : {two(1, 1, 1, kPi / 4), two(1.5, 0.5, 0.5, kPi / 2)}) {
    const auto s = joint_survival_k(as_star(tp));
    const auto c = capacity_two_segments(tp);
    EXPECT_NEAR(s.capacity, c.value, s.abs_error + c.abs_error) << "u " << tp.u;
  }
}

TEST(JointSurvivalK, ThreeStarMonteCarlo) {
  const auto p = star(1.5, {0.0, 2 * kPi / 3, 4 * kPi / 3}, {0.8, 0.8, 0.8});
  const auto s = joint_survival_k(p);
  const auto mc = empirical_capacity(p, 0.01, 100000, 99);
  EXPECT_NEAR(s.capacity, mc.value, 3 * mc.standard_error + s.abs_error) << "engine " << s.capacity << " mc " << mc.value;
}

TEST(JointSurvivalK, PermutationInvariantExactly) {
  const auto a = joint_survival_k(star(1, {0.3, 2.0, 4.1}, {0.5, 0.9, 0.7}));
  const auto b = joint_survival_k(star(1, {4.1, 0.3, 2.0}, {0.7, 0.5, 0.9}));
  EXPECT_EQ(a.survival, b.survival);
  EXPECT_EQ(a.abs_error, b.abs_error);
}

TEST(JointSurvivalK, RotationInvariantForIsotropicModel) {
  const auto a = joint_survival_k(star(1, {0.3, 2.0}, {0.5, 0.9}));
  const auto b = joint_survival_k(star(1, {1.1, 2.8}, {0.5, 0.9}));
  EXPECT_LT(std::abs(a.survival - b.survival), a.abs_error + b.abs_error);
}

TEST(JointSurvivalK, MonotoneInLengthAndLevel) {
  const auto base = joint_survival_k(star(1, {0.0, 2.0}, {0.5, 0.5}));
  const auto longer = joint_survival_k(star(1, {0.0, 2.0}, {0.9, 0.5}));
  const auto higher = joint_survival_k(star(1.5, {0.0, 2.0}, {0.5, 0.5}));
  EXPECT_LE(longer.survival, base.survival + base.abs_error + longer.abs_error);
  EXPECT_GE(higher.survival + higher.abs_error + base.abs_error, base.survival);
}

TEST(JointSurvivalK, Sandwich) {
  for (double u : {0.0, 1.0, 2.0}) {
    const auto p = star(u, {0.0, 2.0, 4.0}, {0.6, 0.4, 0.5});
    const auto s = joint_survival_k(p);
    const double lower = 1.0 - normal_cdf(u);
    const double upper = lower + 1.5 * std::exp(-u * u / 2) / (2 * kPi);
    EXPECT_GE(s.capacity + s.abs_error, lower);
    EXPECT_LE(s.capacity - s.abs_error, upper);
  }
}

TEST(JointSurvivalK, RejectsBadInput) {
  EXPECT_THROW(joint_survival_k(star(1, {0.0, 1.0}, {1.0})), std::invalid_argument);
  EXPECT_THROW(joint_survival_k(star(1, {0.0, 1.0}, {1.0, -0.5})), std::invalid_argument);
  CapacityKOptions o;
  o.n = 1;
  EXPECT_THROW(joint_survival_k(star(1, {0.0}, {1.0}), o), std::invalid_argument);
}
