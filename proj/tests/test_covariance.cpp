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
#include <random>

#include <gtest/gtest.h>

#include "excursion/covariance.hpp"

using excursion::CorrelationModel;
using excursion::DerivOrder;
using excursion::Vec2;

namespace {

std::vector<CorrelationModel> builtin_models() {
  return {CorrelationModel::gaussian(), CorrelationModel::scaled_gaussian(0.7),
          CorrelationModel::anisotropic_gaussian(4.0, 0.5, 1.0)};
}

// second derivative of s -> r(s v) at 0 by central differences
double fd_second_along(const CorrelationModel& m, const Vec2& v) {
  const double h = 1e-4;
  return (m.r(h * v) - 2.0 * m.r(Vec2::Zero()) + m.r(-h * v)) / (h * h);
}

} // namespace

TEST(DerivCov, GaussianKernelExamples) {
  const auto g = CorrelationModel::gaussian();
  EXPECT_DOUBLE_EQ(excursion::deriv_cov(g, Vec2(0, 0), {0, 0}, {0, 0}), 1.0);
  EXPECT_NEAR(excursion::deriv_cov(g, Vec2(1, 0), {1, 0}, {0, 0}), -std::exp(-0.5), 1e-14);
  EXPECT_NEAR(excursion::deriv_cov(g, Vec2(0, 0), {1, 0}, {1, 0}), 1.0, 1e-14);
  EXPECT_NEAR(excursion::deriv_cov(g, Vec2(0, 0), {0, 1}, {0, 1}), 1.0, 1e-14);
  EXPECT_NEAR(excursion::deriv_cov(g, Vec2(0, 0), {1, 0}, {0, 1}), 0.0, 1e-14);
}

TEST(DerivCov, RejectsHigherOrders) {
  const auto g = CorrelationModel::gaussian();
  EXPECT_THROW(excursion::deriv_cov(g, Vec2(0, 0), {2, 0}, {1, 0}), std::invalid_argument);
  EXPECT_THROW(excursion::deriv_cov(g, Vec2(0, 0), {1, 1}, {0, 1}), std::invalid_argument);
}

TEST(DerivCov, FirstOrderReflectionSymmetry) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (const auto& m : builtin_models()) {
    for (int s = 0; s < 50; ++s) {
      const Vec2 h(unif(rng), unif(rng));
      for (DerivOrder d : {DerivOrder{1, 0}, DerivOrder{0, 1}}) {
        EXPECT_NEAR(excursion::deriv_cov(m, h, d, {0, 0}), -excursion::deriv_cov(m, -h, d, {0, 0}), 1e-13);
        // the field at s+h against the derivative at s
        EXPECT_NEAR(excursion::deriv_cov(m, h, {0, 0}, d), -excursion::deriv_cov(m, h, d, {0, 0}), 1e-13);
      }
    }
  }
}

TEST(CorrelationModel, AnalyticPartialsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-2.5, 2.5);
  const double d = 1e-4;
  const Vec2 e1(1, 0), e2(0, 1);
  for (const auto& m : builtin_models()) {
    for (int s = 0; s < 100; ++s) {
      const Vec2 h(unif(rng), unif(rng));
      const auto p = m.partials(h);
      auto check = [](double analytic, double fd) {
        EXPECT_LE(std::abs(analytic - fd), 1e-6 * std::max(std::abs(analytic), 1e-3));
      };
      // central differences with step d, Richardson-extrapolated against d/2;
      // second order uses differences of the first partials
      auto diff = [&](auto&& g, const Vec2& e) {
        auto central = [&](double step) { return (g(h + step * e) - g(h - step * e)) / (2 * step); };
        return (4.0 * central(0.5 * d) - central(d)) / 3.0;
      };
      auto value = [&](const Vec2& x) { return m.r(x); };
      auto dx = [&](const Vec2& x) { return m.partials(x).d10; };
      auto dy = [&](const Vec2& x) { return m.partials(x).d01; };
      check(p.d10, diff(value, e1));
      check(p.d01, diff(value, e2));
      check(p.d20, diff(dx, e1));
      check(p.d02, diff(dy, e2));
      check(p.d11, diff(dx, e2));
    }
  }
}

TEST(CorrelationModel, InvariantsHold) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-4.0, 4.0);
  for (const auto& m : builtin_models()) {
    EXPECT_EQ(m.r(Vec2::Zero()), 1.0);
    const auto p0 = m.partials(Vec2::Zero());
    EXPECT_EQ(p0.d10, 0.0);
    EXPECT_EQ(p0.d01, 0.0);
    for (int s = 0; s < 100; ++s) {
      const Vec2 h(unif(rng), unif(rng));
      EXPECT_LE(std::abs(m.r(h)), 1.0);
      EXPECT_DOUBLE_EQ(m.r(h), m.r(-h));
    }
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(m.spectral_moments()).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(CorrelationModel, RejectsInvalidFunctions) {
  EXPECT_THROW(CorrelationModel::from_function([](const Vec2&) { return 0.5; }, "const"), std::invalid_argument);
  EXPECT_THROW(CorrelationModel::from_function([](const Vec2& h) { return std::exp(-h(0)); }, "odd"),
               std::invalid_argument);
  EXPECT_THROW(CorrelationModel::scaled_gaussian(0.0), std::invalid_argument);
  EXPECT_THROW(CorrelationModel::anisotropic_gaussian(1.0, 2.0, 1.0), std::invalid_argument);
}

TEST(CorrelationModel, FiniteDifferenceModelTracksClosedForm) {
  const auto fd = CorrelationModel::from_function([](const Vec2& h) { return std::exp(-0.5 * h.squaredNorm()); }, "fd");
  const auto g = CorrelationModel::gaussian();
  for (const Vec2& h : {Vec2(0.3, -0.4), Vec2(1.2, 0.7), Vec2(-0.1, 2.0)}) {
    const auto a = g.partials(h);
    const auto b = fd.partials(h);
    EXPECT_NEAR(a.d10, b.d10, 1e-8);
    EXPECT_NEAR(a.d01, b.d01, 1e-8);
    EXPECT_NEAR(a.d20, b.d20, 1e-6);
    EXPECT_NEAR(a.d11, b.d11, 1e-6);
    EXPECT_NEAR(a.d02, b.d02, 1e-6);
  }
  const auto c = CorrelationModel::cauchy(1.0, 2.0);
  // Lambda = 2 beta / length^2 * I for the Cauchy family
  EXPECT_NEAR(c.spectral_moments()(0, 0), 4.0, 1e-5);
  EXPECT_NEAR(c.spectral_moments()(0, 1), 0.0, 1e-5);
}

TEST(DirectionalDerivVariance, Examples) {
  const auto g = CorrelationModel::gaussian();
  EXPECT_NEAR(excursion::directional_deriv_variance(g, Vec2(1, 0)), 1.0, 1e-14);
  for (double phi = 0.0; phi < 6.3; phi += 0.37)
    EXPECT_NEAR(excursion::directional_deriv_variance(g, Vec2(std::cos(phi), std::sin(phi))), 1.0, 1e-14);
  const auto aniso = CorrelationModel::anisotropic_gaussian(4.0, 0.0, 1.0);
  const Vec2 v(1, 0);
  EXPECT_NEAR(excursion::directional_deriv_variance(aniso, v), -fd_second_along(aniso, v), 1e-5);
  EXPECT_NEAR(excursion::directional_deriv_variance(aniso, v), 4.0, 1e-12);
  EXPECT_THROW(excursion::directional_deriv_variance(g, Vec2(2, 0)), std::invalid_argument);
}

TEST(DirectionalDerivVariance, NonnegativeAndMatchesFiniteDifference) {
  const auto m = CorrelationModel::anisotropic_gaussian(2.0, -0.8, 0.9);
  for (double phi = 0.0; phi < 6.3; phi += 0.1) {
    const Vec2 v(std::cos(phi), std::sin(phi));
    const double var = excursion::directional_deriv_variance(m, v);
    EXPECT_GE(var, 0.0);
    EXPECT_NEAR(var, -fd_second_along(m, v), 1e-5);
  }
}
