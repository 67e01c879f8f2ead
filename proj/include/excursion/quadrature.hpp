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

// Gaussian quadrature rules: Gauss-Legendre on [-1,1], Gauss-Hermite for the
// standard normal weight, and the half-range Hermite rule for phi(t) on
// [0, inf). Rules are built once per order and cached.

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "numeric.hpp"

namespace excursion::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

namespace detail {

// Golub-Welsch: nodes/weights from the Jacobi matrix of the recurrence
// p_{k+1} = (x - alpha_k) p_k - beta_k p_{k-1}, total mass mu0.
inline Rule golub_welsch(const std::vector<double>& alpha, const std::vector<double>& beta, double mu0) {
  const auto n = static_cast<Eigen::Index>(alpha.size());
  Eigen::VectorXd diag(n);
  Eigen::VectorXd sub(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index i = 0; i < n; ++i) diag(i) = alpha[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 0; i + 1 < n; ++i) sub(i) = std::sqrt(beta[static_cast<std::size_t>(i + 1)]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  Rule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    rule.nodes[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[static_cast<std::size_t>(i)] = mu0 * v0 * v0;
  }
  return rule;
}

template <class Build>
const Rule& cached(std::map<int, Rule>& cache, std::mutex& mu, int order, Build&& build) {
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, build(order)).first;
  return it->second;
}

inline Rule build_legendre(int n) {
  Rule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    if (n == 1) p0 = 1.0;
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

inline Rule build_hermite(int n) {
  std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
  std::vector<double> beta(static_cast<std::size_t>(n), 0.0);
  for (int k = 1; k < n; ++k) beta[static_cast<std::size_t>(k)] = k;
  return golub_welsch(alpha, beta, 1.0);
}

// Discretized Stieltjes procedure on a fine composite Gauss-Legendre
// resolution of phi(t) dt over [0, 30]; the tail beyond 30 is below 1e-190.
inline Rule build_half_hermite(int n) {
  constexpr int kPanels = 60;
  constexpr double kUpper = 30.0;
  const Rule base = build_legendre(48);
  std::vector<double> t;
  std::vector<double> w;
  t.reserve(kPanels * base.size());
  w.reserve(kPanels * base.size());
  const double h = kUpper / kPanels;
  for (int p = 0; p < kPanels; ++p) {
    const double mid = (p + 0.5) * h;
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double x = mid + 0.5 * h * base.nodes[i];
      t.push_back(x);
      w.push_back(0.5 * h * base.weights[i] * normal_pdf(x));
    }
  }
  const std::size_t len = t.size();
  std::vector<double> alpha(static_cast<std::size_t>(n));
  std::vector<double> beta(static_cast<std::size_t>(n), 0.0);
  std::vector<double> prev(len, 0.0);
  std::vector<double> cur(len, 1.0);
  double norm_prev = 1.0;
  double norm_cur = 0.0;
  for (std::size_t j = 0; j < len; ++j) norm_cur += w[j];
  const double mu0 = norm_cur;
  for (int k = 0; k < n; ++k) {
    double num = 0.0;
    for (std::size_t j = 0; j < len; ++j) num += w[j] * t[j] * cur[j] * cur[j];
    alpha[static_cast<std::size_t>(k)] = num / norm_cur;
    if (k > 0) beta[static_cast<std::size_t>(k)] = norm_cur / norm_prev;
    // rescale to keep the monic recurrence in range
    const double scale = 1.0 / std::sqrt(norm_cur);
    std::vector<double> next(len);
    const double a = alpha[static_cast<std::size_t>(k)];
    const double b = k > 0 ? beta[static_cast<std::size_t>(k)] : 0.0;
    for (std::size_t j = 0; j < len; ++j) next[j] = ((t[j] - a) * cur[j] - b * prev[j]) * scale;
    for (std::size_t j = 0; j < len; ++j) prev[j] = cur[j] * scale;
    cur.swap(next);
    norm_prev = 0.0;
    norm_cur = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      norm_prev += w[j] * prev[j] * prev[j];
      norm_cur += w[j] * cur[j] * cur[j];
    }
  }
  return golub_welsch(alpha, beta, mu0);
}

} // namespace detail

/// Gauss-Legendre rule on [-1, 1].
inline const Rule& gauss_legendre(int order) {
  if (order < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  static std::map<int, Rule> cache;
  static std::mutex mu;
  return detail::cached(cache, mu, order, detail::build_legendre);
}

/// Gauss-Hermite rule for the standard normal density: sum w_i f(x_i) ~ E f(N(0,1)).
inline const Rule& gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
  static std::map<int, Rule> cache;
  static std::mutex mu;
  return detail::cached(cache, mu, order, detail::build_hermite);
}

/// Half-range Hermite rule: sum w_i f(t_i) ~ integral_0^inf f(t) phi(t) dt.
/// Exact for polynomials of degree < 2*order.
inline const Rule& half_range_hermite(int order) {
  if (order < 1 || order > 128) throw std::invalid_argument("half_range_hermite: order must be in [1, 128]");
  static std::map<int, Rule> cache;
  static std::mutex mu;
  return detail::cached(cache, mu, order, detail::build_half_hermite);
}

/// Composite Gauss-Legendre nodes over [a, b] split at sorted breakpoints.
inline Rule composite_legendre(std::vector<double> breaks, int order) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double x, double y) { return std::abs(x - y) <= 1e-14 * (1.0 + std::abs(x)); }),
               breaks.end());
  const Rule& base = gauss_legendre(order);
  Rule out;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double lo = breaks[p];
    const double hi = breaks[p + 1];
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    for (std::size_t i = 0; i < base.size(); ++i) {
      out.nodes.push_back(mid + half * base.nodes[i]);
      out.weights.push_back(half * base.weights[i]);
    }
  }
  return out;
}

/// Integrates f over [a, b] with a single Gauss-Legendre rule.
template <class F>
double integrate_legendre(F&& f, double a, double b, int order) {
  const Rule& base = gauss_legendre(order);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  double sum = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) sum += base.weights[i] * f(mid + half * base.nodes[i]);
  return half * sum;
}

/// Adaptive Gauss-Kronrod-free bisection on Gauss-Legendre 20 vs 10 panels.
/// Used as an independent oracle in tests and for smooth one-off integrals.
template <class F>
double integrate_adaptive(F&& f, double a, double b, double tol, int depth = 0) {
  const double coarse = integrate_legendre(f, a, b, 10);
  const double fine = integrate_legendre(f, a, b, 20);
  if (std::abs(fine - coarse) <= tol || depth > 40) return fine;
  const double mid = 0.5 * (a + b);
  return integrate_adaptive(f, a, mid, 0.5 * tol, depth + 1) + integrate_adaptive(f, mid, b, 0.5 * tol, depth + 1);
}

} // namespace excursion::quad
