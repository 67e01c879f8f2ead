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

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace excursion {

using Vec2 = Eigen::Vector2d;

/// Value and partial derivatives (up to total order 2) of a correlation
/// function at one lag. d10 = dr/dh1, d11 = d2r/dh1dh2, and so on.
struct Partials {
  double r = 0.0;
  double d10 = 0.0;
  double d01 = 0.0;
  double d20 = 0.0;
  double d11 = 0.0;
  double d02 = 0.0;
};

/// Stationary correlation function r(h) of a unit-variance Gaussian field on
/// the plane, with its partial derivatives up to total order two.
///
/// Instances are immutable once built and safe to share across threads. The
/// factories validate the model: r(0) = 1, symmetry r(h) = r(-h), a positive
/// semidefinite spectral-moment matrix, and (for closed-form models) that
/// every analytic partial agrees with a central difference of r.
///
/// Paths of the field are assumed to be C^1 almost surely; supplying a model
/// that is smooth enough for that is the caller's responsibility.
class CorrelationModel {
public:
  using Evaluator = std::function<Partials(const Vec2&)>;

  /// r(h) = exp(-|h|^2 / 2).
  static CorrelationModel gaussian() { return scaled_gaussian(1.0); }

  /// r(h) = exp(-|h|^2 / (2 length^2)).
  static CorrelationModel scaled_gaussian(double length) {
    if (!(length > 0.0)) throw std::invalid_argument("scaled_gaussian: length must be positive");
    const double p = 1.0 / (length * length);
    std::ostringstream os;
    os.precision(17);
    if (length == 1.0) {
      os << "gaussian";
    } else {
      os << "scaled_gaussian(length=" << length << ")";
    }
    auto model = quadratic_form_gaussian(p, 0.0, p, os.str());
    model.isotropic_ = true;
    model.validate(true);
    return model;
  }

  /// r(h) = exp(-h^T A h / 2) with A = [[a11, a12], [a12, a22]] positive definite.
  static CorrelationModel anisotropic_gaussian(double a11, double a12, double a22) {
    if (!(a11 > 0.0) || !(a22 > 0.0) || a11 * a22 - a12 * a12 <= 0.0)
      throw std::invalid_argument("anisotropic_gaussian: form must be positive definite");
    std::ostringstream os;
    os.precision(17);
    os << "anisotropic_gaussian(a11=" << a11 << ",a12=" << a12 << ",a22=" << a22 << ")";
    auto model = quadratic_form_gaussian(a11, a12, a22, os.str());
    model.isotropic_ = (a12 == 0.0 && a11 == a22);
    model.validate(true);
    return model;
  }

  /// Generalized Cauchy model r(h) = (1 + |h|^2 / length^2)^(-beta). Its
  /// partials come from the finite-difference evaluator.
  static CorrelationModel cauchy(double length, double beta) {
    if (!(length > 0.0) || !(beta > 0.0)) throw std::invalid_argument("cauchy: length and beta must be positive");
    std::ostringstream os;
    os.precision(17);
    os << "cauchy(length=" << length << ",beta=" << beta << ")";
    const double l2 = length * length;
    auto model = from_function([l2, beta](const Vec2& h) { return std::pow(1.0 + h.squaredNorm() / l2, -beta); },
                               os.str(), length);
    model.isotropic_ = true;
    return model;
  }

  /// Wraps an arbitrary correlation function; partials are obtained by
  /// central finite differences with steps scaled by `scale` (a typical
  /// correlation length).
  static CorrelationModel from_function(std::function<double(const Vec2&)> r, std::string descriptor,
                                        double scale = 1.0) {
    if (!r) throw std::invalid_argument("from_function: empty correlation function");
    const double h1 = 1e-5 * scale;
    const double h2 = 1e-4 * scale;
    auto eval = [r, h1, h2](const Vec2& h) {
      Partials p;
      p.r = r(h);
      const Vec2 e1(1.0, 0.0);
      const Vec2 e2(0.0, 1.0);
      p.d10 = (r(h + h1 * e1) - r(h - h1 * e1)) / (2.0 * h1);
      p.d01 = (r(h + h1 * e2) - r(h - h1 * e2)) / (2.0 * h1);
      // fourth-order central second differences
      auto second = [&](const Vec2& e) {
        return (-r(h + 2 * h2 * e) + 16 * r(h + h2 * e) - 30 * p.r + 16 * r(h - h2 * e) - r(h - 2 * h2 * e)) /
               (12.0 * h2 * h2);
      };
      p.d20 = second(e1);
      p.d02 = second(e2);
      p.d11 = (r(h + h2 * (e1 + e2)) - r(h + h2 * (e1 - e2)) - r(h + h2 * (e2 - e1)) + r(h - h2 * (e1 + e2))) /
              (4.0 * h2 * h2);
      return p;
    };
    CorrelationModel model(std::move(eval), std::move(r), std::move(descriptor));
    model.isotropic_ = false;
    model.validate(false);
    return model;
  }

  Partials partials(const Vec2& lag) const { return eval_(lag); }
  double r(const Vec2& lag) const { return value_(lag); }

  /// Partial derivative d^{j+k} r / dh1^j dh2^k for j + k <= 2.
  double partial(int j, int k, const Vec2& lag) const {
    if (j < 0 || k < 0 || j + k > 2) throw std::invalid_argument("partial: derivative order must be <= 2");
    if (j == 0 && k == 0) return r(lag);
    const Partials p = partials(lag);
    if (j == 1 && k == 0) return p.d10;
    if (j == 0 && k == 1) return p.d01;
    if (j == 2) return p.d20;
    if (k == 2) return p.d02;
    return p.d11;
  }

  /// Spectral-moment matrix: the negated Hessian of r at the origin.
  const Eigen::Matrix2d& spectral_moments() const { return lambda_; }

  bool isotropic() const { return isotropic_; }
  const std::string& descriptor() const { return descriptor_; }

private:
  CorrelationModel(Evaluator eval, std::function<double(const Vec2&)> value, std::string descriptor)
      : eval_(std::move(eval)), value_(std::move(value)), descriptor_(std::move(descriptor)) {}

  static CorrelationModel quadratic_form_gaussian(double a11, double a12, double a22, std::string descriptor) {
    Eigen::Matrix2d a;
    a << a11, a12, a12, a22;
    auto eval = [a](const Vec2& h) {
      const Vec2 ah = a * h;
      const double r = std::exp(-0.5 * h.dot(ah));
      Partials p;
      p.r = r;
      p.d10 = -ah(0) * r;
      p.d01 = -ah(1) * r;
      p.d20 = (ah(0) * ah(0) - a(0, 0)) * r;
      p.d11 = (ah(0) * ah(1) - a(0, 1)) * r;
      p.d02 = (ah(1) * ah(1) - a(1, 1)) * r;
      return p;
    };
    auto value = [a](const Vec2& h) { return std::exp(-0.5 * h.dot(a * h)); };
    return CorrelationModel(std::move(eval), std::move(value), std::move(descriptor));
  }

  void validate(bool check_partials) {
    const Partials at0 = partials(Vec2::Zero());
    if (std::abs(value_(Vec2::Zero()) - 1.0) > 1e-12)
      throw std::invalid_argument("correlation model " + descriptor_ + ": r(0) must equal 1");
    if (std::abs(at0.d10) > 1e-8 || std::abs(at0.d01) > 1e-8)
      throw std::invalid_argument("correlation model " + descriptor_ + ": gradient at 0 must vanish");
    lambda_ << -at0.d20, -at0.d11, -at0.d11, -at0.d02;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(lambda_);
    if (eig.eigenvalues().minCoeff() < -1e-10)
      throw std::invalid_argument("correlation model " + descriptor_ + ": spectral moments not PSD");

    std::mt19937_64 rng(20260101u);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    for (int s = 0; s < 16; ++s) {
      const Vec2 h(unif(rng), unif(rng));
      const double rh = value_(h);
      if (!(std::abs(rh) <= 1.0 + 1e-12) || std::abs(rh - value_(-h)) > 1e-12)
        throw std::invalid_argument("correlation model " + descriptor_ + ": r must satisfy |r|<=1 and r(h)=r(-h)");
      if (check_partials && !partials_consistent(h))
        throw std::invalid_argument("correlation model " + descriptor_ +
                                    ": analytic partials disagree with finite differences");
    }
  }

  bool partials_consistent(const Vec2& h) const {
    const double d = 1e-4;
    const Partials p = partials(h);
    const Vec2 e1(1.0, 0.0);
    const Vec2 e2(0.0, 1.0);
    auto close = [](double analytic, double fd, double scale) {
      return std::abs(analytic - fd) <= 1e-6 * std::max(std::abs(analytic), scale);
    };
    // central differences, Richardson-extrapolated (steps d and d/2)
    auto diff = [&](auto&& g, const Vec2& e) {
      auto central = [&](double step) { return (g(h + step * e) - g(h - step * e)) / (2 * step); };
      return (4.0 * central(0.5 * d) - central(d)) / 3.0;
    };
    auto dx = [&](const Vec2& x) { return partials(x).d10; };
    auto dy = [&](const Vec2& x) { return partials(x).d01; };
    const double fd10 = diff(value_, e1);
    const double fd01 = diff(value_, e2);
    const double fd20 = diff(dx, e1);
    const double fd02 = diff(dy, e2);
    const double fd11 = diff(dx, e2);
    const double scale = 1e-3;
    return close(p.d10, fd10, scale) && close(p.d01, fd01, scale) && close(p.d20, fd20, scale) &&
           close(p.d02, fd02, scale) && close(p.d11, fd11, scale);
  }

  Evaluator eval_;
  std::function<double(const Vec2&)> value_;
  std::string descriptor_;
  Eigen::Matrix2d lambda_ = Eigen::Matrix2d::Zero();
  bool isotropic_ = false;
};

/// A derivative order (j, k): j derivatives along e1 and k along e2.
struct DerivOrder {
  int j = 0;
  int k = 0;
};

/// E[d_{jk} X_{s+lag} * d_{lm} X_s] = (-1)^{l+m} d_{j+l,k+m} r(lag).
inline double deriv_cov(const CorrelationModel& model, const Vec2& lag, DerivOrder left, DerivOrder right) {
  if (left.j < 0 || left.k < 0 || right.j < 0 || right.k < 0)
    throw std::invalid_argument("deriv_cov: negative derivative order");
  const int total = left.j + left.k + right.j + right.k;
  if (total > 2) throw std::invalid_argument("deriv_cov: unsupported derivative order (total > 2)");
  const double sign = ((right.j + right.k) % 2 == 0) ? 1.0 : -1.0;
  return sign * model.partial(left.j + right.j, left.k + right.k, lag);
}

/// Var(d_v X) = v^T Lambda v for a unit vector v.
inline double directional_deriv_variance(const CorrelationModel& model, const Vec2& v) {
  if (std::abs(v.norm() - 1.0) > 1e-9) throw std::invalid_argument("directional_deriv_variance: v must be unit");
  return std::max(0.0, v.dot(model.spectral_moments() * v));
}

/// Covariance of the directional derivatives E[d_{w1} X_{s+lag} d_{w2} X_s].
inline double directional_cross_cov(const Partials& p, const Vec2& w1, const Vec2& w2) {
  // -(w1^T H(lag) w2)
  return -(w1(0) * w2(0) * p.d20 + (w1(0) * w2(1) + w1(1) * w2(0)) * p.d11 + w1(1) * w2(1) * p.d02);
}

} // namespace excursion
