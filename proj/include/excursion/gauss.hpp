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

// Gaussian numerical kernels: semidefinite factorization, the multivariate
// normal cdf, exact Gaussian sampling, Gauss-Hermite expectations and the
// absolute-product moment E|W1 W2| of a bivariate Gaussian.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "numeric.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "random.hpp"

namespace excursion {

/// A numerical result with its absolute error: a deterministic quadrature
/// tolerance, 3 Monte Carlo standard errors, or both combined.
struct EstimateWithError {
  double value = 0.0;
  double abs_error = 0.0;
  std::string method;
};

/// Variances below this are treated as exactly zero.
inline constexpr double kDegenerateVariance = 1e-12;

/// Dense symmetric covariance matrix.
class CovarianceMatrix {
public:
  CovarianceMatrix() = default;
  explicit CovarianceMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw std::invalid_argument("CovarianceMatrix: matrix must be square");
    if (!m_.allFinite()) throw std::invalid_argument("CovarianceMatrix: entries must be finite");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw std::invalid_argument("CovarianceMatrix: matrix must be symmetric");
    m_ = 0.5 * (m_ + m_.transpose()).eval();
  }

  Eigen::Index dim() const { return m_.rows(); }
  const Eigen::MatrixXd& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  std::vector<bool> degenerate_mask(double eps = kDegenerateVariance) const {
    std::vector<bool> mask(static_cast<std::size_t>(dim()));
    for (Eigen::Index i = 0; i < dim(); ++i) mask[static_cast<std::size_t>(i)] = m_(i, i) < eps;
    return mask;
  }

private:
  Eigen::MatrixXd m_;
};

/// Low-rank factor L (rows in the original order) with L L^T ~ covariance.
struct CovarianceFactor {
  Eigen::MatrixXd lower;
  double tolerance = 0.0;
  Eigen::Index rank() const { return lower.cols(); }
};

namespace detail {

// Pivoted (semidefinite) Cholesky stopped once every residual variance is
// <= tol. Returns false when a residual falls below -tol (not PSD at this tol).
inline bool pivoted_cholesky(const Eigen::MatrixXd& a, double tol, Eigen::MatrixXd& out) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd d = a.diagonal();
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  Eigen::Index k = 0;
  for (; k < n; ++k) {
    Eigen::Index piv = -1;
    double best = tol;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!used[static_cast<std::size_t>(i)] && d(i) > best) {
        best = d(i);
        piv = i;
      }
    if (piv < 0) break;
    used[static_cast<std::size_t>(piv)] = true;
    const double lkk = std::sqrt(d(piv));
    Eigen::VectorXd col = a.col(piv);
    if (k > 0) col.noalias() -= l.leftCols(k) * l.row(piv).head(k).transpose();
    col /= lkk;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)] && i != piv) col(i) = 0.0;
    }
    col(piv) = lkk;
    l.col(k) = col;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!used[static_cast<std::size_t>(i)]) d(i) -= col(i) * col(i);
    d(piv) = 0.0;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (!used[static_cast<std::size_t>(i)] && d(i) < -tol) return false;
  out = l.leftCols(k);
  return true;
}

} // namespace detail

/// Factorizes a covariance matrix with the regularization schedule
/// tol = 1e-12 * trace/m, escalated x10 up to 1e-6 * trace/m. Rank deficient
/// input is fine (the factor simply has fewer columns).
inline CovarianceFactor factorize(const CovarianceMatrix& cov) {
  const Eigen::Index m = cov.dim();
  CovarianceFactor f;
  if (m == 0) return f;
  const double avg = std::max(cov.matrix().trace() / static_cast<double>(m), 0.0);
  if (avg == 0.0) {
    if (cov.matrix().cwiseAbs().maxCoeff() > 0.0) throw NumericalError("factorize: covariance is not PSD");
    f.lower = Eigen::MatrixXd::Zero(m, 0);
    return f;
  }
  for (double tol = 1e-12 * avg; tol <= 1e-6 * avg * (1 + 1e-9); tol *= 10.0) {
    if (detail::pivoted_cholesky(cov.matrix(), tol, f.lower)) {
      f.tolerance = tol;
      return f;
    }
  }
  throw NumericalError("factorize: covariance not PSD within the regularization budget");
}

/// Exact bivariate normal P(X > h, Y > k) with correlation r (Genz's
/// Drezner-Wesolowsky variant, double precision accuracy).
inline double bvn_upper(double h, double k, double r) {
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return normal_cdf(-k);
  if (k == -kInf) return normal_cdf(-h);
  const int ng = std::abs(r) < 0.3 ? 6 : (std::abs(r) < 0.75 ? 12 : 20);
  const quad::Rule& rule = quad::gauss_legendre(ng);
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = std::asin(r);
    for (std::size_t i = 0; i < rule.size(); ++i) {
      const double sn = std::sin(asr * (rule.nodes[i] + 1.0) / 2.0);
      bvn += rule.weights[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (4.0 * std::numbers::pi) + normal_cdf(-h) * normal_cdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * normal_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
      const double xs = std::pow(a * (rule.nodes[i] + 1.0), 2);
      const double rs = std::sqrt(1.0 - xs);
      const double asr = -(bs / xs + hk) / 2.0;
      if (asr > -100.0) {
        bvn += a * rule.weights[i] * std::exp(asr) *
               (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
      }
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) return bvn + normal_cdf(-std::max(h, k));
  return -bvn + std::max(0.0, normal_cdf(-h) - normal_cdf(-k));
}

/// P(X <= b1, Y <= b2) for a standardized bivariate normal with correlation r.
inline double bvn_cdf(double b1, double b2, double r) { return bvn_upper(-b1, -b2, r); }

/// Options for mvn_cdf. The quasi-Monte Carlo stream is private to each call
/// and fully determined by `seed`.
struct MvnOptions {
  double rel_tol = 1e-3;
  double abs_tol = 1e-8;
  std::uint64_t seed = 0x6e7a;
  int randomizations = 8;
  std::size_t min_points = 128;     // per randomization
  std::size_t max_points = 1 << 15; // per randomization
  double rank_tol = 1e-10;          // residual variance treated as zero, relative to max variance
};

inline constexpr std::size_t kMvnMaxDimension = 2000;

namespace detail {

inline const std::vector<double>& richtmyer_generators() {
  static const std::vector<double> gen = [] {
    std::vector<double> out;
    out.reserve(kMvnMaxDimension);
    for (int cand = 2; out.size() < kMvnMaxDimension; ++cand) {
      bool prime = true;
      for (int d = 2; d * d <= cand; ++d)
        if (cand % d == 0) {
          prime = false;
          break;
        }
      if (prime) {
        const double s = std::sqrt(static_cast<double>(cand));
        out.push_back(s - std::floor(s));
      }
    }
    return out;
  }();
  return gen;
}

// Genz separation-of-variables integrand data after reordering.
struct SovProblem {
  int n = 0;                 // active constraints
  int rank = 0;              // stochastic dimensions
  std::vector<double> lower; // row-major n x rank lower factor
  std::vector<double> bound; // permuted upper bounds
  double l(int i, int c) const { return lower[static_cast<std::size_t>(i * rank + c)]; }
};

inline constexpr double kPivotFloor = 1e-2;

inline double truncated_mean(double beta) {
  const double p = normal_cdf(beta);
  if (p < 1e-300) return beta;
  return -normal_pdf(beta) / p;
}

// Genz-Bretz reordering (smallest expected conditional probability first)
// fused with a semidefinite Cholesky. The first `forced` coordinates are
// pivoted first, in order.
inline SovProblem reorder_factor(Eigen::MatrixXd a, Eigen::VectorXd b, double rank_tol, Eigen::Index forced = 0) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  const double tol = rank_tol * std::max(a.diagonal().maxCoeff(), 1e-300);
  Eigen::Index k = 0;
  for (; k < n; ++k) {
    Eigen::Index best = -1;
    if (k < forced) {
      best = k;
      if (a(k, k) - l.row(k).head(k).squaredNorm() <= tol) throw NumericalError("mvn: degenerate leading coordinate");
    } else {
      double best_p = kInf;
      double max_s2 = 0.0;
      for (Eigen::Index i = k; i < n; ++i) max_s2 = std::max(max_s2, a(i, i) - l.row(i).head(k).squaredNorm());
      // only well-conditioned pivots are eligible, which keeps the
      // semidefinite factorization stable
      const double eligible = std::max(tol, kPivotFloor * max_s2);
      for (Eigen::Index i = k; i < n; ++i) {
        const double s2 = a(i, i) - l.row(i).head(k).squaredNorm();
        if (s2 <= eligible) continue;
        const double beta = (b(i) - l.row(i).head(k).dot(mu.head(k))) / std::sqrt(s2);
        const double p = normal_cdf(beta);
        if (p < best_p) {
          best_p = p;
          best = i;
        }
      }
    }
    if (best < 0) break;
    if (best != k) {
      a.row(k).swap(a.row(best));
      a.col(k).swap(a.col(best));
      std::swap(b(k), b(best));
      l.row(k).swap(l.row(best));
    }
    const double lkk = std::sqrt(a(k, k) - l.row(k).head(k).squaredNorm());
    l(k, k) = lkk;
    for (Eigen::Index i = k + 1; i < n; ++i) l(i, k) = (a(i, k) - l.row(i).head(k).dot(l.row(k).head(k))) / lkk;
    mu(k) = truncated_mean((b(k) - l.row(k).head(k).dot(mu.head(k))) / lkk);
  }
  const double neg_tol = 1e-8 * std::max(a.diagonal().maxCoeff(), 1.0);
  for (Eigen::Index i = k; i < n; ++i) {
    if (a(i, i) - l.row(i).head(k).squaredNorm() < -neg_tol) throw NumericalError("mvn: covariance is not PSD");
  }
  SovProblem sov;
  sov.n = static_cast<int>(n);
  sov.rank = static_cast<int>(k);
  sov.lower.resize(static_cast<std::size_t>(n * k));
  sov.bound.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    sov.bound[static_cast<std::size_t>(i)] = b(i);
    for (Eigen::Index c = 0; c < k; ++c) sov.lower[static_cast<std::size_t>(i * k + c)] = l(i, c);
  }
  return sov;
}

// Rank-one case: every constraint is l_i y <= b_i for one standard normal y.
// Returns P(constraints), or E[|y| 1(constraints)] when `weighted`.
inline double rank_one_probability(const SovProblem& sov, bool weighted) {
  double lo = -kInf;
  double hi = kInf;
  const double scale = std::abs(sov.l(0, 0));
  for (int i = 0; i < sov.n; ++i) {
    const double li = sov.l(i, 0);
    const double bi = sov.bound[static_cast<std::size_t>(i)];
    if (std::abs(li) <= 1e-12 * scale) {
      if (bi < 0.0) return 0.0;
      continue;
    }
    if (li > 0.0) {
      hi = std::min(hi, bi / li);
    } else {
      lo = std::max(lo, bi / li);
    }
  }
  if (!(hi > lo)) return 0.0;
  if (!weighted) return std::max(0.0, normal_cdf(hi) - normal_cdf(lo));
  // integral of |y| phi(y) over [lo, hi]
  auto pdf = [](double z) { return std::isfinite(z) ? normal_pdf(z) : 0.0; };
  if (lo >= 0.0) return pdf(lo) - pdf(hi);
  if (hi <= 0.0) return pdf(hi) - pdf(lo);
  return 2.0 * normal_pdf(0.0) - pdf(lo) - pdf(hi);
}

// Randomized-lattice integration of the separated integrand. With `weighted`
// the first variable is unconstrained and its absolute value multiplies the
// integrand.
inline EstimateWithError sov_qmc(const SovProblem& sov, const MvnOptions& opts, bool weighted) {
  const int dims = sov.rank < sov.n ? sov.rank : sov.rank - 1;
  const std::vector<double>& gen = richtmyer_generators();
  const int reps = std::max(2, opts.randomizations);
  auto rng = make_stream(opts.seed, 0x4d564eu);
  std::vector<std::vector<double>> shifts(static_cast<std::size_t>(reps), std::vector<double>(static_cast<std::size_t>(dims)));
  for (auto& s : shifts)
    for (auto& x : s) x = uniform01(rng);

  std::vector<double> sums(static_cast<std::size_t>(reps), 0.0);
  std::vector<double> y(static_cast<std::size_t>(sov.rank));
  auto integrand = [&](const std::vector<double>& shift, std::size_t j) {
    double f = 1.0;
    for (int k = 0; k < sov.rank; ++k) {
      double acc = sov.bound[static_cast<std::size_t>(k)];
      for (int c = 0; c < k; ++c) acc -= sov.l(k, c) * y[static_cast<std::size_t>(c)];
      const double e = normal_cdf(acc / sov.l(k, k));
      f *= e;
      if (f <= 0.0) return 0.0;
      if (k < dims) {
        double x = static_cast<double>(j) * gen[static_cast<std::size_t>(k)] + shift[static_cast<std::size_t>(k)];
        x -= std::floor(x);
        const double w = std::abs(2.0 * x - 1.0);
        const double arg = std::clamp(w * e, 1e-300, 1.0 - 1e-16);
        y[static_cast<std::size_t>(k)] = normal_quantile(arg);
      }
    }
    for (int i = sov.rank; i < sov.n; ++i) {
      double acc = 0.0;
      for (int c = 0; c < sov.rank; ++c) acc += sov.l(i, c) * y[static_cast<std::size_t>(c)];
      if (acc > sov.bound[static_cast<std::size_t>(i)]) return 0.0;
    }
    return weighted ? f * std::abs(y[0]) : f;
  };

  std::size_t done = 0;
  std::size_t target = std::max<std::size_t>(opts.min_points, 8);
  double mean = 0.0;
  double err = 0.0;
  for (;;) {
    for (int s = 0; s < reps; ++s)
      for (std::size_t j = done + 1; j <= target; ++j)
        sums[static_cast<std::size_t>(s)] += integrand(shifts[static_cast<std::size_t>(s)], j);
    done = target;
    mean = 0.0;
    for (double v : sums) mean += v / static_cast<double>(done);
    mean /= reps;
    double var = 0.0;
    for (double v : sums) var += std::pow(v / static_cast<double>(done) - mean, 2);
    var /= static_cast<double>(reps) * (reps - 1);
    err = 3.0 * std::sqrt(var);
    if (err <= std::max(opts.rel_tol * mean, opts.abs_tol) || done >= opts.max_points) break;
    target = std::min(opts.max_points, 2 * done);
  }
  return {std::max(mean, 0.0), err, "mvn-genz-qmc"};
}

} // namespace detail

/// P(xi <= upper) for xi ~ N(0, cov).
///
/// Coordinates with upper = +inf are marginalized out; any upper = -inf gives
/// 0. Coordinates whose variance is below kDegenerateVariance are the
/// deterministic value 0. One- and two-dimensional problems are evaluated
/// exactly; otherwise Genz's separation of variables with variable
/// reordering is integrated on a randomized Richtmyer lattice with
/// `randomizations` independent shifts, doubling the point count until
/// 3 standard errors <= max(rel_tol * value, abs_tol) or max_points is hit.
inline EstimateWithError mvn_cdf(const Eigen::VectorXd& upper, const CovarianceMatrix& cov,
                                 const MvnOptions& opts = {}) {
  const Eigen::Index m = cov.dim();
  if (upper.size() != m) throw std::invalid_argument("mvn_cdf: dimension mismatch between bounds and covariance");
  if (static_cast<std::size_t>(m) > kMvnMaxDimension)
    throw std::invalid_argument("mvn_cdf: dimension exceeds the cap of 2000");
  std::vector<Eigen::Index> active;
  active.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double b = upper(i);
    if (std::isnan(b)) throw std::invalid_argument("mvn_cdf: NaN bound");
    if (b == -kInf) return {0.0, 0.0, "mvn-exact"};
    if (b == kInf) continue;
    if (cov(i, i) < kDegenerateVariance) {
      if (b < 0.0) return {0.0, 0.0, "mvn-exact"};
      continue;
    }
    active.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(active.size());
  if (n == 0) return {1.0, 0.0, "mvn-exact"};
  Eigen::MatrixXd a(n, n);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    b(i) = upper(active[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = cov(active[static_cast<std::size_t>(i)], active[static_cast<std::size_t>(j)]);
  }
  if (n == 1) return {normal_cdf(b(0) / std::sqrt(a(0, 0))), 0.0, "mvn-exact"};
  if (n == 2) {
    const double s0 = std::sqrt(a(0, 0));
    const double s1 = std::sqrt(a(1, 1));
    const double r = a(0, 1) / (s0 * s1);
    if (std::abs(r) > 1.0 + 1e-8) throw NumericalError("mvn_cdf: covariance is not PSD");
    if (std::abs(r) < 1.0 - 1e-12) return {bvn_cdf(b(0) / s0, b(1) / s1, r), 1e-15, "mvn-exact"};
  }

  const detail::SovProblem sov = detail::reorder_factor(a, b, opts.rank_tol);
  if (sov.rank == 0) return {1.0, 0.0, "mvn-exact"};
  if (sov.rank == 1) return {detail::rank_one_probability(sov, false), 1e-15, "mvn-exact"};
  auto est = detail::sov_qmc(sov, opts, false);
  est.value = std::min(est.value, 1.0);
  return est;
}

/// E[|Z| 1(xi <= upper - slope Z)] for Z ~ N(0,1) independent of
/// xi ~ N(0, cov): the y-integral of a Gaussian conditional expectation
/// folded into a single separation-of-variables integral with Z pivoted
/// first. Bound conventions follow mvn_cdf (a +inf bound drops the
/// coordinate; a variance below kDegenerateVariance makes xi_i = 0, so the
/// coordinate becomes the constraint slope_i Z <= upper_i).
inline EstimateWithError abs_weighted_mvn_cdf(const Eigen::VectorXd& upper, const Eigen::VectorXd& slope,
                                              const CovarianceMatrix& cov, const MvnOptions& opts = {}) {
  const Eigen::Index m = cov.dim();
  if (upper.size() != m || slope.size() != m)
    throw std::invalid_argument("abs_weighted_mvn_cdf: dimension mismatch between bounds, slopes and covariance");
  if (static_cast<std::size_t>(m) + 1 > kMvnMaxDimension)
    throw std::invalid_argument("abs_weighted_mvn_cdf: dimension exceeds the cap of 2000");
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::isnan(upper(i)) || !std::isfinite(slope(i))) throw std::invalid_argument("abs_weighted_mvn_cdf: NaN input");
    if (upper(i) == -kInf) return {0.0, 0.0, "mvn-exact"};
    if (upper(i) == kInf) continue;
    active.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(active.size());
  const double folded = 2.0 * normal_pdf(0.0);
  if (n == 0) return {folded, 0.0, "mvn-exact"};
  // joint law of (Z, xi + slope Z)
  Eigen::MatrixXd a(n + 1, n + 1);
  Eigen::VectorXd b(n + 1);
  a(0, 0) = 1.0;
  b(0) = kInf;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index ii = active[static_cast<std::size_t>(i)];
    b(i + 1) = upper(ii);
    a(0, i + 1) = a(i + 1, 0) = slope(ii);
    const bool di = cov(ii, ii) < kDegenerateVariance;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index jj = active[static_cast<std::size_t>(j)];
      const bool dj = cov(jj, jj) < kDegenerateVariance;
      a(i + 1, j + 1) = (di || dj ? 0.0 : cov(ii, jj)) + slope(ii) * slope(jj);
    }
  }
  const detail::SovProblem sov = detail::reorder_factor(a, b, opts.rank_tol, 1);
  if (sov.rank == 1) return {detail::rank_one_probability(sov, true), 1e-15, "mvn-exact"};
  auto est = detail::sov_qmc(sov, opts, true);
  est.value = std::min(est.value, folded);
  est.method = "mvn-genz-qmc-weighted";
  return est;
}

/// Reusable exact sampler for N(mean, cov).
class GaussianSampler {
public:
  GaussianSampler(const CovarianceMatrix& cov, Eigen::VectorXd mean) : factor_(factorize(cov)), mean_(std::move(mean)) {
    if (mean_.size() != cov.dim()) throw std::invalid_argument("GaussianSampler: mean has wrong dimension");
  }
  explicit GaussianSampler(const CovarianceMatrix& cov) : GaussianSampler(cov, Eigen::VectorXd::Zero(cov.dim())) {}

  Eigen::Index dim() const { return mean_.size(); }
  const CovarianceFactor& factor() const { return factor_; }

  /// `count` draws as the columns of a dim x count matrix.
  Eigen::MatrixXd draw(std::mt19937_64& rng, Eigen::Index count) const {
    std::normal_distribution<double> normal;
    Eigen::MatrixXd z(factor_.rank(), count);
    for (Eigen::Index c = 0; c < count; ++c)
      for (Eigen::Index r = 0; r < factor_.rank(); ++r) z(r, c) = normal(rng);
    Eigen::MatrixXd x = factor_.lower * z;
    x.colwise() += mean_;
    return x;
  }

private:
  CovarianceFactor factor_;
  Eigen::VectorXd mean_;
};

inline constexpr Eigen::Index kSampleBatch = 1024;

/// i.i.d. draws from N(mean, cov), columns of a dim x count matrix. Draws are
/// generated in fixed batches with streams (seed, batch), so the output is
/// identical for any worker count.
inline Eigen::MatrixXd chol_sample(const CovarianceMatrix& cov, const Eigen::VectorXd& mean, Eigen::Index count,
                                   std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("chol_sample: count must be nonnegative");
  const GaussianSampler sampler(cov, mean);
  const auto batches = static_cast<std::size_t>((count + kSampleBatch - 1) / kSampleBatch);
  auto parts = parallel::map(batches, [&](std::size_t bidx) {
    auto rng = make_stream(seed, bidx);
    const Eigen::Index start = static_cast<Eigen::Index>(bidx) * kSampleBatch;
    return sampler.draw(rng, std::min(kSampleBatch, count - start));
  });
  Eigen::MatrixXd out(cov.dim(), count);
  for (std::size_t bidx = 0; bidx < batches; ++bidx)
    out.middleCols(static_cast<Eigen::Index>(bidx) * kSampleBatch, parts[bidx].cols()) = parts[bidx];
  return out;
}

/// E f(Y) for Y ~ N(0, variance) by half-range Gauss-Hermite rules on each
/// side of zero (2 * order evaluations). Exact for polynomials of degree
/// < 2 * order, and for |y| times such polynomials.
template <class F>
double gauss_hermite_expectation(F&& f, double variance, int order) {
  if (!(variance > 0.0)) throw std::invalid_argument("gauss_hermite_expectation: variance must be positive");
  if (order < 2) throw std::invalid_argument("gauss_hermite_expectation: order must be >= 2");
  const quad::Rule& rule = quad::half_range_hermite(order);
  const double sd = std::sqrt(variance);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) sum += rule.weights[i] * (f(sd * rule.nodes[i]) + f(-sd * rule.nodes[i]));
  return sum;
}

namespace detail {

// E|q(Z)| for a quadratic q(z) = A z^2 + B z + C and Z standard normal.
inline double abs_quadratic_moment(double qa, double qb, double qc) {
  // integral of q * phi over [lo, hi]
  auto piece = [&](double lo, double hi) {
    auto zphi = [](double z) { return std::isfinite(z) ? z * normal_pdf(z) : 0.0; };
    auto pdf = [](double z) { return std::isfinite(z) ? normal_pdf(z) : 0.0; };
    const double dcdf = normal_cdf(hi) - normal_cdf(lo);
    return qa * (dcdf - (zphi(hi) - zphi(lo))) + qb * (pdf(lo) - pdf(hi)) + qc * dcdf;
  };
  std::vector<double> roots;
  if (std::abs(qa) > 1e-300) {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc > 0.0) {
      const double s = std::sqrt(disc);
      const double q = -0.5 * (qb + std::copysign(s, qb));
      roots.push_back(q / qa);
      if (q != 0.0) roots.push_back(qc / q);
    }
  } else if (std::abs(qb) > 1e-300) {
    roots.push_back(-qc / qb);
  }
  std::sort(roots.begin(), roots.end());
  std::vector<double> cuts{-kInf};
  cuts.insert(cuts.end(), roots.begin(), roots.end());
  cuts.push_back(kInf);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += std::abs(piece(cuts[i], cuts[i + 1]));
  return total;
}

} // namespace detail

/// E|W1 W2| for (W1, W2) ~ N(mean, cov) with a fixed quadrature order.
///
/// The larger-variance coordinate is whitened to W1 = m1 + s1 Z; given Z the
/// other factor is a folded normal with closed-form mean g(Z). The remaining
/// one-dimensional integral of |m1 + s1 z| g(z) is split at the sign change of
/// m1 + s1 z: a Gauss-Hermite rule covers the smooth part and a half-range
/// rule the tail beyond the kink.
inline double abs_product_moment_value(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, int order) {
  if (cov(0, 0) < -1e-12 || cov(1, 1) < -1e-12 || cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0) < -1e-10 * (1.0 + cov.cwiseAbs().maxCoeff() * cov.cwiseAbs().maxCoeff()))
    throw NumericalError("abs_product_moment: covariance is not PSD");
  int i1 = cov(0, 0) >= cov(1, 1) ? 0 : 1;
  int i2 = 1 - i1;
  const double v1 = std::max(cov(i1, i1), 0.0);
  const double v2 = std::max(cov(i2, i2), 0.0);
  const double m1 = mean(i1);
  const double m2 = mean(i2);
  if (v1 <= 0.0) return std::abs(m1 * m2);
  const double s1 = std::sqrt(v1);
  const double slope = cov(0, 1) / s1; // W2 | Z has mean m2 + slope * Z
  const double cond_var = v2 - slope * slope;
  if (cond_var <= 1e-14 * std::max(v2, 1e-300)) {
    // W1 W2 = (m1 + s1 z)(m2 + slope z)
    return detail::abs_quadratic_moment(s1 * slope, m1 * slope + s1 * m2, m1 * m2);
  }
  const double cond_sd = std::sqrt(cond_var);
  auto h = [&](double z) { return (m1 + s1 * z) * folded_normal_mean(m2 + slope * z, cond_sd); };
  const quad::Rule& full = quad::gauss_hermite(order);
  double eh = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) eh += full.weights[i] * h(full.nodes[i]);
  const double kink = -m1 / s1;
  const quad::Rule& half = quad::half_range_hermite(order);
  const double scale = std::sqrt(kTwoPi) * normal_pdf(kink);
  double tail = 0.0;
  if (kink <= 0.0) {
    // (-inf, kink], where h <= 0
    for (std::size_t i = 0; i < half.size(); ++i) {
      const double t = half.nodes[i];
      tail += half.weights[i] * h(kink - t) * std::exp(kink * t);
    }
    return eh - 2.0 * scale * tail;
  }
  // [kink, inf), where h >= 0
  for (std::size_t i = 0; i < half.size(); ++i) {
    const double t = half.nodes[i];
    tail += half.weights[i] * h(kink + t) * std::exp(-kink * t);
  }
  return -eh + 2.0 * scale * tail;
}

/// E|W1 W2| with an order-doubling error estimate (order >= 40).
inline EstimateWithError abs_product_moment(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, int order = 40) {
  if (order < 40) throw std::invalid_argument("abs_product_moment: order must be >= 40");
  if (!mean.allFinite() || !cov.allFinite()) throw std::invalid_argument("abs_product_moment: non-finite input");
  if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("abs_product_moment: covariance must be symmetric");
  const double coarse = abs_product_moment_value(mean, cov, order);
  const double fine = abs_product_moment_value(mean, cov, 2 * order);
  return {fine, std::abs(fine - coarse) + 1e-15 * std::abs(fine), "gauss-hermite-conditional"};
}

} // namespace excursion
