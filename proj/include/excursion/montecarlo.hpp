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

// Simulation oracle: exact joint Gaussian sampling on discretized segments
// and chords, empirical capacity functionals and crossing counts.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "covariance.hpp"
#include "gauss.hpp"
#include "geometry.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace excursion {

inline constexpr std::size_t kMaxSimulationPoints = 4000;

/// Field values along an ordered set of points on a segment or chord.
struct SampledPath {
  std::vector<double> t;
  std::vector<double> values;
  double step = 0.0;
};

/// Result of a simulation estimate. abs_error is 3 standard errors.
struct McEstimate {
  double value = 0.0;
  double abs_error = 0.0;
  std::string method;
  double standard_error = 0.0;
  std::size_t samples = 0;
  double step = 0.0;       // discretization actually used
  double bias_probe = 0.0; // estimate on this grid minus the estimate on every other point
  std::size_t points = 0;

  EstimateWithError estimate() const { return {value, abs_error, method}; }
};

/// Number of u-level crossings along the path: strict sign changes of
/// value - u, a value equal to u keeping the previous sign.
inline std::size_t count_crossings_on_line(const SampledPath& path, double u) {
  if (path.values.empty()) throw std::invalid_argument("count_crossings_on_line: empty path");
  std::size_t count = 0;
  bool above = path.values.front() > u;
  for (double v : path.values) {
    if (v == u) continue;
    const bool now = v > u;
    if (now != above) ++count;
    above = now;
  }
  return count;
}

namespace detail {

inline Eigen::MatrixXd field_covariance(const CorrelationModel& model, const std::vector<Vec2>& pts) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) c(i, j) = c(j, i) = model.r(pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)]);
  }
  return c;
}

// Points of a segment from `from` to `to` (both included) with spacing <= step.
inline std::vector<Vec2> segment_points(const Vec2& from, const Vec2& to, double step) {
  const double len = (to - from).norm();
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len / step - 1e-9)));
  std::vector<Vec2> out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) out.push_back(from + (to - from) * (static_cast<double>(i) / static_cast<double>(n)));
  return out;
}

// Union of segments [0, l_j v_j] discretized with the shared origin first.
// `coarse` flags the subset used by the bias probe (every other point).
struct StarGrid {
  std::vector<Vec2> points;
  std::vector<bool> coarse;
};

inline StarGrid star_grid(const std::vector<Vec2>& dirs, const std::vector<double>& lengths, double step) {
  StarGrid g;
  g.points.push_back(Vec2::Zero());
  g.coarse.push_back(true);
  for (std::size_t j = 0; j < dirs.size(); ++j) {
    if (lengths[j] <= 0.0) continue;
    const auto seg = segment_points(Vec2::Zero(), lengths[j] * dirs[j], step);
    for (std::size_t i = 1; i < seg.size(); ++i) {
      g.points.push_back(seg[i]);
      g.coarse.push_back(i % 2 == 0);
    }
  }
  return g;
}

inline void check_simulation_args(double step, std::size_t n) {
  if (!(step > 0.0) || step > 0.02) throw std::invalid_argument("simulation: step must lie in (0, 0.02]");
  if (n < 2) throw std::invalid_argument("simulation: sample count must be >= 2");
}

// Fraction of draws whose maximum over the grid reaches u, on the full grid
// and on the coarse subset.
inline std::pair<double, double> exceedance_fractions(const CorrelationModel& model, const StarGrid& g, double u,
                                                      std::size_t n, std::uint64_t seed) {
  if (g.points.size() > kMaxSimulationPoints) throw std::invalid_argument("simulation: point budget of 4000 exceeded");
  const GaussianSampler sampler{CovarianceMatrix(field_covariance(model, g.points))};
  const std::size_t batches = (n + kSampleBatch - 1) / kSampleBatch;
  auto counts = parallel::map(batches, [&](std::size_t b) {
    auto rng = make_stream(seed, b);
    const auto size = static_cast<Eigen::Index>(std::min<std::size_t>(kSampleBatch, n - b * kSampleBatch));
    const Eigen::MatrixXd x = sampler.draw(rng, size);
    std::pair<std::size_t, std::size_t> c{0, 0};
    for (Eigen::Index s = 0; s < size; ++s) {
      bool fine = false;
      bool coarse = false;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (x(i, s) >= u) {
          fine = true;
          if (g.coarse[static_cast<std::size_t>(i)]) {
            coarse = true;
            break;
          }
        }
      }
      c.first += fine;
      c.second += coarse;
    }
    return c;
  });
  std::size_t fine = 0, coarse = 0;
  for (const auto& c : counts) {
    fine += c.first;
    coarse += c.second;
  }
  return {static_cast<double>(fine) / static_cast<double>(n), static_cast<double>(coarse) / static_cast<double>(n)};
}

inline McEstimate empirical_star_capacity(const CorrelationModel& model, double u, const std::vector<Vec2>& dirs,
                                          const std::vector<double>& lengths, double step, std::size_t n,
                                          std::uint64_t seed) {
  check_simulation_args(step, n);
  McEstimate out;
  out.method = "monte-carlo";
  out.samples = n;
  double h = step;
  for (int round = 0;; ++round) {
    const StarGrid g = star_grid(dirs, lengths, h);
    if (g.points.size() > kMaxSimulationPoints) {
      if (round == 0) throw std::invalid_argument("simulation: point budget of 4000 exceeded");
      break; // keep the last admissible grid
    }
    const auto [fine, coarse] = exceedance_fractions(model, g, u, n, seed);
    out.value = fine;
    out.standard_error = std::sqrt(std::max(fine * (1.0 - fine), 1.0 / static_cast<double>(n)) / static_cast<double>(n));
    out.abs_error = 3.0 * out.standard_error;
    out.step = h;
    out.points = g.points.size();
    out.bias_probe = fine - coarse;
    // the discrete maximum is biased low; refine while the grid still matters
    if (out.bias_probe < out.standard_error) break;
    h *= 0.5;
  }
  return out;
}

} // namespace detail

/// Monte Carlo estimate of T(K) for the two-segment bundle: the fraction of
/// exact joint draws on the discretized K whose maximum reaches u. The step
/// is halved while halving it changes the estimate by at least one standard
/// error (measured on the same draws against every other grid point).
inline McEstimate empirical_capacity(const TwoSegmentProblem& p, double step, std::size_t n, std::uint64_t seed) {
  p.validate();
  return detail::empirical_star_capacity(p.model, p.u, {p.v1(), p.v2()}, {p.l1, p.l2}, step, n, seed);
}

/// Monte Carlo estimate of T(K) for a k-segment star.
inline McEstimate empirical_capacity(const KSegmentProblem& p, double step, std::size_t n, std::uint64_t seed) {
  p.validate();
  std::vector<Vec2> dirs;
  for (std::size_t j = 0; j < p.k(); ++j) dirs.push_back(p.direction(j));
  return detail::empirical_star_capacity(p.model, p.u, dirs, p.lengths, step, n, seed);
}

/// Joint simulation of the field along several chords.
class ChordSampler {
public:
  ChordSampler(const CorrelationModel& model, const std::vector<std::pair<Vec2, Vec2>>& chords, double step) {
    std::vector<Vec2> pts;
    for (const auto& [a, b] : chords) {
      const auto seg = detail::segment_points(a, b, step);
      offsets_.push_back(pts.size());
      pts.insert(pts.end(), seg.begin(), seg.end());
      sizes_.push_back(seg.size());
    }
    if (pts.size() > kMaxSimulationPoints) throw std::invalid_argument("simulation: point budget of 4000 exceeded");
    sampler_.emplace(CovarianceMatrix(detail::field_covariance(model, pts)));
    points_ = pts.size();
  }

  std::size_t points() const { return points_; }
  std::size_t chord_count() const { return sizes_.size(); }
  const GaussianSampler& sampler() const { return *sampler_; }

  /// Values of chord c in one draw (column s of a draw matrix).
  SampledPath path(const Eigen::MatrixXd& draws, Eigen::Index s, std::size_t c, std::size_t stride = 1) const {
    SampledPath p;
    for (std::size_t i = 0; i < sizes_[c]; i += stride) {
      p.t.push_back(static_cast<double>(i));
      p.values.push_back(draws(static_cast<Eigen::Index>(offsets_[c] + i), s));
    }
    return p;
  }

private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> sizes_;
  std::optional<GaussianSampler> sampler_;
  std::size_t points_ = 0;
};

/// Mean number of u-crossings per unit length along a segment, with 3 SE.
inline McEstimate empirical_crossing_rate(const CorrelationModel& model, double u, const Vec2& a, const Vec2& b,
                                          double step, std::size_t n, std::uint64_t seed) {
  detail::check_simulation_args(step, n);
  const double len = (b - a).norm();
  if (!(len > 0.0)) throw std::invalid_argument("empirical_crossing_rate: empty segment");
  const ChordSampler cs(model, {{a, b}}, step);
  const std::size_t batches = (n + kSampleBatch - 1) / kSampleBatch;
  auto parts = parallel::map(batches, [&](std::size_t bi) {
    auto rng = make_stream(seed, bi);
    const auto size = static_cast<Eigen::Index>(std::min<std::size_t>(kSampleBatch, n - bi * kSampleBatch));
    const Eigen::MatrixXd x = cs.sampler().draw(rng, size);
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (Eigen::Index s = 0; s < size; ++s) {
      const double c = static_cast<double>(count_crossings_on_line(cs.path(x, s, 0), u));
      acc[0] += c;
      acc[1] += c * c;
      acc[2] += static_cast<double>(count_crossings_on_line(cs.path(x, s, 0, 2), u));
    }
    return acc;
  });
  double sum = 0.0, sum2 = 0.0, coarse = 0.0;
  for (const auto& p : parts) {
    sum += p[0];
    sum2 += p[1];
    coarse += p[2];
  }
  const double dn = static_cast<double>(n);
  McEstimate out;
  out.method = "monte-carlo";
  out.samples = n;
  out.step = len / static_cast<double>(cs.points() - 1);
  out.points = cs.points();
  const double mean = sum / dn;
  const double var = std::max(0.0, (sum2 - dn * mean * mean) / (dn - 1.0));
  out.value = mean / len;
  out.standard_error = std::sqrt(var / dn) / len;
  out.abs_error = 3.0 * out.standard_error;
  out.bias_probe = (sum - coarse) / dn / len;
  return out;
}

/// E[C(g1 cap B1) C(g2 cap B2)] by joint simulation of the two chords.
/// Chords are given by their end points; an empty chord gives 0.
inline McEstimate empirical_crossing_product(const CorrelationModel& model, double u,
                                             const std::optional<std::pair<Vec2, Vec2>>& chord1,
                                             const std::optional<std::pair<Vec2, Vec2>>& chord2, double step,
                                             std::size_t n, std::uint64_t seed) {
  detail::check_simulation_args(step, n);
  McEstimate out;
  out.method = "monte-carlo";
  out.samples = n;
  out.step = step;
  if (!chord1 || !chord2) return out;
  const ChordSampler cs(model, {*chord1, *chord2}, step);
  const std::size_t batches = (n + kSampleBatch - 1) / kSampleBatch;
  auto parts = parallel::map(batches, [&](std::size_t bi) {
    auto rng = make_stream(seed, bi);
    const auto size = static_cast<Eigen::Index>(std::min<std::size_t>(kSampleBatch, n - bi * kSampleBatch));
    const Eigen::MatrixXd x = cs.sampler().draw(rng, size);
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (Eigen::Index s = 0; s < size; ++s) {
      const double prod = static_cast<double>(count_crossings_on_line(cs.path(x, s, 0), u) *
                                              count_crossings_on_line(cs.path(x, s, 1), u));
      acc[0] += prod;
      acc[1] += prod * prod;
      acc[2] += static_cast<double>(count_crossings_on_line(cs.path(x, s, 0, 2), u) *
                                    count_crossings_on_line(cs.path(x, s, 1, 2), u));
    }
    return acc;
  });
  double sum = 0.0, sum2 = 0.0, coarse = 0.0;
  for (const auto& p : parts) {
    sum += p[0];
    sum2 += p[1];
    coarse += p[2];
  }
  const double dn = static_cast<double>(n);
  out.value = sum / dn;
  const double var = std::max(0.0, (sum2 - dn * out.value * out.value) / (dn - 1.0));
  out.standard_error = std::sqrt(var / dn);
  out.abs_error = 3.0 * out.standard_error;
  out.bias_probe = (sum - coarse) / dn;
  out.points = cs.points();
  return out;
}

namespace detail {

/// Auxiliary full-field oracle: stationary fields on a periodic grid of
/// spacing `step` and side kFieldTorus by circulant embedding. Lags up to half
/// the period follow r exactly; clipped negative eigenvalues are recorded.
class GridFieldSampler {
public:
  static constexpr int kFieldTorus = 512;

  GridFieldSampler(const CorrelationModel& model, double step, Vec2 origin)
      : step_(step), origin_(std::move(origin)) {
    if (!(step > 0.0)) throw std::invalid_argument("grid field: step must be positive");
    const int m = kFieldTorus;
    Eigen::MatrixXcd c(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double hx = step * (i <= m / 2 ? i : i - m);
        const double hy = step * (j <= m / 2 ? j : j - m);
        c(i, j) = model.r(Vec2(hx, hy));
      }
    fft2(c, false);
    sqrt_eig_.resize(m, m);
    double clipped = 0.0, total = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double ev = c(i, j).real();
        total += std::abs(ev);
        if (ev < 0.0) clipped += -ev;
        sqrt_eig_(i, j) = std::sqrt(std::max(ev, 0.0) / (static_cast<double>(m) * m));
      }
    clipped_fraction_ = clipped / total;
  }

  double step() const { return step_; }
  const Vec2& origin() const { return origin_; }
  double clipped_fraction() const { return clipped_fraction_; }
  /// Side length of the usable square (half the period).
  double extent() const { return 0.5 * step_ * kFieldTorus; }

  /// Two independent fields; entry (i, j) is X(origin + step (i, j)).
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> draw(std::mt19937_64& rng) const {
    const int m = kFieldTorus;
    std::normal_distribution<double> z;
    Eigen::MatrixXcd w(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double re = z(rng);
        const double im = z(rng);
        w(i, j) = std::complex<double>(re, im) * sqrt_eig_(i, j);
      }
    fft2(w, false);
    return {w.real(), w.imag()};
  }

private:
  static void fft2(Eigen::MatrixXcd& a, bool inverse) {
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> in(static_cast<std::size_t>(a.rows())), out;
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        for (Eigen::Index r = 0; r < a.rows(); ++r) in[static_cast<std::size_t>(r)] = a(r, c);
        if (inverse) fft.inv(out, in); else fft.fwd(out, in);
        for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, c) = out[static_cast<std::size_t>(r)];
      }
      a.transposeInPlace();
    }
  }

  double step_;
  Vec2 origin_;
  Eigen::MatrixXd sqrt_eig_;
  double clipped_fraction_ = 0.0;
};

/// Bilinear interpolation of a grid field at x.
inline double grid_value(const GridFieldSampler& g, const Eigen::MatrixXd& f, const Vec2& x) {
  const Vec2 q = (x - g.origin()) / g.step();
  const double fi = std::floor(q(0)), fj = std::floor(q(1));
  const auto i = static_cast<Eigen::Index>(fi), j = static_cast<Eigen::Index>(fj);
  if (i < 0 || j < 0 || i + 1 >= f.rows() || j + 1 >= f.cols()) throw std::out_of_range("grid field: point outside grid");
  const double a = q(0) - fi, b = q(1) - fj;
  return (1 - a) * (1 - b) * f(i, j) + a * (1 - b) * f(i + 1, j) + (1 - a) * b * f(i, j + 1) + a * b * f(i + 1, j + 1);
}

/// Crossings of level u along the segment [from, to] of the interpolated field,
/// sampled at a quarter of the grid step.
inline std::size_t grid_crossings(const GridFieldSampler& g, const Eigen::MatrixXd& f, const Vec2& from, const Vec2& to,
                                  double u) {
  SampledPath path;
  for (const Vec2& x : segment_points(from, to, 0.25 * g.step())) path.values.push_back(grid_value(g, f, x));
  return count_crossings_on_line(path, u);
}

/// Length of the level-u contour of the grid field inside the index box
/// [i0, i1) x [j0, j1) of cells, by marching squares with linear edges.
inline double contour_length(const GridFieldSampler& g, const Eigen::MatrixXd& f, double u, Eigen::Index i0,
                             Eigen::Index i1, Eigen::Index j0, Eigen::Index j1) {
  double total = 0.0;
  for (Eigen::Index i = i0; i < i1; ++i)
    for (Eigen::Index j = j0; j < j1; ++j) {
      // corners counterclockwise: (0,0) (1,0) (1,1) (0,1)
      const double v[4] = {f(i, j) - u, f(i + 1, j) - u, f(i + 1, j + 1) - u, f(i, j + 1) - u};
      const Vec2 p[4] = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
      std::vector<Vec2> cuts;
      for (int e = 0; e < 4; ++e) {
        const int n = (e + 1) % 4;
        if ((v[e] > 0.0) != (v[n] > 0.0)) {
          const double t = v[e] / (v[e] - v[n]);
          cuts.push_back(p[e] + t * (p[n] - p[e]));
        }
      }
      if (cuts.size() == 2) {
        total += (cuts[0] - cuts[1]).norm();
      } else if (cuts.size() == 4) {
        // saddle: resolve with the cell-centre mean
        const double centre = 0.25 * (v[0] + v[1] + v[2] + v[3]);
        if ((centre > 0.0) == (v[0] > 0.0)) {
          total += (cuts[0] - cuts[3]).norm() + (cuts[1] - cuts[2]).norm();
        } else {
          total += (cuts[0] - cuts[1]).norm() + (cuts[2] - cuts[3]).norm();
        }
      }
    }
  return total * g.step();
}

/// Full-field estimate of mu2(B1 x B2): grid fields at spacing 0.02, Crofton
/// line pairs drawn per field, crossings counted on the interpolated field.
inline McEstimate full_field_second_moment(const CorrelationModel& model, double u, const Window& b1, const Window& b2,
                                           std::size_t fields, std::size_t pairs_per_field, std::uint64_t seed) {
  if (fields < 2 || pairs_per_field < 1) throw std::invalid_argument("full-field oracle: need >= 2 fields");
  constexpr double kStep = 0.02;
  const Vec2 lo = (b1.center() - Vec2::Constant(b1.circumradius())).cwiseMin(b2.center() - Vec2::Constant(b2.circumradius())) -
                  Vec2::Constant(2 * kStep);
  const Vec2 hi = (b1.center() + Vec2::Constant(b1.circumradius())).cwiseMax(b2.center() + Vec2::Constant(b2.circumradius()));
  const GridFieldSampler g(model, kStep, lo);
  if ((hi - lo).maxCoeff() + 2 * kStep > g.extent()) throw std::invalid_argument("full-field oracle: windows too large");
  const double h1 = b1.hitting_measure(), h2 = b2.hitting_measure();
  const std::size_t draws = (fields + 1) / 2;
  auto parts = parallel::map(draws, [&](std::size_t d) {
    auto rng = make_stream(seed, d);
    const auto [fa, fb] = g.draw(rng);
    std::array<double, 2> per{0.0, 0.0};
    for (int which = 0; which < 2; ++which) {
      if (2 * d + static_cast<std::size_t>(which) >= fields) break;
      const Eigen::MatrixXd& f = which == 0 ? fa : fb;
      const std::uint64_t tag = (2 * d + static_cast<std::uint64_t>(which)) << 1;
      const auto l1 = sample_crofton_lines(b1, pairs_per_field, make_stream(seed ^ 0xf1e1du, tag)());
      const auto l2 = sample_crofton_lines(b2, pairs_per_field, make_stream(seed ^ 0xf1e1du, tag | 1u)());
      double acc = 0.0;
      for (std::size_t k = 0; k < pairs_per_field; ++k) {
        const Interval c1 = *b1.chord(l1[k].line);
        const Interval c2 = *b2.chord(l2[k].line);
        const auto n1 = grid_crossings(g, f, l1[k].line.point(c1.lo), l1[k].line.point(c1.hi), u);
        const auto n2 = grid_crossings(g, f, l2[k].line.point(c2.lo), l2[k].line.point(c2.hi), u);
        acc += static_cast<double>(n1 * n2);
      }
      per[static_cast<std::size_t>(which)] = 0.25 * h1 * h2 * acc / static_cast<double>(pairs_per_field);
    }
    return per;
  });
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < fields; ++i) {
    const double x = parts[i / 2][i % 2];
    sum += x;
    sum2 += x * x;
  }
  const double n = static_cast<double>(fields);
  McEstimate out;
  out.method = "full-field-monte-carlo";
  out.samples = fields;
  out.step = kStep;
  out.value = sum / n;
  out.standard_error = std::sqrt(std::max(0.0, (sum2 - n * out.value * out.value) / (n - 1.0)) / n);
  out.abs_error = 3.0 * out.standard_error;
  return out;
}

/// Full-field estimate of the boundary length per unit area over a square of
/// side `side` (contour length by marching squares, spacing 0.02).
inline McEstimate full_field_length_intensity(const CorrelationModel& model, double u, double side, std::size_t fields,
                                              std::uint64_t seed) {
  constexpr double kStep = 0.02;
  if (fields < 2) throw std::invalid_argument("full-field oracle: need >= 2 fields");
  const GridFieldSampler g(model, kStep, Vec2::Zero());
  const auto cells = static_cast<Eigen::Index>(std::llround(side / kStep));
  if (cells < 1 || cells + 1 > GridFieldSampler::kFieldTorus / 2) throw std::invalid_argument("full-field oracle: bad side");
  const double area = std::pow(static_cast<double>(cells) * kStep, 2);
  const std::size_t draws = (fields + 1) / 2;
  auto parts = parallel::map(draws, [&](std::size_t d) {
    auto rng = make_stream(seed, d);
    const auto [fa, fb] = g.draw(rng);
    return std::array<double, 2>{contour_length(g, fa, u, 0, cells, 0, cells) / area,
                                 contour_length(g, fb, u, 0, cells, 0, cells) / area};
  });
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < fields; ++i) {
    const double x = parts[i / 2][i % 2];
    sum += x;
    sum2 += x * x;
  }
  const double n = static_cast<double>(fields);
  McEstimate out;
  out.method = "full-field-monte-carlo";
  out.samples = fields;
  out.step = kStep;
  out.value = sum / n;
  out.standard_error = std::sqrt(std::max(0.0, (sum2 - n * out.value * out.value) / (n - 1.0)) / n);
  out.abs_error = 3.0 * out.standard_error;
  return out;
}

} // namespace detail

} // namespace excursion
