// Copyright 2026 The DAA Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Post-hoc analysis: the d(alpha - beta log d) scaling law with quadratic
// baselines, length regression, rank correlations and soft-Q diagnostics.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "daalab/diffcore.hpp"
#include "daalab/errors.hpp"
#include "daalab/objectives.hpp"
#include "daalab/policy.hpp"

namespace daalab {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

namespace detail {

// Least squares through the normal equations. Columns are scaled to unit
// norm before the rank test so the threshold is independent of units.
inline Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                              const char* what) {
  const Eigen::VectorXd norms = design.colwise().norm();
  for (Eigen::Index j = 0; j < norms.size(); ++j) {
    if (!(norms(j) > 0.0) || !std::isfinite(norms(j))) {
      throw DegenerateError(std::string(what) + ": rank-deficient design (zero basis column)");
    }
  }
  const Eigen::MatrixXd scaled = design * norms.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd gram = scaled.transpose() * scaled;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  lu.setThreshold(1e-10);
  if (lu.rank() < gram.cols()) throw DegenerateError(std::string(what) + ": rank-deficient design matrix");
  const Eigen::VectorXd coef = lu.solve(scaled.transpose() * y);
  return coef.cwiseQuotient(norms);
}

inline double rms(const Eigen::VectorXd& r) { return std::sqrt(r.squaredNorm() / static_cast<double>(r.size())); }

}  // namespace detail

struct ScalingFit {
  double alpha = 0.0;
  double beta_coeff = 0.0;
  double intercept = 0.0;  // 0 unless fitted with an intercept
  double rmse = 0.0;
  int n_points = 0;
  bool with_intercept = false;
  std::string x_kind = "sqrt_kl";  // or "sqrt_fwd_kl"

  double predict(double d) const {
    const double dlogd = d > 0.0 ? d * std::log(d) : 0.0;
    return intercept + alpha * d - beta_coeff * dlogd;
  }

  double recompute_rmse(std::span<const Point> points) const {
    double ss = 0.0;
    for (const auto& p : points) ss += (p.y - predict(p.x)) * (p.y - predict(p.x));
    return std::sqrt(ss / static_cast<double>(points.size()));
  }
};

// Least squares for R(d) = d (alpha - beta log d) [+ intercept] with d > 0.
inline ScalingFit fit_scaling_law(std::span<const Point> points, bool with_intercept,
                                  std::string x_kind = "sqrt_kl") {
  if (points.size() < 3) throw InvalidArgument("fit_scaling_law: need at least 3 points");
  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index k = with_intercept ? 3 : 2;
  Eigen::MatrixXd design(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = points[i].x;
    if (!(d > 0.0) || !std::isfinite(d)) throw InvalidArgument("fit_scaling_law: d must be positive and finite");
    design(i, 0) = d;
    design(i, 1) = -d * std::log(d);
    if (with_intercept) design(i, 2) = 1.0;
    y(i) = points[i].y;
  }
  const Eigen::VectorXd coef = detail::solve_normal_equations(design, y, "fit_scaling_law");
  ScalingFit fit;
  fit.alpha = coef(0);
  fit.beta_coeff = coef(1);
  fit.intercept = with_intercept ? coef(2) : 0.0;
  fit.with_intercept = with_intercept;
  fit.n_points = static_cast<int>(n);
  fit.x_kind = std::move(x_kind);
  fit.rmse = detail::rms(y - design * coef);
  return fit;
}

struct QuadraticFit {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double rmse = 0.0;
  double r_squared = 0.0;
  int n_points = 0;

  double predict(double x) const { return c0 + c1 * x + c2 * x * x; }
};

// Least squares on {1, x, x^2}.
inline QuadraticFit fit_quadratic(std::span<const Point> points) {
  if (points.size() < 4) throw InvalidArgument("fit_quadratic: need at least 4 points");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = points[i].x;
    design(i, 0) = 1.0;
    design(i, 1) = x;
    design(i, 2) = x * x;
    y(i) = points[i].y;
  }
  const Eigen::VectorXd coef = detail::solve_normal_equations(design, y, "fit_quadratic");
  QuadraticFit fit{coef(0), coef(1), coef(2), 0.0, 0.0, static_cast<int>(n)};
  const Eigen::VectorXd resid = y - design * coef;
  fit.rmse = detail::rms(resid);
  const double ss_tot = (y.array() - y.mean()).square().sum();
  fit.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - resid.squaredNorm() / ss_tot, 0.0, 1.0) : 1.0;
  return fit;
}

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;  // 1 when y has no variance (the fit is exact)
  int n = 0;
};

struct LengthRecord {
  double log_ratio = 0.0;
  int length = 0;
};

// Ordinary least squares of log-ratio on response length.
inline RegressionFit length_regression(std::span<const LengthRecord> records) {
  if (records.size() < 3) throw InvalidArgument("length_regression: need at least 3 records");
  const double n = static_cast<double>(records.size());
  double mx = 0.0, my = 0.0;
  for (const auto& r : records) {
    mx += r.length;
    my += r.log_ratio;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& r : records) {
    sxx += (r.length - mx) * (r.length - mx);
    sxy += (r.length - mx) * (r.log_ratio - my);
    syy += (r.log_ratio - my) * (r.log_ratio - my);
  }
  if (sxx == 0.0) {
    throw DegenerateError("length_regression: all lengths are equal (enable the stop action for length variance)");
  }
  RegressionFit fit;
  fit.n = static_cast<int>(records.size());
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (const auto& r : records) {
    const double e = r.log_ratio - (fit.intercept + fit.slope * r.length);
    ss_res += e * e;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return fit;
}

// Average ranks (1-based) with ties sharing the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 3) throw InvalidArgument("correlate: need equal lengths >= 3");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("correlate: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};

inline Correlation correlate(std::span<const double> xs, std::span<const double> ys) {
  const double p = pearson(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return {p, pearson(rx, ry)};
}

// v - max(q) for v = beta * logsumexp(q / beta), accumulated without
// cancellation: beta * log1p(sum over non-maximal entries of e^{(q_i - max) / beta}).
inline double soft_value_excess(std::span<const double> q, double beta) {
  if (q.empty()) throw InvalidArgument("soft_value: empty q");
  if (!(beta > 0.0)) throw InvalidArgument("soft_value: beta must be > 0");
  const auto top = std::max_element(q.begin(), q.end());
  double rest = 0.0;
  for (auto it = q.begin(); it != q.end(); ++it) {
    if (it != top) rest += std::exp((*it - *top) / beta);
  }
  return beta * std::log1p(rest);
}

inline double soft_value(std::span<const double> q, double beta) {
  return *std::max_element(q.begin(), q.end()) + soft_value_excess(q, beta);
}

struct SoftQStep {
  StateId state = 0;
  int action = 0;
  std::vector<double> logits;
  std::vector<double> q_values;  // beta * logits
  double v_value = 0.0;          // beta * logsumexp(logits)
  double implied_reward = 0.0;
};

struct SoftQView {
  double beta = 0.0;
  std::vector<SoftQStep> steps;

  double total_implied_reward() const {
    double s = 0.0;
    for (const auto& st : steps) s += st.implied_reward;
    return s;
  }
};

// Reads the policy's logits as Q / beta along a trajectory and recovers the
// per-step rewards implied by the soft Bellman equation against ref:
//   r_i = q_i[a_i] - beta log ref(a_i | prefix) - v_{i+1}   (v after the last step is 0).
// Summing telescopes to v_1 + beta log(pi(traj) / ref(traj)).
inline SoftQView soft_q_view(const PolicyModel& policy, const PolicyModel& ref, const Trajectory& traj, double beta) {
  if (!(beta > 0.0)) throw InvalidArgument("soft_q_view: beta must be > 0");
  require_same_mdp(policy, ref);
  if (!policy.mdp.valid(traj)) throw InvalidArgument("soft_q_view: invalid trajectory");
  Tape<double> pt(policy.params);
  PolicyGraph<double> pg(pt, policy);
  Tape<double> rt(ref.params);
  PolicyGraph<double> rg(rt, ref);
  SoftQView view;
  view.beta = beta;
  for (std::size_t i = 0; i < traj.actions.size(); ++i) {
    SoftQStep st;
    st.state = traj.states[i];
    st.action = traj.actions[i];
    st.logits = pg.logits(st.state).value();
    st.q_values = st.logits;
    for (auto& q : st.q_values) q *= beta;
    st.v_value = beta * logsumexp(st.logits);
    view.steps.push_back(std::move(st));
  }
  for (std::size_t i = 0; i < view.steps.size(); ++i) {
    auto& st = view.steps[i];
    const double ref_lp = rg.log_probs(st.state).value()[static_cast<std::size_t>(st.action)];
    const double next_v = i + 1 < view.steps.size() ? view.steps[i + 1].v_value : 0.0;
    st.implied_reward = st.q_values[static_cast<std::size_t>(st.action)] - beta * ref_lp - next_v;
  }
  return view;
}

struct OptimismPoint {
  double beta = 0.0;
  double v_value = 0.0;
  double excess = 0.0;  // v - max q
};

// Holds q = beta_0 * logits fixed (beta_0 the first, largest beta) and
// evaluates the soft value beta * logsumexp(q / beta) for every beta.
inline std::vector<OptimismPoint> bootstrapping_optimism(std::span<const double> logits, std::span<const double> betas) {
  if (logits.empty() || betas.empty()) throw InvalidArgument("bootstrapping_optimism: empty input");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0)) throw InvalidArgument("bootstrapping_optimism: betas must be positive");
    if (i > 0 && !(betas[i] < betas[i - 1])) throw InvalidArgument("bootstrapping_optimism: betas must be descending");
  }
  std::vector<double> q(logits.begin(), logits.end());
  for (auto& v : q) v *= betas.front();
  const double max_q = *std::max_element(q.begin(), q.end());
  std::vector<OptimismPoint> out;
  for (double b : betas) {
    const double excess = soft_value_excess(q, b);
    out.push_back({b, max_q + excess, excess});
  }
  return out;
}

}  // namespace daalab
