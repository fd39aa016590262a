// Copyright 2026 The aoisched Authors
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

// AoI penalty curves p(delta): tabulated, Gaussian AR linear-MMSE, and
// reaction-delay Markov systems.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "aoisched/csv.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/losses.hpp"

namespace aoisched {

/// p(1), ..., p(delta_bound), saturated beyond delta_bound.
class PenaltyCurve {
 public:
  PenaltyCurve() = default;

  explicit PenaltyCurve(std::vector<double> values, std::vector<std::string> warnings = {})
      : values_(std::move(values)), warnings_(std::move(warnings)) {
    if (values_.empty()) throw InvalidArgument("penalty curve needs at least one value");
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidArgument("penalty curve values must be finite");
      bound_ = std::max(bound_, std::abs(v));
    }
  }

  /// p(delta) for delta >= 1.
  double at(std::int64_t delta) const {
    if (delta < 1) throw InvalidArgument("penalty evaluated at delta " + std::to_string(delta) + " < 1");
    auto i = std::min<std::int64_t>(delta, delta_bound()) - 1;
    return values_[static_cast<std::size_t>(i)];
  }

  std::int64_t delta_bound() const { return static_cast<std::int64_t>(values_.size()); }
  double saturation() const { return values_.back(); }
  /// M with |p(delta)| <= M for all delta.
  double bound() const { return bound_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool non_decreasing(double tol = 0.0) const {
    for (std::size_t i = 1; i < values_.size(); ++i)
      if (values_[i] < values_[i - 1] - tol) return false;
    return true;
  }

  friend bool operator==(const PenaltyCurve& a, const PenaltyCurve& b) { return a.values_ == b.values_; }

 private:
  std::vector<double> values_;
  std::vector<std::string> warnings_;
  double bound_ = 0.0;
};

inline std::string penalty_to_csv(const PenaltyCurve& c) {
  std::ostringstream out;
  out << "delta,p\n";
  for (std::int64_t d = 1; d <= c.delta_bound(); ++d) out << d << "," << csv::format_double(c.at(d)) << "\n";
  return out.str();
}

inline void penalty_to_csv_file(const PenaltyCurve& c, const std::filesystem::path& path) {
  csv::write_atomic(path, penalty_to_csv(c));
}

inline PenaltyCurve penalty_from_csv(const std::filesystem::path& path) {
  auto rows = csv::read_rows(path, {"delta", "p"});
  if (rows.empty()) throw ParseError(path.string() + ": no rows");
  std::vector<double> values;
  for (const auto& r : rows) {
    auto d = csv::parse_int(r[0], "delta");
    if (d != static_cast<long long>(values.size()) + 1)
      throw ParseError(path.string() + ": delta must run 1, 2, ... without gaps (got " + r[0] + ")");
    double v = csv::parse_double(r[1], "p");
    if (!std::isfinite(v)) throw ParseError(path.string() + ": non-finite p at delta " + r[0]);
    values.push_back(v);
  }
  return PenaltyCurve(std::move(values));
}

/// Index of the last point before a run of `run` consecutive steps with
/// |p(d) - p(d-1)| < tol; values.size() if there is no such run.
inline std::size_t flat_tail_start(const std::vector<double>& values, double tol = 1e-9, std::size_t run = 10) {
  std::size_t count = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    count = std::abs(values[i] - values[i - 1]) < tol ? count + 1 : 0;
    if (count == run) return i - run + 1;
  }
  return values.size();
}

/// Truncates an analytic curve p(1..delta_max) at its detected delta_bound.
inline PenaltyCurve truncate_curve(std::vector<double> values, std::vector<std::string> warnings = {}) {
  values.resize(flat_tail_start(values));
  return PenaltyCurve(std::move(values), std::move(warnings));
}

// ---------------------------------------------------------------------------
// Gaussian AR(p): V_t = sum_i a_i V_{t-i} + W_t, observed target Y_t = V_t + N_t,
// feature X_{t-delta} = (V_{t-delta}, ..., V_{t-delta-u+1}).

struct ArModel {
  std::vector<double> coeffs;
  double sigma_w2 = 1.0;
  double sigma_n2 = 0.0;
  int u = 1;

  ArModel() = default;
  ArModel(std::vector<double> a, double sw2, double sn2, int u_) : coeffs(std::move(a)), sigma_w2(sw2), sigma_n2(sn2), u(u_) {
    validate();
  }

  double spectral_radius() const {
    const auto p = static_cast<Eigen::Index>(coeffs.size());
    if (p == 0) return 0.0;
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) c(0, i) = coeffs[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < p; ++i) c(i, i - 1) = 1.0;
    return c.eigenvalues().cwiseAbs().maxCoeff();
  }

  void validate() const {
    if (!(sigma_w2 > 0.0)) throw InvalidArgument("AR model needs sigma_w2 > 0");
    if (!(sigma_n2 >= 0.0)) throw InvalidArgument("AR model needs sigma_n2 >= 0");
    if (u < 1) throw InvalidArgument("AR model needs feature length u >= 1");
    for (double a : coeffs)
      if (!std::isfinite(a)) throw InvalidArgument("AR coefficients must be finite");
    if (!(spectral_radius() < 1.0 - 1e-12)) throw InvalidArgument("AR model is not stationary");
  }
};

/// Stationary autocovariance r(0..max_lag) of V.
inline std::vector<double> ar_autocovariance(const ArModel& m, std::size_t max_lag) {
  m.validate();
  const std::size_t p = m.coeffs.size();
  // r(k) - sum_i a_i r(|k-i|) = sigma_w2 [k == 0], for k = 0..p.
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p + 1), static_cast<Eigen::Index>(p + 1));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
  rhs(0) = m.sigma_w2;
  for (std::size_t k = 0; k <= p; ++k)
    for (std::size_t i = 1; i <= p; ++i) {
      auto lag = static_cast<Eigen::Index>(k > i ? k - i : i - k);
      a(static_cast<Eigen::Index>(k), lag) -= m.coeffs[i - 1];
    }
  Eigen::VectorXd sol = a.fullPivLu().solve(rhs);
  std::vector<double> r(std::max(max_lag, p) + 1);
  for (std::size_t k = 0; k <= p; ++k) r[k] = sol(static_cast<Eigen::Index>(k));
  for (std::size_t k = p + 1; k < r.size(); ++k) {
    double s = 0.0;
    for (std::size_t i = 1; i <= p; ++i) s += m.coeffs[i - 1] * r[k - i];
    r[k] = s;
  }
  r.resize(max_lag + 1);
  return r;
}

/// Linear MMSE of Y_t from the feature at lag `lag` (lag 0 allowed).
/// Appends to `warnings` when the feature covariance needed a ridge.
inline double ar_mmse_value(const ArModel& m, const std::vector<double>& r, std::size_t lag,
                            std::vector<std::string>* warnings = nullptr) {
  const auto u = static_cast<Eigen::Index>(m.u);
  Eigen::MatrixXd sigma(u, u);
  Eigen::VectorXd c(u);
  for (Eigen::Index i = 0; i < u; ++i) {
    c(i) = r[lag + static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < u; ++j) sigma(i, j) = r[static_cast<std::size_t>(std::abs(i - j))];
  }
  const double trace = sigma.trace();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  bool ridge = llt.info() != Eigen::Success;
  if (!ridge) {
    const double min_pivot = llt.matrixLLT().diagonal().cwiseAbs2().minCoeff();
    ridge = min_pivot < 1e-12 * trace;
  }
  if (ridge) {
    sigma.diagonal().array() += 1e-12 * trace;
    llt.compute(sigma);
    if (llt.info() != Eigen::Success)
      throw NumericalFailure("feature covariance not positive definite after regularization");
    if (warnings) warnings->push_back("ridge added to feature covariance at lag " + std::to_string(lag));
  }
  const double explained = c.dot(llt.solve(c));
  return r[0] + m.sigma_n2 - explained;
}

/// p(delta) for delta = 1..delta_max, truncated at the detected delta_bound.
inline PenaltyCurve ar_mmse_curve(const ArModel& m, std::size_t delta_max) {
  if (delta_max < 1) throw InvalidArgument("delta_max must be >= 1");
  m.validate();
  auto r = ar_autocovariance(m, delta_max + static_cast<std::size_t>(m.u));
  std::vector<double> values;
  std::vector<std::string> warnings;
  for (std::size_t d = 1; d <= delta_max; ++d) values.push_back(ar_mmse_value(m, r, d, &warnings));
  return truncate_curve(std::move(values), std::move(warnings));
}

// ---------------------------------------------------------------------------
// Reaction-delay system: X is a finite Markov chain, Y_t = f(X_{t-d}).

struct ReactionSystem {
  std::vector<std::vector<double>> chain;
  std::vector<std::size_t> f;
  std::size_t y_size = 0;
  std::size_t d = 0;
  LossSpec loss;
  std::optional<std::vector<double>> y_labels;

  void validate() const {
    const std::size_t n = chain.size();
    if (n == 0) throw InvalidArgument("reaction system needs a non-empty chain");
    for (const auto& row : chain) {
      if (row.size() != n) throw InvalidArgument("transition matrix must be square");
      detail::check_probabilities(row, "transition row");
    }
    if (f.size() != n) throw InvalidArgument("f must map every chain state");
    for (auto y : f)
      if (y >= y_size) throw InvalidArgument("f maps outside the Y alphabet");
    if (y_labels && y_labels->size() != y_size) throw InvalidArgument("y_labels must cover the Y alphabet");
  }
};

namespace detail {

using Matrix = Eigen::MatrixXd;

inline Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline bool irreducible(const Matrix& p) {
  const auto n = p.rows();
  for (Eigen::Index s = 0; s < n; ++s) {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> stack{s};
    seen[static_cast<std::size_t>(s)] = true;
    while (!stack.empty()) {
      auto i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < n; ++j)
        if (p(i, j) > 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = true;
          stack.push_back(j);
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) return false;
  }
  return true;
}

}  // namespace detail

/// Stationary distribution by power iteration (L1 change below 1e-13).
inline std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& chain) {
  auto p = detail::to_matrix(chain);
  if (!detail::irreducible(p)) throw InvalidArgument("reaction chain is reducible");
  const auto n = p.rows();
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < 1'000'000; ++it) {
    Eigen::RowVectorXd next = pi * p;
    next /= next.sum();
    const double change = (next - pi).cwiseAbs().sum();
    pi = next;
    if (change < 1e-13) return {pi.data(), pi.data() + n};
  }
  throw NumericalFailure("stationary distribution did not converge (periodic chain?)");
}

/// Joint pmf of (Y_t, X_{t-delta}) under the stationary law, axes (Y, X).
inline JointPmf reaction_joint(const ReactionSystem& sys, const std::vector<double>& pi, std::size_t delta) {
  const auto p = detail::to_matrix(sys.chain);
  const std::size_t n = sys.chain.size();
  const std::size_t gap = delta > sys.d ? delta - sys.d : sys.d - delta;
  detail::Matrix pk = detail::Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < gap; ++k) pk = pk * p;
  std::vector<double> probs(sys.y_size * n, 0.0);
  for (std::size_t x = 0; x < n; ++x)        // X_{t-delta}
    for (std::size_t z = 0; z < n; ++z) {    // X_{t-d}
      // Whichever of the two is earlier in time is drawn from pi.
      double v = delta >= sys.d ? pi[x] * pk(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z))
                                : pi[z] * pk(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(x));
      probs[sys.f[z] * n + x] += v;
    }
  double s = 0.0;
  for (double v : probs) s += v;
  for (double& v : probs) v /= s;
  return JointPmf({sys.y_size, n}, std::move(probs), {sys.y_labels, std::nullopt});
}

/// H_L(Y_t | X_{t-delta}) for a single delta (delta = 0 allowed).
inline double reaction_value(const ReactionSystem& sys, const std::vector<double>& pi, std::size_t delta) {
  return l_cond_entropy(reaction_joint(sys, pi, delta), 0, {1}, sys.loss);
}

inline PenaltyCurve reaction_curve(const ReactionSystem& sys, std::size_t delta_max) {
  if (delta_max < 1) throw InvalidArgument("delta_max must be >= 1");
  sys.validate();
  auto pi = stationary_distribution(sys.chain);
  std::vector<double> values;
  for (std::size_t d = 1; d <= delta_max; ++d) values.push_back(reaction_value(sys, pi, d));
  // The curve is not flat before the reaction delay even if consecutive values
  // happen to agree, so never truncate below d + 1.
  auto keep = std::max<std::size_t>(flat_tail_start(values), std::min(delta_max, sys.d + 1));
  values.resize(keep);
  return PenaltyCurve(std::move(values));
}

}  // namespace aoisched
