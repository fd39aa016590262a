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

// Loss-indexed information measures over explicit finite distributions.
//
// Every measure here is built from one primitive: the Bayes action a_P of a
// distribution P under a loss L, i.e. the action minimising E_P[L(Y, a)].
// The L-entropy is the expected loss of P's own Bayes action, the L-cross
// entropy is the expected loss under P of Q's Bayes action, and divergences and
// (conditional) mutual informations are differences of those.
//
// Logarithms are base 2 throughout, so log-loss quantities are in bits.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "aoisched/csv.hpp"
#include "aoisched/errors.hpp"

namespace aoisched {

inline constexpr double kProbTolerance = 1e-12;

namespace detail {

inline void check_probabilities(std::span<const double> probs, const char* what) {
  if (probs.empty()) throw InvalidArgument(std::string(what) + ": empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument(std::string(what) + ": negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbTolerance)
    throw InvalidArgument(std::string(what) + ": entries sum to " + csv::format_double(sum) + ", not 1");
}

inline double xlog2x_over(double p, double q) {
  // 0 log(0/q) = 0, including the 0 log(0/0) case.
  if (p <= 0.0) return 0.0;
  return p * std::log2(p / q);
}

}  // namespace detail

/// Probability mass function over symbols 0..n-1, with optional numeric labels.
class Pmf {
 public:
  Pmf() = default;

  explicit Pmf(std::vector<double> probs, std::optional<std::vector<double>> labels = std::nullopt)
      : probs_(std::move(probs)), labels_(std::move(labels)) {
    detail::check_probabilities(probs_, "Pmf");
    if (labels_ && labels_->size() != probs_.size())
      throw InvalidArgument("Pmf: labels and probabilities differ in length");
  }

  static Pmf uniform(std::size_t n) { return Pmf(std::vector<double>(n, 1.0 / static_cast<double>(n))); }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }
  const std::optional<std::vector<double>>& labels() const { return labels_; }
  bool has_labels() const { return labels_.has_value(); }

  friend bool operator==(const Pmf&, const Pmf&) = default;

 private:
  std::vector<double> probs_;
  std::optional<std::vector<double>> labels_;
};

enum class LossKind { quadratic, log, brier, zero_one, alpha };

struct LossSpec {
  LossKind kind = LossKind::log;
  double alpha = 2.0;

  static LossSpec quadratic() { return {LossKind::quadratic, 0.0}; }
  static LossSpec log() { return {LossKind::log, 0.0}; }
  static LossSpec brier() { return {LossKind::brier, 0.0}; }
  static LossSpec zero_one() { return {LossKind::zero_one, 0.0}; }
  static LossSpec alpha_loss(double a) {
    if (!(a > 0.0) || a == 1.0 || !std::isfinite(a))
      throw InvalidArgument("alpha loss requires alpha > 0 and alpha != 1");
    return {LossKind::alpha, a};
  }

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::quadratic: return "quadratic";
    case LossKind::log: return "log";
    case LossKind::brier: return "brier";
    case LossKind::zero_one: return "zero_one";
    case LossKind::alpha: return "alpha";
  }
  return "?";
}

inline LossSpec parse_loss(const std::string& name, double alpha = 2.0) {
  if (name == "quadratic") return LossSpec::quadratic();
  if (name == "log") return LossSpec::log();
  if (name == "brier") return LossSpec::brier();
  if (name == "zero_one") return LossSpec::zero_one();
  if (name == "alpha") return LossSpec::alpha_loss(alpha);
  throw InvalidArgument("unknown loss kind '" + name + "'");
}

struct PointAction {
  double value;
};
struct SymbolAction {
  std::size_t symbol;
};

/// Minimiser of expected loss: a point (quadratic), a symbol (0-1), or a
/// distribution (log, Brier, alpha).
using BayesAction = std::variant<PointAction, SymbolAction, std::vector<double>>;

namespace detail {

inline void check_loss_compatible(const std::optional<std::vector<double>>& labels, const LossSpec& loss) {
  if (loss.kind == LossKind::quadratic && !labels)
    throw IncompatibleLoss("quadratic loss needs numeric labels on the target");
  if (loss.kind == LossKind::alpha && (!(loss.alpha > 0.0) || loss.alpha == 1.0))
    throw IncompatibleLoss("alpha loss requires alpha > 0 and alpha != 1");
}

inline BayesAction bayes_action(std::span<const double> p, const std::optional<std::vector<double>>& labels,
                                const LossSpec& loss) {
  check_loss_compatible(labels, loss);
  switch (loss.kind) {
    case LossKind::quadratic: {
      double mean = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) mean += p[i] * (*labels)[i];
      return PointAction{mean};
    }
    case LossKind::log:
    case LossKind::brier:
      return std::vector<double>(p.begin(), p.end());
    case LossKind::zero_one: {
      // std::max_element returns the first maximum: ties go to the lowest index.
      auto it = std::max_element(p.begin(), p.end());
      return SymbolAction{static_cast<std::size_t>(it - p.begin())};
    }
    case LossKind::alpha: {
      std::vector<double> q(p.size());
      double z = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) z += q[i] = std::pow(p[i], loss.alpha);
      for (double& v : q) v /= z;
      return q;
    }
  }
  throw InvalidArgument("unknown loss kind");
}

/// E_{Y~p}[L(Y, a)].
inline double expected_loss(std::span<const double> p, const std::optional<std::vector<double>>& labels,
                            const BayesAction& action, const LossSpec& loss) {
  check_loss_compatible(labels, loss);
  const double inf = std::numeric_limits<double>::infinity();
  switch (loss.kind) {
    case LossKind::quadratic: {
      double a = std::get<PointAction>(action).value;
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * ((*labels)[i] - a) * ((*labels)[i] - a);
      return s;
    }
    case LossKind::log: {
      const auto& q = std::get<std::vector<double>>(action);
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return inf;
        s -= p[i] * std::log2(q[i]);
      }
      return s;
    }
    case LossKind::brier: {
      const auto& q = std::get<std::vector<double>>(action);
      double qq = 0.0, pq = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        qq += q[i] * q[i];
        pq += p[i] * q[i];
      }
      return qq - 2.0 * pq + 1.0;
    }
    case LossKind::zero_one:
      return 1.0 - p[std::get<SymbolAction>(action).symbol];
    case LossKind::alpha: {
      const auto& q = std::get<std::vector<double>>(action);
      const double a = loss.alpha;
      const double e = (a - 1.0) / a;
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0 && e < 0.0) return inf;
        s += p[i] * (1.0 - std::pow(q[i], e));
      }
      return a / (a - 1.0) * s;
    }
  }
  throw InvalidArgument("unknown loss kind");
}

/// Closed-form L-entropy.
inline double entropy(std::span<const double> p, const std::optional<std::vector<double>>& labels,
                      const LossSpec& loss) {
  check_loss_compatible(labels, loss);
  switch (loss.kind) {
    case LossKind::quadratic: {
      double m = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) m += p[i] * (*labels)[i];
      double v = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) v += p[i] * ((*labels)[i] - m) * ((*labels)[i] - m);
      return v;
    }
    case LossKind::log: {
      double h = 0.0;
      for (double x : p)
        if (x > 0.0) h -= x * std::log2(x);
      return h;
    }
    case LossKind::brier: {
      double s = 0.0;
      for (double x : p) s += x * x;
      return 1.0 - s;
    }
    case LossKind::zero_one:
      return 1.0 - *std::max_element(p.begin(), p.end());
    case LossKind::alpha: {
      const double a = loss.alpha;
      double s = 0.0;
      for (double x : p) s += std::pow(x, a);
      return a / (a - 1.0) * (1.0 - std::pow(s, 1.0 / a));
    }
  }
  throw InvalidArgument("unknown loss kind");
}

}  // namespace detail

inline BayesAction bayes_action(const Pmf& p, const LossSpec& loss) {
  return detail::bayes_action(p.probs(), p.labels(), loss);
}

inline double l_entropy(const Pmf& p, const LossSpec& loss) { return detail::entropy(p.probs(), p.labels(), loss); }

inline double l_cross_entropy(const Pmf& p, const Pmf& q, const LossSpec& loss) {
  if (p.size() != q.size()) throw AlphabetMismatch("cross entropy: alphabets differ in size");
  // The action space of the quadratic loss is the real line, so q's labels
  // (falling back to p's) define the point action.
  const auto& q_labels = q.has_labels() ? q.labels() : p.labels();
  auto action = detail::bayes_action(q.probs(), q_labels, loss);
  return detail::expected_loss(p.probs(), p.labels(), action, loss);
}

inline double l_divergence(const Pmf& p, const Pmf& q, const LossSpec& loss) {
  return l_cross_entropy(p, q, loss) - l_entropy(p, loss);
}

/// Dense joint pmf over any number of finite axes, row-major (last axis fastest).
class JointPmf {
 public:
  JointPmf() = default;

  JointPmf(std::vector<std::size_t> shape, std::vector<double> probs,
           std::vector<std::optional<std::vector<double>>> axis_labels = {})
      : shape_(std::move(shape)), probs_(std::move(probs)), labels_(std::move(axis_labels)) {
    if (shape_.empty()) throw InvalidArgument("JointPmf: no axes");
    std::size_t n = 1;
    for (auto s : shape_) {
      if (s == 0) throw InvalidArgument("JointPmf: empty axis");
      n *= s;
    }
    if (n != probs_.size()) throw InvalidArgument("JointPmf: shape does not match number of cells");
    detail::check_probabilities(probs_, "JointPmf");
    if (labels_.empty()) labels_.resize(shape_.size());
    if (labels_.size() != shape_.size()) throw InvalidArgument("JointPmf: one label slot per axis required");
    for (std::size_t a = 0; a < shape_.size(); ++a)
      if (labels_[a] && labels_[a]->size() != shape_[a])
        throw InvalidArgument("JointPmf: axis labels do not match axis size");
  }

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<double>& probs() const { return probs_; }
  const std::optional<std::vector<double>>& labels(std::size_t axis) const { return labels_.at(axis); }
  const std::vector<std::optional<std::vector<double>>>& all_labels() const { return labels_; }

  double at(std::span<const std::size_t> idx) const { return probs_[flat(idx)]; }

  std::size_t flat(std::span<const std::size_t> idx) const {
    std::size_t f = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) f = f * shape_[a] + idx[a];
    return f;
  }

  /// Marginal over `axes`, in the given order.
  JointPmf marginal(std::span<const std::size_t> axes) const {
    check_axes(axes);
    std::vector<std::size_t> shape;
    std::vector<std::optional<std::vector<double>>> labels;
    for (auto a : axes) {
      shape.push_back(shape_[a]);
      labels.push_back(labels_[a]);
    }
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> out(n, 0.0);
    std::vector<std::size_t> idx(shape_.size(), 0);
    for (std::size_t f = 0; f < probs_.size(); ++f) {
      std::size_t g = 0;
      for (std::size_t k = 0; k < axes.size(); ++k) g = g * shape[k] + idx[axes[k]];
      out[g] += probs_[f];
      advance(idx);
    }
    return JointPmf(std::move(shape), std::move(out), std::move(labels), Unchecked{});
  }

  Pmf axis_marginal(std::size_t axis) const {
    std::size_t ax[1] = {axis};
    auto m = marginal(ax);
    return Pmf(renormalized(m.probs_), labels_[axis]);
  }

  void check_axes(std::span<const std::size_t> axes) const {
    std::vector<bool> seen(shape_.size(), false);
    for (auto a : axes) {
      if (a >= shape_.size()) throw AxisError("axis " + std::to_string(a) + " out of range");
      if (seen[a]) throw AxisError("axis " + std::to_string(a) + " repeated");
      seen[a] = true;
    }
  }

  friend bool operator==(const JointPmf&, const JointPmf&) = default;

 private:
  struct Unchecked {};
  JointPmf(std::vector<std::size_t> shape, std::vector<double> probs,
           std::vector<std::optional<std::vector<double>>> labels, Unchecked)
      : shape_(std::move(shape)), probs_(std::move(probs)), labels_(std::move(labels)) {}

  static std::vector<double> renormalized(std::vector<double> v) {
    double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& x : v) x /= s;
    return v;
  }

  void advance(std::vector<std::size_t>& idx) const {
    for (std::size_t a = shape_.size(); a-- > 0;) {
      if (++idx[a] < shape_[a]) return;
      idx[a] = 0;
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<double> probs_;
  std::vector<std::optional<std::vector<double>>> labels_;
};

namespace detail {

/// Calls fn(weight, conditional) for every configuration of the conditioning
/// axes with positive probability; `conditional` is the target distribution
/// given that configuration. `m` has the conditioning axes first and the target
/// axis last.
template <class Fn>
void for_each_conditional(const JointPmf& m, Fn&& fn) {
  const std::size_t ny = m.shape().back();
  const auto& p = m.probs();
  std::vector<double> cond(ny);
  for (std::size_t base = 0; base < p.size(); base += ny) {
    double px = 0.0;
    for (std::size_t y = 0; y < ny; ++y) px += p[base + y];
    if (px <= 0.0) continue;
    for (std::size_t y = 0; y < ny; ++y) cond[y] = p[base + y] / px;
    fn(base / ny, px, std::span<const double>(cond));
  }
}

inline JointPmf conditioned_layout(const JointPmf& j, std::size_t target_axis,
                                   std::span<const std::size_t> cond_axes) {
  std::vector<std::size_t> axes(cond_axes.begin(), cond_axes.end());
  axes.push_back(target_axis);
  return j.marginal(axes);
}

}  // namespace detail

/// H_L(Y | X) = sum_x P(x) H_L(Y | X = x); states with P(x) = 0 contribute 0.
inline double l_cond_entropy(const JointPmf& j, std::size_t target_axis, std::span<const std::size_t> cond_axes,
                             const LossSpec& loss) {
  auto m = detail::conditioned_layout(j, target_axis, cond_axes);
  const auto& labels = j.labels(target_axis);
  detail::check_loss_compatible(labels, loss);
  double h = 0.0;
  detail::for_each_conditional(m, [&](std::size_t, double px, std::span<const double> cond) {
    h += px * detail::entropy(cond, labels, loss);
  });
  return h;
}

inline double l_cond_entropy(const JointPmf& j, std::size_t target_axis, std::initializer_list<std::size_t> cond_axes,
                             const LossSpec& loss) {
  return l_cond_entropy(j, target_axis, std::span<const std::size_t>(cond_axes.begin(), cond_axes.size()), loss);
}

/// sum_x P_X(x) E_{P_{Y|x}}[L(Y, a_{Q_{Y|x}})], with the target on `target_axis`
/// and every other axis conditioned on. The weights P_X come from `p_joint`.
inline double l_cond_cross_entropy(const JointPmf& p_joint, const JointPmf& q_joint, const LossSpec& loss,
                                   std::size_t target_axis = 0) {
  if (p_joint.shape() != q_joint.shape()) throw AlphabetMismatch("conditional cross entropy: shapes differ");
  std::vector<std::size_t> cond_axes;
  for (std::size_t a = 0; a < p_joint.rank(); ++a)
    if (a != target_axis) cond_axes.push_back(a);
  auto pm = detail::conditioned_layout(p_joint, target_axis, cond_axes);
  auto qm = detail::conditioned_layout(q_joint, target_axis, cond_axes);
  const auto& labels = p_joint.labels(target_axis);
  const auto& q_labels = q_joint.labels(target_axis) ? q_joint.labels(target_axis) : labels;
  detail::check_loss_compatible(labels, loss);
  const std::size_t ny = pm.shape().back();
  const auto& qp = qm.probs();
  double h = 0.0;
  std::vector<double> qcond(ny);
  detail::for_each_conditional(pm, [&](std::size_t row, double px, std::span<const double> cond) {
    double qx = 0.0;
    for (std::size_t y = 0; y < ny; ++y) qx += qp[row * ny + y];
    if (qx <= 0.0) throw DegenerateConditional("reference conditional undefined where the inference marginal is positive");
    for (std::size_t y = 0; y < ny; ++y) qcond[y] = qp[row * ny + y] / qx;
    auto action = detail::bayes_action(qcond, q_labels, loss);
    h += px * detail::expected_loss(cond, labels, action, loss);
  });
  return h;
}

/// I_L(Y; X) = H_L(Y) - H_L(Y | X) for a joint with axes (Y, X).
inline double l_mutual_info(const JointPmf& j, const LossSpec& loss) {
  if (j.rank() != 2) throw AxisError("mutual information needs a 2-axis joint (Y, X)");
  return l_entropy(j.axis_marginal(0), loss) - l_cond_entropy(j, 0, {1}, loss);
}

/// I_L(Y; X | Z) = H_L(Y | Z) - H_L(Y | X, Z) for a joint with axes (Y, X, Z).
inline double l_cond_mutual_info(const JointPmf& j3, const LossSpec& loss) {
  if (j3.rank() != 3) throw AxisError("conditional mutual information needs a 3-axis joint (Y, X, Z)");
  return l_cond_entropy(j3, 0, {2}, loss) - l_cond_entropy(j3, 0, {1, 2}, loss);
}

/// Shannon I(Y; Z | X) in bits for a joint with axes (Y, X, Z): the squared
/// epsilon of the tightest epsilon-Markov chain Y - X - Z.
inline double epsilon_markov_gap(const JointPmf& j3) {
  if (j3.rank() != 3) throw AxisError("epsilon-Markov gap needs a 3-axis joint (Y, X, Z)");
  const std::size_t ny = j3.shape()[0], nx = j3.shape()[1], nz = j3.shape()[2];
  const auto& p = j3.probs();
  std::vector<double> px(nx, 0.0), pyx(ny * nx, 0.0), pxz(nx * nz, 0.0);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t z = 0; z < nz; ++z) {
        double v = p[(y * nx + x) * nz + z];
        px[x] += v;
        pyx[y * nx + x] += v;
        pxz[x * nz + z] += v;
      }
  // Accumulate per x, pairing (y, z) terms symmetrically so that swapping the
  // roles of Y and Z reproduces the same floating-point sum.
  double gap = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    if (px[x] <= 0.0) continue;
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = 0; z < nz; ++z) {
        double v = p[(y * nx + x) * nz + z];
        if (v <= 0.0) continue;
        double a = pyx[y * nx + x], b = pxz[x * nz + z];
        gap += detail::xlog2x_over(v, (a * b) / px[x]);
      }
  }
  return std::max(gap, 0.0);
}

/// (g1, g2) with g1 - g2 = H_L(Y0 | X_{-delta}) for a process joint whose axis
/// 0 is the target Y0 and axis 1 + k is the lagged feature X_{-k}, k = 0..K.
struct GDecomposition {
  double g1;
  double g2;
};

inline GDecomposition g_decomposition(const JointPmf& process, const LossSpec& loss, std::size_t delta) {
  if (process.rank() < 2) throw AxisError("process joint needs a target and at least one feature axis");
  const std::size_t lags = process.rank() - 2;  // K
  if (delta > lags)
    throw InvalidArgument("delta " + std::to_string(delta) + " exceeds the number of lags " + std::to_string(lags));
  GDecomposition g{l_cond_entropy(process, 0, {1}, loss), 0.0};
  for (std::size_t k = 0; k < delta; ++k) {
    const std::size_t xk = 1 + k, xk1 = 2 + k;
    double h_given_both = l_cond_entropy(process, 0, {xk, xk1}, loss);
    g.g1 += l_cond_entropy(process, 0, {xk1}, loss) - h_given_both;
    g.g2 += l_cond_entropy(process, 0, {xk}, loss) - h_given_both;
  }
  return g;
}

/// sum_delta P_Theta(delta) * curve[delta], where the age distribution's labels
/// are the ages delta (non-negative integers indexing `curve`).
inline double mixture_cond_entropy(const Pmf& age_dist, std::span<const double> curve) {
  if (!age_dist.has_labels()) throw InvalidArgument("age distribution needs the ages as labels");
  double s = 0.0;
  for (std::size_t i = 0; i < age_dist.size(); ++i) {
    double age = (*age_dist.labels())[i];
    if (age < 0.0 || age != std::floor(age) || age >= static_cast<double>(curve.size())) {
      if (age_dist[i] == 0.0) continue;
      throw InvalidArgument("age " + csv::format_double(age) + " outside the curve's domain");
    }
    s += age_dist[i] * curve[static_cast<std::size_t>(age)];
  }
  return s;
}

/// CSV with header `idx0,idx1,...,prob`, one row per cell. Missing cells are 0.
inline std::string joint_to_csv(const JointPmf& j) {
  std::ostringstream out;
  for (std::size_t a = 0; a < j.rank(); ++a) out << "idx" << a << ",";
  out << "prob\n";
  std::vector<std::size_t> idx(j.rank(), 0);
  for (std::size_t f = 0; f < j.probs().size(); ++f) {
    std::size_t rem = f;
    for (std::size_t a = j.rank(); a-- > 0;) {
      idx[a] = rem % j.shape()[a];
      rem /= j.shape()[a];
    }
    for (auto i : idx) out << i << ",";
    out << csv::format_double(j.probs()[f]) << "\n";
  }
  return out.str();
}

inline void export_joint_csv(const JointPmf& j, const std::filesystem::path& path) {
  csv::write_atomic(path, joint_to_csv(j));
}

inline JointPmf import_joint_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string header;
  while (std::getline(in, header) && header.find_first_not_of(" \t\r") == std::string::npos) {
  }
  auto cols = csv::split_line(header);
  if (cols.size() < 2 || cols.back() != "prob") throw ParseError(path.string() + ": header must end with 'prob'");
  const std::size_t rank = cols.size() - 1;
  for (std::size_t a = 0; a < rank; ++a)
    if (cols[a] != "idx" + std::to_string(a)) throw ParseError(path.string() + ": bad header column '" + cols[a] + "'");
  std::vector<std::string> expected(cols.begin(), cols.end());
  auto rows = csv::read_rows(path, expected);
  std::vector<std::size_t> shape(rank, 0);
  std::vector<std::pair<std::vector<std::size_t>, double>> cells;
  for (const auto& r : rows) {
    std::vector<std::size_t> idx(rank);
    for (std::size_t a = 0; a < rank; ++a) {
      auto v = csv::parse_int(r[a], "index");
      if (v < 0) throw ParseError(path.string() + ": negative index");
      idx[a] = static_cast<std::size_t>(v);
      shape[a] = std::max(shape[a], idx[a] + 1);
    }
    cells.emplace_back(std::move(idx), csv::parse_double(r[rank], "prob"));
  }
  if (cells.empty()) throw ParseError(path.string() + ": no cells");
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::vector<double> probs(n, 0.0);
  for (const auto& [idx, p] : cells) {
    std::size_t f = 0;
    for (std::size_t a = 0; a < rank; ++a) f = f * shape[a] + idx[a];
    probs[f] += p;
  }
  return JointPmf(shape, std::move(probs));
}

}  // namespace aoisched
