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

// Single-source scheduling: index function, cycle cost J(beta), threshold root
// and optimal buffer position for a source whose features take i.i.d. T slots
// to deliver and may be picked from any of B buffer positions.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aoisched/csv.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/penalty.hpp"

namespace aoisched {

/// Pmf of the transmission time T on {1, ..., t_max}; probs[k - 1] = P(T = k).
class TransmissionLaw {
 public:
  TransmissionLaw() : TransmissionLaw(std::vector<double>{1.0}) {}

  explicit TransmissionLaw(std::vector<double> probs, double lumped_mass = 0.0)
      : probs_(std::move(probs)), lumped_(lumped_mass) {
    detail::check_probabilities(probs_, "TransmissionLaw");
    while (probs_.size() > 1 && probs_.back() == 0.0) probs_.pop_back();
    cdf_.resize(probs_.size());
    double c = 0.0;
    for (std::size_t k = 0; k < probs_.size(); ++k) {
      c += probs_[k];
      cdf_[k] = c;
      mean_ += static_cast<double>(k + 1) * probs_[k];
    }
  }

  static TransmissionLaw constant(int t) {
    if (t < 1) throw InvalidArgument("transmission time must be >= 1");
    std::vector<double> p(static_cast<std::size_t>(t), 0.0);
    p.back() = 1.0;
    return TransmissionLaw(std::move(p));
  }

  int t_max() const { return static_cast<int>(probs_.size()); }
  double prob(int t) const { return t >= 1 && t <= t_max() ? probs_[static_cast<std::size_t>(t - 1)] : 0.0; }
  double mean() const { return mean_; }
  const std::vector<double>& probs() const { return probs_; }
  /// Mass beyond the support cap that was folded into t_max (0 when exact).
  double lumped_mass() const { return lumped_; }

  /// Inverse-CDF sample from a uniform in [0, 1).
  int sample(double u) const {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) return t_max();
    return static_cast<int>(it - cdf_.begin()) + 1;
  }

  friend bool operator==(const TransmissionLaw& a, const TransmissionLaw& b) { return a.probs_ == b.probs_; }

 private:
  std::vector<double> probs_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
  double lumped_ = 0.0;
};

/// gamma(delta) for delta = 1..delta_bound + t_max; constant beyond.
class GammaTable {
 public:
  GammaTable() = default;
  GammaTable(std::vector<double> values, double sup) : values_(std::move(values)), sup_(sup) {}

  double at(std::int64_t delta) const {
    if (delta < 1) throw InvalidArgument("gamma evaluated at delta < 1");
    auto i = std::min<std::int64_t>(delta, static_cast<std::int64_t>(values_.size())) - 1;
    return values_[static_cast<std::size_t>(i)];
  }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
  const std::vector<double>& values() const { return values_; }
  /// sup over all delta; gamma never exceeds it and reaches it once saturated.
  double sup() const { return sup_; }

 private:
  std::vector<double> values_;
  double sup_ = 0.0;
};

namespace detail {

/// Weighted penalty w * p(delta) with O(1) range sums under saturation.
class PenaltySums {
 public:
  PenaltySums(const PenaltyCurve& p, double w) : w_(w), sat_(w * p.saturation()) {
    prefix_.resize(static_cast<std::size_t>(p.delta_bound()) + 1, 0.0);
    for (std::int64_t d = 1; d <= p.delta_bound(); ++d)
      prefix_[static_cast<std::size_t>(d)] = prefix_[static_cast<std::size_t>(d - 1)] + w * p.at(d);
  }

  /// sum_{k=0}^{n-1} w * p(a + k), a >= 1.
  double range(std::int64_t a, std::int64_t n) const {
    if (n <= 0) return 0.0;
    const auto db = static_cast<std::int64_t>(prefix_.size()) - 1;
    const std::int64_t last = a + n - 1;
    double s = 0.0;
    if (a <= db) {
      const std::int64_t hi = std::min(last, db);
      s += prefix_[static_cast<std::size_t>(hi)] - prefix_[static_cast<std::size_t>(a - 1)];
    }
    const std::int64_t sat_from = std::max(a, db + 1);
    if (last >= sat_from) s += static_cast<double>(last - sat_from + 1) * sat_;
    return s;
  }

  double saturated() const { return sat_; }

 private:
  double w_;
  double sat_;
  std::vector<double> prefix_;
};

/// q(x) = w * E[p(x + T)], x >= 0.
inline double expected_next(const PenaltyCurve& p, const TransmissionLaw& law, double w, std::int64_t x) {
  double s = 0.0;
  for (int t = 1; t <= law.t_max(); ++t)
    if (law.prob(t) > 0.0) s += law.prob(t) * p.at(x + t);
  return w * s;
}

}  // namespace detail

/// gamma(delta) = inf_{tau >= 1} (1/tau) sum_{k<tau} q(delta + k), q as above.
///
/// q(x) is constant (= w * p_sat) once x >= delta_bound - 1, so with
/// K = delta_bound + t_max every prefix longer than K has the form
/// (S_K + (tau - K) c) / tau, which moves monotonically from S_K / K towards c.
/// The infimum over all tau is therefore min(prefix averages up to K, c).
inline double gamma_index(const PenaltyCurve& p, const TransmissionLaw& law, double w, std::int64_t delta) {
  if (delta < 1) throw InvalidArgument("gamma_index needs delta >= 1");
  const double c = w * p.saturation();
  const std::int64_t K = p.delta_bound() + law.t_max();
  double best = c, sum = 0.0;
  for (std::int64_t tau = 1; tau <= K; ++tau) {
    sum += detail::expected_next(p, law, w, delta + tau - 1);
    best = std::min(best, sum / static_cast<double>(tau));
  }
  return best;
}

inline GammaTable gamma_table(const PenaltyCurve& p, const TransmissionLaw& law, double w) {
  const std::int64_t n = p.delta_bound() + law.t_max();
  // q over the whole window once, then the running minima per start point.
  const std::int64_t K = n;
  std::vector<double> q(static_cast<std::size_t>(n + K));
  for (std::int64_t x = 1; x < n + K; ++x) q[static_cast<std::size_t>(x)] = detail::expected_next(p, law, w, x);
  const double c = w * p.saturation();
  std::vector<double> values(static_cast<std::size_t>(n));
  for (std::int64_t delta = 1; delta <= n; ++delta) {
    double best = c, sum = 0.0;
    for (std::int64_t tau = 1; tau <= K; ++tau) {
      sum += q[static_cast<std::size_t>(delta + tau - 1)];
      best = std::min(best, sum / static_cast<double>(tau));
    }
    values[static_cast<std::size_t>(delta - 1)] = best;
  }
  return GammaTable(std::move(values), c);
}

/// min{k >= 0 : gamma(delta + k) >= beta}.
inline std::int64_t waiting_time(const GammaTable& g, std::int64_t delta, double beta) {
  if (beta == -std::numeric_limits<double>::infinity()) return 0;
  if (std::isnan(beta) || beta > g.sup())
    throw UnreachableThreshold("threshold " + csv::format_double(beta) + " exceeds sup gamma " +
                               csv::format_double(g.sup()));
  std::int64_t k = 0;
  while (g.at(delta + k) < beta) {
    ++k;
    // Past the table every value equals sup >= beta, so this cannot run away.
    if (delta + k > g.size()) break;
  }
  return k;
}

/// Renewal statistics of one delivery-to-delivery cycle under a threshold
/// policy: the cycle starts at AoI T + b, waits, then takes T' slots.
struct CycleStats {
  double mean_length = 0.0;  // E[tau + T']
  double mean_cost = 0.0;    // E[sum of w * p over the cycle]
  double mean_t = 0.0;       // E[T]
};

class SingleSourceModel {
 public:
  SingleSourceModel(PenaltyCurve p, TransmissionLaw law, double w)
      : p_(std::move(p)), law_(std::move(law)), w_(w), sums_(p_, w), gamma_(gamma_table(p_, law_, w)) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InvalidArgument("source weight must be positive");
  }

  const PenaltyCurve& penalty() const { return p_; }
  const TransmissionLaw& law() const { return law_; }
  double weight() const { return w_; }
  const GammaTable& gamma() const { return gamma_; }

  /// Cycle statistics when sending from buffer position b once gamma >= beta.
  CycleStats cycle(int b, double beta) const {
    CycleStats s;
    s.mean_t = law_.mean();
    for (int t = 1; t <= law_.t_max(); ++t) {
      const double pt = law_.prob(t);
      if (pt == 0.0) continue;
      const std::int64_t start = t + b;
      const std::int64_t tau = waiting_time(gamma_, start, beta);
      for (int t2 = 1; t2 <= law_.t_max(); ++t2) {
        const double pt2 = law_.prob(t2);
        if (pt2 == 0.0) continue;
        const std::int64_t len = tau + t2;
        s.mean_length += pt * pt2 * static_cast<double>(len);
        s.mean_cost += pt * pt2 * sums_.range(start, len);
      }
    }
    return s;
  }

  double j(int b, double lambda, double beta) const {
    auto s = cycle(b, beta);
    return s.mean_cost - beta * s.mean_length + lambda * s.mean_t;
  }

 private:
  PenaltyCurve p_;
  TransmissionLaw law_;
  double w_;
  detail::PenaltySums sums_;
  GammaTable gamma_;
};

inline double j_function(const PenaltyCurve& p, const TransmissionLaw& law, int b, double w, double lambda,
                         double beta) {
  if (b < 0) throw InvalidArgument("buffer position must be >= 0");
  if (!std::isfinite(beta)) throw InvalidArgument("J needs a finite threshold");
  return SingleSourceModel(p, law, w).j(b, lambda, beta);
}

struct RootResult {
  double beta = 0.0;
  double j_at_beta = 0.0;
  /// J(sup gamma) > 0: no threshold policy beats never sending, whose cost
  /// sup gamma is reported as beta.
  bool never_send = false;
  int iterations = 0;
};

inline RootResult threshold_root(const SingleSourceModel& m, int b, double lambda) {
  if (b < 0) throw InvalidArgument("buffer position must be >= 0");
  const double c_sat = m.gamma().sup();
  const double wm = m.weight() * m.penalty().bound();
  const double pad = std::abs(lambda) * m.law().t_max();
  double hi = std::min(wm + pad, c_sat);
  RootResult r;
  const double j_hi = m.j(b, lambda, hi);
  if (j_hi > 0.0) {
    r.beta = c_sat;
    r.j_at_beta = j_hi;
    r.never_send = true;
    return r;
  }
  double lo = -wm - pad;
  double j_lo = m.j(b, lambda, lo);
  for (int i = 0; j_lo < 0.0; ++i) {
    if (i == 60) throw NumericalFailure("threshold bracket expansion failed");
    lo = 2.0 * lo - 1.0;
    j_lo = m.j(b, lambda, lo);
  }
  double mid = hi, j_mid = j_hi;
  if (std::abs(j_lo) < std::abs(j_mid)) mid = lo, j_mid = j_lo;
  int it = 0;
  while (std::abs(j_mid) >= 1e-10 && it < 200) {
    ++it;
    mid = 0.5 * (lo + hi);
    j_mid = m.j(b, lambda, mid);
    if (j_mid > 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 0.0) break;
  }
  // One Dinkelbach step lands on the exact ratio of the policy found above.
  auto s = m.cycle(b, mid);
  const double polished = (s.mean_cost + lambda * s.mean_t) / s.mean_length;
  if (polished <= c_sat) {
    const double j_pol = m.j(b, lambda, polished);
    if (std::abs(j_pol) < std::abs(j_mid)) mid = polished, j_mid = j_pol;
  }
  r.beta = mid;
  r.j_at_beta = j_mid;
  r.iterations = it;
  return r;
}

inline double threshold_root(const PenaltyCurve& p, const TransmissionLaw& law, int b, double w, double lambda) {
  return threshold_root(SingleSourceModel(p, law, w), b, lambda).beta;
}

struct PolicyCard {
  double beta = 0.0;
  int b_star = 0;
  std::vector<double> betas;  // beta_b for b = 0..B-1
  GammaTable gamma;
  double lambda = 0.0;
  double weight = 1.0;
  bool never_send = false;
  double j_at_beta = 0.0;
  CycleStats cycle;  // at (b_star, beta); zero length when never_send
};

inline PolicyCard optimal_buffer(const SingleSourceModel& m, int B, double lambda) {
  if (B < 1) throw InvalidArgument("buffer depth B must be >= 1");
  PolicyCard card;
  card.gamma = m.gamma();
  card.lambda = lambda;
  card.weight = m.weight();
  card.never_send = true;
  std::vector<RootResult> roots;
  for (int b = 0; b < B; ++b) {
    roots.push_back(threshold_root(m, b, lambda));
    card.betas.push_back(roots.back().beta);
  }
  // Smallest b among the (numerically) tied minima.
  const double best = *std::min_element(card.betas.begin(), card.betas.end());
  for (int b = 0; b < B; ++b)
    if (card.betas[static_cast<std::size_t>(b)] <= best + 1e-12) {
      card.b_star = b;
      break;
    }
  const auto& r = roots[static_cast<std::size_t>(card.b_star)];
  card.beta = r.beta;
  card.j_at_beta = r.j_at_beta;
  card.never_send = std::all_of(roots.begin(), roots.end(), [](const RootResult& x) { return x.never_send; });
  if (!card.never_send) {
    // A never-send b can only tie at c_sat; prefer a b that actually sends.
    if (r.never_send)
      for (int b = 0; b < B; ++b)
        if (!roots[static_cast<std::size_t>(b)].never_send && card.betas[static_cast<std::size_t>(b)] <= best + 1e-12) {
          card.b_star = b;
          card.beta = roots[static_cast<std::size_t>(b)].beta;
          card.j_at_beta = roots[static_cast<std::size_t>(b)].j_at_beta;
          break;
        }
    card.cycle = m.cycle(card.b_star, card.beta);
  }
  return card;
}

inline PolicyCard optimal_buffer(const PenaltyCurve& p, const TransmissionLaw& law, int B, double w, double lambda) {
  return optimal_buffer(SingleSourceModel(p, law, w), B, lambda);
}

/// Buffer position to send from, or nullopt to wait.
inline std::optional<int> single_policy_decide(const PolicyCard& card, std::int64_t delta, bool channel_idle) {
  if (delta < 1) throw InvalidArgument("AoI must be >= 1");
  if (!channel_idle || card.never_send) return std::nullopt;
  if (card.gamma.at(delta) >= card.beta) return card.b_star;
  return std::nullopt;
}

/// Card with beta = -inf: sends whenever the channel is idle.
inline PolicyCard zero_wait_card(const SingleSourceModel& m, int b = 0) {
  PolicyCard card;
  card.beta = -std::numeric_limits<double>::infinity();
  card.b_star = b;
  card.betas = {card.beta};
  card.gamma = m.gamma();
  card.weight = m.weight();
  card.cycle = m.cycle(b, card.beta);
  return card;
}

inline std::string gamma_to_csv(const GammaTable& g) {
  std::ostringstream out;
  out << "delta,gamma\n";
  for (std::int64_t d = 1; d <= g.size(); ++d) out << d << "," << csv::format_double(g.at(d)) << "\n";
  return out.str();
}

inline std::string card_to_text(const PolicyCard& c) {
  std::ostringstream out;
  out << "key,value\n";
  out << "beta," << csv::format_double(c.beta) << "\n";
  out << "b_star," << c.b_star << "\n";
  out << "lambda," << csv::format_double(c.lambda) << "\n";
  out << "weight," << csv::format_double(c.weight) << "\n";
  out << "never_send," << (c.never_send ? 1 : 0) << "\n";
  out << "j_at_beta," << csv::format_double(c.j_at_beta) << "\n";
  out << "mean_cycle_length," << csv::format_double(c.cycle.mean_length) << "\n";
  for (std::size_t b = 0; b < c.betas.size(); ++b) out << "beta_" << b << "," << csv::format_double(c.betas[b]) << "\n";
  return out.str();
}

}  // namespace aoisched
