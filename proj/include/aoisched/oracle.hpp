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

// Dynamic-programming ground truth for the single-source problem.
//
// Decision epochs are deliveries. In state s (the AoI right after a delivery)
// the scheduler picks a wait tau and a buffer position b; the next delivery
// comes tau + T' slots later and resets the AoI to T' + b. The solver never
// looks at the index function, so agreement with the threshold root is an
// independent check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aoisched/csv.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/sched_single.hpp"

namespace aoisched {

struct SmdpSpec {
  PenaltyCurve penalty;
  TransmissionLaw law;
  int B = 1;
  double w = 1.0;
  double lambda = 0.0;
  /// Waiting-time cap; 0 picks 2 * (delta_bound + t_max).
  std::int64_t tau_max = 0;
};

struct RviResult {
  double gain = 0.0;
  std::vector<double> h;            // relative values, h[s - 1] for s = 1..S, h(1) = 0
  std::vector<std::int64_t> tau;    // greedy wait per state
  std::vector<int> b;               // greedy buffer position per state
  std::int64_t tau_max = 0;
  long sweeps = 0;
};

namespace detail {

inline RviResult rvi_once(const SmdpSpec& spec, std::int64_t tau_max) {
  const auto& law = spec.law;
  const int tm = law.t_max();
  const std::int64_t S = std::max<std::int64_t>(spec.penalty.delta_bound() + tm, tm + spec.B - 1);
  const double et = law.mean();
  // Wait-then-send cost from state s with wait tau, excluding lambda.
  std::vector<double> w_pen(static_cast<std::size_t>(S + tau_max + tm + 1), 0.0);
  for (std::size_t d = 1; d < w_pen.size(); ++d) w_pen[d] = spec.w * spec.penalty.at(static_cast<std::int64_t>(d));
  std::vector<double> prefix(w_pen.size() + 1, 0.0);
  for (std::size_t d = 1; d < w_pen.size(); ++d) prefix[d] = prefix[d - 1] + w_pen[d];
  auto range = [&](std::int64_t a, std::int64_t n) {  // sum_{k<n} w p(a + k)
    return prefix[static_cast<std::size_t>(a + n - 1)] - prefix[static_cast<std::size_t>(a - 1)];
  };
  const std::size_t nt = static_cast<std::size_t>(tau_max + 1);
  std::vector<double> cost(static_cast<std::size_t>(S) * nt);
  for (std::int64_t s = 1; s <= S; ++s)
    for (std::int64_t tau = 0; tau <= tau_max; ++tau) {
      double c = 0.0;
      for (int t = 1; t <= tm; ++t)
        if (law.prob(t) > 0.0) c += law.prob(t) * range(s, tau + t);
      cost[static_cast<std::size_t>(s - 1) * nt + static_cast<std::size_t>(tau)] = c + spec.lambda * et;
    }

  // Schweitzer transformation with eta = 0.5 <= min sojourn time.
  const double eta = 0.5;
  std::vector<double> v(static_cast<std::size_t>(S), 0.0), next(v.size()), vbar(static_cast<std::size_t>(spec.B));
  auto expected_next = [&](const std::vector<double>& val) {
    for (int b = 0; b < spec.B; ++b) {
      double e = 0.0;
      for (int t = 1; t <= tm; ++t)
        if (law.prob(t) > 0.0) e += law.prob(t) * val[static_cast<std::size_t>(t + b - 1)];
      vbar[static_cast<std::size_t>(b)] = e;
    }
  };
  RviResult r;
  r.tau_max = tau_max;
  double lo = 0.0, hi = 0.0;
  for (long sweep = 1;; ++sweep) {
    if (sweep > 100000) throw NumericalFailure("relative value iteration did not converge");
    expected_next(v);
    const double best_vbar = *std::min_element(vbar.begin(), vbar.end());
    for (std::int64_t s = 1; s <= S; ++s) {
      const double vs = v[static_cast<std::size_t>(s - 1)];
      double best = std::numeric_limits<double>::infinity();
      for (std::int64_t tau = 0; tau <= tau_max; ++tau) {
        const double t = static_cast<double>(tau) + et;
        const double c = cost[static_cast<std::size_t>(s - 1) * nt + static_cast<std::size_t>(tau)];
        best = std::min(best, c / t + (eta / t) * best_vbar + (1.0 - eta / t) * vs);
      }
      next[static_cast<std::size_t>(s - 1)] = best;
    }
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (std::size_t i = 0; i < v.size(); ++i) {
      lo = std::min(lo, next[i] - v[i]);
      hi = std::max(hi, next[i] - v[i]);
    }
    const double ref = next[0];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = next[i] - ref;
    if (hi - lo < 1e-10) {
      r.sweeps = sweep;
      break;
    }
  }
  r.gain = 0.5 * (lo + hi);

  // Greedy action from the untransformed equation h = eta * v:
  // argmin c - g * t + eta * E[v(T' + b)], ties to the smallest tau then b.
  expected_next(v);
  int b_best = 0;
  for (int b = 1; b < spec.B; ++b)
    if (vbar[static_cast<std::size_t>(b)] < vbar[static_cast<std::size_t>(b_best)] - 1e-9) b_best = b;
  r.h.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r.h[i] = eta * v[i];
  for (std::int64_t s = 1; s <= S; ++s) {
    std::int64_t tau_best = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t tau = 0; tau <= tau_max; ++tau) {
      const double t = static_cast<double>(tau) + et;
      const double q = cost[static_cast<std::size_t>(s - 1) * nt + static_cast<std::size_t>(tau)] - r.gain * t +
                       eta * vbar[static_cast<std::size_t>(b_best)];
      if (tau == 0 || q < best - 1e-9 * std::max(1.0, std::abs(best))) {
        best = q;
        tau_best = tau;
      }
    }
    r.tau.push_back(tau_best);
    r.b.push_back(b_best);
  }
  return r;
}

}  // namespace detail

/// Relative value iteration on the embedded semi-Markov decision process.
/// tau_max is doubled (up to 6 times) while some greedy wait sits on the cap.
inline RviResult rvi_solve(const SmdpSpec& spec) {
  if (spec.B < 1) throw InvalidArgument("buffer depth B must be >= 1");
  std::int64_t tau_max = spec.tau_max > 0 ? spec.tau_max : 2 * (spec.penalty.delta_bound() + spec.law.t_max());
  for (int attempt = 0;; ++attempt) {
    auto r = detail::rvi_once(spec, tau_max);
    const bool capped = std::any_of(r.tau.begin(), r.tau.end(), [&](std::int64_t t) { return t >= tau_max; });
    if (!capped) return r;
    if (attempt == 6) throw NumericalFailure("greedy waiting time keeps hitting tau_max");
    tau_max *= 2;
  }
}

struct ScanRow {
  int b;
  double beta;
  double avg_cost;
};

/// Renewal average cost of the threshold policy for every buffer position and
/// every candidate threshold: each distinct gamma value (which enumerates all
/// distinct threshold policies) plus a uniform grid of `grid` points.
inline std::vector<ScanRow> exhaustive_threshold_scan(const SmdpSpec& spec, int grid = 200) {
  SingleSourceModel m(spec.penalty, spec.law, spec.w);
  std::set<double> candidates(m.gamma().values().begin(), m.gamma().values().end());
  const double lo = *candidates.begin(), hi = m.gamma().sup();
  for (int i = 0; i <= grid; ++i) candidates.insert(lo + (hi - lo) * i / std::max(grid, 1));
  std::vector<ScanRow> rows;
  for (int b = 0; b < spec.B; ++b)
    for (double beta : candidates) {
      if (beta > hi) continue;
      auto s = m.cycle(b, beta);
      rows.push_back({b, beta, (s.mean_cost + spec.lambda * s.mean_t) / s.mean_length});
    }
  return rows;
}

struct OracleReportRow {
  std::string spec_id;
  double gain;
  double beta_min;
  int b_star_rvi;
  int b_star_analytic;
  double abs_diff;
};

inline OracleReportRow oracle_compare(const std::string& id, const SmdpSpec& spec) {
  auto rvi = rvi_solve(spec);
  auto card = optimal_buffer(spec.penalty, spec.law, spec.B, spec.w, spec.lambda);
  return {id, rvi.gain, card.beta, rvi.b.empty() ? 0 : rvi.b.front(), card.b_star, std::abs(rvi.gain - card.beta)};
}

inline std::string oracle_report_csv(const std::vector<OracleReportRow>& rows) {
  std::ostringstream out;
  out << "spec_id,gain,beta_min,b_star_rvi,b_star_analytic,abs_diff\n";
  for (const auto& r : rows)
    out << r.spec_id << "," << csv::format_double(r.gain) << "," << csv::format_double(r.beta_min) << ","
        << r.b_star_rvi << "," << r.b_star_analytic << "," << csv::format_double(r.abs_diff) << "\n";
  return out.str();
}

}  // namespace aoisched
