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

// Multi-source, multi-channel scheduling: Whittle index tables, the Lagrangian
// dual of the relaxed problem, the index policy and its baselines.
//
// Idle channels are modelled implicitly: a channel stays idle whenever every
// remaining index is negative, which is what a zero-index dummy source would
// do if it were materialised.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "aoisched/csv.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/sched_single.hpp"

namespace aoisched {

struct SourceSpec {
  double w = 1.0;
  int B = 1;
  PenaltyCurve penalty;
  TransmissionLaw law;

  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

struct FleetSpec {
  std::vector<SourceSpec> sources;
  int channels = 1;

  /// r copies of every source and r times the channels.
  FleetSpec scaled(int r) const {
    FleetSpec f;
    f.channels = channels * r;
    for (int k = 0; k < r; ++k) f.sources.insert(f.sources.end(), sources.begin(), sources.end());
    return f;
  }
};

/// Per-slot view of one source, as seen by a policy.
struct SourceState {
  std::int64_t delta = 1;   // AoI, never truncated
  std::int64_t d = 0;       // slots already spent on the feature in service
  std::int64_t remaining = 0;
  int in_flight_b = 0;
  bool busy() const { return remaining > 0; }
};

struct Assignment {
  std::size_t source;
  int b;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// W_{m,b}(delta, 0): the transmission cost at which sending and waiting are
/// equally good, from the renewal quantities at threshold gamma(delta).
inline double whittle_index(const SingleSourceModel& m, int b, std::int64_t delta) {
  const double g = m.gamma().at(delta);
  auto s = m.cycle(b, g);
  return (s.mean_length * g - s.mean_cost) / s.mean_t;
}

inline double whittle_index(const SourceSpec& src, int b, std::int64_t delta) {
  if (b < 0 || b >= src.B) throw InvalidArgument("buffer position outside 0..B-1");
  return whittle_index(SingleSourceModel(src.penalty, src.law, src.w), b, delta);
}

/// Index of a source given its service state; -inf while in service.
inline double whittle_index_state(double idle_index, std::int64_t d) { return d > 0 ? kNegInf : idle_index; }

/// W_{m,b}(delta, 0) for delta = 1..delta_bound + t_max (saturated beyond).
class WhittleTable {
 public:
  WhittleTable() = default;

  explicit WhittleTable(const SingleSourceModel& m, int B) {
    const std::int64_t n = m.penalty().delta_bound() + m.law().t_max();
    by_b_.assign(static_cast<std::size_t>(B), std::vector<double>(static_cast<std::size_t>(n)));
    best_.assign(static_cast<std::size_t>(n), kNegInf);
    for (int b = 0; b < B; ++b)
      for (std::int64_t d = 1; d <= n; ++d) {
        double w = whittle_index(m, b, d);
        by_b_[static_cast<std::size_t>(b)][static_cast<std::size_t>(d - 1)] = w;
        best_[static_cast<std::size_t>(d - 1)] = std::max(best_[static_cast<std::size_t>(d - 1)], w);
      }
  }

  /// max_b W_{m,b}(delta, 0).
  double at(std::int64_t delta) const { return best_[clamp(delta)]; }
  double at(int b, std::int64_t delta) const { return by_b_.at(static_cast<std::size_t>(b))[clamp(delta)]; }
  int buffer_depth() const { return static_cast<int>(by_b_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(best_.size()); }

 private:
  std::size_t clamp(std::int64_t delta) const {
    if (delta < 1) throw InvalidArgument("Whittle index needs delta >= 1");
    return static_cast<std::size_t>(std::min<std::int64_t>(delta, size()) - 1);
  }
  std::vector<std::vector<double>> by_b_;
  std::vector<double> best_;
};

inline std::string whittle_tables_csv(const std::vector<WhittleTable>& tables) {
  std::ostringstream out;
  out << "source,b,delta,W\n";
  for (std::size_t m = 0; m < tables.size(); ++m)
    for (int b = 0; b < tables[m].buffer_depth(); ++b)
      for (std::int64_t d = 1; d <= tables[m].size(); ++d)
        out << m << "," << b << "," << d << "," << csv::format_double(tables[m].at(b, d)) << "\n";
  return out.str();
}

struct SubproblemResult {
  PolicyCard card;
  double rho = 0.0;  // long-run channel occupancy E[T] / E[cycle length]
  int b_star() const { return card.b_star; }
  double value() const { return card.beta; }
};

inline SubproblemResult subproblem_value(const SingleSourceModel& m, int B, double lambda) {
  if (!std::isfinite(lambda)) throw InvalidArgument("transmission cost must be finite");
  SubproblemResult r{optimal_buffer(m, B, lambda), 0.0};
  if (!r.card.never_send) r.rho = r.card.cycle.mean_t / r.card.cycle.mean_length;
  return r;
}

inline SubproblemResult subproblem_value(const SourceSpec& src, double lambda) {
  return subproblem_value(SingleSourceModel(src.penalty, src.law, src.w), src.B, lambda);
}

/// Distinct sources of a fleet with their multiplicities, so identical
/// sources are solved once.
class FleetModels {
 public:
  explicit FleetModels(const FleetSpec& fleet) {
    for (const auto& s : fleet.sources) {
      auto it = std::find(specs_.begin(), specs_.end(), s);
      if (it == specs_.end()) {
        specs_.push_back(s);
        models_.emplace_back(s.penalty, s.law, s.w);
        counts_.push_back(0);
        it = specs_.end() - 1;
      }
      auto k = static_cast<std::size_t>(it - specs_.begin());
      ++counts_[k];
      index_.push_back(k);
    }
  }

  std::size_t distinct() const { return specs_.size(); }
  const SourceSpec& spec(std::size_t k) const { return specs_[k]; }
  const SingleSourceModel& model(std::size_t k) const { return models_[k]; }
  std::size_t count(std::size_t k) const { return counts_[k]; }
  /// Distinct-model index of fleet source m.
  std::size_t of(std::size_t m) const { return index_[m]; }

  std::vector<SubproblemResult> solve(double lambda) const {
    std::vector<SubproblemResult> out;
    for (std::size_t k = 0; k < distinct(); ++k) out.push_back(subproblem_value(models_[k], specs_[k].B, lambda));
    return out;
  }

  double occupancy(const std::vector<SubproblemResult>& sol) const {
    double s = 0.0;
    for (std::size_t k = 0; k < distinct(); ++k) s += static_cast<double>(counts_[k]) * sol[k].rho;
    return s;
  }

 private:
  std::vector<SourceSpec> specs_;
  std::vector<SingleSourceModel> models_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> index_;
};

struct DualTraceRow {
  int iter;
  double lambda;
  double occupancy;  // sum_m rho_m(lambda) at this iterate
};

struct DualResult {
  double lambda = 0.0;
  double occupancy = 0.0;  // at the returned lambda
  std::vector<DualTraceRow> trace;
};

/// lambda_{k+1} = lambda_k + (alpha / k) (sum_m rho_m(lambda_k) + c0 - N),
/// c0 = N for lambda <= 0 (dummies take every channel) and 0 otherwise.
inline DualResult dual_solve(const FleetSpec& fleet, double lambda0, double alpha, int iters) {
  if (iters < 1) throw InvalidArgument("dual iterations must be >= 1");
  if (fleet.channels < 1) throw InvalidArgument("fleet needs at least one channel");
  FleetModels models(fleet);
  double scale = 0.0;
  for (const auto& s : fleet.sources) scale = std::max(scale, s.w * s.penalty.bound());
  const double guard = 1e6 * std::max(scale, 1e-300);
  const double n = fleet.channels;
  DualResult r;
  double lambda = lambda0;
  for (int k = 1; k <= iters; ++k) {
    const double occ = models.occupancy(models.solve(lambda));
    r.trace.push_back({k, lambda, occ});
    const double c0 = lambda <= 0.0 ? n : 0.0;
    lambda += (alpha / k) * (occ + c0 - n);
    if (!std::isfinite(lambda) || std::abs(lambda) > guard) throw NumericalFailure("dual iteration diverged");
  }
  r.lambda = std::max(lambda, 0.0);
  r.occupancy = models.occupancy(models.solve(r.lambda));
  return r;
}

inline std::string dual_trace_csv(const DualResult& r) {
  std::ostringstream out;
  out << "iter,lambda,occupancy\n";
  for (const auto& row : r.trace)
    out << row.iter << "," << csv::format_double(row.lambda) << "," << csv::format_double(row.occupancy) << "\n";
  return out.str();
}

/// q(lambda) = sum_m beta_m(lambda) - lambda * N, valid for lambda >= 0.
inline double relaxed_lower_bound(const FleetSpec& fleet, double lambda) {
  if (lambda < 0.0) throw InvalidArgument("lower bound needs lambda >= 0");
  FleetModels models(fleet);
  auto sol = models.solve(lambda);
  double q = -lambda * fleet.channels;
  for (std::size_t k = 0; k < models.distinct(); ++k) q += static_cast<double>(models.count(k)) * sol[k].value();
  return q;
}

/// Everything the fleet policies need, computed once per (fleet, lambda*).
struct FleetPlan {
  double lambda = 0.0;
  std::vector<std::shared_ptr<const WhittleTable>> tables;  // per fleet source
  std::vector<std::shared_ptr<const PolicyCard>> cards;     // decoupled policy at lambda, per fleet source
};

inline FleetPlan make_fleet_plan(const FleetSpec& fleet, double lambda) {
  FleetModels models(fleet);
  std::vector<std::shared_ptr<const WhittleTable>> tables;
  std::vector<std::shared_ptr<const PolicyCard>> cards;
  for (std::size_t k = 0; k < models.distinct(); ++k) {
    tables.push_back(std::make_shared<WhittleTable>(models.model(k), models.spec(k).B));
    cards.push_back(std::make_shared<PolicyCard>(optimal_buffer(models.model(k), models.spec(k).B, lambda)));
  }
  FleetPlan plan;
  plan.lambda = lambda;
  for (std::size_t m = 0; m < fleet.sources.size(); ++m) {
    plan.tables.push_back(tables[models.of(m)]);
    plan.cards.push_back(cards[models.of(m)]);
  }
  return plan;
}

namespace detail {

/// Greedy index allocation: highest non-negative index first, ties to the
/// lowest source index, at most `idle` channels, never a busy source.
template <class IndexFn, class BufferFn>
void index_allocate(std::span<const SourceState> states, int idle, IndexFn&& index, BufferFn&& buffer,
                    std::vector<Assignment>& out) {
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t m = 0; m < states.size(); ++m) {
    double w = whittle_index_state(index(m, states[m].delta), states[m].d);
    if (w >= 0.0) cand.emplace_back(w, m);
  }
  const auto take = std::min<std::size_t>(cand.size(), static_cast<std::size_t>(std::max(idle, 0)));
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  for (std::size_t i = 0; i < take; ++i) out.push_back({cand[i].second, buffer(cand[i].second)});
}

}  // namespace detail

/// Index policy: Whittle order over max_b W_{m,b}, sending from b*_m(lambda*).
class IndexPolicy {
 public:
  explicit IndexPolicy(FleetPlan plan) : plan_(std::move(plan)) {}
  void decide(std::int64_t, std::span<const SourceState> s, int idle, std::vector<Assignment>& out) {
    detail::index_allocate(
        s, idle, [&](std::size_t m, std::int64_t d) { return plan_.tables[m]->at(d); },
        [&](std::size_t m) { return plan_.cards[m]->b_star; }, out);
  }

 private:
  FleetPlan plan_;
};

/// Whittle order restricted to the freshest feature (b = 0).
class WhittleGawPolicy {
 public:
  explicit WhittleGawPolicy(FleetPlan plan) : plan_(std::move(plan)) {}
  void decide(std::int64_t, std::span<const SourceState> s, int idle, std::vector<Assignment>& out) {
    detail::index_allocate(
        s, idle, [&](std::size_t m, std::int64_t d) { return plan_.tables[m]->at(0, d); }, [](std::size_t) { return 0; },
        out);
  }

 private:
  FleetPlan plan_;
};

/// Maximum age first, freshest feature, ties to the lowest source index.
class MafPolicy {
 public:
  void decide(std::int64_t, std::span<const SourceState> s, int idle, std::vector<Assignment>& out) {
    std::vector<std::size_t> cand;
    for (std::size_t m = 0; m < s.size(); ++m)
      if (!s[m].busy()) cand.push_back(m);
    const auto take = std::min<std::size_t>(cand.size(), static_cast<std::size_t>(std::max(idle, 0)));
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                      [&](std::size_t a, std::size_t b) { return s[a].delta > s[b].delta || (s[a].delta == s[b].delta && a < b); });
    for (std::size_t i = 0; i < take; ++i) out.push_back({cand[i], 0});
  }
};

/// Every source runs its decoupled optimal policy at lambda*; the channel
/// constraint is ignored, so run it with one channel per source.
class DecoupledPolicy {
 public:
  explicit DecoupledPolicy(FleetPlan plan) : plan_(std::move(plan)) {}
  void decide(std::int64_t, std::span<const SourceState> s, int, std::vector<Assignment>& out) {
    for (std::size_t m = 0; m < s.size(); ++m)
      if (auto b = single_policy_decide(*plan_.cards[m], s[m].delta, !s[m].busy())) out.push_back({m, *b});
  }

 private:
  FleetPlan plan_;
};

class NeverSendPolicy {
 public:
  void decide(std::int64_t, std::span<const SourceState>, int, std::vector<Assignment>&) {}
};

enum class BaselineKind { maf, whittle_gaw, lower_bound, upper_bound };

inline BaselineKind parse_baseline(const std::string& s) {
  if (s == "maf") return BaselineKind::maf;
  if (s == "whittle_gaw") return BaselineKind::whittle_gaw;
  if (s == "lower_bound") return BaselineKind::lower_bound;
  if (s == "upper_bound") return BaselineKind::upper_bound;
  throw InvalidArgument("unknown baseline '" + s + "'");
}

/// One slot of the index policy on a plain state vector.
inline std::vector<Assignment> index_policy_decide(std::span<const SourceState> s, int idle, const FleetPlan& plan) {
  std::vector<Assignment> out;
  IndexPolicy(plan).decide(0, s, idle, out);
  return out;
}

inline std::vector<Assignment> baseline_decide(BaselineKind kind, std::span<const SourceState> s, int idle,
                                               const FleetPlan& plan) {
  std::vector<Assignment> out;
  switch (kind) {
    case BaselineKind::maf: MafPolicy().decide(0, s, idle, out); break;
    case BaselineKind::whittle_gaw: WhittleGawPolicy(plan).decide(0, s, idle, out); break;
    case BaselineKind::lower_bound: DecoupledPolicy(plan).decide(0, s, idle, out); break;
    case BaselineKind::upper_bound: break;
  }
  return out;
}

}  // namespace aoisched
