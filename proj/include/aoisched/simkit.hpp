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

// Discrete-time simulator for single-source and fleet scheduling.
//
// Within slot t the engine
//   1. delivers every feature whose service ends at t (AoI <- T + b) and
//      otherwise ages each source by one slot,
//   2. asks the policy for new transmissions on the idle channels,
//   3. accrues sum_m w_m p_m(AoI_m(t)) when t >= warmup.
// A transmission started at S with duration T holds its channel during
// slots S..S+T-1 and delivers at S+T.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "aoisched/csv.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/sched_fleet.hpp"
#include "aoisched/sched_single.hpp"

namespace aoisched {

// ---------------------------------------------------------------------------
// Randomness: a counter-based generator. Draw n of stream s under seed k is
//   mix(mix(k ^ mix(s + G)) + n * G),  G = 0x9e3779b97f4a7c15,
// where mix is the SplitMix64 finalizer, so any draw can be reproduced from
// (seed, stream, counter) alone on any platform.

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class StreamPurpose : std::uint64_t { transmission = 1, aux = 2 };

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) : key_(mix64(seed ^ mix64(stream + kGolden))) {}

  static RngStream for_source(std::uint64_t seed, std::size_t source, StreamPurpose purpose) {
    return RngStream(seed, (static_cast<std::uint64_t>(source) << 8) | static_cast<std::uint64_t>(purpose));
  }

  std::uint64_t next_u64() { return mix64(key_ + (counter_++) * kGolden); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------

/// T = ceil(alpha * exp(sigma Z) / E[exp(sigma Z)]), Z standard normal, on
/// {1..t_cap}. Mass beyond t_cap above 1e-9 is an error unless `allow_lump`,
/// in which case it is added to t_cap and recorded on the law.
inline TransmissionLaw lognormal_law(double alpha, double sigma, int t_cap, bool allow_lump = false) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("lognormal law needs alpha > 0");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("lognormal law needs sigma >= 0");
  if (t_cap < static_cast<int>(std::ceil(alpha))) throw InvalidArgument("t_cap must be >= ceil(alpha)");
  std::vector<double> probs(static_cast<std::size_t>(t_cap), 0.0);
  if (sigma == 0.0) {
    probs[static_cast<std::size_t>(std::ceil(alpha)) - 1] = 1.0;
    return TransmissionLaw(std::move(probs));
  }
  // P(T <= k) = Phi((ln(k / alpha) + sigma^2 / 2) / sigma).
  auto cdf = [&](int k) {
    const double z = (std::log(k / alpha) + 0.5 * sigma * sigma) / sigma;
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
  };
  double prev = 0.0;
  for (int k = 1; k <= t_cap; ++k) {
    const double c = cdf(k);
    probs[static_cast<std::size_t>(k - 1)] = c - prev;
    prev = c;
  }
  const double tail = 1.0 - prev;
  if (tail > 1e-9 && !allow_lump)
    throw InvalidArgument("t_cap " + std::to_string(t_cap) + " leaves mass " + csv::format_double(tail) +
                          " uncovered");
  probs.back() += tail;
  double s = 0.0;
  for (double p : probs) s += p;
  for (double& p : probs) p /= s;
  return TransmissionLaw(std::move(probs), tail);
}

struct SimConfig {
  std::int64_t horizon = 100000;
  std::uint64_t seed = 1;
  /// Slots excluded from the averages; negative picks 10 * max delta_bound.
  std::int64_t warmup = -1;
  /// Per-source initial AoI; empty picks ceil(E[T]).
  std::vector<std::int64_t> initial_aoi;
  /// Number of leading slots recorded in SimTrace::records.
  std::int64_t trace_slots = 0;
};

struct TraceRecord {
  std::int64_t t;
  std::size_t source;
  std::int64_t delta;
  std::int64_t d;
  int action;  // -1 wait or busy, otherwise the buffer position sent
  double cost; // w * p(delta)
};

struct IntervalStats {
  std::int64_t count = 0;
  double sum = 0.0;
  double sumsq = 0.0;
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

struct SimTrace {
  double avg_cost = 0.0;
  std::vector<double> per_source_avg;
  double utilization = 0.0;  // busy channel-slots / (N * measured slots)
  std::int64_t measured_slots = 0;
  std::int64_t transmissions = 0;
  std::vector<IntervalStats> inter_delivery;  // per source, deliveries after warmup
  std::vector<TraceRecord> records;
};

template <class P>
concept FleetPolicy = requires(P p, std::int64_t t, std::span<const SourceState> s, int idle, std::vector<Assignment>& out) {
  p.decide(t, s, idle, out);
};

inline std::int64_t default_warmup(const FleetSpec& fleet) {
  std::int64_t db = 1;
  for (const auto& s : fleet.sources) db = std::max(db, s.penalty.delta_bound());
  return 10 * db;
}

template <FleetPolicy Policy>
SimTrace run_fleet(const SimConfig& cfg, const FleetSpec& fleet, Policy& policy) {
  const std::size_t M = fleet.sources.size();
  const std::int64_t warmup = cfg.warmup >= 0 ? cfg.warmup : default_warmup(fleet);
  if (cfg.horizon <= warmup) throw InvalidArgument("horizon must exceed warmup");
  if (fleet.channels < 0) throw InvalidArgument("negative channel count");
  if (!cfg.initial_aoi.empty() && cfg.initial_aoi.size() != M)
    throw InvalidArgument("initial_aoi needs one entry per source");

  std::vector<SourceState> st(M);
  std::vector<RngStream> rng;
  std::vector<std::int64_t> last_delivery(M, -1);
  std::vector<int> sent(M, -1);
  SimTrace tr;
  tr.per_source_avg.assign(M, 0.0);
  tr.inter_delivery.assign(M, {});
  for (std::size_t m = 0; m < M; ++m) {
    rng.push_back(RngStream::for_source(cfg.seed, m, StreamPurpose::transmission));
    st[m].delta = cfg.initial_aoi.empty() ? static_cast<std::int64_t>(std::ceil(fleet.sources[m].law.mean()))
                                          : cfg.initial_aoi[m];
    if (st[m].delta < 1) throw InvalidArgument("initial AoI must be >= 1");
  }

  std::vector<Assignment> out;
  std::vector<std::uint8_t> chosen(M, 0);
  int busy = 0;
  double total = 0.0, busy_slots = 0.0;
  for (std::int64_t t = 0; t < cfg.horizon; ++t) {
    for (std::size_t m = 0; m < M; ++m) {
      auto& s = st[m];
      if (s.busy() && --s.remaining == 0) {
        // Delivery. d counts the service slots before this one, so d + 1 = T.
        s.delta = s.d + 1 + s.in_flight_b;
        s.d = 0;
        --busy;
        if (t >= warmup) {
          if (last_delivery[m] >= warmup) {
            auto& iv = tr.inter_delivery[m];
            const auto gap = static_cast<double>(t - last_delivery[m]);
            ++iv.count;
            iv.sum += gap;
            iv.sumsq += gap * gap;
          }
        }
        last_delivery[m] = t;
      } else {
        if (t > 0) ++s.delta;
        if (s.busy()) ++s.d;
      }
    }

    const int idle = fleet.channels - busy;
    out.clear();
    policy.decide(t, std::span<const SourceState>(st), idle, out);
    if (static_cast<int>(out.size()) > idle) throw Error("policy assigned more sources than idle channels");
    std::fill(sent.begin(), sent.end(), -1);
    for (const auto& a : out) {
      if (a.source >= M) throw Error("policy assigned an unknown source");
      auto& s = st[a.source];
      if (s.busy()) throw Error("policy scheduled a source that is in service");
      if (chosen[a.source]) throw Error("policy scheduled a source twice in one slot");
      if (a.b < 0) throw Error("negative buffer position");
      chosen[a.source] = 1;
      const int T = fleet.sources[a.source].law.sample(rng[a.source].uniform());
      s.remaining = T;
      s.d = 0;
      s.in_flight_b = a.b;
      sent[a.source] = a.b;
      ++busy;
      ++tr.transmissions;
    }
    for (const auto& a : out) chosen[a.source] = 0;

    if (t >= warmup) {
      double slot = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        const auto& src = fleet.sources[m];
        const double c = src.w * src.penalty.at(st[m].delta);
        slot += c;
        tr.per_source_avg[m] += c;
        if (t - warmup < cfg.trace_slots) tr.records.push_back({t, m, st[m].delta, st[m].d, sent[m], c});
      }
      total += slot;
      busy_slots += busy;
    }
  }
  tr.measured_slots = cfg.horizon - warmup;
  const auto n = static_cast<double>(tr.measured_slots);
  tr.avg_cost = total / n;
  for (auto& v : tr.per_source_avg) v /= n;
  tr.utilization = fleet.channels > 0 ? busy_slots / (n * fleet.channels) : 0.0;
  return tr;
}

template <FleetPolicy Policy>
SimTrace run_fleet(const SimConfig& cfg, const FleetSpec& fleet, Policy&& policy) {
  Policy& p = policy;
  return run_fleet(cfg, fleet, p);
}

/// Adapts a single-source decision function (t, state) -> optional<b>.
template <class Fn>
class SingleAdapter {
 public:
  explicit SingleAdapter(Fn fn) : fn_(std::move(fn)) {}
  void decide(std::int64_t t, std::span<const SourceState> s, int idle, std::vector<Assignment>& out) {
    // Called every slot (so stateful policies see time pass); the engine
    // rejects a send on a busy channel.
    if (auto b = fn_(t, s[0]); b && idle > 0) out.push_back({0, *b});
  }

 private:
  Fn fn_;
};

template <class Fn>
SimTrace run_single(const SimConfig& cfg, const SourceSpec& src, Fn&& policy) {
  FleetSpec fleet{{src}, 1};
  SingleAdapter<std::decay_t<Fn>> adapter(std::forward<Fn>(policy));
  return run_fleet(cfg, fleet, adapter);
}

/// Threshold policy from a card as a single-source decision function.
inline auto card_policy(const PolicyCard& card) {
  return [card](std::int64_t, const SourceState& s) { return single_policy_decide(card, s.delta, !s.busy()); };
}

/// Periodic generation into a FIFO of capacity B, served first come first
/// served. Generation happens before service within a slot.
class PeriodicFcfsPolicy {
 public:
  PeriodicFcfsPolicy(std::int64_t period, std::size_t capacity) : period_(period), capacity_(capacity) {
    if (period < 1) throw InvalidArgument("generation period must be >= 1");
    if (capacity < 1) throw InvalidArgument("queue capacity must be >= 1");
  }

  std::optional<int> operator()(std::int64_t t, const SourceState& s) {
    if (t % period_ == 0) {
      ++offered_;
      if (queue_.size() < capacity_) {
        queue_.push_back(t);
        ++admitted_;
      } else {
        ++dropped_;
      }
    }
    if (s.busy() || queue_.empty()) return std::nullopt;
    const std::int64_t g = queue_.front();
    queue_.pop_front();
    return static_cast<int>(t - g);
  }

  std::int64_t offered() const { return offered_; }
  std::int64_t admitted() const { return admitted_; }
  std::int64_t dropped() const { return dropped_; }

 private:
  std::int64_t period_;
  std::size_t capacity_;
  std::deque<std::int64_t> queue_;
  std::int64_t offered_ = 0, admitted_ = 0, dropped_ = 0;
};

/// Dual iteration with each rho_m(lambda_k) replaced by the busy fraction of a
/// `slots`-long simulation of the decoupled policy. Slower and noisier than
/// dual_solve; kept for fidelity experiments.
inline DualResult dual_solve_simulated(const FleetSpec& fleet, double lambda0, double alpha, int iters,
                                       std::int64_t slots, std::uint64_t seed) {
  if (iters < 1) throw InvalidArgument("dual iterations must be >= 1");
  if (fleet.channels < 1) throw InvalidArgument("fleet needs at least one channel");
  if (slots < 1) throw InvalidArgument("simulated dual needs slots >= 1");
  FleetModels models(fleet);
  double scale = 0.0;
  for (const auto& s : fleet.sources) scale = std::max(scale, s.w * s.penalty.bound());
  const double guard = 1e6 * std::max(scale, 1e-300);
  const double n = fleet.channels;
  auto occupancy = [&](double lambda, int k) {
    double occ = 0.0;
    for (std::size_t j = 0; j < models.distinct(); ++j) {
      auto card = optimal_buffer(models.model(j), models.spec(j).B, lambda);
      SimConfig cfg;
      cfg.horizon = slots;
      cfg.warmup = 0;
      cfg.seed = mix64(seed ^ ((static_cast<std::uint64_t>(k) << 20) | j));
      occ += static_cast<double>(models.count(j)) * run_single(cfg, models.spec(j), card_policy(card)).utilization;
    }
    return occ;
  };
  DualResult r;
  double lambda = lambda0;
  for (int k = 1; k <= iters; ++k) {
    const double occ = occupancy(lambda, k);
    r.trace.push_back({k, lambda, occ});
    const double c0 = lambda <= 0.0 ? n : 0.0;
    lambda += (alpha / k) * (occ + c0 - n);
    if (!std::isfinite(lambda) || std::abs(lambda) > guard) throw NumericalFailure("dual iteration diverged");
  }
  r.lambda = std::max(lambda, 0.0);
  r.occupancy = occupancy(r.lambda, iters + 1);
  return r;
}

inline std::string trace_csv(const SimTrace& tr) {
  std::ostringstream out;
  out << "t,source,delta,d,action,cost\n";
  for (const auto& r : tr.records)
    out << r.t << "," << r.source << "," << r.delta << "," << r.d << "," << r.action << ","
        << csv::format_double(r.cost) << "\n";
  return out.str();
}

struct AggregateRow {
  std::string policy;
  std::uint64_t seed;
  std::int64_t horizon;
  double avg_cost;
  double utilization;
};

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "policy,seed,horizon,avg_cost,utilization\n";
  for (const auto& r : rows)
    out << r.policy << "," << r.seed << "," << r.horizon << "," << csv::format_double(r.avg_cost) << ","
        << csv::format_double(r.utilization) << "\n";
  return out.str();
}

/// Mean and standard error of replicated averages.
struct Summary {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(v / static_cast<double>(s.n - 1) / static_cast<double>(s.n));
  }
  return s;
}

}  // namespace aoisched
