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

// JSON experiment configs and the command implementations behind the CLI.
// Every command is a pure function of (config, seed): replications may run on
// several threads but results are collected by index and written atomically.

#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aoisched/csv.hpp"
#include "aoisched/errors.hpp"
#include "aoisched/oracle.hpp"
#include "aoisched/penalty.hpp"
#include "aoisched/sched_fleet.hpp"
#include "aoisched/sched_single.hpp"
#include "aoisched/simkit.hpp"

namespace aoisched::experiment {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Source locations for JSON pointers, so schema errors can name a line.

namespace detail {

/// Line of every object key and array element, keyed by JSON pointer.
/// Assumes `text` already parsed successfully.
inline std::map<std::string, int> pointer_lines(const std::string& text) {
  struct Frame {
    bool object;
    std::string base;
    std::string key;
    long index = -1;
  };
  std::map<std::string, int> out;
  std::vector<Frame> stack;
  int line = 1;
  bool expect_key = false;
  auto escape = [](const std::string& k) {
    std::string r;
    for (char c : k) {
      if (c == '~') r += "~0";
      else if (c == '/') r += "~1";
      else r += c;
    }
    return r;
  };
  auto value_start = [&]() -> std::string {
    if (stack.empty()) return "";
    auto& f = stack.back();
    if (!f.object) {
      ++f.index;
      auto p = f.base + "/" + std::to_string(f.index);
      out.emplace(p, line);
      return p;
    }
    return f.base + "/" + escape(f.key);
  };
  out.emplace("", 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
    } else if (c == '"') {
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) {
          const char e = text[++i];
          s += e == 'n' ? '\n' : e == 't' ? '\t' : e;
        } else {
          s += text[i];
        }
      }
      if (expect_key) {
        stack.back().key = s;
        out.emplace(stack.back().base + "/" + escape(s), line);
        expect_key = false;
      } else {
        value_start();
      }
    } else if (c == '{' || c == '[') {
      auto p = value_start();
      stack.push_back({c == '{', p, "", -1});
      expect_key = c == '{';
    } else if (c == '}' || c == ']') {
      stack.pop_back();
      expect_key = false;
    } else if (c == ',') {
      expect_key = !stack.empty() && stack.back().object;
    } else if (c == ':' || std::isspace(static_cast<unsigned char>(c))) {
      // separators
    } else {
      // Scalar literal: consume it.
      value_start();
      while (i + 1 < text.size() && !std::strchr(",]}\n \t\r", text[i + 1])) ++i;
    }
  }
  return out;
}

}  // namespace detail

/// Reads one JSON object, rejecting unknown keys and reporting file:line.
class Node {
 public:
  Node(const Json& j, std::string ptr, const std::string* file, const std::map<std::string, int>* lines)
      : j_(&j), ptr_(std::move(ptr)), file_(file), lines_(lines) {}

  [[noreturn]] void fail(const std::string& msg, const std::string& ptr = {}) const {
    const std::string p = ptr.empty() ? ptr_ : ptr;
    int line = 1;
    for (std::string q = p;; q = q.substr(0, q.rfind('/'))) {
      if (auto it = lines_->find(q); it != lines_->end()) {
        line = it->second;
        break;
      }
      if (q.empty()) break;
    }
    throw ParseError(*file_ + ":" + std::to_string(line) + ": " + (p.empty() ? "/" : p) + ": " + msg);
  }

  const Json& json() const { return *j_; }
  const std::string& pointer() const { return ptr_; }
  const std::string& file() const { return *file_; }

  void require_object(std::initializer_list<const char*> allowed) const {
    if (!j_->is_object()) fail("expected an object");
    for (const auto& [k, v] : j_->items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) fail("unknown key '" + k + "'", ptr_ + "/" + k);
    }
  }

  bool has(const char* key) const { return j_->contains(key); }

  Node child(const char* key) const {
    if (!has(key)) fail(std::string("missing required key '") + key + "'");
    return Node(j_->at(key), ptr_ + "/" + key, file_, lines_);
  }

  std::vector<Node> elements(const char* key) const {
    auto c = child(key);
    if (!c.json().is_array()) c.fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < c.json().size(); ++i)
      out.emplace_back(c.json()[i], c.pointer() + "/" + std::to_string(i), file_, lines_);
    return out;
  }

  double number(const char* key) const {
    auto c = child(key);
    if (!c.json().is_number()) c.fail("expected a number");
    return c.json().get<double>();
  }
  double number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

  long long integer(const char* key) const {
    auto c = child(key);
    if (!c.json().is_number_integer()) c.fail("expected an integer");
    return c.json().get<long long>();
  }
  long long integer(const char* key, long long fallback) const { return has(key) ? integer(key) : fallback; }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    auto c = child(key);
    if (!c.json().is_number_unsigned()) c.fail("expected a non-negative integer");
    return c.json().get<std::uint64_t>();
  }

  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    auto c = child(key);
    if (!c.json().is_boolean()) c.fail("expected true or false");
    return c.json().get<bool>();
  }

  std::string string(const char* key) const {
    auto c = child(key);
    if (!c.json().is_string()) c.fail("expected a string");
    return c.json().get<std::string>();
  }

  std::vector<double> numbers(const char* key) const {
    std::vector<double> v;
    for (const auto& e : elements(key)) {
      if (!e.json().is_number()) e.fail("expected a number");
      v.push_back(e.json().get<double>());
    }
    return v;
  }

  std::vector<long long> integers(const char* key) const {
    std::vector<long long> v;
    for (const auto& e : elements(key)) {
      if (!e.json().is_number_integer()) e.fail("expected an integer");
      v.push_back(e.json().get<long long>());
    }
    return v;
  }

  /// Runs `fn`, re-anchoring any library error at this node.
  template <class Fn>
  auto guarded(Fn&& fn) const -> decltype(fn()) {
    try {
      return fn();
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }
  }

 private:
  const Json* j_;
  std::string ptr_;
  const std::string* file_;
  const std::map<std::string, int>* lines_;
};

// ---------------------------------------------------------------------------
// Config sections

struct PenaltyConfig {
  std::string kind;  // csv | table | ar | reaction
  std::filesystem::path path;
  std::vector<double> values;
  ArModel ar;
  ReactionSystem reaction;
  std::size_t delta_max = 0;
  PenaltyCurve curve;  // built once while parsing

  const PenaltyCurve& build() const { return curve; }

  PenaltyCurve make() const {
    if (kind == "csv") return penalty_from_csv(path);
    if (kind == "table") return PenaltyCurve(values);
    if (kind == "ar") return ar_mmse_curve(ar, delta_max);
    return reaction_curve(reaction, delta_max);
  }
};

struct LawConfig {
  std::string kind;  // constant | pmf | lognormal
  int t = 1;
  std::vector<double> probs;
  double alpha = 1.0, sigma = 0.0;
  int t_cap = 0;
  bool allow_lump = false;
  std::vector<double> sigma_sweep;

  TransmissionLaw build(std::optional<double> sigma_override = std::nullopt) const {
    if (kind == "constant") return TransmissionLaw::constant(t);
    if (kind == "pmf") return TransmissionLaw(probs);
    return lognormal_law(alpha, sigma_override.value_or(sigma), t_cap, allow_lump);
  }
};

struct FleetClassConfig {
  int count = 1;
  double w = 1.0;
  int B = 1;
  PenaltyConfig penalty;
  LawConfig law;
};

struct FleetConfig {
  std::vector<FleetClassConfig> classes;
  int channels = 1;
  std::vector<int> scaling{1};

  FleetSpec build() const {
    FleetSpec f;
    f.channels = channels;
    for (const auto& c : classes) {
      SourceSpec s{c.w, c.B, c.penalty.build(), c.law.build()};
      for (int k = 0; k < c.count; ++k) f.sources.push_back(s);
    }
    return f;
  }
};

struct SimSection {
  std::int64_t horizon = 100000;
  std::uint64_t seed = 1;
  std::int64_t warmup = -1;
  int replications = 20;
  std::int64_t trace_slots = 0;
};

struct DualSection {
  double lambda0 = 0.0;
  double alpha = 1.0;
  int iters = 500;
  bool simulated = false;
  std::int64_t slots = 10000;
};

struct OracleSpecConfig {
  std::string id;
  PenaltyConfig penalty;
  LawConfig law;
  int B = 1;
  double w = 1.0;
  double lambda = 0.0;
};

struct ExperimentConfig {
  std::string file;
  std::optional<PenaltyConfig> penalty;
  std::optional<LawConfig> law;
  double w = 1.0;
  int B = 1;
  std::int64_t period = 0;  // periodic baseline; 0 picks ceil(E[T])
  std::optional<FleetConfig> fleet;
  SimSection sim;
  DualSection dual;
  std::vector<double> oracle_lambdas{0.0};
  std::vector<OracleSpecConfig> oracle_specs;
};

namespace detail {

inline PenaltyConfig parse_penalty(const Node& n, const std::filesystem::path& base_dir) {
  PenaltyConfig p;
  if (!n.json().is_object()) n.fail("expected an object");
  p.kind = n.string("kind");
  if (p.kind == "csv") {
    n.require_object({"kind", "path"});
    p.path = base_dir / n.string("path");
  } else if (p.kind == "table") {
    n.require_object({"kind", "values"});
    p.values = n.numbers("values");
  } else if (p.kind == "ar") {
    n.require_object({"kind", "coeffs", "sigma_w2", "sigma_n2", "u", "delta_max"});
    p.delta_max = static_cast<std::size_t>(n.integer("delta_max", 200));
    n.guarded([&] {
      p.ar = ArModel(n.numbers("coeffs"), n.number("sigma_w2"), n.number("sigma_n2", 0.0),
                     static_cast<int>(n.integer("u", 1)));
      return 0;
    });
  } else if (p.kind == "reaction") {
    n.require_object({"kind", "chain", "f", "y_size", "d", "loss", "alpha", "y_labels", "delta_max"});
    auto& r = p.reaction;
    for (const auto& row : n.elements("chain")) {
      if (!row.json().is_array()) row.fail("expected an array of probabilities");
      std::vector<double> v;
      for (const auto& x : row.json()) {
        if (!x.is_number()) row.fail("expected numbers");
        v.push_back(x.get<double>());
      }
      r.chain.push_back(std::move(v));
    }
    for (auto y : n.integers("f")) {
      if (y < 0) n.fail("f entries must be >= 0", n.pointer() + "/f");
      r.f.push_back(static_cast<std::size_t>(y));
    }
    const auto ys = n.integer("y_size"), d = n.integer("d");
    if (ys < 1) n.fail("y_size must be >= 1", n.pointer() + "/y_size");
    if (d < 0) n.fail("d must be >= 0", n.pointer() + "/d");
    r.y_size = static_cast<std::size_t>(ys);
    r.d = static_cast<std::size_t>(d);
    if (n.has("y_labels")) r.y_labels = n.numbers("y_labels");
    n.child("loss").guarded([&] {
      r.loss = parse_loss(n.string("loss"), n.number("alpha", 2.0));
      return 0;
    });
    p.delta_max = static_cast<std::size_t>(n.integer("delta_max", 60));
    n.guarded([&] {
      r.validate();
      return 0;
    });
  } else {
    n.fail("unknown penalty kind '" + p.kind + "' (csv, table, ar, reaction)", n.pointer() + "/kind");
  }
  if ((p.kind == "ar" || p.kind == "reaction") && p.delta_max < 1)
    n.fail("delta_max must be >= 1", n.pointer() + "/delta_max");
  p.curve = n.guarded([&] { return p.make(); });
  return p;
}

inline LawConfig parse_law(const Node& n) {
  LawConfig l;
  if (!n.json().is_object()) n.fail("expected an object");
  l.kind = n.string("kind");
  if (l.kind == "constant") {
    n.require_object({"kind", "t"});
    l.t = static_cast<int>(n.integer("t"));
  } else if (l.kind == "pmf") {
    n.require_object({"kind", "probs"});
    l.probs = n.numbers("probs");
  } else if (l.kind == "lognormal") {
    n.require_object({"kind", "alpha", "sigma", "t_cap", "allow_lump", "sigma_sweep"});
    l.alpha = n.number("alpha");
    l.sigma = n.number("sigma", 0.0);
    l.t_cap = static_cast<int>(n.integer("t_cap"));
    l.allow_lump = n.boolean("allow_lump", false);
    if (n.has("sigma_sweep")) l.sigma_sweep = n.numbers("sigma_sweep");
    for (double s : l.sigma_sweep) n.guarded([&] { return l.build(s); });
  } else {
    n.fail("unknown law kind '" + l.kind + "' (constant, pmf, lognormal)", n.pointer() + "/kind");
  }
  n.guarded([&] { return l.build(); });
  return l;
}

inline void positive_int(const Node& n, const char* key, long long v, long long min = 1) {
  if (v < min) n.fail(std::string(key) + " must be >= " + std::to_string(min), n.pointer() + "/" + key);
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text, const std::string& file,
                                     const std::filesystem::path& base_dir = ".") {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ParseError(file + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  const auto lines = detail::pointer_lines(text);
  Node top(root, "", &file, &lines);
  top.require_object({"penalty", "law", "source", "single", "fleet", "sim", "dual", "oracle"});

  ExperimentConfig c;
  c.file = file;
  if (top.has("penalty")) c.penalty = detail::parse_penalty(top.child("penalty"), base_dir);
  if (top.has("law")) c.law = detail::parse_law(top.child("law"));
  if (top.has("source")) {
    auto s = top.child("source");
    s.require_object({"w", "B"});
    c.w = s.number("w", 1.0);
    if (!(c.w > 0)) s.fail("w must be positive", s.pointer() + "/w");
    c.B = static_cast<int>(s.integer("B", 1));
    detail::positive_int(s, "B", c.B);
  }
  if (top.has("single")) {
    auto s = top.child("single");
    s.require_object({"period"});
    c.period = s.integer("period", 0);
    detail::positive_int(s, "period", c.period, 0);
  }
  if (top.has("fleet")) {
    auto f = top.child("fleet");
    f.require_object({"sources", "N", "scaling"});
    FleetConfig fc;
    for (const auto& e : f.elements("sources")) {
      e.require_object({"count", "w", "B", "penalty", "law"});
      FleetClassConfig k;
      k.count = static_cast<int>(e.integer("count", 1));
      detail::positive_int(e, "count", k.count, 0);
      k.w = e.number("w", 1.0);
      if (!(k.w > 0)) e.fail("w must be positive", e.pointer() + "/w");
      k.B = static_cast<int>(e.integer("B", 1));
      detail::positive_int(e, "B", k.B);
      k.penalty = detail::parse_penalty(e.child("penalty"), base_dir);
      k.law = detail::parse_law(e.child("law"));
      fc.classes.push_back(std::move(k));
    }
    fc.channels = static_cast<int>(f.integer("N"));
    detail::positive_int(f, "N", fc.channels);
    if (f.has("scaling")) {
      fc.scaling.clear();
      for (auto r : f.integers("scaling")) {
        detail::positive_int(f, "scaling", r);
        fc.scaling.push_back(static_cast<int>(r));
      }
      if (fc.scaling.empty()) f.fail("scaling needs at least one factor", f.pointer() + "/scaling");
    }
    c.fleet = std::move(fc);
  }
  if (top.has("sim")) {
    auto s = top.child("sim");
    s.require_object({"horizon", "seed", "warmup", "replications", "trace_slots"});
    c.sim.horizon = s.integer("horizon", c.sim.horizon);
    c.sim.seed = s.unsigned_integer("seed", c.sim.seed);
    c.sim.warmup = s.integer("warmup", c.sim.warmup);
    c.sim.replications = static_cast<int>(s.integer("replications", c.sim.replications));
    c.sim.trace_slots = s.integer("trace_slots", 0);
    detail::positive_int(s, "horizon", c.sim.horizon);
    detail::positive_int(s, "replications", c.sim.replications);
    detail::positive_int(s, "trace_slots", c.sim.trace_slots, 0);
    if (c.sim.warmup >= c.sim.horizon) s.fail("warmup must be below horizon", s.pointer() + "/warmup");
  }
  if (top.has("dual")) {
    auto d = top.child("dual");
    d.require_object({"lambda0", "alpha", "iters", "simulated", "slots"});
    c.dual.lambda0 = d.number("lambda0", c.dual.lambda0);
    c.dual.alpha = d.number("alpha", c.dual.alpha);
    c.dual.iters = static_cast<int>(d.integer("iters", c.dual.iters));
    c.dual.simulated = d.boolean("simulated", false);
    c.dual.slots = d.integer("slots", c.dual.slots);
    detail::positive_int(d, "iters", c.dual.iters);
    detail::positive_int(d, "slots", c.dual.slots);
    if (c.dual.alpha < 0) d.fail("alpha must be >= 0", d.pointer() + "/alpha");
  }
  if (top.has("oracle")) {
    auto o = top.child("oracle");
    o.require_object({"lambdas", "specs"});
    if (o.has("lambdas")) c.oracle_lambdas = o.numbers("lambdas");
    if (o.has("specs"))
      for (const auto& e : o.elements("specs")) {
        e.require_object({"id", "penalty", "law", "B", "w", "lambda"});
        OracleSpecConfig s;
        s.id = e.string("id");
        s.penalty = detail::parse_penalty(e.child("penalty"), base_dir);
        s.law = detail::parse_law(e.child("law"));
        s.B = static_cast<int>(e.integer("B", 1));
        detail::positive_int(e, "B", s.B);
        s.w = e.number("w", 1.0);
        s.lambda = e.number("lambda", 0.0);
        c.oracle_specs.push_back(std::move(s));
      }
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Commands

struct RunOptions {
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;  // overrides sim.seed
  unsigned threads = 1;
  std::function<void(const std::string&)> log = [](const std::string&) {};
};

struct CommandResult {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> violations;  // failed internal invariants
};

/// Runs fn(0..n-1) on up to `threads` workers; rethrows the first failure.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(threads, 1u), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace detail {

inline void write(CommandResult& r, const RunOptions& o, const std::string& name, const std::string& content) {
  std::filesystem::create_directories(o.out);
  const auto path = o.out / name;
  csv::write_atomic(path, content);
  r.files.push_back(path);
  o.log("wrote " + path.string());
}

template <class T>
const T& need(const std::optional<T>& v, const std::string& file, const char* section, const char* command) {
  if (!v) throw ParseError(file + ":1: the " + std::string(command) + " command needs a '" + section + "' section");
  return *v;
}

inline SimConfig sim_config(const SimSection& s, std::uint64_t seed) {
  SimConfig c;
  c.horizon = s.horizon;
  c.seed = seed;
  c.warmup = s.warmup;
  return c;
}

}  // namespace detail

/// Replication k of a run seeded with `seed` uses seed + k; per-source
/// streams are then split inside the engine.
inline std::uint64_t replication_seed(std::uint64_t seed, int k) { return seed + static_cast<std::uint64_t>(k); }

inline CommandResult cmd_curve(const ExperimentConfig& c, const RunOptions& o) {
  CommandResult r;
  const auto& pc = detail::need(c.penalty, c.file, "penalty", "curve");
  auto p = pc.build();
  for (const auto& w : p.warnings()) o.log("warning: " + w);
  detail::write(r, o, "curve.csv", penalty_to_csv(p));
  if (c.law) {
    SingleSourceModel m(p, c.law->build(), c.w);
    detail::write(r, o, "gamma.csv", gamma_to_csv(m.gamma()));
  }
  return r;
}

inline CommandResult cmd_single(const ExperimentConfig& c, const RunOptions& o) {
  CommandResult r;
  const auto p = detail::need(c.penalty, c.file, "penalty", "single").build();
  const auto& lc = detail::need(c.law, c.file, "law", "single");
  const std::uint64_t seed = o.seed.value_or(c.sim.seed);

  struct Case {
    std::optional<double> sigma;
    TransmissionLaw law;
  };
  std::vector<Case> cases;
  if (lc.kind == "lognormal" && !lc.sigma_sweep.empty())
    for (double s : lc.sigma_sweep) cases.push_back({s, lc.build(s)});
  else
    cases.push_back({lc.kind == "lognormal" ? std::optional<double>(lc.sigma) : std::nullopt, lc.build()});

  const std::vector<std::string> names{"zero_wait", "optimal_gaw", "optimal_buffer", "periodic"};
  const int reps = c.sim.replications;
  struct Job {
    std::size_t cs;
    std::size_t policy;
    int rep;
  };
  std::vector<Job> jobs;
  std::vector<PolicyCard> gaw, buf;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    SingleSourceModel m(p, cases[k].law, c.w);
    gaw.push_back(optimal_buffer(m, 1, 0.0));
    buf.push_back(optimal_buffer(m, c.B, 0.0));
    if (buf.back().beta > gaw.back().beta + 1e-12)
      r.violations.push_back("optimal-buffer value exceeds optimal-GAW value");
    for (const auto* card : {&gaw.back(), &buf.back()})
      if (!card->never_send && std::abs(card->j_at_beta) > 1e-8)
        r.violations.push_back("threshold root does not certify J = 0");
    for (std::size_t pol = 0; pol < names.size(); ++pol)
      for (int rep = 0; rep < reps; ++rep) jobs.push_back({k, pol, rep});
  }
  std::vector<double> cost(jobs.size()), util(jobs.size());
  std::string trace;
  parallel_for(jobs.size(), o.threads, [&](std::size_t i) {
    const auto& j = jobs[i];
    const auto& law = cases[j.cs].law;
    SourceSpec src{c.w, std::max(c.B, 1), p, law};
    auto cfg = detail::sim_config(c.sim, replication_seed(seed, j.rep));
    const bool traced = j.cs == 0 && j.policy == 2 && j.rep == 0 && c.sim.trace_slots > 0;
    if (traced) cfg.trace_slots = c.sim.trace_slots;
    SimTrace t;
    switch (j.policy) {
      case 0:
        t = run_single(cfg, src, [](std::int64_t, const SourceState& s) -> std::optional<int> {
          if (s.busy()) return std::nullopt;
          return 0;
        });
        break;
      case 1: t = run_single(cfg, src, card_policy(gaw[j.cs])); break;
      case 2: t = run_single(cfg, src, card_policy(buf[j.cs])); break;
      default: {
        const auto period = c.period > 0 ? c.period : static_cast<std::int64_t>(std::ceil(law.mean()));
        t = run_single(cfg, src, PeriodicFcfsPolicy(period, static_cast<std::size_t>(c.B)));
      }
    }
    cost[i] = t.avg_cost;
    util[i] = t.utilization;
    if (traced) trace = trace_csv(t);
  });

  std::ostringstream summary;
  summary << "policy,sigma,avg_cost,se,n,analytic\n";
  std::vector<AggregateRow> runs;
  for (std::size_t k = 0; k < cases.size(); ++k)
    for (std::size_t pol = 0; pol < names.size(); ++pol) {
      std::vector<double> xs;
      for (std::size_t i = 0; i < jobs.size(); ++i)
        if (jobs[i].cs == k && jobs[i].policy == pol) {
          xs.push_back(cost[i]);
          std::string label = names[pol];
          if (cases[k].sigma && cases.size() > 1) label += "[sigma=" + csv::format_double(*cases[k].sigma) + "]";
          runs.push_back({label, replication_seed(seed, jobs[i].rep), c.sim.horizon, cost[i], util[i]});
        }
      const auto s = summarize(xs);
      summary << names[pol] << "," << (cases[k].sigma ? csv::format_double(*cases[k].sigma) : "") << ","
              << csv::format_double(s.mean) << "," << csv::format_double(s.se) << "," << s.n << ",";
      if (pol == 1) summary << csv::format_double(gaw[k].beta);
      if (pol == 2) summary << csv::format_double(buf[k].beta);
      summary << "\n";
    }
  detail::write(r, o, "single.csv", summary.str());
  detail::write(r, o, "single_runs.csv", aggregate_csv(runs));
  detail::write(r, o, "card.csv", card_to_text(buf.front()));
  detail::write(r, o, "gamma.csv", gamma_to_csv(buf.front().gamma));
  if (!trace.empty()) detail::write(r, o, "trace.csv", trace);
  return r;
}

inline DualResult solve_dual(const ExperimentConfig& c, const FleetSpec& fleet, std::uint64_t seed) {
  const auto& d = c.dual;
  return d.simulated ? dual_solve_simulated(fleet, d.lambda0, d.alpha, d.iters, d.slots, seed)
                     : dual_solve(fleet, d.lambda0, d.alpha, d.iters);
}

inline CommandResult cmd_dual(const ExperimentConfig& c, const RunOptions& o) {
  CommandResult r;
  const auto fleet = detail::need(c.fleet, c.file, "fleet", "dual").build();
  const auto d = solve_dual(c, fleet, o.seed.value_or(c.sim.seed));
  o.log("lambda* = " + csv::format_double(d.lambda) + ", occupancy " + csv::format_double(d.occupancy));
  detail::write(r, o, "dual_trace.csv", dual_trace_csv(d));
  std::ostringstream res;
  res << "lambda,occupancy,channels,lower_bound\n"
      << csv::format_double(d.lambda) << "," << csv::format_double(d.occupancy) << "," << fleet.channels << ","
      << csv::format_double(relaxed_lower_bound(fleet, d.lambda)) << "\n";
  detail::write(r, o, "dual_result.csv", res.str());
  if (!std::isfinite(d.lambda) || !std::isfinite(d.occupancy)) r.violations.push_back("dual result is not finite");
  return r;
}

/// The fleet dual of an r-fold replicated fleet is r times the base dual, so
/// lambda* is solved once on the base fleet and shared by every scaling.
inline CommandResult cmd_fleet(const ExperimentConfig& c, const RunOptions& o) {
  CommandResult r;
  const auto& fc = detail::need(c.fleet, c.file, "fleet", "fleet");
  const auto base = fc.build();
  const std::uint64_t seed = o.seed.value_or(c.sim.seed);
  const auto d = solve_dual(c, base, seed);
  o.log("lambda* = " + csv::format_double(d.lambda) + ", occupancy " + csv::format_double(d.occupancy));
  detail::write(r, o, "dual_trace.csv", dual_trace_csv(d));

  {
    FleetModels models(base);
    std::vector<WhittleTable> tables;
    for (std::size_t m = 0; m < base.sources.size(); ++m)
      tables.emplace_back(models.model(models.of(m)), base.sources[m].B);
    detail::write(r, o, "whittle_tables.csv", whittle_tables_csv(tables));
  }

  // Simulated policies; the upper_bound row is the largest of their means.
  const std::vector<std::string> names{"index_policy", "whittle_gaw", "maf", "lower_bound"};
  struct Scale {
    int r;
    FleetSpec fleet;
    FleetPlan plan;
    double bound;
  };
  std::vector<Scale> scales;
  for (int k : fc.scaling) {
    auto f = base.scaled(k);
    const double lb = relaxed_lower_bound(f, d.lambda);
    scales.push_back({k, f, make_fleet_plan(f, d.lambda), lb});
  }
  struct Job {
    std::size_t scale, policy;
    int rep;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < scales.size(); ++s)
    for (std::size_t p = 0; p < names.size(); ++p)
      for (int rep = 0; rep < c.sim.replications; ++rep) jobs.push_back({s, p, rep});
  std::vector<double> cost(jobs.size());
  parallel_for(jobs.size(), o.threads, [&](std::size_t i) {
    const auto& j = jobs[i];
    const auto& sc = scales[j.scale];
    const auto cfg = detail::sim_config(c.sim, replication_seed(seed, j.rep));
    switch (j.policy) {
      case 0: cost[i] = run_fleet(cfg, sc.fleet, IndexPolicy(sc.plan)).avg_cost; break;
      case 1: cost[i] = run_fleet(cfg, sc.fleet, WhittleGawPolicy(sc.plan)).avg_cost; break;
      case 2: cost[i] = run_fleet(cfg, sc.fleet, MafPolicy{}).avg_cost; break;
      default: {
        // The decoupled policy ignores the channel limit.
        FleetSpec relaxed = sc.fleet;
        relaxed.channels = static_cast<int>(relaxed.sources.size());
        cost[i] = run_fleet(cfg, relaxed, DecoupledPolicy(sc.plan)).avg_cost;
      }
    }
  });

  std::ostringstream out;
  out << "policy,r,avg_weighted_cost,se,n,lower_bound,gap_per_source\n";
  for (std::size_t s = 0; s < scales.size(); ++s) {
    const auto& sc = scales[s];
    const auto M = static_cast<double>(sc.fleet.sources.size());
    auto row = [&](const std::string& name, const Summary& sm) {
      out << name << "," << sc.r << "," << csv::format_double(sm.mean) << "," << csv::format_double(sm.se) << ","
          << sm.n << "," << csv::format_double(sc.bound) << "," << csv::format_double((sm.mean - sc.bound) / M)
          << "\n";
    };
    Summary upper{-std::numeric_limits<double>::infinity(), 0.0, 0};
    for (std::size_t p = 0; p < names.size(); ++p) {
      std::vector<double> xs;
      for (std::size_t i = 0; i < jobs.size(); ++i)
        if (jobs[i].scale == s && jobs[i].policy == p) xs.push_back(cost[i]);
      const auto sm = summarize(xs);
      row(names[p], sm);
      if (sm.mean > upper.mean) upper = sm;
      // Simulated means carry noise; flag only clear violations. The
      // decoupled policy meets the bound in expectation, so it is exempt.
      if (p < 3 && sm.mean + 3.0 * sm.se < sc.bound - 1e-9)
        r.violations.push_back(names[p] + " beats the relaxed lower bound at r=" + std::to_string(sc.r));
    }
    row("upper_bound", upper);
  }
  detail::write(r, o, "fleet.csv", out.str());
  return r;
}

inline CommandResult cmd_oracle(const ExperimentConfig& c, const RunOptions& o) {
  CommandResult r;
  std::vector<std::pair<std::string, SmdpSpec>> specs;
  for (const auto& s : c.oracle_specs)
    specs.push_back({s.id, SmdpSpec{s.penalty.build(), s.law.build(), s.B, s.w, s.lambda}});
  if (specs.empty()) {
    const auto p = detail::need(c.penalty, c.file, "penalty", "oracle").build();
    const auto law = detail::need(c.law, c.file, "law", "oracle").build();
    for (double l : c.oracle_lambdas) specs.push_back({"lambda=" + csv::format_double(l), SmdpSpec{p, law, c.B, c.w, l}});
  }
  std::vector<OracleReportRow> rows(specs.size());
  parallel_for(specs.size(), o.threads, [&](std::size_t i) { rows[i] = oracle_compare(specs[i].first, specs[i].second); });
  for (const auto& row : rows)
    if (!(row.abs_diff < 1e-6)) r.violations.push_back("oracle disagreement on " + row.spec_id);
  detail::write(r, o, "oracle_report.csv", oracle_report_csv(rows));
  return r;
}

inline CommandResult run_command(const std::string& name, const ExperimentConfig& c, const RunOptions& o) {
  if (name == "curve") return cmd_curve(c, o);
  if (name == "single") return cmd_single(c, o);
  if (name == "fleet") return cmd_fleet(c, o);
  if (name == "dual") return cmd_dual(c, o);
  if (name == "oracle") return cmd_oracle(c, o);
  throw InvalidArgument("unknown command '" + name + "'");
}

}  // namespace aoisched::experiment
