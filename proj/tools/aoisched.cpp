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

// aoisched: build penalty curves, solve policies and run simulations from a
// JSON experiment config. Exit status: 0 ok, 1 runtime error, 2 bad config or
// usage, 3 an internal invariant failed.

#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "aoisched/experiment.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("aoisched");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("AOISCHED_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honour real names.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
    else spdlog::warn("ignoring unknown AOISCHED_LOG level '{}'", env);
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Inference-aware AoI scheduling experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());

  const std::vector<std::pair<const char*, const char*>> commands{
      {"curve", "Emit the penalty curve (and gamma table if a law is given)"},
      {"single", "Compare single-source policies by simulation"},
      {"fleet", "Run the multi-source policies at every scaling factor"},
      {"dual", "Solve the channel-price dual and emit its trace"},
      {"oracle", "Cross-check analytic thresholds against value iteration"},
  };
  std::vector<CLI::Option*> seed_opts;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    seed_opts.push_back(sub->add_option("--seed", seed, "Override sim.seed"));
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  aoisched::experiment::RunOptions opts;
  opts.out = out;
  opts.threads = threads;
  for (auto* o : seed_opts)
    if (o->count() > 0) opts.seed = seed;
  opts.log = [](const std::string& msg) { spdlog::info("{}", msg); };

  try {
    const auto cfg = aoisched::experiment::load_config(config);
    spdlog::debug("loaded {}", config);
    const auto result = aoisched::experiment::run_command(command, cfg, opts);
    for (const auto& v : result.violations) spdlog::error("invariant failed: {}", v);
    return result.violations.empty() ? 0 : 3;
  } catch (const aoisched::ParseError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
