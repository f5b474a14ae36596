// Copyright 2026 The mtsim Authors
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

// mtsim command line: plan, run, verify, attack, resources.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mts/mts.hpp"

namespace {

using mts::Json;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw mts::Error("cannot write " + path);
  out << text;
}

int cmd_plan(const std::string& spec_path, bool rules_only) {
  const auto doc = mts::load_spec(spec_path);
  const auto plan = mts::plan_deployment(doc.spec);
  if (!rules_only) std::cout << mts::to_json(plan).dump(2) << "\n";
  for (const auto& vs : plan.vswitches) {
    std::cout << "# vswitch:" << vs.id << " (" << mts::to_string(vs.exec_ctx) << ")\n";
    for (const auto& line : mts::rule_lines(vs)) std::cout << line << "\n";
  }
  const auto problems = mts::validate_plan(plan);
  for (const auto& p : problems) std::cerr << "plan: " << p << "\n";
  return problems.empty() ? 0 : 1;
}

struct RunOptions {
  std::string scenario = "p2v";
  std::size_t packets = 100;
  std::uint64_t seed = 1;
  std::size_t size = 64;
  std::string trace_path;
  std::string csv_path;
};

int cmd_run(const std::string& spec_path, const RunOptions& o) {
  const auto doc = mts::load_spec(spec_path);
  const auto plan = mts::plan_deployment(doc.spec);
  const auto scenario = mts::make_scenario(plan, mts::parse_scenario_kind(o.scenario), o.packets, o.seed, o.size);
  mts::EngineConfig cfg;
  cfg.record_trace = !o.trace_path.empty();
  const auto result = mts::run_scenario(plan, scenario, cfg);
  std::cout << mts::to_json(result.metrics).dump(2) << "\n";
  if (!o.csv_path.empty()) write_file(o.csv_path, mts::metrics_csv(result.metrics));
  if (!o.trace_path.empty()) {
    std::string lines;
    for (const auto& e : result.trace) lines += mts::to_json(e).dump() + "\n";
    write_file(o.trace_path, lines);
  }
  return 0;
}

int cmd_verify(const std::string& spec_path, std::size_t frames, std::uint64_t seed, bool no_spoof_check) {
  const auto doc = mts::load_spec(spec_path);
  auto plan = mts::plan_deployment(doc.spec);
  if (no_spoof_check) plan = mts::without_spoof_check(plan);
  mts::FuzzConfig cfg;
  cfg.frames_per_vf = frames;
  cfg.seed = seed;
  const auto report = mts::verify_isolation(plan, cfg);
  Json j = mts::to_json(report);
  if (doc.spec.level != mts::Level::Baseline) j["golden_chain"] = mts::to_json(mts::golden_chain_check(plan));
  std::cout << j.dump(2) << "\n";
  return report.violations.empty() ? 0 : 1;
}

int cmd_attack(const std::string& spec_path, const std::string& target, bool as_json) {
  const auto doc = mts::load_spec(spec_path);
  const auto plan = mts::plan_deployment(doc.spec);
  const auto graph = mts::build_graph(plan);
  std::vector<std::string> targets;
  if (!target.empty()) {
    targets.push_back(target);
  } else {
    for (const auto& x : doc.attacks) targets.push_back(x.compromise);
  }
  if (targets.empty()) throw mts::ConfigError("no --compromise given and the spec has no attack expectations");
  std::vector<std::string> breaches;
  Json reports = Json::array();
  for (const auto& t : targets) {
    const auto report = mts::compromise(plan, graph, mts::parse_component(plan, t));
    if (as_json) {
      reports.push_back(mts::to_json(report));
    } else {
      std::cout << mts::report_table(report) << "\n";
    }
    for (const auto& x : doc.attacks) {
      if (x.compromise != t) continue;
      for (auto& e : mts::check_expectation(report, x)) breaches.push_back(std::move(e));
    }
  }
  if (as_json) std::cout << reports.dump(2) << "\n";
  for (const auto& b : breaches) std::cerr << "expectation breached: " << b << "\n";
  return breaches.empty() ? 0 : 1;
}

int cmd_resources(const std::string& spec_path, const std::string& csv_path) {
  const auto doc = mts::load_spec(spec_path);
  const auto r = mts::account_resources(doc.spec);
  std::cout << mts::resources_table(r) << "\n" << mts::resources_csv(r);
  if (!csv_path.empty()) write_file(csv_path, mts::resources_csv(r));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-tenant vswitch deployment simulator"};
  app.require_subcommand(1);

  std::string spec;
  auto* plan = app.add_subcommand("plan", "Emit the deployment plan as JSON plus flow-rule text");
  plan->add_option("spec", spec, "Deployment spec (JSON)")->required()->check(CLI::ExistingFile);
  bool rules_only = false;
  plan->add_flag("--rules-only", rules_only, "Print only the flow rules");

  RunOptions ro;
  auto* run = app.add_subcommand("run", "Run a traffic scenario and emit metrics JSON");
  run->add_option("spec", spec, "Deployment spec (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--scenario", ro.scenario, "p2p, p2v, v2v or t2t")
      ->check(CLI::IsMember({"p2p", "p2v", "v2v", "t2t"}));
  run->add_option("--packets", ro.packets, "Packets per flow");
  run->add_option("--seed", ro.seed, "Seed for all randomness");
  run->add_option("--size", ro.size, "Frame size in bytes");
  run->add_option("--trace", ro.trace_path, "Write the per-packet trace as JSON lines");
  run->add_option("--csv", ro.csv_path, "Write per-flow metrics as CSV");

  std::size_t frames = 10000;
  std::uint64_t seed = 1;
  bool no_spoof = false;
  auto* verify = app.add_subcommand("verify", "Fuzz tenant ports and check isolation; exit 1 on violation");
  verify->add_option("spec", spec, "Deployment spec (JSON)")->required()->check(CLI::ExistingFile);
  verify->add_option("--frames", frames, "Adversarial frames per tenant VF");
  verify->add_option("--seed", seed, "Seed for all randomness");
  verify->add_flag("--no-spoof-check", no_spoof, "Disable VF spoof checking first (fault injection)");

  std::string target;
  bool as_json = false;
  auto* attack = app.add_subcommand("attack", "Report what a compromised component can reach");
  attack->add_option("spec", spec, "Deployment spec (JSON)")->required()->check(CLI::ExistingFile);
  attack->add_option("--compromise", target, "host, vswitch:N, vm:N or tenant:<id>/<k>");
  attack->add_flag("--json", as_json, "Emit JSON instead of a table");

  std::string csv_path;
  auto* resources = app.add_subcommand("resources", "Print the resource account");
  resources->add_option("spec", spec, "Deployment spec (JSON)")->required()->check(CLI::ExistingFile);
  resources->add_option("--csv", csv_path, "Also write the CSV to a file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan) return cmd_plan(spec, rules_only);
    if (*run) return cmd_run(spec, ro);
    if (*verify) return cmd_verify(spec, frames, seed, no_spoof);
    if (*attack) return cmd_attack(spec, target, as_json);
    if (*resources) return cmd_resources(spec, csv_path);
  } catch (const mts::Error& e) {
    std::cerr << "mtsim: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
