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

#include <set>

#include <gtest/gtest.h>

#include "mts/harness.hpp"
#include "mts/io.hpp"
#include "support.hpp"

namespace mts {
namespace {

using testing::make_spec;

DeploymentPlan plan_of(Level level, std::size_t tenants, std::size_t vms = 1) {
  return plan_deployment(make_spec(level, tenants, vms));
}

double mean_traversals(const RunResult& r) {
  double sum = 0;
  for (const auto& p : r.packets) sum += static_cast<double>(p.nic_traversals);
  return sum / static_cast<double>(r.packets.size());
}

double mean_hops(const RunResult& r) {
  double sum = 0;
  for (const auto& p : r.packets) sum += static_cast<double>(p.hops);
  return sum / static_cast<double>(r.packets.size());
}

void expect_conserved(const Metrics& m) {
  for (const auto& f : m.flows) {
    EXPECT_EQ(f.injected, f.delivered + f.dropped) << "flow " << f.flow_id;
    std::size_t by_reason = 0;
    for (const auto& [r, n] : f.drop_reasons) by_reason += n;
    EXPECT_EQ(by_reason, f.dropped);
  }
}

TEST(P2v, EveryPacketComesBack) {
  const auto plan = plan_of(Level::Level1, 4);
  const auto r = run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 100, 1));
  EXPECT_EQ(r.metrics.injected(), 400u);
  EXPECT_EQ(r.metrics.delivered(), 400u);
  for (const auto& f : r.metrics.flows) {
    EXPECT_EQ(f.traversals_min, 4u);
    EXPECT_EQ(f.traversals_max, 4u);
  }
  expect_conserved(r.metrics);
}

TEST(P2v, BaselineCrossesTheNicTwice) {
  const auto plan = plan_of(Level::Baseline, 4);
  const auto r = run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 50, 1));
  EXPECT_EQ(r.metrics.delivered(), 200u);
  EXPECT_DOUBLE_EQ(mean_traversals(r), 2.0);
}

TEST(P2v, VxlanTenants) {
  DeploymentSpec spec = make_spec(Level::Level2, 2);
  spec.underlay = VxlanUnderlay{Ipv4Address(192, 0, 2, 1), Ipv4Address(192, 0, 2, 2)};
  spec.tenants[0].vni = 100;
  spec.tenants[1].vni = 200;
  const auto plan = plan_deployment(spec);
  const auto r = run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 20, 3));
  EXPECT_EQ(r.metrics.delivered(), 40u);
  EXPECT_DOUBLE_EQ(mean_traversals(r), 4.0);
}

TEST(Scenario, UnknownDestinationIsTableMiss) {
  const auto plan = plan_of(Level::Level1, 2);
  Scenario s;
  s.kind = ScenarioKind::P2p;
  s.seed = 5;
  s.flows.push_back({0, Ipv4Address(10, 99, 0, 7), 64, 10});
  const auto r = run_scenario(plan, s);
  ASSERT_EQ(r.metrics.flows.size(), 1u);
  EXPECT_EQ(r.metrics.flows[0].delivered, 0u);
  EXPECT_EQ(r.metrics.flows[0].dropped, 10u);
  EXPECT_EQ(r.metrics.flows[0].drop_reasons.at("TableMiss"), 10u);
  for (const auto& p : r.packets) EXPECT_EQ(p.first_drop, DropReason::TableMiss);
  expect_conserved(r.metrics);
}

TEST(Scenario, Errors) {
  const auto plan = plan_of(Level::Level1, 1);
  EXPECT_THROW(make_scenario(plan, ScenarioKind::T2t, 1, 0), ScenarioError);
  EXPECT_THROW(make_scenario(plan, ScenarioKind::V2v, 1, 0), ScenarioError);
  Scenario s;
  s.flows.push_back({9, std::nullopt, 64, 1});
  EXPECT_THROW(run_scenario(plan, s), ScenarioError);
  EXPECT_THROW(parse_scenario_kind("x2y"), ScenarioError);
  EXPECT_EQ(parse_scenario_kind("t2t"), ScenarioKind::T2t);
}

TEST(Engine, StepLimitRaisesNonQuiescent) {
  const auto plan = plan_of(Level::Level1, 1);
  EngineConfig cfg;
  cfg.max_steps = 2;
  EXPECT_THROW(run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 1, 0), cfg), NonQuiescent);
}

TEST(Engine, Deterministic) {
  const auto plan = plan_of(Level::Level2, 3, 2);
  for (auto kind : {ScenarioKind::P2p, ScenarioKind::P2v, ScenarioKind::V2v, ScenarioKind::T2t}) {
    const auto s = make_scenario(plan, kind, 30, 42);
    const auto a = run_scenario(plan, s);
    const auto b = run_scenario(plan, s);
    EXPECT_EQ(to_json(a.metrics).dump(), to_json(b.metrics).dump());
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(to_json(a.trace[i]).dump(), to_json(b.trace[i]).dump());
  }
}

TEST(Engine, SeedChangesOrderNotOutcome) {
  const auto plan = plan_of(Level::Level1, 3);
  const auto a = run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 20, 1));
  const auto b = run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 20, 2));
  EXPECT_EQ(a.metrics.delivered(), b.metrics.delivered());
  bool differs = false;
  for (std::size_t i = 0; i < a.trace.size() && !differs; ++i) differs = a.trace[i].packet != b.trace[i].packet;
  EXPECT_TRUE(differs);
}

TEST(HopDeltas, P2vAddsTwoTraversals) {
  for (std::size_t n : {1u, 2u, 4u}) {
    const auto mts_plan = plan_of(Level::Level2, n);
    const auto base_plan = plan_of(Level::Baseline, n);
    const auto m = run_scenario(mts_plan, make_scenario(mts_plan, ScenarioKind::P2v, 10, 9));
    const auto b = run_scenario(base_plan, make_scenario(base_plan, ScenarioKind::P2v, 10, 9));
    EXPECT_DOUBLE_EQ(mean_traversals(m) - mean_traversals(b), 2.0);
  }
}

TEST(HopDeltas, TenantToTenantAddsFour) {
  for (auto level : {Level::Level1, Level::Level2}) {
    const auto mts_plan = plan_of(level, 2, 2);
    const auto base_plan = plan_of(Level::Baseline, 2, 2);
    const auto m = run_scenario(mts_plan, make_scenario(mts_plan, ScenarioKind::T2t, 10, 4));
    const auto b = run_scenario(base_plan, make_scenario(base_plan, ScenarioKind::T2t, 10, 4));
    EXPECT_EQ(m.metrics.delivered(), 10u);
    EXPECT_EQ(b.metrics.delivered(), 10u);
    EXPECT_DOUBLE_EQ(mean_traversals(b), 0.0);
    EXPECT_DOUBLE_EQ(mean_traversals(m) - mean_traversals(b), 4.0);
  }
}

TEST(HopDeltas, OrderingWithinDeployment) {
  for (auto level : {Level::Baseline, Level::Level1, Level::Level2}) {
    const auto plan = plan_of(level, 2, 2);
    const auto p2p = run_scenario(plan, make_scenario(plan, ScenarioKind::P2p, 5, 0));
    const auto p2v = run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 5, 0));
    const auto v2v = run_scenario(plan, make_scenario(plan, ScenarioKind::V2v, 5, 0));
    EXPECT_EQ(p2p.metrics.delivered(), p2p.metrics.injected());
    EXPECT_EQ(v2v.metrics.delivered(), v2v.metrics.injected());
    EXPECT_LT(mean_hops(p2p), mean_hops(p2v));
    EXPECT_LT(mean_hops(p2v), mean_hops(v2v));
    if (level != Level::Baseline) {
      EXPECT_LT(mean_traversals(p2p), mean_traversals(p2v));
      EXPECT_LT(mean_traversals(p2v), mean_traversals(v2v));
    }
  }
}

TEST(Conservation, RandomizedSuite) {
  std::mt19937_64 rng(2026);
  for (int run = 0; run < 100; ++run) {
    const auto level = static_cast<Level>(rng() % 3);
    const auto kind = static_cast<ScenarioKind>(rng() % 4);
    // A service chain needs two gateway ports.
    const std::size_t tenants = (kind == ScenarioKind::V2v ? 2 : 1) + rng() % 3;
    const auto plan = plan_of(level, tenants, 2);
    auto s = make_scenario(plan, kind, 1 + rng() % 20, rng());
    // Some flows aim at addresses nobody owns.
    if (kind == ScenarioKind::P2p && rng() % 2) s.flows.push_back({0, Ipv4Address(10, 200, 0, 1), 64, 5});
    const auto r = run_scenario(plan, s);
    expect_conserved(r.metrics);
    std::size_t ended = 0;
    for (const auto& p : r.packets) ended += p.delivered || p.first_drop;
    EXPECT_EQ(ended, r.packets.size());
  }
}

TEST(Golden, PassesOnGeneratedPlans) {
  for (auto level : {Level::Level1, Level::Level2}) {
    for (std::size_t t = 1; t <= 4; ++t) {
      const auto plan = plan_of(level, t, 2);
      const auto r = golden_chain_check(plan);
      EXPECT_TRUE(r.pass) << r.failed_step.value_or(0) << " expected " << r.expected << " observed " << r.observed;
      EXPECT_EQ(r.steps_matched, plan.tenant_vms.size() * 10);
    }
  }
}

TEST(Golden, TwoFabricPorts) {
  auto spec = make_spec(Level::Level2, 2, 2);
  spec.fabric_ports = 2;
  spec.gw_vfs_per_tenant = 2;
  EXPECT_TRUE(golden_chain_check(plan_deployment(spec)).pass);
}

TEST(Golden, ForeignGatewayMacFailsAtNicIngress) {
  auto plan = plan_of(Level::Level1, 2);
  auto& vm = plan.tenant_vms[0];
  vm.static_arp[vm.gateway_ip] = plan.gateway_of(1).second;
  const auto r = golden_chain_check(plan, 0);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.failed_step, 7);
  EXPECT_NE(std::find(r.drops.begin(), r.drops.end(), DropReason::NoRoute), r.drops.end());
}

TEST(Golden, StepsAreNumberedOneToTen) {
  const auto plan = plan_of(Level::Level2, 1);
  auto in = detail::expected_ingress(plan, 0);
  auto out = detail::expected_egress(plan, 0);
  ASSERT_EQ(in.size() + out.size(), 10u);
  in.insert(in.end(), out.begin(), out.end());
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(in[i].number, static_cast<int>(i + 1));
  // Untagged delivery into the vswitch, tagged between gateway and VM.
  EXPECT_FALSE(in[1].vlan);
  EXPECT_EQ(in[3].vlan, plan.vlan_map.at(TenantId("red")));
}

TEST(Golden, BaselineRejected) { EXPECT_THROW(golden_chain_check(plan_of(Level::Baseline, 1)), ScenarioError); }

TEST(Fuzz, Level2FourTenantsClean) {
  const auto plan = plan_of(Level::Level2, 4);
  FuzzConfig cfg;
  cfg.seed = 7;
  const auto r = verify_isolation(plan, cfg);
  EXPECT_EQ(r.injected, 4u * 10000u);
  EXPECT_TRUE(r.violations.empty()) << r.violations.front().to_string();
  EXPECT_GT(r.deliveries, 0u);
}

TEST(Fuzz, Level1MultiVmClean) {
  const auto plan = plan_of(Level::Level1, 3, 3);
  FuzzConfig cfg;
  cfg.frames_per_vf = 2000;
  cfg.seed = 11;
  const auto r = verify_isolation(plan, cfg);
  EXPECT_TRUE(r.violations.empty()) << r.violations.front().to_string();
}

TEST(Fuzz, DisabledSpoofCheckIsCaught) {
  const auto plan = without_spoof_check(plan_of(Level::Level2, 4));
  FuzzConfig cfg;
  cfg.frames_per_vf = 2000;
  cfg.seed = 7;
  const auto r = verify_isolation(plan, cfg);
  ASSERT_FALSE(r.violations.empty());
  std::set<ViolationKind> kinds;
  for (const auto& v : r.violations) kinds.insert(v.kind);
  EXPECT_TRUE(kinds.count(ViolationKind::SpoofedSource));
  // The forwarding path itself is unaffected.
  EXPECT_TRUE(golden_chain_check(plan).pass);
}

TEST(Fuzz, ZeroFrames) {
  FuzzConfig cfg;
  cfg.frames_per_vf = 0;
  const auto r = verify_isolation(plan_of(Level::Level2, 2), cfg);
  EXPECT_EQ(r.injected, 0u);
  EXPECT_EQ(r.deliveries, 0u);
  EXPECT_TRUE(r.violations.empty());
}

TEST(Fuzz, SeedReproducible) {
  const auto plan = plan_of(Level::Level1, 2, 2);
  FuzzConfig cfg;
  cfg.frames_per_vf = 500;
  cfg.seed = 3;
  EXPECT_EQ(to_json(verify_isolation(plan, cfg)).dump(), to_json(verify_isolation(plan, cfg)).dump());
}

}  // namespace
}  // namespace mts
