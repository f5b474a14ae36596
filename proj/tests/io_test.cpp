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

#include <gtest/gtest.h>

#include "mts/harness.hpp"
#include "mts/io.hpp"
#include "mts/secmodel.hpp"
#include "support.hpp"

namespace mts {
namespace {

using testing::make_spec;

const char* kSpecText = R"({
  "version": 1,
  "level": "level2",
  "mode": "shared",
  "tenants": [
    {"id": "red", "vm_count": 2, "ip_block": "10.1.0.0/24", "vni": 5001},
    {"id": "blue", "ip_block": "10.2.0.0/24"}
  ],
  "underlay": {"local_ip": "192.0.2.1", "remote_ip": "192.0.2.2"},
  "expect": {"attack": [{"compromise": "vswitch:0", "host_reachable": false, "reachable_tenants": ["red"]}]}
})";

TEST(SpecJson, Parses) {
  const auto doc = spec_from_json(Json::parse(kSpecText));
  EXPECT_EQ(doc.spec.level, Level::Level2);
  EXPECT_EQ(doc.spec.mode, ResourceMode::Shared);
  ASSERT_EQ(doc.spec.tenants.size(), 2u);
  EXPECT_EQ(doc.spec.tenants[0].vm_count, 2u);
  EXPECT_EQ(doc.spec.tenants[0].vni, 5001u);
  EXPECT_EQ(doc.spec.tenants[1].vm_count, 1u);
  EXPECT_EQ(doc.spec.tenants[1].ip_block, Ipv4Prefix::parse("10.2.0.0/24"));
  ASSERT_TRUE(doc.spec.underlay);
  EXPECT_EQ(doc.spec.underlay->remote_ip, Ipv4Address(192, 0, 2, 2));
  ASSERT_EQ(doc.attacks.size(), 1u);
  EXPECT_EQ(doc.attacks[0].reachable_tenants, std::set<std::string>{"red"});
}

TEST(SpecJson, RoundTrip) {
  auto spec = make_spec(Level::Level2, 3, 2);
  spec.zones = {{TenantId("red")}, {TenantId("blue"), TenantId("green")}};
  spec.user_space = true;
  EXPECT_EQ(spec_from_json(to_json(spec)).spec, spec);
}

TEST(SpecJson, Rejects) {
  const auto bad = [](const char* text) { return spec_from_json(Json::parse(text)); };
  EXPECT_THROW(bad(R"({"version":1,"level":"level1","tenants":[],"colour":"red"})"), SpecError);
  EXPECT_THROW(bad(R"({"level":"level1","tenants":[]})"), SpecError);
  EXPECT_THROW(bad(R"({"version":1,"level":"level3","tenants":[]})"), SpecError);
  EXPECT_THROW(bad(R"({"version":1,"level":"level1","tenants":[{"id":"a","ip_block":"10.0.0.0/33"}]})"), SpecError);
  EXPECT_THROW(bad(R"({"version":1,"level":"level1","tenants":[{"id":"a","ip_block":"10.0.0.0/24","vms":2}]})"),
               SpecError);
  EXPECT_THROW(bad(R"({"version":1,"level":"level1","mode":"fast","tenants":[]})"), SpecError);
  EXPECT_THROW(bad(R"({"version":"one","level":"level1","tenants":[]})"), SpecError);
  EXPECT_THROW(bad(R"([1,2])"), SpecError);
  EXPECT_THROW(load_spec("/nonexistent/spec.json"), SpecError);
}

TEST(Component, Parse) {
  const auto plan = plan_deployment(make_spec(Level::Level2, 2, 2));
  EXPECT_EQ(parse_component(plan, "host"), Node::host_kernel());
  EXPECT_EQ(parse_component(plan, "host_user"), Node::host_user());
  EXPECT_EQ(parse_component(plan, "nic"), Node::nic());
  EXPECT_EQ(parse_component(plan, "vswitch:1"), Node::vswitch(1));
  EXPECT_EQ(parse_component(plan, "vm:3"), Node::tenant(3));
  EXPECT_EQ(parse_component(plan, "tenant:blue/1"), Node::tenant(3));
  EXPECT_EQ(parse_component(plan, "tenant:red"), Node::tenant(0));
  EXPECT_THROW(parse_component(plan, "vswitch:x"), UnknownComponent);
  EXPECT_THROW(parse_component(plan, "tenant:red/5"), UnknownComponent);
  EXPECT_THROW(parse_component(plan, "router"), UnknownComponent);
}

TEST(Expectation, Mismatches) {
  const auto plan = plan_deployment(make_spec(Level::Level2, 2));
  const auto r = compromise(plan, Node::vswitch(0));
  EXPECT_TRUE(check_expectation(r, {"vswitch:0", false, std::set<std::string>{"red"}}).empty());
  EXPECT_EQ(check_expectation(r, {"vswitch:0", true, std::nullopt}).size(), 1u);
  EXPECT_EQ(check_expectation(r, {"vswitch:0", true, std::set<std::string>{"red", "blue"}}).size(), 2u);
  EXPECT_NE(report_table(r).find("host_reachable     no"), std::string::npos);
}

TEST(MetricsCsv, Format) {
  Metrics m;
  FlowMetrics f;
  f.flow_id = 3;
  f.injected = 10;
  f.delivered = 7;
  f.dropped = 3;
  f.drop_reasons = {{"NoRoute", 1}, {"TableMiss", 2}};
  f.traversals_mean = 4.0 / 3.0;
  m.flows.push_back(f);
  EXPECT_EQ(metrics_csv(m),
            "flow_id,injected,delivered,dropped,drop_reason_breakdown,nic_traversals_mean\n"
            "3,10,7,3,NoRoute:1;TableMiss:2,1.333\n");
}

TEST(MetricsCsv, FromRun) {
  const auto plan = plan_deployment(make_spec(Level::Level1, 2));
  const auto r = run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 5, 0));
  const auto csv = metrics_csv(r.metrics);
  EXPECT_NE(csv.find("\n0,5,5,0,,4.000\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\n1,5,5,0,,4.000\n"), std::string::npos) << csv;
}

TEST(PlanJson, CarriesRulesAndResources) {
  const auto plan = plan_deployment(make_spec(Level::Level1, 2));
  const auto j = to_json(plan);
  EXPECT_EQ(j.at("effective_mode"), "isolated");
  EXPECT_EQ(j.at("resources").at("total_cores"), 2);
  const auto lines = rule_lines(plan.vswitches[0]);
  EXPECT_EQ(lines.size(), plan.vswitches[0].table.size());
  EXPECT_EQ(lines.front().rfind("prio=200 seq=0 ", 0), 0u) << lines.front();
}

TEST(ResourcesCsv, OneRow) {
  const auto csv = resources_csv(account_resources(make_spec(Level::Level1, 4)));
  EXPECT_EQ(csv.substr(csv.find('\n') + 1), "1,1,2,1,4,4,1,4,16,1,9\n");
}

}  // namespace
}  // namespace mts
