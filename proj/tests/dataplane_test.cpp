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

#include "mts/dataplane.hpp"

namespace mts {
namespace {

const MacAddress kUplinkMac({0x02, 0, 0, 0, 0, 0x11});
const MacAddress kGwMac({0x02, 0, 0, 0, 0, 0x12});
const MacAddress kVm0Mac({0x02, 0, 0, 0, 0, 0x21});
const MacAddress kVm1Mac({0x02, 0, 0, 0, 0, 0x22});
const MacAddress kExtGw({0x02, 0, 0, 0, 0, 0xfe});
const MacAddress kLoadGen({0x02, 0, 0, 0, 0, 0xee});
const PortId kUplink = PortId::vf(0);
const PortId kGw = PortId::vf(1);
const TenantId kRed("red");

TenantBinding red_binding(std::size_t vms) {
  TenantBinding t;
  t.tenant = kRed;
  t.gateway_ip = Ipv4Address(10, 1, 0, 1);
  t.external_gw_mac = kExtGw;
  t.gateways = {{kGw, kGwMac, kUplink, kUplinkMac}};
  const MacAddress macs[] = {kVm0Mac, kVm1Mac};
  for (std::size_t i = 0; i < vms; ++i) {
    t.vms.push_back({macs[i], Ipv4Address(10, 1, 0, static_cast<std::uint8_t>(2 + i)), 0});
  }
  return t;
}

VswitchInstance make_vswitch() {
  VswitchInstance vs;
  vs.id = 0;
  vs.inout_ports = {kUplink};
  vs.gw_ports[kRed] = {kGw};
  return vs;
}

EthernetFrame ip_frame(MacAddress dst, MacAddress src, Ipv4Address dst_ip) {
  EthernetFrame f;
  f.dst = dst;
  f.src = src;
  f.payload = Ipv4Packet{Ipv4Address(192, 0, 2, 5), dst_ip, 253, Bytes{9, 9}};
  return f;
}

TEST(BuildTenantRules, OneVmGivesThreeRules) {
  const auto rules = build_tenant_rules(red_binding(1));
  ASSERT_EQ(rules.size(), 3u);
  EXPECT_EQ(rules[0].priority, kIngressPriority);
  EXPECT_EQ(rules[1].priority, kEgressPriority);
  EXPECT_EQ(rules[2].priority, kArpPriority);
}

TEST(BuildTenantRules, TwoVmsShareEgressAndArp) {
  const auto rules = build_tenant_rules(red_binding(2));
  ASSERT_EQ(rules.size(), 4u);
  std::size_t ingress = 0;
  for (const auto& r : rules) ingress += r.priority == kIngressPriority;
  EXPECT_EQ(ingress, 2u);
}

TEST(BuildTenantRules, IncompleteAddressing) {
  auto t = red_binding(1);
  t.vms[0].ip.reset();
  EXPECT_THROW(build_tenant_rules(t), IncompleteAddressing);
  t = red_binding(1);
  t.gateway_ip.reset();
  EXPECT_THROW(build_tenant_rules(t), IncompleteAddressing);
  t = red_binding(1);
  t.gateways.clear();
  EXPECT_THROW(build_tenant_rules(t), IncompleteAddressing);
}

TEST(ProcessFrame, IngressRewritesDestinationToTheVm) {
  auto vs = make_vswitch();
  vs.install(build_tenant_rules(red_binding(2)));
  const auto r = vs.process_frame(kUplink, ip_frame(kUplinkMac, kLoadGen, Ipv4Address(10, 1, 0, 3)));
  ASSERT_EQ(r.out.size(), 1u);
  EXPECT_EQ(r.out[0].port, kGw);
  EXPECT_EQ(r.out[0].frame.dst, kVm1Mac);
  EXPECT_EQ(r.out[0].frame.src, kGwMac);
  EXPECT_TRUE(r.drops.empty());
}

TEST(ProcessFrame, EgressRewritesToExternalGateway) {
  auto vs = make_vswitch();
  vs.install(build_tenant_rules(red_binding(1)));
  const auto r = vs.process_frame(kGw, ip_frame(kGwMac, kVm0Mac, Ipv4Address(198, 51, 100, 7)));
  ASSERT_EQ(r.out.size(), 1u);
  EXPECT_EQ(r.out[0].port, kUplink);
  EXPECT_EQ(r.out[0].frame.dst, kExtGw);
  EXPECT_EQ(r.out[0].frame.src, kUplinkMac);
}

TEST(ProcessFrame, IntraTenantHairpin) {
  auto vs = make_vswitch();
  vs.install(build_tenant_rules(red_binding(2)));
  const auto r = vs.process_frame(kGw, ip_frame(kGwMac, kVm0Mac, Ipv4Address(10, 1, 0, 3)));
  ASSERT_EQ(r.out.size(), 1u);
  EXPECT_EQ(r.out[0].port, kGw);
  EXPECT_EQ(r.out[0].frame.dst, kVm1Mac);
}

TEST(ProcessFrame, ArpResponderAnswersForTheGateway) {
  auto vs = make_vswitch();
  vs.install(build_tenant_rules(red_binding(1)));
  EthernetFrame req;
  req.dst = MacAddress::broadcast();
  req.src = kVm0Mac;
  req.payload = ArpMessage::request(kVm0Mac, Ipv4Address(10, 1, 0, 2), Ipv4Address(10, 1, 0, 1));
  const auto r = vs.process_frame(kGw, req);
  ASSERT_EQ(r.out.size(), 1u);
  EXPECT_EQ(r.out[0].port, kGw);
  const ArpMessage* reply = r.out[0].frame.arp();
  ASSERT_NE(reply, nullptr);
  EXPECT_EQ(reply->op, ArpOp::Reply);
  EXPECT_EQ(reply->sender_mac, kGwMac);
  EXPECT_EQ(reply->sender_ip, Ipv4Address(10, 1, 0, 1));
  EXPECT_EQ(reply->target_mac, kVm0Mac);
  EXPECT_EQ(r.out[0].frame.dst, kVm0Mac);
}

TEST(ProcessFrame, EmptyTableMisses) {
  auto vs = make_vswitch();
  const auto r = vs.process_frame(kUplink, ip_frame(kUplinkMac, kLoadGen, Ipv4Address(10, 1, 0, 2)));
  EXPECT_TRUE(r.out.empty());
  ASSERT_EQ(r.drops.size(), 1u);
  EXPECT_EQ(r.drops[0].reason, DropReason::TableMiss);
  EXPECT_FALSE(r.rule.has_value());
}

TEST(ProcessFrame, UnknownInPortRejected) {
  auto vs = make_vswitch();
  EXPECT_THROW(vs.process_frame(PortId::vf(9), ip_frame(kUplinkMac, kLoadGen, Ipv4Address(10, 1, 0, 2))),
               ConfigError);
}

TEST(ProcessFrame, Pure) {
  auto vs = make_vswitch();
  vs.install(build_tenant_rules(red_binding(2)));
  const auto f = ip_frame(kUplinkMac, kLoadGen, Ipv4Address(10, 1, 0, 2));
  EXPECT_EQ(vs.process_frame(kUplink, f), vs.process_frame(kUplink, f));
}

TEST(FlowTable, PriorityThenLowestSeq) {
  FlowTable t;
  t.add({5, FlowMatch{.dst_mac = kVm0Mac}, {action::Output{PortId::vf(1)}}});
  const auto second = t.add({7, FlowMatch{.dst_mac = kVm0Mac}, {action::Output{PortId::vf(2)}}});
  t.add({7, FlowMatch{.dst_mac = kVm0Mac}, {action::Output{PortId::vf(3)}}});
  const FlowRule* r = t.select({PortId::vf(0), std::nullopt}, ip_frame(kVm0Mac, kLoadGen, Ipv4Address()));
  ASSERT_NE(r, nullptr);
  EXPECT_EQ(r->seq, second);
}

TEST(FlowTable, RejectsMalformedRules) {
  FlowTable t;
  EXPECT_THROW(t.add({1, FlowMatch{}, {action::Output{kGw}}}), ConfigError);
  EXPECT_THROW(t.add({1, FlowMatch{.dst_mac = kVm0Mac}, {action::Output{kGw}, action::SetDstMac{kVm1Mac}}}),
               ConfigError);
  EXPECT_THROW(t.add({1, FlowMatch{.dst_mac = kVm0Mac}, {action::Output{kGw}, action::Output{kUplink}}}),
               ConfigError);
}

TEST(VswitchInstance, InstallRejectsForeignOutput) {
  auto vs = make_vswitch();
  EXPECT_THROW(vs.install({{1, FlowMatch{.dst_mac = kVm0Mac}, {action::Output{PortId::vf(7)}}}}), ConfigError);
}

TEST(VswitchInstance, DatapathsAreSeparated) {
  auto vs = make_vswitch();
  const PortId blue_gw = PortId::vf(2);
  vs.gw_ports[TenantId("blue")] = {blue_gw};
  vs.install(build_tenant_rules(red_binding(2)));
  // Blue's gateway port does not see red's routes.
  const auto r = vs.process_frame(blue_gw, ip_frame(kGwMac, kVm0Mac, Ipv4Address(10, 1, 0, 3)));
  ASSERT_EQ(r.drops.size(), 1u);
  EXPECT_EQ(r.drops[0].reason, DropReason::TableMiss);
}

TEST(FlowRule, TextForm) {
  auto vs = make_vswitch();
  vs.install(build_tenant_rules(red_binding(1)));
  EXPECT_EQ(to_string(vs.table.rules()[0]),
            "prio=200 seq=0 match{dp=red,dst_ip=10.1.0.2/32} "
            "actions[set_dst_mac:02:00:00:00:00:21,set_src_mac:02:00:00:00:00:12,output:vf1]");
}

const VxlanUnderlay kUnderlay{Ipv4Address(192, 0, 2, 1), Ipv4Address(192, 0, 2, 2)};

TEST(Vxlan, IngressDecapsulatesToTheVm) {
  auto vs = make_vswitch();
  const auto t = red_binding(1);
  vs.install(build_vxlan_rules(vs, t, 7, kUnderlay));
  vs.vnis[kRed] = 7;
  vs.install(build_tenant_rules(t));
  const EthernetFrame inner = ip_frame(kUplinkMac, kLoadGen, Ipv4Address(10, 1, 0, 2));
  const EthernetFrame outer = vxlan_encap(inner, 7, {kLoadGen, kUplinkMac, kUnderlay.remote_ip, kUnderlay.local_ip});
  const auto r = vs.process_frame(kUplink, outer);
  ASSERT_EQ(r.out.size(), 1u);
  // Oracle: decapsulate, then apply the ingress rewrite by hand.
  EthernetFrame want = vxlan_decap(outer).inner;
  want.dst = kVm0Mac;
  want.src = kGwMac;
  EXPECT_EQ(r.out[0].port, kGw);
  EXPECT_EQ(serialize(r.out[0].frame), serialize(want));
}

TEST(Vxlan, EgressEncapsulatesTowardRemoteVtep) {
  auto vs = make_vswitch();
  const auto t = red_binding(1);
  vs.install(build_vxlan_rules(vs, t, 7, kUnderlay));
  vs.install(build_tenant_rules(t));
  const EthernetFrame sent = ip_frame(kGwMac, kVm0Mac, Ipv4Address(172, 16, 0, 9));
  const auto r = vs.process_frame(kGw, sent);
  ASSERT_EQ(r.out.size(), 1u);
  EXPECT_EQ(r.out[0].port, kUplink);
  const auto want = vxlan_encap(sent, 7, {kUplinkMac, kExtGw, kUnderlay.local_ip, kUnderlay.remote_ip});
  EXPECT_EQ(serialize(r.out[0].frame), serialize(want));
  const auto d = vxlan_decap(r.out[0].frame);
  EXPECT_EQ(d.vni, 7u);
  EXPECT_EQ(d.inner, sent);
}

TEST(Vxlan, DuplicateAndOutOfRangeVni) {
  auto vs = make_vswitch();
  vs.vnis[TenantId("blue")] = 7;
  EXPECT_THROW(build_vxlan_rules(vs, red_binding(1), 7, kUnderlay), DuplicateVni);
  EXPECT_THROW(build_vxlan_rules(vs, red_binding(1), 1u << 24, kUnderlay), VniOutOfRange);
  EXPECT_NO_THROW(build_vxlan_rules(vs, red_binding(1), 8, kUnderlay));
}

TEST(TransitRules, ForwardBetweenUplinks) {
  VswitchInstance vs;
  vs.inout_ports = {PortId::vf(0), PortId::vf(1)};
  const MacAddress m0({0x02, 0, 0, 0, 1, 0}), m1({0x02, 0, 0, 0, 1, 1});
  vs.install(build_transit_rules({{PortId::vf(0), m0}, {PortId::vf(1), m1}}, Ipv4Prefix::parse("198.51.100.0/24"),
                                 kExtGw));
  const auto r = vs.process_frame(PortId::vf(0), ip_frame(m0, kLoadGen, Ipv4Address(198, 51, 100, 10)));
  ASSERT_EQ(r.out.size(), 1u);
  EXPECT_EQ(r.out[0].port, PortId::vf(1));
  EXPECT_EQ(r.out[0].frame.src, m1);
  EXPECT_EQ(r.out[0].frame.dst, kExtGw);
}

TEST(ExecContext, Residency) {
  EXPECT_TRUE(is_host_resident(ExecContext::HostKernel));
  EXPECT_TRUE(is_host_resident(ExecContext::HostUser));
  EXPECT_FALSE(is_host_resident(ExecContext::VmKernel));
  EXPECT_TRUE(is_user_space(ExecContext::VmUser));
  EXPECT_FALSE(is_user_space(ExecContext::VmKernel));
}

}  // namespace
}  // namespace mts
