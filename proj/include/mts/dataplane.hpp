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

// vswitch compartment: a prioritized match-action table plus the rule
// generators for the per-tenant logical datapaths.
//
// Each gateway port (Gw VF, or tap on a host-resident vswitch) belongs to one
// tenant's logical datapath. A rule scoped to datapath T is visible to frames
// that entered on an uplink or on one of T's gateway ports, never to frames
// from another tenant's gateway.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mts/common.hpp"
#include "mts/frames.hpp"
#include "mts/nic.hpp"
#include "mts/trace.hpp"

namespace mts {

enum class ExecContext : std::uint8_t { HostKernel, HostUser, VmKernel, VmUser };

constexpr std::string_view to_string(ExecContext c) {
  switch (c) {
    case ExecContext::HostKernel: return "host_kernel";
    case ExecContext::HostUser: return "host_user";
    case ExecContext::VmKernel: return "vm_kernel";
    case ExecContext::VmUser: return "vm_user";
  }
  return "?";
}

constexpr bool is_host_resident(ExecContext c) { return c == ExecContext::HostKernel || c == ExecContext::HostUser; }
constexpr bool is_user_space(ExecContext c) { return c == ExecContext::HostUser || c == ExecContext::VmUser; }

struct FlowMatch {
  std::optional<PortId> in_port = {};
  std::optional<TenantId> datapath = {};
  std::optional<Ipv4Prefix> dst_ip = {};
  std::optional<std::uint32_t> vni = {};  // when set, dst_ip/dst_mac apply to the inner frame
  std::optional<MacAddress> dst_mac = {};
  std::optional<Ipv4Address> arp_request_for = {};

  bool empty() const { return !in_port && !datapath && !dst_ip && !vni && !dst_mac && !arp_request_for; }

  bool operator==(const FlowMatch&) const = default;
};

namespace action {
struct SetDstMac {
  MacAddress mac;
  bool operator==(const SetDstMac&) const = default;
};
struct SetSrcMac {
  MacAddress mac;
  bool operator==(const SetSrcMac&) const = default;
};
struct PushVxlan {
  std::uint32_t vni = 0;
  UnderlayAddressing outer;
  bool operator==(const PushVxlan&) const = default;
};
struct PopVxlan {
  bool operator==(const PopVxlan&) const = default;
};
struct Output {
  PortId port;
  bool operator==(const Output&) const = default;
};
/// Answer an ARP request on the ingress port with `mac`.
struct ArpReply {
  MacAddress mac;
  bool operator==(const ArpReply&) const = default;
};
}  // namespace action

using Action = std::variant<action::SetDstMac, action::SetSrcMac, action::PushVxlan, action::PopVxlan, action::Output,
                            action::ArpReply>;

inline bool is_terminal(const Action& a) {
  return std::holds_alternative<action::Output>(a) || std::holds_alternative<action::ArpReply>(a);
}

struct FlowRule {
  int priority = 0;
  FlowMatch match;
  std::vector<Action> actions;
  std::uint64_t seq = 0;

  bool operator==(const FlowRule&) const = default;
};

inline std::string to_string(const Action& a) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, action::SetDstMac>) return "set_dst_mac:" + x.mac.to_string();
        if constexpr (std::is_same_v<T, action::SetSrcMac>) return "set_src_mac:" + x.mac.to_string();
        if constexpr (std::is_same_v<T, action::PushVxlan>) {
          return "push_vxlan:vni=" + std::to_string(x.vni) + "/" + x.outer.src_mac.to_string() + ">" +
                 x.outer.dst_mac.to_string() + "/" + x.outer.src_ip.to_string() + ">" + x.outer.dst_ip.to_string();
        }
        if constexpr (std::is_same_v<T, action::PopVxlan>) return "pop_vxlan";
        if constexpr (std::is_same_v<T, action::Output>) return "output:" + x.port.to_string();
        if constexpr (std::is_same_v<T, action::ArpReply>) return "arp_reply:" + x.mac.to_string();
      },
      a);
}

/// Stable one-line form: `prio=<n> seq=<n> match{...} actions[...]`.
inline std::string to_string(const FlowRule& r) {
  std::vector<std::string> m;
  if (r.match.datapath) m.push_back("dp=" + r.match.datapath->value);
  if (r.match.in_port) m.push_back("in_port=" + r.match.in_port->to_string());
  if (r.match.vni) m.push_back("vni=" + std::to_string(*r.match.vni));
  if (r.match.dst_mac) m.push_back("dst_mac=" + r.match.dst_mac->to_string());
  if (r.match.dst_ip) m.push_back("dst_ip=" + r.match.dst_ip->to_string());
  if (r.match.arp_request_for) m.push_back("arp_req=" + r.match.arp_request_for->to_string());
  std::string s = "prio=" + std::to_string(r.priority) + " seq=" + std::to_string(r.seq) + " match{";
  for (std::size_t i = 0; i < m.size(); ++i) s += (i ? "," : "") + m[i];
  s += "} actions[";
  for (std::size_t i = 0; i < r.actions.size(); ++i) s += (i ? "," : "") + to_string(r.actions[i]);
  return s + "]";
}

/// What a frame looks like to the matcher.
struct MatchContext {
  PortId in_port;
  std::optional<TenantId> datapath;  // empty for uplink ports
};

inline bool rule_matches(const FlowMatch& m, const MatchContext& ctx, const EthernetFrame& frame) {
  if (m.in_port && *m.in_port != ctx.in_port) return false;
  if (m.datapath && ctx.datapath && *m.datapath != *ctx.datapath) return false;
  const EthernetFrame* view = &frame;
  if (m.vni) {
    const Ipv4Packet* ip = frame.ipv4();
    const VxlanEnvelope* vx = ip ? ip->vxlan() : nullptr;
    if (!vx || vx->vni != *m.vni) return false;
    view = vx->inner.get();
  }
  if (m.dst_mac && view->dst != *m.dst_mac) return false;
  if (m.dst_ip) {
    const Ipv4Packet* ip = view->ipv4();
    if (!ip || !m.dst_ip->contains(ip->dst)) return false;
  }
  if (m.arp_request_for) {
    const ArpMessage* arp = view->arp();
    if (!arp || arp->op != ArpOp::Request || arp->target_ip != *m.arp_request_for) return false;
  }
  return true;
}

class FlowTable {
 public:
  /// Appends a rule and returns its sequence number.
  std::uint64_t add(FlowRule rule) {
    if (rule.match.empty()) throw ConfigError("flow match must set at least one field");
    auto terminal = std::count_if(rule.actions.begin(), rule.actions.end(), is_terminal);
    if (terminal > 1 || (terminal == 1 && !is_terminal(rule.actions.back()))) {
      throw ConfigError("a rule may carry one Output/ArpReply and it must be last");
    }
    rule.seq = next_seq_++;
    rules_.push_back(std::move(rule));
    return rules_.back().seq;
  }

  /// Highest priority wins; equal priorities go to the earliest installed.
  const FlowRule* select(const MatchContext& ctx, const EthernetFrame& frame) const {
    const FlowRule* best = nullptr;
    for (const auto& r : rules_) {
      if (!rule_matches(r.match, ctx, frame)) continue;
      if (!best || r.priority > best->priority || (r.priority == best->priority && r.seq < best->seq)) best = &r;
    }
    return best;
  }

  const std::vector<FlowRule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }

 private:
  std::vector<FlowRule> rules_;
  std::uint64_t next_seq_ = 0;
};

struct ProcessResult {
  std::vector<Emission> out;
  std::vector<DropRecord> drops;
  std::optional<std::uint64_t> rule;  // seq of the applied rule

  bool operator==(const ProcessResult&) const = default;
};

struct VswitchInstance {
  std::uint32_t id = 0;
  ExecContext exec_ctx = ExecContext::VmKernel;
  /// In/Out VFs, or PFs for a host-resident vswitch.
  std::vector<PortId> inout_ports;
  /// Gw VFs, or taps for a host-resident vswitch.
  std::map<TenantId, std::vector<PortId>> gw_ports;
  std::map<TenantId, std::uint32_t> vnis;
  FlowTable table;

  bool owns(PortId p) const {
    if (std::find(inout_ports.begin(), inout_ports.end(), p) != inout_ports.end()) return true;
    return datapath_of(p).has_value();
  }

  std::optional<TenantId> datapath_of(PortId p) const {
    for (const auto& [tenant, ports] : gw_ports) {
      if (std::find(ports.begin(), ports.end(), p) != ports.end()) return tenant;
    }
    return std::nullopt;
  }

  void install(std::vector<FlowRule> rules) {
    for (auto& r : rules) {
      for (const auto& a : r.actions) {
        if (auto* o = std::get_if<action::Output>(&a); o && !owns(o->port)) {
          throw ConfigError("vswitch " + std::to_string(id) + " does not own output port " + o->port.to_string());
        }
      }
      table.add(std::move(r));
    }
  }

  ProcessResult process_frame(PortId in_port, const EthernetFrame& frame) const {
    if (!owns(in_port)) throw ConfigError("vswitch " + std::to_string(id) + " has no port " + in_port.to_string());
    ProcessResult r;
    const FlowRule* rule = table.select(MatchContext{in_port, datapath_of(in_port)}, frame);
    if (!rule) {
      r.drops.push_back({DropReason::TableMiss, in_port});
      return r;
    }
    r.rule = rule->seq;
    EthernetFrame cur = frame;
    for (const auto& a : rule->actions) {
      if (auto* x = std::get_if<action::SetDstMac>(&a)) {
        cur.dst = x->mac;
      } else if (auto* x = std::get_if<action::SetSrcMac>(&a)) {
        cur.src = x->mac;
      } else if (auto* x = std::get_if<action::PushVxlan>(&a)) {
        cur = vxlan_encap(cur, x->vni, x->outer);
      } else if (std::holds_alternative<action::PopVxlan>(a)) {
        const Ipv4Packet* ip = cur.ipv4();
        if (!ip || !ip->vxlan()) {
          r.drops.push_back({DropReason::RuleDrop, in_port});
          return r;
        }
        cur = vxlan_decap(cur).inner;
      } else if (auto* x = std::get_if<action::Output>(&a)) {
        r.out.push_back({x->port, cur});
      } else if (auto* x = std::get_if<action::ArpReply>(&a)) {
        const ArpMessage* req = cur.arp();
        if (!req || req->op != ArpOp::Request) {
          r.drops.push_back({DropReason::RuleDrop, in_port});
          return r;
        }
        EthernetFrame reply;
        reply.dst = req->sender_mac;
        reply.src = x->mac;
        reply.payload = ArpMessage::reply(x->mac, req->target_ip, req->sender_mac, req->sender_ip);
        r.out.push_back({in_port, std::move(reply)});
      }
    }
    if (r.out.empty()) r.drops.push_back({DropReason::RuleDrop, in_port});
    return r;
  }
};

// Rule priorities used by the generators. Specific routes sit above the
// per-gateway default route so intra-tenant traffic hairpins in the vswitch.
inline constexpr int kArpPriority = 300;
inline constexpr int kVxlanIngressPriority = 250;
inline constexpr int kIngressPriority = 200;
inline constexpr int kChainPriority = 180;
inline constexpr int kVxlanEgressPriority = 150;
inline constexpr int kEgressPriority = 100;
inline constexpr int kTransitPriority = 10;

struct GatewayBinding {
  PortId port;
  MacAddress mac;
  PortId uplink;
  MacAddress uplink_mac;
};

struct VmBinding {
  std::optional<MacAddress> mac;
  std::optional<Ipv4Address> ip;
  std::size_t gateway = 0;  // index into TenantBinding::gateways
};

/// Everything the generators need to know about one tenant on one vswitch.
struct TenantBinding {
  TenantId tenant;
  std::optional<Ipv4Address> gateway_ip;
  std::optional<MacAddress> external_gw_mac;
  std::vector<GatewayBinding> gateways;
  std::vector<VmBinding> vms;
};

namespace detail {
inline void require_addressing(const TenantBinding& t) {
  const std::string who = "tenant " + t.tenant.value;
  if (!t.gateway_ip) throw IncompleteAddressing(who + ": gateway IP unassigned");
  if (!t.external_gw_mac) throw IncompleteAddressing(who + ": external gateway MAC unassigned");
  if (t.gateways.empty()) throw IncompleteAddressing(who + ": no gateway port");
  for (std::size_t i = 0; i < t.vms.size(); ++i) {
    const auto& vm = t.vms[i];
    if (!vm.mac || !vm.ip) throw IncompleteAddressing(who + ": VM " + std::to_string(i) + " lacks a MAC or IP");
    if (vm.gateway >= t.gateways.size()) throw IncompleteAddressing(who + ": VM gateway index out of range");
  }
}
}  // namespace detail

/// Per VM: one ingress route. Per gateway port: one default egress route and
/// one ARP responder entry for the virtual gateway IP.
inline std::vector<FlowRule> build_tenant_rules(const TenantBinding& t) {
  detail::require_addressing(t);
  std::vector<FlowRule> rules;
  for (const auto& vm : t.vms) {
    const auto& gw = t.gateways[vm.gateway];
    rules.push_back({kIngressPriority,
                     FlowMatch{.datapath = t.tenant, .dst_ip = Ipv4Prefix{*vm.ip, 32}},
                     {action::SetDstMac{*vm.mac}, action::SetSrcMac{gw.mac}, action::Output{gw.port}}});
  }
  for (const auto& gw : t.gateways) {
    rules.push_back({kEgressPriority,
                     FlowMatch{.in_port = gw.port, .datapath = t.tenant, .dst_ip = Ipv4Prefix{Ipv4Address(), 0}},
                     {action::SetDstMac{*t.external_gw_mac}, action::SetSrcMac{gw.uplink_mac},
                      action::Output{gw.uplink}}});
  }
  for (const auto& gw : t.gateways) {
    rules.push_back({kArpPriority, FlowMatch{.in_port = gw.port, .datapath = t.tenant, .arp_request_for = *t.gateway_ip},
                     {action::ArpReply{gw.mac}}});
  }
  return rules;
}

struct VxlanUnderlay {
  Ipv4Address local_ip;
  Ipv4Address remote_ip;

  bool operator==(const VxlanUnderlay&) const = default;
};

/// Overlay routes for a tenant: decapsulate (vni, inner dst IP) to the VM,
/// encapsulate everything leaving a gateway port toward the remote VTEP.
inline std::vector<FlowRule> build_vxlan_rules(const VswitchInstance& vs, const TenantBinding& t, std::uint32_t vni,
                                               const VxlanUnderlay& underlay) {
  if (vni >= kVniLimit) throw VniOutOfRange("VNI out of range: " + std::to_string(vni));
  for (const auto& [other, used] : vs.vnis) {
    if (used == vni && other != t.tenant) {
      throw DuplicateVni("VNI " + std::to_string(vni) + " already used by tenant " + other.value + " on vswitch " +
                         std::to_string(vs.id));
    }
  }
  detail::require_addressing(t);
  std::vector<FlowRule> rules;
  for (const auto& vm : t.vms) {
    const auto& gw = t.gateways[vm.gateway];
    rules.push_back({kVxlanIngressPriority,
                     FlowMatch{.datapath = t.tenant, .dst_ip = Ipv4Prefix{*vm.ip, 32}, .vni = vni},
                     {action::PopVxlan{}, action::SetDstMac{*vm.mac}, action::SetSrcMac{gw.mac},
                      action::Output{gw.port}}});
  }
  for (const auto& gw : t.gateways) {
    UnderlayAddressing outer{gw.uplink_mac, *t.external_gw_mac, underlay.local_ip, underlay.remote_ip};
    rules.push_back({kVxlanEgressPriority,
                     FlowMatch{.in_port = gw.port, .datapath = t.tenant, .dst_ip = Ipv4Prefix{Ipv4Address(), 0}},
                     {action::PushVxlan{vni, outer}, action::Output{gw.uplink}}});
  }
  return rules;
}

struct UplinkBinding {
  PortId port;
  MacAddress mac;
};

/// Physical-to-physical forwarding: traffic for the external prefix that
/// arrives on uplink k leaves on uplink k+1 (mod n).
inline std::vector<FlowRule> build_transit_rules(const std::vector<UplinkBinding>& uplinks, Ipv4Prefix external,
                                                 MacAddress external_gw_mac) {
  std::vector<FlowRule> rules;
  for (std::size_t k = 0; k < uplinks.size(); ++k) {
    const auto& out = uplinks[(k + 1) % uplinks.size()];
    rules.push_back({kTransitPriority, FlowMatch{.in_port = uplinks[k].port, .dst_ip = external},
                     {action::SetDstMac{external_gw_mac}, action::SetSrcMac{out.mac}, action::Output{out.port}}});
  }
  return rules;
}

}  // namespace mts
