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

// Threat model over a deployment plan.
//
// The component graph is derived from the plan, not declared: NicMediated
// edges come from probing a copy of the configured NIC with frames from every
// port to every configured MAC, broadcast and an unknown MAC, untagged and
// tagged with each VLAN in use. Software edges come from taps and from the
// host's own structure.
//
// An attacker who controls a node also controls everything co-resident with
// it. It is exposed to (can send arbitrary frames or calls into) any node one
// SoftwareDirect/NicMediated edge away from what it controls, and to whatever
// shares an address space with such a node.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mts/common.hpp"
#include "mts/dataplane.hpp"
#include "mts/nic.hpp"
#include "mts/orchestrator.hpp"

namespace mts {

enum class NodeKind : std::uint8_t { HostKernel, HostUser, Nic, Vswitch, Tenant };

struct Node {
  NodeKind kind = NodeKind::HostKernel;
  std::uint32_t index = 0;

  static constexpr Node host_kernel() { return {NodeKind::HostKernel, 0}; }
  static constexpr Node host_user() { return {NodeKind::HostUser, 0}; }
  static constexpr Node nic() { return {NodeKind::Nic, 0}; }
  static constexpr Node vswitch(std::uint32_t i) { return {NodeKind::Vswitch, i}; }
  static constexpr Node tenant(std::uint32_t i) { return {NodeKind::Tenant, i}; }

  constexpr bool is_host() const { return kind == NodeKind::HostKernel || kind == NodeKind::HostUser; }

  auto operator<=>(const Node&) const = default;
  bool operator==(const Node&) const = default;
};

inline std::string to_string(const Node& n) {
  switch (n.kind) {
    case NodeKind::HostKernel: return "host_kernel";
    case NodeKind::HostUser: return "host_user";
    case NodeKind::Nic: return "nic";
    case NodeKind::Vswitch: return "vswitch:" + std::to_string(n.index);
    case NodeKind::Tenant: return "vm:" + std::to_string(n.index);
  }
  return "?";
}

enum class EdgeKind : std::uint8_t { NicMediated, SoftwareDirect, CoResident };

constexpr std::string_view to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::NicMediated: return "nic_mediated";
    case EdgeKind::SoftwareDirect: return "software_direct";
    case EdgeKind::CoResident: return "co_resident";
  }
  return "?";
}

/// Channel from `a` to `b`. NicMediated edges are one-way (what the NIC
/// lets `a` deliver to `b`); the other kinds are stored in both directions.
struct Edge {
  Node a;
  Node b;
  EdgeKind kind = EdgeKind::NicMediated;

  auto operator<=>(const Edge&) const = default;
  bool operator==(const Edge&) const = default;
};

enum class Mechanism : std::uint8_t { VmIsolation, UserKernelSeparation };

constexpr std::string_view to_string(Mechanism m) {
  return m == Mechanism::VmIsolation ? "VmIsolation" : "UserKernelSeparation";
}

struct ComponentGraph {
  std::vector<Node> nodes;
  std::set<Edge> edges;
  std::map<std::uint32_t, ExecContext> vswitch_ctx;
  std::map<std::uint32_t, TenantId> tenant_of;

  bool has(const Node& n) const { return std::find(nodes.begin(), nodes.end(), n) != nodes.end(); }

  void connect(Node a, Node b, EdgeKind k) {
    if (a == b) return;
    edges.insert({a, b, k});
    if (k != EdgeKind::NicMediated) edges.insert({b, a, k});
  }

  /// Outgoing edges of `n`.
  std::vector<std::pair<Node, EdgeKind>> neighbours(const Node& n) const {
    std::vector<std::pair<Node, EdgeKind>> out;
    for (auto it = edges.lower_bound(Edge{n, Node{}, EdgeKind::NicMediated}); it != edges.end() && it->a == n; ++it) {
      out.emplace_back(it->b, it->kind);
    }
    return out;
  }
};

namespace detail {

/// Node owning a NIC port. Fabric ports lead off the server and map to none.
inline std::vector<Node> owners_of(const DeploymentPlan& plan, PortId p) {
  std::vector<Node> out;
  if (p.kind == PortKind::Pf) {
    out.push_back(Node::host_kernel());
    if (auto vs = plan.vswitch_owning(p)) out.push_back(Node::vswitch(*vs));
  } else if (p.kind == PortKind::Vf) {
    const auto& owner = plan.nic.vf_config(p).attached_to;
    switch (owner.kind) {
      case ComponentKind::Host: out.push_back(Node::host_kernel()); break;
      case ComponentKind::Vswitch: out.push_back(Node::vswitch(owner.index)); break;
      case ComponentKind::Tenant: out.push_back(Node::tenant(owner.index)); break;
    }
  }
  return out;
}

inline MacAddress probe_unknown_mac() { return MacAddress({0x02, 0xee, 0xee, 0xee, 0xee, 0xee}); }

}  // namespace detail

inline ComponentGraph build_graph(const DeploymentPlan& plan) {
  ComponentGraph g;
  g.nodes = {Node::host_kernel(), Node::host_user(), Node::nic()};
  for (const auto& vs : plan.vswitches) {
    g.nodes.push_back(Node::vswitch(vs.id));
    g.vswitch_ctx[vs.id] = vs.exec_ctx;
  }
  for (const auto& vm : plan.tenant_vms) {
    g.nodes.push_back(Node::tenant(vm.id));
    g.tenant_of[vm.id] = vm.tenant;
  }

  g.connect(Node::host_user(), Node::host_kernel(), EdgeKind::SoftwareDirect);
  for (const auto& vs : plan.vswitches) {
    if (vs.exec_ctx == ExecContext::HostKernel) g.connect(Node::vswitch(vs.id), Node::host_kernel(), EdgeKind::CoResident);
    if (vs.exec_ctx == ExecContext::HostUser) g.connect(Node::vswitch(vs.id), Node::host_user(), EdgeKind::CoResident);
  }
  for (const auto& [tap, vm] : plan.taps) {
    if (auto vs = plan.vswitch_owning(tap)) g.connect(Node::tenant(vm), Node::vswitch(*vs), EdgeKind::SoftwareDirect);
  }

  std::vector<MacAddress> dsts{MacAddress::broadcast(), detail::probe_unknown_mac()};
  for (PortId p : plan.nic.ports()) {
    if (auto m = plan.nic.mac_of(p)) dsts.push_back(*m);
  }
  std::vector<std::optional<VlanId>> tags{std::nullopt};
  for (const auto& [t, v] : plan.vlan_map) tags.emplace_back(v);

  NicSwitch probe = plan.nic;
  for (PortId in : plan.nic.ports()) {
    const auto senders = detail::owners_of(plan, in);
    if (senders.empty()) continue;
    const MacAddress src = plan.nic.mac_of(in).value_or(detail::probe_unknown_mac());
    for (const auto& dst : dsts) {
      for (const auto& tag : tags) {
        EthernetFrame f;
        f.dst = dst;
        f.src = src;
        f.vlan = tag;
        f.payload = OpaquePayload{0x88b5, {}};
        for (const auto& e : probe.switch_frame(in, f).out) {
          for (const Node& to : detail::owners_of(plan, e.port)) {
            for (const Node& from : senders) g.connect(from, to, EdgeKind::NicMediated);
          }
        }
      }
    }
  }
  return g;
}

struct CompromiseReport {
  Node compromised;
  std::set<Node> controlled;
  std::set<Node> exposed;
  std::set<TenantId> reachable_tenants;
  bool host_reachable = false;
  /// One line per exposed node: how the attacker gets there.
  std::vector<std::string> paths;
};

namespace detail {

inline void close_co_resident(const ComponentGraph& g, std::set<Node>& set, std::map<Node, std::string>& why) {
  std::deque<Node> work(set.begin(), set.end());
  while (!work.empty()) {
    const Node n = work.front();
    work.pop_front();
    for (const auto& [m, k] : g.neighbours(n)) {
      if (k != EdgeKind::CoResident || set.count(m)) continue;
      set.insert(m);
      why[m] = why[n] + " -co_resident-> " + to_string(m);
      work.push_back(m);
    }
  }
}

}  // namespace detail

inline CompromiseReport compromise(const DeploymentPlan& plan, const ComponentGraph& g, const Node& target) {
  if (target.kind == NodeKind::Nic) throw ConfigError("the NIC switch is part of the trusted base and cannot be compromised");
  if (!g.has(target)) throw UnknownComponent("no component " + to_string(target) + " in this deployment");
  CompromiseReport r;
  r.compromised = target;
  std::map<Node, std::string> why;
  why[target] = to_string(target);
  r.controlled.insert(target);
  detail::close_co_resident(g, r.controlled, why);

  r.exposed = r.controlled;
  for (const Node& c : r.controlled) {
    for (const auto& [m, k] : g.neighbours(c)) {
      if (k == EdgeKind::CoResident || r.exposed.count(m) || m.kind == NodeKind::Nic) continue;
      r.exposed.insert(m);
      why[m] = why[c] + " -" + std::string(to_string(k)) + "-> " + to_string(m);
    }
  }
  detail::close_co_resident(g, r.exposed, why);

  for (const Node& n : r.exposed) {
    if (n.is_host()) r.host_reachable = true;
    if (n.kind == NodeKind::Tenant) r.reachable_tenants.insert(g.tenant_of.at(n.index));
    r.paths.push_back(why[n]);
  }
  (void)plan;
  return r;
}

inline CompromiseReport compromise(const DeploymentPlan& plan, const Node& target) {
  return compromise(plan, build_graph(plan), target);
}

inline CompromiseReport compromise(const DeploymentPlan& plan, const ComponentId& c) {
  switch (c.kind) {
    case ComponentKind::Host: return compromise(plan, Node::host_kernel());
    case ComponentKind::Vswitch: return compromise(plan, Node::vswitch(c.index));
    case ComponentKind::Tenant: return compromise(plan, Node::tenant(c.index));
  }
  throw UnknownComponent("unknown component kind");
}

inline std::set<Mechanism> mechanisms_of(ExecContext c) {
  switch (c) {
    case ExecContext::HostKernel: return {};
    case ExecContext::HostUser: return {Mechanism::UserKernelSeparation};
    case ExecContext::VmKernel: return {Mechanism::VmIsolation};
    case ExecContext::VmUser: return {Mechanism::VmIsolation, Mechanism::UserKernelSeparation};
  }
  return {};
}

/// Mechanisms that must all fail for code in tenant VM `vm`, attacking
/// through a vswitch it can reach, to control the host kernel. With several
/// reachable vswitches the weakest one counts.
inline std::set<Mechanism> security_mechanisms(const DeploymentPlan& plan, std::uint32_t vm) {
  const ComponentGraph g = build_graph(plan);
  const CompromiseReport r = compromise(plan, g, Node::tenant(vm));
  std::optional<std::set<Mechanism>> weakest;
  for (const Node& n : r.exposed) {
    if (n.kind != NodeKind::Vswitch) continue;
    auto m = mechanisms_of(g.vswitch_ctx.at(n.index));
    if (!weakest || m.size() < weakest->size()) weakest = std::move(m);
  }
  if (!weakest) throw ConfigError("VM " + std::to_string(vm) + " reaches no vswitch");
  return *weakest;
}

}  // namespace mts
