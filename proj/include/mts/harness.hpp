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

// Simulation engine and the experiments built on it.
//
// The engine holds one input queue per component. Each step drains the NIC
// queue, then every vswitch queue in id order, then every tenant queue in VM
// order. A queue is drained up to the length it had when its turn came:
// frames handed to a component later in the order are processed in the same
// step, frames handed back to an earlier one wait for the next. Every frame copy
// carries the id of the packet it descends from, and each packet numbers its
// own trace events.
//
// Time is counted in hops. NIC traversals (switch_frame invocations) stand in
// for latency.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mts/common.hpp"
#include "mts/dataplane.hpp"
#include "mts/endpoints.hpp"
#include "mts/frames.hpp"
#include "mts/nic.hpp"
#include "mts/orchestrator.hpp"
#include "mts/trace.hpp"

namespace mts {

/// Addressing of the traffic generator behind fabric port 0.
inline constexpr MacAddress kLoadGenMac = MacAddress({0x02, 0x4c, 0x47, 0x00, 0x00, 0x01});
inline Ipv4Address load_gen_ip(std::size_t flow) {
  return Ipv4Address((203u << 24) | (0u << 16) | (113u << 8) | static_cast<std::uint32_t>(1 + flow % 250));
}

enum class ScenarioKind : std::uint8_t { P2p, P2v, V2v, T2t };

constexpr std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::P2p: return "p2p";
    case ScenarioKind::P2v: return "p2v";
    case ScenarioKind::V2v: return "v2v";
    case ScenarioKind::T2t: return "t2t";
  }
  return "?";
}

inline ScenarioKind parse_scenario_kind(std::string_view s) {
  for (auto k : {ScenarioKind::P2p, ScenarioKind::P2v, ScenarioKind::V2v, ScenarioKind::T2t}) {
    if (to_string(k) == s) return k;
  }
  throw ScenarioError("unknown scenario kind: " + std::string(s));
}

struct FlowSpec {
  /// P2v: target VM. T2t: the echoing VM. V2v/P2p: unused.
  std::uint32_t vm = 0;
  /// Destination IP for P2p and V2v flows.
  std::optional<Ipv4Address> dst_ip;
  std::size_t size = 64;
  std::size_t count = 1;

  bool operator==(const FlowSpec&) const = default;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::P2v;
  std::vector<FlowSpec> flows;
  std::uint64_t seed = 0;
  /// V2v: forwarder VMs in chain order. T2t: the originating VM is first.
  std::vector<std::uint32_t> chain;

  bool operator==(const Scenario&) const = default;
};

struct EngineConfig {
  std::size_t max_steps = 10000;
  bool record_trace = true;
};

struct FlowMetrics {
  std::size_t flow_id = 0;
  std::size_t injected = 0;
  std::size_t delivered = 0;
  std::size_t dropped = 0;
  std::map<std::string, std::size_t> drop_reasons;
  std::size_t traversals_min = 0;
  std::size_t traversals_max = 0;
  double traversals_mean = 0.0;
  std::size_t hops_min = 0;
  std::size_t hops_max = 0;
  double hops_mean = 0.0;

  bool operator==(const FlowMetrics&) const = default;
};

struct Metrics {
  std::vector<FlowMetrics> flows;
  std::map<std::string, std::size_t> drops;
  std::map<std::string, std::size_t> links;      // "from->to" frame counts
  std::map<std::string, std::size_t> rule_hits;  // "vswitch:N/seq=S"
  std::size_t steps = 0;

  std::size_t injected() const {
    std::size_t n = 0;
    for (const auto& f : flows) n += f.injected;
    return n;
  }
  std::size_t delivered() const {
    std::size_t n = 0;
    for (const auto& f : flows) n += f.delivered;
    return n;
  }

  bool operator==(const Metrics&) const = default;
};

/// Per-packet outcome.
struct PacketRecord {
  std::uint64_t id = 0;
  std::size_t flow = 0;
  bool delivered = false;
  std::optional<DropReason> first_drop;
  std::uint32_t events = 0;
  std::size_t nic_traversals = 0;
  std::size_t hops = 0;  // component visits: NIC, vswitch, tenant

  bool operator==(const PacketRecord&) const = default;
};

/// Where a flow's packets count as delivered.
struct DeliveryTarget {
  std::optional<Ipv4Address> fabric_dst_ip;  // leaves via a fabric port with this (inner) dst IP
  std::optional<std::uint32_t> vm;           // consumed by this VM

  bool operator==(const DeliveryTarget&) const = default;
};

class Simulation {
 public:
  explicit Simulation(DeploymentPlan plan, EngineConfig cfg = {})
      : plan_(std::move(plan)), cfg_(cfg), vs_q_(plan_.vswitches.size()), vm_q_(plan_.tenant_vms.size()) {}

  DeploymentPlan& plan() { return plan_; }
  const DeploymentPlan& plan() const { return plan_; }

  std::size_t add_flow(DeliveryTarget target) {
    targets_.push_back(target);
    return targets_.size() - 1;
  }

  /// Puts `frame` on the wire at fabric port `k`.
  std::uint64_t inject_fabric(std::size_t k, const EthernetFrame& frame, std::size_t flow) {
    const std::uint64_t id = new_packet(flow);
    const PortId port = PortId::fabric(static_cast<std::uint16_t>(k));
    record(id, TraceKind::Inject, TraceLocation::Fabric, 0, port, frame);
    nic_q_.push_back({id, port, frame});
    return id;
  }

  /// Has VM `vm` send a data packet to `dst_ip`.
  std::uint64_t inject_vm(std::uint32_t vm, Ipv4Address dst_ip, std::size_t size, std::size_t flow) {
    const std::uint64_t id = new_packet(flow);
    TenantVm& v = plan_.tenant_vms.at(vm);
    EthernetFrame f = data_frame(MacAddress(), v.mac, v.ip, dst_ip, size, v.payload_counter++);
    for (auto& out : send_frame(v, std::move(f), id)) tenant_emit(vm, id, std::move(out));
    return id;
  }

  /// Runs until every queue is empty.
  void run() {
    while (!nic_q_.empty() || any_nonempty(vs_q_) || any_nonempty(vm_q_)) {
      if (tick_ >= cfg_.max_steps) {
        throw NonQuiescent("simulation still busy after " + std::to_string(cfg_.max_steps) + " steps");
      }
      ++tick_;
      for (std::size_t n = nic_q_.size(); n > 0; --n) {
        Item it = std::move(nic_q_.front());
        nic_q_.pop_front();
        nic_step(it);
      }
      for (std::size_t i = 0; i < vs_q_.size(); ++i) {
        for (std::size_t n = vs_q_[i].size(); n > 0; --n) {
          Item it = std::move(vs_q_[i].front());
          vs_q_[i].pop_front();
          vswitch_step(static_cast<std::uint32_t>(i), it);
        }
      }
      for (std::size_t i = 0; i < vm_q_.size(); ++i) {
        for (std::size_t n = vm_q_[i].size(); n > 0; --n) {
          Item it = std::move(vm_q_[i].front());
          vm_q_[i].pop_front();
          tenant_step(static_cast<std::uint32_t>(i), it);
        }
      }
    }
  }

  const std::vector<TraceEvent>& trace() const { return trace_; }
  const std::vector<PacketRecord>& packets() const { return packets_; }
  std::size_t steps() const { return tick_; }

  std::vector<TraceEvent> trace_of(std::uint64_t packet) const {
    std::vector<TraceEvent> out;
    for (const auto& e : trace_) {
      if (e.packet == packet) out.push_back(e);
    }
    return out;
  }

  Metrics metrics() const {
    Metrics m = base_;
    m.steps = tick_;
    m.flows.resize(targets_.size());
    std::vector<std::vector<const PacketRecord*>> delivered(targets_.size());
    for (std::size_t i = 0; i < targets_.size(); ++i) m.flows[i].flow_id = i;
    for (const auto& p : packets_) {
      auto& f = m.flows[p.flow];
      ++f.injected;
      if (p.delivered) {
        ++f.delivered;
        delivered[p.flow].push_back(&p);
      } else {
        ++f.dropped;
        const std::string reason(to_string(p.first_drop.value_or(DropReason::Absorbed)));
        ++f.drop_reasons[reason];
      }
    }
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      auto& f = m.flows[i];
      if (delivered[i].empty()) continue;
      f.traversals_min = f.hops_min = SIZE_MAX;
      double t = 0, h = 0;
      for (const auto* p : delivered[i]) {
        f.traversals_min = std::min(f.traversals_min, p->nic_traversals);
        f.traversals_max = std::max(f.traversals_max, p->nic_traversals);
        f.hops_min = std::min(f.hops_min, p->hops);
        f.hops_max = std::max(f.hops_max, p->hops);
        t += static_cast<double>(p->nic_traversals);
        h += static_cast<double>(p->hops);
      }
      f.traversals_mean = t / static_cast<double>(delivered[i].size());
      f.hops_mean = h / static_cast<double>(delivered[i].size());
    }
    return m;
  }

 private:
  struct Item {
    std::uint64_t packet = 0;
    PortId port;
    EthernetFrame frame;
  };

  template <class Q>
  static bool any_nonempty(const std::vector<Q>& qs) {
    return std::any_of(qs.begin(), qs.end(), [](const Q& q) { return !q.empty(); });
  }

  std::uint64_t new_packet(std::size_t flow) {
    if (flow >= targets_.size()) throw ScenarioError("unknown flow " + std::to_string(flow));
    PacketRecord r;
    r.id = packets_.size();
    r.flow = flow;
    packets_.push_back(r);
    return r.id;
  }

  void record(std::uint64_t pkt, TraceKind kind, TraceLocation loc, std::uint32_t component, PortId port,
              const EthernetFrame& f, std::optional<DropReason> drop = std::nullopt) {
    record(pkt, kind, loc, component, port, HeaderSnapshot::of(f), drop);
  }

  void record(std::uint64_t pkt, TraceKind kind, TraceLocation loc, std::uint32_t component, PortId port,
              const HeaderSnapshot& header, std::optional<DropReason> drop = std::nullopt) {
    PacketRecord& p = packets_[pkt];
    const std::uint32_t step = p.events++;
    if (kind == TraceKind::NicIngress) ++p.nic_traversals;
    if (kind == TraceKind::NicIngress || kind == TraceKind::VswitchRx || kind == TraceKind::TenantRx) ++p.hops;
    if (drop) {
      if (!p.first_drop) p.first_drop = drop;
      ++base_.drops[std::string(to_string(*drop))];
    }
    if (!cfg_.record_trace) return;
    TraceEvent e;
    e.packet = pkt;
    e.step = step;
    e.tick = static_cast<std::uint32_t>(tick_);
    e.kind = kind;
    e.location = loc;
    e.component = component;
    e.port = port;
    e.header = header;
    e.drop = drop;
    trace_.push_back(std::move(e));
  }

  void link(const std::string& from, const std::string& to) { ++base_.links[from + "->" + to]; }

  static std::optional<Ipv4Address> delivered_dst_ip(const EthernetFrame& f) {
    const Ipv4Packet* ip = f.ipv4();
    if (!ip) return std::nullopt;
    if (const auto* vx = ip->vxlan(); vx && vx->inner) {
      if (const Ipv4Packet* in = vx->inner->ipv4()) return in->dst;
      return std::nullopt;
    }
    return ip->dst;
  }

  void nic_step(const Item& it) {
    const SwitchResult r = plan_.nic.switch_frame(it.port, it.frame);
    // The ingress snapshot shows the internal VLAN once the frame is classified.
    HeaderSnapshot h = HeaderSnapshot::of(it.frame);
    if (r.classified) h.vlan = r.classified->is_untagged() ? std::nullopt : r.classified;
    record(it.packet, TraceKind::NicIngress, TraceLocation::NicSwitch, 0, it.port, h);
    for (const auto& d : r.drops) {
      record(it.packet, TraceKind::Drop, TraceLocation::NicSwitch, 0, d.port, it.frame, d.reason);
    }
    for (const auto& e : r.out) {
      record(it.packet, TraceKind::NicEgress, TraceLocation::NicSwitch, 0, e.port, e.frame);
      link("nic", e.port.to_string());
      deliver_from_nic(it.packet, e);
    }
  }

  void deliver_from_nic(std::uint64_t pkt, const Emission& e) {
    switch (e.port.kind) {
      case PortKind::Fabric: {
        record(pkt, TraceKind::FabricRx, TraceLocation::Fabric, e.port.index, e.port, e.frame);
        const auto& target = targets_[packets_[pkt].flow];
        if (target.fabric_dst_ip && delivered_dst_ip(e.frame) == target.fabric_dst_ip) packets_[pkt].delivered = true;
        return;
      }
      case PortKind::Pf: {
        if (auto vs = plan_.vswitch_owning(e.port)) {
          vs_q_[*vs].push_back({pkt, e.port, e.frame});
        } else {
          record(pkt, TraceKind::HostRx, TraceLocation::Host, 0, e.port, e.frame);
        }
        return;
      }
      case PortKind::Vf: {
        const ComponentId owner = plan_.nic.vf_config(e.port).attached_to;
        if (owner.kind == ComponentKind::Vswitch) {
          vs_q_.at(owner.index).push_back({pkt, e.port, e.frame});
        } else if (owner.kind == ComponentKind::Tenant) {
          vm_q_.at(owner.index).push_back({pkt, e.port, e.frame});
        } else {
          record(pkt, TraceKind::HostRx, TraceLocation::Host, 0, e.port, e.frame);
        }
        return;
      }
      case PortKind::Tap: return;
    }
  }

  void vswitch_step(std::uint32_t id, const Item& it) {
    const VswitchInstance& vs = plan_.vswitches[id];
    record(it.packet, TraceKind::VswitchRx, TraceLocation::Vswitch, id, it.port, it.frame);
    const ProcessResult r = vs.process_frame(it.port, it.frame);
    if (r.rule) ++base_.rule_hits["vswitch:" + std::to_string(id) + "/seq=" + std::to_string(*r.rule)];
    for (const auto& d : r.drops) {
      record(it.packet, TraceKind::Drop, TraceLocation::Vswitch, id, d.port, it.frame, d.reason);
    }
    for (const auto& e : r.out) {
      record(it.packet, TraceKind::VswitchTx, TraceLocation::Vswitch, id, e.port, e.frame);
      link("vswitch:" + std::to_string(id), e.port.to_string());
      if (e.port.kind == PortKind::Tap) {
        const std::uint32_t vm = plan_.taps.at(e.port);
        record(it.packet, TraceKind::SoftLink, TraceLocation::Tenant, vm, e.port, e.frame);
        vm_q_[vm].push_back({it.packet, e.port, e.frame});
      } else {
        nic_q_.push_back({it.packet, e.port, e.frame});
      }
    }
  }

  void tenant_step(std::uint32_t vm, const Item& it) {
    record(it.packet, TraceKind::TenantRx, TraceLocation::Tenant, vm, it.port, it.frame);
    const auto& target = targets_[packets_[it.packet].flow];
    if (target.vm == vm && it.frame.ipv4() && it.frame.dst == plan_.tenant_vms[vm].mac) {
      packets_[it.packet].delivered = true;
    }
    for (auto& out : tenant_react(plan_.tenant_vms[vm], it.frame)) {
      tenant_emit(vm, out.released_tag.value_or(it.packet), std::move(out.frame));
    }
  }

  void tenant_emit(std::uint32_t vm, std::uint64_t pkt, EthernetFrame f) {
    const PortId port = plan_.tenant_vms[vm].port;
    record(pkt, TraceKind::TenantTx, TraceLocation::Tenant, vm, port, f);
    link("vm:" + std::to_string(vm), port.to_string());
    if (port.kind == PortKind::Tap) {
      const auto vs = plan_.vswitch_owning(port);
      if (!vs) throw ConfigError("tap " + port.to_string() + " has no vswitch");
      record(pkt, TraceKind::SoftLink, TraceLocation::Vswitch, *vs, port, f);
      vs_q_[*vs].push_back({pkt, port, std::move(f)});
    } else {
      nic_q_.push_back({pkt, port, std::move(f)});
    }
  }

  DeploymentPlan plan_;
  EngineConfig cfg_;
  std::deque<Item> nic_q_;
  std::vector<std::deque<Item>> vs_q_;
  std::vector<std::deque<Item>> vm_q_;
  std::vector<DeliveryTarget> targets_;
  std::vector<PacketRecord> packets_;
  std::vector<TraceEvent> trace_;
  Metrics base_;
  std::size_t tick_ = 0;
};

// ---------------------------------------------------------------------------
// Scenarios

namespace detail {

inline std::vector<std::uint32_t> first_vm_per_tenant(const DeploymentPlan& plan) {
  std::vector<std::uint32_t> out;
  for (const auto& t : plan.spec.tenants) {
    for (const auto& vm : plan.tenant_vms) {
      if (vm.tenant == t.id) {
        out.push_back(vm.id);
        break;
      }
    }
  }
  return out;
}

inline Ipv4Address external_host(const DeploymentPlan& plan, std::uint32_t n) {
  return Ipv4Address(plan.spec.external_prefix.network().value() + n);
}

inline MacAddress port_mac(const DeploymentPlan& plan, PortId p) {
  if (auto m = plan.nic.mac_of(p)) return *m;
  throw ScenarioError("port " + p.to_string() + " has no MAC");
}

}  // namespace detail

/// Standard scenario: one flow per tenant (P2p, P2v, V2v) or one flow
/// between two VMs of the first tenant with at least two (T2t).
inline Scenario make_scenario(const DeploymentPlan& plan, ScenarioKind kind, std::size_t packets, std::uint64_t seed,
                              std::size_t size = 64) {
  Scenario s;
  s.kind = kind;
  s.seed = seed;
  const auto firsts = detail::first_vm_per_tenant(plan);
  switch (kind) {
    case ScenarioKind::P2p:
      for (std::size_t i = 0; i < firsts.size(); ++i) {
        s.flows.push_back({firsts[i], detail::external_host(plan, static_cast<std::uint32_t>(10 + i)), size, packets});
      }
      break;
    case ScenarioKind::P2v:
      for (auto vm : firsts) s.flows.push_back({vm, std::nullopt, size, packets});
      break;
    case ScenarioKind::V2v:
      // First two VMs behind distinct gateway ports.
      for (const auto& x : plan.tenant_vms) {
        for (const auto& y : plan.tenant_vms) {
          if (s.chain.empty() && y.id > x.id && plan.gateway_of(x.id).first != plan.gateway_of(y.id).first) {
            s.chain = {x.id, y.id};
          }
        }
      }
      if (s.chain.empty()) throw ScenarioError("v2v needs two tenant VMs behind distinct gateway ports");
      for (std::size_t i = 0; i < firsts.size(); ++i) {
        s.flows.push_back({firsts[i], detail::external_host(plan, static_cast<std::uint32_t>(100 + i)), size, packets});
      }
      break;
    case ScenarioKind::T2t: {
      for (const auto& t : plan.spec.tenants) {
        if (t.vm_count < 2) continue;
        std::vector<std::uint32_t> vms;
        for (const auto& vm : plan.tenant_vms) {
          if (vm.tenant == t.id) vms.push_back(vm.id);
        }
        s.chain = {vms[0]};
        s.flows.push_back({vms[1], std::nullopt, size, packets});
        break;
      }
      if (s.flows.empty()) throw ScenarioError("t2t needs a tenant with at least two VMs");
      break;
    }
  }
  return s;
}

namespace detail {

/// Service-chain rules steering traffic for `dst` through the forwarders.
inline void install_chain(DeploymentPlan& plan, const std::vector<std::uint32_t>& chain, Ipv4Address dst) {
  if (chain.size() != 2) throw ScenarioError("v2v chain needs exactly two forwarders");
  const std::uint32_t x = chain[0], y = chain[1];
  if (x == y) throw ScenarioError("v2v forwarders must be distinct VMs");
  const auto [gx, gx_mac] = plan.gateway_of(x);
  const auto [gy, gy_mac] = plan.gateway_of(y);
  if (gx == gy) throw ScenarioError("v2v forwarders must sit behind distinct gateway ports");
  const auto vsx = plan.vswitch_owning(gx);
  const auto vsy = plan.vswitch_owning(gy);
  const Ipv4Prefix host{dst, 32};
  const auto to_vm = [&](PortId gw, MacAddress gw_mac, std::uint32_t vm) {
    return std::vector<Action>{action::SetDstMac{plan.tenant_vms[vm].mac}, action::SetSrcMac{gw_mac},
                               action::Output{gw}};
  };
  auto& X = plan.vswitches[*vsx];
  for (PortId u : X.inout_ports) X.install({{kChainPriority, FlowMatch{.in_port = u, .dst_ip = host}, to_vm(gx, gx_mac, x)}});
  if (vsx == vsy) {
    X.install({{kChainPriority, FlowMatch{.in_port = gx, .dst_ip = host}, to_vm(gy, gy_mac, y)}});
    return;
  }
  // Different compartments: hand over through the NIC between uplinks.
  auto& Y = plan.vswitches[*vsy];
  const PortId ux = X.inout_ports.front();
  const PortId uy = Y.inout_ports.front();
  X.install({{kChainPriority, FlowMatch{.in_port = gx, .dst_ip = host},
              {action::SetDstMac{port_mac(plan, uy)}, action::SetSrcMac{port_mac(plan, ux)}, action::Output{ux}}}});
  for (PortId u : Y.inout_ports) Y.install({{kChainPriority, FlowMatch{.in_port = u, .dst_ip = host}, to_vm(gy, gy_mac, y)}});
}

/// Frame the load generator sends for `flow` toward a vswitch entry port.
inline EthernetFrame load_gen_frame(const DeploymentPlan& plan, const TenantId& via, Ipv4Address dst,
                                    std::size_t flow, std::size_t size, std::uint64_t seed) {
  const MacAddress entry = port_mac(plan, plan.entry_port(via));
  EthernetFrame f = data_frame(entry, kLoadGenMac, load_gen_ip(flow), dst, size, seed);
  if (auto vni = plan.tenant_spec(via).vni) {
    const auto& u = *plan.spec.underlay;
    f = vxlan_encap(f, *vni, UnderlayAddressing{kLoadGenMac, entry, u.remote_ip, u.local_ip});
  }
  return f;
}

}  // namespace detail

struct RunResult {
  Metrics metrics;
  std::vector<TraceEvent> trace;
  std::vector<PacketRecord> packets;
};

/// Drives `scenario` on a private copy of `plan`. Packets of all flows are
/// injected in a seeded random order, then the engine runs to quiescence.
inline RunResult run_scenario(const DeploymentPlan& plan, const Scenario& scenario, EngineConfig cfg = {}) {
  DeploymentPlan p = plan;
  for (const auto& f : scenario.flows) {
    if (f.vm >= p.tenant_vms.size()) throw ScenarioError("flow names unknown VM " + std::to_string(f.vm));
  }
  for (auto vm : scenario.chain) {
    if (vm >= p.tenant_vms.size()) throw ScenarioError("chain names unknown VM " + std::to_string(vm));
  }

  switch (scenario.kind) {
    case ScenarioKind::P2v:
      for (auto& vm : p.tenant_vms) vm.app = app::Echo{};
      break;
    case ScenarioKind::V2v:
      for (auto vm : scenario.chain) p.tenant_vms[vm].app = app::L2Fwd{p.gateway_of(vm).second};
      for (const auto& f : scenario.flows) {
        if (!f.dst_ip) throw ScenarioError("v2v flows need a destination IP");
        detail::install_chain(p, scenario.chain, *f.dst_ip);
      }
      break;
    case ScenarioKind::T2t:
      if (scenario.chain.size() != 1) throw ScenarioError("t2t names exactly one originating VM");
      for (const auto& f : scenario.flows) {
        if (f.vm == scenario.chain[0]) throw ScenarioError("t2t endpoints must differ");
        p.tenant_vms[f.vm].app = app::Echo{};
      }
      p.tenant_vms[scenario.chain[0]].app = app::Source{};
      break;
    case ScenarioKind::P2p:
      for (const auto& f : scenario.flows) {
        if (!f.dst_ip) throw ScenarioError("p2p flows need a destination IP");
      }
      break;
  }

  Simulation sim(std::move(p), cfg);
  struct Pending {
    std::size_t flow;
    std::size_t seq;
  };
  std::vector<Pending> order;
  for (std::size_t i = 0; i < scenario.flows.size(); ++i) {
    const auto& f = scenario.flows[i];
    DeliveryTarget t;
    switch (scenario.kind) {
      case ScenarioKind::P2p:
      case ScenarioKind::V2v: t.fabric_dst_ip = f.dst_ip; break;
      case ScenarioKind::P2v: t.fabric_dst_ip = load_gen_ip(i); break;
      case ScenarioKind::T2t: t.vm = scenario.chain[0]; break;
    }
    sim.add_flow(t);
    for (std::size_t n = 0; n < f.count; ++n) order.push_back({i, n});
  }
  std::mt19937_64 rng(scenario.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto& pl = sim.plan();
  const TenantId first_tenant = pl.spec.tenants.front().id;
  for (const auto& o : order) {
    const auto& f = scenario.flows[o.flow];
    const std::uint64_t payload_seed = (static_cast<std::uint64_t>(o.flow) << 32) | o.seq;
    switch (scenario.kind) {
      case ScenarioKind::P2p:
        sim.inject_fabric(0, detail::load_gen_frame(pl, first_tenant, *f.dst_ip, o.flow, f.size, payload_seed), o.flow);
        break;
      case ScenarioKind::P2v: {
        const auto& vm = pl.tenant_vms[f.vm];
        sim.inject_fabric(0, detail::load_gen_frame(pl, vm.tenant, vm.ip, o.flow, f.size, payload_seed), o.flow);
        break;
      }
      case ScenarioKind::V2v: {
        // Plain frames: the chain steers on the outer destination.
        const MacAddress entry = detail::port_mac(pl, pl.entry_port(pl.tenant_vms[scenario.chain[0]].tenant));
        sim.inject_fabric(0, data_frame(entry, kLoadGenMac, load_gen_ip(o.flow), *f.dst_ip, f.size, payload_seed),
                          o.flow);
        break;
      }
      case ScenarioKind::T2t:
        sim.inject_vm(scenario.chain[0], pl.tenant_vms[f.vm].ip, f.size, o.flow);
        break;
    }
  }
  sim.run();
  return {sim.metrics(), sim.trace(), sim.packets()};
}

// ---------------------------------------------------------------------------
// Golden forwarding chain

struct ChainStep {
  int number = 0;  // 1..10
  TraceKind kind = TraceKind::Inject;
  PortId port;
  MacAddress dst;
  std::optional<VlanId> vlan;

  std::string to_string() const {
    return "step " + std::to_string(number) + ": " + std::string(mts::to_string(kind)) + " at " + port.to_string() +
           " dst=" + dst.to_string() + " vlan=" + (vlan ? std::to_string(vlan->value()) : "-");
  }
};

struct GoldenResult {
  bool pass = false;
  std::size_t steps_matched = 0;
  std::optional<int> failed_step;
  std::string expected;
  std::string observed;
  std::vector<DropReason> drops;  // drops seen on the diverging packet
};

namespace detail {

/// In/Out VF paired with the gateway that serves `vm`.
inline PortId paired_uplink(const DeploymentPlan& plan, std::uint32_t vm) {
  const TenantVm& v = plan.tenant_vms[vm];
  const auto& cp = plan.compartments[plan.compartment_of(v.tenant)];
  const auto& gws = cp.gateways.at(v.tenant);
  const PortId gw = plan.gateway_of(vm).first;
  const auto k = static_cast<std::size_t>(std::find(gws.begin(), gws.end(), gw) - gws.begin());
  return cp.inout.at(k % cp.inout.size());
}

inline std::vector<ChainStep> expected_ingress(const DeploymentPlan& plan, std::uint32_t vm) {
  const TenantVm& v = plan.tenant_vms[vm];
  const auto [gw, gw_mac] = plan.gateway_of(vm);
  const PortId entry = paired_uplink(plan, vm);
  const MacAddress entry_mac = port_mac(plan, entry);
  const VlanId vlan = plan.vlan_map.at(v.tenant);
  return {
      {1, TraceKind::Inject, plan.nic.uplink_of(entry), entry_mac, std::nullopt},
      {2, TraceKind::NicEgress, entry, entry_mac, std::nullopt},
      {3, TraceKind::VswitchTx, gw, v.mac, std::nullopt},
      {4, TraceKind::NicIngress, gw, v.mac, vlan},
      {5, TraceKind::NicEgress, v.port, v.mac, std::nullopt},
  };
}

inline std::vector<ChainStep> expected_egress(const DeploymentPlan& plan, std::uint32_t vm) {
  const TenantVm& v = plan.tenant_vms[vm];
  const auto [gw, gw_mac] = plan.gateway_of(vm);
  const PortId uplink = paired_uplink(plan, vm);
  const VlanId vlan = plan.vlan_map.at(v.tenant);
  // What the VM believes its gateway is; the NIC then checks it for real.
  const MacAddress believed = resolve(v, v.gateway_ip).value_or(gw_mac);
  return {
      {6, TraceKind::TenantTx, v.port, believed, std::nullopt},
      {7, TraceKind::NicIngress, v.port, gw_mac, vlan},
      {8, TraceKind::NicEgress, gw, gw_mac, std::nullopt},
      {9, TraceKind::VswitchTx, uplink, plan.spec.external_gw_mac, std::nullopt},
      {10, TraceKind::NicEgress, plan.nic.uplink_of(uplink), plan.spec.external_gw_mac, std::nullopt},
  };
}

/// Matches `steps` in order against the data-frame events of one packet.
inline bool match_chain(const std::vector<TraceEvent>& trace, const std::vector<ChainStep>& steps, GoldenResult& r) {
  std::size_t at = 0;
  for (const auto& s : steps) {
    bool found = false;
    for (; at < trace.size(); ++at) {
      const auto& e = trace[at];
      if (!e.header.dst_ip || e.kind != s.kind || e.port != s.port) continue;
      found = true;
      if (e.header.dst != s.dst || e.header.vlan != s.vlan) {
        r.failed_step = s.number;
        r.expected = s.to_string();
        r.observed = e.to_string();
        return false;
      }
      ++at;
      ++r.steps_matched;
      break;
    }
    if (!found) {
      r.failed_step = s.number;
      r.expected = s.to_string();
      r.observed = "no such event";
      return false;
    }
  }
  // Outside the NIC a frame is never tagged.
  for (const auto& e : trace) {
    const bool inside_nic = e.kind == TraceKind::NicIngress || e.kind == TraceKind::Drop;
    if (!inside_nic && e.header.vlan && e.header.dst_ip) {
      r.failed_step = steps.front().number;
      r.expected = "untagged outside the NIC";
      r.observed = e.to_string();
      return false;
    }
  }
  return true;
}

inline void collect_drops(const std::vector<TraceEvent>& trace, GoldenResult& r) {
  for (const auto& e : trace) {
    if (e.drop) r.drops.push_back(*e.drop);
  }
}

}  // namespace detail

/// Replays one ingress packet (fabric -> VM) and one egress packet
/// (VM -> external) for `vm` and compares every hop of the forwarding chain.
inline GoldenResult golden_chain_check(const DeploymentPlan& plan, std::uint32_t vm) {
  if (plan.spec.level == Level::Baseline) throw ScenarioError("golden chains apply to MTS levels only");
  if (vm >= plan.tenant_vms.size()) throw ScenarioError("unknown VM " + std::to_string(vm));
  GoldenResult r;

  DeploymentPlan p = plan;
  for (auto& v : p.tenant_vms) v.app = app::Sink{};
  Simulation sim(std::move(p));
  const std::size_t in_flow = sim.add_flow(DeliveryTarget{std::nullopt, vm});
  const auto& pl = sim.plan();
  const TenantVm& v = pl.tenant_vms[vm];
  const auto ingress = detail::expected_ingress(pl, vm);
  const MacAddress entry_mac = ingress.front().dst;
  const std::size_t k = ingress.front().port.index;
  const std::uint64_t a =
      sim.inject_fabric(k, data_frame(entry_mac, kLoadGenMac, load_gen_ip(0), v.ip, 64, 0), in_flow);
  sim.run();
  auto trace = sim.trace_of(a);
  if (!detail::match_chain(trace, ingress, r)) {
    detail::collect_drops(trace, r);
    return r;
  }

  const Ipv4Address ext = detail::external_host(pl, 1);
  const std::size_t out_flow = sim.add_flow(DeliveryTarget{ext, std::nullopt});
  const std::uint64_t b = sim.inject_vm(vm, ext, 64, out_flow);
  sim.run();
  trace = sim.trace_of(b);
  if (!detail::match_chain(trace, detail::expected_egress(pl, vm), r)) {
    detail::collect_drops(trace, r);
    return r;
  }
  r.pass = true;
  return r;
}

/// Checks every tenant VM; returns the first failure or the combined pass.
inline GoldenResult golden_chain_check(const DeploymentPlan& plan) {
  GoldenResult all;
  all.pass = true;
  for (const auto& vm : plan.tenant_vms) {
    GoldenResult r = golden_chain_check(plan, vm.id);
    if (!r.pass) return r;
    all.steps_matched += r.steps_matched;
  }
  return all;
}

// ---------------------------------------------------------------------------
// Isolation fuzzing

enum class ViolationKind : std::uint8_t { CrossTenant, ForeignInOut, HostPf, FabricLeak, SpoofedSource };

constexpr std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::CrossTenant: return "CrossTenant";
    case ViolationKind::ForeignInOut: return "ForeignInOut";
    case ViolationKind::HostPf: return "HostPf";
    case ViolationKind::FabricLeak: return "FabricLeak";
    case ViolationKind::SpoofedSource: return "SpoofedSource";
  }
  return "?";
}

struct Violation {
  ViolationKind kind = ViolationKind::CrossTenant;
  PortId in_port;
  PortId out_port;
  HeaderSnapshot header;

  std::string to_string() const {
    return std::string(mts::to_string(kind)) + " " + in_port.to_string() + "->" + out_port.to_string() +
           " dst=" + header.dst.to_string() + " src=" + header.src.to_string();
  }
};

struct FuzzConfig {
  std::size_t frames_per_vf = 10000;
  std::uint64_t seed = 0;
  // Relative weights of the generated EtherTypes.
  unsigned weight_ipv4 = 4;
  unsigned weight_arp = 2;
  unsigned weight_vlan = 2;
  unsigned weight_unknown = 1;
  /// Share (percent) of frames that carry the sender's own source MAC.
  unsigned honest_src_percent = 60;
};

struct FuzzReport {
  std::size_t injected = 0;
  std::size_t deliveries = 0;
  std::map<std::string, std::size_t> drops;
  std::vector<Violation> violations;
};

/// EtherType used for frames the codec treats as opaque.
inline constexpr std::uint16_t kFuzzUnknownEtherType = 0x88b5;

namespace detail {

class FrameFuzzer {
 public:
  FrameFuzzer(const DeploymentPlan& plan, const FuzzConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    for (PortId p : plan.nic.ports()) {
      if (auto m = plan.nic.mac_of(p)) macs_.push_back(*m);
    }
    for (const auto& [t, v] : plan.vlan_map) vlans_.push_back(v);
    for (const auto& vm : plan.tenant_vms) {
      ips_.push_back(vm.ip);
      ips_.push_back(vm.gateway_ip);
    }
    ips_.push_back(plan.spec.external_prefix.network());
  }

  EthernetFrame next(MacAddress own) {
    EthernetFrame f;
    f.src = pick_percent(cfg_.honest_src_percent) ? own : any_mac();
    f.dst = any_mac();
    const unsigned total = cfg_.weight_ipv4 + cfg_.weight_arp + cfg_.weight_vlan + cfg_.weight_unknown;
    unsigned roll = static_cast<unsigned>(below(total));
    if (roll < cfg_.weight_ipv4) {
      f.payload = ip_packet();
    } else if ((roll -= cfg_.weight_ipv4) < cfg_.weight_arp) {
      f.payload = ArpMessage::request(f.src, any_ip(), any_ip());
    } else if ((roll -= cfg_.weight_arp) < cfg_.weight_vlan) {
      f.vlan = any_vlan();
      f.payload = ip_packet();
    } else {
      Bytes body(static_cast<std::size_t>(below(32)));
      for (auto& b : body) b = static_cast<std::uint8_t>(rng_());
      f.payload = OpaquePayload{kFuzzUnknownEtherType, std::move(body)};
    }
    return f;
  }

 private:
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng_); }
  bool pick_percent(unsigned p) { return below(100) < p; }

  MacAddress random_mac(bool multicast) {
    MacAddress::Octets o{};
    for (auto& b : o) b = static_cast<std::uint8_t>(rng_());
    o[0] = static_cast<std::uint8_t>((o[0] & 0xfe) | (multicast ? 1 : 0));
    return MacAddress(o);
  }

  MacAddress any_mac() {
    switch (below(5)) {
      case 0: return MacAddress::broadcast();
      case 1: return random_mac(false);
      case 2: return random_mac(true);
      default: return macs_.empty() ? random_mac(false) : macs_[below(macs_.size())];
    }
  }

  VlanId any_vlan() {
    if (!vlans_.empty() && below(2) == 0) return vlans_[below(vlans_.size())];
    return VlanId(static_cast<std::uint16_t>(below(VlanId::kMax + 1)));
  }

  Ipv4Address any_ip() {
    if (below(4) == 0) return Ipv4Address(static_cast<std::uint32_t>(rng_()));
    return ips_[below(ips_.size())];
  }

  Ipv4Packet ip_packet() {
    Bytes body(static_cast<std::size_t>(below(32)));
    for (auto& b : body) b = static_cast<std::uint8_t>(rng_());
    return Ipv4Packet{any_ip(), any_ip(), kDataProtocol, std::move(body)};
  }

  FuzzConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<MacAddress> macs_;
  std::vector<VlanId> vlans_;
  std::vector<Ipv4Address> ips_;
};

}  // namespace detail

/// Injects adversarial frames at every Tenant-role VF and records every NIC
/// delivery that escapes the sender's VLAN, reaches an In/Out VF, the PF or
/// the fabric, or carries a source MAC other than the sender's.
inline FuzzReport verify_isolation(const DeploymentPlan& plan, const FuzzConfig& cfg) {
  FuzzReport rep;
  NicSwitch nic = plan.nic;
  detail::FrameFuzzer fuzz(plan, cfg);
  std::vector<PortId> senders;
  for (PortId p : plan.nic.ports()) {
    if (p.kind == PortKind::Vf && plan.nic.vf_config(p).role == VfRole::Tenant) senders.push_back(p);
  }
  for (std::size_t n = 0; n < cfg.frames_per_vf; ++n) {
    for (PortId in : senders) {
      const VfConfig& me = plan.nic.vf_config(in);
      const EthernetFrame f = fuzz.next(me.mac);
      ++rep.injected;
      const SwitchResult r = nic.switch_frame(in, f);
      for (const auto& d : r.drops) ++rep.drops[std::string(to_string(d.reason))];
      for (const auto& e : r.out) {
        ++rep.deliveries;
        const auto flag = [&](ViolationKind k) {
          rep.violations.push_back({k, in, e.port, HeaderSnapshot::of(e.frame)});
        };
        switch (e.port.kind) {
          case PortKind::Fabric: flag(ViolationKind::FabricLeak); break;
          case PortKind::Pf: flag(ViolationKind::HostPf); break;
          case PortKind::Vf: {
            const VfConfig& to = plan.nic.vf_config(e.port);
            if (to.role == VfRole::InOut) {
              flag(ViolationKind::ForeignInOut);
            } else if (to.pvid != me.pvid) {
              flag(ViolationKind::CrossTenant);
            }
            break;
          }
          case PortKind::Tap: break;
        }
        if (e.frame.src != me.mac) flag(ViolationKind::SpoofedSource);
      }
    }
  }
  return rep;
}

/// Copy of `plan` with spoof checking switched off on every tenant VF.
inline DeploymentPlan without_spoof_check(const DeploymentPlan& plan) {
  DeploymentPlan p = plan;
  for (std::size_t i = 0; i < p.nic.vf_count(); ++i) {
    const PortId vf = PortId::vf(static_cast<std::uint16_t>(i));
    VfConfig cfg = p.nic.vf_config(vf);
    if (cfg.role != VfRole::Tenant) continue;
    cfg.spoof_check = false;
    p.nic.configure_vf(ComponentId::host(), vf, cfg);
  }
  return p;
}

}  // namespace mts
