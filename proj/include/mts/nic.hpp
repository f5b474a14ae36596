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

// SR-IOV NIC embedded switch (VEB).
//
// Ports are the fabric uplinks, one PF per fabric port, and VFs hung off the
// PFs. Every VF is configured by the host with a MAC, a port VLAN (pvid),
// and a spoof-check flag. Configured MACs are installed as static entries in
// the per-VLAN forwarding table; source learning adds dynamic entries but
// never overrides a static one.
//
// switch_frame pipeline, in order:
//   1. spoof check       (VF with spoof_check, src != configured MAC)
//   2. wildcard filters  (highest priority first, ties by install order)
//   3. classification    (pvid > 0 pushes the tenant VLAN; tagged frames on
//                         such ports are refused)
//   4. source learning
//   5. lookup / flood    (VLAN-scoped; tenant VLANs never reach the fabric)
//   6. egress tagging    (tag popped toward ports whose pvid is the VLAN)

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mts/common.hpp"
#include "mts/frames.hpp"
#include "mts/trace.hpp"

namespace mts {

enum class VfRole : std::uint8_t { InOut, Gateway, Tenant };

constexpr std::string_view to_string(VfRole r) {
  switch (r) {
    case VfRole::InOut: return "inout";
    case VfRole::Gateway: return "gateway";
    case VfRole::Tenant: return "tenant";
  }
  return "?";
}

struct VfConfig {
  MacAddress mac;
  VlanId pvid;
  bool spoof_check = true;
  ComponentId attached_to;
  VfRole role = VfRole::Tenant;

  bool operator==(const VfConfig&) const = default;
};

enum class FilterAction : std::uint8_t { Allow, Drop };

/// Fields left empty are wildcards. `vlan` is compared against the VLAN the
/// frame is classified into at its ingress port; `ethertype` against the
/// EtherType at byte offset 12 (0x8100 for any tagged frame).
struct FilterMatch {
  std::optional<PortId> in_port = {};
  std::optional<MacAddress> src_mac = {};
  std::optional<MacAddress> dst_mac = {};
  std::optional<VlanId> vlan = {};
  std::optional<std::uint16_t> ethertype = {};

  bool operator==(const FilterMatch&) const = default;
};

struct WildcardFilter {
  int priority = 0;
  FilterMatch match;
  FilterAction action = FilterAction::Drop;

  bool operator==(const WildcardFilter&) const = default;
};

struct DropRecord {
  DropReason reason;
  PortId port;  // where the frame was dropped

  bool operator==(const DropRecord&) const = default;
};

struct Emission {
  PortId port;
  EthernetFrame frame;

  bool operator==(const Emission&) const = default;
};

struct SwitchResult {
  /// Internal VLAN after classification; empty if dropped before step 3.
  std::optional<VlanId> classified;
  std::vector<Emission> out;
  std::vector<DropRecord> drops;

  bool operator==(const SwitchResult&) const = default;
};

struct LearningEntry {
  PortId port;
  bool is_static = false;

  bool operator==(const LearningEntry&) const = default;
};

using LearningKey = std::pair<VlanId, MacAddress>;

class NicSwitch {
 public:
  static constexpr std::size_t kDefaultMaxVfsPerPf = 64;

  NicSwitch() : NicSwitch(1) {}

  /// One PF per fabric port.
  explicit NicSwitch(std::size_t fabric_ports, std::size_t max_vfs_per_pf = kDefaultMaxVfsPerPf)
      : pf_macs_(fabric_ports), max_vfs_per_pf_(max_vfs_per_pf) {
    if (fabric_ports == 0) throw ConfigError("NIC needs at least one fabric port");
  }

  std::size_t fabric_ports() const { return pf_macs_.size(); }
  std::size_t pf_count() const { return pf_macs_.size(); }
  std::size_t vf_count() const { return vfs_.size(); }
  std::size_t max_vfs_per_pf() const { return max_vfs_per_pf_; }

  std::size_t vfs_on_pf(std::size_t pf) const {
    return static_cast<std::size_t>(std::count_if(vfs_.begin(), vfs_.end(), [&](const Vf& v) { return v.pf == pf; }));
  }

  /// Creates and configures a new VF under `pf`. Host context only.
  PortId add_vf(const PrivilegeContext& ctx, std::size_t pf, const VfConfig& cfg) {
    require_host(ctx, "create VFs");
    if (pf >= pf_count()) throw ConfigError("no such PF: " + std::to_string(pf));
    if (vfs_on_pf(pf) >= max_vfs_per_pf_) {
      throw VfExhaustion("PF " + std::to_string(pf) + " already has " + std::to_string(max_vfs_per_pf_) + " VFs");
    }
    validate(cfg);
    check_unique_mac(cfg.mac, std::nullopt);
    const PortId id = PortId::vf(static_cast<std::uint16_t>(vfs_.size()));
    vfs_.push_back(Vf{pf, cfg});
    install_static(cfg.pvid, cfg.mac, id);
    return id;
  }

  /// Replaces the configuration of an existing VF. Either the whole new
  /// configuration takes effect or nothing changes.
  void configure_vf(const PrivilegeContext& ctx, PortId vf, const VfConfig& cfg) {
    require_host(ctx, "configure VFs");
    Vf& slot = vf_slot(vf);
    validate(cfg);
    check_unique_mac(cfg.mac, vf);
    const MacAddress old_mac = slot.cfg.mac;
    std::erase_if(table_, [&](const auto& kv) { return kv.first.second == old_mac; });
    slot.cfg = cfg;
    install_static(cfg.pvid, cfg.mac, vf);
  }

  void set_pf_mac(const PrivilegeContext& ctx, std::size_t pf, MacAddress mac) {
    require_host(ctx, "configure PFs");
    if (pf >= pf_count()) throw ConfigError("no such PF: " + std::to_string(pf));
    check_unique_mac(mac, PortId::pf(static_cast<std::uint16_t>(pf)));
    if (pf_macs_[pf]) {
      const MacAddress old = *pf_macs_[pf];
      std::erase_if(table_, [&](const auto& kv) { return kv.first.second == old; });
    }
    pf_macs_[pf] = mac;
    install_static(VlanId(0), mac, PortId::pf(static_cast<std::uint16_t>(pf)));
  }

  void install_filter(const PrivilegeContext& ctx, const WildcardFilter& f) {
    require_host(ctx, "install NIC filters");
    filters_.push_back(f);
  }

  void clear_filters(const PrivilegeContext& ctx) {
    require_host(ctx, "remove NIC filters");
    filters_.clear();
  }

  bool has_port(PortId p) const {
    switch (p.kind) {
      case PortKind::Fabric:
      case PortKind::Pf: return p.index < pf_count();
      case PortKind::Vf: return p.index < vfs_.size();
      case PortKind::Tap: return false;
    }
    return false;
  }

  /// All ports in ascending order.
  std::vector<PortId> ports() const {
    std::vector<PortId> out;
    for (std::size_t i = 0; i < pf_count(); ++i) out.push_back(PortId::fabric(static_cast<std::uint16_t>(i)));
    for (std::size_t i = 0; i < pf_count(); ++i) out.push_back(PortId::pf(static_cast<std::uint16_t>(i)));
    for (std::size_t i = 0; i < vfs_.size(); ++i) out.push_back(PortId::vf(static_cast<std::uint16_t>(i)));
    return out;
  }

  const VfConfig& vf_config(PortId vf) const { return vf_slot(vf).cfg; }
  std::size_t pf_of(PortId vf) const { return vf_slot(vf).pf; }
  std::optional<MacAddress> pf_mac(std::size_t pf) const { return pf_macs_.at(pf); }

  /// Configured MAC of a PF or VF; fabric ports have none.
  std::optional<MacAddress> mac_of(PortId p) const {
    if (p.kind == PortKind::Vf) return vf_config(p).mac;
    if (p.kind == PortKind::Pf) return pf_macs_.at(p.index);
    return std::nullopt;
  }

  /// Port VLAN; fabric and PF ports are untagged.
  VlanId pvid_of(PortId p) const { return p.kind == PortKind::Vf ? vf_config(p).pvid : VlanId(0); }

  PortId uplink_of(PortId p) const {
    switch (p.kind) {
      case PortKind::Vf: return PortId::fabric(static_cast<std::uint16_t>(pf_of(p)));
      case PortKind::Pf: return PortId::fabric(p.index);
      default: return p;
    }
  }

  const std::map<LearningKey, LearningEntry>& learning() const { return table_; }
  const std::vector<WildcardFilter>& filters() const { return filters_; }

  std::optional<PortId> lookup(VlanId vlan, MacAddress mac) const {
    auto it = table_.find({vlan, mac});
    if (it == table_.end()) return std::nullopt;
    return it->second.port;
  }

  /// First filter that matches, in evaluation order.
  const WildcardFilter* matching_filter(PortId in_port, const EthernetFrame& f, VlanId classified) const {
    const WildcardFilter* best = nullptr;
    for (const auto& flt : filters_) {
      if (!filter_matches(flt.match, in_port, f, classified)) continue;
      if (!best || flt.priority > best->priority) best = &flt;
    }
    return best;
  }

  SwitchResult switch_frame(PortId in_port, const EthernetFrame& frame) {
    if (!has_port(in_port)) throw ConfigError("frame injected on unknown port " + in_port.to_string());
    SwitchResult r;
    const VfConfig* vf = in_port.kind == PortKind::Vf ? &vf_config(in_port) : nullptr;

    if (vf && vf->spoof_check && frame.src != vf->mac) {
      r.drops.push_back({DropReason::SpoofBlocked, in_port});
      return r;
    }

    const bool access_port = vf && !vf->pvid.is_untagged();
    const VlanId vlan = access_port ? vf->pvid : frame.vlan.value_or(VlanId(0));

    if (const auto* flt = matching_filter(in_port, frame, vlan); flt && flt->action == FilterAction::Drop) {
      r.drops.push_back({DropReason::FilterDrop, in_port});
      return r;
    }

    if (access_port && frame.vlan) {
      r.drops.push_back({DropReason::TaggedOnAccessPort, in_port});
      return r;
    }
    r.classified = vlan;

    learn(vlan, frame.src, in_port);

    std::vector<PortId> targets;
    if (frame.dst.is_broadcast()) {
      targets = flood_set(vlan, in_port);
    } else if (auto hit = lookup(vlan, frame.dst)) {
      if (*hit == in_port || (!vlan.is_untagged() && hit->kind == PortKind::Fabric)) {
        r.drops.push_back({DropReason::NoRoute, in_port});
        return r;
      }
      targets.push_back(*hit);
    } else if (vlan.is_untagged()) {
      if (in_port.kind == PortKind::Fabric) {
        r.drops.push_back({DropReason::NoRoute, in_port});
        return r;
      }
      targets.push_back(uplink_of(in_port));
    } else {
      // A MAC that is configured on the NIC, just not in this VLAN, is a
      // misconfiguration rather than an unknown station.
      r.drops.push_back({configured_elsewhere(frame.dst) ? DropReason::NoRoute : DropReason::UnknownUnicastIsolated,
                         in_port});
      return r;
    }

    for (PortId out : targets) {
      EthernetFrame f = frame;
      if (vlan.is_untagged() || pvid_of(out) == vlan) {
        f.vlan.reset();
      } else {
        f.vlan = vlan;
      }
      r.out.push_back({out, std::move(f)});
    }
    if (r.out.empty()) r.drops.push_back({DropReason::NoRoute, in_port});
    return r;
  }

 private:
  struct Vf {
    std::size_t pf = 0;
    VfConfig cfg;
  };

  static void require_host(const PrivilegeContext& ctx, const char* what) {
    if (ctx.kind != ComponentKind::Host) {
      throw PrivilegeError(to_string(ctx) + " may not " + what + ": only the host configures PFs and VFs");
    }
  }

  static void validate(const VfConfig& cfg) {
    if (cfg.mac.is_multicast() || cfg.mac.is_zero()) throw ConfigError("VF MAC must be a non-zero unicast address");
    const bool tagged = !cfg.pvid.is_untagged();
    if (cfg.role == VfRole::InOut && tagged) throw ConfigError("In/Out VFs must be untagged (pvid 0)");
    if (cfg.role != VfRole::InOut && !tagged) throw ConfigError("Gateway and Tenant VFs need a tenant VLAN");
  }

  const Vf& vf_slot(PortId vf) const {
    if (vf.kind != PortKind::Vf || vf.index >= vfs_.size()) throw ConfigError("no such VF: " + vf.to_string());
    return vfs_[vf.index];
  }
  Vf& vf_slot(PortId vf) { return const_cast<Vf&>(std::as_const(*this).vf_slot(vf)); }

  void check_unique_mac(MacAddress mac, std::optional<PortId> self) const {
    for (std::size_t i = 0; i < vfs_.size(); ++i) {
      const PortId id = PortId::vf(static_cast<std::uint16_t>(i));
      if (id != self && vfs_[i].cfg.mac == mac) {
        throw DuplicateMacError("MAC " + mac.to_string() + " already assigned to " + id.to_string());
      }
    }
    for (std::size_t i = 0; i < pf_macs_.size(); ++i) {
      const PortId id = PortId::pf(static_cast<std::uint16_t>(i));
      if (id != self && pf_macs_[i] == mac) {
        throw DuplicateMacError("MAC " + mac.to_string() + " already assigned to " + id.to_string());
      }
    }
  }

  void install_static(VlanId vlan, MacAddress mac, PortId port) { table_[{vlan, mac}] = LearningEntry{port, true}; }

  void learn(VlanId vlan, MacAddress src, PortId port) {
    if (src.is_multicast() || src.is_zero()) return;
    auto [it, inserted] = table_.try_emplace({vlan, src}, LearningEntry{port, false});
    if (!inserted && !it->second.is_static) it->second.port = port;
  }

  bool configured_elsewhere(MacAddress mac) const {
    for (const auto& v : vfs_) {
      if (v.cfg.mac == mac) return true;
    }
    return std::find(pf_macs_.begin(), pf_macs_.end(), std::optional<MacAddress>(mac)) != pf_macs_.end();
  }

  std::vector<PortId> flood_set(VlanId vlan, PortId in_port) const {
    std::vector<PortId> out;
    for (PortId p : ports()) {
      if (p == in_port) continue;
      if (vlan.is_untagged()) {
        if (p.kind == PortKind::Fabric && in_port.kind == PortKind::Fabric) continue;
        if (pvid_of(p).is_untagged()) out.push_back(p);
      } else if (p.kind == PortKind::Vf && pvid_of(p) == vlan) {
        out.push_back(p);
      }
    }
    return out;
  }

  static bool filter_matches(const FilterMatch& m, PortId in_port, const EthernetFrame& f, VlanId vlan) {
    if (m.in_port && *m.in_port != in_port) return false;
    if (m.src_mac && *m.src_mac != f.src) return false;
    if (m.dst_mac && *m.dst_mac != f.dst) return false;
    if (m.vlan && *m.vlan != vlan) return false;
    if (m.ethertype && *m.ethertype != f.wire_ethertype()) return false;
    return true;
  }

  std::vector<std::optional<MacAddress>> pf_macs_;
  std::vector<Vf> vfs_;
  std::map<LearningKey, LearningEntry> table_;
  std::vector<WildcardFilter> filters_;
  std::size_t max_vfs_per_pf_;
};

/// NIC traversals in one packet's trace: the number of switch_frame
/// invocations on its path. Used as the latency proxy.
inline std::size_t traversal_count(const std::vector<TraceEvent>& trace) {
  return static_cast<std::size_t>(
      std::count_if(trace.begin(), trace.end(), [](const TraceEvent& e) { return e.kind == TraceKind::NicIngress; }));
}

}  // namespace mts
