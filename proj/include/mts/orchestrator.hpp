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

// Deployment planner: tenant declarations + security level -> configured
// NIC, vswitch compartments with rules installed, tenant VMs, and the
// resource bill.
//
// Compartment layout (MTS levels). Per compartment, in MAC/VF order:
//   In/Out VF k            for each fabric port k, untagged, on PF k
//   Gw VF (t, k)           for each tenant t, k < gw_vfs_per_tenant, on PF k
// then each tenant's VM VFs; VM j uses Gw j mod gw_vfs_per_tenant and sits on
// that gateway's PF when it has room.
//
// Baseline puts one host-resident vswitch on the PFs and gives every VM a
// tap; the NIC carries no VFs.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mts/common.hpp"
#include "mts/dataplane.hpp"
#include "mts/endpoints.hpp"
#include "mts/frames.hpp"
#include "mts/nic.hpp"

namespace mts {

enum class Level : std::uint8_t { Baseline, Level1, Level2 };
enum class ResourceMode : std::uint8_t { Shared, Isolated };
enum class ArpMode : std::uint8_t { Static, Responder };

constexpr std::string_view to_string(Level l) {
  switch (l) {
    case Level::Baseline: return "baseline";
    case Level::Level1: return "level1";
    case Level::Level2: return "level2";
  }
  return "?";
}
constexpr std::string_view to_string(ResourceMode m) { return m == ResourceMode::Shared ? "shared" : "isolated"; }
constexpr std::string_view to_string(ArpMode m) { return m == ArpMode::Static ? "static" : "responder"; }

struct TenantSpec {
  TenantId id;
  std::size_t vm_count = 1;
  Ipv4Prefix ip_block;
  std::optional<std::uint32_t> vni;

  bool operator==(const TenantSpec&) const = default;
};

struct DeploymentSpec {
  int version = 1;
  Level level = Level::Level1;
  bool user_space = false;
  /// Level2 grouping. Empty means one compartment per tenant.
  std::vector<std::vector<TenantId>> zones;
  ResourceMode mode = ResourceMode::Isolated;
  std::size_t fabric_ports = 1;
  std::size_t gw_vfs_per_tenant = 1;
  std::size_t max_vfs_per_pf = NicSwitch::kDefaultMaxVfsPerPf;
  MacAddress external_gw_mac = MacAddress({0x02, 0x00, 0x00, 0x00, 0x00, 0xfe});
  ArpMode arp = ArpMode::Static;
  std::vector<TenantSpec> tenants;
  std::optional<VxlanUnderlay> underlay;
  Ipv4Prefix external_prefix{Ipv4Address((198u << 24) | (51u << 16) | (100u << 8)), 24};
  /// Baseline only: number of MTS compartments the run is compared against
  /// when sizing an isolated kernel Baseline.
  std::size_t baseline_compartments = 1;

  bool operator==(const DeploymentSpec&) const = default;
};

/// Prefix of every MAC the planner hands out (locally administered).
inline constexpr std::array<std::uint8_t, 3> kMacPrefix{0x02, 0x4d, 0x54};

inline MacAddress planned_mac(std::uint32_t n) {
  return MacAddress({kMacPrefix[0], kMacPrefix[1], kMacPrefix[2], static_cast<std::uint8_t>(n >> 16),
                     static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)});
}

struct ResourceAccount {
  std::size_t host_cores = 1;
  std::size_t vswitch_cores = 0;
  std::size_t compartments = 0;  // vswitch VMs (0 for Baseline)
  std::size_t tenant_vms = 0;
  std::size_t ram_gb_per_vm = 4;
  std::size_t hugepages_gb_per_vm = 1;
  std::size_t host_hugepages_gb = 1;
  std::size_t total_vfs = 0;

  std::size_t total_cores() const { return host_cores + vswitch_cores; }
  std::size_t vswitch_ram_gb() const { return compartments * ram_gb_per_vm; }
  std::size_t vswitch_hugepages_gb() const { return compartments * hugepages_gb_per_vm; }
  std::size_t tenant_ram_gb() const { return tenant_vms * ram_gb_per_vm; }

  bool operator==(const ResourceAccount&) const = default;
};

/// One vswitch compartment's NIC ports.
struct CompartmentPorts {
  std::vector<PortId> inout;                                 // one per fabric port
  std::map<TenantId, std::vector<PortId>> gateways;          // per tenant, k < gw_vfs_per_tenant
  std::vector<TenantId> tenants;                             // declaration order
};

struct DeploymentPlan {
  DeploymentSpec spec;
  ResourceMode effective_mode = ResourceMode::Isolated;
  NicSwitch nic;
  std::vector<VswitchInstance> vswitches;
  std::vector<CompartmentPorts> compartments;
  std::vector<TenantVm> tenant_vms;
  std::map<TenantId, VlanId> vlan_map;
  /// Baseline only: the virtual gateway MAC each tenant sees.
  std::map<TenantId, MacAddress> virtual_gateway_macs;
  /// Baseline only: tap -> tenant VM index.
  std::map<PortId, std::uint32_t> taps;
  ResourceAccount resources;

  const TenantSpec& tenant_spec(const TenantId& t) const {
    for (const auto& ts : spec.tenants) {
      if (ts.id == t) return ts;
    }
    throw SpecError("unknown tenant " + t.value);
  }

  std::size_t compartment_of(const TenantId& t) const {
    for (std::size_t c = 0; c < compartments.size(); ++c) {
      const auto& ts = compartments[c].tenants;
      if (std::find(ts.begin(), ts.end(), t) != ts.end()) return c;
    }
    throw SpecError("tenant " + t.value + " has no compartment");
  }

  /// Gateway port and MAC serving VM `vm`.
  std::pair<PortId, MacAddress> gateway_of(std::uint32_t vm) const {
    const TenantVm& v = tenant_vms.at(vm);
    if (spec.level == Level::Baseline) return {v.port, virtual_gateway_macs.at(v.tenant)};
    const auto& gws = compartments[compartment_of(v.tenant)].gateways.at(v.tenant);
    const PortId gw = gws[index_in_tenant(vm) % gws.size()];
    return {gw, *nic.mac_of(gw)};
  }

  std::size_t index_in_tenant(std::uint32_t vm) const {
    std::size_t n = 0;
    for (std::uint32_t i = 0; i < vm; ++i) n += tenant_vms[i].tenant == tenant_vms[vm].tenant;
    return n;
  }

  /// Port through which traffic from fabric port `k` enters the vswitch
  /// serving `t` (In/Out VF, or the PF for Baseline).
  PortId entry_port(const TenantId& t, std::size_t k = 0) const {
    if (spec.level == Level::Baseline) return PortId::pf(static_cast<std::uint16_t>(k));
    return compartments[compartment_of(t)].inout.at(k);
  }

  /// Vswitch that owns `p`, if any.
  std::optional<std::uint32_t> vswitch_owning(PortId p) const {
    for (const auto& vs : vswitches) {
      if (vs.owns(p)) return vs.id;
    }
    return std::nullopt;
  }
};

namespace detail {

inline void validate_spec(const DeploymentSpec& spec) {
  if (spec.version != 1) throw SpecError("unsupported spec version " + std::to_string(spec.version));
  if (spec.tenants.empty()) throw SpecError("spec declares no tenants");
  if (spec.fabric_ports == 0) throw SpecError("fabric_ports must be at least 1");
  if (spec.gw_vfs_per_tenant == 0) throw SpecError("gw_vfs_per_tenant must be at least 1");
  if (spec.max_vfs_per_pf == 0) throw SpecError("max_vfs_per_pf must be at least 1");
  if (spec.baseline_compartments == 0) throw SpecError("baseline_compartments must be at least 1");
  if (spec.tenants.size() > VlanId::kMax) throw SpecError("more tenants than VLAN ids");
  std::set<TenantId> seen;
  for (const auto& t : spec.tenants) {
    if (t.id.value.empty()) throw SpecError("tenant id must not be empty");
    if (!seen.insert(t.id).second) throw DuplicateTenantId("duplicate tenant id " + t.id.value);
    if (t.vm_count == 0) throw SpecError("tenant " + t.id.value + " needs at least one VM");
    // network, gateway, VMs, broadcast
    if (t.ip_block.length > 30 || t.ip_block.size() < t.vm_count + 3) {
      throw SpecError("IP block " + t.ip_block.to_string() + " too small for tenant " + t.id.value);
    }
    if (t.ip_block.address != t.ip_block.network()) {
      throw SpecError("IP block " + t.ip_block.to_string() + " is not a network address");
    }
    if (t.vni) {
      if (*t.vni >= kVniLimit) throw VniOutOfRange("VNI out of range: " + std::to_string(*t.vni));
      if (!spec.underlay) throw SpecError("tenant " + t.id.value + " has a VNI but the spec has no underlay");
    }
    if (t.ip_block.overlaps(spec.external_prefix)) {
      throw SpecError("IP block of tenant " + t.id.value + " overlaps the external prefix");
    }
  }
  for (std::size_t i = 0; i < spec.tenants.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.tenants.size(); ++j) {
      if (spec.tenants[i].ip_block.overlaps(spec.tenants[j].ip_block)) {
        throw SpecError("IP blocks of " + spec.tenants[i].id.value + " and " + spec.tenants[j].id.value + " overlap");
      }
    }
  }
  if (!spec.zones.empty()) {
    if (spec.level != Level::Level2) throw SpecError("zones are only meaningful at level2");
    std::map<TenantId, int> covered;
    for (const auto& z : spec.zones) {
      if (z.empty()) throw SpecError("empty security zone");
      for (const auto& t : z) {
        if (!seen.count(t)) throw SpecError("zone names unknown tenant " + t.value);
        ++covered[t];
      }
    }
    for (const auto& t : seen) {
      if (covered[t] != 1) throw SpecError("tenant " + t.value + " must appear in exactly one zone");
    }
  }
}

}  // namespace detail

/// Tenants grouped by vswitch compartment, in compartment order.
inline std::vector<std::vector<TenantId>> compartment_groups(const DeploymentSpec& spec) {
  std::vector<std::vector<TenantId>> groups;
  switch (spec.level) {
    case Level::Baseline:
    case Level::Level1: {
      groups.emplace_back();
      for (const auto& t : spec.tenants) groups.back().push_back(t.id);
      break;
    }
    case Level::Level2: {
      if (!spec.zones.empty()) {
        // Keep tenant declaration order inside each zone.
        for (const auto& z : spec.zones) {
          std::vector<TenantId> g;
          for (const auto& t : spec.tenants) {
            if (std::find(z.begin(), z.end(), t.id) != z.end()) g.push_back(t.id);
          }
          groups.push_back(std::move(g));
        }
      } else {
        for (const auto& t : spec.tenants) groups.push_back({t.id});
      }
      break;
    }
  }
  return groups;
}

/// VFs an MTS deployment consumes: per compartment one In/Out VF per fabric
/// port plus the Gw VFs of its tenants, plus one VF per tenant VM.
inline std::size_t count_vfs(const DeploymentSpec& spec) {
  if (spec.level == Level::Baseline) throw SpecError("Baseline deployments use no VFs");
  detail::validate_spec(spec);
  std::size_t total = 0;
  for (const auto& g : compartment_groups(spec)) total += spec.fabric_ports + g.size() * spec.gw_vfs_per_tenant;
  for (const auto& t : spec.tenants) total += t.vm_count;
  const std::size_t budget = spec.max_vfs_per_pf * spec.fabric_ports;
  if (total > budget) {
    throw VfExhaustion("deployment needs " + std::to_string(total) + " VFs, NIC offers " + std::to_string(budget));
  }
  return total;
}

/// Mode the resources are actually allocated in: a poll-mode (user-space)
/// vswitch needs a core of its own, so it always runs isolated.
inline ResourceMode effective_mode(const DeploymentSpec& spec) {
  return spec.user_space ? ResourceMode::Isolated : spec.mode;
}

/// One core always belongs to the host OS. A kernel Baseline vswitch shares
/// it; compared against n compartments in isolated mode the Baseline host
/// gets n cores in total. Every user-space vswitch, Baseline included, owns
/// one dedicated core.
inline ResourceAccount account_resources(const DeploymentSpec& spec) {
  detail::validate_spec(spec);
  ResourceAccount r;
  for (const auto& t : spec.tenants) r.tenant_vms += t.vm_count;
  const ResourceMode mode = effective_mode(spec);
  if (spec.level == Level::Baseline) {
    const std::size_t n = spec.baseline_compartments;
    if (n == 0) throw SpecError("baseline_compartments must be at least 1");
    if (spec.user_space) {
      r.vswitch_cores = n;
    } else {
      r.vswitch_cores = mode == ResourceMode::Isolated ? n - 1 : 0;
    }
    return r;
  }
  r.compartments = compartment_groups(spec).size();
  r.vswitch_cores = mode == ResourceMode::Shared ? 1 : r.compartments;
  r.total_vfs = count_vfs(spec);
  return r;
}

namespace detail {

class MacAllocator {
 public:
  MacAddress next() { return planned_mac(++n_); }

 private:
  std::uint32_t n_ = 0;
};

inline PortId place_vf(NicSwitch& nic, std::size_t preferred_pf, const VfConfig& cfg) {
  const std::size_t pfs = nic.pf_count();
  for (std::size_t i = 0; i < pfs; ++i) {
    const std::size_t pf = (preferred_pf + i) % pfs;
    if (nic.vfs_on_pf(pf) < nic.max_vfs_per_pf()) return nic.add_vf(ComponentId::host(), pf, cfg);
  }
  throw VfExhaustion("every PF is full");
}

inline Ipv4Address host_in(const Ipv4Prefix& block, std::uint32_t offset) {
  return Ipv4Address(block.network().value() + offset);
}

}  // namespace detail

/// Virtual gateway address of a tenant: the first host of its block.
inline Ipv4Address gateway_ip_of(const TenantSpec& t) { return detail::host_in(t.ip_block, 1); }
/// Address of the tenant's j-th VM.
inline Ipv4Address vm_ip_of(const TenantSpec& t, std::size_t j) {
  return detail::host_in(t.ip_block, static_cast<std::uint32_t>(2 + j));
}

inline DeploymentPlan plan_deployment(const DeploymentSpec& spec) {
  detail::validate_spec(spec);
  const bool baseline = spec.level == Level::Baseline;
  if (!baseline) (void)count_vfs(spec);

  const PrivilegeContext host = ComponentId::host();
  DeploymentPlan plan;
  plan.spec = spec;
  plan.effective_mode = effective_mode(spec);
  plan.nic = NicSwitch(spec.fabric_ports, spec.max_vfs_per_pf);
  plan.resources = account_resources(spec);
  detail::MacAllocator macs;
  for (std::size_t pf = 0; pf < spec.fabric_ports; ++pf) plan.nic.set_pf_mac(host, pf, macs.next());
  for (std::size_t i = 0; i < spec.tenants.size(); ++i) {
    plan.vlan_map.emplace(spec.tenants[i].id, VlanId(static_cast<std::uint16_t>(i + 1)));
  }

  std::vector<UplinkBinding> uplinks;
  const auto groups = compartment_groups(spec);
  std::uint32_t vm_index = 0;
  const auto make_vm = [&](const TenantSpec& ts, std::size_t j, PortId port, MacAddress mac, MacAddress gw_mac) {
    TenantVm vm;
    vm.id = vm_index++;
    vm.tenant = ts.id;
    vm.port = port;
    vm.mac = mac;
    vm.ip = vm_ip_of(ts, j);
    vm.gateway_ip = gateway_ip_of(ts);
    if (spec.arp == ArpMode::Static) {
      vm.static_arp[vm.gateway_ip] = gw_mac;
    } else {
      vm.arp_responder = true;
    }
    return vm;
  };

  if (baseline) {
    VswitchInstance vs;
    vs.id = 0;
    vs.exec_ctx = spec.user_space ? ExecContext::HostUser : ExecContext::HostKernel;
    for (std::size_t pf = 0; pf < spec.fabric_ports; ++pf) {
      const PortId p = PortId::pf(static_cast<std::uint16_t>(pf));
      vs.inout_ports.push_back(p);
      uplinks.push_back({p, *plan.nic.pf_mac(pf)});
    }
    CompartmentPorts cp;
    cp.inout = vs.inout_ports;
    cp.tenants = groups.front();
    std::vector<TenantBinding> bindings;
    for (const auto& ts : spec.tenants) {
      const MacAddress gw_mac = macs.next();
      plan.virtual_gateway_macs[ts.id] = gw_mac;
      TenantBinding b{ts.id, gateway_ip_of(ts), spec.external_gw_mac, {}, {}};
      for (std::size_t j = 0; j < ts.vm_count; ++j) {
        const PortId tap = PortId::tap(static_cast<std::uint16_t>(vm_index));
        const MacAddress mac = macs.next();
        vs.gw_ports[ts.id].push_back(tap);
        plan.taps[tap] = vm_index;
        const std::size_t k = j % spec.fabric_ports;
        b.gateways.push_back({tap, gw_mac, uplinks[k].port, uplinks[k].mac});
        b.vms.push_back({mac, vm_ip_of(ts, j), j});
        plan.tenant_vms.push_back(make_vm(ts, j, tap, mac, gw_mac));
      }
      cp.gateways[ts.id] = vs.gw_ports[ts.id];
      bindings.push_back(std::move(b));
    }
    for (std::size_t i = 0; i < bindings.size(); ++i) {
      vs.install(build_tenant_rules(bindings[i]));
      if (auto vni = spec.tenants[i].vni) {
        vs.install(build_vxlan_rules(vs, bindings[i], *vni, *spec.underlay));
        vs.vnis[bindings[i].tenant] = *vni;
      }
    }
    vs.install(build_transit_rules(uplinks, spec.external_prefix, spec.external_gw_mac));
    plan.vswitches.push_back(std::move(vs));
    plan.compartments.push_back(std::move(cp));
    return plan;
  }

  const ExecContext ctx = spec.user_space ? ExecContext::VmUser : ExecContext::VmKernel;
  for (std::uint32_t c = 0; c < groups.size(); ++c) {
    VswitchInstance vs;
    vs.id = c;
    vs.exec_ctx = ctx;
    CompartmentPorts cp;
    cp.tenants = groups[c];
    std::vector<UplinkBinding> local_uplinks;
    for (std::size_t k = 0; k < spec.fabric_ports; ++k) {
      VfConfig cfg{macs.next(), VlanId(0), true, ComponentId::vswitch(c), VfRole::InOut};
      const PortId p = detail::place_vf(plan.nic, k, cfg);
      vs.inout_ports.push_back(p);
      local_uplinks.push_back({p, cfg.mac});
    }
    cp.inout = vs.inout_ports;
    for (const auto& t : groups[c]) {
      for (std::size_t k = 0; k < spec.gw_vfs_per_tenant; ++k) {
        VfConfig cfg{macs.next(), plan.vlan_map.at(t), true, ComponentId::vswitch(c), VfRole::Gateway};
        vs.gw_ports[t].push_back(detail::place_vf(plan.nic, k % spec.fabric_ports, cfg));
      }
      cp.gateways[t] = vs.gw_ports[t];
    }
    std::vector<TenantBinding> bindings;
    for (const auto& t : groups[c]) {
      const TenantSpec& ts = plan.tenant_spec(t);
      TenantBinding b{t, gateway_ip_of(ts), spec.external_gw_mac, {}, {}};
      for (std::size_t k = 0; k < spec.gw_vfs_per_tenant; ++k) {
        const PortId gw = vs.gw_ports[t][k];
        const auto& up = local_uplinks[k % spec.fabric_ports];
        b.gateways.push_back({gw, *plan.nic.mac_of(gw), up.port, up.mac});
      }
      for (std::size_t j = 0; j < ts.vm_count; ++j) {
        const std::size_t g = j % spec.gw_vfs_per_tenant;
        const PortId gw = b.gateways[g].port;
        VfConfig cfg{macs.next(), plan.vlan_map.at(t), true, ComponentId::tenant(vm_index), VfRole::Tenant};
        const PortId p = detail::place_vf(plan.nic, plan.nic.pf_of(gw), cfg);
        b.vms.push_back({cfg.mac, vm_ip_of(ts, j), g});
        plan.tenant_vms.push_back(make_vm(ts, j, p, cfg.mac, b.gateways[g].mac));
      }
      bindings.push_back(std::move(b));
    }
    for (auto& b : bindings) {
      vs.install(build_tenant_rules(b));
      if (auto vni = plan.tenant_spec(b.tenant).vni) {
        vs.install(build_vxlan_rules(vs, b, *vni, *spec.underlay));
        vs.vnis[b.tenant] = *vni;
      }
    }
    vs.install(build_transit_rules(local_uplinks, spec.external_prefix, spec.external_gw_mac));
    plan.vswitches.push_back(std::move(vs));
    plan.compartments.push_back(std::move(cp));
  }

  // NIC hardening filters.
  for (const auto& [t, vlan] : plan.vlan_map) {
    for (std::size_t pf = 0; pf < spec.fabric_ports; ++pf) {
      plan.nic.install_filter(host, {100, FilterMatch{.dst_mac = plan.nic.pf_mac(pf), .vlan = vlan}, FilterAction::Drop});
    }
  }
  std::vector<PortId> untagged_edges;
  for (std::size_t k = 0; k < spec.fabric_ports; ++k) untagged_edges.push_back(PortId::fabric(static_cast<std::uint16_t>(k)));
  for (const auto& cp : plan.compartments) untagged_edges.insert(untagged_edges.end(), cp.inout.begin(), cp.inout.end());
  for (PortId p : untagged_edges) {
    plan.nic.install_filter(host, {90, FilterMatch{.in_port = p, .ethertype = kEtherTypeVlan}, FilterAction::Drop});
  }
  for (const auto& cp : plan.compartments) {
    for (PortId p : cp.inout) {
      for (std::size_t pf = 0; pf < spec.fabric_ports; ++pf) {
        plan.nic.install_filter(host, {80, FilterMatch{.in_port = p, .dst_mac = plan.nic.pf_mac(pf)}, FilterAction::Drop});
      }
      plan.nic.install_filter(host, {80, FilterMatch{.in_port = p, .dst_mac = MacAddress::broadcast()}, FilterAction::Drop});
    }
  }
  return plan;
}

/// Re-derives the structural invariants of a plan. Returns one message per
/// violation; empty means the plan is consistent.
inline std::vector<std::string> validate_plan(const DeploymentPlan& plan) {
  std::vector<std::string> errs;
  std::set<VlanId> vlans;
  for (const auto& [t, v] : plan.vlan_map) {
    if (!vlans.insert(v).second) errs.push_back("VLAN " + std::to_string(v.value()) + " reused");
  }
  std::set<MacAddress> seen;
  for (PortId p : plan.nic.ports()) {
    if (auto m = plan.nic.mac_of(p); m && !seen.insert(*m).second) errs.push_back("MAC reused on " + p.to_string());
  }
  for (std::size_t i = 0; i < plan.nic.vf_count(); ++i) {
    const auto& cfg = plan.nic.vf_config(PortId::vf(static_cast<std::uint16_t>(i)));
    if (cfg.role == VfRole::Tenant && !cfg.spoof_check) errs.push_back("tenant VF vf" + std::to_string(i) + " not spoof-checked");
  }
  if (plan.spec.level == Level::Baseline) {
    if (plan.nic.vf_count() != 0) errs.push_back("Baseline plan carries VFs");
    for (const auto& vs : plan.vswitches) {
      if (!is_host_resident(vs.exec_ctx)) errs.push_back("Baseline vswitch not host-resident");
    }
  } else if (count_vfs(plan.spec) != plan.nic.vf_count()) {
    errs.push_back("NIC VF count differs from count_vfs");
  }
  return errs;
}

}  // namespace mts
