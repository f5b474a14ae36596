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

// JSON and CSV forms of specs, plans, metrics and reports.
//
// Deployment spec document (version 1):
//   {
//     "version": 1,
//     "level": "baseline" | "level1" | "level2",
//     "user_space": false,
//     "zones": [["red", "blue"], ["green"]],       level2 only, optional
//     "mode": "shared" | "isolated",
//     "fabric_ports": 1, "gw_vfs_per_tenant": 1, "max_vfs_per_pf": 64,
//     "external_gw_mac": "02:00:00:00:00:fe",
//     "arp": "static" | "responder",
//     "tenants": [{"id": "red", "vm_count": 1, "ip_block": "10.1.0.0/24", "vni": 7}],
//     "underlay": {"local_ip": "192.0.2.1", "remote_ip": "192.0.2.2"},
//     "external_prefix": "198.51.100.0/24",
//     "baseline_compartments": 1,
//     "expect": {"attack": [{"compromise": "vswitch:0", "host_reachable": false,
//                            "reachable_tenants": ["red"]}]}
//   }

#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mts/common.hpp"
#include "mts/harness.hpp"
#include "mts/orchestrator.hpp"
#include "mts/secmodel.hpp"

namespace mts {

using Json = nlohmann::ordered_json;

struct AttackExpectation {
  std::string compromise;
  std::optional<bool> host_reachable;
  std::optional<std::set<std::string>> reachable_tenants;
};

struct SpecDocument {
  DeploymentSpec spec;
  std::vector<AttackExpectation> attacks;
};

namespace detail {

template <class T>
T field(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* n) { return k == n; }) == known.end()) {
      throw SpecError("unknown field '" + k + "' in " + where);
    }
  }
}

template <class F>
auto parse_text(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SpecError&) {
    throw;
  } catch (const Error& e) {
    throw SpecError(what + ": " + e.what());
  }
}

}  // namespace detail

inline Level parse_level(std::string_view s) {
  for (auto l : {Level::Baseline, Level::Level1, Level::Level2}) {
    if (to_string(l) == s) return l;
  }
  throw SpecError("unknown level '" + std::string(s) + "'");
}

inline SpecDocument spec_from_json(const Json& j) {
  if (!j.is_object()) throw SpecError("spec must be a JSON object");
  detail::reject_unknown(j,
                         {"version", "level", "user_space", "zones", "mode", "fabric_ports", "gw_vfs_per_tenant",
                          "max_vfs_per_pf", "external_gw_mac", "arp", "tenants", "underlay", "external_prefix",
                          "baseline_compartments", "expect"},
                         "spec");
  SpecDocument doc;
  DeploymentSpec& s = doc.spec;
  if (!j.contains("version")) throw SpecError("spec lacks 'version'");
  s.version = detail::field<int>(j, "version", 0);
  if (!j.contains("level")) throw SpecError("spec lacks 'level'");
  s.level = parse_level(detail::field<std::string>(j, "level", ""));
  s.user_space = detail::field<bool>(j, "user_space", false);
  for (const auto& z : detail::field<std::vector<std::vector<std::string>>>(j, "zones", {})) {
    std::vector<TenantId> zone;
    for (const auto& t : z) zone.emplace_back(t);
    s.zones.push_back(std::move(zone));
  }
  const auto mode = detail::field<std::string>(j, "mode", "isolated");
  if (mode != "shared" && mode != "isolated") throw SpecError("mode must be 'shared' or 'isolated'");
  s.mode = mode == "shared" ? ResourceMode::Shared : ResourceMode::Isolated;
  s.fabric_ports = detail::field<std::size_t>(j, "fabric_ports", 1);
  s.gw_vfs_per_tenant = detail::field<std::size_t>(j, "gw_vfs_per_tenant", 1);
  s.max_vfs_per_pf = detail::field<std::size_t>(j, "max_vfs_per_pf", NicSwitch::kDefaultMaxVfsPerPf);
  if (j.contains("external_gw_mac")) {
    s.external_gw_mac = detail::parse_text("external_gw_mac", [&] {
      return MacAddress::parse(detail::field<std::string>(j, "external_gw_mac", ""));
    });
  }
  const auto arp = detail::field<std::string>(j, "arp", "static");
  if (arp != "static" && arp != "responder") throw SpecError("arp must be 'static' or 'responder'");
  s.arp = arp == "static" ? ArpMode::Static : ArpMode::Responder;
  if (!j.contains("tenants") || !j.at("tenants").is_array()) throw SpecError("spec lacks a 'tenants' array");
  for (const auto& t : j.at("tenants")) {
    if (!t.is_object()) throw SpecError("tenant entries must be objects");
    detail::reject_unknown(t, {"id", "vm_count", "ip_block", "vni"}, "tenant");
    TenantSpec ts;
    ts.id = TenantId(detail::field<std::string>(t, "id", ""));
    ts.vm_count = detail::field<std::size_t>(t, "vm_count", 1);
    if (!t.contains("ip_block")) throw SpecError("tenant " + ts.id.value + " lacks 'ip_block'");
    ts.ip_block = detail::parse_text("ip_block", [&] { return Ipv4Prefix::parse(t.at("ip_block").get<std::string>()); });
    if (t.contains("vni")) ts.vni = detail::field<std::uint32_t>(t, "vni", 0);
    s.tenants.push_back(std::move(ts));
  }
  if (j.contains("underlay")) {
    const auto& u = j.at("underlay");
    detail::reject_unknown(u, {"local_ip", "remote_ip"}, "underlay");
    s.underlay = detail::parse_text("underlay", [&] {
      return VxlanUnderlay{Ipv4Address::parse(u.at("local_ip").get<std::string>()),
                           Ipv4Address::parse(u.at("remote_ip").get<std::string>())};
    });
  }
  if (j.contains("external_prefix")) {
    s.external_prefix = detail::parse_text("external_prefix", [&] {
      return Ipv4Prefix::parse(j.at("external_prefix").get<std::string>());
    });
  }
  s.baseline_compartments = detail::field<std::size_t>(j, "baseline_compartments", 1);
  if (j.contains("expect")) {
    const auto& e = j.at("expect");
    detail::reject_unknown(e, {"attack"}, "expect");
    for (const auto& a : e.value("attack", Json::array())) {
      detail::reject_unknown(a, {"compromise", "host_reachable", "reachable_tenants"}, "attack expectation");
      AttackExpectation x;
      x.compromise = detail::field<std::string>(a, "compromise", "");
      if (a.contains("host_reachable")) x.host_reachable = a.at("host_reachable").get<bool>();
      if (a.contains("reachable_tenants")) x.reachable_tenants = a.at("reachable_tenants").get<std::set<std::string>>();
      doc.attacks.push_back(std::move(x));
    }
  }
  return doc;
}

inline SpecDocument load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(path + ": " + e.what());
  }
  return spec_from_json(j);
}

/// Parses "host", "host_user", "nic", "vswitch:N", "vm:N" or
/// "tenant:<id>/<k>" (the k-th VM of a tenant).
inline Node parse_component(const DeploymentPlan& plan, std::string_view s) {
  const auto number = [&](std::string_view digits) {
    std::uint32_t v = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || p != digits.data() + digits.size() || digits.empty()) {
      throw UnknownComponent("bad component index in '" + std::string(s) + "'");
    }
    return v;
  };
  if (s == "host" || s == "host_kernel") return Node::host_kernel();
  if (s == "host_user") return Node::host_user();
  if (s == "nic") return Node::nic();
  if (s.starts_with("vswitch:")) return Node::vswitch(number(s.substr(8)));
  if (s.starts_with("vm:")) return Node::tenant(number(s.substr(3)));
  if (s.starts_with("tenant:")) {
    const auto rest = s.substr(7);
    const auto slash = rest.find('/');
    const TenantId id{std::string(rest.substr(0, slash))};
    const std::uint32_t k = slash == std::string_view::npos ? 0 : number(rest.substr(slash + 1));
    std::uint32_t seen = 0;
    for (const auto& vm : plan.tenant_vms) {
      if (vm.tenant == id && seen++ == k) return Node::tenant(vm.id);
    }
    throw UnknownComponent("no VM " + std::to_string(k) + " in tenant " + id.value);
  }
  throw UnknownComponent("unknown component '" + std::string(s) + "'");
}

inline Json to_json(const DeploymentSpec& s) {
  Json j;
  j["version"] = s.version;
  j["level"] = to_string(s.level);
  j["user_space"] = s.user_space;
  if (!s.zones.empty()) {
    Json zones = Json::array();
    for (const auto& z : s.zones) {
      Json zone = Json::array();
      for (const auto& t : z) zone.push_back(t.value);
      zones.push_back(zone);
    }
    j["zones"] = zones;
  }
  j["mode"] = to_string(s.mode);
  j["fabric_ports"] = s.fabric_ports;
  j["gw_vfs_per_tenant"] = s.gw_vfs_per_tenant;
  j["max_vfs_per_pf"] = s.max_vfs_per_pf;
  j["external_gw_mac"] = s.external_gw_mac.to_string();
  j["arp"] = to_string(s.arp);
  Json tenants = Json::array();
  for (const auto& t : s.tenants) {
    Json tj{{"id", t.id.value}, {"vm_count", t.vm_count}, {"ip_block", t.ip_block.to_string()}};
    if (t.vni) tj["vni"] = *t.vni;
    tenants.push_back(tj);
  }
  j["tenants"] = tenants;
  if (s.underlay) {
    j["underlay"] = {{"local_ip", s.underlay->local_ip.to_string()}, {"remote_ip", s.underlay->remote_ip.to_string()}};
  }
  j["external_prefix"] = s.external_prefix.to_string();
  j["baseline_compartments"] = s.baseline_compartments;
  return j;
}

inline Json to_json(const ResourceAccount& r) {
  return {{"host_cores", r.host_cores},
          {"vswitch_cores", r.vswitch_cores},
          {"total_cores", r.total_cores()},
          {"compartments", r.compartments},
          {"tenant_vms", r.tenant_vms},
          {"ram_gb_per_vm", r.ram_gb_per_vm},
          {"hugepages_gb_per_vm", r.hugepages_gb_per_vm},
          {"vswitch_ram_gb", r.vswitch_ram_gb()},
          {"vswitch_hugepages_gb", r.vswitch_hugepages_gb()},
          {"tenant_ram_gb", r.tenant_ram_gb()},
          {"host_hugepages_gb", r.host_hugepages_gb},
          {"total_vfs", r.total_vfs}};
}

inline std::vector<std::string> rule_lines(const VswitchInstance& vs) {
  std::vector<std::string> out;
  for (const auto& r : vs.table.rules()) out.push_back(to_string(r));
  return out;
}

inline Json to_json(const DeploymentPlan& p) {
  Json j;
  j["spec"] = to_json(p.spec);
  j["effective_mode"] = to_string(p.effective_mode);
  Json nic;
  Json pfs = Json::array();
  for (std::size_t i = 0; i < p.nic.pf_count(); ++i) {
    pfs.push_back({{"port", PortId::pf(static_cast<std::uint16_t>(i)).to_string()},
                   {"mac", p.nic.pf_mac(i) ? p.nic.pf_mac(i)->to_string() : ""}});
  }
  nic["pfs"] = pfs;
  Json vfs = Json::array();
  for (std::size_t i = 0; i < p.nic.vf_count(); ++i) {
    const PortId vf = PortId::vf(static_cast<std::uint16_t>(i));
    const auto& c = p.nic.vf_config(vf);
    vfs.push_back({{"port", vf.to_string()},
                   {"pf", p.nic.pf_of(vf)},
                   {"role", to_string(c.role)},
                   {"mac", c.mac.to_string()},
                   {"pvid", c.pvid.value()},
                   {"spoof_check", c.spoof_check},
                   {"attached_to", to_string(c.attached_to)}});
  }
  nic["vfs"] = vfs;
  Json filters = Json::array();
  for (const auto& f : p.nic.filters()) {
    Json m = Json::object();
    if (f.match.in_port) m["in_port"] = f.match.in_port->to_string();
    if (f.match.src_mac) m["src_mac"] = f.match.src_mac->to_string();
    if (f.match.dst_mac) m["dst_mac"] = f.match.dst_mac->to_string();
    if (f.match.vlan) m["vlan"] = f.match.vlan->value();
    if (f.match.ethertype) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "0x%04x", *f.match.ethertype);
      m["ethertype"] = buf;
    }
    filters.push_back({{"priority", f.priority}, {"match", m}, {"action", f.action == FilterAction::Drop ? "drop" : "allow"}});
  }
  nic["filters"] = filters;
  j["nic"] = nic;
  Json vlans = Json::object();
  for (const auto& t : p.spec.tenants) {
    if (auto it = p.vlan_map.find(t.id); it != p.vlan_map.end()) vlans[t.id.value] = it->second.value();
  }
  j["vlan_map"] = vlans;
  Json vss = Json::array();
  for (const auto& vs : p.vswitches) {
    Json v{{"id", vs.id}, {"exec_ctx", to_string(vs.exec_ctx)}};
    Json inout = Json::array();
    for (auto port : vs.inout_ports) inout.push_back(port.to_string());
    v["inout_ports"] = inout;
    Json gws = Json::object();
    for (const auto& [t, ports] : vs.gw_ports) {
      Json arr = Json::array();
      for (auto port : ports) arr.push_back(port.to_string());
      gws[t.value] = arr;
    }
    v["gw_ports"] = gws;
    if (!vs.vnis.empty()) {
      Json vn = Json::object();
      for (const auto& [t, n] : vs.vnis) vn[t.value] = n;
      v["vnis"] = vn;
    }
    v["rules"] = rule_lines(vs);
    vss.push_back(v);
  }
  j["vswitches"] = vss;
  Json vms = Json::array();
  for (const auto& vm : p.tenant_vms) {
    Json arp = Json::object();
    for (const auto& [ip, mac] : vm.static_arp) arp[ip.to_string()] = mac.to_string();
    vms.push_back({{"id", vm.id},
                   {"tenant", vm.tenant.value},
                   {"port", vm.port.to_string()},
                   {"mac", vm.mac.to_string()},
                   {"ip", vm.ip.to_string()},
                   {"gateway_ip", vm.gateway_ip.to_string()},
                   {"static_arp", arp},
                   {"arp_responder", vm.arp_responder}});
  }
  j["tenant_vms"] = vms;
  j["resources"] = to_json(p.resources);
  return j;
}

inline Json to_json(const Metrics& m) {
  Json flows = Json::array();
  for (const auto& f : m.flows) {
    flows.push_back({{"flow_id", f.flow_id},
                     {"injected", f.injected},
                     {"delivered", f.delivered},
                     {"dropped", f.dropped},
                     {"drop_reasons", f.drop_reasons},
                     {"nic_traversals", {{"min", f.traversals_min}, {"max", f.traversals_max}, {"mean", f.traversals_mean}}},
                     {"hops", {{"min", f.hops_min}, {"max", f.hops_max}, {"mean", f.hops_mean}}}});
  }
  return {{"latency_proxy", "nic_traversals (hop count, not seconds)"},
          {"flows", flows},
          {"drops", m.drops},
          {"links", m.links},
          {"rule_hits", m.rule_hits},
          {"steps", m.steps}};
}

inline std::string format_mean(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << v;
  return os.str();
}

/// Columns: flow_id, injected, delivered, dropped, drop_reason_breakdown,
/// nic_traversals_mean. The breakdown is `Reason:n` pairs joined by ';'.
inline std::string metrics_csv(const Metrics& m) {
  std::string out = "flow_id,injected,delivered,dropped,drop_reason_breakdown,nic_traversals_mean\n";
  for (const auto& f : m.flows) {
    std::string breakdown;
    for (const auto& [r, n] : f.drop_reasons) breakdown += (breakdown.empty() ? "" : ";") + r + ":" + std::to_string(n);
    out += std::to_string(f.flow_id) + "," + std::to_string(f.injected) + "," + std::to_string(f.delivered) + "," +
           std::to_string(f.dropped) + "," + breakdown + "," + format_mean(f.traversals_mean) + "\n";
  }
  return out;
}

inline Json to_json(const TraceEvent& e) {
  Json j{{"packet", e.packet},
         {"step", e.step},
         {"tick", e.tick},
         {"kind", to_string(e.kind)},
         {"location", to_string(e.location)},
         {"component", e.component},
         {"port", e.port.to_string()},
         {"dst", e.header.dst.to_string()},
         {"src", e.header.src.to_string()}};
  j["vlan"] = e.header.vlan ? Json(e.header.vlan->value()) : Json(nullptr);
  j["dst_ip"] = e.header.dst_ip ? Json(e.header.dst_ip->to_string()) : Json(nullptr);
  j["vni"] = e.header.vni ? Json(*e.header.vni) : Json(nullptr);
  if (e.drop) j["drop"] = to_string(*e.drop);
  return j;
}

inline Json to_json(const CompromiseReport& r) {
  Json tenants = Json::array();
  for (const auto& t : r.reachable_tenants) tenants.push_back(t.value);
  Json controlled = Json::array();
  for (const auto& n : r.controlled) controlled.push_back(to_string(n));
  Json exposed = Json::array();
  for (const auto& n : r.exposed) exposed.push_back(to_string(n));
  return {{"compromised", to_string(r.compromised)},
          {"host_reachable", r.host_reachable},
          {"reachable_tenants", tenants},
          {"controlled", controlled},
          {"exposed", exposed},
          {"paths", r.paths}};
}

inline std::string report_table(const CompromiseReport& r) {
  std::string tenants;
  for (const auto& t : r.reachable_tenants) tenants += (tenants.empty() ? "" : ",") + t.value;
  std::string out;
  out += "compromised        " + to_string(r.compromised) + "\n";
  out += "host_reachable     " + std::string(r.host_reachable ? "yes" : "no") + "\n";
  out += "reachable_tenants  " + (tenants.empty() ? std::string("-") : tenants) + "\n";
  out += "paths:\n";
  for (const auto& p : r.paths) out += "  " + p + "\n";
  return out;
}

/// Compares a report with one expectation; returns the mismatches.
inline std::vector<std::string> check_expectation(const CompromiseReport& r, const AttackExpectation& x) {
  std::vector<std::string> errs;
  if (x.host_reachable && *x.host_reachable != r.host_reachable) {
    errs.push_back(x.compromise + ": expected host_reachable=" + (*x.host_reachable ? "true" : "false"));
  }
  if (x.reachable_tenants) {
    std::set<std::string> got;
    for (const auto& t : r.reachable_tenants) got.insert(t.value);
    if (got != *x.reachable_tenants) errs.push_back(x.compromise + ": reachable tenants differ from expectation");
  }
  return errs;
}

inline std::string resources_table(const ResourceAccount& r) {
  std::string out;
  const auto row = [&](const std::string& k, std::size_t v) {
    out += k + std::string(k.size() < 22 ? 22 - k.size() : 1, ' ') + std::to_string(v) + "\n";
  };
  row("host_cores", r.host_cores);
  row("vswitch_cores", r.vswitch_cores);
  row("total_cores", r.total_cores());
  row("compartments", r.compartments);
  row("tenant_vms", r.tenant_vms);
  row("ram_gb_per_vm", r.ram_gb_per_vm);
  row("hugepages_gb_per_vm", r.hugepages_gb_per_vm);
  row("vswitch_ram_gb", r.vswitch_ram_gb());
  row("tenant_ram_gb", r.tenant_ram_gb());
  row("host_hugepages_gb", r.host_hugepages_gb);
  row("total_vfs", r.total_vfs);
  return out;
}

inline std::string resources_csv(const ResourceAccount& r) {
  return "host_cores,vswitch_cores,total_cores,compartments,tenant_vms,ram_gb_per_vm,hugepages_gb_per_vm,"
         "vswitch_ram_gb,tenant_ram_gb,host_hugepages_gb,total_vfs\n" +
         std::to_string(r.host_cores) + "," + std::to_string(r.vswitch_cores) + "," + std::to_string(r.total_cores()) +
         "," + std::to_string(r.compartments) + "," + std::to_string(r.tenant_vms) + "," +
         std::to_string(r.ram_gb_per_vm) + "," + std::to_string(r.hugepages_gb_per_vm) + "," +
         std::to_string(r.vswitch_ram_gb()) + "," + std::to_string(r.tenant_ram_gb()) + "," +
         std::to_string(r.host_hugepages_gb) + "," + std::to_string(r.total_vfs) + "\n";
}

inline Json to_json(const FuzzReport& r) {
  Json v = Json::array();
  for (const auto& x : r.violations) v.push_back(x.to_string());
  return {{"injected", r.injected}, {"deliveries", r.deliveries}, {"drops", r.drops}, {"violations", v}};
}

inline Json to_json(const GoldenResult& r) {
  Json j{{"pass", r.pass}, {"steps_matched", r.steps_matched}};
  if (r.failed_step) {
    j["failed_step"] = *r.failed_step;
    j["expected"] = r.expected;
    j["observed"] = r.observed;
    Json d = Json::array();
    for (auto x : r.drops) d.push_back(to_string(x));
    j["drops"] = d;
  }
  return j;
}

}  // namespace mts
