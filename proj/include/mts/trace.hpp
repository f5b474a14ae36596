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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "mts/frames.hpp"

namespace mts {

enum class PortKind : std::uint8_t { Fabric, Pf, Vf, Tap };

/// A port on the NIC switch (Fabric/Pf/Vf) or a software port on a
/// host-resident vswitch (Tap).
struct PortId {
  PortKind kind = PortKind::Fabric;
  std::uint16_t index = 0;

  static constexpr PortId fabric(std::uint16_t i) { return {PortKind::Fabric, i}; }
  static constexpr PortId pf(std::uint16_t i) { return {PortKind::Pf, i}; }
  static constexpr PortId vf(std::uint16_t i) { return {PortKind::Vf, i}; }
  static constexpr PortId tap(std::uint16_t i) { return {PortKind::Tap, i}; }

  constexpr bool is_nic_port() const { return kind != PortKind::Tap; }

  std::string to_string() const {
    switch (kind) {
      case PortKind::Fabric: return "fabric" + std::to_string(index);
      case PortKind::Pf: return "pf" + std::to_string(index);
      case PortKind::Vf: return "vf" + std::to_string(index);
      case PortKind::Tap: return "tap" + std::to_string(index);
    }
    return "?";
  }

  static PortId parse(std::string_view s) {
    auto take = [&](std::string_view prefix, PortKind k) -> std::optional<PortId> {
      if (s.substr(0, prefix.size()) != prefix) return std::nullopt;
      auto digits = s.substr(prefix.size());
      unsigned v = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec != std::errc() || p != digits.data() + digits.size() || digits.empty() || v > 0xffff) {
        return std::nullopt;
      }
      return PortId{k, static_cast<std::uint16_t>(v)};
    };
    for (auto [prefix, kind] : {std::pair{std::string_view("fabric"), PortKind::Fabric},
                                {std::string_view("pf"), PortKind::Pf},
                                {std::string_view("vf"), PortKind::Vf},
                                {std::string_view("tap"), PortKind::Tap}}) {
      if (auto id = take(prefix, kind)) return *id;
    }
    throw Error("invalid port id: " + std::string(s));
  }

  constexpr auto operator<=>(const PortId&) const = default;
  constexpr bool operator==(const PortId&) const = default;
};

/// Where in the topology a trace event was observed.
enum class TraceLocation : std::uint8_t { Fabric, NicSwitch, Vswitch, Tenant, Host };

enum class TraceKind : std::uint8_t {
  Inject,      // frame enters the system from the fabric
  NicIngress,  // NIC switch accepted and classified a frame (vlan = internal VLAN)
  NicEgress,   // NIC switch emitted a frame on a port
  VswitchRx,
  VswitchTx,
  TenantRx,
  TenantTx,
  HostRx,
  FabricRx,    // frame left the server through a fabric port
  SoftLink,    // frame crossed a software edge between a host vswitch and a VM
  Drop,
};

constexpr std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Inject: return "inject";
    case TraceKind::NicIngress: return "nic_ingress";
    case TraceKind::NicEgress: return "nic_egress";
    case TraceKind::VswitchRx: return "vswitch_rx";
    case TraceKind::VswitchTx: return "vswitch_tx";
    case TraceKind::TenantRx: return "tenant_rx";
    case TraceKind::TenantTx: return "tenant_tx";
    case TraceKind::HostRx: return "host_rx";
    case TraceKind::FabricRx: return "fabric_rx";
    case TraceKind::SoftLink: return "soft_link";
    case TraceKind::Drop: return "drop";
  }
  return "?";
}

constexpr std::string_view to_string(TraceLocation l) {
  switch (l) {
    case TraceLocation::Fabric: return "fabric";
    case TraceLocation::NicSwitch: return "nic";
    case TraceLocation::Vswitch: return "vswitch";
    case TraceLocation::Tenant: return "tenant";
    case TraceLocation::Host: return "host";
  }
  return "?";
}

/// Header fields captured at one hop.
struct HeaderSnapshot {
  MacAddress dst;
  MacAddress src;
  std::optional<VlanId> vlan;
  std::optional<Ipv4Address> dst_ip;
  std::optional<std::uint32_t> vni;

  static HeaderSnapshot of(const EthernetFrame& f) {
    HeaderSnapshot s{f.dst, f.src, f.vlan, std::nullopt, std::nullopt};
    if (auto* ip = f.ipv4()) {
      s.dst_ip = ip->dst;
      if (auto* vx = ip->vxlan()) s.vni = vx->vni;
    }
    return s;
  }

  bool operator==(const HeaderSnapshot&) const = default;
};

struct TraceEvent {
  std::uint64_t packet = 0;
  std::uint32_t step = 0;  // per-packet, strictly increasing
  std::uint32_t tick = 0;  // engine step in which the event happened
  TraceKind kind = TraceKind::Inject;
  TraceLocation location = TraceLocation::Fabric;
  std::uint32_t component = 0;  // vswitch id / vm index where applicable
  PortId port;
  HeaderSnapshot header;
  std::optional<DropReason> drop;

  std::string to_string() const {
    std::string s = "pkt=" + std::to_string(packet) + " step=" + std::to_string(step) +
                    " tick=" + std::to_string(tick) + ' ' + std::string(mts::to_string(kind)) + ' ' +
                    std::string(mts::to_string(location)) + ':' + std::to_string(component) +
                    " port=" + port.to_string() + " dst=" + header.dst.to_string() +
                    " src=" + header.src.to_string() +
                    " vlan=" + (header.vlan ? std::to_string(header.vlan->value()) : "-") +
                    " dst_ip=" + (header.dst_ip ? header.dst_ip->to_string() : "-") +
                    " vni=" + (header.vni ? std::to_string(*header.vni) : "-");
    if (drop) s += " drop=" + std::string(mts::to_string(*drop));
    return s;
  }
};

}  // namespace mts
