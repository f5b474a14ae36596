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

// Tenant VM behavior. A VM owns one port, a static ARP table for its
// gateway, and an application: Source, Sink, Echo, or an L2 forwarder.

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
#include "mts/trace.hpp"

namespace mts {

/// IP protocol number used for generated data packets (experimental range).
inline constexpr std::uint8_t kDataProtocol = 253;
/// Smallest data frame: Ethernet + IPv4 headers with an empty body.
inline constexpr std::size_t kMinDataFrame = kEthernetHeaderLen + kIpv4HeaderLen;

namespace app {
/// Originates traffic; absorbs whatever comes back.
struct Source {
  std::optional<Ipv4Address> dst;
  std::size_t size = 64;
  bool operator==(const Source&) const = default;
};
struct Sink {
  bool operator==(const Sink&) const = default;
};
/// Returns every unicast frame addressed to the VM with both layers swapped.
struct Echo {
  bool operator==(const Echo&) const = default;
};
struct L2Fwd {
  MacAddress next_hop_mac;
  bool operator==(const L2Fwd&) const = default;
};
}  // namespace app

using AppBehavior = std::variant<app::Source, app::Sink, app::Echo, app::L2Fwd>;

inline std::string to_string(const AppBehavior& a) {
  if (std::holds_alternative<app::Source>(a)) return "source";
  if (std::holds_alternative<app::Sink>(a)) return "sink";
  if (std::holds_alternative<app::Echo>(a)) return "echo";
  return "l2fwd:" + std::get<app::L2Fwd>(a).next_hop_mac.to_string();
}

/// A frame parked until its next hop resolves. `tag` is opaque to the VM
/// and lets the caller keep track of which packet it belongs to.
struct PendingFrame {
  std::uint64_t tag = 0;
  EthernetFrame frame;

  bool operator==(const PendingFrame&) const = default;
};

struct TenantVm {
  std::uint32_t id = 0;
  TenantId tenant;
  PortId port;  // tenant VF, or a tap on a host-resident vswitch
  MacAddress mac;
  Ipv4Address ip;
  Ipv4Address gateway_ip;
  /// Destinations reached without the gateway. Empty: everything is routed.
  std::optional<Ipv4Prefix> onlink;
  std::map<Ipv4Address, MacAddress> static_arp;
  /// Whether something on the segment answers ARP for the gateway.
  bool arp_responder = false;
  AppBehavior app = app::Sink{};

  // Run-time state.
  std::map<Ipv4Address, MacAddress> arp_cache;
  std::vector<PendingFrame> pending;  // data waiting on ARP resolution
  std::uint64_t payload_counter = 0;

  bool operator==(const TenantVm&) const = default;
};

/// Deterministic data body: consecutive bytes starting at `seed`.
inline Bytes counter_payload(std::uint64_t seed, std::size_t len) {
  Bytes b(len);
  for (std::size_t i = 0; i < len; ++i) b[i] = static_cast<std::uint8_t>(seed + i);
  return b;
}

/// IPv4 data frame of exactly `size` serialized bytes (untagged).
inline EthernetFrame data_frame(MacAddress dst, MacAddress src, Ipv4Address src_ip, Ipv4Address dst_ip,
                                std::size_t size, std::uint64_t seed) {
  if (size < kMinDataFrame) throw ConfigError("data frame must be at least " + std::to_string(kMinDataFrame) + " bytes");
  EthernetFrame f;
  f.dst = dst;
  f.src = src;
  f.payload = Ipv4Packet{src_ip, dst_ip, kDataProtocol, counter_payload(seed, size - kMinDataFrame)};
  return f;
}

inline Ipv4Address next_hop(const TenantVm& vm, Ipv4Address dst) {
  return vm.onlink && vm.onlink->contains(dst) ? dst : vm.gateway_ip;
}

inline std::optional<MacAddress> resolve(const TenantVm& vm, Ipv4Address hop) {
  if (auto it = vm.static_arp.find(hop); it != vm.static_arp.end()) return it->second;
  if (auto it = vm.arp_cache.find(hop); it != vm.arp_cache.end()) return it->second;
  return std::nullopt;
}

/// Builds a data frame toward `dst_ip`. The next hop must already be
/// resolved; see `send` for the variant that falls back to ARP.
inline EthernetFrame make_packet(TenantVm& vm, Ipv4Address dst_ip, std::size_t size) {
  const Ipv4Address hop = next_hop(vm, dst_ip);
  auto mac = resolve(vm, hop);
  if (!mac) throw UnresolvableNextHop("VM " + std::to_string(vm.id) + " has no ARP entry for " + hop.to_string());
  return data_frame(*mac, vm.mac, vm.ip, dst_ip, size, vm.payload_counter++);
}

inline EthernetFrame arp_request(const TenantVm& vm, Ipv4Address target) {
  EthernetFrame f;
  f.dst = MacAddress::broadcast();
  f.src = vm.mac;
  f.payload = ArpMessage::request(vm.mac, vm.ip, target);
  return f;
}

/// Emits a data frame, or an ARP request with the frame parked until the
/// reply arrives.
inline std::vector<EthernetFrame> send_frame(TenantVm& vm, EthernetFrame frame, std::uint64_t tag = 0) {
  const Ipv4Packet* ip = frame.ipv4();
  if (!ip) return {std::move(frame)};
  const Ipv4Address hop = next_hop(vm, ip->dst);
  if (auto mac = resolve(vm, hop)) {
    frame.dst = *mac;
    return {std::move(frame)};
  }
  if (!vm.arp_responder) {
    throw UnresolvableNextHop("VM " + std::to_string(vm.id) + " cannot resolve " + hop.to_string());
  }
  const bool asked = std::any_of(vm.pending.begin(), vm.pending.end(),
                                 [&](const PendingFrame& p) { return next_hop(vm, p.frame.ipv4()->dst) == hop; });
  vm.pending.push_back({tag, std::move(frame)});
  if (asked) return {};
  return {arp_request(vm, hop)};
}

inline std::vector<EthernetFrame> send(TenantVm& vm, Ipv4Address dst_ip, std::size_t size) {
  EthernetFrame f = data_frame(MacAddress(), vm.mac, vm.ip, dst_ip, size, vm.payload_counter++);
  return send_frame(vm, std::move(f));
}

/// Swaps L2 and L3 endpoints.
inline EthernetFrame echo_of(const EthernetFrame& f) {
  EthernetFrame r = f;
  std::swap(r.dst, r.src);
  if (auto* ip = std::get_if<Ipv4Packet>(&r.payload)) std::swap(ip->src, ip->dst);
  return r;
}

struct TenantOutput {
  EthernetFrame frame;
  std::optional<std::uint64_t> released_tag;  // set for frames that waited on ARP
};

/// Reaction of `vm` to a frame delivered on its port, keeping the tags of
/// frames released from the pending queue.
inline std::vector<TenantOutput> tenant_react(TenantVm& vm, const EthernetFrame& frame) {
  std::vector<TenantOutput> out;
  if (const ArpMessage* arp = frame.arp()) {
    if (arp->op == ArpOp::Reply && arp->target_ip == vm.ip) {
      vm.arp_cache[arp->sender_ip] = arp->sender_mac;
      std::vector<PendingFrame> still;
      for (auto& p : vm.pending) {
        if (next_hop(vm, p.frame.ipv4()->dst) == arp->sender_ip) {
          p.frame.dst = arp->sender_mac;
          out.push_back({std::move(p.frame), p.tag});
        } else {
          still.push_back(std::move(p));
        }
      }
      vm.pending = std::move(still);
    } else if (arp->op == ArpOp::Request && arp->target_ip == vm.ip) {
      EthernetFrame r;
      r.dst = arp->sender_mac;
      r.src = vm.mac;
      r.payload = ArpMessage::reply(vm.mac, vm.ip, arp->sender_mac, arp->sender_ip);
      out.push_back({std::move(r), std::nullopt});
    }
    return out;
  }
  if (frame.dst != vm.mac) return out;
  if (std::holds_alternative<app::Echo>(vm.app)) {
    const Ipv4Packet* ip = frame.ipv4();
    if (ip && ip->dst == vm.ip) out.push_back({echo_of(frame), std::nullopt});
  } else if (const auto* fwd = std::get_if<app::L2Fwd>(&vm.app)) {
    EthernetFrame r = frame;
    r.dst = fwd->next_hop_mac;
    r.src = vm.mac;
    out.push_back({std::move(r), std::nullopt});
  }
  return out;
}

inline std::vector<EthernetFrame> tenant_handle(TenantVm& vm, const EthernetFrame& frame) {
  std::vector<EthernetFrame> frames;
  for (auto& o : tenant_react(vm, frame)) frames.push_back(std::move(o.frame));
  return frames;
}

/// Whether a frame reaching `vm` is consumed without a reply.
inline bool absorbs(const TenantVm& vm) {
  return std::holds_alternative<app::Sink>(vm.app) || std::holds_alternative<app::Source>(vm.app);
}

}  // namespace mts
