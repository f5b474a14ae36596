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

// Frame data model and wire codec.
//
// Frames are immutable values. The codec is bit-exact for the subset of
// Ethernet II / 802.1Q / IPv4 / UDP / VXLAN / ARP the simulator models:
//   - IPv4 and UDP checksums are always written as zero and never verified.
//   - No minimum-length padding is added; a frame is exactly as long as its
//     headers and payload.
//   - IPv4 options, fragmentation and stacked VLAN tags are not modeled.

#pragma once

#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mts/common.hpp"

namespace mts {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
inline constexpr std::uint16_t kEtherTypeArp = 0x0806;
inline constexpr std::uint16_t kEtherTypeVlan = 0x8100;
inline constexpr std::uint8_t kIpProtoUdp = 17;
inline constexpr std::uint16_t kVxlanPort = 4789;
// Fixed outer UDP source port. Real VTEPs hash the inner flow here; a constant
// keeps encapsulated bytes reproducible.
inline constexpr std::uint16_t kVxlanSourcePort = 49152;
inline constexpr std::uint32_t kVniLimit = 1u << 24;

inline constexpr std::size_t kEthernetHeaderLen = 14;
inline constexpr std::size_t kVlanTagLen = 4;
inline constexpr std::size_t kIpv4HeaderLen = 20;
inline constexpr std::size_t kUdpHeaderLen = 8;
inline constexpr std::size_t kVxlanHeaderLen = 8;
inline constexpr std::size_t kArpLen = 28;

namespace detail {

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

inline void put16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline std::uint16_t get16(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint16_t>((in[at] << 8) | in[at + 1]);
}

}  // namespace detail

class MacAddress {
 public:
  using Octets = std::array<std::uint8_t, 6>;

  constexpr MacAddress() = default;
  constexpr explicit MacAddress(Octets octets) : octets_(octets) {}

  static constexpr MacAddress broadcast() { return MacAddress({0xff, 0xff, 0xff, 0xff, 0xff, 0xff}); }

  /// Accepts six hex pairs separated by ':' or '-'.
  static MacAddress parse(std::string_view text) {
    Octets o{};
    if (text.size() != 17) throw FrameError("invalid MAC address: " + std::string(text));
    for (std::size_t i = 0; i < 6; ++i) {
      int hi = detail::hex_value(text[i * 3]);
      int lo = detail::hex_value(text[i * 3 + 1]);
      if (hi < 0 || lo < 0 || (i < 5 && text[i * 3 + 2] != ':' && text[i * 3 + 2] != '-')) {
        throw FrameError("invalid MAC address: " + std::string(text));
      }
      o[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return MacAddress(o);
  }

  constexpr const Octets& octets() const { return octets_; }
  constexpr bool is_broadcast() const { return *this == broadcast(); }
  constexpr bool is_multicast() const { return (octets_[0] & 0x01) != 0; }
  constexpr bool is_zero() const { return *this == MacAddress(); }

  std::string to_string() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s(17, ':');
    for (std::size_t i = 0; i < 6; ++i) {
      s[i * 3] = kHex[octets_[i] >> 4];
      s[i * 3 + 1] = kHex[octets_[i] & 0xf];
    }
    return s;
  }

  constexpr auto operator<=>(const MacAddress&) const = default;
  constexpr bool operator==(const MacAddress&) const = default;

 private:
  Octets octets_{};
};

/// 802.1Q VLAN identifier. Zero means "no tenant VLAN" / untagged.
class VlanId {
 public:
  static constexpr std::uint16_t kMax = 4094;

  constexpr VlanId() = default;
  constexpr explicit VlanId(std::uint16_t v) : value_(v) {
    if (v > kMax) throw FrameError("VLAN id out of range: " + std::to_string(v));
  }

  constexpr std::uint16_t value() const { return value_; }
  constexpr bool is_untagged() const { return value_ == 0; }

  constexpr auto operator<=>(const VlanId&) const = default;
  constexpr bool operator==(const VlanId&) const = default;

 private:
  std::uint16_t value_ = 0;
};

class Ipv4Address {
 public:
  constexpr Ipv4Address() = default;
  constexpr explicit Ipv4Address(std::uint32_t host_order) : value_(host_order) {}
  constexpr Ipv4Address(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value_(std::uint32_t{a} << 24 | std::uint32_t{b} << 16 | std::uint32_t{c} << 8 | d) {}

  static Ipv4Address parse(std::string_view text) {
    std::uint32_t v = 0;
    const char* p = text.data();
    const char* end = text.data() + text.size();
    for (int i = 0; i < 4; ++i) {
      unsigned octet = 0;
      auto [next, ec] = std::from_chars(p, end, octet);
      if (ec != std::errc() || next == p || octet > 255 || next - p > 3) {
        throw FrameError("invalid IPv4 address: " + std::string(text));
      }
      v = v << 8 | octet;
      p = next;
      if (i < 3) {
        if (p == end || *p != '.') throw FrameError("invalid IPv4 address: " + std::string(text));
        ++p;
      }
    }
    if (p != end) throw FrameError("invalid IPv4 address: " + std::string(text));
    return Ipv4Address(v);
  }

  constexpr std::uint32_t value() const { return value_; }

  std::string to_string() const {
    return std::to_string(value_ >> 24) + '.' + std::to_string((value_ >> 16) & 0xff) + '.' +
           std::to_string((value_ >> 8) & 0xff) + '.' + std::to_string(value_ & 0xff);
  }

  constexpr auto operator<=>(const Ipv4Address&) const = default;
  constexpr bool operator==(const Ipv4Address&) const = default;

 private:
  std::uint32_t value_ = 0;
};

struct Ipv4Prefix {
  Ipv4Address address;
  std::uint8_t length = 0;

  static Ipv4Prefix parse(std::string_view text) {
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return {Ipv4Address::parse(text), 32};
    unsigned len = 0;
    auto tail = text.substr(slash + 1);
    auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), len);
    if (ec != std::errc() || p != tail.data() + tail.size() || len > 32) {
      throw FrameError("invalid IPv4 prefix: " + std::string(text));
    }
    return {Ipv4Address::parse(text.substr(0, slash)), static_cast<std::uint8_t>(len)};
  }

  constexpr std::uint32_t mask() const { return length == 0 ? 0 : ~std::uint32_t{0} << (32 - length); }
  constexpr Ipv4Address network() const { return Ipv4Address(address.value() & mask()); }
  constexpr bool contains(Ipv4Address ip) const { return (ip.value() & mask()) == (address.value() & mask()); }
  constexpr bool overlaps(const Ipv4Prefix& o) const {
    auto m = length < o.length ? mask() : o.mask();
    return (address.value() & m) == (o.address.value() & m);
  }
  /// Number of addresses covered.
  constexpr std::uint64_t size() const { return std::uint64_t{1} << (32 - length); }

  std::string to_string() const { return address.to_string() + '/' + std::to_string(length); }

  constexpr auto operator<=>(const Ipv4Prefix&) const = default;
  constexpr bool operator==(const Ipv4Prefix&) const = default;
};

/// Payload bytes under an EtherType the codec does not interpret.
struct OpaquePayload {
  std::uint16_t ethertype = 0;
  Bytes data;

  bool operator==(const OpaquePayload&) const = default;
};

enum class ArpOp : std::uint16_t { Request = 1, Reply = 2 };

struct ArpMessage {
  ArpOp op = ArpOp::Request;
  MacAddress sender_mac;
  Ipv4Address sender_ip;
  MacAddress target_mac;
  Ipv4Address target_ip;

  static ArpMessage request(MacAddress sender_mac, Ipv4Address sender_ip, Ipv4Address target_ip) {
    return {ArpOp::Request, sender_mac, sender_ip, MacAddress(), target_ip};
  }
  static ArpMessage reply(MacAddress sender_mac, Ipv4Address sender_ip, MacAddress target_mac,
                          Ipv4Address target_ip) {
    return {ArpOp::Reply, sender_mac, sender_ip, target_mac, target_ip};
  }

  bool operator==(const ArpMessage&) const = default;
};

struct EthernetFrame;

/// VXLAN tunnel: carried as UDP/4789 inside an IPv4 packet.
struct VxlanEnvelope {
  std::uint32_t vni = 0;
  std::shared_ptr<const EthernetFrame> inner;

  bool operator==(const VxlanEnvelope& o) const;
};

struct Ipv4Packet {
  Ipv4Address src;
  Ipv4Address dst;
  std::uint8_t protocol = 0;
  std::variant<Bytes, VxlanEnvelope> body;

  const VxlanEnvelope* vxlan() const { return std::get_if<VxlanEnvelope>(&body); }

  bool operator==(const Ipv4Packet&) const = default;
};

struct EthernetFrame {
  MacAddress dst;
  MacAddress src;
  std::optional<VlanId> vlan;
  std::variant<Ipv4Packet, ArpMessage, OpaquePayload> payload;

  const Ipv4Packet* ipv4() const { return std::get_if<Ipv4Packet>(&payload); }
  const ArpMessage* arp() const { return std::get_if<ArpMessage>(&payload); }

  /// EtherType of the payload (the one after any VLAN tag).
  std::uint16_t inner_ethertype() const {
    if (ipv4()) return kEtherTypeIpv4;
    if (arp()) return kEtherTypeArp;
    return std::get<OpaquePayload>(payload).ethertype;
  }
  /// EtherType at byte offset 12 on the wire.
  std::uint16_t wire_ethertype() const { return vlan ? kEtherTypeVlan : inner_ethertype(); }

  bool operator==(const EthernetFrame&) const = default;
};

inline bool VxlanEnvelope::operator==(const VxlanEnvelope& o) const {
  if (vni != o.vni) return false;
  if (!inner || !o.inner) return inner == o.inner;
  return *inner == *o.inner;
}

namespace detail {

inline std::size_t ipv4_body_len(const Ipv4Packet& p);

inline std::size_t frame_len(const EthernetFrame& f) {
  std::size_t n = kEthernetHeaderLen + (f.vlan ? kVlanTagLen : 0);
  if (auto* ip = f.ipv4()) return n + kIpv4HeaderLen + ipv4_body_len(*ip);
  if (f.arp()) return n + kArpLen;
  return n + std::get<OpaquePayload>(f.payload).data.size();
}

inline std::size_t ipv4_body_len(const Ipv4Packet& p) {
  if (auto* vx = p.vxlan()) return kUdpHeaderLen + kVxlanHeaderLen + frame_len(*vx->inner);
  return std::get<Bytes>(p.body).size();
}

inline void write_mac(Bytes& out, const MacAddress& m) {
  out.insert(out.end(), m.octets().begin(), m.octets().end());
}

inline void write_ip(Bytes& out, Ipv4Address ip) {
  put16(out, static_cast<std::uint16_t>(ip.value() >> 16));
  put16(out, static_cast<std::uint16_t>(ip.value() & 0xffff));
}

inline void write_frame(Bytes& out, const EthernetFrame& f);

inline void write_ipv4(Bytes& out, const Ipv4Packet& p) {
  const std::size_t body = ipv4_body_len(p);
  if (kIpv4HeaderLen + body > 0xffff) throw MalformedFrame("IPv4 packet exceeds 65535 bytes");
  if (p.vxlan() && p.protocol != kIpProtoUdp) throw MalformedFrame("VXLAN body requires IP protocol 17");
  if (auto* raw = std::get_if<Bytes>(&p.body);
      raw && p.protocol == kIpProtoUdp && raw->size() >= kUdpHeaderLen && get16(*raw, 2) == kVxlanPort) {
    throw MalformedFrame("opaque UDP body addressed to the VXLAN port is ambiguous");
  }
  out.push_back(0x45);  // version 4, IHL 5
  out.push_back(0x00);
  put16(out, static_cast<std::uint16_t>(kIpv4HeaderLen + body));
  put16(out, 0);       // identification
  put16(out, 0);       // flags, fragment offset
  out.push_back(64);   // TTL
  out.push_back(p.protocol);
  put16(out, 0);       // checksum placeholder
  write_ip(out, p.src);
  write_ip(out, p.dst);
  if (auto* vx = p.vxlan()) {
    if (vx->vni >= kVniLimit) throw VniOutOfRange("VNI out of range: " + std::to_string(vx->vni));
    if (!vx->inner) throw MalformedFrame("VXLAN envelope without inner frame");
    put16(out, kVxlanSourcePort);
    put16(out, kVxlanPort);
    put16(out, static_cast<std::uint16_t>(body));
    put16(out, 0);     // UDP checksum placeholder
    out.push_back(0x08);  // I flag
    out.insert(out.end(), 3, 0);
    out.push_back(static_cast<std::uint8_t>(vx->vni >> 16));
    out.push_back(static_cast<std::uint8_t>(vx->vni >> 8));
    out.push_back(static_cast<std::uint8_t>(vx->vni));
    out.push_back(0);
    write_frame(out, *vx->inner);
  } else {
    const auto& raw = std::get<Bytes>(p.body);
    out.insert(out.end(), raw.begin(), raw.end());
  }
}

inline void write_frame(Bytes& out, const EthernetFrame& f) {
  write_mac(out, f.dst);
  write_mac(out, f.src);
  if (f.vlan) {
    put16(out, kEtherTypeVlan);
    put16(out, f.vlan->value());
  }
  const std::uint16_t type = f.inner_ethertype();
  if (std::holds_alternative<OpaquePayload>(f.payload) &&
      (type == kEtherTypeIpv4 || type == kEtherTypeArp || type == kEtherTypeVlan)) {
    throw MalformedFrame("opaque payload uses a modeled EtherType");
  }
  put16(out, type);
  if (auto* ip = f.ipv4()) {
    write_ipv4(out, *ip);
  } else if (auto* arp = f.arp()) {
    if (arp->op == ArpOp::Request && !arp->target_mac.is_zero()) {
      throw MalformedFrame("ARP request must carry a zero target MAC");
    }
    put16(out, 1);  // Ethernet
    put16(out, kEtherTypeIpv4);
    out.push_back(6);
    out.push_back(4);
    put16(out, static_cast<std::uint16_t>(arp->op));
    write_mac(out, arp->sender_mac);
    write_ip(out, arp->sender_ip);
    write_mac(out, arp->target_mac);
    write_ip(out, arp->target_ip);
  } else {
    const auto& raw = std::get<OpaquePayload>(f.payload).data;
    out.insert(out.end(), raw.begin(), raw.end());
  }
}

inline MacAddress read_mac(std::span<const std::uint8_t> in, std::size_t at) {
  MacAddress::Octets o{};
  for (std::size_t i = 0; i < 6; ++i) o[i] = in[at + i];
  return MacAddress(o);
}

inline Ipv4Address read_ip(std::span<const std::uint8_t> in, std::size_t at) {
  return Ipv4Address(in[at], in[at + 1], in[at + 2], in[at + 3]);
}

inline EthernetFrame read_frame(std::span<const std::uint8_t> in);

inline Ipv4Packet read_ipv4(std::span<const std::uint8_t> in) {
  if (in.size() < kIpv4HeaderLen) throw TruncatedFrame("truncated IPv4 header");
  if (in[0] != 0x45) throw MalformedFrame("unsupported IPv4 version/IHL");
  const std::size_t total = get16(in, 2);
  if (total < kIpv4HeaderLen || total > in.size()) throw TruncatedFrame("IPv4 total length exceeds frame");
  Ipv4Packet p;
  p.protocol = in[9];
  p.src = read_ip(in, 12);
  p.dst = read_ip(in, 16);
  auto body = in.subspan(kIpv4HeaderLen, total - kIpv4HeaderLen);
  if (p.protocol == kIpProtoUdp && body.size() >= kUdpHeaderLen && get16(body, 2) == kVxlanPort) {
    if (get16(body, 4) != body.size()) throw MalformedFrame("UDP length mismatch");
    if (body.size() < kUdpHeaderLen + kVxlanHeaderLen) throw TruncatedFrame("truncated VXLAN header");
    auto vx = body.subspan(kUdpHeaderLen);
    if ((vx[0] & 0x08) == 0) throw MalformedFrame("VXLAN header without I flag");
    VxlanEnvelope env;
    env.vni = std::uint32_t{vx[4]} << 16 | std::uint32_t{vx[5]} << 8 | vx[6];
    env.inner = std::make_shared<const EthernetFrame>(read_frame(vx.subspan(kVxlanHeaderLen)));
    p.body = std::move(env);
  } else {
    p.body = Bytes(body.begin(), body.end());
  }
  return p;
}

inline EthernetFrame read_frame(std::span<const std::uint8_t> in) {
  if (in.size() < kEthernetHeaderLen) {
    throw TruncatedFrame("frame shorter than 14 bytes (" + std::to_string(in.size()) + ")");
  }
  EthernetFrame f;
  f.dst = read_mac(in, 0);
  f.src = read_mac(in, 6);
  std::size_t at = 12;
  std::uint16_t type = get16(in, at);
  if (type == kEtherTypeVlan) {
    if (in.size() < kEthernetHeaderLen + kVlanTagLen) throw TruncatedFrame("truncated 802.1Q tag");
    const std::uint16_t vid = get16(in, 14) & 0x0fff;
    if (vid > VlanId::kMax) throw MalformedFrame("reserved VLAN id 4095");
    f.vlan = VlanId(vid);
    at += kVlanTagLen;
    type = get16(in, at);
    if (type == kEtherTypeVlan) throw MalformedFrame("stacked VLAN tags are not supported");
  }
  auto payload = in.subspan(at + 2);
  if (type == kEtherTypeIpv4) {
    f.payload = read_ipv4(payload);
  } else if (type == kEtherTypeArp) {
    if (payload.size() < kArpLen) throw TruncatedFrame("truncated ARP message");
    if (get16(payload, 0) != 1 || get16(payload, 2) != kEtherTypeIpv4 || payload[4] != 6 || payload[5] != 4) {
      throw MalformedFrame("unsupported ARP hardware/protocol type");
    }
    const std::uint16_t op = get16(payload, 6);
    if (op != 1 && op != 2) throw MalformedFrame("unknown ARP opcode");
    ArpMessage a;
    a.op = static_cast<ArpOp>(op);
    a.sender_mac = read_mac(payload, 8);
    a.sender_ip = read_ip(payload, 14);
    a.target_mac = read_mac(payload, 18);
    a.target_ip = read_ip(payload, 24);
    if (a.op == ArpOp::Request && !a.target_mac.is_zero()) {
      throw MalformedFrame("ARP request must carry a zero target MAC");
    }
    f.payload = a;
  } else {
    f.payload = OpaquePayload{type, Bytes(payload.begin(), payload.end())};
  }
  return f;
}

}  // namespace detail

/// Exact on-wire length of `f`.
inline std::size_t serialized_size(const EthernetFrame& f) { return detail::frame_len(f); }

inline Bytes serialize(const EthernetFrame& f) {
  Bytes out;
  out.reserve(detail::frame_len(f));
  detail::write_frame(out, f);
  return out;
}

/// Parses one frame. Bytes past an IPv4 total length or an ARP body are
/// treated as padding and ignored.
inline EthernetFrame parse(std::span<const std::uint8_t> bytes) { return detail::read_frame(bytes); }

/// Outer addressing for a VXLAN tunnel hop.
struct UnderlayAddressing {
  MacAddress src_mac;
  MacAddress dst_mac;
  Ipv4Address src_ip;
  Ipv4Address dst_ip;

  bool operator==(const UnderlayAddressing&) const = default;
};

inline EthernetFrame vxlan_encap(const EthernetFrame& inner, std::uint32_t vni, const UnderlayAddressing& outer) {
  if (vni >= kVniLimit) throw VniOutOfRange("VNI out of range: " + std::to_string(vni));
  // Reject inner frames the codec cannot carry before wrapping them.
  (void)serialize(inner);
  EthernetFrame f;
  f.dst = outer.dst_mac;
  f.src = outer.src_mac;
  f.payload = Ipv4Packet{outer.src_ip, outer.dst_ip, kIpProtoUdp,
                         VxlanEnvelope{vni, std::make_shared<const EthernetFrame>(inner)}};
  return f;
}

struct Decapsulated {
  std::uint32_t vni = 0;
  EthernetFrame inner;
};

inline Decapsulated vxlan_decap(const EthernetFrame& frame) {
  const Ipv4Packet* ip = frame.ipv4();
  const VxlanEnvelope* vx = ip ? ip->vxlan() : nullptr;
  if (!vx || !vx->inner) throw NotVxlanFrame("frame does not carry a VXLAN envelope");
  return {vx->vni, *vx->inner};
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

/// Inverse of to_hex. Whitespace is skipped so hand-written dumps can be
/// grouped.
inline Bytes from_hex(std::string_view text) {
  Bytes out;
  int pending = -1;
  for (char c : text) {
    if (c == ' ' || c == '\n' || c == '\t') continue;
    int v = detail::hex_value(c);
    if (v < 0) throw FrameError("invalid hex digit");
    if (pending < 0) {
      pending = v;
    } else {
      out.push_back(static_cast<std::uint8_t>(pending << 4 | v));
      pending = -1;
    }
  }
  if (pending >= 0) throw FrameError("odd number of hex digits");
  return out;
}

/// One line of the hex-dump trace format.
inline std::string hex_dump_line(const EthernetFrame& f) { return to_hex(serialize(f)); }

}  // namespace mts
