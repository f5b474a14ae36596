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

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mts {

/// Root of every error thrown by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// frames
class FrameError : public Error {
 public:
  using Error::Error;
};
class TruncatedFrame : public FrameError {
 public:
  using FrameError::FrameError;
};
class MalformedFrame : public FrameError {
 public:
  using FrameError::FrameError;
};
class NotVxlanFrame : public FrameError {
 public:
  using FrameError::FrameError;
};
class VniOutOfRange : public FrameError {
 public:
  using FrameError::FrameError;
};

// nic
class PrivilegeError : public Error {
 public:
  using Error::Error;
};
class DuplicateMacError : public Error {
 public:
  using Error::Error;
};
class VfExhaustion : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

// dataplane
class IncompleteAddressing : public Error {
 public:
  using Error::Error;
};
class DuplicateVni : public Error {
 public:
  using Error::Error;
};

// endpoints
class UnresolvableNextHop : public Error {
 public:
  using Error::Error;
};

// orchestrator
class SpecError : public Error {
 public:
  using Error::Error;
};
class DuplicateTenantId : public SpecError {
 public:
  using SpecError::SpecError;
};

// secmodel
class UnknownComponent : public Error {
 public:
  using Error::Error;
};

// harness
class NonQuiescent : public Error {
 public:
  using Error::Error;
};
class ScenarioError : public Error {
 public:
  using Error::Error;
};

/// Why a frame stopped. The string forms are stable and appear verbatim in
/// reports.
enum class DropReason : std::uint8_t {
  SpoofBlocked,
  FilterDrop,
  UnknownUnicastIsolated,
  NoRoute,
  TaggedOnAccessPort,
  TableMiss,
  RuleDrop,
  Absorbed,
};

constexpr std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::SpoofBlocked: return "SpoofBlocked";
    case DropReason::FilterDrop: return "FilterDrop";
    case DropReason::UnknownUnicastIsolated: return "UnknownUnicastIsolated";
    case DropReason::NoRoute: return "NoRoute";
    case DropReason::TaggedOnAccessPort: return "TaggedOnAccessPort";
    case DropReason::TableMiss: return "TableMiss";
    case DropReason::RuleDrop: return "RuleDrop";
    case DropReason::Absorbed: return "Absorbed";
  }
  return "?";
}

/// Tenant identifier as declared in the deployment spec.
struct TenantId {
  std::string value;

  TenantId() = default;
  explicit TenantId(std::string v) : value(std::move(v)) {}

  auto operator<=>(const TenantId&) const = default;
  bool operator==(const TenantId&) const = default;
};

inline const std::string& to_string(const TenantId& t) { return t.value; }

/// Which party owns a VF or issues a configuration request.
enum class ComponentKind : std::uint8_t { Host, Vswitch, Tenant };

struct ComponentId {
  ComponentKind kind = ComponentKind::Host;
  std::uint32_t index = 0;

  static constexpr ComponentId host() { return {ComponentKind::Host, 0}; }
  static constexpr ComponentId vswitch(std::uint32_t i) { return {ComponentKind::Vswitch, i}; }
  static constexpr ComponentId tenant(std::uint32_t i) { return {ComponentKind::Tenant, i}; }

  auto operator<=>(const ComponentId&) const = default;
  bool operator==(const ComponentId&) const = default;
};

inline std::string to_string(const ComponentId& c) {
  switch (c.kind) {
    case ComponentKind::Host: return "host";
    case ComponentKind::Vswitch: return "vswitch:" + std::to_string(c.index);
    case ComponentKind::Tenant: return "vm:" + std::to_string(c.index);
  }
  return "?";
}

/// The caller identity for NIC configuration requests.
using PrivilegeContext = ComponentId;

}  // namespace mts
