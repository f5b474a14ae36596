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

// Spec builders shared by the unit tests and the acceptance binary.

#pragma once

#include <string>
#include <vector>

#include "mts/orchestrator.hpp"

namespace mts::testing {

inline const std::vector<std::string>& tenant_names() {
  static const std::vector<std::string> names{"red", "blue", "green", "yellow", "cyan", "magenta", "white", "black"};
  return names;
}

inline TenantSpec tenant(std::size_t i, std::size_t vms = 1) {
  TenantSpec t;
  t.id = TenantId(i < tenant_names().size() ? tenant_names()[i] : "t" + std::to_string(i));
  t.vm_count = vms;
  t.ip_block = Ipv4Prefix{Ipv4Address(10, static_cast<std::uint8_t>(i + 1), 0, 0), 24};
  return t;
}

inline DeploymentSpec make_spec(Level level, std::size_t tenants, std::size_t vms_each = 1) {
  DeploymentSpec s;
  s.level = level;
  for (std::size_t i = 0; i < tenants; ++i) s.tenants.push_back(tenant(i, vms_each));
  return s;
}

inline DeploymentSpec with_user_space(DeploymentSpec s) {
  s.user_space = true;
  return s;
}

inline DeploymentSpec with_mode(DeploymentSpec s, ResourceMode m) {
  s.mode = m;
  return s;
}

}  // namespace mts::testing
