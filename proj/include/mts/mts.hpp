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

// Umbrella header.

#pragma once

#include "mts/common.hpp"
#include "mts/frames.hpp"
#include "mts/trace.hpp"
#include "mts/nic.hpp"
#include "mts/dataplane.hpp"
#include "mts/endpoints.hpp"
#include "mts/orchestrator.hpp"
#include "mts/secmodel.hpp"
#include "mts/harness.hpp"
#include "mts/io.hpp"
