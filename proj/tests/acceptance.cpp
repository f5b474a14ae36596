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

// Runs every acceptance criterion and prints one PASS/FAIL line per
// criterion. Exit status is nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mts/mts.hpp"
#include "support.hpp"

namespace {

using namespace mts;
using testing::make_spec;
using testing::with_mode;
using testing::with_user_space;

// Collects failed checks for one criterion.
struct Check {
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  template <class A, class B>
  void equal(const A& got, const B& want, const std::string& what) {
    if (!(got == want)) failures.push_back(what + " (got " + std::to_string(got) + ", want " + std::to_string(want) + ")");
  }
};

double mean_traversals(const RunResult& r) {
  double s = 0;
  for (const auto& p : r.packets) s += static_cast<double>(p.nic_traversals);
  return s / static_cast<double>(r.packets.size());
}

double mean_hops(const RunResult& r) {
  double s = 0;
  for (const auto& p : r.packets) s += static_cast<double>(p.hops);
  return s / static_cast<double>(r.packets.size());
}

void ac1(Check& c) {
  c.equal(count_vfs(make_spec(Level::Level1, 1)), 3u, "L1 1 tenant");
  c.equal(count_vfs(make_spec(Level::Level1, 4)), 9u, "L1 4 tenants");
  c.equal(count_vfs(make_spec(Level::Level2, 2)), 6u, "L2 2 tenants");
  c.equal(count_vfs(make_spec(Level::Level2, 4)), 12u, "L2 4 tenants");
  bool threw = false;
  try {
    count_vfs(make_spec(Level::Level2, 40));
  } catch (const VfExhaustion&) {
    threw = true;
  }
  c.expect(threw, "80 VFs on one 64-VF PF must raise VfExhaustion");
}

void ac2(Check& c) {
  for (auto level : {Level::Level1, Level::Level2}) {
    for (std::size_t t = 1; t <= 4; ++t) {
      for (std::size_t v = 1; v <= 2; ++v) {
        const auto r = golden_chain_check(plan_deployment(make_spec(level, t, v)));
        c.expect(r.pass, std::string(to_string(level)) + " " + std::to_string(t) + "x" + std::to_string(v) +
                             ": step " + std::to_string(r.failed_step.value_or(0)) + " " + r.observed);
      }
    }
  }
}

void ac3(Check& c) {
  const auto plan = plan_deployment(make_spec(Level::Level2, 4));
  FuzzConfig cfg;
  cfg.frames_per_vf = 10000;
  cfg.seed = 7;
  const auto clean = verify_isolation(plan, cfg);
  c.equal(clean.injected, 40000u, "frames injected");
  c.equal(clean.violations.size(), 0u, "violations on the hardened plan");
  const auto fault = verify_isolation(without_spoof_check(plan), cfg);
  c.expect(!fault.violations.empty(), "spoof checks off must be flagged");
}

void ac4(Check& c) {
  const auto names = [](const CompromiseReport& r) {
    std::set<std::string> s;
    for (const auto& t : r.reachable_tenants) s.insert(t.value);
    return s;
  };
  const std::set<std::string> all{"red", "blue", "green", "yellow"};
  const auto b = compromise(plan_deployment(make_spec(Level::Baseline, 4)), ComponentId::vswitch(0));
  c.expect(b.host_reachable && names(b) == all, "Baseline vswitch: host and all tenants");
  const auto l1 = compromise(plan_deployment(make_spec(Level::Level1, 4)), ComponentId::vswitch(0));
  c.expect(!l1.host_reachable && names(l1) == all, "Level-1 vswitch: all tenants, not host");
  const auto l2plan = plan_deployment(make_spec(Level::Level2, 4));
  for (std::uint32_t i = 0; i < 4; ++i) {
    const auto r = compromise(l2plan, ComponentId::vswitch(i));
    c.expect(!r.host_reachable && names(r) == std::set<std::string>{l2plan.spec.tenants[i].id.value},
             "Level-2 vswitch " + std::to_string(i) + ": its own tenant only");
  }
}

void ac5(Check& c) {
  const auto n = [](const DeploymentSpec& s) { return security_mechanisms(plan_deployment(s), 0).size(); };
  c.equal(n(make_spec(Level::Baseline, 2)), 0u, "Baseline kernel");
  c.equal(n(with_user_space(make_spec(Level::Baseline, 2))), 1u, "Baseline user space");
  c.equal(n(make_spec(Level::Level1, 2)), 1u, "Level-1 kernel");
  c.equal(n(make_spec(Level::Level2, 2)), 1u, "Level-2 kernel");
  c.equal(n(with_user_space(make_spec(Level::Level1, 2))), 2u, "Level-1 user space");
  c.equal(n(with_user_space(make_spec(Level::Level2, 2))), 2u, "Level-2 user space");
}

void ac6(Check& c) {
  const auto l1 = account_resources(make_spec(Level::Level1, 4));
  const auto base = account_resources(make_spec(Level::Baseline, 4));
  c.equal(l1.total_cores() - base.total_cores(), 1u, "isolated Level-1 minus Baseline cores");
  for (std::size_t k : {1u, 2u, 4u}) {
    const auto shared = account_resources(with_mode(make_spec(Level::Level2, k), ResourceMode::Shared));
    c.equal(shared.vswitch_cores, 1u, "shared vswitch cores, " + std::to_string(k) + " compartments");
    c.equal(shared.vswitch_ram_gb(), 4u * k, "shared vswitch RAM, " + std::to_string(k) + " compartments");
  }
  // user_space: every compartment gets a poll core of its own; Baseline is
  // one compartment on the host.
  for (std::size_t k : {1u, 2u, 4u}) {
    const auto user = with_user_space(with_mode(make_spec(Level::Level2, k), ResourceMode::Shared));
    c.equal(account_resources(user).vswitch_cores, k, "user-space vswitch cores, " + std::to_string(k));
  }
  c.equal(account_resources(with_user_space(make_spec(Level::Baseline, 4))).total_cores() - base.total_cores(), 1u,
          "Baseline user space minus kernel cores");
}

void ac7(Check& c) {
  for (std::size_t n : {1u, 2u, 4u}) {
    const auto m = plan_deployment(make_spec(Level::Level2, n, 2));
    const auto b = plan_deployment(make_spec(Level::Baseline, n, 2));
    const auto mp = run_scenario(m, make_scenario(m, ScenarioKind::P2v, 20, 1));
    const auto bp = run_scenario(b, make_scenario(b, ScenarioKind::P2v, 20, 1));
    c.expect(mean_traversals(mp) - mean_traversals(bp) == 2.0, "P2v delta != 2 at " + std::to_string(n));
    const auto mt = run_scenario(m, make_scenario(m, ScenarioKind::T2t, 20, 1));
    const auto bt = run_scenario(b, make_scenario(b, ScenarioKind::T2t, 20, 1));
    c.expect(mean_traversals(mt) - mean_traversals(bt) == 4.0, "T2t delta != 4 at " + std::to_string(n));
    c.expect(mt.metrics.delivered() == 20 && bt.metrics.delivered() == 20, "T2t packets lost");
  }
  for (auto level : {Level::Baseline, Level::Level1, Level::Level2}) {
    const auto plan = plan_deployment(make_spec(level, 2, 2));
    const auto p2p = run_scenario(plan, make_scenario(plan, ScenarioKind::P2p, 10, 2));
    const auto p2v = run_scenario(plan, make_scenario(plan, ScenarioKind::P2v, 10, 2));
    const auto v2v = run_scenario(plan, make_scenario(plan, ScenarioKind::V2v, 10, 2));
    c.expect(mean_hops(p2p) < mean_hops(p2v) && mean_hops(p2v) < mean_hops(v2v),
             std::string("ordering P2p < P2v < V2v in ") + std::string(to_string(level)));
  }
}

void ac8(Check& c) {
  const auto plan = plan_deployment(make_spec(Level::Level2, 3, 2));
  for (auto kind : {ScenarioKind::P2p, ScenarioKind::P2v, ScenarioKind::V2v, ScenarioKind::T2t}) {
    const auto s = make_scenario(plan, kind, 25, 11);
    const auto a = run_scenario(plan, s);
    const auto b = run_scenario(plan, s);
    std::string ta, tb;
    for (const auto& e : a.trace) ta += to_json(e).dump() + "\n";
    for (const auto& e : b.trace) tb += to_json(e).dump() + "\n";
    c.expect(ta == tb && to_json(a.metrics).dump() == to_json(b.metrics).dump() &&
                 metrics_csv(a.metrics) == metrics_csv(b.metrics),
             std::string("identical runs differ for ") + std::string(to_string(kind)));
  }
  std::mt19937_64 rng(8);
  for (int run = 0; run < 100; ++run) {
    const auto level = static_cast<Level>(rng() % 3);
    const auto kind = static_cast<ScenarioKind>(rng() % 4);
    const std::size_t tenants = (kind == ScenarioKind::V2v ? 2 : 1) + rng() % 3;
    const auto p = plan_deployment(make_spec(level, tenants, 2));
    auto s = make_scenario(p, kind, 1 + rng() % 20, rng());
    if (rng() % 2) s.flows.push_back({0, Ipv4Address(10, 250, 0, 1), 64, 3});
    if (s.kind == ScenarioKind::T2t) s.flows.back().vm = s.flows.front().vm;
    const auto r = run_scenario(p, s);
    for (const auto& f : r.metrics.flows) {
      c.expect(f.injected == f.delivered + f.dropped, "run " + std::to_string(run) + " flow " +
                                                          std::to_string(f.flow_id) + " not conserved");
    }
  }
}

// Independent byte-level oracle for the frame codec.
void ac9(Check& c) {
  std::mt19937_64 rng(9);
  const auto mac = [&] {
    MacAddress::Octets o{};
    for (auto& b : o) b = static_cast<std::uint8_t>(rng());
    return MacAddress(o);
  };
  for (int i = 0; i < 1000; ++i) {
    EthernetFrame f;
    f.dst = mac();
    f.src = mac();
    if (rng() % 2) f.vlan = VlanId(static_cast<std::uint16_t>(rng() % 4095));
    switch (rng() % 3) {
      case 0: {
        Bytes body(rng() % 64);
        for (auto& b : body) b = static_cast<std::uint8_t>(rng());
        f.payload = Ipv4Packet{Ipv4Address(static_cast<std::uint32_t>(rng())),
                               Ipv4Address(static_cast<std::uint32_t>(rng())), kDataProtocol, body};
        break;
      }
      case 1:
        f.payload = ArpMessage::request(f.src, Ipv4Address(static_cast<std::uint32_t>(rng())),
                                        Ipv4Address(static_cast<std::uint32_t>(rng())));
        break;
      default: {
        Bytes body(rng() % 64);
        for (auto& b : body) b = static_cast<std::uint8_t>(rng());
        f.payload = OpaquePayload{0x88b5, body};
      }
    }
    const Bytes wire = serialize(f);
    c.expect(parse(wire) == f, "round trip " + std::to_string(i));
    c.expect(serialize(parse(wire)) == wire, "re-serialize " + std::to_string(i));
    const UnderlayAddressing u{mac(), mac(), Ipv4Address(192, 0, 2, 1), Ipv4Address(192, 0, 2, 2)};
    const auto vni = static_cast<std::uint32_t>(rng() % (1u << 24));
    const Bytes outer = serialize(vxlan_encap(f, vni, u));
    c.expect(outer.size() == wire.size() + 50, "encap length " + std::to_string(i));
    c.expect(Bytes(outer.end() - static_cast<std::ptrdiff_t>(wire.size()), outer.end()) == wire,
             "inner bytes " + std::to_string(i));
    c.expect(((outer[46] << 16) | (outer[47] << 8) | outer[48]) == static_cast<int>(vni), "vni bytes");
  }
  // Hand-assembled ARP request: 02:00:00:00:00:01 asks who has 10.0.0.2.
  EthernetFrame arp;
  arp.dst = MacAddress::broadcast();
  arp.src = MacAddress::parse("02:00:00:00:00:01");
  arp.payload = ArpMessage::request(arp.src, Ipv4Address(10, 0, 0, 1), Ipv4Address(10, 0, 0, 2));
  c.expect(to_hex(serialize(arp)) ==
               "ffffffffffff020000000001080600010800060400010200000000010a000001" "0000000000000a000002",
           "ARP hex");
}

struct Criterion {
  const char* id;
  const char* title;
  double limit_s;  // 0: untimed
  std::function<void(Check&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> all{
      {"AC1", "VF-count formulas and exhaustion", 1.0, ac1},
      {"AC2", "golden forwarding chains", 1.0, ac2},
      {"AC3", "isolation fuzz", 30.0, ac3},
      {"AC4", "compromise table", 0.0, ac4},
      {"AC5", "boundary counting", 0.0, ac5},
      {"AC6", "resource accounting", 0.0, ac6},
      {"AC7", "hop-count deltas and ordering", 5.0, ac7},
      {"AC8", "determinism and conservation", 0.0, ac8},
      {"AC9", "wire-format oracle", 1.0, ac9},
  };
  int failed = 0;
  for (const auto& cr : all) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.limit_s > 0 && secs > cr.limit_s) {
      c.failures.push_back("took " + std::to_string(secs) + " s, limit " + std::to_string(cr.limit_s) + " s");
    }
    const bool ok = c.failures.empty();
    failed += !ok;
    std::printf("%s %s %s (%.3f s)%s%s\n", cr.id, ok ? "PASS" : "FAIL", cr.title, secs, ok ? "" : ": ",
                ok ? "" : c.failures.front().c_str());
    for (std::size_t i = 1; i < c.failures.size() && i < 5; ++i) std::printf("    %s\n", c.failures[i].c_str());
  }
  return failed == 0 ? 0 : 1;
}
