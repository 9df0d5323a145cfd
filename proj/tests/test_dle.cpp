#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "amoebot/dle.hpp"
#include "amoebot/shape_gen.hpp"
#include "amoebot/sim.hpp"
#include "amoebot/verify.hpp"

using namespace amoebot;

namespace {

Shape hex_ring() {
  std::vector<Point> pts;
  for (int d = 0; d < 6; ++d) pts.push_back(neighbor({0, 0}, d));
  return Shape(pts);
}

Shape filled_hex() {
  std::vector<Point> pts{{0, 0}};
  for (int d = 0; d < 6; ++d) pts.push_back(neighbor({0, 0}, d));
  return Shape(pts);
}

struct RunOut {
  Sim<DleAlgo> sim;
  RunReport report;
};

Sim<DleAlgo> make_sim(const Shape& s, uint64_t load_seed) {
  auto cfg = load_config<DleMemory>(s, load_seed);
  init_dle_from_oracle(cfg, s);
  return Sim<DleAlgo>(std::move(cfg));
}

}  // namespace

TEST_CASE("init: interior particle has all ports eligible") {
  Shape s = filled_hex();
  auto cfg = load_config<DleMemory>(s, 1);
  init_dle_from_oracle(cfg, s);
  int center = cfg.id_at({0, 0});
  REQUIRE(center >= 0);
  for (int i = 0; i < 6; ++i) {
    CHECK(cfg.particles[center].mem.eligible[i]);
    CHECK_FALSE(cfg.particles[center].mem.outer[i]);
  }
}

TEST_CASE("init: outer ports ineligible, hole ports eligible") {
  Shape s = hex_ring();
  auto cfg = load_config<DleMemory>(s, 5);
  init_dle_from_oracle(cfg, s);
  for (const auto& p : cfg.particles) {
    int eligible_empty = 0, eligible_total = 0;
    for (int i = 0; i < 6; ++i) {
      Point u = neighbor(p.head, p.to_global(i));
      bool occupied = s.contains(u);
      bool is_hole = u == Point{0, 0};
      CHECK(p.mem.outer[i] == (!occupied && !is_hole));
      CHECK(p.mem.eligible[i] == (occupied || is_hole));
      if (p.mem.eligible[i]) ++eligible_total;
      if (p.mem.eligible[i] && !occupied) ++eligible_empty;
    }
    CHECK(eligible_total == 3);  // two ring neighbors + the hole point
    CHECK(eligible_empty == 1);  // the hole point
  }
}

TEST_CASE("single particle elects itself in two rounds") {
  Shape s({{0, 0}});
  auto sim = make_sim(s, 9);
  auto rep = sim.run(SchedulerSpec::round_robin(), 10);
  CHECK(rep.terminated);
  CHECK(rep.rounds <= 2);
  CHECK(sim.config().particles[0].mem.status == DleMemory::Status::Leader);
}

TEST_CASE("two-point shape: first activated follows, second leads") {
  Shape s({{0, 0}, {1, 0}});
  auto sim = make_sim(s, 4);
  auto rep = sim.run(SchedulerSpec::round_robin(), 10);
  CHECK(rep.terminated);
  CHECK(rep.rounds <= 4);
  CHECK(sim.config().particles[0].mem.status == DleMemory::Status::Follower);
  CHECK(sim.config().particles[1].mem.status == DleMemory::Status::Leader);
}

TEST_CASE("hexagonal ring: some particle erodes into the hole point") {
  Shape s = hex_ring();
  auto sim = make_sim(s, 77);

  struct MoveWatcher : Observer<DleAlgo> {
    bool hole_entered = false;
    void on_activation(const ActivationRecord& rec, const Sim<DleAlgo>&) override {
      if (rec.action_kind == "expand" && rec.moved_to && *rec.moved_to == Point{0, 0})
        hole_entered = true;
    }
  } watcher;
  sim.add_observer(&watcher);

  DleInvariantChecker checker(s);
  sim.add_observer(&checker);

  auto rep = sim.run(SchedulerSpec::round_robin(), 50);
  CHECK(rep.terminated);
  CHECK(watcher.hole_entered);
  CHECK(checker.report().ok());
  VerifyReport vr;
  check_leader_unique(sim.config(), vr);
  CHECK(vr.ok());
}

TEST_CASE("corpus: unique leader, invariants, breadcrumbs, monotone erosion") {
  for (uint64_t seed = 1; seed <= 16; ++seed) {
    int n = 2 + static_cast<int>((seed * 13) % 45);
    Shape s = gen_shape(n, seed % 2 ? 1 + static_cast<int>(seed % 2) : 0, seed + 100);
    CAPTURE(seed);
    CAPTURE(n);

    auto sim = make_sim(s, seed);
    sim.set_memory_budget(512);
    DleInvariantChecker checker(s);
    sim.add_observer(&checker);

    auto sched = seed % 3 == 0 ? SchedulerSpec::round_robin() : SchedulerSpec::random(seed * 7);
    auto rep = sim.run(sched, 10000);
    REQUIRE(rep.terminated);
    REQUIRE(checker.report().ok());
    CHECK(checker.eligible_set().size() == 1);

    VerifyReport vr;
    check_leader_unique(sim.config(), vr);
    check_breadcrumbs(sim.config(), s, vr);
    if (!vr.ok()) {
      CAPTURE(vr.to_json().dump());
      CHECK(vr.ok());
    }
  }
}

TEST_CASE("leader point depends only on chirality, not port offsets") {
  Shape s = gen_shape(30, 1, 321);
  auto run_with = [&](uint64_t load_seed) {
    auto sim = make_sim(s, load_seed);
    auto rep = sim.run(SchedulerSpec::round_robin(), 10000);
    REQUIRE(rep.terminated);
    auto lp = leader_point(sim.config());
    REQUIRE(lp.has_value());
    return *lp;
  };
  CHECK(run_with(1) == run_with(999));
}

TEST_CASE("trace verify: clean run, fault injection, truncation") {
  Shape s = gen_shape(14, 1, 55);
  std::string path = "/tmp/dle_trace_test.jsonl";
  {
    auto cfg = load_config<DleMemory>(s, 3);
    init_dle_from_oracle(cfg, s);

    // Header mirrors what the pipeline writes.
    Json parts = Json::array();
    for (size_t i = 0; i < cfg.particles.size(); ++i) {
      const auto& p = cfg.particles[i];
      parts.push_back(Json{{"id", i},
                           {"head", point_json(p.head)},
                           {"tail", point_json(p.tail)},
                           {"offset", p.port_offset},
                           {"mem", DleAlgo::mem_json(p.mem)}});
    }
    JsonlFile file(path);
    file.write(Json{{"header", true}, {"algo", "dle"}, {"particles", parts}});
    Sim<DleAlgo> sim(std::move(cfg));
    JsonlTraceObserver<DleAlgo> tracer(&file, true);
    sim.add_observer(&tracer);
    auto rep = sim.run(SchedulerSpec::random(17), 10000);
    REQUIRE(rep.terminated);
    file.flush();
  }

  auto clean = verify_trace_file(path, s);
  CAPTURE(clean.to_json().dump());
  CHECK(clean.ok());

  // Flip one eligibility bit mid-trace: the consistency clause must trip.
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  in.close();
  size_t target = 0;
  for (size_t i = lines.size() / 2; i < lines.size(); ++i) {
    Json rec = Json::parse(lines[i], nullptr, false);
    if (rec.is_discarded() || !rec.contains("mem")) continue;
    bool flipped = false;
    for (auto it = rec["mem"].begin(); it != rec["mem"].end() && !flipped; ++it) {
      if (it.value().contains("eligible")) {
        int old = it.value()["eligible"][2];
        it.value()["eligible"][2] = old ? 0 : 1;
        flipped = true;
      }
    }
    if (flipped) {
      lines[i] = rec.dump();
      target = i;
      break;
    }
  }
  REQUIRE(target > 0);
  std::string bad_path = "/tmp/dle_trace_bad.jsonl";
  {
    std::ofstream out(bad_path);
    for (const auto& l : lines) out << l << "\n";
  }
  auto bad = verify_trace_file(bad_path, s);
  CHECK_FALSE(bad.ok());
  bool clause4 = false;
  for (const auto& issue : bad.issues) clause4 = clause4 || issue.check == "eligible-consistent";
  CHECK(clause4);

  // Truncated trace: everything visited still checks out.
  std::string trunc_path = "/tmp/dle_trace_trunc.jsonl";
  {
    std::ofstream out(trunc_path);
    for (size_t i = 0; i < lines.size() / 2; ++i) {
      Json rec = Json::parse(lines[i], nullptr, false);
      out << lines[i] << "\n";
    }
  }
  auto part = verify_trace_file(trunc_path, s);
  CHECK(part.ok());
  CHECK(part.records_checked < clean.records_checked);
}

TEST_CASE("rounds stay linear in the area diameter on small shapes") {
  double worst = 0;
  for (uint64_t seed = 200; seed <= 214; ++seed) {
    Shape s = gen_shape(2 + static_cast<int>(seed % 40), seed % 2, seed);
    auto m = metrics(s);
    auto sim = make_sim(s, seed);
    auto rep = sim.run(SchedulerSpec::round_robin(), 10000);
    REQUIRE(rep.terminated);
    worst = std::max(worst, static_cast<double>(rep.rounds) / std::max(1, m.diameter_area));
  }
  CHECK(worst <= 12.0);
}
