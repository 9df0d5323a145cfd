#include "amoebot/verify.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace amoebot {

Json VerifyReport::to_json() const {
  Json arr = Json::array();
  for (const auto& issue : issues)
    arr.push_back(Json{{"check", issue.check},
                       {"activation_index", issue.activation_index},
                       {"detail", issue.detail}});
  return Json{{"ok", ok()}, {"records_checked", records_checked}, {"issues", arr}};
}

namespace detail {
void replay_verify_obd(const Json& header, std::ifstream& in, const Shape& shape,
                       VerifyReport& report);
void replay_verify_collect(const Json& header, std::ifstream& in, const Shape& shape,
                           VerifyReport& report);
}  // namespace detail

bool simply_connected(const PointSet& pts) {
  if (pts.empty()) return false;
  if (!is_connected(pts)) return false;
  // Euler characteristic of the induced triangle complex. Each edge is
  // counted from its endpoint with the direction in {E, SE, SW}; each unit
  // triangle once at its western corner.
  int64_t v = static_cast<int64_t>(pts.size());
  int64_t e = 0, t = 0;
  for (const Point& p : pts) {
    Point pe = neighbor(p, 3), pse = neighbor(p, 4), psw = neighbor(p, 5);
    bool he = pts.count(pe), hse = pts.count(pse), hsw = pts.count(psw);
    e += (he ? 1 : 0) + (hse ? 1 : 0) + (hsw ? 1 : 0);
    if (he && hse) ++t;    // p, p+E, p+SE
    if (hse && hsw) ++t;   // p, p+SE, p+SW
  }
  return v - e + t == 1;
}

// ---------------------------------------------------------------------------
// Shared clause logic over a minimal snapshot

namespace {

struct DleSnapshotParticle {
  Point head, tail;
  bool expanded = false;
  int offset = 0;
  int status = 0;
  std::array<bool, 6> eligible{};
};

struct DleSnapshot {
  std::vector<DleSnapshotParticle> particles;
  const std::unordered_map<Point, int, PointHash>* occ = nullptr;
};

void dle_check_clauses(const DleSnapshot& snap, const PointSet& se, int64_t idx,
                       VerifyReport& report) {
  auto fail = [&](const char* clause, std::string detail) {
    report.issues.push_back(VerifyIssue{clause, idx, std::move(detail)});
  };

  // (2) eligible set simply-connected and non-empty.
  if (se.empty()) {
    fail("eligible-set-simply-connected", "eligible set is empty");
    return;
  }
  if (!simply_connected(se))
    fail("eligible-set-simply-connected", "eligible set disconnected or has a hole");

  // (1) expanded particles: head eligible, tail not.
  for (size_t i = 0; i < snap.particles.size(); ++i) {
    const auto& p = snap.particles[i];
    if (!p.expanded) continue;
    if (!se.count(p.head))
      fail("expanded-head-eligible", "particle " + std::to_string(i) + " head not eligible");
    if (se.count(p.tail))
      fail("expanded-tail-ineligible", "particle " + std::to_string(i) + " tail eligible");
  }

  // (3) boundary points of the eligible set are occupied.
  for (const Point& p : se) {
    bool boundary = false;
    for (int d = 0; d < 6; ++d)
      if (!se.count(neighbor(p, d))) {
        boundary = true;
        break;
      }
    if (boundary && !snap.occ->count(p)) {
      fail("eligible-boundary-occupied",
           "boundary point (" + std::to_string(p.q) + "," + std::to_string(p.r) + ") empty");
      break;
    }
  }

  // (4) eligibility arrays consistent with the tracked set.
  for (size_t i = 0; i < snap.particles.size(); ++i) {
    const auto& p = snap.particles[i];
    for (int port = 0; port < 6; ++port) {
      Point u = neighbor(p.head, (port + p.offset) % 6);
      if (p.eligible[port] != (se.count(u) != 0)) {
        fail("eligible-consistent",
             "particle " + std::to_string(i) + " port " + std::to_string(port));
      }
    }
  }
}

PointSet initial_eligible_set(const Shape& shape) {
  BoundaryAnalysis ba = analyze(shape);
  return PointSet(ba.area.begin(), ba.area.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// Live checker

DleInvariantChecker::DleInvariantChecker(const Shape& initial_shape)
    : se_(initial_eligible_set(initial_shape)) {}

void DleInvariantChecker::on_activation(const ActivationRecord& rec, const Sim<DleAlgo>& sim) {
  if (!report_.issues.empty()) return;  // report the first failure crisply
  ++report_.records_checked;
  for (const auto& ev : rec.events) {
    if (ev.value("ev", "") == "erode") {
      Point v = rec.moved_from ? *rec.moved_from : sim.config().particles[rec.particle_id].head;
      if (!se_.erase(v))
        report_.issues.push_back(
            VerifyIssue{"erode-eligible", rec.activation_index, "eroded point was not eligible"});
    }
  }
  check_all(rec.activation_index, sim);
}

void DleInvariantChecker::check_all(int64_t idx, const Sim<DleAlgo>& sim) {
  DleSnapshot snap;
  snap.occ = &sim.config().occupancy;
  snap.particles.reserve(sim.config().particles.size());
  for (const auto& p : sim.config().particles) {
    DleSnapshotParticle sp;
    sp.head = p.head;
    sp.tail = p.tail;
    sp.expanded = p.expanded();
    sp.offset = p.port_offset;
    sp.status = static_cast<int>(p.mem.status);
    sp.eligible = p.mem.eligible;
    snap.particles.push_back(sp);
  }
  dle_check_clauses(snap, se_, idx, report_);
}

void check_breadcrumbs(const Config<DleMemory>& final_cfg, const Shape& initial_shape,
                       VerifyReport& report) {
  auto lp = leader_point(final_cfg);
  if (!lp) {
    report.issues.push_back(VerifyIssue{"breadcrumbs", -1, "no leader"});
    return;
  }
  int ecc = 0;
  for (const Point& p : initial_shape.points()) ecc = std::max(ecc, grid_distance(*lp, p));
  std::vector<bool> have(static_cast<size_t>(ecc) + 1, false);
  for (const auto& p : final_cfg.particles) {
    if (p.expanded()) {
      report.issues.push_back(VerifyIssue{"breadcrumbs", -1, "expanded particle at termination"});
      return;
    }
    int d = grid_distance(*lp, p.head);
    if (d > ecc) {
      report.issues.push_back(
          VerifyIssue{"breadcrumbs", -1, "particle beyond the leader's initial eccentricity"});
      return;
    }
    have[static_cast<size_t>(d)] = true;
  }
  for (int i = 0; i <= ecc; ++i) {
    if (!have[static_cast<size_t>(i)]) {
      report.issues.push_back(
          VerifyIssue{"breadcrumbs", -1, "no contracted particle at distance " + std::to_string(i)});
      return;
    }
  }
}

void check_leader_unique(const Config<DleMemory>& final_cfg, VerifyReport& report) {
  int leaders = 0, followers = 0, undecided = 0, nonfinal = 0;
  for (const auto& p : final_cfg.particles) {
    switch (p.mem.status) {
      case DleMemory::Status::Leader: ++leaders; break;
      case DleMemory::Status::Follower: ++followers; break;
      default: ++undecided; break;
    }
    if (!p.mem.terminated) ++nonfinal;
  }
  if (leaders != 1 || undecided != 0)
    report.issues.push_back(VerifyIssue{
        "leader-unique", -1,
        "leaders=" + std::to_string(leaders) + " undecided=" + std::to_string(undecided)});
  if (nonfinal != 0)
    report.issues.push_back(VerifyIssue{"leader-unique", -1, "non-terminated particles remain"});
}

std::optional<Point> leader_point(const Config<DleMemory>& final_cfg) {
  for (const auto& p : final_cfg.particles)
    if (p.mem.status == DleMemory::Status::Leader) return p.head;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Trace replay

namespace {

struct ReplayParticle {
  Point head, tail;
  int offset = 0;
  Json mem;
  bool expanded() const { return !(head == tail); }
};

struct ReplayWorld {
  std::vector<ReplayParticle> particles;
  std::unordered_map<Point, int, PointHash> occ;

  void reindex() {
    occ.clear();
    for (size_t i = 0; i < particles.size(); ++i) {
      occ[particles[i].head] = static_cast<int>(i);
      occ[particles[i].tail] = static_cast<int>(i);
    }
  }

  void apply_motion(const Json& rec) {
    const std::string kind = rec.at("action_kind");
    int id = rec.at("particle_id");
    auto& p = particles[static_cast<size_t>(id)];
    auto get_pt = [&](const char* key) { return point_from_json(rec.at(key)); };
    if (kind == "expand") {
      p.head = get_pt("moved_to");
      occ[p.head] = id;
    } else if (kind == "contract_head" || kind == "contract_tail") {
      Point keep = get_pt("moved_to");
      Point vac = get_pt("moved_from");
      occ.erase(vac);
      p.head = p.tail = keep;
    } else if (kind == "handover_expand") {
      int pid = rec.at("partner_id");
      auto& q = particles[static_cast<size_t>(pid)];
      q.head = q.tail = point_from_json(rec.at("partner_to"));
      p.head = get_pt("moved_to");
      occ[p.head] = id;
    } else if (kind == "handover_contract_head" || kind == "handover_contract_tail") {
      int pid = rec.at("partner_id");
      auto& q = particles[static_cast<size_t>(pid)];
      p.head = p.tail = get_pt("moved_to");
      q.head = point_from_json(rec.at("partner_to"));
      occ[q.head] = pid;
    }
  }

  void apply_memories(const Json& rec) {
    if (!rec.contains("mem")) return;
    for (auto it = rec.at("mem").begin(); it != rec.at("mem").end(); ++it) {
      size_t id = static_cast<size_t>(std::stoul(it.key()));
      if (id >= particles.size()) throw std::invalid_argument("trace: bad particle id");
      particles[id].mem = it.value();
    }
  }
};

std::array<bool, 6> bool6(const Json& arr) {
  std::array<bool, 6> out{};
  for (int i = 0; i < 6; ++i) out[i] = arr.at(i).get<int>() != 0;
  return out;
}

void replay_verify_dle(const Json& header, std::ifstream& in, const Shape& shape,
                       VerifyReport& report) {
  ReplayWorld world;
  for (const auto& jp : header.at("particles")) {
    ReplayParticle p;
    p.head = point_from_json(jp.at("head"));
    p.tail = point_from_json(jp.at("tail"));
    p.offset = jp.at("offset");
    p.mem = jp.at("mem");
    world.particles.push_back(p);
  }
  world.reindex();

  PointSet se = initial_eligible_set(shape);
  auto snapshot = [&]() {
    DleSnapshot snap;
    snap.occ = &world.occ;
    for (const auto& p : world.particles) {
      DleSnapshotParticle sp;
      sp.head = p.head;
      sp.tail = p.tail;
      sp.expanded = p.expanded();
      sp.offset = p.offset;
      sp.status = p.mem.at("status").get<int>();
      sp.eligible = bool6(p.mem.at("eligible"));
      snap.particles.push_back(sp);
    }
    return snap;
  };

  // Round recount state.
  int fragments = 0;
  std::vector<bool> seen(world.particles.size(), false);

  std::string line;
  std::optional<Point> leader;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json rec = Json::parse(line);
    if (rec.contains("snapshot")) continue;
    ++report.records_checked;
    int64_t idx = rec.at("activation_index");
    int id = rec.at("particle_id");

    if (rec.value("round", fragments) != fragments && report.issues.empty())
      report.issues.push_back(VerifyIssue{"round-recount", idx, "round counter mismatch"});

    Point pre_head = world.particles[static_cast<size_t>(id)].head;
    world.apply_memories(rec);
    world.apply_motion(rec);
    if (rec.contains("events")) {
      for (const auto& ev : rec.at("events")) {
        std::string kind = ev.value("ev", "");
        if (kind == "erode") {
          Point v = rec.at("moved_from").is_null() ? pre_head : point_from_json(rec.at("moved_from"));
          if (!se.erase(v) && report.issues.empty())
            report.issues.push_back(
                VerifyIssue{"erode-eligible", idx, "eroded point was not eligible"});
        } else if (kind == "leader") {
          leader = world.particles[static_cast<size_t>(id)].head;
        }
      }
    }
    if (report.issues.empty()) dle_check_clauses(snapshot(), se, idx, report);

    // Minimal-fragment recount.
    seen[static_cast<size_t>(id)] = true;
    bool covered = true;
    for (size_t i = 0; i < world.particles.size(); ++i) {
      bool fin = world.particles[i].mem.value("terminated", false);
      if (!fin && !seen[i]) {
        covered = false;
        break;
      }
    }
    if (covered) {
      ++fragments;
      std::fill(seen.begin(), seen.end(), false);
    }
    if (report.issues.size() > 16) break;
  }

  // Final-configuration checks, only meaningful if the run completed.
  bool all_done = true;
  int leaders = 0;
  for (const auto& p : world.particles) {
    all_done = all_done && p.mem.value("terminated", false);
    leaders += p.mem.at("status").get<int>() == 1 ? 1 : 0;
  }
  if (all_done) {
    if (leaders != 1)
      report.issues.push_back(VerifyIssue{"leader-unique", -1, "leaders=" + std::to_string(leaders)});
    if (se.size() != 1)
      report.issues.push_back(
          VerifyIssue{"final-eligible-singleton", -1, "size=" + std::to_string(se.size())});
    else if (leader && !(*se.begin() == *leader))
      report.issues.push_back(VerifyIssue{"final-eligible-singleton", -1,
                                          "leader does not occupy the last eligible point"});
  }
}

}  // namespace

VerifyReport verify_trace_file(const std::string& trace_path, const Shape& shape) {
  std::ifstream in(trace_path);
  if (!in) throw std::invalid_argument("cannot open trace: " + trace_path);
  std::string first;
  if (!std::getline(in, first)) throw std::invalid_argument("empty trace");
  Json header = Json::parse(first, nullptr, false);
  if (header.is_discarded() || !header.value("header", false))
    throw std::invalid_argument("trace missing header record");

  VerifyReport report;
  const std::string algo = header.at("algo");
  if (algo == "dle") {
    replay_verify_dle(header, in, shape, report);
  } else if (algo == "obd") {
    detail::replay_verify_obd(header, in, shape, report);
  } else if (algo == "collect") {
    detail::replay_verify_collect(header, in, shape, report);
  } else {
    throw std::invalid_argument("trace header names unknown algorithm: " + algo);
  }
  return report;
}

}  // namespace amoebot
