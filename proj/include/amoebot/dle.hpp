#pragma once

// Disconnecting leader election: particles erode the eligible set from the
// outer boundary inward until a single point remains; its occupant becomes
// the leader. The system may disconnect while eroding.

#include <array>
#include <cstdint>

#include "amoebot/grid.hpp"
#include "amoebot/sim.hpp"

namespace amoebot {

struct DleMemory {
  enum class Status : uint8_t { Undecided, Leader, Follower };
  Status status = Status::Undecided;
  std::array<bool, 6> outer{};     // input: head port i initially leads to the outer face
  std::array<bool, 6> eligible{};  // head port i leads to an eligible point
  bool terminated = false;
};

struct DleAlgo {
  using Memory = DleMemory;

  // Local erodability test on the eligibility pattern. The eligible set stays
  // simply-connected, so a single boundary run is automatically an outer one;
  // strict convexity is a run of at least three edges.
  static bool sce_here(const Memory& m) {
    std::array<bool, 6> out{};
    for (int i = 0; i < 6; ++i) out[i] = !m.eligible[i];
    auto runs = local_boundary_runs(out);
    return runs.size() == 1 && runs[0].count() > 0 && runs[0].size < 6;
  }

  static Move step(ParticleView<DleAlgo>& v) {
    Memory& m = v.mem();
    if (v.expanded()) return Move::contract_head();

    if (m.status != Memory::Status::Undecided) {
      for (int i = 0; i < 6; ++i) {
        if (!v.occupied(i)) continue;
        if (v.nbr_mem_ro(i).status == Memory::Status::Undecided) return Move::none();
      }
      m.terminated = true;
      return Move::none();
    }

    bool any_eligible = false;
    for (bool e : m.eligible) any_eligible = any_eligible || e;
    if (!any_eligible) {
      m.status = Memory::Status::Leader;
      v.emit(Json{{"ev", "leader"}});
      return Move::none();
    }

    if (!sce_here(m)) return Move::none();

    // v leaves the eligible set: clear the matching eligibility bit of every
    // neighbor whose head is adjacent to v.
    v.emit(Json{{"ev", "erode"}});
    for (int i = 0; i < 6; ++i) {
      if (!v.occupied(i) || !v.nbr_at_head(i)) continue;
      v.nbr_mem(i).eligible[v.nbr_port(i)] = false;
    }

    int empty_eligible = -1;
    int empty_eligible_count = 0;
    for (int i = 0; i < 6; ++i) {
      if (m.eligible[i] && v.empty_at(i)) {
        empty_eligible = i;
        ++empty_eligible_count;
      }
    }
    if (empty_eligible_count > 1)
      throw InvariantViolation("erosion found more than one adjacent empty eligible point");

    if (empty_eligible >= 0) {
      // The destination is interior to the eligible set; after the expansion
      // only the port back to v is ineligible.
      int back = (empty_eligible + 3) % 6;
      for (int i = 0; i < 6; ++i) m.eligible[i] = i != back;
      return Move::expand(empty_eligible);
    }
    m.status = Memory::Status::Follower;
    return Move::none();
  }

  static bool is_final(const Memory& m) { return m.terminated; }

  static Json mem_json(const Memory& m) {
    Json outer = Json::array(), elig = Json::array();
    for (int i = 0; i < 6; ++i) {
      outer.push_back(m.outer[i] ? 1 : 0);
      elig.push_back(m.eligible[i] ? 1 : 0);
    }
    return Json{{"status", static_cast<int>(m.status)},
                {"outer", outer},
                {"eligible", elig},
                {"terminated", m.terminated}};
  }
};

// Oracle-supplied outer flags: port i is flagged iff it leads to an
// unoccupied point of the outer face (holes stay unflagged).
void init_dle_from_oracle(Config<DleMemory>& cfg, const Shape& shape);

// Outer flags supplied per particle by an earlier boundary-detection stage.
void init_dle_from_flags(Config<DleMemory>& cfg, const std::vector<std::array<bool, 6>>& outer);

}  // namespace amoebot
