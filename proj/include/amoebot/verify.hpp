#pragma once

// Invariant checking: live observers that watch a running simulation, and a
// trace replayer that re-checks a finished run from its JSONL record alone.

#include <optional>
#include <string>
#include <vector>

#include "amoebot/dle.hpp"
#include "amoebot/grid.hpp"
#include "amoebot/sim.hpp"
#include "amoebot/trace.hpp"

namespace amoebot {

struct VerifyIssue {
  std::string check;
  int64_t activation_index = -1;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyIssue> issues;
  int64_t records_checked = 0;
  bool ok() const { return issues.empty(); }
  Json to_json() const;
};

// Connected and hole-free, via the Euler characteristic of the induced
// triangle complex (V - E + T == 1 exactly when no bounded face survives).
bool simply_connected(const PointSet& pts);

// ---------------------------------------------------------------------------
// Erosion (leader election) checks

// Tracks the eligible set alongside a live run and asserts, after every
// activation: (1) expanded particles straddle the eligible-set boundary,
// (2) the eligible set is simply-connected and non-empty, (3) its boundary
// points are occupied, (4) every eligibility array matches the tracked set.
class DleInvariantChecker : public Observer<DleAlgo> {
 public:
  explicit DleInvariantChecker(const Shape& initial_shape);

  bool wants_events() const override { return true; }
  void on_activation(const ActivationRecord& rec, const Sim<DleAlgo>& sim) override;

  const VerifyReport& report() const { return report_; }
  const PointSet& eligible_set() const { return se_; }

 private:
  void check_all(int64_t idx, const Sim<DleAlgo>& sim);
  PointSet se_;
  VerifyReport report_;
};

// Post-termination checks: contracted particles at every grid distance
// 0..ecc(l) from the leader and none beyond, eccentricity taken over the
// initial shape.
void check_breadcrumbs(const Config<DleMemory>& final_cfg, const Shape& initial_shape,
                       VerifyReport& report);

// Exactly one leader, everyone else follower, all terminated and contracted.
void check_leader_unique(const Config<DleMemory>& final_cfg, VerifyReport& report);

std::optional<Point> leader_point(const Config<DleMemory>& final_cfg);

// ---------------------------------------------------------------------------
// Trace replay

// Replays a JSONL trace produced by the pipeline and re-checks the invariants
// of the algorithm named in the trace header. Works on truncated traces.
VerifyReport verify_trace_file(const std::string& trace_path, const Shape& shape);

}  // namespace amoebot
