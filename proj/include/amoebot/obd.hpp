#pragma once

// Outer-boundary detection. Particles simulate constant-memory virtual nodes
// (one per local boundary) that form a ring per global boundary. Singleton
// segments compete by pipelined lexicographic comparison until each ring is
// covered by equal-label segments; sum verification and a stable-boundary
// check decide outer vs inner, an outer token informs the whole outer ring,
// and flooding stops every particle. No particle moves.

#include <array>
#include <cstdint>
#include <vector>

#include "amoebot/grid.hpp"
#include "amoebot/sim.hpp"

namespace amoebot {

namespace obd {

enum TokenKind : uint8_t {
  kLenCreate, kLen, kLenResult, kLenPurge,
  kCntCreate, kCnt, kCntPurge,
  kRevOrder, kRevOut, kRev, kClean,
  kLock, kDisband, kUnsuccessful, kUnlock, kAck,
  kSumCreate, kPos, kNeg, kSumPurge,
  kStCreate, kStLen, kStBeginCnt, kStCntCreate, kStCnt,
  kStRevOrder, kStRevOut, kStRev, kStResult, kStClean,
  kCancelInform, kCancelPurge,
  kOuter,
  kTokenKindCount,
};

// Travel direction along the ring, fixed per kind.
enum class Dir : uint8_t { Cw, Ccw };
Dir token_dir(TokenKind k);

enum TokenFlag : uint8_t {
  kFlagLead = 1,    // spatially first token of its train
  kFlagLast = 2,    // spatially last token of its train
  kFlagParity = 4,  // stability-check epoch bit
};

struct Token {
  uint8_t kind = 0;
  int8_t value = 0;    // boundary counts, partial sums, result codes, hop counts
  uint8_t flags = 0;
  uint8_t lane = 0;    // segment-crossing count from the originating segment
  uint8_t session = 0; // conductor session that created the token
  uint8_t aux = 0;     // probe target / marks bitmask / homing countdown
};

// One designated slot family: FIFO of at most two tokens.
struct SlotQ {
  uint16_t key = 0;
  uint8_t n = 0;
  std::array<Token, 2> tok{};
};

enum class Att : uint8_t { Idle, LenWait, LabelWait, LockWait, KillWait, UnlockWait };
enum class SumState : uint8_t { None, Run, Known, Bad };

enum ResultCode : int8_t { kResSmaller = 1, kResEqual = 2, kResLarger = 3, kResFail = 4 };

struct VNodeState {
  uint8_t i_f = 0, i_l = 0;  // first/last edge ports of the local boundary
  int8_t count = 0;

  bool pledged = false, is_head = false, is_tail = false;
  bool defector = false, locked = false, lcp_marked = false;
  uint8_t lcp_mark_session = 0;  // attempt that placed the mark
  uint8_t stab_marks = 0;  // bit j set: tail marked by the initiator j segments clockwise
  int8_t outer_flag = -1;  // -1 unknown
  uint8_t session = 0;       // competition epoch (bumped per attempt)
  uint8_t stab_session = 0;  // stability-check epoch

  // Head-conductor state.
  Att att = Att::Idle;
  int8_t len_result = 0;    // pending kLenResult delivery
  int8_t label_result = 0;  // pending label verdict (computed locally)
  int8_t lock_reply = 0;    // pending kDisband / kUnsuccessful / kAck delivery
  SumState sum_state = SumState::None;
  int8_t sum_val = 0;
  uint8_t stab_j = 0;       // 0: no check running; else current probe target
  uint8_t stab_k = 0;       // segments to verify, 6/|sum|
  uint8_t stab_parity = 0;
  int8_t stab_result = 0;   // pending kStResult delivery
  uint8_t stab_age = 0;     // equal attempts completed since the check started
  bool stable = false;
  bool outer_pending = false;  // outer token not yet dispatched

  std::vector<SlotQ> slots;  // sparse, sorted by key

  int ports() const { return (i_l - i_f + 6) % 6 + 1; }
  int port_pred() const { return (i_f + 5) % 6; }  // toward ring predecessor point
  int port_succ() const { return (i_l + 1) % 6; }  // toward ring successor point
};

struct Memory {
  bool inited = false;
  bool flood = false;
  bool done = false;
  std::array<bool, 6> outer_out{};
  uint8_t nv = 0;
  std::array<VNodeState, 3> vn{};
};

// Port bundle of one v-node, as computed from the particle's view.
struct VNodePorts {
  int i_f, i_l, i_p, i_s;
  int jt_p, j_p;  // predecessor particle's port for the shared edge; its boundary port
  int jt_s, j_s;  // successor counterparts
};

}  // namespace obd

struct ObdAlgo {
  using Memory = obd::Memory;
  static Move step(ParticleView<ObdAlgo>& v);
  static bool is_final(const Memory& m) { return m.done; }
  static Json mem_json(const Memory& m);
};

namespace obd {

// Derives the communication ports of a v-node from the view; the shared-edge
// labels come from the neighbors' sides.
VNodePorts vnode_ports(ParticleView<ObdAlgo>& v, const VNodeState& vn);

// Oracle-side helpers used by tests and verification. They map simulated
// v-nodes onto the geometric rings of the occupied shape.
struct RingNodeRef {
  int particle = -1;
  int vn_index = -1;
};
// For every oracle ring (in vnode_rings order), the simulated v-node states.
std::vector<std::vector<RingNodeRef>> map_rings(const Shape& shape, const Config<Memory>& cfg);

// A ring is stable when fully covered by non-disbanding segments with equal
// labels. `labels_out`, when given, receives the per-segment labels.
bool ring_stable(const Config<Memory>& cfg, const std::vector<RingNodeRef>& ring,
                 std::vector<std::vector<int>>* labels_out = nullptr);

}  // namespace obd

// Outer flags per particle/port from a finished run.
std::vector<std::array<bool, 6>> obd_output_flags(const Config<obd::Memory>& cfg);

// Oracle outer flags for comparison: port leads to an unoccupied outer-face point.
std::vector<std::array<bool, 6>> oracle_outer_flags(const Shape& shape,
                                                    const Config<obd::Memory>& cfg);

}  // namespace amoebot
