#include "amoebot/obd.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace amoebot {
namespace obd {

namespace {

inline uint16_t slot_key(uint8_t kind, uint8_t lane) {
  return static_cast<uint16_t>(kind) * 16 + lane;
}

SlotQ* find_q(VNodeState& vn, uint16_t key) {
  for (auto& q : vn.slots)
    if (q.key == key) return &q;
  return nullptr;
}

SlotQ& get_q(VNodeState& vn, uint16_t key) {
  for (auto& q : vn.slots)
    if (q.key == key) return q;
  vn.slots.push_back(SlotQ{key, 0, {}});
  std::sort(vn.slots.begin(), vn.slots.end(),
            [](const SlotQ& a, const SlotQ& b) { return a.key < b.key; });
  return *find_q(vn, key);
}

bool has_space(VNodeState& vn, uint16_t key) {
  SlotQ* q = find_q(vn, key);
  return !q || q->n < 2;
}

void push_token(VNodeState& vn, uint16_t key, const Token& t) {
  SlotQ& q = get_q(vn, key);
  if (q.n >= 2) throw InvariantViolation("token slot overflow");
  q.tok[q.n++] = t;
}

void pop_front(SlotQ& q) {
  if (q.n == 0) return;
  q.tok[0] = q.tok[1];
  q.n--;
}

void drop_empty(VNodeState& vn) {
  vn.slots.erase(std::remove_if(vn.slots.begin(), vn.slots.end(),
                                [](const SlotQ& q) { return q.n == 0; }),
                 vn.slots.end());
}

// Removes tokens in the slot family whose session differs from `session`:
// stale garbage dies where a fresh train is being built.
void sweep_stale(VNodeState& vn, uint16_t key, uint8_t session) {
  SlotQ* q = find_q(vn, key);
  if (!q) return;
  uint8_t keep = 0;
  for (uint8_t i = 0; i < q->n; ++i)
    if (q->tok[i].session == session) q->tok[keep++] = q->tok[i];
  q->n = keep;
  drop_empty(vn);
}

// Removes tokens of the given session: a result or clean token deleting the
// remains of its own train.
void sweep_own(VNodeState& vn, uint16_t key, uint8_t session) {
  SlotQ* q = find_q(vn, key);
  if (!q) return;
  uint8_t keep = 0;
  for (uint8_t i = 0; i < q->n; ++i)
    if (q->tok[i].session != session) q->tok[keep++] = q->tok[i];
  q->n = keep;
  drop_empty(vn);
}

void purge_key(VNodeState& vn, uint16_t key) {
  SlotQ* q = find_q(vn, key);
  if (q) q->n = 0;
  drop_empty(vn);
}

void purge_all(VNodeState& vn, uint8_t kind) {
  for (auto& q : vn.slots)
    if (q.key / 16 == kind) q.n = 0;
  drop_empty(vn);
}

constexpr int8_t kOutcomeFail = 0;
constexpr int8_t kOutcomeEqual = 1;

int8_t st_pack(uint8_t j, int8_t outcome) { return static_cast<int8_t>(j * 8 + outcome); }
uint8_t st_unpack_j(int8_t v) { return static_cast<uint8_t>(v / 8); }
int8_t st_unpack_out(int8_t v) { return static_cast<int8_t>(v % 8); }

uint8_t parity_of(const Token& t) { return (t.flags & kFlagParity) ? 1 : 0; }

}  // namespace

Dir token_dir(TokenKind k) {
  switch (k) {
    case kLenCreate: case kLenResult: case kCntCreate: case kRev: case kLock:
    case kUnlock: case kSumCreate: case kStCreate: case kStLen: case kStCnt:
    case kStRevOut: case kStClean: case kCancelPurge:
      return Dir::Ccw;
    default:
      return Dir::Cw;
  }
}

VNodePorts vnode_ports(ParticleView<ObdAlgo>& v, const VNodeState& vn) {
  VNodePorts p{};
  p.i_f = vn.i_f;
  p.i_l = vn.i_l;
  p.i_p = (vn.i_f + 5) % 6;
  p.i_s = (vn.i_l + 1) % 6;
  p.jt_p = v.nbr_port(p.i_p);
  p.j_p = (p.jt_p + 5) % 6;
  p.jt_s = v.nbr_port(p.i_s);
  p.j_s = (p.jt_s + 1) % 6;
  return p;
}

namespace {

int vnode_containing(const Memory& m, int port) {
  for (int k = 0; k < m.nv; ++k) {
    const VNodeState& vn = m.vn[k];
    if (((port - vn.i_f + 6) % 6) < vn.ports()) return k;
  }
  return -1;
}

struct Ctx {
  ParticleView<ObdAlgo>& v;
  Memory& m;

  struct Ref {
    Memory* mem = nullptr;
    VNodeState* vn = nullptr;
  };

  // Ring neighbor of v-node k. The ring structure is static during the run.
  Ref ring_nbr(int k, Dir d) {
    VNodeState& vn = m.vn[k];
    int port = d == Dir::Cw ? vn.port_succ() : vn.port_pred();
    if (!v.occupied(port)) throw InvariantViolation("ring neighbor point unoccupied");
    int their_port_to_me = v.nbr_port(port);
    int recv_port = d == Dir::Cw ? (their_port_to_me + 1) % 6 : (their_port_to_me + 5) % 6;
    Memory& nm = v.nbr_mem(port);
    int idx = vnode_containing(nm, recv_port);
    if (idx < 0) throw InvariantViolation("no receiving v-node on ring neighbor");
    return Ref{&nm, &nm.vn[idx]};
  }

  static uint16_t recv_key(const Token& t) {
    switch (static_cast<TokenKind>(t.kind)) {
      case kLen:
        return slot_key(t.kind, t.lane);
      case kStLen:
      case kStCnt:
        return slot_key(t.kind, t.lane % 7 + 7 * parity_of(t));
      case kStRev:
      case kStRevOut:
        return slot_key(t.kind, t.aux % 7 + 7 * parity_of(t));
      case kStResult:
      case kStClean:
        return slot_key(t.kind, parity_of(t));
      default:
        return slot_key(t.kind, 0);
    }
  }

  // Adjusts crossing counters for the receiving v-node, then delivers into
  // its designated slot. Returns false only when the slot is full.
  bool try_send(int k, Dir d, Token t) {
    Ref r = ring_nbr(k, d);
    VNodeState& recv = *r.vn;
    switch (static_cast<TokenKind>(t.kind)) {
      case kLen:
        if (recv.is_tail) t.lane++;
        if (t.lane > 1) return true;  // runaway follower: drop
        break;
      case kStLen:
      case kStCnt:
        if (recv.is_head) t.lane++;
        if (t.lane > 6) return true;
        break;
      case kStResult:
      case kStBeginCnt:
        if (recv.is_tail) {
          if (t.aux == 0) return true;  // homing lost: drop
          t.aux--;
        }
        break;
      case kLenResult:
        if (recv.is_head) {
          if (t.aux == 0) return true;
          t.aux--;
        }
        break;
      case kStClean:
      case kCancelPurge:
        if (recv.is_head && t.value < 120) t.value++;
        break;
      case kCancelInform:
      case kOuter:
        if (recv.is_tail && t.value < 120) t.value++;
        break;
      default:
        break;
    }
    uint16_t key = recv_key(t);
    if (!has_space(recv, key)) return false;
    push_token(recv, key, t);
    return true;
  }
};

// ---------------------------------------------------------------------------
// Initialization

void init_particle(Ctx& c) {
  Memory& m = c.m;
  std::array<bool, 6> out{};
  int occupied = 0;
  for (int port = 0; port < 6; ++port) {
    out[port] = !c.v.occupied(port);
    occupied += c.v.occupied(port) ? 1 : 0;
  }
  m.inited = true;
  if (occupied == 0) {
    // Lone particle: every port faces the outer face; nothing to negotiate.
    for (int i = 0; i < 6; ++i) m.outer_out[i] = true;
    m.done = true;
    c.v.emit(Json{{"ev", "obd_done"}});
    return;
  }
  auto runs = local_boundary_runs(out);
  m.nv = 0;
  for (const auto& b : runs) {
    if (m.nv >= 3) throw InvariantViolation("more than three local boundaries");
    VNodeState vn{};
    vn.i_f = static_cast<uint8_t>(b.first);
    vn.i_l = static_cast<uint8_t>(b.last);
    vn.count = static_cast<int8_t>(b.count());
    vn.pledged = true;
    vn.is_head = true;
    vn.is_tail = true;
    m.vn[m.nv++] = vn;
  }
  std::sort(m.vn.begin(), m.vn.begin() + m.nv,
            [](const VNodeState& a, const VNodeState& b) { return a.i_f < b.i_f; });
}

// ---------------------------------------------------------------------------
// Stability-check helpers at the conductor

void launch_probe(Ctx& c, int k, uint8_t j) {
  VNodeState& vn = c.m.vn[k];
  uint8_t parity = vn.stab_parity;
  uint16_t own_key = slot_key(kStLen, 7 * parity);
  sweep_stale(vn, own_key, vn.stab_session);
  if (!has_space(vn, own_key)) return;  // retried via stab_result replay
  Ctx::Ref pred{};
  if (!vn.is_tail) {
    pred = c.ring_nbr(k, Dir::Ccw);
    if (!has_space(*pred.vn, slot_key(kStCreate, 0))) return;
  }
  Token mine{};
  mine.kind = kStLen;
  mine.session = vn.stab_session;
  mine.flags = (parity ? kFlagParity : 0) | kFlagLast | (vn.is_tail ? kFlagLead : 0);
  if (vn.is_tail) mine.aux = j;
  push_token(vn, own_key, mine);
  if (!vn.is_tail) {
    Token create{};
    create.kind = kStCreate;
    create.session = vn.stab_session;
    create.aux = j;
    create.flags = parity ? kFlagParity : 0;
    push_token(*pred.vn, slot_key(kStCreate, 0), create);
  }
  vn.stab_j = j;
  vn.stab_result = 0;
}

// Unmarks the tails this check marked and deletes its trains lane by lane.
bool dispatch_st_clean(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  if (vn.stab_j == 0) return true;
  Token clean{};
  clean.kind = kStClean;
  clean.session = vn.stab_session;
  clean.aux = vn.stab_j;
  clean.value = 0;
  clean.flags = vn.stab_parity ? kFlagParity : 0;
  if (!c.try_send(k, Dir::Ccw, clean)) return false;
  vn.stab_j = 0;
  vn.stab_result = 0;
  return true;
}

// ---------------------------------------------------------------------------
// Defector processing

void defector_step(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  if (!vn.pledged || !vn.defector) return;
  if (vn.locked) throw InvariantViolation("locked v-node in defector state");

  // A marked tail cancels the stability checks that compared it: one token
  // informs the initiators clockwise, the other deletes their probe trains
  // counter-clockwise.
  if (vn.stab_marks != 0) {
    Ctx::Ref succ = c.ring_nbr(k, Dir::Cw);
    Ctx::Ref pred = c.ring_nbr(k, Dir::Ccw);
    Token inform{};
    inform.kind = kCancelInform;
    inform.aux = vn.stab_marks;
    Token purge{};
    purge.kind = kCancelPurge;
    purge.aux = vn.stab_marks;
    Token i2 = inform;
    if (succ.vn->is_tail) i2.value++;
    Token p2 = purge;
    if (pred.vn->is_head) p2.value++;
    if (!has_space(*succ.vn, slot_key(kCancelInform, 0)) ||
        !has_space(*pred.vn, slot_key(kCancelPurge, 0)))
      return;  // retry next activation
    push_token(*succ.vn, slot_key(kCancelInform, 0), i2);
    push_token(*pred.vn, slot_key(kCancelPurge, 0), p2);
    vn.stab_marks = 0;
  }

  // Stranded probe leads and parked reverse trains answer with failures so
  // their initiators never wait forever.
  for (auto& q : vn.slots) {
    uint8_t kind = static_cast<uint8_t>(q.key / 16);
    if (q.n == 0) continue;
    if (kind == kStLen && (q.tok[0].flags & kFlagLead)) {
      Token res{};
      res.kind = kStResult;
      res.session = q.tok[0].session;
      res.flags = q.tok[0].flags & kFlagParity;
      res.aux = static_cast<uint8_t>(q.key % 16 % 7);
      res.value = st_pack(q.tok[0].aux, kOutcomeFail);
      if (!c.try_send(k, Dir::Cw, res)) return;
      q.tok[0].flags &= static_cast<uint8_t>(~kFlagLead);  // answered once
    } else if (kind == kStRev) {
      Token res{};
      res.kind = kStResult;
      res.session = q.tok[0].session;
      res.flags = q.tok[0].flags & kFlagParity;
      res.aux = q.tok[0].aux;
      res.value = st_pack(q.tok[0].aux, kOutcomeFail);
      if (!c.try_send(k, Dir::Cw, res)) return;
      q.n = 0;
    }
  }

  bool was_head = vn.is_head;
  // Keep pass-through traffic; drop everything bound to this segment.
  for (auto& q : vn.slots) {
    switch (static_cast<TokenKind>(q.key / 16)) {
      case kLen: case kCnt: case kRevOut: case kRev:
      case kStLen: case kStCnt: case kStRev: case kStRevOut:
      case kLenResult: case kStResult: case kStBeginCnt:
      case kDisband: case kUnsuccessful: case kAck:
      case kCancelInform: case kCancelPurge: case kOuter:
        break;
      default:
        q.n = 0;
    }
  }
  drop_empty(vn);
  vn.pledged = false;
  vn.defector = false;
  vn.is_head = false;
  vn.is_tail = false;
  vn.lcp_marked = false;
  vn.stable = false;
  vn.att = Att::Idle;
  vn.sum_state = SumState::None;
  vn.stab_j = 0;
  vn.stab_result = 0;
  vn.session++;
  vn.stab_session++;

  if (!was_head) {
    Ctx::Ref succ = c.ring_nbr(k, Dir::Cw);
    if (!succ.vn->pledged) throw InvariantViolation("disband frontier hit a free v-node");
    succ.vn->defector = true;
    succ.vn->is_tail = true;
  }
}

// ---------------------------------------------------------------------------
// Head conductor

bool launch_lcp(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  uint8_t next_session = static_cast<uint8_t>(vn.session + 1);
  sweep_stale(vn, slot_key(kLen, 0), next_session);
  if (!has_space(vn, slot_key(kLen, 0))) return false;
  Ctx::Ref pred{};
  if (!vn.is_tail) {
    pred = c.ring_nbr(k, Dir::Ccw);
    if (!has_space(*pred.vn, slot_key(kLenCreate, 0))) return false;
  }
  vn.session = next_session;
  Token lead{};
  lead.kind = kLen;
  lead.flags = kFlagLead | (vn.is_tail ? kFlagLast : 0);
  lead.session = vn.session;
  push_token(vn, slot_key(kLen, 0), lead);
  if (!vn.is_tail) {
    Token create{};
    create.kind = kLenCreate;
    create.session = vn.session;
    push_token(*pred.vn, slot_key(kLenCreate, 0), create);
  }
  vn.att = Att::LenWait;
  vn.len_result = 0;
  return true;
}

bool launch_label(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  Ctx::Ref succ = c.ring_nbr(k, Dir::Cw);
  sweep_stale(vn, slot_key(kCnt, 0), vn.session);
  if (!has_space(vn, slot_key(kCnt, 0))) return false;
  if (!has_space(*succ.vn, slot_key(kRevOrder, 0))) return false;
  Ctx::Ref pred{};
  if (!vn.is_tail) {
    pred = c.ring_nbr(k, Dir::Ccw);
    if (!has_space(*pred.vn, slot_key(kCntCreate, 0))) return false;
  }
  Token mine{};
  mine.kind = kCnt;
  mine.value = vn.count;
  mine.flags = kFlagLead | (vn.is_tail ? kFlagLast : 0);
  mine.session = vn.session;
  push_token(vn, slot_key(kCnt, 0), mine);
  if (!vn.is_tail) {
    Token create{};
    create.kind = kCntCreate;
    create.session = vn.session;
    push_token(*pred.vn, slot_key(kCntCreate, 0), create);
  }
  Token order{};
  order.kind = kRevOrder;
  order.session = vn.session;
  push_token(*succ.vn, slot_key(kRevOrder, 0), order);
  vn.att = Att::LabelWait;
  vn.label_result = 0;
  return true;
}

// Locking entry on a won comparison; a single-node segment locks inline.
void enter_locking(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  if (vn.is_tail) {
    vn.locked = true;
    vn.att = Att::KillWait;
    return;
  }
  Token lock{};
  lock.kind = kLock;
  lock.session = vn.session;
  Ctx::Ref pred = c.ring_nbr(k, Dir::Ccw);
  if (!has_space(*pred.vn, slot_key(kLock, 0))) return;  // retry
  push_token(*pred.vn, slot_key(kLock, 0), lock);
  vn.att = Att::LockWait;
  vn.lock_reply = 0;
}

void launch_sum(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  sweep_stale(vn, slot_key(kPos, 0), vn.session);
  sweep_stale(vn, slot_key(kNeg, 0), vn.session);
  if (!has_space(vn, slot_key(kPos, 0)) || !has_space(vn, slot_key(kNeg, 0))) return;
  Ctx::Ref pred{};
  if (!vn.is_tail) {
    pred = c.ring_nbr(k, Dir::Ccw);
    if (!has_space(*pred.vn, slot_key(kSumCreate, 0))) return;
  }
  Token pos{};
  pos.kind = kPos;
  pos.value = std::max<int8_t>(vn.count, 0);
  pos.flags = kFlagLead | (vn.is_tail ? kFlagLast : 0);
  pos.session = vn.session;
  Token neg = pos;
  neg.kind = kNeg;
  neg.value = std::min<int8_t>(vn.count, 0);
  push_token(vn, slot_key(kPos, 0), pos);
  push_token(vn, slot_key(kNeg, 0), neg);
  if (!vn.is_tail) {
    Token create{};
    create.kind = kSumCreate;
    create.session = vn.session;
    push_token(*pred.vn, slot_key(kSumCreate, 0), create);
  }
  vn.sum_state = SumState::Run;
}

void conductor_step(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  if (!vn.pledged || !vn.is_head || vn.defector) return;

  switch (vn.att) {
    case Att::LenWait: {
      if (vn.len_result == 0) return;
      int8_t res = vn.len_result;
      if (res == kResSmaller) {
        vn.len_result = 0;
        enter_locking(c, k);
      } else if (res == kResEqual) {
        if (launch_label(c, k)) vn.len_result = 0;
      } else {
        vn.len_result = 0;
        vn.att = Att::Idle;
      }
      return;
    }
    case Att::LabelWait:
      // The pairwise comparison runs in compare_label; consume its verdict.
      if (vn.label_result == 0) return;
      {
        int8_t res = vn.label_result;
        vn.label_result = 0;
        if (res == kResSmaller) {
          enter_locking(c, k);
          return;
        }
        if (res == kResEqual) {
          if (vn.sum_state == SumState::None) {
            launch_sum(c, k);
          } else if (vn.sum_state == SumState::Known && vn.stab_j == 0 && !vn.stable) {
            vn.stab_parity ^= 1;
            vn.stab_session++;
            vn.stab_age = 0;
            vn.stab_k = static_cast<uint8_t>(6 / std::abs(vn.sum_val));
            launch_probe(c, k, 1);
          } else if (vn.stab_j != 0 && !vn.stable) {
            // A check whose tokens were lost to a cancellation it never heard
            // about would wait forever; whole attempts are a safe clock.
            if (++vn.stab_age > 24) {
              if (dispatch_st_clean(c, k)) {
                vn.stab_session++;
              } else {
                vn.stab_j = 0;
                vn.stab_result = 0;
                vn.stab_session++;
              }
            }
          }
        }
        vn.att = Att::Idle;
      }
      return;
    case Att::LockWait: {
      if (vn.lock_reply == 0) return;
      int8_t r = vn.lock_reply;
      vn.lock_reply = 0;
      vn.att = r == kDisband ? Att::KillWait : Att::Idle;
      return;
    }
    case Att::KillWait: {
      Ctx::Ref succ = c.ring_nbr(k, Dir::Cw);
      if (!succ.vn->pledged || !succ.vn->is_tail)
        throw InvariantViolation("kill target is not a segment tail");
      if (succ.vn->locked) return;  // wait for its operation to complete
      succ.vn->defector = true;
      if (vn.is_tail) {
        vn.locked = false;
        vn.att = Att::Idle;
        return;
      }
      Token unlock{};
      unlock.kind = kUnlock;
      unlock.session = vn.session;
      Ctx::Ref pred = c.ring_nbr(k, Dir::Ccw);
      if (!has_space(*pred.vn, slot_key(kUnlock, 0))) return;
      push_token(*pred.vn, slot_key(kUnlock, 0), unlock);
      vn.att = Att::UnlockWait;
      return;
    }
    case Att::UnlockWait:
      if (vn.lock_reply == kAck) {
        vn.lock_reply = 0;
        vn.att = Att::Idle;
      }
      return;
    case Att::Idle:
      break;
  }

  // Stability progress.
  if (vn.stab_result != 0 && vn.stab_j != 0) {
    uint8_t j = st_unpack_j(vn.stab_result);
    int8_t outcome = st_unpack_out(vn.stab_result);
    if (j == vn.stab_j) {
      vn.stab_age = 0;
      if (outcome == kOutcomeEqual) {
        if (j >= vn.stab_k) {
          if (dispatch_st_clean(c, k)) {
            vn.stable = true;
            c.v.emit(Json{{"ev", "stable"}, {"vn", k}, {"sum", vn.sum_val}, {"k", vn.stab_k}});
            if (vn.sum_val > 0) vn.outer_pending = true;
          }
        } else {
          vn.stab_result = 0;
          launch_probe(c, k, static_cast<uint8_t>(j + 1));
        }
      } else {
        dispatch_st_clean(c, k);
      }
    } else {
      vn.stab_result = 0;
    }
  }
  if (vn.outer_pending) {
    Token outer{};
    outer.kind = kOuter;
    outer.session = vn.session;
    vn.outer_flag = 1;
    if (c.try_send(k, Dir::Cw, outer)) vn.outer_pending = false;
  }

  if (vn.sum_state == SumState::Run) return;  // sum verification pauses attempts

  // Expansion attempt.
  Ctx::Ref succ = c.ring_nbr(k, Dir::Cw);
  if (!succ.vn->pledged) {
    // Absorb the free successor: it becomes the new head; every cached
    // conclusion about this segment's label is void.
    VNodeState& s2 = *succ.vn;
    s2.pledged = true;
    s2.is_head = true;
    s2.is_tail = false;
    s2.defector = false;
    s2.locked = false;
    s2.att = Att::Idle;
    s2.len_result = s2.label_result = s2.lock_reply = 0;
    s2.sum_state = SumState::None;
    s2.stab_j = 0;
    s2.stab_result = 0;
    s2.stable = false;
    s2.outer_pending = false;
    s2.session++;
    s2.stab_session++;
    vn.is_head = false;
    vn.att = Att::Idle;
    vn.sum_state = SumState::None;
    vn.stable = false;
    vn.outer_pending = false;
    if (vn.stab_j != 0 && !dispatch_st_clean(c, k)) {
      vn.stab_j = 0;  // marks decay through the cancellation path
      vn.stab_result = 0;
    }
    vn.session++;
    vn.stab_session++;
    return;
  }
  if (succ.vn->defector) return;  // wait until it frees
  launch_lcp(c, k);
}

// ---------------------------------------------------------------------------
// Comparison sites

// Label comparison at the initiator's head: one pair per activation.
void compare_label(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  if (!vn.pledged || !vn.is_head || vn.att != Att::LabelWait || vn.label_result != 0) return;
  SlotQ* mine = find_q(vn, slot_key(kCnt, 0));
  if (!mine || mine->n == 0) return;
  if (mine->tok[0].session != vn.session) {  // stale own garbage
    pop_front(*mine);
    drop_empty(vn);
    return;
  }
  Ctx::Ref succ = c.ring_nbr(k, Dir::Cw);
  SlotQ* theirs = find_q(*succ.vn, slot_key(kRev, 0));
  if (!theirs || theirs->n == 0) return;
  if (theirs->tok[0].session != vn.session) {
    pop_front(*theirs);
    drop_empty(*succ.vn);
    return;
  }
  Token a = mine->tok[0];
  Token b = theirs->tok[0];
  int8_t verdict = 0;
  if (a.value < b.value) verdict = kResSmaller;
  else if (a.value > b.value) verdict = kResLarger;
  else if ((a.flags & kFlagLast) && (b.flags & kFlagLast)) verdict = kResEqual;
  else if ((a.flags & kFlagLast) || (b.flags & kFlagLast))
    throw InvariantViolation("label streams of unequal length");
  if (verdict != 0 && !has_space(*succ.vn, slot_key(kClean, 0)))
    return;  // retry with the same pair next activation
  pop_front(*mine);
  pop_front(*theirs);
  drop_empty(vn);
  drop_empty(*succ.vn);
  if (verdict != 0) {
    Token clean{};
    clean.kind = kClean;
    clean.session = vn.session;
    push_token(*succ.vn, slot_key(kClean, 0), clean);
    purge_all(vn, kCnt);
    vn.label_result = verdict;
  }
}

// Stability comparison at a target's head: one pair per lane per activation.
void compare_stability(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  if (!vn.pledged || !vn.is_head) return;
  for (uint8_t parity = 0; parity <= 1; ++parity) {
    for (uint8_t j = 1; j <= 6; ++j) {
      SlotQ* rev = find_q(vn, slot_key(kStRev, j + 7 * parity));
      SlotQ* cnt = find_q(vn, slot_key(kStCnt, j + 7 * parity));
      if (!rev || !cnt || rev->n == 0 || cnt->n == 0) continue;
      Token a = cnt->tok[0];
      Token b = rev->tok[0];
      if (a.session != b.session) {
        // One of the streams is a leftover from a cancelled check.
        bool cnt_older = static_cast<int8_t>(a.session - b.session) < 0;
        pop_front(cnt_older ? *cnt : *rev);
        drop_empty(vn);
        continue;
      }
      int8_t outcome = -1;
      if (a.value != b.value) outcome = kOutcomeFail;
      else if ((a.flags & kFlagLast) && (b.flags & kFlagLast)) outcome = kOutcomeEqual;
      else if ((a.flags & kFlagLast) || (b.flags & kFlagLast)) outcome = kOutcomeFail;
      if (outcome >= 0) {
        Token res{};
        res.kind = kStResult;
        res.session = a.session;
        res.flags = parity ? kFlagParity : 0;
        res.aux = j;
        res.value = st_pack(j, outcome);
        if (!c.try_send(k, Dir::Cw, res)) continue;
        purge_key(vn, slot_key(kStRev, j + 7 * parity));
        purge_key(vn, slot_key(kStCnt, j + 7 * parity));
      } else {
        pop_front(*cnt);
        pop_front(*rev);
        drop_empty(vn);
      }
    }
  }
}

// Sum-train merging everywhere plus the decision at the head.
void sum_step(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];
  if (!vn.pledged) return;
  for (uint8_t kind : {static_cast<uint8_t>(kPos), static_cast<uint8_t>(kNeg)}) {
    SlotQ* q = find_q(vn, slot_key(kind, 0));
    if (q && q->n == 2 && q->tok[0].session == q->tok[1].session) {
      int sum = q->tok[0].value + q->tok[1].value;
      if (sum >= -6 && sum <= 6) {
        q->tok[0].value = static_cast<int8_t>(sum);
        q->tok[0].flags |= q->tok[1].flags;
        q->n = 1;
      }
    }
  }
  if (!vn.is_head || vn.sum_state != SumState::Run) return;
  SlotQ* pos = find_q(vn, slot_key(kPos, 0));
  SlotQ* neg = find_q(vn, slot_key(kNeg, 0));
  if (!pos || !neg || pos->n == 0 || neg->n == 0) return;
  auto complete = [&](SlotQ* q) {
    return q->n == 1 && (q->tok[0].flags & kFlagLead) && (q->tok[0].flags & kFlagLast) &&
           q->tok[0].session == vn.session;
  };
  bool pos_mergeable = pos->n == 2 && std::abs(pos->tok[0].value + pos->tok[1].value) <= 6;
  bool neg_mergeable = neg->n == 2 && std::abs(neg->tok[0].value + neg->tok[1].value) <= 6;
  if (!pos_mergeable && !neg_mergeable && neg->tok[0].value != 0 &&
      std::abs(pos->tok[0].value + neg->tok[0].value) <= 6 &&
      pos->tok[0].session == vn.session && neg->tok[0].session == vn.session) {
    pos->tok[0].value = static_cast<int8_t>(pos->tok[0].value + neg->tok[0].value);
    neg->tok[0].value = 0;
  }
  if (complete(pos) && complete(neg)) {
    int8_t sum = 0;
    if (neg->tok[0].value == 0) sum = pos->tok[0].value;
    else if (pos->tok[0].value == 0) sum = neg->tok[0].value;
    else return;  // the cross-merge zeroes one side shortly
    purge_key(vn, slot_key(kPos, 0));
    purge_key(vn, slot_key(kNeg, 0));
    int a = std::abs(sum);
    vn.sum_val = sum;
    vn.sum_state = (a == 1 || a == 2 || a == 3 || a == 6) ? SumState::Known : SumState::Bad;
    return;
  }
  auto stuck = [&](SlotQ* zero, SlotQ* other) {
    if (!complete(zero) || zero->tok[0].value != 0) return false;
    return other->n == 2 &&
           std::abs(other->tok[0].value) + std::abs(other->tok[1].value) >= 7;
  };
  if (stuck(pos, neg) || stuck(neg, pos)) {
    purge_key(vn, slot_key(kPos, 0));
    purge_key(vn, slot_key(kNeg, 0));
    vn.sum_state = SumState::Bad;
  }
}

// ---------------------------------------------------------------------------
// The pump: one action per front token per slot family per activation.

void pump_vnode(Ctx& c, int k) {
  VNodeState& vn = c.m.vn[k];

  std::vector<uint16_t> keys;
  keys.reserve(vn.slots.size());
  for (const auto& q : vn.slots)
    if (q.n > 0) keys.push_back(q.key);

  for (uint16_t key : keys) {
    SlotQ* qp = find_q(vn, key);
    if (!qp || qp->n == 0) continue;
    Token t = qp->tok[0];
    auto kind = static_cast<TokenKind>(t.kind);
    Dir dir = token_dir(kind);

    auto consume = [&]() {
      SlotQ* q2 = find_q(vn, key);
      if (q2) {
        pop_front(*q2);
        drop_empty(vn);
      }
    };
    auto forward = [&]() {
      if (c.try_send(k, dir, t)) consume();
    };

    if (!vn.pledged) {
      // Free v-nodes relay; they host no decisions or deliveries.
      switch (kind) {
        case kLen: case kCnt: case kRevOut: case kRev:
        case kStLen: case kStCnt: case kStRev: case kStRevOut:
        case kLenResult: case kStResult: case kStBeginCnt:
        case kDisband: case kUnsuccessful: case kAck:
        case kCancelInform: case kCancelPurge: case kOuter:
          forward();
          break;
        default:
          consume();
          break;
      }
      continue;
    }

    switch (kind) {
      case kLenCreate: {
        sweep_stale(vn, slot_key(kLen, 0), t.session);
        if (!has_space(vn, slot_key(kLen, 0))) break;
        Token gen{};
        gen.kind = kLen;
        gen.session = t.session;
        gen.flags = vn.is_tail ? kFlagLast : 0;
        push_token(vn, slot_key(kLen, 0), gen);
        if (vn.is_tail) consume();
        else forward();
        break;
      }

      case kLen: {
        if (t.lane == 0) {
          // Inside the initiating segment; the head gates stale sessions out.
          if (vn.is_head && t.session != vn.session) {
            consume();
            break;
          }
          forward();
          break;
        }
        if (!(t.flags & kFlagLead)) {
          forward();
          break;
        }
        // Tokens of different attempts can share this queue transiently: a
        // session older than its queue mate belongs to a dead comparison.
        if (qp->n >= 2 && qp->tok[1].session != t.session) {
          if (static_cast<int8_t>(t.session - qp->tok[1].session) < 0) consume();
          else {
            qp->tok[1] = Token{};
            qp->n = 1;
          }
          break;
        }
        bool merged_last = (t.flags & kFlagLast) != 0;
        if (vn.is_head) {
          Token res{};
          res.kind = kLenResult;
          res.session = t.session;
          res.aux = 1;
          if (merged_last) {
            res.value = kResEqual;
            if (c.try_send(k, Dir::Ccw, res)) {
              vn.lcp_marked = true;
              vn.lcp_mark_session = t.session;
              consume();
            }
          } else if (qp->n >= 2) {
            res.value = kResLarger;
            if (c.try_send(k, Dir::Ccw, res)) {
              qp->n = 0;
              drop_empty(vn);
            }
          }
          break;
        }
        if (merged_last) {
          Token res{};
          res.kind = kLenResult;
          res.session = t.session;
          res.aux = 1;
          res.value = kResSmaller;
          if (c.try_send(k, Dir::Ccw, res)) consume();
          break;
        }
        if (qp->n >= 2) {
          // Advance by consuming the follower behind the lead.
          Token advanced = t;
          advanced.flags |= qp->tok[1].flags & kFlagLast;
          Ctx::Ref succ = c.ring_nbr(k, Dir::Cw);
          if (!succ.vn->pledged)
            throw InvariantViolation("length train ran into a free v-node");
          Token adj = advanced;
          if (succ.vn->is_tail) adj.lane++;
          if (adj.lane > 1) throw InvariantViolation("length-train lead overran the segment");
          if (has_space(*succ.vn, slot_key(kLen, adj.lane))) {
            push_token(*succ.vn, slot_key(kLen, adj.lane), adj);
            qp->n = 0;  // the lead moved on, the follower was consumed
            drop_empty(vn);
          }
        }
        break;
      }

      case kLenResult: {
        sweep_own(vn, slot_key(kLen, 1), t.session);
        if (vn.is_head && t.aux == 0) {
          sweep_own(vn, slot_key(kLen, 0), t.session);
          if (t.session == vn.session && vn.att == Att::LenWait && vn.len_result == 0)
            vn.len_result = t.value;
          consume();
          break;
        }
        forward();
        break;
      }

      case kCntCreate: {
        sweep_stale(vn, slot_key(kCnt, 0), t.session);
        if (!has_space(vn, slot_key(kCnt, 0))) break;
        Token gen{};
        gen.kind = kCnt;
        gen.value = vn.count;
        gen.session = t.session;
        gen.flags = vn.is_tail ? kFlagLast : 0;
        push_token(vn, slot_key(kCnt, 0), gen);
        if (vn.is_tail) consume();
        else forward();
        break;
      }

      case kCnt:
        if (vn.is_head) break;  // parked; compare_label consumes it
        forward();
        break;

      case kRevOrder: {
        if (vn.lcp_marked && vn.lcp_mark_session != t.session) vn.lcp_marked = false;
        sweep_stale(vn, slot_key(kRevOut, 0), t.session);
        sweep_stale(vn, slot_key(kRev, 0), t.session);
        if (!has_space(vn, slot_key(kRevOut, 0))) break;
        Token gen{};
        gen.kind = kRevOut;
        gen.value = vn.count;
        gen.session = t.session;
        gen.flags = (vn.lcp_marked ? kFlagLead : 0) | (vn.is_tail ? kFlagLast : 0);
        push_token(vn, slot_key(kRevOut, 0), gen);
        if (vn.lcp_marked || vn.is_head) consume();  // sweep ends at the mark
        else forward();
        break;
      }

      case kRevOut: {
        if (vn.lcp_marked && vn.lcp_mark_session == t.session) {
          Token turned = t;
          turned.kind = kRev;
          if (has_space(vn, slot_key(kRev, 0))) {
            push_token(vn, slot_key(kRev, 0), turned);
            consume();
          }
          break;
        }
        if (vn.is_head) {  // mark vanished: die
          consume();
          break;
        }
        forward();
        break;
      }

      case kRev:
        if (vn.is_tail) break;  // parked for the predecessor's head
        forward();
        break;

      case kClean: {
        sweep_own(vn, slot_key(kRevOut, 0), t.session);
        sweep_own(vn, slot_key(kRev, 0), t.session);
        if (vn.lcp_marked &&
            static_cast<int8_t>(vn.lcp_mark_session - t.session) <= 0) {
          bool own = vn.lcp_mark_session == t.session;
          vn.lcp_marked = false;
          if (own) {
            consume();
            break;
          }
        }
        if (vn.is_head) {
          consume();
          break;
        }
        forward();
        break;
      }

      case kLock: {
        if (vn.is_tail) {
          Token reply{};
          reply.session = t.session;
          reply.kind = vn.defector ? kUnsuccessful : kDisband;
          if (c.try_send(k, Dir::Cw, reply)) {
            if (!vn.defector) vn.locked = true;
            consume();
          }
          break;
        }
        forward();
        break;
      }

      case kUnlock: {
        if (vn.is_tail) {
          Token reply{};
          reply.kind = kAck;
          reply.session = t.session;
          if (c.try_send(k, Dir::Cw, reply)) {
            vn.locked = false;
            consume();
          }
          break;
        }
        forward();
        break;
      }

      case kDisband:
      case kUnsuccessful:
      case kAck: {
        if (vn.is_head) {
          if (t.session == vn.session) {
            if (kind == kAck && vn.att == Att::UnlockWait) vn.lock_reply = kAck;
            if (kind != kAck && vn.att == Att::LockWait) vn.lock_reply = static_cast<int8_t>(kind);
          }
          consume();
          break;
        }
        forward();
        break;
      }

      case kSumCreate: {
        sweep_stale(vn, slot_key(kPos, 0), t.session);
        sweep_stale(vn, slot_key(kNeg, 0), t.session);
        if (!has_space(vn, slot_key(kPos, 0)) || !has_space(vn, slot_key(kNeg, 0))) break;
        Token pos{};
        pos.kind = kPos;
        pos.value = std::max<int8_t>(vn.count, 0);
        pos.session = t.session;
        pos.flags = vn.is_tail ? kFlagLast : 0;
        Token neg = pos;
        neg.kind = kNeg;
        neg.value = std::min<int8_t>(vn.count, 0);
        push_token(vn, slot_key(kPos, 0), pos);
        push_token(vn, slot_key(kNeg, 0), neg);
        if (vn.is_tail) consume();
        else forward();
        break;
      }

      case kPos:
      case kNeg:
        if (vn.is_head) {
          if (t.session != vn.session) consume();  // cancelled-run straggler
          break;  // parked; sum_step merges and decides
        }
        forward();
        break;

      case kStCreate: {
        uint8_t parity = parity_of(t);
        sweep_stale(vn, slot_key(kStLen, 7 * parity), t.session);
        if (!has_space(vn, slot_key(kStLen, 7 * parity))) break;
        Token gen{};
        gen.kind = kStLen;
        gen.session = t.session;
        gen.flags = (t.flags & kFlagParity) | (vn.is_tail ? kFlagLead : 0);
        if (vn.is_tail) gen.aux = t.aux;
        push_token(vn, slot_key(kStLen, 7 * parity), gen);
        if (vn.is_tail) consume();
        else forward();
        break;
      }

      case kStLen: {
        uint8_t parity = parity_of(t);
        uint8_t lane = static_cast<uint8_t>(key % 16 % 7);
        if (!(t.flags & kFlagLead)) {
          forward();
          break;
        }
        if (qp->n >= 2 && qp->tok[1].session != t.session) {
          if (static_cast<int8_t>(t.session - qp->tok[1].session) < 0) consume();
          else {
            qp->tok[1] = Token{};
            qp->n = 1;
          }
          break;
        }
        auto fail = [&](bool whole_queue) {
          Token res{};
          res.kind = kStResult;
          res.session = t.session;
          res.flags = t.flags & kFlagParity;
          res.aux = lane;
          res.value = st_pack(t.aux, kOutcomeFail);
          if (c.try_send(k, Dir::Cw, res)) {
            if (whole_queue) {
              qp->n = 0;
              drop_empty(vn);
            } else {
              consume();
            }
          }
        };
        if (lane < t.aux) {
          Ctx::Ref pred = c.ring_nbr(k, Dir::Ccw);
          if (!pred.vn->pledged) {
            fail(false);  // the chain of segments is broken
            break;
          }
          forward();
          break;
        }
        // Inside the target segment.
        bool merged_last = (t.flags & kFlagLast) != 0;
        if (vn.is_tail) {
          if (merged_last) {
            // Lengths match: mark this tail, build the reversed label train
            // and summon the initiator's count stream.
            if (!has_space(vn, slot_key(kStRevOrder, 0)) ||
                !has_space(vn, slot_key(kStBeginCnt, 0)))
              break;
            Token order{};
            order.kind = kStRevOrder;
            order.session = t.session;
            order.aux = t.aux;
            order.flags = t.flags & kFlagParity;
            Token begin{};
            begin.kind = kStBeginCnt;
            begin.session = t.session;
            begin.aux = t.aux;   // homing countdown over tails
            begin.lane = t.aux;  // remembers the probe index
            begin.flags = t.flags & kFlagParity;
            push_token(vn, slot_key(kStRevOrder, 0), order);
            push_token(vn, slot_key(kStBeginCnt, 0), begin);
            vn.stab_marks |= static_cast<uint8_t>(1u << t.aux);
            consume();
            break;
          }
          if (qp->n >= 2) fail(true);  // initiator longer than the target
          break;
        }
        if (merged_last) {
          fail(false);  // exhausted early: initiator shorter
          break;
        }
        if (qp->n >= 2) {
          Token advanced = t;
          advanced.flags |= qp->tok[1].flags & kFlagLast;
          Ctx::Ref pred = c.ring_nbr(k, Dir::Ccw);
          if (!pred.vn->pledged) {
            fail(true);
            break;
          }
          Token adj = advanced;
          adj.lane = lane;
          if (pred.vn->is_head) adj.lane++;
          if (adj.lane > 6) {
            fail(true);
            break;
          }
          uint16_t nkey = slot_key(kStLen, adj.lane % 7 + 7 * parity);
          if (has_space(*pred.vn, nkey)) {
            push_token(*pred.vn, nkey, adj);
            qp->n = 0;
            drop_empty(vn);
          }
        }
        break;
      }

      case kStBeginCnt: {
        if (vn.is_tail && t.aux == 0) {
          if (!has_space(vn, slot_key(kStCntCreate, 0))) break;
          Token create{};
          create.kind = kStCntCreate;
          create.session = t.session;
          create.aux = t.lane;  // the probe index: where the stream parks
          create.flags = t.flags & kFlagParity;
          push_token(vn, slot_key(kStCntCreate, 0), create);
          consume();
          break;
        }
        forward();
        break;
      }

      case kStCntCreate: {
        uint8_t parity = parity_of(t);
        sweep_stale(vn, slot_key(kStCnt, 7 * parity), t.session);
        if (!has_space(vn, slot_key(kStCnt, 7 * parity))) break;
        Token gen{};
        gen.kind = kStCnt;
        gen.value = vn.count;
        gen.session = t.session;
        gen.aux = t.aux;
        gen.flags = (t.flags & kFlagParity) | (vn.is_tail ? kFlagLead : 0) |
                    (vn.is_head ? kFlagLast : 0);
        push_token(vn, slot_key(kStCnt, 7 * parity), gen);
        if (vn.is_head) consume();
        else forward();
        break;
      }

      case kStCnt: {
        uint8_t lane = static_cast<uint8_t>(key % 16 % 7);
        if (vn.is_head && lane == t.aux && lane >= 1) break;  // parked at the target
        forward();
        break;
      }

      case kStRevOrder: {
        uint8_t parity = parity_of(t);
        sweep_stale(vn, slot_key(kStRevOut, t.aux % 7 + 7 * parity), t.session);
        sweep_stale(vn, slot_key(kStRev, t.aux % 7 + 7 * parity), t.session);
        if (!has_space(vn, slot_key(kStRevOut, t.aux % 7 + 7 * parity))) break;
        Token gen{};
        gen.kind = kStRevOut;
        gen.value = vn.count;
        gen.session = t.session;
        gen.aux = t.aux;
        gen.flags = (t.flags & kFlagParity) | (vn.is_tail ? kFlagLead : 0) |
                    (vn.is_head ? kFlagLast : 0);
        push_token(vn, slot_key(kStRevOut, t.aux % 7 + 7 * parity), gen);
        if (vn.is_head) consume();
        else forward();
        break;
      }

      case kStRevOut: {
        if (vn.is_tail) {
          Token turned = t;
          turned.kind = kStRev;
          uint16_t nkey = Ctx::recv_key(turned);
          if (has_space(vn, nkey)) {
            push_token(vn, nkey, turned);
            consume();
          }
          break;
        }
        forward();
        break;
      }

      case kStRev:
        if (vn.is_head) break;  // parked; compare_stability reads it
        forward();
        break;

      case kStResult: {
        uint8_t parity = parity_of(t);
        sweep_own(vn, slot_key(kStLen, t.aux % 7 + 7 * parity), t.session);
        sweep_own(vn, slot_key(kStCnt, t.aux % 7 + 7 * parity), t.session);
        if (vn.is_head && t.aux == 0) {
          if (t.session == vn.stab_session && vn.stab_j != 0 && vn.stab_result == 0)
            vn.stab_result = t.value;
          consume();
          break;
        }
        forward();
        break;
      }

      case kStClean: {
        uint8_t parity = parity_of(t);
        uint8_t cross = static_cast<uint8_t>(t.value);
        sweep_own(vn, slot_key(kStLen, cross % 7 + 7 * parity), t.session);
        sweep_own(vn, slot_key(kStCnt, cross % 7 + 7 * parity), t.session);
        sweep_own(vn, slot_key(kStRevOut, cross % 7 + 7 * parity), t.session);
        sweep_own(vn, slot_key(kStRev, cross % 7 + 7 * parity), t.session);
        if (vn.is_tail && cross >= 1 && cross <= 6)
          vn.stab_marks &= static_cast<uint8_t>(~(1u << cross));
        if ((vn.is_tail && cross >= t.aux) || cross > 6) {
          consume();
          break;
        }
        forward();
        break;
      }

      case kCancelInform: {
        uint8_t cross = static_cast<uint8_t>(t.value);
        if (vn.is_head && cross >= 1 && cross <= 6 && (t.aux & (1u << cross)) != 0 &&
            vn.stab_j != 0) {
          // A compared segment is disbanding: abort the running check.
          vn.stab_j = 0;
          vn.stab_result = 0;
          vn.stab_session++;
        }
        bool more = false;
        for (uint8_t b = static_cast<uint8_t>(cross + 1); b <= 6; ++b)
          if (t.aux & (1u << b)) more = true;
        if ((vn.is_head && !more) || cross > 6) {
          consume();
          break;
        }
        forward();
        break;
      }

      case kCancelPurge: {
        uint8_t cross = static_cast<uint8_t>(t.value);
        uint8_t min_mark = 7;
        for (uint8_t mbit = 1; mbit <= 6; ++mbit) {
          if (!(t.aux & (1u << mbit))) continue;
          min_mark = std::min(min_mark, mbit);
          uint8_t lane = static_cast<uint8_t>(mbit + cross);
          if (lane > 6) continue;
          for (uint8_t parity = 0; parity <= 1; ++parity) {
            purge_key(vn, slot_key(kStLen, lane % 7 + 7 * parity));
            purge_key(vn, slot_key(kStCnt, lane % 7 + 7 * parity));
            purge_key(vn, slot_key(kStRev, lane % 7 + 7 * parity));
            purge_key(vn, slot_key(kStRevOut, lane % 7 + 7 * parity));
          }
        }
        // The deepest probe crossing this tail reaches at most 6 - min_mark
        // segments beyond it.
        if (min_mark > 6 || cross >= 6 - min_mark) {
          consume();
          break;
        }
        forward();
        break;
      }

      case kOuter: {
        vn.outer_flag = 1;
        if (vn.is_head && vn.stable && vn.sum_val > 0 &&
            t.value >= static_cast<int8_t>(vn.stab_k)) {
          // Full loop completed: every outer v-node knows. Announce.
          consume();
          if (!c.m.flood) {
            c.m.flood = true;
            c.v.emit(Json{{"ev", "flood_start"}});
          }
          break;
        }
        forward();
        break;
      }

      default:
        consume();
        break;
    }
  }
}

void finalize_particle(Ctx& c) {
  Memory& m = c.m;
  for (int i = 0; i < 6; ++i) m.outer_out[i] = false;
  for (int k = 0; k < m.nv; ++k) {
    const VNodeState& vn = m.vn[k];
    if (vn.outer_flag == 1) {
      for (int i = 0, d = vn.i_f; i < vn.ports(); ++i, d = (d + 1) % 6)
        m.outer_out[d] = true;
    }
  }
  m.done = true;
  c.v.emit(Json{{"ev", "obd_done"}});
}

}  // namespace

}  // namespace obd

Move ObdAlgo::step(ParticleView<ObdAlgo>& v) {
  obd::Memory& m = v.mem();
  obd::Ctx c{v, m};
  if (!m.inited) {
    obd::init_particle(c);
    if (m.done) return Move::none();
  }
  // The ring machinery needs every neighbor's v-node layout; hold until the
  // whole neighborhood has gone through its first activation.
  for (int port = 0; port < 6; ++port)
    if (v.occupied(port) && !v.nbr_mem_ro(port).inited) return Move::none();
  if (!m.flood) {
    for (int port = 0; port < 6 && !m.flood; ++port)
      if (v.occupied(port) && v.nbr_mem_ro(port).flood) m.flood = true;
  }
  if (!m.flood) {
    for (int k = 0; k < m.nv; ++k) {
      obd::defector_step(c, k);
      obd::conductor_step(c, k);
      obd::compare_label(c, k);
      obd::compare_stability(c, k);
      obd::sum_step(c, k);
      obd::pump_vnode(c, k);
    }
  }
  if (m.flood && !m.done) obd::finalize_particle(c);
  return Move::none();
}

Json ObdAlgo::mem_json(const Memory& m) {
  Json vns = Json::array();
  for (int k = 0; k < m.nv; ++k) {
    const obd::VNodeState& vn = m.vn[k];
    Json slots = Json::array();
    for (const auto& q : vn.slots) {
      if (q.n == 0) continue;
      Json toks = Json::array();
      for (uint8_t i = 0; i < q.n; ++i)
        toks.push_back(Json::array({q.tok[i].kind, q.tok[i].value, q.tok[i].flags,
                                    q.tok[i].lane, q.tok[i].session, q.tok[i].aux}));
      slots.push_back(Json::array({q.key, toks}));
    }
    vns.push_back(Json{{"f", vn.i_f},
                       {"l", vn.i_l},
                       {"c", vn.count},
                       {"pl", vn.pledged ? 1 : 0},
                       {"hd", vn.is_head ? 1 : 0},
                       {"tl", vn.is_tail ? 1 : 0},
                       {"df", vn.defector ? 1 : 0},
                       {"lk", vn.locked ? 1 : 0},
                       {"mk", vn.lcp_marked ? 1 : 0},
                       {"sm", vn.stab_marks},
                       {"of", vn.outer_flag},
                       {"st", vn.stable ? 1 : 0},
                       {"q", slots}});
  }
  Json out = Json::array();
  for (int i = 0; i < 6; ++i) out.push_back(m.outer_out[i] ? 1 : 0);
  return Json{{"done", m.done}, {"flood", m.flood}, {"out", out}, {"vn", vns}};
}

namespace obd {

std::vector<std::vector<RingNodeRef>> map_rings(const Shape& shape, const Config<Memory>& cfg) {
  auto vr = vnode_rings(shape);
  std::vector<std::vector<RingNodeRef>> out;
  for (const auto& ring : vr.rings) {
    std::vector<RingNodeRef> refs;
    for (const auto& node : ring.nodes) {
      int id = cfg.id_at(node.owner);
      if (id < 0) throw std::logic_error("ring point unoccupied");
      const auto& p = cfg.particles[id];
      int first_port = p.to_port(node.boundary.first);
      int idx = -1;
      for (int k = 0; k < p.mem.nv; ++k)
        if (p.mem.vn[k].i_f == first_port) idx = k;
      if (idx < 0) throw std::logic_error("simulated v-node missing");
      refs.push_back(RingNodeRef{id, idx});
    }
    out.push_back(std::move(refs));
  }
  return out;
}

bool ring_stable(const Config<Memory>& cfg, const std::vector<RingNodeRef>& ring,
                 std::vector<std::vector<int>>* labels_out) {
  const size_t n = ring.size();
  auto vn_at = [&](size_t i) -> const VNodeState& {
    return cfg.particles[static_cast<size_t>(ring[i].particle)].mem.vn[ring[i].vn_index];
  };
  size_t tails = 0;
  for (size_t i = 0; i < n; ++i) {
    const VNodeState& vn = vn_at(i);
    if (!vn.pledged || vn.defector) return false;
    tails += vn.is_tail ? 1 : 0;
  }
  if (tails == 0) return false;
  size_t start = 0;
  while (!vn_at(start).is_tail) ++start;
  std::vector<std::vector<int>> labels;
  std::vector<int> cur;
  for (size_t i = 0; i < n; ++i) {
    const VNodeState& vn = vn_at((start + i) % n);
    if (vn.is_tail && !cur.empty()) return false;
    cur.push_back(vn.count);
    if (vn.is_head) {
      labels.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) return false;
  if (labels_out) *labels_out = labels;
  for (size_t i = 1; i < labels.size(); ++i)
    if (labels[i] != labels[0]) return false;
  return true;
}

}  // namespace obd

std::vector<std::array<bool, 6>> obd_output_flags(const Config<obd::Memory>& cfg) {
  std::vector<std::array<bool, 6>> out;
  out.reserve(cfg.particles.size());
  for (const auto& p : cfg.particles) out.push_back(p.mem.outer_out);
  return out;
}

std::vector<std::array<bool, 6>> oracle_outer_flags(const Shape& shape,
                                                    const Config<obd::Memory>& cfg) {
  BoundaryAnalysis ba = analyze(shape);
  PointSet holes(ba.hole_points.begin(), ba.hole_points.end());
  std::vector<std::array<bool, 6>> out;
  out.reserve(cfg.particles.size());
  for (const auto& p : cfg.particles) {
    std::array<bool, 6> flags{};
    for (int port = 0; port < 6; ++port) {
      Point u = neighbor(p.head, p.to_global(port));
      flags[port] = !shape.contains(u) && !holes.count(u);
    }
    out.push_back(flags);
  }
  return out;
}

}  // namespace amoebot
