#pragma once

// The amoebot runtime: configurations, atomic activations, legal movements,
// handovers, schedulers and round accounting. Algorithms plug in as step
// functions over a ParticleView; they never see global coordinates or ids.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "amoebot/grid.hpp"
#include "amoebot/rng.hpp"
#include "amoebot/trace.hpp"

namespace amoebot {

// The single movement a step function may request. Ports are local labels of
// the acting particle; for contracted particles head and tail coincide.
struct Move {
  enum class Kind {
    None,
    Expand,                // port: toward an empty point
    ContractHead,
    ContractTail,
    HandoverExpand,        // port: toward a point an expanded neighbor vacates
    HandoverContractHead,  // port (tail anchor): contracted partner pulled into the tail
    HandoverContractTail,  // port (head anchor): contracted partner pulled into the head
  };
  Kind kind = Kind::None;
  int port = -1;

  static Move none() { return {}; }
  static Move expand(int port) { return {Kind::Expand, port}; }
  static Move contract_head() { return {Kind::ContractHead, -1}; }
  static Move contract_tail() { return {Kind::ContractTail, -1}; }
  static Move handover_expand(int port) { return {Kind::HandoverExpand, port}; }
  static Move handover_contract_head(int tail_port) { return {Kind::HandoverContractHead, tail_port}; }
  static Move handover_contract_tail(int head_port) { return {Kind::HandoverContractTail, head_port}; }
};

enum class Anchor { Head, Tail };

// Raised when a step function requests an illegal movement; never swallowed.
struct ModelViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Raised when a step function detects a state its contract rules out.
struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchedulerSpec {
  enum class Policy { RoundRobin, RandomPerm, Replay };
  Policy policy = Policy::RandomPerm;
  uint64_t seed = 1;
  std::vector<int> replay;  // explicit activation list

  static SchedulerSpec round_robin() { return {Policy::RoundRobin, 0, {}}; }
  static SchedulerSpec random(uint64_t seed) { return {Policy::RandomPerm, seed, {}}; }
  static SchedulerSpec replay_list(std::vector<int> ids) {
    return {Policy::Replay, 0, std::move(ids)};
  }
};

struct RunReport {
  int rounds = 0;
  int64_t activations = 0;
  bool terminated = false;
};

template <typename M>
struct Particle {
  Point head;
  Point tail;
  int port_offset = 0;  // local port i leads along global direction (i + offset) % 6
  M mem{};

  bool expanded() const { return !(head == tail); }
  int to_global(int port) const { return (port + port_offset) % 6; }
  int to_port(int gdir) const { return (gdir - port_offset + 6) % 6; }
  Point anchor_point(Anchor a) const { return a == Anchor::Head ? head : tail; }
};

template <typename M>
struct Config {
  std::vector<Particle<M>> particles;
  std::unordered_map<Point, int, PointHash> occupancy;  // point -> particle id

  int id_at(const Point& p) const {
    auto it = occupancy.find(p);
    return it == occupancy.end() ? -1 : it->second;
  }

  PointSet occupied_points() const {
    PointSet s;
    for (const auto& [p, id] : occupancy) s.insert(p);
    return s;
  }
};

// One contracted particle per shape point; port offsets are the only
// randomness and preserve the global clockwise chirality.
template <typename M>
Config<M> load_config(const Shape& shape, uint64_t seed) {
  if (shape.empty()) throw std::invalid_argument("load: empty shape");
  if (!is_connected(shape.point_set())) throw std::invalid_argument("load: disconnected shape");
  Config<M> cfg;
  std::vector<Point> pts = shape.points();
  std::sort(pts.begin(), pts.end());
  Rng rng(seed ^ 0xa5a5a5a5a5a5a5a5ULL);
  for (const Point& p : pts) {
    Particle<M> part;
    part.head = part.tail = p;
    part.port_offset = static_cast<int>(rng.below(6));
    cfg.occupancy[p] = static_cast<int>(cfg.particles.size());
    cfg.particles.push_back(std::move(part));
  }
  return cfg;
}

template <typename A>
class Sim;

// The read/write window an activated particle gets: its own memory, and per
// (anchor, port) the adjacent point's occupancy plus the occupant's memory,
// expansion flag and the port the occupant assigns to the shared edge.
template <typename A>
class ParticleView {
 public:
  using M = typename A::Memory;

  M& mem() { return sim_->cfg_.particles[id_].mem; }
  const M& mem() const { return sim_->cfg_.particles[id_].mem; }
  bool expanded() const { return self().expanded(); }

  bool occupied(Anchor a, int port) const { return nbr_id(a, port) >= 0; }
  bool self_at(Anchor a, int port) const {
    return expanded() && adj(a, port) == self().anchor_point(opposite_anchor(a));
  }
  bool empty_at(Anchor a, int port) const { return !occupied(a, port) && !self_at(a, port); }

  bool nbr_expanded(Anchor a, int port) const { return nbr(a, port).expanded(); }
  // True when the adjacent occupied point is that neighbor's head.
  bool nbr_at_head(Anchor a, int port) const { return nbr(a, port).head == adj(a, port); }
  // Port the neighbor assigns to the shared edge, from its side.
  int nbr_port(Anchor a, int port) const {
    const auto& q = nbr(a, port);
    Point mine = self().anchor_point(a);
    Point theirs = adj(a, port);
    for (int d = 0; d < 6; ++d)
      if (neighbor(theirs, d) == mine) return q.to_port(d);
    throw std::logic_error("nbr_port: not adjacent");
  }
  typename A::Memory& nbr_mem(Anchor a, int port) {
    int nid = nbr_id(a, port);
    sim_->note_touch(nid);
    return sim_->cfg_.particles[nid].mem;
  }
  const typename A::Memory& nbr_mem_ro(Anchor a, int port) const {
    return sim_->cfg_.particles[nbr_id(a, port)].mem;
  }

  // Contracted-particle conveniences (head == tail).
  bool occupied(int port) const { return occupied(Anchor::Head, port); }
  bool empty_at(int port) const { return empty_at(Anchor::Head, port); }
  typename A::Memory& nbr_mem(int port) { return nbr_mem(Anchor::Head, port); }
  const typename A::Memory& nbr_mem_ro(int port) const { return nbr_mem_ro(Anchor::Head, port); }
  bool nbr_expanded(int port) const { return nbr_expanded(Anchor::Head, port); }
  bool nbr_at_head(int port) const { return nbr_at_head(Anchor::Head, port); }
  int nbr_port(int port) const { return nbr_port(Anchor::Head, port); }

  // Trace event hook; a no-op unless an observer asked for events.
  void emit(Json event) const {
    if (sim_->wants_events_) sim_->pending_events_.push_back(std::move(event));
  }

 private:
  friend class Sim<A>;
  ParticleView(Sim<A>* sim, int id) : sim_(sim), id_(id) {}

  static Anchor opposite_anchor(Anchor a) { return a == Anchor::Head ? Anchor::Tail : Anchor::Head; }
  const Particle<M>& self() const { return sim_->cfg_.particles[id_]; }
  Point adj(Anchor a, int port) const {
    return neighbor(self().anchor_point(a), self().to_global(port));
  }
  int nbr_id(Anchor a, int port) const {
    int nid = sim_->cfg_.id_at(adj(a, port));
    return nid == id_ ? -1 : nid;
  }
  const Particle<M>& nbr(Anchor a, int port) const {
    int nid = nbr_id(a, port);
    if (nid < 0) throw std::logic_error("neighbor access on empty point");
    return sim_->cfg_.particles[nid];
  }

  Sim<A>* sim_;
  int id_;
};

// Per-run observer. `on_activation` fires after the activation is applied.
template <typename A>
struct Observer {
  virtual ~Observer() = default;
  virtual bool wants_events() const { return false; }
  virtual void on_activation(const ActivationRecord&, const Sim<A>&) {}
  virtual void on_round(int /*completed_rounds*/, const Sim<A>&) {}
};

// An algorithm A provides:
//   struct Memory;                                  -- constant-size record
//   static Move step(ParticleView<A>&);             -- one atomic activation
//   static bool is_final(const Memory&);            -- final-state predicate
//   static Json mem_json(const Memory&);            -- trace serialization
template <typename A>
class Sim {
 public:
  using M = typename A::Memory;

  explicit Sim(Config<M> cfg) : cfg_(std::move(cfg)) {}

  const Config<M>& config() const { return cfg_; }
  Config<M>& config() { return cfg_; }
  int particle_count() const { return static_cast<int>(cfg_.particles.size()); }
  int64_t activations() const { return activation_index_; }
  int rounds() const { return rounds_; }

  void add_observer(Observer<A>* obs) {
    observers_.push_back(obs);
    wants_events_ = wants_events_ || obs->wants_events();
  }

  // Debug knob: when >0, every touched memory is size-checked after each
  // activation against this serialized-byte budget.
  void set_memory_budget(size_t bytes) { memory_budget_ = bytes; }

  void activate(int id) {
    auto& p = cfg_.particles[id];
    ActivationRecord rec;
    rec.activation_index = activation_index_++;
    rec.round = rounds_;
    rec.particle_id = id;
    touched_.clear();
    pending_events_.clear();
    note_touch(id);

    if (A::is_final(p.mem)) {
      rec.action_kind = "idle";
      finish_record(std::move(rec));
      return;
    }

    ParticleView<A> view(this, id);
    Move mv = A::step(view);
    apply_move(id, mv, rec);

    refresh_finality(rec);
    finish_record(std::move(rec));
  }

  RunReport run(const SchedulerSpec& sched, int max_rounds) {
    if (max_rounds < 1) throw std::invalid_argument("run: max_rounds must be >= 1");
    const int n = particle_count();
    nonfinal_ = 0;
    final_flags_.assign(n, false);
    for (int i = 0; i < n; ++i) {
      final_flags_[i] = A::is_final(cfg_.particles[i].mem);
      if (!final_flags_[i]) ++nonfinal_;
    }
    activated_round_.assign(n, false);
    uncovered_ = nonfinal_;

    Rng rng(sched.seed ^ 0xc0ffee123456789ULL);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    size_t perm_pos = static_cast<size_t>(n);  // force initial shuffle
    size_t replay_pos = 0;
    int rr_next = 0;

    const int64_t activation_cap =
        static_cast<int64_t>(max_rounds) * std::max(n, 1) * 8 + 64;

    RunReport report;
    while (nonfinal_ > 0 && rounds_ < max_rounds) {
      int id = -1;
      switch (sched.policy) {
        case SchedulerSpec::Policy::RoundRobin:
          id = rr_next;
          rr_next = (rr_next + 1) % n;
          break;
        case SchedulerSpec::Policy::RandomPerm:
          if (perm_pos >= perm.size()) {
            for (int i = n - 1; i > 0; --i)
              std::swap(perm[i], perm[rng.below(static_cast<uint64_t>(i) + 1)]);
            perm_pos = 0;
          }
          id = perm[perm_pos++];
          break;
        case SchedulerSpec::Policy::Replay:
          if (replay_pos >= sched.replay.size()) {
            report.rounds = rounds_;
            report.activations = activation_index_;
            report.terminated = false;
            return report;
          }
          id = sched.replay[replay_pos++];
          if (id < 0 || id >= n) throw std::invalid_argument("replay: bad particle id");
          break;
      }
      activate(id);
      if (!activated_round_[id]) {
        activated_round_[id] = true;
        if (!final_flags_[id]) --uncovered_;
      }
      if (uncovered_ == 0) {
        ++rounds_;
        std::fill(activated_round_.begin(), activated_round_.end(), false);
        uncovered_ = nonfinal_;
        for (auto* obs : observers_) obs->on_round(rounds_, *this);
      }
      if (activation_index_ > activation_cap) break;  // starvation guard
    }
    report.rounds = rounds_;
    report.activations = activation_index_;
    report.terminated = nonfinal_ == 0;
    return report;
  }

 private:
  friend class ParticleView<A>;

  void note_touch(int id) {
    for (int t : touched_)
      if (t == id) return;
    touched_.push_back(id);
  }

  Point port_target(const Particle<M>& p, Anchor a, int port) const {
    return neighbor(p.anchor_point(a), p.to_global(port));
  }

  void apply_move(int id, const Move& mv, ActivationRecord& rec) {
    auto& p = cfg_.particles[id];
    switch (mv.kind) {
      case Move::Kind::None:
        rec.action_kind = "none";
        return;

      case Move::Kind::Expand: {
        require(!p.expanded(), "expand by expanded particle");
        Point t = port_target(p, Anchor::Head, mv.port);
        require(cfg_.id_at(t) < 0, "expand into occupied point");
        rec.action_kind = "expand";
        rec.moved_from = p.head;
        rec.moved_to = t;
        p.head = t;
        cfg_.occupancy[t] = id;
        return;
      }

      case Move::Kind::ContractHead:
      case Move::Kind::ContractTail: {
        require(p.expanded(), "contract by contracted particle");
        bool to_head = mv.kind == Move::Kind::ContractHead;
        Point keep = to_head ? p.head : p.tail;
        Point vacate = to_head ? p.tail : p.head;
        rec.action_kind = to_head ? "contract_head" : "contract_tail";
        rec.moved_from = vacate;
        rec.moved_to = keep;
        cfg_.occupancy.erase(vacate);
        p.head = p.tail = keep;
        return;
      }

      case Move::Kind::HandoverExpand: {
        require(!p.expanded(), "handover expand by expanded particle");
        Point t = port_target(p, Anchor::Head, mv.port);
        int qid = cfg_.id_at(t);
        require(qid >= 0 && qid != id, "handover expand into empty point");
        auto& q = cfg_.particles[qid];
        require(q.expanded(), "handover expand into contracted neighbor");
        rec.action_kind = "handover_expand";
        rec.partner_id = qid;
        if (q.head == t) {
          rec.partner_from = q.head;
          rec.partner_to = q.tail;
          q.head = q.tail;
        } else {
          rec.partner_from = q.tail;
          rec.partner_to = q.head;
          q.tail = q.head;
        }
        rec.moved_from = p.head;
        rec.moved_to = t;
        p.head = t;
        cfg_.occupancy[t] = id;
        return;
      }

      case Move::Kind::HandoverContractHead:
      case Move::Kind::HandoverContractTail: {
        require(p.expanded(), "handover contract by contracted particle");
        bool to_head = mv.kind == Move::Kind::HandoverContractHead;
        Anchor vac_anchor = to_head ? Anchor::Tail : Anchor::Head;
        Point vacate = p.anchor_point(vac_anchor);
        Point keep = p.anchor_point(to_head ? Anchor::Head : Anchor::Tail);
        Point partner_pt = port_target(p, vac_anchor, mv.port);
        int qid = cfg_.id_at(partner_pt);
        require(qid >= 0 && qid != id, "handover contract without partner");
        auto& q = cfg_.particles[qid];
        require(!q.expanded(), "handover contract with expanded partner");
        rec.action_kind = to_head ? "handover_contract_head" : "handover_contract_tail";
        rec.moved_from = vacate;
        rec.moved_to = keep;
        rec.partner_id = qid;
        rec.partner_from = q.head;
        rec.partner_to = vacate;
        p.head = p.tail = keep;
        q.head = vacate;
        cfg_.occupancy[vacate] = qid;
        return;
      }
    }
  }

  static void require(bool ok, const char* what) {
    if (!ok) throw ModelViolation(std::string("model violation: ") + what);
  }

  void refresh_finality(ActivationRecord& rec) {
    if (final_flags_.empty()) return;  // plain activate() outside run()
    for (int id : touched_) {
      bool now = A::is_final(cfg_.particles[id].mem);
      if (now && !final_flags_[id]) {
        final_flags_[id] = true;
        --nonfinal_;
        if (!activated_round_[id]) --uncovered_;
      } else if (!now && final_flags_[id]) {
        throw InvariantViolation("final particle became non-final");
      }
    }
    rec.touched = touched_;
  }

  void finish_record(ActivationRecord rec) {
    rec.touched = touched_;
    rec.events = std::move(pending_events_);
    if (memory_budget_ > 0) {
      for (int id : rec.touched) {
        auto cbor = Json::to_cbor(A::mem_json(cfg_.particles[id].mem));
        if (cbor.size() > memory_budget_)
          throw InvariantViolation("particle memory exceeds serialized-size budget: " +
                                   std::to_string(cbor.size()) + " bytes");
      }
    }
    for (auto* obs : observers_) obs->on_activation(rec, *this);
    pending_events_.clear();
  }

  Config<M> cfg_;
  std::vector<Observer<A>*> observers_;
  bool wants_events_ = false;
  mutable std::vector<Json> pending_events_;
  std::vector<int> touched_;
  std::vector<bool> final_flags_;
  std::vector<bool> activated_round_;
  int nonfinal_ = 0;
  int uncovered_ = 0;
  int rounds_ = 0;
  int64_t activation_index_ = 0;
  size_t memory_budget_ = 0;
};

// JSONL tracing observer. Each record carries the post-activation memories of
// every touched particle so traces can be replayed without the algorithm.
template <typename A>
class JsonlTraceObserver : public Observer<A> {
 public:
  JsonlTraceObserver(JsonlFile* file, bool snapshots) : file_(file), snapshots_(snapshots) {}

  bool wants_events() const override { return true; }

  void on_activation(const ActivationRecord& rec, const Sim<A>& sim) override {
    Json j;
    j["activation_index"] = rec.activation_index;
    j["round"] = rec.round;
    j["particle_id"] = rec.particle_id;
    j["action_kind"] = rec.action_kind;
    j["moved_from"] = rec.moved_from ? point_json(*rec.moved_from) : Json();
    j["moved_to"] = rec.moved_to ? point_json(*rec.moved_to) : Json();
    if (rec.partner_id >= 0) {
      j["partner_id"] = rec.partner_id;
      j["partner_from"] = point_json(*rec.partner_from);
      j["partner_to"] = point_json(*rec.partner_to);
    }
    Json mems = Json::object();
    for (int id : rec.touched)
      mems[std::to_string(id)] = A::mem_json(sim.config().particles[id].mem);
    j["mem"] = std::move(mems);
    if (!rec.events.empty()) j["events"] = rec.events;
    file_->write(j);
  }

  void on_round(int completed, const Sim<A>& sim) override {
    if (!snapshots_) return;
    Json parts = Json::array();
    for (size_t i = 0; i < sim.config().particles.size(); ++i) {
      const auto& p = sim.config().particles[i];
      parts.push_back(Json{{"id", i},
                           {"head", point_json(p.head)},
                           {"tail", point_json(p.tail)},
                           {"offset", p.port_offset}});
    }
    file_->write(Json{{"snapshot", true}, {"round", completed}, {"particles", parts}});
  }

 private:
  JsonlFile* file_;
  bool snapshots_;
};

}  // namespace amoebot
