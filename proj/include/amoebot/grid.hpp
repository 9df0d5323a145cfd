#pragma once

// Triangular-grid geometry: points, shapes, boundary/hole analysis, virtual
// boundary rings, erodability classification and distance metrics. Everything
// here is pure and value-based; the simulation modules are tested against it
// but never read it at runtime.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace amoebot {

// Lattice site in axial coordinates.
struct Point {
  int q = 0;
  int r = 0;

  friend bool operator==(const Point& a, const Point& b) { return a.q == b.q && a.r == b.r; }
  friend bool operator!=(const Point& a, const Point& b) { return !(a == b); }
  friend bool operator<(const Point& a, const Point& b) {
    return a.r != b.r ? a.r < b.r : a.q < b.q;
  }
};

struct PointHash {
  size_t operator()(const Point& p) const {
    uint64_t x = (static_cast<uint64_t>(static_cast<uint32_t>(p.q)) << 32) |
                 static_cast<uint32_t>(p.r);
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<size_t>(x);
  }
};

using PointSet = std::unordered_set<Point, PointHash>;

// The six edge directions in fixed clockwise order. Index 0 is "west" of the
// internal embedding; particles never see these global labels.
inline constexpr std::array<Point, 6> kDirOffsets = {{
    {-1, 0},  // W
    {0, -1},  // NW
    {1, -1},  // NE
    {1, 0},   // E
    {0, 1},   // SE
    {-1, 1},  // SW
}};

inline int dir_succ(int d) { return (d + 1) % 6; }          // clockwise successor
inline int dir_pred(int d) { return (d + 5) % 6; }          // clockwise predecessor
inline int dir_opposite(int d) { return (d + 3) % 6; }

inline Point neighbor(const Point& p, int dir) {
  return {p.q + kDirOffsets[dir].q, p.r + kDirOffsets[dir].r};
}

// Hex (grid) distance between two lattice sites.
inline int grid_distance(const Point& a, const Point& b) {
  int dq = a.q - b.q;
  int dr = a.r - b.r;
  int ds = -(dq + dr);
  int aq = dq < 0 ? -dq : dq;
  int ar = dr < 0 ? -dr : dr;
  int as = ds < 0 ? -ds : ds;
  return (aq + ar + as) / 2;
}

// Finite point set. Analysis results are functions of the set only.
class Shape {
 public:
  Shape() = default;
  explicit Shape(std::vector<Point> pts);

  bool contains(const Point& p) const { return set_.count(p) != 0; }
  size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  // Points in deterministic (row-major) order.
  const std::vector<Point>& points() const { return points_; }
  const PointSet& point_set() const { return set_; }

  void add(const Point& p);

 private:
  std::vector<Point> points_;
  PointSet set_;
};

// A maximal clockwise cyclic interval of a point's edges leading out of the
// shape. `first`/`last` are edge direction indices; `size` is the number of
// edges in the interval (6 for an isolated point).
struct LocalBoundary {
  int first = 0;
  int last = 0;
  int size = 0;

  int count() const { return size - 2; }
  bool contains_dir(int d) const {
    for (int i = 0, e = first; i < size; ++i, e = dir_succ(e))
      if (e == d) return true;
    return false;
  }
};

// Splits the cyclic 6-bit pattern `edge_out` (true = edge leads out of the
// set) into maximal clockwise runs. Used both by the oracle and, on the
// 1-hop eligibility pattern, by the leader-election step function.
std::vector<LocalBoundary> local_boundary_runs(const std::array<bool, 6>& edge_out);

struct BoundaryAnalysis {
  bool connected = false;
  std::vector<Point> outer_boundary;              // sorted
  std::vector<std::vector<Point>> inner_boundaries;  // one per hole, sorted
  std::vector<Point> hole_points;                 // sorted, all holes merged
  std::vector<std::vector<Point>> holes;          // per-hole point sets, sorted
  std::vector<Point> area;                        // points ∪ hole_points, sorted
  int l_out = 0;
  int l_max = 0;
};

// Classifies the complement by flood fill from outside a 1-padded bounding
// box: unoccupied regions not reached are holes. Rejects empty shapes.
BoundaryAnalysis analyze(const Shape& shape);

// One virtual ring node: a point together with one of its local boundaries.
struct VNode {
  Point owner;
  LocalBoundary boundary;

  int count() const { return boundary.count(); }
  friend bool operator==(const VNode& a, const VNode& b) {
    return a.owner == b.owner && a.boundary.first == b.boundary.first &&
           a.boundary.size == b.boundary.size;
  }
};

struct VNodeRing {
  std::vector<VNode> nodes;  // successor order: nodes[i+1] is the clockwise successor
  int count_sum = 0;
  bool outer = false;        // count_sum == +6
};

struct VNodeRings {
  std::vector<VNodeRing> rings;
  // Degenerate nodes of isolated points (boundary of size 6, count 4); they
  // belong to no ring.
  std::vector<VNode> isolated;
};

// The clockwise successor of v's local boundary B: reached through the
// successor of B's last edge; the receiving local boundary is the one
// containing the edge back to B's last unoccupied endpoint.
VNode vnode_successor(const Shape& shape, const VNode& v);

// One oriented ring per global boundary.
VNodeRings vnode_rings(const Shape& shape);

struct PointClass {
  bool redundant = false;
  bool erodable = false;
  bool sce = false;
  std::vector<LocalBoundary> local_boundaries;
};

// Erodable ⇔ a single local boundary that borders the outer face;
// SCE additionally requires a strictly positive boundary count.
PointClass classify(const Shape& shape, const Point& v);

struct Metrics {
  int n = 0;
  int n_area = 0;
  int diameter = 0;        // within the shape graph
  int diameter_area = 0;   // within the area graph, between shape points
  int diameter_grid = 0;   // plain grid distance, between shape points
  std::unordered_map<Point, int, PointHash> grid_eccentricity;
};

// All-pairs BFS metrics. Rejects disconnected shapes.
Metrics metrics(const Shape& shape);

// BFS distances from `src` within `allowed`. Unreachable points are absent.
std::unordered_map<Point, int, PointHash> bfs_distances(const Point& src, const PointSet& allowed);

bool is_connected(const PointSet& pts);

// Shape text format: one "q r" pair per line, '#' starts a comment line.
// Throws std::invalid_argument on malformed lines or duplicate points.
Shape parse_shape_text(const std::string& text);
std::string shape_to_text(const Shape& shape);
Shape load_shape_file(const std::string& path);
void save_shape_file(const Shape& shape, const std::string& path);

}  // namespace amoebot
