#include "amoebot/grid.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace amoebot {

Shape::Shape(std::vector<Point> pts) {
  for (const Point& p : pts) add(p);
}

void Shape::add(const Point& p) {
  if (set_.insert(p).second) points_.push_back(p);
}

std::vector<LocalBoundary> local_boundary_runs(const std::array<bool, 6>& edge_out) {
  std::vector<LocalBoundary> runs;
  int n_out = 0;
  for (bool b : edge_out) n_out += b ? 1 : 0;
  if (n_out == 0) return runs;
  if (n_out == 6) {
    runs.push_back(LocalBoundary{0, 5, 6});
    return runs;
  }
  // Walk clockwise from a direction that is not "out" so runs never wrap past
  // the scan origin.
  int start = 0;
  while (edge_out[start]) start = dir_succ(start);
  int d = start;
  for (int i = 0; i < 6; ++i, d = dir_succ(d)) {
    if (!edge_out[d]) continue;
    if (!runs.empty() && runs.back().last == dir_pred(d)) {
      runs.back().last = d;
      runs.back().size++;
    } else {
      runs.push_back(LocalBoundary{d, d, 1});
    }
  }
  return runs;
}

namespace {

std::array<bool, 6> out_edges(const Shape& shape, const Point& v) {
  std::array<bool, 6> out{};
  for (int d = 0; d < 6; ++d) out[d] = !shape.contains(neighbor(v, d));
  return out;
}

std::vector<Point> sorted(PointSet s) {
  std::vector<Point> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

bool is_connected(const PointSet& pts) {
  if (pts.empty()) return false;
  std::deque<Point> queue{*pts.begin()};
  PointSet seen{*pts.begin()};
  while (!queue.empty()) {
    Point p = queue.front();
    queue.pop_front();
    for (int d = 0; d < 6; ++d) {
      Point u = neighbor(p, d);
      if (pts.count(u) && !seen.count(u)) {
        seen.insert(u);
        queue.push_back(u);
      }
    }
  }
  return seen.size() == pts.size();
}

BoundaryAnalysis analyze(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("analyze: empty shape");

  int qmin = std::numeric_limits<int>::max(), qmax = std::numeric_limits<int>::min();
  int rmin = qmin, rmax = qmax;
  for (const Point& p : shape.points()) {
    qmin = std::min(qmin, p.q);
    qmax = std::max(qmax, p.q);
    rmin = std::min(rmin, p.r);
    rmax = std::max(rmax, p.r);
  }
  qmin -= 1; qmax += 1; rmin -= 1; rmax += 1;

  auto in_box = [&](const Point& p) {
    return p.q >= qmin && p.q <= qmax && p.r >= rmin && p.r <= rmax;
  };

  // Flood the outside region from the padded box border.
  PointSet outside;
  std::deque<Point> queue;
  Point corner{qmin, rmin};
  outside.insert(corner);
  queue.push_back(corner);
  while (!queue.empty()) {
    Point p = queue.front();
    queue.pop_front();
    for (int d = 0; d < 6; ++d) {
      Point u = neighbor(p, d);
      if (!in_box(u) || shape.contains(u) || outside.count(u)) continue;
      outside.insert(u);
      queue.push_back(u);
    }
  }
  // The padded border is one connected rim, so every outside cell of the box
  // is reached from the corner.

  BoundaryAnalysis res;
  res.connected = is_connected(shape.point_set());

  // Hole cells: unoccupied, in the box, not reached from outside.
  PointSet hole_all;
  for (int r = rmin; r <= rmax; ++r) {
    for (int q = qmin; q <= qmax; ++q) {
      Point p{q, r};
      if (!shape.contains(p) && !outside.count(p)) hole_all.insert(p);
    }
  }

  // Split holes into connected components.
  PointSet unassigned = hole_all;
  while (!unassigned.empty()) {
    Point seed = *std::min_element(unassigned.begin(), unassigned.end());
    PointSet comp{seed};
    std::deque<Point> bfs{seed};
    unassigned.erase(seed);
    while (!bfs.empty()) {
      Point p = bfs.front();
      bfs.pop_front();
      for (int d = 0; d < 6; ++d) {
        Point u = neighbor(p, d);
        if (unassigned.count(u)) {
          unassigned.erase(u);
          comp.insert(u);
          bfs.push_back(u);
        }
      }
    }
    res.holes.push_back(sorted(comp));
  }
  std::sort(res.holes.begin(), res.holes.end());

  PointSet outer_b;
  for (const Point& p : shape.points()) {
    for (int d = 0; d < 6; ++d) {
      Point u = neighbor(p, d);
      if (!shape.contains(u) && outside.count(u)) {
        outer_b.insert(p);
        break;
      }
    }
  }
  res.outer_boundary = sorted(outer_b);
  res.l_out = static_cast<int>(res.outer_boundary.size());
  res.l_max = res.l_out;

  for (const auto& hole : res.holes) {
    PointSet hole_set(hole.begin(), hole.end());
    PointSet inner;
    for (const Point& p : shape.points()) {
      for (int d = 0; d < 6; ++d) {
        if (hole_set.count(neighbor(p, d))) {
          inner.insert(p);
          break;
        }
      }
    }
    res.inner_boundaries.push_back(sorted(inner));
    res.l_max = std::max(res.l_max, static_cast<int>(inner.size()));
  }

  PointSet area = shape.point_set();
  for (const auto& hole : res.holes)
    for (const Point& p : hole) {
      hole_all.insert(p);
      area.insert(p);
    }
  res.hole_points = sorted(hole_all);
  res.area = sorted(area);
  return res;
}

VNode vnode_successor(const Shape& shape, const VNode& v) {
  // Common point: the unoccupied endpoint of B's last edge. The successor
  // point is reached through the clockwise successor of that edge.
  Point u = neighbor(v.owner, v.boundary.last);
  int succ_dir = dir_succ(v.boundary.last);
  Point vp = neighbor(v.owner, succ_dir);
  if (!shape.contains(vp))
    throw std::logic_error("vnode_successor: successor point unoccupied");
  // Direction from the successor point back to the common point.
  int back = -1;
  for (int d = 0; d < 6; ++d) {
    if (neighbor(vp, d) == u) {
      back = d;
      break;
    }
  }
  auto runs = local_boundary_runs(out_edges(shape, vp));
  for (const LocalBoundary& b : runs) {
    if (b.contains_dir(back)) return VNode{vp, b};
  }
  throw std::logic_error("vnode_successor: no receiving local boundary");
}

VNodeRings vnode_rings(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("vnode_rings: empty shape");
  VNodeRings out;

  std::vector<VNode> all;
  for (const Point& p : shape.points()) {
    auto runs = local_boundary_runs(out_edges(shape, p));
    for (const LocalBoundary& b : runs) {
      VNode v{p, b};
      if (b.size == 6) {
        out.isolated.push_back(v);
      } else {
        all.push_back(v);
      }
    }
  }
  std::sort(all.begin(), all.end(), [](const VNode& a, const VNode& b) {
    if (!(a.owner == b.owner)) return a.owner < b.owner;
    return a.boundary.first < b.boundary.first;
  });

  auto key = [](const VNode& v) {
    return std::make_pair(v.owner, v.boundary.first);
  };
  std::set<std::pair<Point, int>> visited;
  for (const VNode& start : all) {
    if (visited.count(key(start))) continue;
    VNodeRing ring;
    VNode cur = start;
    do {
      visited.insert(key(cur));
      ring.nodes.push_back(cur);
      ring.count_sum += cur.count();
      cur = vnode_successor(shape, cur);
    } while (!(cur == start));
    ring.outer = ring.count_sum > 0;
    out.rings.push_back(std::move(ring));
  }
  return out;
}

PointClass classify(const Shape& shape, const Point& v) {
  if (!shape.contains(v)) throw std::invalid_argument("classify: point not in shape");
  if (shape.size() < 2) throw std::invalid_argument("classify: shape must have >= 2 points");

  PointClass pc;
  pc.local_boundaries = local_boundary_runs(out_edges(shape, v));
  pc.redundant = pc.local_boundaries.size() <= 1;
  if (pc.local_boundaries.size() == 1) {
    // The run's unoccupied endpoints all lie in one face; the boundary is a
    // local outer boundary iff that face is the outer one.
    BoundaryAnalysis ba = analyze(shape);
    PointSet hole_set(ba.hole_points.begin(), ba.hole_points.end());
    Point probe = neighbor(v, pc.local_boundaries[0].first);
    bool outer_face = !hole_set.count(probe);
    pc.erodable = outer_face;
    pc.sce = pc.erodable && pc.local_boundaries[0].count() > 0;
  }
  return pc;
}

std::unordered_map<Point, int, PointHash> bfs_distances(const Point& src, const PointSet& allowed) {
  std::unordered_map<Point, int, PointHash> dist;
  if (!allowed.count(src)) return dist;
  dist[src] = 0;
  std::deque<Point> queue{src};
  while (!queue.empty()) {
    Point p = queue.front();
    queue.pop_front();
    int dp = dist[p];
    for (int d = 0; d < 6; ++d) {
      Point u = neighbor(p, d);
      if (allowed.count(u) && !dist.count(u)) {
        dist[u] = dp + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

Metrics metrics(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("metrics: empty shape");
  if (!is_connected(shape.point_set())) throw std::invalid_argument("metrics: disconnected shape");

  Metrics m;
  m.n = static_cast<int>(shape.size());
  BoundaryAnalysis ba = analyze(shape);
  PointSet area(ba.area.begin(), ba.area.end());
  m.n_area = static_cast<int>(area.size());

  for (const Point& p : shape.points()) {
    auto ds = bfs_distances(p, shape.point_set());
    auto da = bfs_distances(p, area);
    int ecc_s = 0, ecc_a = 0, ecc_g = 0;
    for (const Point& u : shape.points()) {
      ecc_s = std::max(ecc_s, ds.at(u));
      ecc_a = std::max(ecc_a, da.at(u));
      ecc_g = std::max(ecc_g, grid_distance(p, u));
    }
    m.diameter = std::max(m.diameter, ecc_s);
    m.diameter_area = std::max(m.diameter_area, ecc_a);
    m.diameter_grid = std::max(m.diameter_grid, ecc_g);
    m.grid_eccentricity[p] = ecc_g;
  }
  return m;
}

Shape parse_shape_text(const std::string& text) {
  Shape shape;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t i = line.find_first_not_of(" \t\r");
    if (i == std::string::npos || line[i] == '#') continue;
    std::istringstream ls(line);
    long q, r;
    if (!(ls >> q >> r))
      throw std::invalid_argument("shape text: malformed line " + std::to_string(lineno));
    std::string rest;
    if (ls >> rest)
      throw std::invalid_argument("shape text: trailing tokens on line " + std::to_string(lineno));
    Point p{static_cast<int>(q), static_cast<int>(r)};
    if (shape.contains(p))
      throw std::invalid_argument("shape text: duplicate point on line " + std::to_string(lineno));
    shape.add(p);
  }
  return shape;
}

std::string shape_to_text(const Shape& shape) {
  std::vector<Point> pts = shape.points();
  std::sort(pts.begin(), pts.end());
  std::ostringstream out;
  for (const Point& p : pts) out << p.q << " " << p.r << "\n";
  return out.str();
}

Shape load_shape_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open shape file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_shape_text(ss.str());
}

void save_shape_file(const Shape& shape, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open output file: " + path);
  out << shape_to_text(shape);
}

}  // namespace amoebot
