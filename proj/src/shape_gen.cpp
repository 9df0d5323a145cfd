#include "amoebot/shape_gen.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace amoebot {

namespace {

// Hexagonal ring of the given radius around a center; 6*radius points.
std::vector<Point> hex_ring(const Point& center, int radius) {
  std::vector<Point> pts;
  Point cur = center;
  for (int i = 0; i < radius; ++i) cur = neighbor(cur, 0);  // walk west
  // Ring traversal: radius steps in each of the six directions starting NE.
  static constexpr int kWalk[6] = {2, 3, 4, 5, 0, 1};
  for (int leg = 0; leg < 6; ++leg) {
    for (int i = 0; i < radius; ++i) {
      pts.push_back(cur);
      cur = neighbor(cur, kWalk[leg]);
    }
  }
  return pts;
}

std::vector<Point> hex_interior(const Point& center, int radius) {
  std::vector<Point> pts;
  for (int r = 0; r < radius; ++r) {
    if (r == 0) {
      pts.push_back(center);
    } else {
      auto ring = hex_ring(center, r);
      pts.insert(pts.end(), ring.begin(), ring.end());
    }
  }
  return pts;
}

}  // namespace

Shape gen_shape(int n, int holes_hint, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_shape: n must be >= 1");
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x1234u + static_cast<uint64_t>(n) * 31 +
          static_cast<uint64_t>(holes_hint));

  Shape shape;
  PointSet forbidden;  // carved hole interiors stay empty

  if (holes_hint > 0) {
    // Seed with rings whose interiors are kept empty, bridged west-to-east.
    int budget = n;
    int rings = std::min(holes_hint, 3);
    Point center{0, 0};
    bool first = true;
    for (int h = 0; h < rings; ++h) {
      int radius = 1 + static_cast<int>(rng.below(3));
      while (radius > 1 && 6 * radius + (first ? 0 : 1) > budget - 2) --radius;
      if (6 * radius + (first ? 0 : 1) > budget - 1 && !first) break;
      if (6 * radius > budget && first) break;
      if (!first) {
        // Bridge point between the previous ring and this one.
        shape.add(center);
        --budget;
        center = neighbor(center, 3);
        for (int i = 0; i < radius; ++i) center = neighbor(center, 3);
      }
      for (const Point& p : hex_ring(center, radius)) {
        if (!shape.contains(p)) {
          shape.add(p);
          --budget;
        }
      }
      for (const Point& p : hex_interior(center, radius)) forbidden.insert(p);
      // Next ring center east of this ring's rim.
      for (int i = 0; i <= radius; ++i) center = neighbor(center, 3);
      first = false;
    }
  }
  if (shape.empty()) shape.add(Point{0, 0});

  // Grow to exactly n points, weighting candidates by contact count. A low
  // exponent yields tendrils (large diameters), a high one compact blobs.
  int style = static_cast<int>(rng.below(3));  // 0 tendril, 1 mixed, 2 compact
  while (static_cast<int>(shape.size()) < n) {
    std::vector<Point> frontier;
    PointSet seen;
    for (const Point& p : shape.points()) {
      for (int d = 0; d < 6; ++d) {
        Point u = neighbor(p, d);
        if (!shape.contains(u) && !forbidden.count(u) && !seen.count(u)) {
          seen.insert(u);
          frontier.push_back(u);
        }
      }
    }
    std::sort(frontier.begin(), frontier.end());
    std::vector<uint64_t> weights(frontier.size());
    uint64_t total = 0;
    for (size_t i = 0; i < frontier.size(); ++i) {
      int contact = 0;
      for (int d = 0; d < 6; ++d)
        if (shape.contains(neighbor(frontier[i], d))) ++contact;
      uint64_t w = 1;
      switch (style) {
        case 0: w = (contact <= 2) ? 8 : 1; break;
        case 1: w = static_cast<uint64_t>(contact); break;
        default: w = static_cast<uint64_t>(contact) * contact * contact; break;
      }
      weights[i] = w;
      total += w;
    }
    uint64_t pick = rng.below(total);
    size_t idx = 0;
    for (; idx < frontier.size(); ++idx) {
      if (pick < weights[idx]) break;
      pick -= weights[idx];
    }
    shape.add(frontier[idx]);
  }
  return shape;
}

}  // namespace amoebot
