#include "amoebot/dle.hpp"

#include <stdexcept>

namespace amoebot {

void init_dle_from_oracle(Config<DleMemory>& cfg, const Shape& shape) {
  BoundaryAnalysis ba = analyze(shape);
  PointSet holes(ba.hole_points.begin(), ba.hole_points.end());
  for (auto& p : cfg.particles) {
    p.mem = DleMemory{};
    for (int port = 0; port < 6; ++port) {
      Point u = neighbor(p.head, p.to_global(port));
      bool outer = !shape.contains(u) && !holes.count(u);
      p.mem.outer[port] = outer;
      p.mem.eligible[port] = !outer;
    }
  }
}

void init_dle_from_flags(Config<DleMemory>& cfg, const std::vector<std::array<bool, 6>>& outer) {
  if (outer.size() != cfg.particles.size())
    throw std::invalid_argument("init_dle_from_flags: flag count mismatch");
  for (size_t i = 0; i < cfg.particles.size(); ++i) {
    auto& p = cfg.particles[i];
    p.mem = DleMemory{};
    for (int port = 0; port < 6; ++port) {
      p.mem.outer[port] = outer[i][port];
      p.mem.eligible[port] = !outer[i][port];
    }
  }
}

}  // namespace amoebot
