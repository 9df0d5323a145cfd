#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "amoebot/grid.hpp"
#include "json.hpp"

namespace amoebot {

using Json = nlohmann::json;

inline Json point_json(const Point& p) { return Json::array({p.q, p.r}); }
inline Point point_from_json(const Json& j) { return Point{j.at(0).get<int>(), j.at(1).get<int>()}; }

// Runtime-level description of one activation. Algorithm memories are
// appended by the tracing observer, not stored here.
struct ActivationRecord {
  int64_t activation_index = 0;
  int round = 0;
  int particle_id = 0;
  std::string action_kind;  // idle|none|expand|contract_head|contract_tail|
                            // handover_expand|handover_contract_head|handover_contract_tail
  std::optional<Point> moved_from, moved_to;
  int partner_id = -1;
  std::optional<Point> partner_from, partner_to;
  std::vector<int> touched;   // ids whose memory may have changed
  std::vector<Json> events;   // algorithm events emitted through the view
};

// Line-oriented JSON sink.
class JsonlFile {
 public:
  explicit JsonlFile(const std::string& path);
  void write(const Json& record);
  void flush();

 private:
  std::ofstream out_;
};

}  // namespace amoebot
