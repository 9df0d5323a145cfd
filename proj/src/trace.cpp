#include "amoebot/trace.hpp"

#include <stdexcept>

namespace amoebot {

JsonlFile::JsonlFile(const std::string& path) : out_(path) {
  if (!out_) throw std::invalid_argument("cannot open trace file: " + path);
}

void JsonlFile::write(const Json& record) { out_ << record.dump() << "\n"; }

void JsonlFile::flush() { out_.flush(); }

}  // namespace amoebot
