#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "heg/error.hpp"

namespace heg::io {

using json = nlohmann::json;

/// Calls `fn(object, line_number)` for every non-blank line of a JSONL file.
/// Any exception thrown while handling a line is rethrown as a ParseError
/// naming the file and line.
inline void read_jsonl(const std::filesystem::path& path,
                       const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      fn(json::parse(line), line_no);
    } catch (const std::exception& e) {
      throw Error(ErrorKind::ParseError,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  for (const auto& row : rows) out << row.dump() << '\n';
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& value) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << value.dump(2) << '\n';
}

}  // namespace heg::io
