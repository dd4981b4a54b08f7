#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "heg/encoder.hpp"
#include "heg/error.hpp"
#include "heg/jsonl.hpp"
#include "heg/training.hpp"

namespace heg {

inline constexpr int kCheckpointFormat = 1;

namespace detail {

inline void write_f64(std::ostream& out, const Vec& values) {
  std::vector<unsigned char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Vec read_f64(std::istream& in, std::size_t count, const std::string& what) {
  std::vector<unsigned char> buf(count * 8);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw Error(ErrorKind::ParseError, "checkpoint truncated while reading " + what);
  }
  Vec out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

inline std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace detail

/// Named arrays behind a single-line JSON header. The payload is every array
/// in header order, row-major little-endian float64.
struct ArrayBundle {
  io::json header = io::json::object();
  std::vector<std::pair<std::string, std::vector<std::size_t>>> shapes;
  std::vector<Vec> arrays;
};

/// Encoder checkpoint: towers first ("mention", "event"), then the ComplEx
/// head arrays listed under extra_heads.
inline void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                            const ComplExHead& head) {
  const std::size_t d = params.dim;
  io::json arrays = io::json::array();
  for (const auto& [name, shape] : std::vector<std::pair<std::string, std::vector<std::size_t>>>{
           {"W_Re", {d, d}}, {"W_Im", {d, d}}, {"b_Re", {d}}, {"b_Im", {d}}, {"r", {d}}}) {
    arrays.push_back({{"name", name}, {"shape", shape}});
  }
  io::json header{{"format_version", kCheckpointFormat},
                  {"F", params.feature_dim},
                  {"d", d},
                  {"towers", {"mention", "event"}},
                  {"extra_heads", io::json::array({{{"name", "complex"}, {"arrays", arrays}}})}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << header.dump() << '\n';
  for (const Vec* v : {&params.w_mention, &params.w_event, &head.w_re, &head.w_im, &head.b_re, &head.b_im, &head.r}) {
    detail::write_f64(out, *v);
  }
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

struct Checkpoint {
  EncoderParams params;
  ComplExHead head;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  io::json header;
  try {
    header = io::json::parse(line);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointFormat) {
    throw Error(ErrorKind::ParseError, path.string() + ": unsupported checkpoint format");
  }
  const auto f = header.at("F").get<std::uint32_t>();
  const auto d = header.at("d").get<std::size_t>();
  Checkpoint ck{EncoderParams(f, d), ComplExHead(d)};
  const std::size_t tower = static_cast<std::size_t>(f) * d;
  ck.params.w_mention = detail::read_f64(in, tower, "mention tower");
  ck.params.w_event = detail::read_f64(in, tower, "event tower");
  for (const auto& h : header.at("extra_heads")) {
    if (h.at("name") != "complex") continue;
    ck.head.w_re = detail::read_f64(in, d * d, "W_Re");
    ck.head.w_im = detail::read_f64(in, d * d, "W_Im");
    ck.head.b_re = detail::read_f64(in, d, "b_Re");
    ck.head.b_im = detail::read_f64(in, d, "b_Im");
    ck.head.r = detail::read_f64(in, d, "r");
  }
  return ck;
}

inline void save_bundle(const std::filesystem::path& path, const ArrayBundle& bundle) {
  io::json header = bundle.header;
  header["format_version"] = kCheckpointFormat;
  io::json list = io::json::array();
  for (std::size_t i = 0; i < bundle.shapes.size(); ++i) {
    if (detail::product(bundle.shapes[i].second) != bundle.arrays[i].size()) {
      throw Error(ErrorKind::DimensionMismatch, "array " + bundle.shapes[i].first + " does not match its shape");
    }
    list.push_back({{"name", bundle.shapes[i].first}, {"shape", bundle.shapes[i].second}});
  }
  header["arrays"] = list;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << header.dump() << '\n';
  for (const auto& a : bundle.arrays) detail::write_f64(out, a);
}

inline ArrayBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  ArrayBundle b;
  try {
    b.header = io::json::parse(line);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": bad header: " + e.what());
  }
  if (b.header.value("format_version", 0) != kCheckpointFormat) {
    throw Error(ErrorKind::ParseError, path.string() + ": unsupported format");
  }
  for (const auto& a : b.header.at("arrays")) {
    auto shape = a.at("shape").get<std::vector<std::size_t>>();
    auto name = a.at("name").get<std::string>();
    b.arrays.push_back(detail::read_f64(in, detail::product(shape), name));
    b.shapes.emplace_back(std::move(name), std::move(shape));
  }
  return b;
}

}  // namespace heg
