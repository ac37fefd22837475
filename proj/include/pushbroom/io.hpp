#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pushbroom/errors.hpp"
#include "pushbroom/geometry.hpp"
#include "pushbroom/image.hpp"
#include "pushbroom/pushbroom.hpp"
#include "pushbroom/synth.hpp"

namespace pushbroom::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Small text helpers

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// printf-style formatting into a std::string.
template <typename... Args>
std::string format(const char* fmt, Args... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string s(static_cast<std::size_t>(n), '\0');
  std::snprintf(s.data(), s.size() + 1, fmt, args...);
  return s;
}

inline std::string frame_name(std::size_t index, const char* suffix) {
  return format("%06zu%s", index, suffix);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// key = value text

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses `key = value` lines; '#' starts a comment. Keys may repeat.
inline std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view source = "input") {
  std::vector<KeyValue> out;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (!body.empty()) {
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw ParseError(std::string(source) + " line " + std::to_string(line_no) + ": expected key = value");
      KeyValue kv{trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)), line_no};
      if (kv.key.empty())
        throw ParseError(std::string(source) + " line " + std::to_string(line_no) + ": empty key");
      out.push_back(std::move(kv));
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline std::string field_error(const KeyValue& kv, std::string_view what) {
  return "line " + std::to_string(kv.line) + ", field '" + kv.key + "': " + std::string(what);
}

inline double parse_double(const KeyValue& kv, std::string_view text) {
  const std::string s = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(field_error(kv, "expected a number, got '" + s + "'"));
  }
  if (used != s.size() || !std::isfinite(v)) throw ParseError(field_error(kv, "expected a number, got '" + s + "'"));
  return v;
}
inline double parse_double(const KeyValue& kv) { return parse_double(kv, kv.value); }

inline long long parse_int(const KeyValue& kv, std::string_view text) {
  const std::string s = trim(text);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ParseError(field_error(kv, "expected an integer, got '" + s + "'"));
  }
  if (used != s.size()) throw ParseError(field_error(kv, "expected an integer, got '" + s + "'"));
  return v;
}
inline long long parse_int(const KeyValue& kv) { return parse_int(kv, kv.value); }

inline std::uint64_t parse_u64(const KeyValue& kv) {
  const std::string s = trim(kv.value);
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw ParseError(field_error(kv, "expected an unsigned integer, got '" + s + "'"));
  }
  if (used != s.size()) throw ParseError(field_error(kv, "expected an unsigned integer, got '" + s + "'"));
  return v;
}

inline bool parse_bool(const KeyValue& kv) {
  std::string s = trim(kv.value);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "off" || s == "no") return false;
  throw ParseError(field_error(kv, "expected on/off, got '" + kv.value + "'"));
}

inline Vec3 parse_vec3(const KeyValue& kv, std::string_view text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw ParseError(field_error(kv, "expected x,y,z"));
  return {parse_double(kv, parts[0]), parse_double(kv, parts[1]), parse_double(kv, parts[2])};
}
inline Vec3 parse_vec3(const KeyValue& kv) { return parse_vec3(kv, kv.value); }

inline std::vector<int> parse_int_list(const KeyValue& kv) {
  std::vector<int> out;
  if (trim(kv.value).empty()) return out;
  for (const auto& p : split(kv.value, ',')) out.push_back(static_cast<int>(parse_int(kv, p)));
  return out;
}

// ---------------------------------------------------------------------------
// PGM (P5) / PFM

namespace detail {

inline std::string next_header_token(const std::string& data, std::size_t& pos) {
  for (;;) {
    while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (pos < data.size() && data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
  return data.substr(start, pos - start);
}

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t offset = 0;
};

inline PgmHeader read_pgm_header(const std::string& data, const fs::path& path) {
  std::size_t pos = 0;
  if (next_header_token(data, pos) != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
  PgmHeader h;
  try {
    h.width = std::stoi(next_header_token(data, pos));
    h.height = std::stoi(next_header_token(data, pos));
    h.maxval = std::stoi(next_header_token(data, pos));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535)
    throw IoError(path.string() + ": malformed PGM header");
  h.offset = pos + 1;  // single whitespace byte after maxval
  return h;
}

}  // namespace detail

inline GrayImage read_pgm(const fs::path& path) {
  const std::string data = read_text(path);
  const auto h = detail::read_pgm_header(data, path);
  if (h.maxval > 255) throw IoError(path.string() + ": expected 8-bit PGM");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (data.size() < h.offset + n) throw IoError(path.string() + ": truncated PGM");
  std::vector<std::uint8_t> pixels(n);
  std::memcpy(pixels.data(), data.data() + h.offset, n);
  return GrayImage(h.width, h.height, std::move(pixels));
}

inline void write_pgm(const fs::path& path, const GrayImage& img) {
  std::string out = format("P5\n%d %d\n255\n", img.width(), img.height());
  const auto px = img.pixels();
  out.append(reinterpret_cast<const char*>(px.data()), px.size());
  write_text(path, out);
}

/// 16-bit big-endian PGM.
inline void write_pgm16(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& values) {
  std::string out = format("P5\n%d %d\n65535\n", width, height);
  out.reserve(out.size() + values.size() * 2);
  for (std::uint16_t v : values) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  write_text(path, out);
}

inline Plane<std::uint16_t> read_pgm16(const fs::path& path) {
  const std::string data = read_text(path);
  const auto h = detail::read_pgm_header(data, path);
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  const std::size_t bytes = h.maxval > 255 ? 2 : 1;
  if (data.size() < h.offset + n * bytes) throw IoError(path.string() + ": truncated PGM");
  std::vector<std::uint16_t> values(n);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + h.offset);
  for (std::size_t i = 0; i < n; ++i)
    values[i] = bytes == 2 ? static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
  return Plane<std::uint16_t>(h.width, h.height, std::move(values));
}

/// Little-endian PFM, rows stored bottom-up as the format requires.
inline void write_pfm(const fs::path& path, int width, int height, const std::vector<float>& values) {
  std::string out = format("Pf\n%d %d\n-1.0\n", width, height);
  for (int y = height - 1; y >= 0; --y) {
    const char* row = reinterpret_cast<const char*>(values.data() + static_cast<std::size_t>(y) * width);
    out.append(row, static_cast<std::size_t>(width) * sizeof(float));
  }
  write_text(path, out);
}

inline Plane<float> read_pfm(const fs::path& path) {
  const std::string data = read_text(path);
  std::size_t pos = 0;
  if (detail::next_header_token(data, pos) != "Pf") throw IoError(path.string() + ": not a grayscale PFM");
  int w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(detail::next_header_token(data, pos));
    h = std::stoi(detail::next_header_token(data, pos));
    scale = std::stod(detail::next_header_token(data, pos));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PFM header");
  }
  if (scale >= 0.0) throw IoError(path.string() + ": big-endian PFM not supported");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (data.size() < pos + n * sizeof(float)) throw IoError(path.string() + ": truncated PFM");
  Plane<float> out(w, h, 0.0f);
  for (int y = h - 1; y >= 0; --y) {
    std::memcpy(out.row(y).data(), data.data() + pos, static_cast<std::size_t>(w) * sizeof(float));
    pos += static_cast<std::size_t>(w) * sizeof(float);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PLY

inline std::string ply_text(std::span<const Vec3> points) {
  std::string out = "ply\nformat ascii 1.0\n";
  out += format("element vertex %zu\n", points.size());
  out += "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : points) out += format("%.6f %.6f %.6f\n", p.x(), p.y(), p.z());
  return out;
}

inline void write_ply(const fs::path& path, std::span<const Vec3> points) { write_text(path, ply_text(points)); }

inline std::vector<Vec3> read_ply(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t count = 0;
  bool ascii = false;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.rfind("format", 0) == 0) ascii = t.find("ascii") != std::string::npos;
    if (t.rfind("element vertex", 0) == 0) count = std::stoull(t.substr(15));
    if (t == "end_header") break;
  }
  if (!ascii) throw IoError(path.string() + ": only ASCII PLY is supported");
  std::vector<Vec3> pts;
  pts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double x, y, z;
    if (!(in >> x >> y >> z)) throw IoError(path.string() + ": truncated vertex list");
    pts.emplace_back(x, y, z);
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Calibration and poses

struct DatasetCalibration {
  StereoCalibration stereo;
  int disparity = 20;
};

inline std::string calib_text(const DatasetCalibration& c) {
  return format("fx=%.17g\nfy=%.17g\ncx=%.17g\ncy=%.17g\nbaseline_m=%.17g\ndisparity_px=%d\n", c.stereo.fx,
                c.stereo.fy, c.stereo.cx, c.stereo.cy, c.stereo.baseline, c.disparity);
}

inline DatasetCalibration parse_calib(std::string_view text, std::string_view source = "calib.txt") {
  DatasetCalibration c;
  bool seen[6] = {};
  for (const auto& kv : parse_key_values(text, source)) {
    if (kv.key == "fx") { c.stereo.fx = parse_double(kv); seen[0] = true; }
    else if (kv.key == "fy") { c.stereo.fy = parse_double(kv); seen[1] = true; }
    else if (kv.key == "cx") { c.stereo.cx = parse_double(kv); seen[2] = true; }
    else if (kv.key == "cy") { c.stereo.cy = parse_double(kv); seen[3] = true; }
    else if (kv.key == "baseline_m") { c.stereo.baseline = parse_double(kv); seen[4] = true; }
    else if (kv.key == "disparity_px") { c.disparity = static_cast<int>(parse_int(kv)); seen[5] = true; }
    else throw ParseError(std::string(source) + " " + field_error(kv, "unknown key"));
  }
  static const char* names[] = {"fx", "fy", "cx", "cy", "baseline_m", "disparity_px"};
  for (int i = 0; i < 6; ++i)
    if (!seen[i]) throw ParseError(std::string(source) + ": missing key '" + names[i] + "'");
  c.stereo.validate();
  return c;
}

inline std::string poses_text(std::span<const Pose> poses) {
  std::string out = "t,x,y,z,qw,qx,qy,qz\n";
  for (const auto& p : poses) {
    out += format("%.9f,%.9f,%.9f,%.9f,%.12f,%.12f,%.12f,%.12f\n", p.t, p.position.x(), p.position.y(),
                  p.position.z(), p.orientation.w(), p.orientation.x(), p.orientation.y(), p.orientation.z());
  }
  return out;
}

/// Reads poses.csv; an optional header row is skipped. Quaternions are
/// renormalised after parsing because the text form is rounded.
inline std::vector<Pose> parse_poses(std::string_view text, std::string_view source = "poses.csv") {
  std::vector<Pose> poses;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (std::isalpha(static_cast<unsigned char>(t[0]))) continue;  // header
    const auto cols = split(t, ',');
    if (cols.size() != 8)
      throw ParseError(std::string(source) + " line " + std::to_string(line_no) + ": expected 8 columns");
    KeyValue kv{"pose", t, line_no};
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = parse_double(kv, cols[i]);
    Pose p;
    p.t = v[0];
    p.position = {v[1], v[2], v[3]};
    p.orientation = Quat(v[4], v[5], v[6], v[7]);
    const double n = p.orientation.norm();
    if (std::abs(n - 1.0) > 1e-6)
      throw InvalidPose(std::string(source) + " line " + std::to_string(line_no) + ": quaternion is not unit length");
    p.orientation.normalize();
    poses.push_back(p);
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Scene description

/// Everything cmd_synth needs: geometry, rig, trajectory and output options.
struct SceneSpec {
  Scene scene;
  DatasetCalibration calib;
  ImageSize size;
  FlightPlan flight;
  bool write_ground_truth = true;
};

inline Texture parse_texture_fields(const KeyValue& kv, const std::vector<std::string>& tokens,
                                    Obstacle& ob, bool& has_min, bool& has_max) {
  Texture tex;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParseError(field_error(kv, "expected name=value, got '" + tok + "'"));
    const std::string name = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    if (name == "min") { ob.min = parse_vec3(kv, value); has_min = true; }
    else if (name == "max") { ob.max = parse_vec3(kv, value); has_max = true; }
    else if (name == "texture") {
      if (value == "noise") tex.kind = TextureKind::Noise;
      else if (value == "stripes") tex.kind = TextureKind::Stripes;
      else throw ParseError(field_error(kv, "unknown texture '" + value + "'"));
    }
    else if (name == "seed") tex.seed = static_cast<std::uint64_t>(parse_int(kv, value));
    else if (name == "contrast") tex.contrast = parse_double(kv, value);
    else if (name == "cell") tex.cell = parse_double(kv, value);
    else if (name == "period") tex.period = parse_double(kv, value);
    else throw ParseError(field_error(kv, "unknown obstacle attribute '" + name + "'"));
  }
  return tex;
}

inline Obstacle parse_obstacle(const KeyValue& kv) {
  std::vector<std::string> tokens;
  std::istringstream in(kv.value);
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  if (tokens.empty() || (tokens[0] != "box" && tokens[0] != "plane"))
    throw ParseError(field_error(kv, "expected 'box' or 'plane' followed by attributes"));
  Obstacle ob;
  bool has_min = false, has_max = false;
  ob.texture = parse_texture_fields(kv, tokens, ob, has_min, has_max);
  if (!has_min || !has_max) throw ParseError(field_error(kv, "obstacle needs min= and max="));
  if (tokens[0] == "plane" && ob.min.z() != ob.max.z())
    throw ParseError(field_error(kv, "a plane must have equal min and max z"));
  try {
    ob.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(field_error(kv, e.what()));
  }
  return ob;
}

}  // namespace pushbroom::io
