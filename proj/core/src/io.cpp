#include "specrec/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace specrec::io {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t take_u32(std::istream& is, const char* what, long long& off) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(std::string("unexpected EOF reading ") + what, off);
  off += 4;
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& os, std::span<const float> v) {
  static_assert(std::endian::native == std::endian::little,
                "big-endian hosts need byte swaps here");
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 4));
}

void take_f32(std::istream& is, std::span<float> v, const char* what, long long& off) {
  if (!is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * 4)))
    throw ParseError(std::string("unexpected EOF reading ") + what, off);
  off += long long(v.size()) * 4;
}

void expect_magic(std::istream& is, const char* magic, long long& off) {
  char buf[4];
  if (!is.read(buf, 4)) throw ParseError("unexpected EOF reading magic", off);
  if (std::memcmp(buf, magic, 4) != 0)
    throw ParseError(std::string("bad magic, expected \"") + magic + "\"", off);
  off += 4;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open: " + path.string());
  return is;
}

}  // namespace

void write_oct1(const std::filesystem::path& path, const Oct1& a) {
  if (a.data.size() != a.element_count())
    throw ShapeError("write_oct1: payload size does not match dims");
  auto os = open_out(path);
  os.write("OCT1", 4);
  put_u32(os, uint32_t(a.dims.size()));
  for (uint32_t d : a.dims) put_u32(os, d);
  put_u32(os, 0);  // dtype 0 = f32 LE
  put_f32(os, a.data);
  if (!os) throw ParseError("write failure: " + path.string());
}

Oct1 read_oct1(const std::filesystem::path& path) {
  auto is = open_in(path);
  long long off = 0;
  expect_magic(is, "OCT1", off);
  Oct1 a;
  uint32_t ndim = take_u32(is, "ndim", off);
  if (ndim == 0 || ndim > 8) throw ParseError("OCT1: implausible ndim " + std::to_string(ndim), off - 4);
  a.dims.resize(ndim);
  for (uint32_t i = 0; i < ndim; i++) a.dims[i] = take_u32(is, "dims", off);
  uint32_t dtype = take_u32(is, "dtype", off);
  if (dtype != 0) throw ParseError("OCT1: unsupported dtype " + std::to_string(dtype), off - 4);
  a.data.resize(a.element_count());
  take_f32(is, a.data, "payload", off);
  // trailing bytes indicate corruption
  char c;
  if (is.read(&c, 1)) throw ParseError("OCT1: trailing bytes after payload", off);
  return a;
}

Oct1 oct1_from_array(const Array2D& arr) {
  Oct1 a;
  a.dims = {uint32_t(arr.rows), uint32_t(arr.cols)};
  a.data.resize(arr.size());
  for (size_t i = 0; i < arr.size(); i++) a.data[i] = float(arr.v[i]);
  return a;
}

Array2D array_from_oct1(const Oct1& a) {
  if (a.dims.size() != 2) throw ShapeError("array_from_oct1: expected 2-D payload");
  Array2D arr(int(a.dims[0]), int(a.dims[1]));
  for (size_t i = 0; i < a.data.size(); i++) arr.v[i] = double(a.data[i]);
  return arr;
}

void write_ckp1(const std::filesystem::path& path, const std::vector<CkptEntry>& entries) {
  auto os = open_out(path);
  os.write("CKP1", 4);
  put_u32(os, uint32_t(entries.size()));
  for (const auto& e : entries) {
    size_t n = 1;
    for (uint32_t d : e.dims) n *= d;
    if (e.data.size() != n) throw ShapeError("write_ckp1: payload size mismatch for " + e.name);
    put_u32(os, uint32_t(e.name.size()));
    os.write(e.name.data(), std::streamsize(e.name.size()));
    put_u32(os, uint32_t(e.dims.size()));
    for (uint32_t d : e.dims) put_u32(os, d);
    put_f32(os, e.data);
  }
  if (!os) throw ParseError("write failure: " + path.string());
}

std::vector<CkptEntry> read_ckp1(const std::filesystem::path& path) {
  auto is = open_in(path);
  long long off = 0;
  expect_magic(is, "CKP1", off);
  uint32_t count = take_u32(is, "tensor count", off);
  std::vector<CkptEntry> entries(count);
  for (auto& e : entries) {
    uint32_t name_len = take_u32(is, "name length", off);
    if (name_len > 4096) throw ParseError("CKP1: implausible name length", off - 4);
    e.name.resize(name_len);
    if (!is.read(e.name.data(), name_len)) throw ParseError("unexpected EOF reading name", off);
    off += name_len;
    uint32_t ndim = take_u32(is, "ndim", off);
    if (ndim > 8) throw ParseError("CKP1: implausible ndim", off - 4);
    e.dims.resize(ndim);
    size_t n = 1;
    for (uint32_t i = 0; i < ndim; i++) {
      e.dims[i] = take_u32(is, "dims", off);
      n *= e.dims[i];
    }
    e.data.resize(n);
    take_f32(is, e.data, ("tensor \"" + e.name + "\"").c_str(), off);
  }
  char c;
  if (is.read(&c, 1)) throw ParseError("CKP1: trailing bytes after last tensor", off);
  return entries;
}

void write_pgm(const std::filesystem::path& path, const Array2D& img) {
  auto os = open_out(path);
  os << "P5\n" << img.cols << " " << img.rows << "\n255\n";
  std::vector<unsigned char> row(size_t(img.cols));
  for (int y = 0; y < img.rows; y++) {
    for (int x = 0; x < img.cols; x++) {
      double v = img.at(y, x);
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      row[size_t(x)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(row.data()), img.cols);
  }
  if (!os) throw ParseError("write failure: " + path.string());
}

Array2D read_pgm(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw ParseError("PGM: expected P5 magic in " + path.string(), 0);
  auto next_token = [&is]() {
    // skip whitespace and '#' comment lines
    for (;;) {
      int c = is.peek();
      if (c == '#') {
        std::string line;
        std::getline(is, line);
      } else if (std::isspace(c)) {
        is.get();
      } else {
        break;
      }
    }
    long v;
    if (!(is >> v)) throw ParseError("PGM: malformed header", long long(is.tellg()));
    return v;
  };
  long w = next_token(), h = next_token(), maxval = next_token();
  if (w <= 0 || h <= 0) throw ParseError("PGM: bad dimensions", long long(is.tellg()));
  if (maxval != 255) throw ParseError("PGM: only maxval 255 supported", long long(is.tellg()));
  is.get();  // single whitespace after maxval
  Array2D img(int(h), int(w));
  std::vector<unsigned char> row(size_t(w));
  for (long y = 0; y < h; y++) {
    if (!is.read(reinterpret_cast<char*>(row.data()), w))
      throw ParseError("PGM: truncated pixel data", long long(is.tellg()));
    for (long x = 0; x < w; x++) img.at(int(y), int(x)) = double(row[size_t(x)]) / 255.0;
  }
  return img;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  auto os = open_out(path);
  for (const auto& e : entries)
    os << e.patient_id << '\t' << e.eye_id << '\t' << e.split << '\t' << e.path << '\n';
  if (!os) throw ParseError("write failure: " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::vector<ManifestEntry> out;
  std::string line;
  long lineno = 0;
  while (std::getline(is, line)) {
    lineno++;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!std::getline(ss, e.patient_id, '\t') || !std::getline(ss, e.eye_id, '\t') ||
        !std::getline(ss, e.split, '\t') || !std::getline(ss, e.path))
      throw ParseError("manifest: malformed line " + std::to_string(lineno) + " in " +
                       path.string());
    out.push_back(std::move(e));
  }
  return out;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open config: " + path.string());
  RunConfig cfg;
  std::string line;
  long lineno = 0;
  while (std::getline(is, line)) {
    lineno++;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config: missing '=' on line " + std::to_string(lineno) + " of " +
                       path.string());
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      auto b2 = s.find_first_not_of(" \t");
      auto e2 = s.find_last_not_of(" \t");
      s = b2 == std::string::npos ? "" : s.substr(b2, e2 - b2 + 1);
    };
    trim(key);
    trim(val);
    if (key.empty()) throw ParseError("config: empty key on line " + std::to_string(lineno));
    cfg.kv_[key] = val;
  }
  return cfg;
}

void RunConfig::apply_override(const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ParseError("override must be key=value, got \"" + kv + "\"");
  kv_[kv.substr(0, eq)] = kv.substr(eq + 1);
}

void RunConfig::write(const std::filesystem::path& path) const {
  auto os = open_out(path);
  for (const auto& [k, v] : kv_) os << k << "=" << v << "\n";
  if (!os) throw ParseError("write failure: " + path.string());
}

bool RunConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

void RunConfig::set(const std::string& key, const std::string& value) { kv_[key] = value; }

std::string RunConfig::get_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ParseError("config: missing required key \"" + key + "\"");
  return it->second;
}

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

long RunConfig::get_int(const std::string& key) const {
  const std::string s = get_str(key);
  try {
    size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config: key \"" + key + "\" is not an integer: \"" + s + "\"");
  }
}

long RunConfig::get_int(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string s = get_str(key);
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config: key \"" + key + "\" is not a number: \"" + s + "\"");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_str(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ParseError("config: key \"" + key + "\" is not a boolean: \"" + s + "\"");
}

uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string s = get_str(key);
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config: key \"" + key + "\" is not an unsigned integer: \"" + s + "\"");
  }
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::string s = get_str(key);
  std::vector<double> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ParseError("config: key \"" + key + "\": bad list element \"" + tok + "\"");
    }
  }
  if (out.empty()) throw ParseError("config: key \"" + key + "\" is an empty list");
  return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key,
                                         const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  auto d = get_double_list(key);
  std::vector<int> out(d.size());
  for (size_t i = 0; i < d.size(); i++) out[i] = int(std::lround(d[i]));
  return out;
}

void RunConfig::validate_keys(std::span<const std::string_view> known) const {
  for (const auto& [k, v] : kv_) {
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ParseError("config: unknown key \"" + k + "\"");
  }
}

}  // namespace specrec::io
