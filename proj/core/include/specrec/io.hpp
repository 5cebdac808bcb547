#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specrec/common.hpp"

namespace specrec::io {

// ---------------------------------------------------------------------------
// OCT1: little-endian binary array container.
//   magic "OCT1" | ndim u32 | dims u32[ndim] | dtype u32 (0 = f32 LE) |
//   payload row-major f32
// ---------------------------------------------------------------------------
struct Oct1 {
  std::vector<uint32_t> dims;
  std::vector<float> data;

  size_t element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

void write_oct1(const std::filesystem::path& path, const Oct1& a);
Oct1 read_oct1(const std::filesystem::path& path);

Oct1 oct1_from_array(const Array2D& a);
Array2D array_from_oct1(const Oct1& a);  // requires ndim == 2

// ---------------------------------------------------------------------------
// CKP1: named-tensor checkpoint.
//   magic "CKP1" | count u32 | entries:
//     name_len u32 | name bytes | ndim u32 | dims u32[ndim] | f32 payload
// ---------------------------------------------------------------------------
struct CkptEntry {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;
};

void write_ckp1(const std::filesystem::path& path, const std::vector<CkptEntry>& entries);
std::vector<CkptEntry> read_ckp1(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// 8-bit binary PGM (P5). Values map [0,1] <-> 0..255 (round on export).
// ---------------------------------------------------------------------------
void write_pgm(const std::filesystem::path& path, const Array2D& img_unit);
Array2D read_pgm(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset manifest: one record per line,
//   patient_id<TAB>eye_id<TAB>split<TAB>path
// ---------------------------------------------------------------------------
struct ManifestEntry {
  std::string patient_id;
  std::string eye_id;
  std::string split;  // "train" | "val" | "test"
  std::string path;   // relative to the manifest's directory
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// RunConfig: plain-text key=value configuration. Keys are namespaced
// ("train.batch_size"). '#' starts a comment. CLI overrides replace file
// values. validate() rejects unknown keys against a registry.
// ---------------------------------------------------------------------------
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig from_file(const std::filesystem::path& path);
  void apply_override(const std::string& key_eq_value);  // "k=v"
  void write(const std::filesystem::path& path) const;

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;  // comma separated
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  // Throws ParseError when a key is not in `known`.
  void validate_keys(std::span<const std::string_view> known) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace specrec::io
