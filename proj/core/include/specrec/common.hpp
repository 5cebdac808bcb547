#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace specrec {

// Invalid parameter values (non-positive lengths, bad ratios, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Mismatched array/tensor shapes.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed files/configs. `offset` is the byte offset where parsing failed,
// -1 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long long offset = -1)
      : std::runtime_error(offset >= 0 ? what + " (byte offset " + std::to_string(offset) + ")"
                                       : what),
        offset_(offset) {}
  long long offset() const { return offset_; }

 private:
  long long offset_;
};

// Non-finite losses, failed gradient checks.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

enum class Mode { kTrain, kInfer };
enum class TrainDomain { kSpatial, kSpectral };
enum class Precision { kFloat32, kFloat64 };

// Dense row-major 2-D array of doubles. The workhorse value type for fringe
// and image data throughout the signal/phantom/metrics modules.
struct Array2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Array2D() = default;
  Array2D(int r, int c, double fill = 0.0) : rows(r), cols(c), v(size_t(r) * size_t(c), fill) {
    if (r < 0 || c < 0) throw DomainError("Array2D: negative dimensions");
  }

  double& at(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[size_t(r) * cols + c];
  }
  double at(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[size_t(r) * cols + c];
  }
  size_t size() const { return v.size(); }
  bool same_shape(const Array2D& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
  double min() const;
  double max() const;
};

inline double Array2D::min() const {
  double m = v.empty() ? 0.0 : v[0];
  for (double x : v) m = x < m ? x : m;
  return m;
}
inline double Array2D::max() const {
  double m = v.empty() ? 0.0 : v[0];
  for (double x : v) m = x > m ? x : m;
  return m;
}

}  // namespace specrec
