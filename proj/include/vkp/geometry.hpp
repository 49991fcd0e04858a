#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace vkp {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Axis-aligned box in pixels: top-left corner plus width and height.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Dense row-major grid of doubles.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace vkp
