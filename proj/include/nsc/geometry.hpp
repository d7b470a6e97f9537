#pragma once

#include <cstddef>
#include <vector>

#include "nsc/rng.hpp"

namespace nsc {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double squared_distance(Point a, Point b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Closed axis-aligned rectangle.
struct Rect {
  double x_left = 0.0;
  double x_right = 0.0;
  double y_bottom = 0.0;
  double y_top = 0.0;

  double width() const { return x_right - x_left; }
  double height() const { return y_top - y_bottom; }
  double area() const { return width() * height(); }
  bool contains(Point p) const {
    return p.x >= x_left && p.x <= x_right && p.y >= y_bottom && p.y <= y_top;
  }
  /// Euclidean distance from p to the rectangle (0 inside).
  double distance(Point p) const;
};

/// Observation window: union of axis-aligned rectangles. Rectangles may
/// overlap; every measure is taken over the union.
class Window {
 public:
  /// Throws ConfigError on an empty list or a degenerate rectangle.
  explicit Window(std::vector<Rect> rects);

  const std::vector<Rect>& rects() const { return rects_; }
  /// Pairwise interior-disjoint rectangles with the same union.
  const std::vector<Rect>& disjoint_rects() const { return disjoint_; }
  const Rect& bounding_box() const { return bbox_; }

  double area() const { return area_; }
  bool contains(Point p) const;
  double distance(Point p) const;

 private:
  std::vector<Rect> rects_;
  std::vector<Rect> disjoint_;
  Rect bbox_;
  double area_ = 0.0;
};

inline double window_area(const Window& w) { return w.area(); }

/// 1/200 of the shorter bounding-box side.
double default_cell(const Window& w);

/// Raster approximation of the Minkowski sum of a window with a closed disc.
///
/// The lattice is anchored at the lower-left corner of the base bounding box,
/// shifted outward by whole cells, so masks of the same base and cell size
/// but different radii share cells. A cell is set when its center lies within
/// `radius` of the base, or when the open cell overlaps the base (so the base
/// is always covered, including for radius 0).
class DilatedWindow {
 public:
  DilatedWindow(Window base, double radius, double cell);

  const Window& base() const { return base_; }
  double radius() const { return radius_; }
  double cell() const { return cell_; }
  Point origin() const { return origin_; }
  std::size_t ncols() const { return ncols_; }
  std::size_t nrows() const { return nrows_; }

  bool mask(std::size_t col, std::size_t row) const { return mask_[row * ncols_ + col] != 0; }
  /// Row-major (row 0 = southernmost) indices of the set cells.
  const std::vector<std::size_t>& active_cells() const { return active_; }
  Point cell_center(std::size_t index) const;
  Rect cell_rect(std::size_t index) const;

  double area() const { return area_; }
  /// Closed-cell membership: true when p lies in the closure of any set cell.
  bool contains(Point p) const;

 private:
  Window base_;
  double radius_;
  double cell_;
  Point origin_;
  std::size_t ncols_ = 0;
  std::size_t nrows_ = 0;
  std::vector<unsigned char> mask_;
  std::vector<std::size_t> active_;
  double area_ = 0.0;
};

/// Throws ConfigError when radius < 0, cell <= 0, or (radius > 0 and
/// cell > radius / 2).
DilatedWindow dilate(const Window& w, double radius, double cell);

enum class Domain { Window, Dilated };

/// Midpoint-rule quadrature nodes restricted to a region.
struct QuadratureGrid {
  std::vector<Point> nodes;
  std::vector<double> weights;
  Domain domain = Domain::Window;

  std::size_t size() const { return nodes.size(); }
  double total_weight() const;
};

/// Throws ConfigError when cell <= 0 or no node falls inside the region.
QuadratureGrid make_grid(const Window& w, double cell);
QuadratureGrid make_grid(const DilatedWindow& dw, double cell);

Point sample_uniform_point(const Window& w, Rng& rng);
Point sample_uniform_point(const DilatedWindow& dw, Rng& rng);
std::vector<Point> sample_uniform(const Window& w, std::size_t n, Rng& rng);
std::vector<Point> sample_uniform(const DilatedWindow& dw, std::size_t n, Rng& rng);

}  // namespace nsc
