#include "nsc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nsc/errors.hpp"

namespace nsc {

double Rect::distance(Point p) const {
  const double dx = std::max({x_left - p.x, 0.0, p.x - x_right});
  const double dy = std::max({y_bottom - p.y, 0.0, p.y - y_top});
  return std::hypot(dx, dy);
}

namespace {

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Coordinate compression: split the bounding box along every rectangle edge,
// keep the elementary cells covered by some rectangle, and merge vertical runs
// inside each x-slab.
std::vector<Rect> decompose_union(const std::vector<Rect>& rects) {
  std::vector<double> xs, ys;
  for (const auto& r : rects) {
    xs.push_back(r.x_left);
    xs.push_back(r.x_right);
    ys.push_back(r.y_bottom);
    ys.push_back(r.y_top);
  }
  xs = sorted_unique(std::move(xs));
  ys = sorted_unique(std::move(ys));

  std::vector<Rect> out;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double xm = 0.5 * (xs[i] + xs[i + 1]);
    std::size_t j = 0;
    while (j + 1 < ys.size()) {
      auto covered = [&](std::size_t jj) {
        const Point c{xm, 0.5 * (ys[jj] + ys[jj + 1])};
        return std::any_of(rects.begin(), rects.end(), [&](const Rect& r) { return r.contains(c); });
      };
      if (!covered(j)) {
        ++j;
        continue;
      }
      std::size_t k = j;
      while (k + 2 < ys.size() && covered(k + 1)) ++k;
      out.push_back(Rect{xs[i], xs[i + 1], ys[j], ys[k + 1]});
      j = k + 1;
    }
  }
  return out;
}

}  // namespace

Window::Window(std::vector<Rect> rects) : rects_(std::move(rects)) {
  if (rects_.empty()) throw ConfigError("window: rectangle list is empty");
  for (std::size_t i = 0; i < rects_.size(); ++i) {
    const auto& r = rects_[i];
    if (!(r.x_left < r.x_right) || !(r.y_bottom < r.y_top) || !std::isfinite(r.area())) {
      std::ostringstream msg;
      msg << "window: rectangle " << i << " is degenerate (" << r.x_left << ", " << r.x_right << ", "
          << r.y_bottom << ", " << r.y_top << ")";
      throw ConfigError(msg.str());
    }
  }
  bbox_ = rects_.front();
  for (const auto& r : rects_) {
    bbox_.x_left = std::min(bbox_.x_left, r.x_left);
    bbox_.x_right = std::max(bbox_.x_right, r.x_right);
    bbox_.y_bottom = std::min(bbox_.y_bottom, r.y_bottom);
    bbox_.y_top = std::max(bbox_.y_top, r.y_top);
  }
  disjoint_ = decompose_union(rects_);
  for (const auto& r : disjoint_) area_ += r.area();
}

bool Window::contains(Point p) const {
  return std::any_of(rects_.begin(), rects_.end(), [p](const Rect& r) { return r.contains(p); });
}

double Window::distance(Point p) const {
  double d = rects_.front().distance(p);
  for (const auto& r : rects_) d = std::min(d, r.distance(p));
  return d;
}

double default_cell(const Window& w) {
  const auto& b = w.bounding_box();
  return std::min(b.width(), b.height()) / 200.0;
}

DilatedWindow::DilatedWindow(Window base, double radius, double cell)
    : base_(std::move(base)), radius_(radius), cell_(cell) {
  if (!(radius_ >= 0.0) || !std::isfinite(radius_)) throw ConfigError("dilation: radius must be >= 0");
  if (!(cell_ > 0.0) || !std::isfinite(cell_)) throw ConfigError("dilation: cell size must be > 0");
  if (radius_ > 0.0 && cell_ > radius_ / 2.0) {
    std::ostringstream msg;
    msg << "dilation: cell " << cell_ << " is larger than radius/2 = " << radius_ / 2.0 << " (mask too coarse)";
    throw ConfigError(msg.str());
  }
  const auto& b = base_.bounding_box();
  const double pad = std::ceil(radius_ / cell_) * cell_;
  origin_ = Point{b.x_left - pad, b.y_bottom - pad};
  ncols_ = static_cast<std::size_t>(std::ceil((b.width() + 2.0 * pad) / cell_ - 1e-9));
  nrows_ = static_cast<std::size_t>(std::ceil((b.height() + 2.0 * pad) / cell_ - 1e-9));
  ncols_ = std::max<std::size_t>(ncols_, 1);
  nrows_ = std::max<std::size_t>(nrows_, 1);
  mask_.assign(ncols_ * nrows_, 0);

  for (std::size_t row = 0; row < nrows_; ++row) {
    for (std::size_t col = 0; col < ncols_; ++col) {
      const std::size_t idx = row * ncols_ + col;
      const Rect cr = cell_rect(idx);
      const Point c{0.5 * (cr.x_left + cr.x_right), 0.5 * (cr.y_bottom + cr.y_top)};
      bool on = base_.distance(c) <= radius_;
      if (!on) {
        for (const auto& r : base_.rects()) {
          if (cr.x_left < r.x_right && r.x_left < cr.x_right && cr.y_bottom < r.y_top && r.y_bottom < cr.y_top) {
            on = true;
            break;
          }
        }
      }
      if (on) {
        mask_[idx] = 1;
        active_.push_back(idx);
      }
    }
  }
  area_ = static_cast<double>(active_.size()) * cell_ * cell_;
}

Rect DilatedWindow::cell_rect(std::size_t index) const {
  const double col = static_cast<double>(index % ncols_);
  const double row = static_cast<double>(index / ncols_);
  return Rect{origin_.x + col * cell_, origin_.x + (col + 1.0) * cell_, origin_.y + row * cell_,
              origin_.y + (row + 1.0) * cell_};
}

Point DilatedWindow::cell_center(std::size_t index) const {
  const double col = static_cast<double>(index % ncols_);
  const double row = static_cast<double>(index / ncols_);
  return Point{origin_.x + (col + 0.5) * cell_, origin_.y + (row + 0.5) * cell_};
}

bool DilatedWindow::contains(Point p) const {
  const double fx = (p.x - origin_.x) / cell_;
  const double fy = (p.y - origin_.y) / cell_;
  if (!(fx >= 0.0) || !(fy >= 0.0) || fx > static_cast<double>(ncols_) || fy > static_cast<double>(nrows_)) {
    return false;
  }
  const auto cx = static_cast<std::ptrdiff_t>(std::floor(fx));
  const auto cy = static_cast<std::ptrdiff_t>(std::floor(fy));
  // A point on a cell edge belongs to the closure of both neighbours.
  for (std::ptrdiff_t dy = (fy == static_cast<double>(cy) ? -1 : 0); dy <= 0; ++dy) {
    for (std::ptrdiff_t dx = (fx == static_cast<double>(cx) ? -1 : 0); dx <= 0; ++dx) {
      const std::ptrdiff_t col = cx + dx;
      const std::ptrdiff_t row = cy + dy;
      if (col < 0 || row < 0 || col >= static_cast<std::ptrdiff_t>(ncols_) ||
          row >= static_cast<std::ptrdiff_t>(nrows_)) {
        continue;
      }
      if (mask(static_cast<std::size_t>(col), static_cast<std::size_t>(row))) return true;
    }
  }
  return false;
}

DilatedWindow dilate(const Window& w, double radius, double cell) { return DilatedWindow(w, radius, cell); }

double QuadratureGrid::total_weight() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

namespace {

template <typename Inside>
QuadratureGrid lattice_grid(Point origin, double width, double height, double cell, Domain domain,
                            Inside inside) {
  if (!(cell > 0.0) || !std::isfinite(cell)) throw ConfigError("grid: cell size must be > 0");
  const auto nx = static_cast<std::size_t>(std::ceil(width / cell - 1e-9));
  const auto ny = static_cast<std::size_t>(std::ceil(height / cell - 1e-9));
  QuadratureGrid g;
  g.domain = domain;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const Point c{origin.x + (static_cast<double>(i) + 0.5) * cell, origin.y + (static_cast<double>(j) + 0.5) * cell};
      if (inside(c)) {
        g.nodes.push_back(c);
        g.weights.push_back(cell * cell);
      }
    }
  }
  if (g.nodes.empty()) throw ConfigError("grid: region is smaller than one cell; no quadrature nodes");
  return g;
}

}  // namespace

QuadratureGrid make_grid(const Window& w, double cell) {
  const auto& b = w.bounding_box();
  return lattice_grid(Point{b.x_left, b.y_bottom}, b.width(), b.height(), cell, Domain::Window,
                      [&w](Point c) { return w.contains(c); });
}

QuadratureGrid make_grid(const DilatedWindow& dw, double cell) {
  if (cell == dw.cell()) {
    QuadratureGrid g;
    g.domain = Domain::Dilated;
    for (std::size_t idx : dw.active_cells()) {
      g.nodes.push_back(dw.cell_center(idx));
      g.weights.push_back(cell * cell);
    }
    if (g.nodes.empty()) throw ConfigError("grid: dilated window has no active cells");
    return g;
  }
  const double w = static_cast<double>(dw.ncols()) * dw.cell();
  const double h = static_cast<double>(dw.nrows()) * dw.cell();
  return lattice_grid(dw.origin(), w, h, cell, Domain::Dilated, [&dw](Point c) { return dw.contains(c); });
}

Point sample_uniform_point(const Window& w, Rng& rng) {
  const auto& parts = w.disjoint_rects();
  double u = uniform01(rng) * w.area();
  const Rect* pick = &parts.back();
  for (const auto& r : parts) {
    if (u < r.area()) {
      pick = &r;
      break;
    }
    u -= r.area();
  }
  return Point{pick->x_left + uniform01(rng) * pick->width(), pick->y_bottom + uniform01(rng) * pick->height()};
}

Point sample_uniform_point(const DilatedWindow& dw, Rng& rng) {
  const auto& cells = dw.active_cells();
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  const Rect r = dw.cell_rect(cells[pick(rng)]);
  return Point{r.x_left + uniform01(rng) * r.width(), r.y_bottom + uniform01(rng) * r.height()};
}

std::vector<Point> sample_uniform(const Window& w, std::size_t n, Rng& rng) {
  std::vector<Point> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_uniform_point(w, rng));
  return out;
}

std::vector<Point> sample_uniform(const DilatedWindow& dw, std::size_t n, Rng& rng) {
  std::vector<Point> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_uniform_point(dw, rng));
  return out;
}

}  // namespace nsc
