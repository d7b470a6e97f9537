#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nsc/errors.hpp"
#include "nsc/geometry.hpp"

using namespace nsc;

namespace {

// Counts lattice cell centres inside any of the rectangles.
double raster_area(const std::vector<Rect>& rects, double h) {
  double xl = 1e300, xr = -1e300, yb = 1e300, yt = -1e300;
  for (const auto& r : rects) {
    xl = std::min(xl, r.x_left);
    xr = std::max(xr, r.x_right);
    yb = std::min(yb, r.y_bottom);
    yt = std::max(yt, r.y_top);
  }
  std::size_t count = 0;
  for (double x = xl + h / 2; x < xr; x += h) {
    for (double y = yb + h / 2; y < yt; y += h) {
      for (const auto& r : rects) {
        if (r.contains({x, y})) {
          ++count;
          break;
        }
      }
    }
  }
  return static_cast<double>(count) * h * h;
}

}  // namespace

TEST(Window, AreaOfUnitSquare) { EXPECT_DOUBLE_EQ(Window({{0, 1, 0, 1}}).area(), 1.0); }

TEST(Window, AreaIsAdditiveOverDisjointSquares) {
  EXPECT_DOUBLE_EQ(Window({{0, 1, 0, 1}, {2, 3, 0, 1}}).area(), 2.0);
}

TEST(Window, OverlappingRectanglesCountedOnce) {
  const std::vector<Rect> rects{{0, 2, 0, 1}, {1, 3, 0, 1}};
  const Window w(rects);
  EXPECT_NEAR(w.area(), raster_area(rects, 1e-3), 1e-3);
  EXPECT_NEAR(w.area(), 3.0, 1e-12);
}

TEST(Window, DisjointDecompositionCoversUnion) {
  const std::vector<Rect> rects{{0, 2, 0, 2}, {1, 3, 1, 3}, {0.5, 1.5, -1, 4}};
  const Window w(rects);
  double sum = 0.0;
  for (const auto& r : w.disjoint_rects()) sum += r.area();
  EXPECT_NEAR(sum, w.area(), 1e-12);
  EXPECT_NEAR(w.area(), raster_area(rects, 2e-3), 5e-3);
  for (std::size_t i = 0; i < w.disjoint_rects().size(); ++i) {
    for (std::size_t j = i + 1; j < w.disjoint_rects().size(); ++j) {
      const Rect& a = w.disjoint_rects()[i];
      const Rect& b = w.disjoint_rects()[j];
      const double ox = std::min(a.x_right, b.x_right) - std::max(a.x_left, b.x_left);
      const double oy = std::min(a.y_top, b.y_top) - std::max(a.y_bottom, b.y_bottom);
      EXPECT_FALSE(ox > 1e-12 && oy > 1e-12);
    }
  }
}

TEST(Window, ContainsUsesClosedBoundary) {
  const Window w({{0, 1, 0, 1}});
  EXPECT_TRUE(w.contains({0.5, 0.5}));
  EXPECT_FALSE(w.contains({1.5, 0.5}));
  EXPECT_TRUE(w.contains({1.0, 1.0}));
  EXPECT_TRUE(w.contains({0.0, 0.0}));
}

TEST(Window, RejectsDegenerateInput) {
  EXPECT_THROW(Window(std::vector<Rect>{}), ConfigError);
  EXPECT_THROW(Window({{0, 0, 0, 1}}), ConfigError);
  EXPECT_THROW(Window({{1, 0, 0, 1}}), ConfigError);
}

TEST(Dilate, RadiusZeroMatchesWindowUpToOneCell) {
  const Window w({{0, 1, 0, 1}});
  const DilatedWindow d = dilate(w, 0.0, 1e-3);
  EXPECT_NEAR(d.area(), 1.0, 2e-3);
  EXPECT_TRUE(d.contains({0.5, 0.5}));
  EXPECT_FALSE(d.contains({1.01, 0.5}));
}

TEST(Dilate, UnionOfDisjointSquaresRadiusZero) {
  const DilatedWindow d = dilate(Window({{0, 1, 0, 1}, {2, 3, 0, 1}}), 0.0, 1e-2);
  EXPECT_NEAR(d.area(), 2.0, 4e-3);
}

TEST(Dilate, AreaMatchesSteinerFormula) {
  const Window w({{0, 1, 0, 1}});
  const double r = 0.5;
  const DilatedWindow d = dilate(w, r, 5e-3);
  const double exact = 1.0 + 4.0 * r + std::numbers::pi * r * r;
  EXPECT_NEAR(d.area(), exact, 0.01 * exact);
}

TEST(Dilate, ContainsPointsWithinRadius) {
  const DilatedWindow d = dilate(Window({{0, 1, 0, 1}}), 0.5, 0.01);
  EXPECT_TRUE(d.contains({-0.3, 0.5}));
  EXPECT_FALSE(d.contains({-0.6, 0.5}));
  EXPECT_FALSE(d.contains({1.45, 1.45}));
}

TEST(Dilate, MaskCoversBase) {
  const Window w({{0, 1.003, 0, 0.5}, {0.2, 0.4, 0.5, 0.907}});
  const DilatedWindow d = dilate(w, 0.05, 0.02);
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) EXPECT_TRUE(d.contains(sample_uniform_point(w, rng)));
}

TEST(Dilate, RejectsBadArguments) {
  const Window w({{0, 1, 0, 1}});
  EXPECT_THROW(dilate(w, -0.1, 0.01), ConfigError);
  EXPECT_THROW(dilate(w, 0.1, 0.0), ConfigError);
  EXPECT_THROW(dilate(w, 0.1, 0.06), ConfigError);
  EXPECT_NO_THROW(dilate(w, 0.0, 0.5));
}

TEST(Dilate, ActiveCellsAgreeWithMask) {
  const DilatedWindow d = dilate(Window({{0, 1, 0, 1}}), 0.2, 0.05);
  std::size_t count = 0;
  for (std::size_t r = 0; r < d.nrows(); ++r) {
    for (std::size_t c = 0; c < d.ncols(); ++c) count += d.mask(c, r) ? 1 : 0;
  }
  EXPECT_EQ(count, d.active_cells().size());
  EXPECT_NEAR(d.area(), static_cast<double>(count) * 0.05 * 0.05, 1e-12);
}

TEST(SampleUniform, EmptyRequest) {
  Rng rng(1);
  EXPECT_TRUE(sample_uniform(Window({{0, 1, 0, 1}}), 0, rng).empty());
}

TEST(SampleUniform, MeanOfUnitSquare) {
  Rng rng(2);
  const auto pts = sample_uniform(Window({{0, 1, 0, 1}}), 100000, rng);
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  EXPECT_NEAR(mx / 1e5, 0.5, 0.01);
  EXPECT_NEAR(my / 1e5, 0.5, 0.01);
}

TEST(SampleUniform, PointsLieInRegion) {
  Rng rng(3);
  const Window w({{0, 2, 0, 1}, {1, 3, 0.5, 2}});
  for (const auto& p : sample_uniform(w, 5000, rng)) EXPECT_TRUE(w.contains(p));
  const DilatedWindow d = dilate(w, 0.3, 0.05);
  for (const auto& p : sample_uniform(d, 5000, rng)) EXPECT_TRUE(d.contains(p));
}

TEST(SampleUniform, OverlapRegionNotOversampled) {
  // Left half of [0,2]x[0,1] U [1,3]x[0,1] has a third of the area.
  Rng rng(5);
  const Window w({{0, 2, 0, 1}, {1, 3, 0, 1}});
  const auto pts = sample_uniform(w, 60000, rng);
  double left = 0;
  for (const auto& p : pts) left += p.x < 1.0 ? 1 : 0;
  EXPECT_NEAR(left / 60000.0, 1.0 / 3.0, 0.01);
}

TEST(Grid, UnitSquareHalfCell) {
  const QuadratureGrid g = make_grid(Window({{0, 1, 0, 1}}), 0.5);
  ASSERT_EQ(g.size(), 4u);
  for (double w : g.weights) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(Grid, WeightsSumToArea) {
  EXPECT_NEAR(make_grid(Window({{0, 1, 0, 1}}), 0.01).total_weight(), 1.0, 1e-2);
}

TEST(Grid, LShapeNodeCountMatchesScan) {
  const std::vector<Rect> rects{{0, 2, 0, 1}, {0, 1, 1, 2}};
  const double h = 0.05;
  const QuadratureGrid g = make_grid(Window(rects), h);
  std::size_t count = 0;
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 40; ++j) {
      const Point c{(i + 0.5) * h, (j + 0.5) * h};
      for (const auto& r : rects) {
        if (r.contains(c)) {
          ++count;
          break;
        }
      }
    }
  }
  EXPECT_EQ(g.size(), count);
  EXPECT_NEAR(g.total_weight(), 3.0, 1e-9);
}

TEST(Grid, DilatedGridMatchesMask) {
  const DilatedWindow d = dilate(Window({{0, 1, 0, 1}}), 0.1, 0.02);
  const QuadratureGrid g = make_grid(d, d.cell());
  EXPECT_EQ(g.size(), d.active_cells().size());
  EXPECT_NEAR(g.total_weight(), d.area(), 1e-9);
  EXPECT_EQ(g.domain, Domain::Dilated);
}

TEST(Grid, RejectsBadCell) { EXPECT_THROW(make_grid(Window({{0, 1, 0, 1}}), 0.0), ConfigError); }

TEST(Rng, DerivedSeedsDifferByLabel) {
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(2, "a"));
  EXPECT_EQ(derive_seed(7, "chain"), derive_seed(7, "chain"));
}
