#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "regflow/geometry.hpp"
#include "regflow/mesh_io.hpp"
#include "regflow/quadrature.hpp"

using namespace regflow;

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// int over the reference triangle of x^i y^j = i! j! / (i + j + 2)!
double reference_monomial_integral(int i, int j) { return factorial(i) * factorial(j) / factorial(i + j + 2); }

Triangulation reference_triangle() {
  Triangulation t;
  t.nodes = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  t.triangles = {{0, 1, 2}};
  t.boundary_facets = {{0, 2}, {0, 1}, {1, 2}};
  return t;
}

}  // namespace

TEST(OutwardNormal, UnitSquareFacets) {
  const auto sq = PolygonalDomain::unit_square();
  EXPECT_EQ(outward_normal(sq, 0), Vec2(0, -1));
  EXPECT_EQ(outward_normal(sq, 1), Vec2(1, 0));
  EXPECT_EQ(outward_normal(sq, 2), Vec2(0, 1));
  EXPECT_EQ(outward_normal(sq, 3), Vec2(-1, 0));
}

TEST(OutwardNormal, DiagonalFacet) {
  const PolygonalDomain tri({Vec2(0, 0), Vec2(1, 1), Vec2(0, 1)});
  const Vec2 n = outward_normal(tri, 0);
  EXPECT_NEAR(n.x(), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(n.y(), -1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(n.norm(), 1.0, 1e-15);
}

TEST(OutwardNormal, InvalidIdThrows) {
  EXPECT_THROW(outward_normal(PolygonalDomain::unit_square(), 4), IndexError);
}

TEST(OutwardNormal, HoleNormalsPointIntoHole) {
  const PolygonalDomain d({Vec2(0, 0), Vec2(4, 0), Vec2(4, 4), Vec2(0, 4)},
                          {{Vec2(1, 1), Vec2(1, 2), Vec2(2, 2), Vec2(2, 1)}});
  const Vec2 hole_center(1.5, 1.5);
  for (const Facet& f : d.facets()) {
    if (f.loop_id == 0) continue;
    const Vec2 mid = f.point(0.5);
    EXPECT_GT((hole_center - mid).dot(f.normal), 0.0);
  }
  EXPECT_NEAR(d.area(), 15.0, 1e-14);
}

TEST(PolygonalDomain, NormalLengthSumVanishes) {
  const PolygonalDomain d({Vec2(0, 0), Vec2(3, 0.5), Vec2(4, 2), Vec2(1.5, 3.5), Vec2(-0.5, 1.5)},
                          {{Vec2(1, 1), Vec2(1.2, 2), Vec2(2, 1.8)}});
  Vec2 s = Vec2::Zero();
  for (const Facet& f : d.facets()) s += f.length() * f.normal;
  EXPECT_LT(s.norm(), 1e-12);
}

TEST(PolygonalDomain, RejectsBadLoops) {
  EXPECT_THROW(PolygonalDomain({Vec2(0, 0), Vec2(0, 1), Vec2(1, 1), Vec2(1, 0)}), ValidationError);  // clockwise
  EXPECT_THROW(PolygonalDomain({Vec2(0, 0), Vec2(1, 1), Vec2(1, 0), Vec2(0, 1)}), ValidationError);  // bow tie
  EXPECT_THROW(PolygonalDomain({Vec2(0, 0), Vec2(1, 0), Vec2(1, 0), Vec2(0, 1)}), ValidationError);  // repeat
  // hole touching the outer boundary
  EXPECT_THROW(PolygonalDomain({Vec2(0, 0), Vec2(2, 0), Vec2(2, 2), Vec2(0, 2)},
                               {{Vec2(0, 0.5), Vec2(1, 1), Vec2(1, 0.5)}}),
               ValidationError);
  // overlapping holes
  EXPECT_THROW(PolygonalDomain({Vec2(0, 0), Vec2(4, 0), Vec2(4, 4), Vec2(0, 4)},
                               {{Vec2(1, 1), Vec2(1, 2), Vec2(2, 2), Vec2(2, 1)},
                                {Vec2(1.5, 1.5), Vec2(1.5, 3), Vec2(3, 3), Vec2(3, 1.5)}}),
               ValidationError);
}

TEST(ClassifyPoint, UnitSquare) {
  const auto sq = PolygonalDomain::unit_square();
  EXPECT_EQ(classify_point(sq, Vec2(0.5, 0.5), 1e-9), PointClass::interior);
  EXPECT_EQ(classify_point(sq, Vec2(1.0, 0.5), 1e-9), PointClass::boundary);
  EXPECT_EQ(classify_point(sq, Vec2(1.5, 0.5), 1e-9), PointClass::exterior);
  EXPECT_THROW(classify_point(sq, Vec2(0.5, 0.5), -1.0), ValidationError);
}

TEST(ClassifyPoint, InsideHoleIsExterior) {
  const PolygonalDomain d({Vec2(0, 0), Vec2(4, 0), Vec2(4, 4), Vec2(0, 4)},
                          {{Vec2(1, 1), Vec2(1, 2), Vec2(2, 2), Vec2(2, 1)}});
  EXPECT_EQ(classify_point(d, Vec2(1.5, 1.5), 1e-9), PointClass::exterior);
  EXPECT_EQ(classify_point(d, Vec2(1.0, 1.5), 1e-9), PointClass::boundary);
  EXPECT_EQ(classify_point(d, Vec2(3.0, 3.0), 1e-9), PointClass::interior);
}

TEST(Quadrature, TwoTriangleSquareOrder1Area) {
  const Triangulation t = structured_triangulation({0, 1, 0, 1}, 1, 1);
  ASSERT_EQ(t.triangles.size(), 2u);
  double s = 0.0;
  for (const QuadPoint& q : quadrature(t, 1)) s += q.weight;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Quadrature, AnalyticIntegrals) {
  const Triangulation t = structured_triangulation({0, 1, 0, 1}, 1, 1);
  EXPECT_NEAR(integrate(quadrature(t, 2), [](const Vec2& x) { return x.x(); }), 0.5, 1e-14);
  EXPECT_NEAR(integrate(quadrature(t, 5), [](const Vec2& x) { return x.x() * x.x() * x.y() * x.y(); }), 1.0 / 9.0,
              1e-14);
}

TEST(Quadrature, ExactToOrderOnReferenceTriangle) {
  const Triangulation t = reference_triangle();
  for (int order = 1; order <= 5; ++order) {
    const QuadratureRule r = quadrature(t, order);
    for (int i = 0; i <= order; ++i)
      for (int j = 0; i + j <= order; ++j) {
        const double v = integrate(r, [&](const Vec2& x) { return std::pow(x.x(), i) * std::pow(x.y(), j); });
        EXPECT_NEAR(v, reference_monomial_integral(i, j), 1e-14) << "order " << order << " x^" << i << " y^" << j;
      }
  }
}

TEST(Quadrature, HighDegreeCollapsedRule) {
  const Triangulation t = reference_triangle();
  for (int degree : {6, 9, 14}) {
    const QuadratureRule r = quadrature_exact_to(t, degree);
    for (int i = 0; i <= degree; ++i)
      for (int j = 0; i + j <= degree; ++j) {
        const double v = integrate(r, [&](const Vec2& x) { return std::pow(x.x(), i) * std::pow(x.y(), j); });
        EXPECT_NEAR(v, reference_monomial_integral(i, j), 1e-15) << "degree " << degree;
      }
  }
}

TEST(Quadrature, UnsupportedOrder) {
  const Triangulation t = reference_triangle();
  EXPECT_THROW(quadrature(t, 0), UnsupportedError);
  EXPECT_THROW(quadrature(t, 6), UnsupportedError);
}

TEST(Quadrature, WeightsSumToAreaAndPointsClassify) {
  const auto sq = PolygonalDomain::rectangle(-1, 2, 0.5, 1.5);
  const Triangulation t = structured_triangulation({-1, 2, 0.5, 1.5}, 7, 3);
  t.validate(&sq);
  for (int order = 1; order <= 5; ++order) {
    double s = 0.0;
    for (const QuadPoint& q : quadrature(t, order)) {
      s += q.weight;
      EXPECT_NE(classify_point(sq, q.point, 1e-12), PointClass::exterior);
    }
    EXPECT_NEAR(s, 3.0, 3e-12);
  }
}

TEST(Triangulation, ValidateRejectsInvertedTriangle) {
  Triangulation t = reference_triangle();
  t.triangles[0] = {0, 2, 1};
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(MeshIo, RoundTrip) {
  const Triangulation t = structured_triangulation({0, 1, 0, 2}, 2, 3);
  std::stringstream ss;
  write_mesh(ss, t);
  const Triangulation r = read_mesh(ss);
  ASSERT_EQ(r.nodes.size(), t.nodes.size());
  ASSERT_EQ(r.triangles, t.triangles);
  ASSERT_EQ(r.boundary_facets, t.boundary_facets);
  for (std::size_t i = 0; i < t.nodes.size(); ++i) EXPECT_EQ(r.nodes[i], t.nodes[i]);
}

TEST(MeshIo, ArbitraryIdsAndComments) {
  std::istringstream in(
      "# small mesh\nNODES\n10 0 0\n20 1 0\n30 0 1\nTRIANGLES\n1 10 20 30\nBOUNDARY\n10 0\n10 2\n20 0\n20 1\n30 1\n30 2\n");
  const Triangulation t = read_mesh(in);
  EXPECT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.triangles[0], (std::array<std::size_t, 3>{0, 1, 2}));
  EXPECT_EQ(t.boundary_facets[0], (std::set<std::size_t>{0, 2}));
  EXPECT_NEAR(t.area(), 0.5, 1e-15);
}

TEST(MeshIo, ErrorsNameTheLine) {
  std::istringstream in("NODES\n0 0 0\n1 1 0\nTRIANGLES\n0 0 1 7\n");
  try {
    read_mesh(in);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
  }
}

TEST(CurvedMap, RoundTripAndFacets) {
  const Rect r{0, 1, 0, 1};
  const CurvedMap m = sine_bulge_map(r, 0.3);
  for (double x : {0.0, 0.17, 0.5, 0.93, 1.0})
    for (double y : {0.0, 0.21, 0.5, 1.0}) {
      const Vec2 p(x, y);
      EXPECT_LT((m.inverse(m.forward(p)) - p).norm(), 1e-10);
    }
  // bottom and side facets are fixed, the top facet follows the bulge
  EXPECT_EQ(m.forward(Vec2(0.4, 0.0)), Vec2(0.4, 0.0));
  EXPECT_EQ(m.forward(Vec2(0.0, 0.4)).x(), 0.0);
  EXPECT_NEAR(m.forward(Vec2(0.5, 1.0)).y(), 1.3, 1e-15);
  // gradient vs central differences
  const Vec2 p(0.3, 0.6);
  const double h = 1e-6;
  for (int c = 0; c < 2; ++c) {
    Vec2 e = Vec2::Zero();
    e[c] = h;
    const Vec2 fd = (m.forward(p + e) - m.forward(p - e)) / (2 * h);
    EXPECT_LT((fd - m.forward_gradient(p).col(c)).norm(), 1e-8);
  }
}
