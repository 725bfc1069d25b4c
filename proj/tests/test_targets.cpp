#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "regflow/fields.hpp"
#include "regflow/targets.hpp"

using namespace regflow;

namespace {

QuadratureRule square_rule(std::size_t n = 4, int order = 5) {
  return quadrature(structured_triangulation({0, 1, 0, 1}, n, n), order);
}

std::vector<Vec2> identity_images(const Target& t) { return t.sample_points(); }

// A smooth perturbation of the identity, sampled at the given points.
std::vector<Vec2> warp(const std::vector<Vec2>& pts, double s) {
  std::vector<Vec2> out;
  for (const Vec2& x : pts)
    out.emplace_back(x.x() + s * std::sin(M_PI * x.x()) * x.y(), x.y() + s * x.x() * x.x() * (1 - x.y()));
  return out;
}

std::vector<Vec2> random_points(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec2> p(n);
  for (Vec2& x : p) x = Vec2(u(rng), u(rng));
  return p;
}

MatrixXd random_row_stochastic(Eigen::Index n0, Eigen::Index n1, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  MatrixXd p(n0, n1);
  for (Eigen::Index i = 0; i < n0; ++i) {
    for (Eigen::Index j = 0; j < n1; ++j) p(i, j) = u(rng);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

TEST(DistributedTarget, Examples) {
  const DistributedTarget c(constant_field(3.0), {constant_field(1.0)}, square_rule());
  EXPECT_LT(std::abs(c.value(warp(c.sample_points(), 0.1))), 1e-28);

  const DistributedTarget lin(monomial_field(1, 0), {constant_field(1.0)}, square_rule());
  EXPECT_NEAR(lin.value(identity_images(lin)), 1.0 / 24.0, 1e-14);

  // Z_N = {0}: half the squared L2 norm; int x1^2 = 1/3
  const DistributedTarget none(monomial_field(1, 0), {}, square_rule());
  EXPECT_EQ(none.z_dimension(), 0u);
  EXPECT_NEAR(none.value(identity_images(none)), 1.0 / 6.0, 1e-14);

  EXPECT_THROW(DistributedTarget(monomial_field(1, 0), {constant_field(1.0), constant_field(2.0)}, square_rule()),
               DecompositionError);
  EXPECT_THROW(lin.value({Vec2(0.5, 0.5)}), SizeError);
}

TEST(DistributedTarget, NestedSpacesDecrease) {
  const ScalarField u = gaussian_ridge(Vec2(0.4, 0.5), Vec2(1, 0.4), 0.15);
  const QuadratureRule q = square_rule();
  std::vector<ScalarField> z;
  double prev = DistributedTarget(u, z, q).value(warp(DistributedTarget(u, z, q).sample_points(), 0.05));
  for (const auto& [i, j] : std::vector<std::pair<int, int>>{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}}) {
    z.push_back(monomial_field(i, j));
    const DistributedTarget t(u, z, q);
    const double v = t.value(warp(t.sample_points(), 0.05));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, prev + 1e-15);
    prev = v;
  }
  // u in Z_N gives zero at the identity
  const DistributedTarget exact(monomial_field(1, 1), z, q);
  EXPECT_LT(exact.value(identity_images(exact)), 1e-28);
}

TEST(DistributedTarget, FrechetMatchesFiniteDifference) {
  const DistributedTarget t(gaussian_bump(Vec2(0.45, 0.6), 0.25), {constant_field(1.0), monomial_field(0, 1)},
                            square_rule());
  const auto phi = warp(t.sample_points(), 0.1);
  std::vector<Vec2> h;
  for (const Vec2& x : t.sample_points()) h.emplace_back(std::cos(2 * x.y()), x.x() * x.y() - 0.3);
  const double eps = 1e-5;
  std::vector<Vec2> plus = phi, minus = phi;
  for (std::size_t q = 0; q < phi.size(); ++q) {
    plus[q] += eps * h[q];
    minus[q] -= eps * h[q];
  }
  const double fd = (t.value(plus) - t.value(minus)) / (2 * eps);
  EXPECT_NEAR(t.frechet(phi, h), fd, 1e-6 * std::abs(fd));

  const std::vector<Vec2> zero(h.size(), Vec2::Zero());
  EXPECT_EQ(t.frechet(phi, zero), 0.0);
  const DistributedTarget c(constant_field(2.0), {}, square_rule());
  EXPECT_EQ(c.frechet(phi, h), 0.0);
  EXPECT_THROW(t.frechet(phi, {Vec2::Zero()}), SizeError);
}

TEST(Frechet, LinearInDirection) {
  const DistributedTarget dt(gaussian_bump(Vec2(0.5, 0.5), 0.3), {constant_field(1.0)}, square_rule(3, 3));
  const auto src = random_points(9, 1);
  const PointwiseTarget pt(src, random_points(5, 2), random_row_stochastic(9, 5, 3));
  for (const Target* t : {static_cast<const Target*>(&dt), static_cast<const Target*>(&pt)}) {
    const auto n = t->sample_points().size();
    const auto phi = warp(t->sample_points(), 0.07);
    const auto h1 = random_points(n, 4, -1, 1), h2 = random_points(n, 5, -1, 1);
    std::vector<Vec2> mix(n);
    for (std::size_t q = 0; q < n; ++q) mix[q] = 0.7 * h1[q] - 2.5 * h2[q];
    EXPECT_NEAR(t->frechet(phi, mix), 0.7 * t->frechet(phi, h1) - 2.5 * t->frechet(phi, h2), 1e-12);
  }
}

TEST(PointwiseTarget, Examples) {
  const PointwiseTarget one({Vec2(0.3, 0.3)}, {Vec2(1, 0)}, MatrixXd::Ones(1, 1));
  EXPECT_EQ(one.value({Vec2(0, 0)}), 0.5);

  const auto src = random_points(7, 6);
  const auto dst = random_points(4, 7);
  const MatrixXd p = random_row_stochastic(7, 4, 8);
  const PointwiseTarget t(src, dst, p);
  const auto bary = t.barycenters();
  for (const Vec2& g : t.dual(bary)) EXPECT_LT(g.norm(), 1e-15);
  EXPECT_NEAR(t.frechet(bary, random_points(7, 9)), 0.0, 1e-15);

  const auto img = random_points(7, 10);
  double brute = 0.0;
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      brute += 0.5 * p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (img[i] - dst[j]).squaredNorm();
  EXPECT_NEAR(t.value(img), brute, 1e-12);
  EXPECT_GE(t.value(img), 0.0);

  // the barycenters minimize over images
  const double at_bary = t.value(bary);
  for (const Vec2& d : random_points(5, 11, -0.1, 0.1)) {
    std::vector<Vec2> moved = bary;
    moved[2] += d;
    EXPECT_GT(t.value(moved), at_bary);
  }
  EXPECT_THROW(t.value({Vec2::Zero()}), SizeError);
}

TEST(PointwiseTarget, FrechetMatchesFiniteDifference) {
  const auto src = random_points(8, 12);
  const PointwiseTarget t(src, random_points(6, 13), random_row_stochastic(8, 6, 14));
  const auto img = random_points(8, 15);
  const auto h = random_points(8, 16, -1, 1);
  const double eps = 1e-5;
  std::vector<Vec2> plus = img, minus = img;
  for (std::size_t q = 0; q < img.size(); ++q) {
    plus[q] += eps * h[q];
    minus[q] -= eps * h[q];
  }
  EXPECT_NEAR(t.frechet(img, h), (t.value(plus) - t.value(minus)) / (2 * eps), 1e-8);
  EXPECT_EQ(t.frechet(img, std::vector<Vec2>(8, Vec2::Zero())), 0.0);
}

TEST(PointwiseTarget, WeightValidation) {
  const auto a = random_points(3, 17), b = random_points(2, 18);
  MatrixXd bad = MatrixXd::Constant(3, 2, 0.4);
  EXPECT_THROW(PointwiseTarget(a, b, bad), ValidationError);
  EXPECT_THROW(PointwiseTarget(a, b, MatrixXd::Constant(2, 2, 0.5)), SizeError);
  MatrixXd neg(3, 2);
  neg << 1.2, -0.2, 0.5, 0.5, 0.5, 0.5;
  EXPECT_THROW(PointwiseTarget(a, b, neg), ValidationError);
  EXPECT_THROW(PointwiseTarget(a, b, MatrixXd::Constant(3, 2, 0.5), WeightMode::doubly_stochastic), ValidationError);
  EXPECT_THROW(PointwiseTarget::matched(a, b), SizeError);
}

TEST(EmUpdate, Examples) {
  const PointwiseTarget one({Vec2(0.1, 0.1)}, {Vec2(0.9, 0.9)}, MatrixXd::Ones(1, 1));
  for (double s : {0.05, 1.0, 100.0}) EXPECT_EQ(one.em_update_weights({Vec2(0.1, 0.1)}, s)(0, 0), 1.0);

  const std::vector<Vec2> pair = {Vec2(0.3, 0.3), Vec2(0.3, 0.3)};
  const PointwiseTarget coincide = PointwiseTarget::matched(pair, pair);
  const MatrixXd u = coincide.em_update_weights(pair, 1e3);
  EXPECT_LT((u.array() - 0.5).abs().maxCoeff(), 1e-12);

  // separated pairs: off-diagonal ratio is exp(-d^2 / (2 sigma^2)) with d = 0.5
  const std::vector<Vec2> src = {Vec2(0.2, 0.5), Vec2(0.7, 0.5)};
  const PointwiseTarget sep = PointwiseTarget::matched(src, src);
  const double sigma = 0.05;
  const MatrixXd p = sep.em_update_weights(src, sigma);
  EXPECT_LT((p - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(p(0, 1), std::exp(-0.25 / (2 * sigma * sigma)), 1e-30);

  EXPECT_THROW(sep.em_update_weights(src, 0.0), ValidationError);
  EXPECT_THROW(sep.em_update_weights({Vec2(50, 50), Vec2(0.7, 0.5)}, 1e-3), NumericalError);
}

TEST(EmUpdate, StochasticInvariants) {
  const auto src = random_points(10, 19);
  const auto dst = random_points(10, 20);
  const auto img = random_points(10, 21);
  for (WeightMode mode : {WeightMode::row_stochastic, WeightMode::doubly_stochastic}) {
    PointwiseTarget t = PointwiseTarget::matched(src, dst, mode);
    for (double sigma : {1.0, 0.2}) {
      const MatrixXd p = t.em_update_weights(img, sigma);
      EXPECT_GE(p.minCoeff(), 0.0);
      EXPECT_LE(p.maxCoeff(), 1.0);
      EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-8);
      if (mode == WeightMode::doubly_stochastic) EXPECT_LT((p.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-8);
      t.set_weights(p);
    }
  }
  // a narrow kernel on unmatched clouds balances too slowly
  EXPECT_THROW(PointwiseTarget::matched(src, dst, WeightMode::doubly_stochastic).em_update_weights(img, 0.05),
               NumericalError);
  EXPECT_NO_THROW(PointwiseTarget::matched(src, dst).em_update_weights(img, 0.05));
  const PointwiseTarget uneven(src, random_points(4, 22), random_row_stochastic(10, 4, 23));
  const MatrixXd r = uneven.em_update_weights(img, 0.3);
  EXPECT_LT((r.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(EmUpdate, Annealing) {
  EXPECT_NEAR(anneal_sigma(1.0, 0.01), 0.92, 1e-16);
  EXPECT_EQ(anneal_sigma(0.0105, 0.01), 0.01);
  const PointwiseTarget t({Vec2(0, 0)}, {Vec2(3, 4), Vec2(0, 1)}, MatrixXd::Constant(1, 2, 0.5));
  EXPECT_NEAR(t.initial_sigma({Vec2(0, 0)}), 3.0, 1e-15);
}
