#include <cmath>

#include <gtest/gtest.h>

#include "hyperdet/lorentz.hpp"
#include "test_support.hpp"

namespace hyperdet {
namespace {

using testing::random_point;
using testing::random_tangent;
using testing::random_vector;
using testing::Rng;

const double kCosh1 = std::cosh(1.0);
const double kSinh1 = std::sinh(1.0);

TEST(LorentzInner, HandValues) {
  EXPECT_DOUBLE_EQ(lorentz_inner(Vector{1, 0}, Vector{1, 0}), -1.0);
  EXPECT_NEAR(lorentz_inner(Vector{std::sqrt(2.0), 1}, Vector{std::sqrt(2.0), 1}), -1.0, 1e-15);
  EXPECT_NEAR(lorentz_inner(Vector{kCosh1, kSinh1}, Vector{1, 0}), -1.5430806348152437, 1e-15);
}

TEST(LorentzInner, LengthMismatchIsDimensionError) {
  EXPECT_THROW(lorentz_inner(Vector{1, 0}, Vector{1, 0, 0}), DimensionError);
}

TEST(LorentzInner, BilinearAndSymmetric) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const Vector a = random_vector(5, 1, rng), b = random_vector(5, 1, rng), c = random_vector(5, 1, rng);
    EXPECT_DOUBLE_EQ(lorentz_inner(a, b), lorentz_inner(b, a));
    Vector ab(5);
    for (int i = 0; i < 5; ++i) ab[i] = 2 * a[i] + b[i];
    EXPECT_NEAR(lorentz_inner(ab, c), 2 * lorentz_inner(a, c) + lorentz_inner(b, c), 1e-12);
  }
}

TEST(HyperboloidPoint, RejectsOffManifoldAndLowerSheet) {
  EXPECT_THROW(HyperboloidPoint::from_coords({0.9, 0, 0}), ContractError);
  EXPECT_THROW(HyperboloidPoint::from_coords({-1, 0, 0}), ContractError);
  EXPECT_THROW(HyperboloidPoint::from_coords({1}), DimensionError);
  EXPECT_NO_THROW(HyperboloidPoint::from_coords({kCosh1, kSinh1, 0}));
}

TEST(ExpMapOrigin, Examples) {
  const HyperboloidPoint o = exp_map_origin(Vector{0, 0});
  EXPECT_EQ(o, HyperboloidPoint::origin(2));

  const HyperboloidPoint p = exp_map_origin(Vector{1, 0});
  EXPECT_NEAR(p[0], kCosh1, 1e-15);
  EXPECT_NEAR(p[1], kSinh1, 1e-15);
  EXPECT_EQ(p[2], 0.0);

  const HyperboloidPoint q = exp_map_origin(Vector{1e-4, 0});
  EXPECT_NEAR(hyperbolic_distance(q, HyperboloidPoint::origin(2)), 1e-4, 1e-9);
}

TEST(ExpMapOrigin, SeriesBranchIsContinuous) {
  // sinh(t)/t evaluated either side of the 1e-6 switch.
  const HyperboloidPoint a = exp_map_origin(Vector{0.999999e-6});
  const HyperboloidPoint b = exp_map_origin(Vector{1.000001e-6});
  EXPECT_NEAR(a[1], std::sinh(0.999999e-6), 1e-21);
  EXPECT_NEAR(b[1], std::sinh(1.000001e-6), 1e-21);
}

TEST(ExpMapOrigin, NormTransport) {
  Rng rng(2);
  const auto origin = HyperboloidPoint::origin(6);
  for (int t = 0; t < 1000; ++t) {
    const Vector v = random_vector(6, 0.8, rng);
    const HyperboloidPoint p = exp_map_origin(v);
    EXPECT_NEAR(hyperbolic_distance(p, origin), detail::euclidean_norm(v), 1e-8);
    EXPECT_LT(manifold_violation(p.coords()), kManifoldTolerance);
  }
}

TEST(ExpMapOrigin, RejectsNonFinite) {
  EXPECT_THROW(exp_map_origin(Vector{NAN, 0}), ContractError);
}

TEST(ExpMapAt, Examples) {
  const auto origin = HyperboloidPoint::origin(2);
  EXPECT_EQ(exp_map_at(origin, Vector{0, 0, 0}), origin);
  const HyperboloidPoint p = exp_map_at(origin, Vector{0, 1, 0});
  const HyperboloidPoint q = exp_map_origin(Vector{1, 0});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
}

TEST(ExpMapAt, NonTangentIsContractError) {
  const auto origin = HyperboloidPoint::origin(2);
  EXPECT_THROW(exp_map_at(origin, Vector{1, 0, 0}), ContractError);
}

TEST(ExpMapAt, ArcLengthProperty) {
  Rng rng(3);
  std::uniform_real_distribution<double> len(0.0, 5.0);
  for (int t = 0; t < 1000; ++t) {
    const HyperboloidPoint x = random_point(4, 0.7, rng);
    const double n = len(rng);
    const TangentVector u = random_tangent(x, n, rng);
    const HyperboloidPoint y = exp_map_at(x, u);
    EXPECT_NEAR(hyperbolic_distance(x, y), n, 1e-8);
    EXPECT_LT(manifold_violation(y.coords()), kManifoldTolerance);
  }
}

TEST(LogMap, Examples) {
  const auto origin = HyperboloidPoint::origin(2);
  const TangentVector z = log_map_at(origin, origin);
  EXPECT_EQ(z.components, (Vector{0, 0, 0}));

  const TangentVector u = log_map_at(origin, HyperboloidPoint::from_coords({kCosh1, kSinh1, 0}));
  EXPECT_NEAR(u.components[0], 0, 1e-12);
  EXPECT_NEAR(u.components[1], 1, 1e-12);
  EXPECT_NEAR(u.components[2], 0, 1e-12);
}

TEST(LogMap, RoundTrips) {
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    const HyperboloidPoint x = random_point(5, 0.7, rng);
    const HyperboloidPoint y = random_point(5, 0.7, rng);
    const TangentVector u = log_map_at(x, y);
    EXPECT_NEAR(lorentz_norm(u), hyperbolic_distance(x, y), 1e-9);
    const HyperboloidPoint y2 = exp_map_at(x, u);
    for (std::size_t i = 0; i < y.ambient_dim(); ++i) EXPECT_NEAR(y2[i], y[i], 1e-7);

    const TangentVector v = random_tangent(x, std::uniform_real_distribution<double>(0, 5)(rng), rng);
    const TangentVector v2 = log_map_at(x, exp_map_at(x, v));
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v2.components[i], v.components[i], 1e-6);
  }
}

TEST(Distance, Examples) {
  Rng rng(5);
  const HyperboloidPoint x = random_point(3, 1, rng);
  EXPECT_EQ(hyperbolic_distance(x, x), 0.0);
  EXPECT_NEAR(hyperbolic_distance(HyperboloidPoint::origin(1), HyperboloidPoint::from_coords({kCosh1, kSinh1})), 1.0,
              1e-15);
}

TEST(Distance, MetricAxiomsSampled) {
  Rng rng(6);
  for (int t = 0; t < 10000; ++t) {
    const HyperboloidPoint x = random_point(3, 1, rng), y = random_point(3, 1, rng), z = random_point(3, 1, rng);
    const double dxy = hyperbolic_distance(x, y);
    EXPECT_EQ(dxy, hyperbolic_distance(y, x));
    EXPECT_GT(dxy, 0.0);
    EXPECT_LE(hyperbolic_distance(x, z), dxy + hyperbolic_distance(y, z) + 1e-9);
  }
}

TEST(Distance, ArccoshArgumentIsClamped) {
  // Coincident points whose Lorentz product rounds to slightly above -1.
  const HyperboloidPoint p = exp_map_origin(Vector{0.3, -0.2, 0.1});
  EXPECT_EQ(hyperbolic_distance(p, p), 0.0);
}

TEST(Distance, Unbounded) {
  const auto origin = HyperboloidPoint::origin(2);
  const double d = hyperbolic_distance(exp_map_origin(Vector{10, 0}), origin);
  EXPECT_GT(d, 10.0 - 1e-9);
  EXPECT_NEAR(d, 10.0, 1e-9);
  // Cosine distance to the same direction saturates at 0 no matter how far out.
}

TEST(ProjectToManifold, Examples) {
  EXPECT_EQ(project_to_manifold(Vector{0.9, 0, 0}), HyperboloidPoint::origin(2));
  const HyperboloidPoint p = project_to_manifold(Vector{5, 1.1752, 0});
  EXPECT_NEAR(p[0], std::sqrt(1 + 1.1752 * 1.1752), 1e-15);
  EXPECT_NEAR(p[0], 1.5431, 1e-4);
  Rng rng(7);
  const HyperboloidPoint q = random_point(4, 1, rng);
  const HyperboloidPoint q2 = project_to_manifold(q.coords());
  for (std::size_t i = 0; i < q.ambient_dim(); ++i) EXPECT_NEAR(q2[i], q[i], 1e-12);
}

TEST(TangentProject, Examples) {
  Rng rng(8);
  const HyperboloidPoint x = random_point(4, 1, rng);
  const TangentVector t = random_tangent(x, 1.3, rng);
  const TangentVector t2 = tangent_project(x, t.components);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(t2.components[i], t.components[i], 1e-12);

  const TangentVector z = tangent_project(x, x.coords());
  for (double c : z.components) EXPECT_NEAR(c, 0.0, 1e-12);

  for (int k = 0; k < 1000; ++k) {
    const Vector g = random_vector(5, 3, rng);
    const TangentVector u = tangent_project(x, g);
    EXPECT_NEAR(lorentz_inner(x.coords(), u.components), 0.0, 1e-10);
    EXPECT_GE(lorentz_inner(u.components, u.components), -1e-12);
  }
}

TEST(Gradients, DistanceAndExpMapMatchFiniteDifferences) {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const Vector v = random_vector(4, 0.8, rng);
    const HyperboloidPoint target = random_point(4, 0.8, rng);
    // f(v) = d(exp0(v), target)
    auto f = [&](const Vector& w) { return hyperbolic_distance(exp_map_origin(w), target); };
    const HyperboloidPoint x = exp_map_origin(v);
    const double d = hyperbolic_distance(x, target);
    const Vector analytic = exp_map_origin_vjp(v, distance_gradient(x, target, d));
    const Vector numeric = testing::central_difference(f, v);
    EXPECT_LT(testing::relative_error(analytic, numeric), 1e-6);
  }
}

TEST(Gradients, ExpMapVjpSmallNormSeries) {
  Rng rng(10);
  const Vector v{3e-4, -2e-4};
  const Vector g = random_vector(3, 1, rng);
  auto f = [&](const Vector& w) {
    const auto p = exp_map_origin(w);
    return g[0] * p[0] + g[1] * p[1] + g[2] * p[2];
  };
  EXPECT_LT(testing::relative_error(exp_map_origin_vjp(v, g), testing::central_difference(f, v, 1e-7)), 1e-6);
}

}  // namespace
}  // namespace hyperdet
