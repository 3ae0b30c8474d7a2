#include "bielab/nt_maximal.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "bielab/core.hpp"
#include "bielab/estimate_lab.hpp"

using namespace bielab;

namespace {

BoundaryMesh flat3(double h = 0.25, double R = 4.0) {
  return build_mesh(GraphDomain::make(3, Profile::flat, 0.0, 1.0), h, R);
}

std::vector<int> every(const BoundaryMesh& mesh, int stride) {
  std::vector<int> out;
  for (int i = 0; i < mesh.size(); i += stride) out.push_back(i);
  return out;
}

}  // namespace

TEST(NtMaximal, ConstantField) {
  const auto mesh = flat3();
  const ConeSpec spec = ConeSpec::make(mesh, 8.0);
  const auto M = nt_max([](const Vec&) { return -2.5; }, mesh, spec, every(mesh, 7));
  for (double v : M) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(NtMaximal, HeightFieldCapsAtTmax) {
  const auto mesh = flat3();
  const double t_max = 6.0;
  const ConeSpec spec = ConeSpec::make(mesh, t_max);
  const auto M =
      nt_max([](const Vec& X) { return X[2]; }, mesh, spec, every(mesh, 7));
  for (double v : M) EXPECT_NEAR(v, t_max, 1e-9);
}

// Half-space Poisson kernel oracle: the harmonic extension of a boundary
// indicator obeys 0 <= u <= 1, M(u) <= 1, and M(u) >= 1 - tol over the
// indicator's support.
TEST(NtMaximal, PoissonIndicatorOracle) {
  const auto mesh = flat3(0.125);
  const double a = 1.5;  // indicator radius
  auto poisson_u = [&](const Vec& X) {
    // 2/omega_3 * int_{|y|<a} t / (|x-y|^2+t^2)^{3/2} dy, radial reduction
    const double t = X[2];
    const Vec x = X.head(2);
    double s = 0;
    const int m = 160;
    const double dr = a / m;
    for (int i = 0; i < m; ++i) {
      const double r = (i + 0.5) * dr;
      const int mth = 256;
      for (int q = 0; q < mth; ++q) {
        const double th = (q + 0.5) * 2.0 * std::numbers::pi / mth;
        const double dx = x[0] - r * std::cos(th), dy = x[1] - r * std::sin(th);
        s += t / std::pow(dx * dx + dy * dy + t * t, 1.5) * r * dr *
             (2.0 * std::numbers::pi / mth);
      }
    }
    return s * 2.0 / unit_sphere_area(3);
  };
  const ConeSpec spec = ConeSpec::make(mesh, 4.0, 0.05, 8, 0);
  std::vector<int> nodes;
  for (int i = 0; i < mesh.size(); i += 31) nodes.push_back(i);
  const auto M = nt_max(poisson_u, mesh, spec, nodes);
  for (size_t k = 0; k < nodes.size(); ++k) {
    EXPECT_LE(M[k], 1.0 + 1e-6);
    if (mesh.x_of(nodes[k]).norm() < 0.8) EXPECT_GE(M[k], 1.0 - 0.1);
  }
}

TEST(NtMaximal, SplitRecombinesToMax) {
  const auto mesh = build_mesh(GraphDomain::make(3, Profile::bump, 0.5, 1.0), 0.25, 4.0);
  const ConeSpec spec = ConeSpec::make(mesh, 8.0);
  const double slope = 100.0 * std::max(mesh.domain.lipschitz_L, 1.0);
  auto field = [&](const Vec& X) {
    return std::sin(1.3 * X[0]) * std::exp(-0.2 * X.norm_sq()) + 0.3 * X[2];
  };
  const auto nodes = every(mesh, 11);
  const auto M = nt_max(field, mesh, spec, nodes);
  const auto [m1, m2] = nt_max_split(field, mesh, spec, slope, nodes);
  for (size_t k = 0; k < nodes.size(); ++k)
    EXPECT_DOUBLE_EQ(std::max(m1[k], m2[k]), M[k]);
}

TEST(NtMaximal, EmptyGammaZeroConvention) {
  const auto mesh = flat3();
  // cap the cone low: at far-out nodes Gamma_0 (slope 100) misses every
  // sample, so M1 = 0 and M2 carries the value
  ConeSpec spec = ConeSpec::make(mesh, 0.5, 0.1, 4, 0);
  std::vector<int> far;
  for (int i = 0; i < mesh.size(); ++i)
    if (mesh.x_of(i).norm() > 3.0) far.push_back(i);
  ASSERT_FALSE(far.empty());
  const auto [m1, m2] = nt_max_split([](const Vec&) { return 1.0; }, mesh, spec, 100.0, far);
  for (size_t k = 0; k < far.size(); ++k) {
    EXPECT_DOUBLE_EQ(m1[k], 0.0);
    EXPECT_DOUBLE_EQ(m2[k], 1.0);
  }
}

TEST(NtMaximal, HighBumpFieldFeedsM1) {
  const auto mesh = flat3();
  const ConeSpec spec = ConeSpec::make(mesh, 16.0, 0.1, 12, 0);
  // field supported high above the boundary near the vertical axis
  auto field = [](const Vec& X) {
    const double r2 = X.head(2).norm_sq() + (X[2] - 8.0) * (X[2] - 8.0);
    return std::exp(-r2 / 4.0);
  };
  std::vector<int> origin_nodes;
  for (int i = 0; i < mesh.size(); ++i)
    if (mesh.x_of(i).norm() < 0.05) origin_nodes.push_back(i);
  ASSERT_FALSE(origin_nodes.empty());
  const auto [m1, m2] = nt_max_split(field, mesh, spec, 100.0, origin_nodes);
  EXPECT_GT(m1[0], 0.5);
  EXPECT_LT(m2[0], 1e-8);
}

TEST(NtMaximal, MonotoneUnderLadderRefinement) {
  const auto mesh = flat3();
  auto field = [](const Vec& X) { return std::cos(2.0 * X[0]) * std::exp(-X[2]); };
  const auto nodes = every(mesh, 13);
  ConeSpec coarse = ConeSpec::make(mesh, 8.0, 0.1, 5, 1);
  ConeSpec fine = coarse;
  fine.heights = 17;  // refinement includes more samples
  const auto Mc = nt_max(field, mesh, coarse, nodes);
  const auto Mf = nt_max(field, mesh, fine, nodes);
  for (size_t k = 0; k < nodes.size(); ++k) EXPECT_GE(Mf[k] + 1e-12, Mc[k]);
}

TEST(NtMaximal, GammaZeroSlopeFloorEnforced) {
  const auto mesh = flat3();
  const ConeSpec spec = ConeSpec::make(mesh, 4.0);
  EXPECT_THROW(
      nt_max_split([](const Vec&) { return 1.0; }, mesh, spec, 50.0, every(mesh, 50)),
      std::invalid_argument);
}

TEST(NtMaximal, EmptyLadderRejected) {
  const auto mesh = flat3();
  ConeSpec spec = ConeSpec::make(mesh, 4.0);
  spec.heights = 0;
  EXPECT_THROW(nt_max([](const Vec&) { return 1.0; }, mesh, spec, every(mesh, 50)),
               std::invalid_argument);
}

TEST(NtMaximal, RegionLpNorms) {
  const auto mesh = flat3(0.25);
  std::vector<int> region;
  for (int i = 0; i < mesh.size(); ++i)
    if (mesh.x_of(i).norm() <= 2.0) region.push_back(i);
  std::vector<double> ones(region.size(), 1.0);
  double W = 0;
  for (int i : region) W += mesh.weights[i];
  for (double p : {1.0, 2.0, 3.0})
    EXPECT_NEAR(region_Lp_norm(mesh, ones, p, region), std::pow(W, 1.0 / p), 1e-10);

  // p = 2 equals the weighted Euclidean norm
  Rng rng(9);
  std::vector<double> v(region.size());
  for (auto& x : v) x = rng.normal();
  double e2 = 0;
  for (size_t k = 0; k < region.size(); ++k) e2 += v[k] * v[k] * mesh.weights[region[k]];
  EXPECT_NEAR(region_Lp_norm(mesh, v, 2.0, region), std::sqrt(e2), 1e-12);

  // Hoelder consistency: ||v||_p <= ||v||_q W^{1/p - 1/q} for p < q
  const double n1 = region_Lp_norm(mesh, v, 1.5, region);
  const double n2 = region_Lp_norm(mesh, v, 3.0, region);
  EXPECT_LE(n1, n2 * std::pow(W, 1.0 / 1.5 - 1.0 / 3.0) * (1 + 1e-12));

  // quasi-norm accepted, p <= 0 rejected, empty region warns and returns 0
  EXPECT_GT(region_Lp_norm(mesh, v, 0.5, region), 0.0);
  EXPECT_THROW(region_Lp_norm(mesh, v, 0.0, region), std::invalid_argument);
  EXPECT_DOUBLE_EQ(region_Lp_norm(mesh, {}, 2.0, {}), 0.0);
}

TEST(NtMaximal, ProfileCsvDump) {
  const auto mesh = flat3(0.5);
  const ConeSpec spec = ConeSpec::make(mesh, 4.0);
  const auto profile = maximal_profile([](const Vec& X) { return X[2]; }, mesh, spec, 100.0,
                                       every(mesh, 3));
  std::ostringstream out;
  profile.to_csv(mesh, out);
  const std::string text = out.str();
  EXPECT_NE(text.find("M,M1,M2"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'),
            static_cast<long>(profile.nodes.size()) + 1);
}

// Manufactured harmonic field G(X - P), P below the graph: M(grad u) decays
// like |Q|^{1-n} along the boundary (fit within +-0.3 over three annuli).
TEST(NtMaximal, ManufacturedFieldDecaySlope) {
  const auto mesh = build_mesh(GraphDomain::make(3, Profile::flat, 0.0, 0.4), 0.1, 8.0);
  Vec P{0.1, 0.0, -0.5};
  auto grad_mag = [&](const Vec& X) { return grad_G(X - P, 3).norm(); };
  const ConeSpec spec = ConeSpec::make(mesh, 2.0, 0.05, 10, 0);
  std::vector<double> xs, ys;
  for (int j = 0; j <= 2; ++j) {
    const auto ring = annulus_nodes(mesh, j);
    std::vector<int> sub;
    for (size_t k = 0; k < ring.size(); k += 23) sub.push_back(ring[k]);
    const auto M = nt_max(grad_mag, mesh, spec, sub);
    double mean = 0;
    for (double v : M) mean += v;
    xs.push_back(j);
    ys.push_back(std::log2(mean / M.size()));
  }
  const double slope = linear_fit(xs, ys).slope;
  EXPECT_NEAR(slope, 1.0 - 3.0, 0.3);  // |Q|^{1-n}, n = 3
}
