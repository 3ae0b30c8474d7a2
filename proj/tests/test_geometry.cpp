#include "bielab/geometry.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace bielab;

TEST(Geometry, FlatMeshNormalsAndWeights) {
  const auto dom = GraphDomain::make(3, Profile::flat, 0.0, 1.0);
  const auto mesh = build_mesh(dom, 0.25, 4.0);
  for (int i = 0; i < mesh.size(); ++i) {
    EXPECT_DOUBLE_EQ(mesh.weights[i], 0.25 * 0.25);
    EXPECT_DOUBLE_EQ(mesh.normals[i][0], 0.0);
    EXPECT_DOUBLE_EQ(mesh.normals[i][1], 0.0);
    EXPECT_DOUBLE_EQ(mesh.normals[i][2], -1.0);
  }
}

TEST(Geometry, TentConstantSlopeWeight) {
  // phi(x) = c (1 - |x|)_+ in n = 2: cell weight h sqrt(1 + c^2) inside
  const double c = 0.7;
  const auto dom = GraphDomain::make(2, Profile::tent, c, 1.0);
  const auto mesh = build_mesh(dom, 0.05, 4.0);
  const double expect = 0.05 * std::sqrt(1.0 + c * c);
  int inside = 0;
  for (int i = 0; i < mesh.size(); ++i) {
    const double r = std::abs(mesh.nodes[i][0]);
    if (r > 0.1 && r < 0.9) {  // away from the apex and the support edge
      EXPECT_NEAR(mesh.weights[i], expect, 1e-12);
      ++inside;
    }
  }
  EXPECT_GT(inside, 10);
}

TEST(Geometry, DiskAreaFirstOrder) {
  // total weight over |x| <= 1 converges to pi at first order; boundary-cell
  // counting fluctuates, so compare errors across a factor-4 refinement
  const auto dom = GraphDomain::make(3, Profile::flat, 0.0, 0.2);
  std::vector<double> errs;
  for (double h : {0.1, 0.05, 0.025}) {
    const auto mesh = build_mesh(dom, h, 1.0);
    const double err = std::abs(mesh.total_weight() - std::numbers::pi);
    EXPECT_LT(err, 4.0 * h);
    errs.push_back(err);
  }
  EXPECT_LT(errs.back(), errs.front());
}

TEST(Geometry, FrameOrthogonality) {
  const auto dom = GraphDomain::make(3, Profile::bump, 0.5, 1.0);
  const auto mesh = build_mesh(dom, 0.1, 4.0);
  for (int i = 0; i < mesh.size(); ++i)
    for (int j = 0; j < 2; ++j)
      EXPECT_NEAR(mesh.tangent(i, j).dot(mesh.normals[i]), 0.0, 1e-12);
  // |N| = 1 exactly
  for (int i = 0; i < mesh.size(); ++i) EXPECT_NEAR(mesh.normals[i].norm(), 1.0, 1e-14);
}

TEST(Geometry, NormalsExactlyVerticalBeyondSupport) {
  const auto dom = GraphDomain::make(3, Profile::tent, 0.8, 1.0);
  const auto mesh = build_mesh(dom, 0.1, 4.0);
  for (int i = 0; i < mesh.size(); ++i) {
    if (mesh.x_of(i).norm() >= 1.0 + 2.0 * mesh.h) {
      EXPECT_DOUBLE_EQ(mesh.nodes[i][2], 0.0);
      EXPECT_DOUBLE_EQ(mesh.normals[i][2], -1.0);
    }
  }
}

TEST(Geometry, LipschitzBoundRespected) {
  const auto dom = GraphDomain::make(3, Profile::bump, 0.5, 1.0);
  const auto mesh = build_mesh(dom, 0.05, 4.0);
  for (int i = 0; i < mesh.size(); ++i)
    EXPECT_LE(mesh.grad_phi[i].norm(), dom.lipschitz_L * (1.0 + 10.0 * mesh.h));
}

TEST(Geometry, BuildMeshRejectsBadParameters) {
  const auto dom = GraphDomain::make(3, Profile::flat, 0.0, 1.0);
  EXPECT_THROW(build_mesh(dom, 0.0, 4.0), std::invalid_argument);
  EXPECT_THROW(build_mesh(dom, -0.1, 4.0), std::invalid_argument);
  EXPECT_THROW(build_mesh(dom, 0.25, 0.5), std::invalid_argument);  // cuts the graph
}

TEST(Geometry, TangentialDerivativeExamples) {
  const auto flat = build_mesh(GraphDomain::make(3, Profile::flat, 0.0, 1.0), 0.125, 4.0);
  // f(x) = x_0 -> derivative 1 along T_0
  std::vector<double> f(flat.size());
  for (int i = 0; i < flat.size(); ++i) f[i] = flat.x_of(i)[0];
  const auto df = tangential_derivative(flat, f, 0);
  for (int i = 0; i < flat.size(); ++i)
    if (flat.x_of(i).norm() < 3.0) EXPECT_NEAR(df[i], 1.0, 1e-12);
  // constants map to zero
  std::fill(f.begin(), f.end(), 3.25);
  const auto dz = tangential_derivative(flat, f, 1);
  for (double v : dz) EXPECT_DOUBLE_EQ(v, 0.0);

  // pullback of X_n along a constant-slope stretch: d/dT_0 phi = phi'
  const double c = 0.6;
  const auto tent = build_mesh(GraphDomain::make(2, Profile::tent, c, 1.0), 0.02, 4.0);
  std::vector<double> fn(tent.size());
  for (int i = 0; i < tent.size(); ++i) fn[i] = tent.nodes[i][1];  // X_n pullback
  const auto dfn = tangential_derivative(tent, fn, 0);
  for (int i = 0; i < tent.size(); ++i) {
    const double r = tent.nodes[i][0];
    if (r > 0.15 && r < 0.85) EXPECT_NEAR(dfn[i], -c, 1e-10);
  }
  EXPECT_THROW(tangential_derivative(flat, f, 2), std::out_of_range);
  EXPECT_THROW(tangential_derivative(flat, f, -1), std::out_of_range);
}

TEST(Geometry, AnnulusNodes) {
  const auto mesh = build_mesh(GraphDomain::make(3, Profile::flat, 0.0, 1.0), 0.125, 4.0);
  const auto z0 = annulus_nodes(mesh, 0);
  for (int i : z0) {
    const double r = mesh.x_of(i).norm();
    EXPECT_GT(r, 0.5);
    EXPECT_LE(r, 2.0);
  }
  // j too large for the truncation
  EXPECT_THROW(annulus_nodes(mesh, 2), std::invalid_argument);
  // alternating annuli j, j+2 are disjoint
  const auto z1 = annulus_nodes(mesh, 1);
  const auto zm1 = annulus_nodes(mesh, -1);
  for (int i : zm1) EXPECT_EQ(std::count(z1.begin(), z1.end(), i), 0);
  // annuli with factor-2 overlap cover 1/2 < |x| <= R_trunc
  std::vector<char> covered(mesh.size(), 0);
  for (int j = -1; j <= 1; ++j)
    for (int i : annulus_nodes(mesh, j)) covered[i] = 1;
  for (int i = 0; i < mesh.size(); ++i) {
    const double r = mesh.x_of(i).norm();
    if (r > 0.5 && r <= 4.0) EXPECT_TRUE(covered[i]) << "r=" << r;
  }
}

TEST(Geometry, RefinementConvergesSurfaceIntegral) {
  // bump graph: total area over a fixed ball converges at first order
  const auto dom = GraphDomain::make(3, Profile::bump, 0.5, 1.0);
  double prev = -1, prev_diff = 1e9;
  for (double h : {0.2, 0.1, 0.05}) {
    const auto mesh = build_mesh(dom, h, 4.0);
    double area = 0;
    for (int i = 0; i < mesh.size(); ++i)
      if (mesh.x_of(i).norm() <= 2.0) area += mesh.weights[i];
    if (prev > 0) {
      const double diff = std::abs(area - prev);
      EXPECT_LT(diff, prev_diff);
      prev_diff = diff;
    }
    prev = area;
  }
}

TEST(Geometry, ConfigParseAndCsvDump) {
  const std::string text =
      "# test domain\n"
      "dim = 4\n"
      "profile = bump\n"
      "amplitude = 0.5\n"
      "rho = 1.0\n"
      "h = 0.5\n"
      "rtrunc = 4\n";
  const DomainConfig cfg = parse_domain_config(text);
  EXPECT_EQ(cfg.domain.n, 4);
  EXPECT_EQ(cfg.domain.profile, Profile::bump);
  EXPECT_DOUBLE_EQ(cfg.h, 0.5);
  const auto mesh = build_mesh(cfg.domain, cfg.h, cfg.R_trunc);
  std::ostringstream csv;
  mesh_to_csv(mesh, csv);
  const std::string text_out = csv.str();
  EXPECT_NE(text_out.find("x0,x1,x2,phi,weight,n0,n1,n2,n3"), std::string::npos);
  // one line per node plus header
  EXPECT_EQ(std::count(text_out.begin(), text_out.end(), '\n'),
            static_cast<long>(mesh.size()) + 1);
  EXPECT_THROW(parse_domain_config("profile = frisbee\n"), std::invalid_argument);
}

TEST(Geometry, DistToBoundary) {
  const auto flat = build_mesh(GraphDomain::make(3, Profile::flat, 0.0, 1.0), 0.25, 4.0);
  EXPECT_NEAR(flat.dist_to_boundary(Vec{0.3, -0.2, 0.7}), 0.7, 1e-12);
  const auto bump = build_mesh(GraphDomain::make(3, Profile::bump, 0.5, 1.0), 0.1, 4.0);
  // far above the bump the distance is below the vertical gap
  const Vec X{0.0, 0.0, 2.0};
  EXPECT_LE(bump.dist_to_boundary(X), 2.0 - 0.5 + 1e-12);
  EXPECT_GT(bump.dist_to_boundary(X), 1.0);
}
