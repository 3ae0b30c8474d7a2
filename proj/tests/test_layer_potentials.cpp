#include "bielab/layer_potentials.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <numbers>

#include "bielab/estimate_lab.hpp"

using namespace bielab;

namespace {

BoundaryMesh flat3(double h = 0.125, double R = 4.0) {
  return build_mesh(GraphDomain::make(3, Profile::flat, 0.0, 1.0), h, R);
}

BoundaryMesh bump3(double h = 0.125, double R = 4.0) {
  return build_mesh(GraphDomain::make(3, Profile::bump, 0.5, 1.0), h, R);
}

}  // namespace

TEST(LayerPotentials, FlatDoubleLayerVanishes) {
  const auto mesh = flat3(0.25);
  const auto K = assemble_double_layer(mesh);
  EXPECT_NEAR(K.cwiseAbs().maxCoeff(), 0.0, 1e-14);
  // K_+ f = f/2 on the flat boundary
  Rng rng(1);
  const Density f = random_smooth_density(mesh, rng);
  const auto Kp = make_layer_operator(mesh, LayerKind::K, +1);
  const Density out = Kp.A * f;
  for (int i = 0; i < mesh.size(); ++i) EXPECT_NEAR(out[i], 0.5 * f[i], 1e-13);
}

TEST(LayerPotentials, JumpIdentityOnOperators) {
  const auto mesh = bump3(0.25);
  const auto Kp = make_layer_operator(mesh, LayerKind::K, +1);
  const auto Km = make_layer_operator(mesh, LayerKind::K, -1);
  const Eigen::MatrixXd diff = Kp.A - Km.A;
  EXPECT_NEAR((diff - Eigen::MatrixXd::Identity(mesh.size(), mesh.size())).cwiseAbs().maxCoeff(),
              0.0, 1e-14);
}

TEST(LayerPotentials, TransposeDuality) {
  const auto mesh = bump3(0.25);
  const auto K = assemble_double_layer(mesh);
  const auto Ks = assemble_adjoint_double_layer(mesh);
  Rng rng(2);
  for (int t = 0; t < 5; ++t) {
    const Density f = random_smooth_density(mesh, rng);
    const Density g = random_smooth_density(mesh, rng);
    const double lhs = dsigma_inner(mesh, K * f, g);
    const double rhs = dsigma_inner(mesh, f, Ks * g);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs) + 1e-12);
  }
}

TEST(LayerPotentials, SingleLayerLinearityAndZero) {
  const auto mesh = flat3(0.25);
  Rng rng(3);
  const Density f = random_smooth_density(mesh, rng);
  const Density g = random_smooth_density(mesh, rng);
  const Vec X{0.3, -0.1, 1.2};
  EXPECT_DOUBLE_EQ(eval_single_layer(mesh, Density::Zero(mesh.size()), X), 0.0);
  const double lin = eval_single_layer(mesh, (2.0 * f + 3.0 * g).eval(), X);
  EXPECT_NEAR(lin, 2.0 * eval_single_layer(mesh, f, X) + 3.0 * eval_single_layer(mesh, g, X),
              1e-12 * std::abs(lin) + 1e-14);
}

// Adaptive 1D radial quadrature oracle: single layer of the unit density on
// a disk of radius a, target on the axis at height t:
//   S(0, t) = c_n omega_{n-1} int_0^a r^{n-2} (r^2 + t^2)^{(2-n)/2} dr.
TEST(LayerPotentials, FlatDiskAxisOracle) {
  const auto mesh = flat3(0.0625);
  const double a = 1.0, t = 0.8;
  Density f = Density::Zero(mesh.size());
  for (int i = 0; i < mesh.size(); ++i)
    if (mesh.x_of(i).norm() <= a) f[i] = 1.0;
  const double got = eval_single_layer(mesh, f, Vec{0.0, 0.0, t});
  const int n = 3;
  const double oracle =
      unit_sphere_area(n - 1) / ((n - 2) * unit_sphere_area(n)) *
      simpson([&](double r) { return std::pow(r, n - 2) * std::pow(r * r + t * t, 0.5 * (2 - n)); },
              0.0, a, 4000);
  EXPECT_NEAR(got, oracle, 0.02 * std::abs(oracle));
}

// Gauss-type identity: the double layer of 1 equals 1/2 above the graph and
// -1/2 below (half solid angle of the full graph); the truncation tail is
// corrected by a closed-form 1D oracle, and the two-sided difference is 1.
TEST(LayerPotentials, GaussIdentityTruncationCorrected) {
  const auto mesh = flat3(0.125);
  const Density one = Density::Ones(mesh.size());
  const double t = 1.5;
  auto tail = [&](double height) {
    // int_{|y| > R} (1/omega_3) height (|y|^2 + height^2)^{-3/2} dy, closed form
    const double R = mesh.R_trunc;
    return 0.5 * height / std::sqrt(R * R + height * height);
  };
  const double above = eval_double_layer(mesh, one, Vec{0.0, 0.0, t});
  const double below = eval_double_layer(mesh, one, Vec{0.0, 0.0, -t});
  EXPECT_NEAR(above + tail(t), 0.5, 5e-3);
  EXPECT_NEAR(below - tail(t), -0.5, 5e-3);
  EXPECT_NEAR(above - below + 2.0 * tail(t), 1.0, 1e-2);
}

// Extrapolated boundary-limit oracle against the jump relation f/2 + Kf on
// a genuinely curved mesh.
TEST(LayerPotentials, BoundaryLimitMatchesJumpRelation) {
  const auto mesh = bump3(0.08);
  Rng rng(4);
  const Density f = random_smooth_density(mesh, rng);
  const auto K = assemble_double_layer(mesh);
  const Density ref = 0.5 * f + K * f;
  double num = 0, den = 0;
  for (int i = 0; i < mesh.size(); i += 17) {
    if (mesh.x_of(i).norm() > 2.0) continue;
    Vec nu = mesh.normals[i];
    nu *= -1.0;
    std::vector<double> ladder(4);
    for (int k = 0; k < 4; ++k)
      ladder[k] = eval_double_layer(mesh, f, mesh.nodes[i] + (20.0 * mesh.h / (1 << k)) * nu);
    const double lim = richardson_limit(ladder);  // rungs 20h..2.5h
    num += (lim - ref[i]) * (lim - ref[i]) * mesh.weights[i];
    den += ref[i] * ref[i] * mesh.weights[i];
  }
  EXPECT_LT(std::sqrt(num / den), 0.03);
}

TEST(LayerPotentials, OperatorNormBoundedInH) {
  // || K f ||_2 / || f ||_2 for a fixed smooth density stays bounded as h drops
  std::vector<double> norms;
  for (double h : {0.25, 0.177, 0.125}) {
    const auto mesh = bump3(h);
    Rng rng(5);
    const Density f = random_smooth_density(mesh, rng);
    const auto K = assemble_double_layer(mesh);
    norms.push_back(lp_norm(mesh, K * f, 2) / lp_norm(mesh, f, 2));
  }
  for (double v : norms) EXPECT_LT(v, 2.0);
  EXPECT_LT(std::abs(norms[2] - norms[1]), 0.5);
}

TEST(LayerPotentials, DnSTraceFlatSigns) {
  // vertical-derivative traces on the flat boundary: D_n S_+ = -f/2,
  // D_n S_- = +f/2 (N = -e_n, jump N^n f)
  const auto mesh = flat3(0.25);
  Rng rng(6);
  const Density f = random_smooth_density(mesh, rng);
  const auto plus = make_layer_operator(mesh, LayerKind::DnS, +1);
  const auto minus = make_layer_operator(mesh, LayerKind::DnS, -1);
  for (int i = 0; i < mesh.size(); ++i) {
    EXPECT_NEAR((plus.A * f)[i], -0.5 * f[i], 1e-12);
    EXPECT_NEAR((minus.A * f)[i], 0.5 * f[i], 1e-12);
  }
  // normal-derivative trace: dN S_+ - dN S_- = f exactly on the operators
  const Eigen::MatrixXd dplus = normal_deriv_S_trace(mesh, +1);
  const Eigen::MatrixXd dminus = normal_deriv_S_trace(mesh, -1);
  const Density jump = dplus * f - dminus * f;
  for (int i = 0; i < mesh.size(); ++i) EXPECT_NEAR(jump[i], f[i], 1e-12);
}

TEST(LayerPotentials, NearBoundaryEvaluationRejected) {
  const auto mesh = flat3(0.25);
  const Density f = Density::Ones(mesh.size());
  EXPECT_THROW(eval_single_layer(mesh, f, Vec{0.1, 0.2, 0.3}), std::runtime_error);
  try {
    eval_double_layer(mesh, f, Vec{0.0, 0.0, 0.4});
    FAIL() << "expected near-boundary rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("boundary-trace"), std::string::npos);
  }
}

TEST(LayerPotentials, VolumePotentialBasics) {
  const auto dom = GraphDomain::make(4, Profile::flat, 0.0, 1.0);
  const auto grid = build_volume_grid(dom, 0.5, 0.5, 4.0, 2.0);
  Vec X0 = Vec::zero(4);
  X0[3] = -2.0;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(grid.size());
  EXPECT_DOUBLE_EQ(volume_potential_corrected(grid, zero, Vec{0.2, 0.1, 0.0, 1.0}, X0), 0.0);
  // coincident kernel: X = X0 makes the integrand vanish identically
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(grid.size());
  EXPECT_DOUBLE_EQ(volume_potential_corrected(grid, ones, X0, X0), 0.0);
  // anchor inside D rejected
  Vec bad = Vec::zero(4);
  bad[3] = 1.0;
  EXPECT_THROW(volume_potential_corrected(grid, ones, Vec{0, 0, 0, 1.5}, bad),
               std::invalid_argument);
}

// Truncation-convergence oracle: for field = D_n S f with compactly
// supported f, the corrected potential at radii R and 2R differ by O(1/R).
TEST(LayerPotentials, VolumePotentialTruncationConvergence) {
  const auto dom = GraphDomain::make(4, Profile::flat, 0.0, 1.0);
  const auto mesh = build_mesh(dom, 0.5, 4.0);
  Rng rng(7);
  const Density f = random_smooth_density(mesh, rng);
  Vec X0 = Vec::zero(4);
  X0[3] = -2.0;
  const Vec X{0.25, 0.0, 0.0, 0.75};
  std::vector<double> vals;
  for (double R : {4.0, 8.0, 16.0}) {
    const auto grid = build_volume_grid(dom, 0.5, 0.5, R, 2.0);
    const auto w = sample_field(grid, [&](const Vec& Y) { return eval_DnS(mesh, f, Y); });
    vals.push_back(volume_potential_corrected(grid, w, X, X0));
  }
  const double d1 = std::abs(vals[1] - vals[0]);
  const double d2 = std::abs(vals[2] - vals[1]);
  EXPECT_LT(d2, d1);  // successive truncation differences shrink
  EXPECT_LT(d2, 0.6 * d1 + 1e-12);
}

TEST(LayerPotentials, BinarySnapshotRoundTrip) {
  const auto mesh = flat3(0.5);
  auto op = make_layer_operator(mesh, LayerKind::K, +1);
  const std::string path = "/tmp/bielab_op_test.bin";
  write_operator_binary(op, mesh.n, path);
  int n_read = 0;
  const auto back = read_operator_binary(path, &n_read);
  EXPECT_EQ(n_read, 3);
  EXPECT_EQ(back.kind, LayerKind::K);
  EXPECT_EQ(back.side, 1);
  EXPECT_NEAR((back.A - op.A).cwiseAbs().maxCoeff(), 0.0, 0.0);
  std::remove(path.c_str());
}

TEST(LayerPotentials, LpNormHelpers) {
  const auto mesh = flat3(0.25);
  const Density one = Density::Ones(mesh.size());
  const double W = mesh.total_weight();
  EXPECT_NEAR(lp_norm(mesh, one, 2), std::sqrt(W), 1e-12);
  EXPECT_NEAR(lp_norm(mesh, one, 1), W, 1e-12);
}
