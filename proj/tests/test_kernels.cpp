#include "bielab/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace bielab;

namespace {

constexpr double kPi = std::numbers::pi;

// Radial C^4 test bump phi(r) = (1 - r^2)^5 on r < 1, phi(0) = 1.
double bump(double r) {
  if (r >= 1.0) return 0.0;
  const double w = 1.0 - r * r;
  return w * w * w * w * w;
}

// Delta phi in R^n for the radial bump, in closed form.
double bump_laplacian(double r, int n) {
  if (r >= 1.0) return 0.0;
  const double w = 1.0 - r * r;
  return -10.0 * n * w * w * w * w + 80.0 * r * r * w * w * w;
}

// Delta^2 phi via second differences of the closed-form Delta phi.
double bump_bilaplacian(double r, int n) {
  const double d = 1e-4;
  auto psi = [n](double s) { return bump_laplacian(std::abs(s), n); };
  const double lap_r =
      (psi(r + d) - 2.0 * psi(r) + psi(r - d)) / (d * d) +
      (n - 1) * (psi(r + d) - psi(r - d)) / (2.0 * d * std::max(r, 1e-12));
  return lap_r;
}

// 1D radial quadrature of int_{R^n} K(|y|) g(|y|) dy.
template <class K, class G>
double radial_integral(K&& kernel, G&& g, int n, int panels = 40000) {
  const double wn = unit_sphere_area(n);
  double s = 0;
  const double h = 1.0 / panels;
  for (int i = 0; i < panels; ++i) {
    const double r = (i + 0.5) * h;
    s += kernel(r) * g(r) * std::pow(r, n - 1) * h;
  }
  return wn * s;
}

Vec vec_of(std::initializer_list<double> xs) { return Vec(xs); }

}  // namespace

TEST(Kernels, SphereAreaClosedForms) {
  EXPECT_NEAR(unit_sphere_area(2), 2.0 * kPi, 1e-12);
  EXPECT_NEAR(unit_sphere_area(3), 4.0 * kPi, 1e-12);
  EXPECT_NEAR(unit_sphere_area(4), 2.0 * kPi * kPi, 1e-12);
  EXPECT_NEAR(unit_sphere_area(5), 8.0 * kPi * kPi / 3.0, 1e-12);
}

TEST(Kernels, LaplaceGReferenceValues) {
  // n=3, |x|=1 -> 1/(4 pi)
  EXPECT_NEAR(laplace_G(vec_of({1, 0, 0}), 3), 1.0 / (4.0 * kPi), 1e-14);
  // homogeneity: G(2x) = 2^{2-n} G(x) for n=4
  const Vec x{0.3, -0.2, 0.5, 0.1};
  Vec x2 = x;
  x2 *= 2.0;
  EXPECT_NEAR(laplace_G(x2, 4), 0.25 * laplace_G(x, 4), 1e-14);
}

// Quadrature oracle for the mollified delta identity; freezes the global
// orientation s = -1 (Delta G = -delta) used by every jump relation.
TEST(Kernels, MollifiedIdentityFixesSign) {
  for (int n : {3, 4, 5}) {
    const double val = radial_integral([n](double r) { return laplace_G(Vec{r, 0, 0, 0, 0}.head(n), n); },
                                       [n](double r) { return bump_laplacian(r, n); }, n);
    // wrapped kernel above only sees radius; rebuild via 1D closed form
    EXPECT_NEAR(val, -1.0 * bump(0.0), 2e-4) << "n=" << n;
  }
  EXPECT_EQ(KernelTable::make(4).delta_sign, -1);
}

TEST(Kernels, GradAndHessOracles) {
  const int dims[] = {3, 4, 5};
  Rng rng(11);
  for (int n : dims) {
    for (int trial = 0; trial < 50; ++trial) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(-1.5, 1.5);
      if (x.norm() < 0.3) x[0] += 1.0;
      // centered finite differences of G at step 1e-4, relative 1e-6
      const double d = 1e-4;
      const Vec g = grad_G(x, n);
      const Mat H = hess_G(x, n);
      for (int i = 0; i < n; ++i) {
        Vec xp = x, xm = x;
        xp[i] += d;
        xm[i] -= d;
        const double fd = (laplace_G(xp, n) - laplace_G(xm, n)) / (2 * d);
        EXPECT_NEAR(g[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "n=" << n;
        const Vec gp = grad_G(xp, n), gm = grad_G(xm, n);
        for (int j = 0; j < n; ++j) {
          const double fd2 = (gp[j] - gm[j]) / (2 * d);
          EXPECT_NEAR(H(i, j), fd2, 1e-6 * std::max(1.0, std::abs(fd2)));
        }
      }
      // harmonicity away from the origin
      EXPECT_NEAR(H.trace(), 0.0, 1e-10 * H.frob_norm());
      // antisymmetry of the gradient
      Vec mx = x;
      mx *= -1.0;
      const Vec gm2 = grad_G(mx, n);
      for (int i = 0; i < n; ++i) EXPECT_NEAR(gm2[i], -g[i], 1e-14);
    }
  }
}

TEST(Kernels, BiharmonicReferenceValues) {
  // n=5, |x|=1: 1/(6 omega_5) = 1/(16 pi^2)
  EXPECT_NEAR(biharm_B(vec_of({1, 0, 0, 0, 0}), 5), 1.0 / (16.0 * kPi * kPi), 1e-12);
  EXPECT_NEAR(biharm_B(vec_of({1, 0, 0, 0, 0}), 5), 6.3326e-3, 1e-6);
  // homogeneity n=6: B(2x) = 2^{-2} B(x)
  const Vec x{0.4, 0.1, -0.3, 0.2, 0.0, 0.5};
  Vec x2 = x;
  x2 *= 2.0;
  EXPECT_NEAR(biharm_B(x2, 6), 0.25 * biharm_B(x, 6), 1e-14);
}

// Direct mollified oracle for the bilaplacian: int B Delta^2 phi = phi(0).
TEST(Kernels, BiharmonicMollifiedIdentity) {
  for (int n : {4, 5, 6}) {
    const double val =
        radial_integral([n](double r) { return biharm_B(Vec{r, 0, 0, 0, 0, 0}.head(n), n); },
                        [n](double r) { return bump_bilaplacian(r, n); }, n, 20000);
    EXPECT_NEAR(val, bump(0.0), 5e-3) << "n=" << n;
  }
}

// Delta B = -G pointwise away from the origin (closed forms).
TEST(Kernels, LaplacianOfBIsMinusG) {
  Rng rng(7);
  for (int n : {4, 5, 6, 7}) {
    for (int t = 0; t < 20; ++t) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(-2, 2);
      if (x.norm() < 0.4) x[0] += 1.2;
      EXPECT_NEAR(hess_biharm_B(x, n).trace(), -laplace_G(x, n),
                  1e-10 * std::abs(laplace_G(x, n)))
          << "n=" << n;
    }
  }
}

TEST(Kernels, ThirdDerivativeOracle) {
  Rng rng(3);
  for (int n : {4, 5}) {
    for (int t = 0; t < 50; ++t) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(-1.5, 1.5);
      if (x.norm() < 0.4) x[1] -= 1.0;
      const double d = 1e-4;
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
          for (int k = j; k < n; ++k) {
            Vec xp = x, xm = x;
            xp[k] += d;
            xm[k] -= d;
            const double fd =
                (hess_biharm_B(xp, n)(i, j) - hess_biharm_B(xm, n)(i, j)) / (2 * d);
            EXPECT_NEAR(third_biharm_B(x, n, i, j, k), fd,
                        1e-6 * std::max(1.0, std::abs(fd)));
            const double fdg = (hess_G(xp, n)(i, j) - hess_G(xm, n)(i, j)) / (2 * d);
            EXPECT_NEAR(third_G(x, n, i, j, k), fdg, 1e-6 * std::max(1.0, std::abs(fdg)));
          }
    }
  }
}

// Biharmonicity: Delta(Delta B) = 0 away from the origin, via exact forms.
TEST(Kernels, BiharmonicityPointwise) {
  Rng rng(5);
  for (int n : {4, 5, 6}) {
    for (int t = 0; t < 20; ++t) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = rng.uniform(0.3, 1.8);
      // Delta B = -G, and trace hess_G = 0
      double lap_of_lap = 0;
      for (int i = 0; i < n; ++i) lap_of_lap += -hess_G(x, n)(i, i);
      EXPECT_NEAR(lap_of_lap, 0.0, 1e-12);
    }
  }
}

TEST(Kernels, SingularityAndDomainErrors) {
  EXPECT_THROW(laplace_G(Vec::zero(3), 3), std::domain_error);
  EXPECT_THROW(grad_G(Vec::zero(4), 4), std::domain_error);
  EXPECT_THROW(biharm_B(Vec::zero(5), 5), std::domain_error);
  EXPECT_THROW(biharm_B(vec_of({1, 0, 0}), 3), std::invalid_argument);
  EXPECT_THROW(biharm_B(Vec{1, 0, 0, 0, 0, 0, 0, 0}, 8), std::invalid_argument);
}

TEST(Kernels, OmegaCrossCheck) {
  // omega_n = 2 pi^{n/2} / Gamma(n/2) against the recursion omega_{n+2} =
  // 2 pi omega_n / n
  for (int n = 2; n <= 6; ++n)
    EXPECT_NEAR(unit_sphere_area(n + 2), 2.0 * kPi * unit_sphere_area(n) / n, 1e-12);
}
