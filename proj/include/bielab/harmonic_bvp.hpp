#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bielab/core.hpp"
#include "bielab/geometry.hpp"
#include "bielab/kernels.hpp"
#include "bielab/layer_potentials.hpp"

namespace bielab {

/// Evaluators of a harmonic function and its derivatives in D. All
/// derivatives come from closed-form kernel differentiation.
struct HarmonicEvaluator {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hess;
};

/// u = double layer of g (no off-boundary distance guard: the solvers own
/// the evaluation discipline; quadrature degrades within ~2h of the mesh).
inline HarmonicEvaluator double_layer_evaluator(const BoundaryMesh& mesh, Density g) {
  auto gp = std::make_shared<Density>(std::move(g));
  const BoundaryMesh* m = &mesh;
  HarmonicEvaluator ev;
  ev.value = [m, gp](const Vec& X) {
    double s = 0;
    for (int j = 0; j < m->size(); ++j)
      s += grad_G(X - m->nodes[j], m->n).dot(m->normals[j]) * (*gp)[j] * m->weights[j];
    return s;
  };
  ev.grad = [m, gp](const Vec& X) {
    Vec v = Vec::zero(m->n);
    for (int j = 0; j < m->size(); ++j)
      v += ((*gp)[j] * m->weights[j]) * hess_G(X - m->nodes[j], m->n).apply(m->normals[j]);
    return v;
  };
  ev.hess = [m, gp](const Vec& X) {
    Mat H(m->n);
    for (int j = 0; j < m->size(); ++j) {
      const Vec d = X - m->nodes[j];
      const double c = (*gp)[j] * m->weights[j];
      for (int a = 0; a < m->n; ++a)
        for (int b = 0; b < m->n; ++b) {
          double t = 0;
          for (int k = 0; k < m->n; ++k) t += third_G(d, m->n, a, b, k) * m->normals[j][k];
          H(a, b) += c * t;
        }
    }
    return H;
  };
  return ev;
}

inline HarmonicEvaluator single_layer_evaluator(const BoundaryMesh& mesh, Density psi) {
  auto fp = std::make_shared<Density>(std::move(psi));
  const BoundaryMesh* m = &mesh;
  HarmonicEvaluator ev;
  ev.value = [m, fp](const Vec& X) {
    double s = 0;
    for (int j = 0; j < m->size(); ++j)
      s += laplace_G(X - m->nodes[j], m->n) * (*fp)[j] * m->weights[j];
    return s;
  };
  ev.grad = [m, fp](const Vec& X) {
    Vec v = Vec::zero(m->n);
    for (int j = 0; j < m->size(); ++j)
      v += ((*fp)[j] * m->weights[j]) * grad_G(X - m->nodes[j], m->n);
    return v;
  };
  ev.hess = [m, fp](const Vec& X) {
    Mat H(m->n);
    for (int j = 0; j < m->size(); ++j) {
      Mat h = hess_G(X - m->nodes[j], m->n);
      h *= (*fp)[j] * m->weights[j];
      H += h;
    }
    return H;
  };
  return ev;
}

enum class HarmonicRep { double_layer, single_layer };

struct SolveReport {
  double residual = 0;
  int iterations = 0;  // 0 for direct factorization
  std::string method;
};

struct HarmonicSolution {
  HarmonicRep representation;
  Density density;
  SolveReport report;
  HarmonicEvaluator eval;
};

struct HarmonicSolveOptions {
  bool iterative = false;        // GMRES on the streamed operator
  double tol = 1e-10;            // documented stopping residual
  int max_dense_nodes = 20000;   // guard against oversized dense factorizations
  int auto_iterative_above = 12000;  // second-kind solves switch to GMRES here
};

namespace detail {

/// Streamed application of (1/2 I + K) without assembling the matrix.
inline Eigen::VectorXd apply_K_plus(const BoundaryMesh& mesh, const Eigen::VectorXd& v) {
  const int N = mesh.size();
  Eigen::VectorXd out(N);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    double s = (0.5 + curvature_diagonal(mesh, i)) * v[i];
    for (int j = 0; j < N; ++j) {
      if (j == i) continue;
      s += grad_G(mesh.nodes[i] - mesh.nodes[j], mesh.n).dot(mesh.normals[j]) *
           mesh.weights[j] * v[j];
    }
    out[i] = s;
  }
  return out;
}

}  // namespace detail

/// Harmonic Dirichlet problem: invert K_+ = 1/2 I + K for the double-layer
/// density, u = double layer of the solution.
inline HarmonicSolution solve_dirichlet(const BoundaryMesh& mesh, const Density& f,
                                        const HarmonicSolveOptions& opts = {}) {
  if (f.size() != mesh.size()) throw std::invalid_argument("solve_dirichlet: data/mesh mismatch");
  HarmonicSolution sol;
  sol.representation = HarmonicRep::double_layer;
  const bool iterative = opts.iterative || mesh.size() > opts.auto_iterative_above;
  if (!iterative) {
    if (mesh.size() > opts.max_dense_nodes)
      throw std::runtime_error("solve_dirichlet: mesh too large for dense factorization");
    Eigen::MatrixXd A = assemble_double_layer(mesh);
    A += 0.5 * Eigen::MatrixXd::Identity(mesh.size(), mesh.size());
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    sol.density = lu.solve(f);
    sol.report.method = "dense_lu";
    sol.report.residual = (A * sol.density - f).norm() / std::max(f.norm(), 1e-300);
  } else {
    GmresInfo info;
    sol.density = gmres([&](const Eigen::VectorXd& v) { return detail::apply_K_plus(mesh, v); },
                        f, opts.tol, 400, 80, &info);
    sol.report = {info.residual, info.iterations, "gmres"};
    if (!info.converged)
      throw std::runtime_error("solve_dirichlet: GMRES stalled at residual " +
                               std::to_string(info.residual));
  }
  sol.eval = double_layer_evaluator(mesh, sol.density);
  return sol;
}

/// Harmonic regularity problem: invert the single-layer trace S psi = f,
/// u = single layer of psi. First-kind solve, adequate at desk scale.
inline HarmonicSolution solve_regularity(const BoundaryMesh& mesh, const Density& f,
                                         const HarmonicSolveOptions& opts = {}) {
  if (f.size() != mesh.size())
    throw std::invalid_argument("solve_regularity: data/mesh mismatch");
  if (mesh.size() > opts.max_dense_nodes)
    throw std::runtime_error("solve_regularity: mesh too large for dense factorization");
  Eigen::MatrixXd S = assemble_single_layer(mesh);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(S);
  HarmonicSolution sol;
  sol.representation = HarmonicRep::single_layer;
  sol.density = lu.solve(f);
  sol.report.method = "dense_lu";
  sol.report.residual = (S * sol.density - f).norm() / std::max(f.norm(), 1e-300);
  sol.eval = single_layer_evaluator(mesh, sol.density);
  return sol;
}

/// Boundary trace of <grad u, N> from the + side, cone-axis ladder with
/// Richardson extrapolation. Nodes whose extrapolation correction exceeds
/// half the extrapolated value are flagged.
struct NormalDerivative {
  std::vector<double> values;   // aligned with `nodes`
  std::vector<int> nodes;
  std::vector<int> flagged;     // node ids with dubious extrapolation
};

inline NormalDerivative normal_derivative(const HarmonicEvaluator& u, const BoundaryMesh& mesh,
                                          const std::vector<int>& nodes, double t0_factor = 12.0,
                                          int ladder = 4) {
  NormalDerivative nd;
  nd.nodes = nodes;
  nd.values.resize(nodes.size());
  std::vector<std::vector<int>> flagged_local(nodes.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t k = 0; k < nodes.size(); ++k) {
    const int i = nodes[k];
    Vec nu = mesh.normals[i];
    nu *= -1.0;  // march into D along the cone axis
    std::vector<double> v(ladder);
    for (int s = 0; s < ladder; ++s) {
      const double t = t0_factor * mesh.h * std::pow(2.0, -s);
      v[s] = u.grad(mesh.nodes[i] + t * nu).dot(mesh.normals[i]);
    }
    const double lim = richardson_limit(v);
    nd.values[k] = lim;
    if (std::abs(lim - v[ladder - 1]) > 0.5 * std::abs(lim) + 1e-12)
      flagged_local[k].push_back(i);
  }
  for (auto& fl : flagged_local)
    for (int i : fl) nd.flagged.push_back(i);
  return nd;
}

inline NormalDerivative normal_derivative(const HarmonicSolution& sol, const BoundaryMesh& mesh) {
  std::vector<int> all(mesh.size());
  for (int i = 0; i < mesh.size(); ++i) all[i] = i;
  return normal_derivative(sol.eval, mesh, all);
}

}  // namespace bielab
