#pragma once

#include "foam/core.hpp"
#include "foam/mesh.hpp"

#include <Eigen/Sparse>

namespace foam {

struct Material {
    double E = 1.0;
    double nu = 0.3;
};

using SparseMat = Eigen::SparseMatrix<double>;

// Constant elasticity tensor in Voigt form: plane stress in 2D,
// isotropic 3D; shear entries use engineering strain.
template <int D>
Eigen::Matrix<double, D == 2 ? 3 : 6, D == 2 ? 3 : 6> elasticity_tensor(const Material& mat);

// Unit-density element stiffness of a linear simplex (constant strain, exact
// one-point quadrature). The element matrix for density H_e is H_e * khat.
template <int D>
Eigen::Matrix<double, D*(D + 1), D*(D + 1)> element_stiffness(const std::array<Vec<D>, D + 1>& xs,
                                                              const Material& mat);

template <int D>
SparseMat assemble(const FineMesh<D>& mesh, const std::vector<double>& He, const Material& mat);

struct LoadCase {
    std::vector<int> fixed_dofs;   // homogeneous Dirichlet, sorted unique
    VecX f;
};

// Direct solve of the eliminated system; Dirichlet DOFs exactly zero.
VecX solve(const SparseMat& K, const LoadCase& lc);

// C = 1/2 f.Q, cross-checked against 1/2 Q.K.Q.
double compliance(const SparseMat& K, const VecX& Q, const VecX& f);

// (C1 - C0)^2 / C0^2.
double error_metric(double C1, double C0);

// Node selection and load-building helpers shared by tests and the CLI.
template <int D>
std::vector<int> select_nodes(const FineMesh<D>& mesh, const Box<D>& region, double tol);

// Fixes the listed axes (empty = all) of every node in the list.
void fix_nodes(LoadCase& lc, const std::vector<int>& nodes, const std::vector<int>& axes, int dim);

// Distributes a total force equally over the nodes.
void spread_load(LoadCase& lc, const std::vector<int>& nodes, const VecX& total, int dim);

} // namespace foam
