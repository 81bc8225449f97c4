#include "foam/fem.hpp"

#include <Eigen/SparseCholesky>

namespace foam {

template <int D>
Eigen::Matrix<double, D == 2 ? 3 : 6, D == 2 ? 3 : 6> elasticity_tensor(const Material& mat) {
    if (mat.E <= 0 || mat.nu <= -1 || mat.nu >= 0.5) throw Error("material: invalid constants");
    if constexpr (D == 2) {
        Eigen::Matrix3d D0;
        double c = mat.E / (1.0 - mat.nu * mat.nu);
        D0 << c, c * mat.nu, 0, c * mat.nu, c, 0, 0, 0, c * (1.0 - mat.nu) / 2.0;
        return D0;
    } else {
        Eigen::Matrix<double, 6, 6> D0 = Eigen::Matrix<double, 6, 6>::Zero();
        double lam = mat.E * mat.nu / ((1.0 + mat.nu) * (1.0 - 2.0 * mat.nu));
        double mu = mat.E / (2.0 * (1.0 + mat.nu));
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) D0(i, j) = lam;
            D0(i, i) = lam + 2.0 * mu;
            D0(3 + i, 3 + i) = mu;
        }
        return D0;
    }
}

template <int D>
Eigen::Matrix<double, D*(D + 1), D*(D + 1)> element_stiffness(const std::array<Vec<D>, D + 1>& xs,
                                                              const Material& mat) {
    Eigen::Matrix<double, D, D> J;
    for (int i = 0; i < D; ++i) J.col(i) = xs[i + 1] - xs[0];
    double detJ = J.determinant();
    double factorial = (D == 2) ? 2.0 : 6.0;
    double vol = detJ / factorial;
    if (vol <= 0) throw Error("element_stiffness: inverted or degenerate simplex");

    // Shape-function gradients: g_i = J^{-T} e_i for i >= 1, g_0 = -sum.
    Eigen::Matrix<double, D, D> Jinv = J.inverse();
    std::array<Vec<D>, D + 1> g;
    g[0] = Vec<D>::Zero();
    for (int i = 0; i < D; ++i) {
        g[i + 1] = Jinv.row(i).transpose();
        g[0] -= g[i + 1];
    }

    constexpr int S = (D == 2) ? 3 : 6;
    Eigen::Matrix<double, S, D*(D + 1)> B = Eigen::Matrix<double, S, D*(D + 1)>::Zero();
    for (int n = 0; n <= D; ++n) {
        int c = D * n;
        if constexpr (D == 2) {
            B(0, c + 0) = g[n][0];
            B(1, c + 1) = g[n][1];
            B(2, c + 0) = g[n][1];
            B(2, c + 1) = g[n][0];
        } else {
            B(0, c + 0) = g[n][0];
            B(1, c + 1) = g[n][1];
            B(2, c + 2) = g[n][2];
            B(3, c + 0) = g[n][1];   // gamma_xy
            B(3, c + 1) = g[n][0];
            B(4, c + 1) = g[n][2];   // gamma_yz
            B(4, c + 2) = g[n][1];
            B(5, c + 0) = g[n][2];   // gamma_zx
            B(5, c + 2) = g[n][0];
        }
    }
    return vol * (B.transpose() * elasticity_tensor<D>(mat) * B);
}

template <int D>
SparseMat assemble(const FineMesh<D>& mesh, const std::vector<double>& He, const Material& mat) {
    if (He.size() != mesh.elements.size()) throw Error("assemble: density/mesh size mismatch");
    const int n = static_cast<int>(mesh.nodes.size()) * D;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(mesh.elements.size() * (D + 1) * (D + 1) * D * D);
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        std::array<Vec<D>, D + 1> xs;
        for (int i = 0; i <= D; ++i) xs[i] = mesh.nodes[mesh.elements[e][i]];
        auto ke = element_stiffness<D>(xs, mat);
        for (int i = 0; i <= D; ++i)
            for (int j = 0; j <= D; ++j)
                for (int a = 0; a < D; ++a)
                    for (int b = 0; b < D; ++b)
                        trip.emplace_back(mesh.elements[e][i] * D + a, mesh.elements[e][j] * D + b,
                                          He[e] * ke(D * i + a, D * j + b));
    }
    SparseMat K(n, n);
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

VecX solve(const SparseMat& K, const LoadCase& lc) {
    const int n = static_cast<int>(K.rows());
    if (lc.f.size() != n) throw Error("solve: rhs size mismatch");
    std::vector<int> keep_of_full(n, -1);
    int nk = 0;
    {
        std::size_t fi = 0;
        for (int i = 0; i < n; ++i) {
            if (fi < lc.fixed_dofs.size() && lc.fixed_dofs[fi] == i) {
                ++fi;
                continue;
            }
            keep_of_full[i] = nk++;
        }
    }
    SparseMat Kr(nk, nk);
    {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(K.nonZeros());
        for (int c = 0; c < K.outerSize(); ++c)
            for (SparseMat::InnerIterator it(K, c); it; ++it) {
                int ri = keep_of_full[static_cast<int>(it.row())];
                int ci = keep_of_full[c];
                if (ri >= 0 && ci >= 0) trip.emplace_back(ri, ci, it.value());
            }
        Kr.setFromTriplets(trip.begin(), trip.end());
    }
    VecX fr(nk);
    for (int i = 0; i < n; ++i)
        if (keep_of_full[i] >= 0) fr[keep_of_full[i]] = lc.f[i];

    Eigen::SimplicialLDLT<SparseMat> ldlt(Kr);
    if (ldlt.info() != Eigen::Success)
        throw Error("solve: singular constrained system (rigid mode not removed?)");
    VecX qr = ldlt.solve(fr);
    double fnorm = fr.norm();
    if (fnorm > 0) {
        VecX res = fr - Kr * qr;
        if (res.norm() > 1e-10 * fnorm) qr += ldlt.solve(res);   // one refinement pass
        res = fr - Kr * qr;
        if (res.norm() > 1e-8 * fnorm) throw Error("solve: residual above tolerance");
    }
    VecX Q = VecX::Zero(n);
    for (int i = 0; i < n; ++i)
        if (keep_of_full[i] >= 0) Q[i] = qr[keep_of_full[i]];
    return Q;
}

double compliance(const SparseMat& K, const VecX& Q, const VecX& f) {
    double cf = 0.5 * f.dot(Q);
    double ck = 0.5 * Q.dot(K * Q);
    double scale = std::max({std::abs(cf), std::abs(ck), 1e-300});
    if (std::abs(cf - ck) > 1e-6 * scale)
        throw Error("compliance: energy identity violated (solve residual too large?)");
    return cf;
}

double error_metric(double C1, double C0) {
    if (C0 == 0) throw Error("error_metric: zero reference compliance");
    double d = C1 - C0;
    return d * d / (C0 * C0);
}

template <int D>
std::vector<int> select_nodes(const FineMesh<D>& mesh, const Box<D>& region, double tol) {
    std::vector<int> out;
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        if (region.contains(mesh.nodes[i], tol)) out.push_back(static_cast<int>(i));
    return out;
}

void fix_nodes(LoadCase& lc, const std::vector<int>& nodes, const std::vector<int>& axes, int dim) {
    for (int n : nodes) {
        if (axes.empty()) {
            for (int a = 0; a < dim; ++a) lc.fixed_dofs.push_back(n * dim + a);
        } else {
            for (int a : axes) lc.fixed_dofs.push_back(n * dim + a);
        }
    }
    std::sort(lc.fixed_dofs.begin(), lc.fixed_dofs.end());
    lc.fixed_dofs.erase(std::unique(lc.fixed_dofs.begin(), lc.fixed_dofs.end()),
                        lc.fixed_dofs.end());
}

void spread_load(LoadCase& lc, const std::vector<int>& nodes, const VecX& total, int dim) {
    if (nodes.empty()) throw Error("spread_load: empty node selection");
    for (int n : nodes)
        if (static_cast<Eigen::Index>(n) * dim + dim > lc.f.size())
            throw Error("spread_load: load vector not sized to the mesh dof count");
    for (int n : nodes)
        for (int a = 0; a < dim; ++a) lc.f[n * dim + a] += total[a] / nodes.size();
}

template Eigen::Matrix<double, 3, 3> elasticity_tensor<2>(const Material&);
template Eigen::Matrix<double, 6, 6> elasticity_tensor<3>(const Material&);
template Eigen::Matrix<double, 6, 6> element_stiffness<2>(const std::array<Vec<2>, 3>&,
                                                          const Material&);
template Eigen::Matrix<double, 12, 12> element_stiffness<3>(const std::array<Vec<3>, 4>&,
                                                            const Material&);
template SparseMat assemble<2>(const FineMesh<2>&, const std::vector<double>&, const Material&);
template SparseMat assemble<3>(const FineMesh<3>&, const std::vector<double>&, const Material&);
template std::vector<int> select_nodes<2>(const FineMesh<2>&, const Box<2>&, double);
template std::vector<int> select_nodes<3>(const FineMesh<3>&, const Box<3>&, double);

} // namespace foam
