#include "foam/coarsen.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cstring>
#include <map>

namespace foam {

namespace {

template <int D>
std::array<std::uint64_t, D> bit_key(const Vec<D>& p) {
    std::array<std::uint64_t, D> k;
    for (int d = 0; d < D; ++d) {
        double c = p[d] == 0.0 ? 0.0 : p[d]; // normalize -0.0
        std::memcpy(&k[d], &c, sizeof(double));
    }
    return k;
}

// Shared faces carry the same polygon in the same vertex order, so Greville
// controls repeat bit-for-bit across elements and exact keys suffice.
template <int D>
void check_no_near_duplicates(const std::vector<Vec<D>>& nodes, double tol) {
    std::vector<int> order(nodes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return nodes[a][0] < nodes[b][0]; });
    for (size_t i = 0; i < order.size(); ++i) {
        for (size_t j = i + 1; j < order.size(); ++j) {
            if (nodes[order[j]][0] - nodes[order[i]][0] > tol) break;
            if ((nodes[order[j]] - nodes[order[i]]).norm() < tol)
                throw Error("coarse space: distinct control nodes nearly coincide (face mismatch)");
        }
    }
}

template <int D>
bool point_on_face(const std::vector<Vec<D>>& poly, const Vec<D>& x, double tol);

template <>
bool point_on_face<2>(const std::vector<Vec<2>>& poly, const Vec<2>& x, double tol) {
    Vec<2> a = poly[0], b = poly[1];
    Vec<2> ab = b - a;
    double len2 = ab.squaredNorm();
    double t = (x - a).dot(ab) / len2;
    if (t < -tol || t > 1.0 + tol) return false;
    return (x - (a + t * ab)).norm() <= tol * std::sqrt(len2);
}

template <>
bool point_on_face<3>(const std::vector<Vec<3>>& poly, const Vec<3>& x, double tol) {
    Vec<3> n = (poly[1] - poly[0]).cross(poly[2] - poly[0]);
    double scale = std::sqrt(n.norm());
    n /= n.norm();
    if (std::abs(n.dot(x - poly[0])) > tol * scale) return false;
    // convex polygon: consistent sign of edge cross products
    int m = static_cast<int>(poly.size());
    for (int i = 0; i < m; ++i) {
        Vec<3> e = poly[(i + 1) % m] - poly[i];
        if (n.dot(e.cross(x - poly[i])) < -tol * scale * e.norm()) return false;
    }
    return true;
}

template <int D>
void scatter_local_stiffness(const FineMesh<D>& fine, const CoarseElement<D>& ce,
                             const std::vector<double>& He, const Material& mat,
                             const std::map<int, int>& local_of,
                             std::vector<Eigen::Triplet<double>>& trip) {
    for (int fe : ce.fine_elements) {
        const auto& el = fine.elements[fe];
        std::array<Vec<D>, D + 1> xs;
        for (int i = 0; i <= D; ++i) xs[i] = fine.nodes[el[i]];
        MatX ke = element_stiffness<D>(xs, mat) * He[fe];
        for (int i = 0; i <= D; ++i)
            for (int j = 0; j <= D; ++j) {
                int li = local_of.at(el[i]), lj = local_of.at(el[j]);
                for (int a = 0; a < D; ++a)
                    for (int b = 0; b < D; ++b)
                        trip.emplace_back(li * D + a, lj * D + b, ke(i * D + a, j * D + b));
            }
    }
}

} // namespace

template <int D>
CoarseSpace<D> build_coarse_space(const CoarseMesh<D>& cm, int depth) {
    if (depth < 1) throw Error("coarse space: depth must be >= 1");
    CoarseSpace<D> space;
    space.depth = depth;
    std::map<std::array<std::uint64_t, D>, int> id_of;

    for (const auto& ce : cm.elements) {
        space.faces.emplace_back();
        space.face_ids.emplace_back();
        std::vector<int> enodes;
        for (const auto& poly : ce.faces) {
            FacePatch<D> patch = build_face_patch<D>(poly, depth);
            std::vector<int> ids(patch.controls.size());
            for (size_t c = 0; c < patch.controls.size(); ++c) {
                auto key = bit_key<D>(patch.controls[c].pos);
                auto it = id_of.find(key);
                if (it == id_of.end()) {
                    it = id_of.emplace(key, static_cast<int>(space.nodes.size())).first;
                    space.nodes.push_back(patch.controls[c].pos);
                }
                ids[c] = it->second;
                enodes.push_back(it->second);
            }
            space.faces.back().push_back(std::move(patch));
            space.face_ids.back().push_back(std::move(ids));
        }
        std::sort(enodes.begin(), enodes.end());
        enodes.erase(std::unique(enodes.begin(), enodes.end()), enodes.end());
        space.elem_nodes.push_back(std::move(enodes));
    }
    check_no_near_duplicates<D>(space.nodes, 1e-9 * cm.fine.l_a);
    return space;
}

template <int D>
std::vector<int> select_coarse_nodes(const CoarseSpace<D>& space, const Box<D>& region,
                                     double tol) {
    std::vector<int> out;
    for (size_t i = 0; i < space.nodes.size(); ++i)
        if (region.contains(space.nodes[i], tol)) out.push_back(static_cast<int>(i));
    return out;
}

template <int D>
MatX boundary_interpolation(const CoarseMesh<D>& cm, const CoarseSpace<D>& space, int alpha) {
    const auto& ce = cm.elements[alpha];
    const auto& enodes = space.elem_nodes[alpha];
    std::map<int, int> col_of;
    for (size_t i = 0; i < enodes.size(); ++i) col_of[enodes[i]] = static_cast<int>(i);

    int nb = static_cast<int>(ce.boundary_nodes.size());
    int nc = static_cast<int>(enodes.size());
    MatX psi = MatX::Zero(nb * D, nc * D);
    double tol = 1e-9 * cm.fine.l_a;

    for (int bi = 0; bi < nb; ++bi) {
        const Vec<D>& x = cm.fine.nodes[ce.boundary_nodes[bi]];
        bool placed = false;
        for (size_t f = 0; f < ce.faces.size() && !placed; ++f) {
            if (!point_on_face<D>(ce.faces[f], x, tol)) continue;
            std::vector<double> basis = spatch_eval<D>(space.faces[alpha][f], x);
            for (int c = 0; c < static_cast<int>(basis.size()); ++c) {
                int col = col_of.at(space.face_ids[alpha][f][c]);
                for (int d = 0; d < D; ++d) psi(bi * D + d, col * D + d) += basis[c];
            }
            placed = true;
        }
        if (!placed) throw Error("boundary fine node lies on no element face");
    }
    return psi;
}

namespace {

// [B; -k_ii^{-1} k_ib B] in the local [boundary; interior] dof order.
template <int D>
MatX schur_compose(const CoarseMesh<D>& cm, int alpha, const std::vector<double>& He,
                   const Material& mat, const MatX& B, SparseMat* k_out) {
    const auto& ce = cm.elements[alpha];
    std::vector<int> local_nodes = ce.boundary_nodes;
    local_nodes.insert(local_nodes.end(), ce.interior_nodes.begin(), ce.interior_nodes.end());
    std::map<int, int> local_of;
    for (size_t i = 0; i < local_nodes.size(); ++i)
        local_of[local_nodes[i]] = static_cast<int>(i);

    int nl = static_cast<int>(local_nodes.size());
    int nb = static_cast<int>(ce.boundary_nodes.size());
    int ni = nl - nb;
    std::vector<Eigen::Triplet<double>> trip;
    scatter_local_stiffness<D>(cm.fine, ce, He, mat, local_of, trip);
    if (k_out) {
        k_out->resize(nl * D, nl * D);
        k_out->setFromTriplets(trip.begin(), trip.end());
    }

    MatX out(nl * D, B.cols());
    out.topRows(nb * D) = B;
    if (ni == 0) return out;

    std::vector<Eigen::Triplet<double>> tii, tib;
    for (const auto& t : trip) {
        if (t.row() >= nb * D && t.col() >= nb * D)
            tii.emplace_back(t.row() - nb * D, t.col() - nb * D, t.value());
        else if (t.row() >= nb * D && t.col() < nb * D)
            tib.emplace_back(t.row() - nb * D, t.col(), t.value());
    }
    SparseMat kii(ni * D, ni * D), kib(ni * D, nb * D);
    kii.setFromTriplets(tii.begin(), tii.end());
    kib.setFromTriplets(tib.begin(), tib.end());

    Eigen::SimplicialLDLT<SparseMat> ldlt(kii);
    if (ldlt.info() != Eigen::Success) throw Error("interior stiffness block is singular");
    out.bottomRows(ni * D) = -ldlt.solve(MatX(kib * B));
    return out;
}

} // namespace

template <int D>
MatX schur_transform(const CoarseMesh<D>& cm, int alpha, const std::vector<double>& He,
                     const Material& mat) {
    int nb = static_cast<int>(cm.elements[alpha].boundary_nodes.size());
    return schur_compose<D>(cm, alpha, He, mat, MatX::Identity(nb * D, nb * D), nullptr);
}

template <int D>
ElementOperators<D> build_element_operators(const CoarseMesh<D>& cm, const CoarseSpace<D>& space,
                                            int alpha, const std::vector<double>& He,
                                            const Material& mat) {
    const auto& ce = cm.elements[alpha];
    ElementOperators<D> ops;
    ops.local_nodes = ce.boundary_nodes;
    ops.local_nodes.insert(ops.local_nodes.end(), ce.interior_nodes.begin(),
                           ce.interior_nodes.end());
    ops.n_boundary = static_cast<int>(ce.boundary_nodes.size());

    MatX psi = boundary_interpolation<D>(cm, space, alpha);
    SparseMat k;
    ops.Psi = schur_compose<D>(cm, alpha, He, mat, psi, &k);
    MatX kPsi = k * ops.Psi;
    ops.K = ops.Psi.transpose() * kPsi;
    ops.K = 0.5 * (ops.K + ops.K.transpose()).eval();
    return ops;
}

template <int D>
MatX coarse_gradient(const CoarseMesh<D>& cm, const ElementOperators<D>& ops,
                     const std::vector<std::pair<int, double>>& dHe, const Material& mat) {
    std::map<int, int> local_of;
    for (size_t i = 0; i < ops.local_nodes.size(); ++i)
        local_of[ops.local_nodes[i]] = static_cast<int>(i);

    int nl = static_cast<int>(ops.local_nodes.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& [fe, dh] : dHe) {
        const auto& el = cm.fine.elements[fe];
        std::array<Vec<D>, D + 1> xs;
        for (int i = 0; i <= D; ++i) xs[i] = cm.fine.nodes[el[i]];
        MatX ke = element_stiffness<D>(xs, mat) * dh;
        for (int i = 0; i <= D; ++i)
            for (int j = 0; j <= D; ++j) {
                int li = local_of.at(el[i]), lj = local_of.at(el[j]);
                for (int a = 0; a < D; ++a)
                    for (int b = 0; b < D; ++b)
                        trip.emplace_back(li * D + a, lj * D + b, ke(i * D + a, j * D + b));
            }
    }
    SparseMat dk(nl * D, nl * D);
    dk.setFromTriplets(trip.begin(), trip.end());
    MatX dK = ops.Psi.transpose() * (dk * ops.Psi);
    return 0.5 * (dK + dK.transpose());
}

template <int D>
CoarseSystem<D> build_coarse_system(const CoarseMesh<D>& cm, const CoarseSpace<D>& space,
                                    const std::vector<double>& He, const Material& mat,
                                    const VecX& f_fine) {
    CoarseSystem<D> sys;
    int n_fine = static_cast<int>(cm.fine.nodes.size());
    std::vector<double> mult(n_fine, 0.0);
    for (const auto& ce : cm.elements)
        for (int n : ce.fine_nodes) mult[n] += 1.0;

    int nc = space.dof_count();
    sys.fH = VecX::Zero(nc);
    std::vector<Eigen::Triplet<double>> trip;

    for (size_t a = 0; a < cm.elements.size(); ++a) {
        ElementOperators<D> ops =
            build_element_operators<D>(cm, space, static_cast<int>(a), He, mat);
        const auto& enodes = space.elem_nodes[a];

        VecX f_loc(ops.Psi.rows());
        for (size_t i = 0; i < ops.local_nodes.size(); ++i)
            for (int d = 0; d < D; ++d) {
                int g = ops.local_nodes[i] * D + d;
                f_loc[i * D + d] = f_fine[g] / mult[ops.local_nodes[i]];
            }
        VecX fh = ops.Psi.transpose() * f_loc;

        for (size_t i = 0; i < enodes.size(); ++i)
            for (int d = 0; d < D; ++d) sys.fH[enodes[i] * D + d] += fh[i * D + d];
        for (size_t i = 0; i < enodes.size(); ++i)
            for (size_t j = 0; j < enodes.size(); ++j)
                for (int a2 = 0; a2 < D; ++a2)
                    for (int b2 = 0; b2 < D; ++b2)
                        trip.emplace_back(enodes[i] * D + a2, enodes[j] * D + b2,
                                          ops.K(i * D + a2, j * D + b2));
        sys.ops.push_back(std::move(ops));
    }
    sys.K.resize(nc, nc);
    sys.K.setFromTriplets(trip.begin(), trip.end());
    return sys;
}

template <int D>
VecX prolong(const CoarseMesh<D>& cm, const CoarseSpace<D>& space,
             const std::vector<ElementOperators<D>>& ops, const VecX& QH) {
    VecX q = VecX::Zero(static_cast<int>(cm.fine.nodes.size()) * D);
    for (size_t a = 0; a < cm.elements.size(); ++a) {
        const auto& enodes = space.elem_nodes[a];
        VecX qh(static_cast<int>(enodes.size()) * D);
        for (size_t i = 0; i < enodes.size(); ++i)
            for (int d = 0; d < D; ++d) qh[i * D + d] = QH[enodes[i] * D + d];
        VecX ql = ops[a].Psi * qh;
        for (size_t i = 0; i < ops[a].local_nodes.size(); ++i)
            for (int d = 0; d < D; ++d) q[ops[a].local_nodes[i] * D + d] = ql[i * D + d];
    }
    return q;
}

template CoarseSpace<2> build_coarse_space<2>(const CoarseMesh<2>&, int);
template CoarseSpace<3> build_coarse_space<3>(const CoarseMesh<3>&, int);
template std::vector<int> select_coarse_nodes<2>(const CoarseSpace<2>&, const Box<2>&, double);
template std::vector<int> select_coarse_nodes<3>(const CoarseSpace<3>&, const Box<3>&, double);
template MatX boundary_interpolation<2>(const CoarseMesh<2>&, const CoarseSpace<2>&, int);
template MatX boundary_interpolation<3>(const CoarseMesh<3>&, const CoarseSpace<3>&, int);
template MatX schur_transform<2>(const CoarseMesh<2>&, int, const std::vector<double>&,
                                 const Material&);
template MatX schur_transform<3>(const CoarseMesh<3>&, int, const std::vector<double>&,
                                 const Material&);
template ElementOperators<2> build_element_operators<2>(const CoarseMesh<2>&,
                                                        const CoarseSpace<2>&, int,
                                                        const std::vector<double>&,
                                                        const Material&);
template ElementOperators<3> build_element_operators<3>(const CoarseMesh<3>&,
                                                        const CoarseSpace<3>&, int,
                                                        const std::vector<double>&,
                                                        const Material&);
template MatX coarse_gradient<2>(const CoarseMesh<2>&, const ElementOperators<2>&,
                                 const std::vector<std::pair<int, double>>&, const Material&);
template MatX coarse_gradient<3>(const CoarseMesh<3>&, const ElementOperators<3>&,
                                 const std::vector<std::pair<int, double>>&, const Material&);
template CoarseSystem<2> build_coarse_system<2>(const CoarseMesh<2>&, const CoarseSpace<2>&,
                                                const std::vector<double>&, const Material&,
                                                const VecX&);
template CoarseSystem<3> build_coarse_system<3>(const CoarseMesh<3>&, const CoarseSpace<3>&,
                                                const std::vector<double>&, const Material&,
                                                const VecX&);
template VecX prolong<2>(const CoarseMesh<2>&, const CoarseSpace<2>&,
                         const std::vector<ElementOperators<2>>&, const VecX&);
template VecX prolong<3>(const CoarseMesh<3>&, const CoarseSpace<3>&,
                         const std::vector<ElementOperators<3>>&, const VecX&);

} // namespace foam
