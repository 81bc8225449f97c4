#pragma once

#include "foam/fem.hpp"
#include "foam/mesh.hpp"
#include "foam/spatch.hpp"

namespace foam {

// Global coarse DOF layout: per-face S-patch control nodes of every coarse
// element, deduplicated across shared faces/edges/corners by exact position.
template <int D>
struct CoarseSpace {
    int depth = 2;
    std::vector<Vec<D>> nodes;                            // global coarse nodes
    std::vector<std::vector<FacePatch<D>>> faces;         // [element][face]
    std::vector<std::vector<std::vector<int>>> face_ids;  // [element][face][control] -> global id
    std::vector<std::vector<int>> elem_nodes;             // [element] -> sorted global ids

    int dof_count() const { return static_cast<int>(nodes.size()) * D; }
};

template <int D>
CoarseSpace<D> build_coarse_space(const CoarseMesh<D>& cm, int depth);

template <int D>
std::vector<int> select_coarse_nodes(const CoarseSpace<D>& space, const Box<D>& region, double tol);

// Per-element operators. Local fine DOF order is [boundary nodes; interior
// nodes], each sorted by global id; coarse columns follow elem_nodes order.
template <int D>
struct ElementOperators {
    std::vector<int> local_nodes;   // boundary then interior, global fine ids
    int n_boundary = 0;
    MatX Psi;                       // fine local dofs x coarse local dofs
    MatX K;                         // coarse element stiffness
};

// S-patch interpolation psi: boundary fine dofs x coarse dofs of the element.
// Each boundary node is evaluated on one containing face (any face gives the
// same value on shared edges/corners).
template <int D>
MatX boundary_interpolation(const CoarseMesh<D>& cm, const CoarseSpace<D>& space, int alpha);

// Boundary-interior transform M = [I; -k_ii^{-1} k_ib]: rows over local fine
// dofs ([boundary; interior] order), columns over boundary fine dofs.
template <int D>
MatX schur_transform(const CoarseMesh<D>& cm, int alpha, const std::vector<double>& He,
                     const Material& mat);

// Schur transform [I; -k_ii^{-1} k_ib] applied to psi, then K = Psi^T k Psi.
template <int D>
ElementOperators<D> build_element_operators(const CoarseMesh<D>& cm, const CoarseSpace<D>& space,
                                            int alpha, const std::vector<double>& He,
                                            const Material& mat);

// Frozen-Psi coarse gradient: Psi^T (sum_e dHe khat_e) Psi.
template <int D>
MatX coarse_gradient(const CoarseMesh<D>& cm, const ElementOperators<D>& ops,
                     const std::vector<std::pair<int, double>>& dHe, const Material& mat);

template <int D>
struct CoarseSystem {
    SparseMat K;
    VecX fH;
    std::vector<ElementOperators<D>> ops;
};

// Assembles K^H = sum K^alpha and the load restriction f^H = sum Psi^T w f
// (w = 1/multiplicity on shared fine nodes, so f^H equals P^T f for the
// stitched prolongation P).
template <int D>
CoarseSystem<D> build_coarse_system(const CoarseMesh<D>& cm, const CoarseSpace<D>& space,
                                    const std::vector<double>& He, const Material& mat,
                                    const VecX& f_fine);

// Stitched fine displacement field from the coarse solution.
template <int D>
VecX prolong(const CoarseMesh<D>& cm, const CoarseSpace<D>& space,
             const std::vector<ElementOperators<D>>& ops, const VecX& QH);

} // namespace foam
