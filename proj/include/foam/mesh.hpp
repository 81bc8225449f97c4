#pragma once

#include "foam/core.hpp"
#include "foam/domain.hpp"

namespace foam {

template <int D>
struct FineMesh {
    std::vector<Vec<D>> nodes;
    std::vector<std::array<int, D + 1>> elements;
    std::vector<double> volume;                  // per-element |D_e|
    double l_a = 0;                              // average edge length
    Box<D> bbox;
    std::vector<std::vector<int>> node_elements; // incident elements per node

    // Computes volumes (fixing inverted simplices by a vertex swap), l_a,
    // bbox and node adjacency. Call after nodes/elements are filled.
    void finalize();

    Vec<D> element_centroid(int e) const {
        Vec<D> c = Vec<D>::Zero();
        for (int v : elements[e]) c += nodes[v];
        return c / (D + 1);
    }
};

template <int D>
struct CoarseElement {
    std::vector<int> fine_elements;           // ids into the shared fine mesh
    std::vector<int> fine_nodes;              // sorted global node ids
    std::vector<int> boundary_nodes;          // global ids, sorted
    std::vector<int> interior_nodes;          // global ids, sorted
    std::vector<std::vector<Vec<D>>> faces;   // 2D: segment endpoints; 3D: planar polygon in cyclic order
    Box<D> box;
};

// Background embedding: a coarse cell tiling of bbox(Omega) where every cell
// carries a patch of the one shared fine simplicial mesh. Cells whose fine
// vertices all fall outside Omega are dropped.
template <int D>
struct CoarseMesh {
    FineMesh<D> fine;
    std::vector<CoarseElement<D>> elements;
    std::array<int, D> res{};                  // coarse grid resolution (structured)
    int refine = 0;
    Box<D> box;                                // embedding box

    // (boundary ids, interior ids) of one element, global fine-node ids.
    std::pair<const std::vector<int>*, const std::vector<int>*> classify_nodes(int alpha) const {
        return {&elements[alpha].boundary_nodes, &elements[alpha].interior_nodes};
    }
};

template <int D>
CoarseMesh<D> build_structured(const SignedDomain<D>& domain, const std::array<int, D>& coarse_res,
                               int refine);

// Boundary/interior split from fine-mesh topology: a node is boundary iff it
// touches a facet not shared by two elements of the same coarse cell.
template <int D>
void classify_element_nodes(const FineMesh<D>& fine, CoarseElement<D>& elem);

} // namespace foam
