#pragma once

#include "foam/fem.hpp"
#include "foam/implicit.hpp"
#include "foam/mesh.hpp"
#include "foam/voronoi.hpp"

namespace foam {

struct SliceEntry {
    int vertex;
    double value; // d H(Phi(v)) / d a
};

struct DensityJacobianSlice {
    int variable = -1;
    bool forward = false; // forward-difference fallback used
    std::vector<SliceEntry> entries;
};

// Flags near-critical local configurations: (i) the D+2 nearest seeds are
// nearly cocircular/cospherical, (ii) x0 is near the equidistant locus of its
// two nearest seeds. Both tested at 1e-3 * l_a.
template <int D>
bool differentiability_guard(const Vec<D>& x0, const SeedSet<D>& seeds,
                             const std::vector<int>& local, double l_a);

// Immutable per-iteration data shared by all variable slices.
template <int D>
struct SensitivityWorkspace {
    double h = 0;
    int knn = 0;
    std::vector<int> band;                    // fine vertices with |Phi| <= eps + 4h
    std::vector<int> nearest;                 // per band vertex: nearest seed
    std::vector<char> guarded;                // per band vertex
    std::vector<int> knn_ids;                 // per band vertex: knn seed ids (flat)
    std::vector<char> three_point_ok;         // per band vertex: r_max <= 2 r_min over knn
    std::vector<std::vector<int>> affected;   // per seed: band indices (3-hop owners)
    std::vector<std::vector<int>> r_affected; // per seed: band indices (2-hop owners)
    int guarded_count = 0;
};

template <int D>
struct SensitivityContext {
    const SeedSet<D>& seeds;
    const VoronoiGraph<D>& graph; // clipped graph the density was sampled on
    const SignedDomain<D>& domain;
    const FineMesh<D>& mesh;
    const DensityField& density;
    FoamParams<D> params;
    Box<D> bounds; // tessellation bounds
    double clip_tol;
    double clip_step;
    SensitivityWorkspace<D> ws;

    int n_vars() const { return seeds.count() * (D + 1); }
};

template <int D>
SensitivityContext<D> build_context(const SeedSet<D>& seeds, const VoronoiGraph<D>& graph,
                                    const SignedDomain<D>& domain, const FineMesh<D>& mesh,
                                    const DensityField& density, const FoamParams<D>& params,
                                    const Box<D>& bounds, double clip_tol, double clip_step,
                                    double h);

// Variables are packed [X00..X0(D-1), X10.., ..., r0..r(Ns-1)].
// Coordinate slices re-tessellate the perturbed seeds once per sign and
// evaluate each affected vertex on its branch (three-point when the local
// radius spread allows, reconstruction otherwise); radius slices re-sum the
// smooth union with the perturbed blend radius on the unchanged graph.
template <int D>
DensityJacobianSlice density_derivative(const SensitivityContext<D>& ctx, int variable);

// (element, dHe_stiffness, dHe_volume) triples induced by a vertex slice.
template <int D>
std::vector<std::tuple<int, double, double>> element_derivative(const FineMesh<D>& mesh,
                                                                const DensityField& density,
                                                                double alpha,
                                                                const DensityJacobianSlice& slice);

// Per-element strain energies q_e^T khat_e q_e for the current displacements.
template <int D>
VecX element_energies(const FineMesh<D>& mesh, const VecX& q, const Material& mat);

// Per-vertex reduction weights: dC/da = -1/2 sum_v slice_v WE_v,
// dV/da = sum_v slice_v WV_v. WE skips elements clamped at the alpha floor.
template <int D>
void vertex_weights(const FineMesh<D>& mesh, const DensityField& density, double alpha,
                    const VecX& energies, VecX& WE, VecX& WV);

double compliance_gradient_entry(const DensityJacobianSlice& slice, const VecX& WE);
double volume_gradient_entry(const DensityJacobianSlice& slice, const VecX& WV);

// S = sum_i w ||X_i - X_i^c||^2 over seeds with a valid (nonempty) cell;
// frozen-centroid gradient 2 w (X_i - X_i^c).
template <int D>
std::pair<double, MatX> shape_energy_and_gradient(const SeedSet<D>& seeds,
                                                  const std::vector<Vec<D>>& centroids,
                                                  const std::vector<char>& valid, double w = 1.0);

template <int D>
struct ObjectiveGradients {
    VecX dC, dV, dS; // packed per variable ordering above
    double S = 0;
    int forward_count = 0;
    int guarded_vertices = 0;
};

template <int D>
ObjectiveGradients<D> assemble_gradients(const SensitivityContext<D>& ctx, const VecX& WE,
                                         const VecX& WV, const std::vector<Vec<D>>& centroids,
                                         const std::vector<char>& centroid_valid);

} // namespace foam
