#pragma once

#include "foam/core.hpp"
#include "foam/domain.hpp"
#include "foam/mesh.hpp"

#include <optional>

namespace foam {

template <int D>
struct SeedSet {
    std::vector<Vec<D>> X;
    std::vector<double> r;
    Vec<D> bbox_lo = Vec<D>::Zero();   // design-variable bounds
    Vec<D> bbox_hi = Vec<D>::Zero();

    int count() const { return static_cast<int>(X.size()); }
};

// One Voronoi edge turned structural beam. 'seeds' is the adjacent-seed set
// X_j (2 seeds in 2D, 3 in 3D), sorted by id; rbar the averaged radius.
// A zero-length edge is kept as a degenerate beam (a sphere at v0).
template <int D>
struct Beam {
    int v0 = -1, v1 = -1;
    std::array<int, D> seeds;
    double rbar = 0;
    bool degenerate = false;
};

template <int D>
struct VoronoiGraph {
    std::vector<Vec<D>> vertices;
    std::vector<Beam<D>> beams;
    std::vector<std::vector<int>> neighbors;   // Delaunay adjacency per seed (sorted)
    std::vector<std::vector<int>> incident;    // beams touching each seed (sorted)
    Box<D> bounds;                             // margin box the diagram was truncated by

    std::pair<Vec<D>, Vec<D>> segment(int b) const {
        return {vertices[beams[b].v0], vertices[beams[b].v1]};
    }
    // Beams whose adjacent-seed set intersects {s} + Delaunay neighbors of s:
    // exactly the beams that can influence the field near seed s's cell.
    std::vector<int> influence_beams(int s) const;
};

// Exact Voronoi diagram of the seeds truncated by bbox. The bbox must contain
// all seeds with generous margin (>= 2x domain diagonal) so that boundary
// cells are bounded before truncation.
template <int D>
VoronoiGraph<D> tessellate(const SeedSet<D>& seeds, const Box<D>& bbox);

// Trims beams against the domain: fully-outside parts removed, boundary
// crossings located by bisection to tol. Sub-segments keep the parent beam's
// adjacent-seed set and radius. step controls the crossing scan resolution.
template <int D>
void clip(VoronoiGraph<D>& graph, const SignedDomain<D>& domain, double tol, double step);

double beam_radius(const std::vector<double>& radii, const int* seed_ids, int count);

// k nearest seeds to x0 (ties broken by id), sorted by distance.
template <int D>
std::vector<int> two_ring_seeds(const Vec<D>& x0, const SeedSet<D>& seeds, int k);

struct ThreePointResult {
    bool degenerate = false;
    double rbar = 0;
    double dist = 0;       // d_j = distance(x0, equidistant locus)
};

// Equidistant-locus shortcut: the locus of points equidistant from the
// 3 nearest seeds (3D: a line; 2D, 2 nearest: the bisector line), the mean
// radius over those seeds, and the distance from x0 to the locus. The
// approximate field value is rbar - dist.
template <int D>
ThreePointResult three_point_beam(const Vec<D>& x0, const std::vector<Vec<D>>& X,
                                  const std::vector<double>& r);

// Voronoi beams of a nearest-seed subset around x0, with seed ids mapped back
// to global ids. k is a floor: the subset grows until a security-radius check
// certifies that the owner cell, its one-ring, and every beam incident to
// them match the global diagram exactly, so field evaluation at x0 agrees
// with the full tessellation. Degenerate subsets fall back to it outright.
template <int D>
VoronoiGraph<D> local_reconstruct(const Vec<D>& x0, const SeedSet<D>& seeds, int k,
                                  const Box<D>& bounds);

// Clipped-cell centroids by fixed-rule quadrature over fine elements, each
// element owned by the seed nearest to its centroid. Seeds owning no material
// inside Omega yield nullopt.
template <int D>
std::vector<std::optional<Vec<D>>> cell_centroids(const SeedSet<D>& seeds,
                                                  const SignedDomain<D>& domain,
                                                  const FineMesh<D>& fine);

} // namespace foam
