#pragma once

#include "foam/core.hpp"
#include "foam/predicates.hpp"

#include <unordered_map>

namespace foam {

// Incremental Bowyer-Watson Delaunay triangulation with robust predicates.
// A far synthetic super-simplex bounds the construction; simplices touching
// synthetic vertices stay in the data structure (flagged) but are never
// reported as real. Exact ties on circumsphere tests count as outside, so
// cospherical inputs triangulate deterministically.
template <int D>
class Delaunay {
public:
    struct Simplex {
        std::array<int, D + 1> v;   // vertex ids; >= n_input means synthetic
        std::array<int, D + 1> nb;  // neighbor opposite v[i]; -1 at outer boundary
        bool alive = true;
        bool synthetic = false;     // touches a super-simplex vertex
    };

    // Triangulates the given points (all finite, assumed pairwise distinct).
    void build(const std::vector<Vec<D>>& points);

    int point_count() const { return n_input_; }
    const std::vector<Vec<D>>& points() const { return pts_; }
    const std::vector<Simplex>& simplices() const { return simp_; }

    bool is_real_vertex(int v) const { return v < n_input_; }

    // All facets whose D vertices are input points; each comes with its two
    // adjacent simplices (both alive, possibly synthetic-free or not).
    struct Facet {
        std::array<int, D> v;       // sorted vertex ids
        int s0, s1;                 // adjacent simplex ids
    };
    std::vector<Facet> real_facets() const;

    // Adjacency of input points through triangulation edges.
    std::vector<std::vector<int>> vertex_adjacency() const;

    Vec<D> simplex_circumcenter(int s) const;

private:
    std::vector<Vec<D>> pts_;
    std::vector<Simplex> simp_;
    int n_input_ = 0;
    mutable std::uint64_t walk_rng_ = 0x2545f4914f6cdd1dULL;

    std::array<Vec<D>, D + 1> corners(int s) const;
    int locate(const Vec<D>& p, int hint) const;
    void insert(int pid, int hint);
    bool ball_contains(int s, const Vec<D>& p) const;
};

} // namespace foam
