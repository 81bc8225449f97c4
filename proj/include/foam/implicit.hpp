#pragma once

#include "foam/core.hpp"
#include "foam/domain.hpp"
#include "foam/mesh.hpp"
#include "foam/voronoi.hpp"

namespace foam {

template <int D>
struct FoamParams {
    double p = 16.0;        // KS sharpness
    double eps = 0.0;       // Heaviside half-bandwidth (set from 1.5 * l_a)
    double alpha = 1e-6;    // void stiffness floor
    bool shell = false;
    double shell_thickness = 0.0;
    bool boundary_faces = false;
    int knn = (D == 2) ? 16 : 32;   // two-ring cover for local evaluation
};

// Numerically stable KS maximum: (1/p) ln(sum exp(p (v - vmax))) + vmax.
double ks_union(const std::vector<double>& values, double p);

// Regularized Heaviside with void floor alpha: 1 above +eps, alpha below
// -eps, odd cubic blend between.
double heaviside(double phi, double eps, double alpha);

template <int D>
double segment_distance(const Vec<D>& x, const Vec<D>& v1, const Vec<D>& v2);

template <int D>
double beam_phi(const Vec<D>& x, const Vec<D>& v1, const Vec<D>& v2, double rbar, bool degenerate);

// Field evaluator over a clipped Voronoi graph. The candidate beam set at x
// is the influence set of the nearest seed (beams incident to the seed's
// one-ring), evaluated in a canonical order; a local reconstruction over any
// superset of the two-ring therefore reproduces values bit-for-bit.
template <int D>
class FoamField {
public:
    FoamField(const VoronoiGraph<D>* graph, const SeedSet<D>* seeds, const SignedDomain<D>* domain,
              const FoamParams<D>& params);

    int nearest_seed(const Vec<D>& x) const;
    double phi(const Vec<D>& x) const;

    // Appends the beam/shell/face terms feeding the KS union at x, given the
    // owning seed. Exposed for the sensitivity module's perturbed re-sums.
    void collect_terms(const Vec<D>& x, int s_star, std::vector<double>& terms) const;
    // Beam ids (canonical order) whose capsules can influence x's owner.
    const std::vector<int>& influence(int s_star) const { return infl_[s_star]; }

    double density(const Vec<D>& x) const;

    const VoronoiGraph<D>& graph() const { return *graph_; }
    const SeedSet<D>& seeds() const { return *seeds_; }
    const SignedDomain<D>& domain() const { return *domain_; }
    const FoamParams<D>& params() const { return params_; }

    // Boundary-face ribs: seed pairs whose shared Voronoi face crosses the
    // domain boundary, with half-thickness = mean of the pair radii.
    struct FaceRib {
        int a, b;
        double half;
    };
    const std::vector<FaceRib>& face_ribs(int s) const { return ribs_[s]; }

private:
    const VoronoiGraph<D>* graph_;
    const SeedSet<D>* seeds_;
    const SignedDomain<D>* domain_;
    FoamParams<D> params_;
    std::vector<std::vector<int>> infl_;
    std::vector<std::vector<FaceRib>> ribs_;
};

struct DensityField {
    std::vector<double> vertex_phi;    // foam field at fine nodes
    std::vector<double> vertex_h;      // H(phi), unmasked
    std::vector<char> vertex_mask;     // 1 iff the node lies in closed Omega
    std::vector<double> He;            // stiffness density: max(alpha, masked mean)
    std::vector<double> He_vol;        // volume density: masked mean, no floor
    double V0 = 0;                     // discrete measure of Omega
};

template <int D>
DensityField sample_density(const FineMesh<D>& mesh, const FoamField<D>& field);

// (V, V / V0).
template <int D>
std::pair<double, double> volume(const DensityField& density, const FineMesh<D>& mesh);

enum class PhiMode { Reconstruct, ThreePoint };

// Stand-alone field probe built from seeds only (used by tests and by the
// finite-difference branch logic): local reconstruction or the three-point
// equidistant-locus shortcut.
template <int D>
double foam_phi(const Vec<D>& x, const SeedSet<D>& seeds, const SignedDomain<D>& domain,
                const FoamParams<D>& params, const Box<D>& bounds, double clip_tol,
                double clip_step, PhiMode mode);

} // namespace foam
