#pragma once

#include "foam/coarsen.hpp"
#include "foam/gcmma.hpp"
#include "foam/implicit.hpp"
#include "foam/sensitivity.hpp"

#include <functional>
#include <random>

namespace foam {

enum class SimMode { Fine, Coarse };

template <int D>
struct FixSpec {
    Box<D> region;
    std::vector<int> axes; // empty = all
};

template <int D>
struct LoadSpec {
    Box<D> region;
    Vec<D> total;
};

template <int D>
struct OptProblem {
    double w = 0.0;   // J = (1-w) C/C0 + w S/S0
    double v = 0.5;   // volume fraction cap
    int max_iter = 200;
    double ch_tol = 1e-3;
    double r_lo = 0.0, r_hi = 0.0;
    Box<D> move_box;  // seed coordinate bounds
    SimMode mode = SimMode::Coarse;
    int depth = 2;
    double fd_factor = 1.0; // finite-difference step, units of l_a
    int max_inner = 3;      // GCMMA conservative-loop cap
};

struct IterRecord {
    int iter = 0;
    double C = 0, S = 0, J = 0, Vfrac = 0, ch = 1.0, seconds = 0;
    int flagged = 0;
};

struct OptTrace {
    std::vector<IterRecord> records;
};

// ch(k) = 1 for k < 5; frozen at the previous value while the volume
// constraint is violated by more than 1e-4 relative; otherwise the relative
// spread |max - mean| / mean of the last five objective values.
double convergence_check(const std::vector<double>& J, int k, double V_er, double prev_ch);

template <int D>
struct RunResult {
    SeedSet<D> seeds;
    OptTrace trace;
    double C0 = 1, S0 = 1;
    bool converged = false;
    bool feasibility_clamped = false; // final radii shrunk to restore V <= v V0
};

// Serializable mid-run state for checkpoint/resume. z is the exact
// normalized design vector; resuming from it (not from re-packed seeds)
// keeps reruns bit-identical.
struct ResumeState {
    int iter = 0;
    double C0 = 1, S0 = 1, prev_ch = 1.0;
    std::vector<double> J_hist;
    std::vector<double> z;
    std::string gcmma;
};

template <int D>
class Optimizer {
public:
    struct Eval {
        double C = 0, S = 0, J = 0, V = 0, Vfrac = 0;
        bool has_state = false;
    };

    using IterCallback =
        std::function<void(const IterRecord&, const SeedSet<D>&, const ResumeState&)>;

    Optimizer(OptProblem<D> prob, const SignedDomain<D>& domain, const CoarseMesh<D>& cm,
              std::vector<FixSpec<D>> fixes, std::vector<LoadSpec<D>> loads,
              FoamParams<D> params);

    // Full pipeline evaluation; keeps displacement/density state for gradients.
    Eval evaluate(const SeedSet<D>& seeds);

    RunResult<D> run(SeedSet<D> seeds, const IterCallback& cb = {},
                     const ResumeState* resume = nullptr);

    const DensityField& density() const { return density_; }
    const VoronoiGraph<D>& graph() const { return graph_; }
    const VecX& fine_displacement() const { return q_fine_; }
    const LoadCase& fine_loadcase() const { return lc_fine_; }
    const CoarseSpace<D>& space() const { return space_; }
    const FoamParams<D>& params() const { return params_; }
    const Box<D>& tess_bounds() const { return bounds_; }
    double clip_tol() const { return clip_tol_; }
    double clip_step() const { return clip_step_; }
    double C0() const { return C0_; }
    double S0() const { return S0_; }

    // Gradient diagnostics: (assembled dJ/dz, global-FD dJ/dz) for chosen
    // normalized variables, used by the verification harness.
    std::pair<VecX, VecX> gradient_probe(const SeedSet<D>& seeds, const std::vector<int>& vars,
                                         double fd_rel);

    VecX pack(const SeedSet<D>& seeds) const;
    SeedSet<D> unpack(const VecX& z) const;

private:
    void ensure_normalizers(const Eval& e);
    struct Grads {
        VecX dJ, dG; // normalized variable space; constraint g = Vfrac/v - 1
        int flagged = 0;
    };
    Grads gradients(const SeedSet<D>& seeds);

    OptProblem<D> prob_;
    const SignedDomain<D>& domain_;
    const CoarseMesh<D>& cm_;
    std::vector<FixSpec<D>> fixes_;
    std::vector<LoadSpec<D>> loads_;
    FoamParams<D> params_;
    Material mat_;

    CoarseSpace<D> space_;      // coarse mode
    LoadCase lc_fine_;
    std::vector<int> coarse_fixed_;
    double clip_tol_ = 0, clip_step_ = 0;
    Box<D> bounds_;             // tessellation margin box

    // state of the last evaluate()
    SeedSet<D> state_seeds_;
    VoronoiGraph<D> graph_;
    DensityField density_;
    VecX q_fine_;               // fine or prolonged displacements
    std::vector<Vec<D>> centroids_;
    std::vector<char> centroid_valid_;
    Eval last_eval_;

    double C0_ = 0, S0_ = 0;    // 0 = not yet normalized
};

// Uniform rejection sampling (strategy "uniform") or dart throwing
// ("blue-noise", falls back to uniform when it cannot fit N_s darts); radii
// set by bisection on a shared value so that V/V0 lands within 1% of v.
template <int D>
SeedSet<D> init_seeds(const SignedDomain<D>& domain, const FineMesh<D>& mesh,
                      const FoamParams<D>& params, int N_s, double v, std::uint64_t rng_seed,
                      const std::string& strategy, const Box<D>& bounds, double clip_tol,
                      double clip_step, bool* blue_noise_failed = nullptr);

} // namespace foam
