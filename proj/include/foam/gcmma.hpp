#pragma once

#include "foam/core.hpp"

#include <functional>
#include <iosfwd>

namespace foam {

// Globally convergent method of moving asymptotes. One outer step builds the
// separable convex approximation, solves it by a primal-dual interior-point
// subsolver, and repeats with stiffened approximations until the trial point
// is conservative (capped inner loop).
class GCMMA {
public:
    struct Options {
        double asyinit = 0.5;  // initial asymptote distance, fraction of range
        double asyincr = 1.2;
        double asydecr = 0.7;
        double move = 0.1;     // move limit, fraction of range per step
        double albefa = 0.1;
        double raa0eps = 1e-6;
        double raaeps = 1e-6;
        int max_inner = 3;
    };

    // Evaluates objective f0 and constraints f (size m) at a trial point.
    using TrialEval = std::function<void(const VecX&, double&, VecX&)>;

    GCMMA(int n, int m, VecX xmin, VecX xmax, Options opt);
    GCMMA(int n, int m, VecX xmin, VecX xmax)
        : GCMMA(n, m, std::move(xmin), std::move(xmax), Options()) {}

    // One outer iteration from x with current values/gradients. dfdx is m x n.
    VecX step(const VecX& x, double f0val, const VecX& df0dx, const VecX& fval, const MatX& dfdx,
              const TrialEval& trial_eval);

    int outer_count() const { return outeriter_; }
    int last_inner() const { return last_inner_; }
    bool last_conservative() const { return last_conservative_; }

    void save(std::ostream& os) const;
    void load(std::istream& is);

private:
    struct SubResult {
        VecX x;
        double f0app = 0;
        VecX fapp;
    };
    SubResult subproblem(const VecX& xval, double f0val, const VecX& df0dx, const VecX& fval,
                         const MatX& dfdx, double raa0, const VecX& raa) const;
    VecX subsolv(const VecX& alfa, const VecX& beta, const VecX& p0, const VecX& q0,
                 const MatX& P, const MatX& Q, const VecX& b) const;

    int n_, m_;
    VecX xmin_, xmax_;
    Options opt_;
    VecX xold1_, xold2_, low_, upp_;
    int outeriter_ = 0;
    int last_inner_ = 0;
    bool last_conservative_ = true;
    double epsimin_;
};

} // namespace foam
