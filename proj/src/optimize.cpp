#include "foam/optimize.hpp"

#include <chrono>
#include <sstream>

namespace foam {

double convergence_check(const std::vector<double>& J, int k, double V_er, double prev_ch) {
    if (k < 5) return 1.0;
    if (static_cast<int>(J.size()) < k) throw Error("convergence_check: trace shorter than k");
    if (V_er > 1e-4) return prev_ch;
    double mx = -std::numeric_limits<double>::infinity(), mean = 0;
    for (int i = k - 5; i < k; ++i) {
        mx = std::max(mx, J[i]);
        mean += J[i];
    }
    mean /= 5.0;
    if (mean == 0) return 0.0;
    return std::abs(mx - mean) / std::abs(mean);
}

namespace {

template <int D>
Box<D> margin_box(const Box<D>& domain_box) {
    double diag = domain_box.diagonal();
    return domain_box.expanded(2.0 * diag);
}

// GCMMA can push two seeds onto the same bound corner; tessellation rejects
// coincident seeds, so separate them deterministically beforehand.
template <int D>
void nudge_duplicates(SeedSet<D>& seeds, const Box<D>& box) {
    double tol = 1e-12 * box.diagonal();
    double step = 1e-9 * box.diagonal();
    bool changed = true;
    int rounds = 0;
    while (changed && rounds++ < 8) {
        changed = false;
        for (int i = 0; i < seeds.count(); ++i)
            for (int j = i + 1; j < seeds.count(); ++j)
                if ((seeds.X[i] - seeds.X[j]).norm() <= tol) {
                    seeds.X[j][(j % D)] += step * (1 + rounds);
                    changed = true;
                }
    }
}

} // namespace

template <int D>
Optimizer<D>::Optimizer(OptProblem<D> prob, const SignedDomain<D>& domain, const CoarseMesh<D>& cm,
                        std::vector<FixSpec<D>> fixes, std::vector<LoadSpec<D>> loads,
                        FoamParams<D> params)
    : prob_(std::move(prob)), domain_(domain), cm_(cm), fixes_(std::move(fixes)),
      loads_(std::move(loads)), params_(params) {
    if (prob_.v <= 0 || prob_.v > 1) throw Error("optimizer: volume fraction must be in (0,1]");
    if (prob_.w < 0 || prob_.w > 1) throw Error("optimizer: objective weight must be in [0,1]");
    if (prob_.r_lo > prob_.r_hi) throw Error("optimizer: radius bounds inverted");

    const auto& fine = cm_.fine;
    if (params_.eps <= 0) params_.eps = 1.5 * fine.l_a;
    clip_tol_ = 1e-3 * fine.l_a;
    clip_step_ = fine.l_a;
    bounds_ = margin_box(domain.bbox());

    double tol = 1e-9 * fine.l_a;
    lc_fine_.f = VecX::Zero(static_cast<int>(fine.nodes.size()) * D);
    for (const auto& fx : fixes_)
        fix_nodes(lc_fine_, select_nodes<D>(fine, fx.region, tol), fx.axes, D);
    for (const auto& ld : loads_) {
        VecX total(D);
        for (int d = 0; d < D; ++d) total[d] = ld.total[d];
        spread_load(lc_fine_, select_nodes<D>(fine, ld.region, tol), total, D);
    }
    if (prob_.w < 1.0) {
        bool any_fixed = !lc_fine_.fixed_dofs.empty();
        if (!any_fixed) throw Error("optimizer: no supports inside the domain");
        if (lc_fine_.f.cwiseAbs().maxCoeff() == 0) throw Error("optimizer: zero load");
    }

    if (prob_.mode == SimMode::Coarse) {
        space_ = build_coarse_space<D>(cm_, prob_.depth);
        for (const auto& fx : fixes_) {
            auto nodes = select_coarse_nodes<D>(space_, fx.region, tol);
            for (int nid : nodes) {
                if (fx.axes.empty())
                    for (int d = 0; d < D; ++d) coarse_fixed_.push_back(nid * D + d);
                else
                    for (int d : fx.axes) coarse_fixed_.push_back(nid * D + d);
            }
        }
        std::sort(coarse_fixed_.begin(), coarse_fixed_.end());
        coarse_fixed_.erase(std::unique(coarse_fixed_.begin(), coarse_fixed_.end()),
                            coarse_fixed_.end());
    }
}

template <int D>
typename Optimizer<D>::Eval Optimizer<D>::evaluate(const SeedSet<D>& seeds) {
    state_seeds_ = seeds;
    state_seeds_.bbox_lo = bounds_.lo;
    state_seeds_.bbox_hi = bounds_.hi;
    nudge_duplicates<D>(state_seeds_, domain_.bbox());

    graph_ = tessellate<D>(state_seeds_, bounds_);
    clip<D>(graph_, domain_, clip_tol_, clip_step_);
    FoamField<D> field(&graph_, &state_seeds_, &domain_, params_);
    density_ = sample_density<D>(cm_.fine, field);

    Eval e;
    auto [V, Vfrac] = volume<D>(density_, cm_.fine);
    e.V = V;
    e.Vfrac = Vfrac;

    auto cents = cell_centroids<D>(state_seeds_, domain_, cm_.fine);
    centroids_.assign(seeds.count(), Vec<D>::Zero());
    centroid_valid_.assign(seeds.count(), 0);
    for (int i = 0; i < seeds.count(); ++i)
        if (cents[i]) {
            centroids_[i] = *cents[i];
            centroid_valid_[i] = 1;
        }
    e.S = shape_energy_and_gradient<D>(state_seeds_, centroids_, centroid_valid_).first;

    if (prob_.w < 1.0) {
        if (prob_.mode == SimMode::Fine) {
            SparseMat K = assemble<D>(cm_.fine, density_.He, mat_);
            q_fine_ = solve(K, lc_fine_);
            e.C = compliance(K, q_fine_, lc_fine_.f);
        } else {
            CoarseSystem<D> sys =
                build_coarse_system<D>(cm_, space_, density_.He, mat_, lc_fine_.f);
            LoadCase lcH;
            lcH.fixed_dofs = coarse_fixed_;
            lcH.f = sys.fH;
            VecX QH = solve(sys.K, lcH);
            e.C = compliance(sys.K, QH, sys.fH);
            q_fine_ = prolong<D>(cm_, space_, sys.ops, QH);
        }
    } else {
        q_fine_ = VecX::Zero(static_cast<int>(cm_.fine.nodes.size()) * D);
    }

    ensure_normalizers(e);
    double cterm = prob_.w < 1.0 ? e.C / C0_ : 0.0;
    e.J = (1.0 - prob_.w) * cterm + prob_.w * e.S / S0_;
    e.has_state = true;
    last_eval_ = e;
    return e;
}

template <int D>
void Optimizer<D>::ensure_normalizers(const Eval& e) {
    if (C0_ == 0) C0_ = e.C > 0 ? e.C : 1.0;
    if (S0_ == 0) S0_ = e.S > 0 ? e.S : 1.0;
}

template <int D>
typename Optimizer<D>::Grads Optimizer<D>::gradients(const SeedSet<D>& seeds) {
    VecX energies = element_energies<D>(cm_.fine, q_fine_, mat_);
    VecX WE, WV;
    vertex_weights<D>(cm_.fine, density_, params_.alpha, energies, WE, WV);

    double h = prob_.fd_factor * cm_.fine.l_a;
    auto ctx = build_context<D>(state_seeds_, graph_, domain_, cm_.fine, density_, params_,
                                bounds_, clip_tol_, clip_step_, h);
    ObjectiveGradients<D> g = assemble_gradients<D>(ctx, WE, WV, centroids_, centroid_valid_);

    int ns = seeds.count();
    int n = ns * (D + 1);
    Grads out;
    out.dJ = VecX::Zero(n);
    out.dG = VecX::Zero(n);
    out.flagged = g.forward_count;

    double wc = prob_.w < 1.0 ? (1.0 - prob_.w) / C0_ : 0.0;
    double wsafe = prob_.w / S0_;
    double V0 = density_.V0 > 0 ? density_.V0 : 1.0;
    Vec<D> ext = prob_.move_box.extent();
    double rext = std::max(prob_.r_hi - prob_.r_lo, 1e-30);
    for (int i = 0; i < ns; ++i) {
        for (int d = 0; d < D; ++d) {
            int a = i * D + d;
            double scale = ext[d];
            out.dJ[a] = (wc * g.dC[a] + wsafe * g.dS[a]) * scale;
            out.dG[a] = g.dV[a] / (V0 * prob_.v) * scale;
        }
        int a = ns * D + i;
        out.dJ[a] = wc * g.dC[a] * rext;
        out.dG[a] = g.dV[a] / (V0 * prob_.v) * rext;
    }
    return out;
}

template <int D>
VecX Optimizer<D>::pack(const SeedSet<D>& seeds) const {
    int ns = seeds.count();
    VecX z(ns * (D + 1));
    Vec<D> lo = prob_.move_box.lo, ext = prob_.move_box.extent();
    double rext = std::max(prob_.r_hi - prob_.r_lo, 1e-30);
    for (int i = 0; i < ns; ++i) {
        for (int d = 0; d < D; ++d) z[i * D + d] = (seeds.X[i][d] - lo[d]) / ext[d];
        z[ns * D + i] = (seeds.r[i] - prob_.r_lo) / rext;
    }
    return z.cwiseMax(0.0).cwiseMin(1.0);
}

template <int D>
SeedSet<D> Optimizer<D>::unpack(const VecX& z) const {
    int ns = static_cast<int>(z.size()) / (D + 1);
    SeedSet<D> s;
    s.X.resize(ns);
    s.r.resize(ns);
    Vec<D> lo = prob_.move_box.lo, ext = prob_.move_box.extent();
    double rext = prob_.r_hi - prob_.r_lo;
    for (int i = 0; i < ns; ++i) {
        for (int d = 0; d < D; ++d) s.X[i][d] = lo[d] + z[i * D + d] * ext[d];
        s.r[i] = prob_.r_lo + z[ns * D + i] * rext;
    }
    s.bbox_lo = bounds_.lo;
    s.bbox_hi = bounds_.hi;
    return s;
}

template <int D>
RunResult<D> Optimizer<D>::run(SeedSet<D> seeds, const IterCallback& cb,
                               const ResumeState* resume) {
    using clock = std::chrono::steady_clock;
    RunResult<D> res;
    int n = seeds.count() * (D + 1);

    GCMMA::Options gopt;
    gopt.max_inner = prob_.max_inner;
    GCMMA mma(n, 1, VecX::Zero(n), VecX::Ones(n), gopt);

    std::vector<double> Jhist;
    double prev_ch = 1.0;
    int k0 = 0;
    VecX z;
    if (resume) {
        std::istringstream is(resume->gcmma);
        mma.load(is);
        C0_ = resume->C0;
        S0_ = resume->S0;
        prev_ch = resume->prev_ch;
        Jhist = resume->J_hist;
        k0 = resume->iter;
        z = Eigen::Map<const VecX>(resume->z.data(), static_cast<int>(resume->z.size()));
        if (z.size() != n) throw Error("resume: design vector size mismatch");
    } else {
        z = pack(seeds);
    }

    auto snapshot = [&](int k) {
        ResumeState st;
        st.iter = k;
        st.C0 = C0_;
        st.S0 = S0_;
        st.prev_ch = prev_ch;
        st.J_hist = Jhist;
        st.z.assign(z.data(), z.data() + z.size());
        std::ostringstream os;
        mma.save(os);
        st.gcmma = os.str();
        return st;
    };

    Eval e = evaluate(unpack(z));
    if (!resume) {
        IterRecord rec;
        rec.iter = 0;
        rec.C = e.C;
        rec.S = e.S;
        rec.J = e.J;
        rec.Vfrac = e.Vfrac;
        res.trace.records.push_back(rec);
        if (cb) cb(rec, state_seeds_, snapshot(0));
    }

    for (int k = k0 + 1; k <= prob_.max_iter; ++k) {
        auto t0 = clock::now();
        Grads gr = gradients(state_seeds_);
        VecX fval(1);
        fval[0] = e.Vfrac / prob_.v - 1.0;
        MatX dfdx = gr.dG.transpose();

        Eval trial_state;
        auto trial = [&](const VecX& zt, double& f0, VecX& fv) {
            trial_state = evaluate(unpack(zt));
            f0 = trial_state.J;
            fv = VecX::Constant(1, trial_state.Vfrac / prob_.v - 1.0);
        };
        VecX znew = mma.step(z, e.J, gr.dJ, fval, dfdx, trial);

        // the accepted point is always the last trial evaluated
        z = znew;
        e = trial_state;

        double V_er = (e.Vfrac - prob_.v) / prob_.v;
        Jhist.push_back(e.J);
        double ch = convergence_check(Jhist, static_cast<int>(Jhist.size()), V_er, prev_ch);
        prev_ch = ch;

        IterRecord rec;
        rec.iter = k;
        rec.C = e.C;
        rec.S = e.S;
        rec.J = e.J;
        rec.Vfrac = e.Vfrac;
        rec.ch = ch;
        rec.flagged = gr.flagged;
        rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        res.trace.records.push_back(rec);

        if (cb) cb(rec, state_seeds_, snapshot(k));
        if (ch < prob_.ch_tol) {
            res.converged = true;
            break;
        }
    }

    // Restore feasibility by shrinking radii toward r_lo if needed (volume is
    // monotone in the radii). Zero-iteration runs return the design as-is.
    if (k0 < prob_.max_iter && e.Vfrac > prob_.v * (1.0 + 1e-3)) {
        SeedSet<D> base = state_seeds_;
        auto shrink = [&](double t) {
            SeedSet<D> s = base;
            for (double& rr : s.r) rr = prob_.r_lo + t * (rr - prob_.r_lo);
            return s;
        };
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
            double t = 0.5 * (lo + hi);
            (evaluate(shrink(t)).Vfrac > prob_.v ? hi : lo) = t;
        }
        e = evaluate(shrink(lo));
        res.feasibility_clamped = true;
    }

    res.seeds = state_seeds_;
    res.C0 = C0_;
    res.S0 = S0_;
    return res;
}

template <int D>
std::pair<VecX, VecX> Optimizer<D>::gradient_probe(const SeedSet<D>& seeds,
                                                   const std::vector<int>& vars, double fd_rel) {
    evaluate(seeds);
    Grads gr = gradients(state_seeds_);
    VecX z = pack(state_seeds_);
    VecX assembled(vars.size()), fd(vars.size());
    for (size_t i = 0; i < vars.size(); ++i) {
        int a = vars[i];
        assembled[static_cast<int>(i)] = gr.dJ[a];
        VecX zp = z, zm = z;
        zp[a] += fd_rel;
        zm[a] -= fd_rel;
        double Jp = evaluate(unpack(zp)).J;
        double Jm = evaluate(unpack(zm)).J;
        fd[static_cast<int>(i)] = (Jp - Jm) / (2 * fd_rel);
    }
    evaluate(seeds); // restore state
    return {assembled, fd};
}

template <int D>
SeedSet<D> init_seeds(const SignedDomain<D>& domain, const FineMesh<D>& mesh,
                      const FoamParams<D>& params, int N_s, double v, std::uint64_t rng_seed,
                      const std::string& strategy, const Box<D>& bounds, double clip_tol,
                      double clip_step, bool* blue_noise_failed) {
    if (N_s < 1) throw Error("init_seeds: need at least one seed");
    std::mt19937_64 rng(rng_seed);
    Box<D> box = domain.bbox();
    auto sample_inside = [&]() {
        for (int tries = 0; tries < 100000; ++tries) {
            Vec<D> x;
            for (int d = 0; d < D; ++d) {
                std::uniform_real_distribution<double> u(box.lo[d], box.hi[d]);
                x[d] = u(rng);
            }
            if (domain.phi(x) > 0) return x;
        }
        throw Error("init_seeds: domain interior appears empty");
    };

    SeedSet<D> seeds;
    seeds.bbox_lo = bounds.lo;
    seeds.bbox_hi = bounds.hi;
    if (blue_noise_failed) *blue_noise_failed = false;

    if (strategy == "blue-noise") {
        // |Omega| estimate by Monte Carlo, then dart throwing.
        int hits = 0, total = 20000;
        std::vector<std::uniform_real_distribution<double>> us;
        for (int d = 0; d < D; ++d) us.emplace_back(box.lo[d], box.hi[d]);
        for (int t = 0; t < total; ++t) {
            Vec<D> x;
            for (int d = 0; d < D; ++d) x[d] = us[d](rng);
            if (domain.phi(x) > 0) ++hits;
        }
        double vol = box.extent().prod() * hits / total;
        double rd = 0.7 * std::pow(vol / std::max(N_s, 1), 1.0 / D);
        int attempts = 0, budget = 1000 * N_s;
        while (static_cast<int>(seeds.X.size()) < N_s && attempts < budget) {
            ++attempts;
            Vec<D> x = sample_inside();
            bool ok = true;
            for (const auto& y : seeds.X)
                if ((x - y).norm() < rd) {
                    ok = false;
                    break;
                }
            if (ok) seeds.X.push_back(x);
        }
        if (static_cast<int>(seeds.X.size()) < N_s) {
            if (blue_noise_failed) *blue_noise_failed = true;
            seeds.X.clear();
        }
    }
    if (seeds.X.empty())
        for (int i = 0; i < N_s; ++i) seeds.X.push_back(sample_inside());
    nudge_duplicates<D>(seeds, box);

    // Shared-radius bisection to hit the target volume fraction.
    seeds.r.assign(N_s, 0.0);
    VoronoiGraph<D> graph = tessellate<D>(seeds, bounds);
    clip<D>(graph, domain, clip_tol, clip_step);
    FoamParams<D> p = params;
    if (p.eps <= 0) p.eps = 1.5 * mesh.l_a;
    auto vfrac_at = [&](double r) {
        for (auto& b : graph.beams) b.rbar = r;
        SeedSet<D> s = seeds;
        s.r.assign(N_s, r);
        FoamField<D> field(&graph, &s, &domain, p);
        DensityField d = sample_density<D>(mesh, field);
        return volume<D>(d, mesh).second;
    };
    double hi = std::max(2.0 * p.eps, mesh.l_a);
    while (vfrac_at(hi) < v && hi < box.diagonal()) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        double f = vfrac_at(mid);
        if (std::abs(f - v) <= 0.01 * v) {
            lo = hi = mid;
            break;
        }
        (f < v ? lo : hi) = mid;
    }
    seeds.r.assign(N_s, 0.5 * (lo + hi));
    return seeds;
}

template class Optimizer<2>;
template class Optimizer<3>;
template SeedSet<2> init_seeds<2>(const SignedDomain<2>&, const FineMesh<2>&,
                                  const FoamParams<2>&, int, double, std::uint64_t,
                                  const std::string&, const Box<2>&, double, double, bool*);
template SeedSet<3> init_seeds<3>(const SignedDomain<3>&, const FineMesh<3>&,
                                  const FoamParams<3>&, int, double, std::uint64_t,
                                  const std::string&, const Box<3>&, double, double, bool*);

} // namespace foam
