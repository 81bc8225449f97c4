#include "foam/sensitivity.hpp"

#include "foam/predicates.hpp"

#include <atomic>
#include <map>
#include <optional>

namespace foam {

namespace {

std::vector<std::vector<int>> hop_sets(const std::vector<std::vector<int>>& adj, int depth) {
    int n = static_cast<int>(adj.size());
    std::vector<std::vector<int>> out(n);
    std::vector<int> mark(n, -1);
    for (int s = 0; s < n; ++s) {
        std::vector<int> frontier{s};
        mark[s] = s;
        out[s].push_back(s);
        for (int level = 0; level < depth; ++level) {
            std::vector<int> next;
            for (int u : frontier)
                for (int w : adj[u])
                    if (mark[w] != s) {
                        mark[w] = s;
                        next.push_back(w);
                        out[s].push_back(w);
                    }
            frontier.swap(next);
        }
        std::sort(out[s].begin(), out[s].end());
    }
    return out;
}

} // namespace

template <int D>
bool differentiability_guard(const Vec<D>& x0, const SeedSet<D>& seeds,
                             const std::vector<int>& local, double l_a) {
    double tol = 1e-3 * l_a;
    if (local.size() >= 2) {
        double d1 = (seeds.X[local[0]] - x0).norm();
        double d2 = (seeds.X[local[1]] - x0).norm();
        if (d2 - d1 <= tol) return true;
    }
    if (local.size() >= static_cast<size_t>(D + 2)) {
        std::array<Vec<D>, D + 1> simplex;
        for (int i = 0; i <= D; ++i) simplex[i] = seeds.X[local[i]];
        Vec<D> c = circumcenter<D>(simplex);
        if (!c.allFinite()) return true;
        double R = (simplex[0] - c).norm();
        if (std::abs((seeds.X[local[D + 1]] - c).norm() - R) <= tol) return true;
    }
    return false;
}

template <int D>
SensitivityContext<D> build_context(const SeedSet<D>& seeds, const VoronoiGraph<D>& graph,
                                    const SignedDomain<D>& domain, const FineMesh<D>& mesh,
                                    const DensityField& density, const FoamParams<D>& params,
                                    const Box<D>& bounds, double clip_tol, double clip_step,
                                    double h) {
    SensitivityContext<D> ctx{seeds,  graph,    domain,    mesh, density,
                              params, bounds,   clip_tol,  clip_step, {}};
    auto& ws = ctx.ws;
    ws.h = h;
    int ns = seeds.count();
    ws.knn = std::min(params.knn, ns);

    double band_half = params.eps + 4.0 * h;
    for (size_t v = 0; v < mesh.nodes.size(); ++v)
        if (std::abs(density.vertex_phi[v]) <= band_half) ws.band.push_back(static_cast<int>(v));

    int nb = static_cast<int>(ws.band.size());
    ws.nearest.resize(nb);
    ws.guarded.assign(nb, 0);
    ws.three_point_ok.assign(nb, 0);
    ws.knn_ids.resize(static_cast<size_t>(nb) * ws.knn);

    parallel_for(nb, [&](int bi) {
        const Vec<D>& x = mesh.nodes[ws.band[bi]];
        std::vector<int> ids = two_ring_seeds<D>(x, seeds, ws.knn);
        ws.nearest[bi] = ids[0];
        double rmin = std::numeric_limits<double>::infinity(), rmax = 0;
        for (int k = 0; k < ws.knn; ++k) {
            ws.knn_ids[static_cast<size_t>(bi) * ws.knn + k] = ids[k];
            rmin = std::min(rmin, seeds.r[ids[k]]);
            rmax = std::max(rmax, seeds.r[ids[k]]);
        }
        ws.three_point_ok[bi] = rmax <= 2.0 * rmin;
        ws.guarded[bi] = differentiability_guard<D>(x, seeds, ids, mesh.l_a);
    });
    for (int bi = 0; bi < nb; ++bi) ws.guarded_count += ws.guarded[bi];

    auto hop3 = hop_sets(graph.neighbors, 3);
    auto hop2 = hop_sets(graph.neighbors, 2);
    ws.affected.resize(ns);
    ws.r_affected.resize(ns);
    for (int bi = 0; bi < nb; ++bi) {
        int s = ws.nearest[bi];
        for (int i : hop3[s]) ws.affected[i].push_back(bi);
        for (int i : hop2[s]) ws.r_affected[i].push_back(bi);
    }
    return ctx;
}

template <int D>
DensityJacobianSlice density_derivative(const SensitivityContext<D>& ctx, int variable) {
    const auto& ws = ctx.ws;
    const auto& mesh = ctx.mesh;
    int ns = ctx.seeds.count();
    DensityJacobianSlice slice;
    slice.variable = variable;
    double h = ws.h;
    auto H = [&](double phi) { return heaviside(phi, ctx.params.eps, ctx.params.alpha); };

    if (variable >= ns * D) {
        // Radius variable: the tessellation is radius-independent, so only the
        // blend radii of beams touching the seed change.
        int i = variable - ns * D;
        const auto& aff = ws.r_affected[i];
        if (aff.empty()) return slice;

        auto patched = [&](double dr) {
            VoronoiGraph<D> g = ctx.graph;
            std::vector<double> r = ctx.seeds.r;
            r[i] += dr;
            for (int b : g.incident[i])
                g.beams[b].rbar = beam_radius(r, g.beams[b].seeds.data(), D);
            return g;
        };
        VoronoiGraph<D> gp = patched(h), gm = patched(-h);
        FoamField<D> fp(&gp, &ctx.seeds, &ctx.domain, ctx.params);
        FoamField<D> fm(&gm, &ctx.seeds, &ctx.domain, ctx.params);
        for (int bi : aff) {
            int v = ws.band[bi];
            const Vec<D>& x = mesh.nodes[v];
            double val = (H(fp.phi(x)) - H(fm.phi(x))) / (2.0 * h);
            if (val != 0.0) slice.entries.push_back({v, val});
        }
        return slice;
    }

    int i = variable / D, d = variable % D;
    const auto& aff = ws.affected[i];
    if (aff.empty()) return slice;

    SeedSet<D> sp = ctx.seeds, sm = ctx.seeds;
    sp.X[i][d] += h;
    sm.X[i][d] -= h;

    for (int bi : aff)
        if (ws.guarded[bi]) {
            slice.forward = true;
            break;
        }

    std::optional<VoronoiGraph<D>> gp, gm;
    std::optional<FoamField<D>> fp, fm;
    auto field = [&](const SeedSet<D>& s, std::optional<VoronoiGraph<D>>& g,
                     std::optional<FoamField<D>>& f) -> FoamField<D>& {
        if (!f) {
            g = tessellate<D>(s, ctx.bounds);
            clip<D>(*g, ctx.domain, ctx.clip_tol, ctx.clip_step);
            f.emplace(&*g, &s, &ctx.domain, ctx.params);
        }
        return *f;
    };
    auto three_point = [&](const SeedSet<D>& s, int bi,
                           const Vec<D>& x) -> std::optional<double> {
        const int* ids = &ws.knn_ids[static_cast<size_t>(bi) * ws.knn];
        std::vector<Vec<D>> X(ws.knn);
        std::vector<double> r(ws.knn);
        for (int k = 0; k < ws.knn; ++k) {
            X[k] = s.X[ids[k]];
            r[k] = s.r[ids[k]];
        }
        ThreePointResult res = three_point_beam<D>(x, X, r);
        if (res.degenerate) return std::nullopt;
        std::vector<double> terms{res.rbar - res.dist};
        if (ctx.params.shell)
            terms.push_back(ctx.params.shell_thickness - std::abs(ctx.domain.phi(x)));
        return ks_union(terms, ctx.params.p);
    };

    for (int bi : aff) {
        int v = ws.band[bi];
        const Vec<D>& x = mesh.nodes[v];
        double phip, phim;
        bool done = false;
        if (ws.three_point_ok[bi]) {
            auto tp = three_point(sp, bi, x);
            auto tm = three_point(slice.forward ? ctx.seeds : sm, bi, x);
            if (tp && tm) {
                phip = *tp;
                phim = *tm;
                done = true;
            }
        }
        if (!done) {
            phip = field(sp, gp, fp).phi(x);
            phim = slice.forward ? ctx.density.vertex_phi[v] : field(sm, gm, fm).phi(x);
        }
        double val = (H(phip) - H(phim)) / (slice.forward ? h : 2.0 * h);
        if (val != 0.0) slice.entries.push_back({v, val});
    }
    return slice;
}

template <int D>
std::vector<std::tuple<int, double, double>> element_derivative(
    const FineMesh<D>& mesh, const DensityField& density, double alpha,
    const DensityJacobianSlice& slice) {
    std::map<int, std::pair<double, double>> acc;
    for (const auto& en : slice.entries) {
        if (!density.vertex_mask[en.vertex]) continue;
        for (int e : mesh.node_elements[en.vertex]) {
            int m = 0;
            for (int k = 0; k <= D; ++k) m += density.vertex_mask[mesh.elements[e][k]];
            double dvol = en.value / m;
            auto& a = acc[e];
            if (density.He_vol[e] > alpha) a.first += dvol;
            a.second += dvol;
        }
    }
    std::vector<std::tuple<int, double, double>> out;
    out.reserve(acc.size());
    for (const auto& [e, v] : acc) out.emplace_back(e, v.first, v.second);
    return out;
}

template <int D>
VecX element_energies(const FineMesh<D>& mesh, const VecX& q, const Material& mat) {
    int ne = static_cast<int>(mesh.elements.size());
    VecX out(ne);
    parallel_for(ne, [&](int e) {
        std::array<Vec<D>, D + 1> xs;
        Eigen::Matrix<double, D*(D + 1), 1> qe;
        for (int k = 0; k <= D; ++k) {
            int n = mesh.elements[e][k];
            xs[k] = mesh.nodes[n];
            for (int a = 0; a < D; ++a) qe[k * D + a] = q[n * D + a];
        }
        out[e] = qe.dot(element_stiffness<D>(xs, mat) * qe);
    });
    return out;
}

template <int D>
void vertex_weights(const FineMesh<D>& mesh, const DensityField& density, double alpha,
                    const VecX& energies, VecX& WE, VecX& WV) {
    WE = VecX::Zero(static_cast<int>(mesh.nodes.size()));
    WV = VecX::Zero(static_cast<int>(mesh.nodes.size()));
    for (size_t e = 0; e < mesh.elements.size(); ++e) {
        int m = 0;
        for (int k = 0; k <= D; ++k) m += density.vertex_mask[mesh.elements[e][k]];
        if (m == 0) continue;
        bool clamped = density.He_vol[e] <= alpha;
        for (int k = 0; k <= D; ++k) {
            int v = mesh.elements[e][k];
            if (!density.vertex_mask[v]) continue;
            WV[v] += mesh.volume[e] / m;
            if (!clamped) WE[v] += energies[static_cast<int>(e)] / m;
        }
    }
}

double compliance_gradient_entry(const DensityJacobianSlice& slice, const VecX& WE) {
    double s = 0;
    for (const auto& en : slice.entries) s += en.value * WE[en.vertex];
    return -0.5 * s;
}

double volume_gradient_entry(const DensityJacobianSlice& slice, const VecX& WV) {
    double s = 0;
    for (const auto& en : slice.entries) s += en.value * WV[en.vertex];
    return s;
}

template <int D>
std::pair<double, MatX> shape_energy_and_gradient(const SeedSet<D>& seeds,
                                                  const std::vector<Vec<D>>& centroids,
                                                  const std::vector<char>& valid, double w) {
    double S = 0;
    MatX grad = MatX::Zero(seeds.count(), D);
    for (int i = 0; i < seeds.count(); ++i) {
        if (!valid[i]) continue;
        Vec<D> dlt = seeds.X[i] - centroids[i];
        S += w * dlt.squaredNorm();
        grad.row(i) = 2.0 * w * dlt.transpose();
    }
    return {S, grad};
}

template <int D>
ObjectiveGradients<D> assemble_gradients(const SensitivityContext<D>& ctx, const VecX& WE,
                                         const VecX& WV, const std::vector<Vec<D>>& centroids,
                                         const std::vector<char>& centroid_valid) {
    ObjectiveGradients<D> g;
    int n = ctx.n_vars();
    g.dC = VecX::Zero(n);
    g.dV = VecX::Zero(n);
    g.dS = VecX::Zero(n);

    auto [S, dS] = shape_energy_and_gradient<D>(ctx.seeds, centroids, centroid_valid);
    g.S = S;
    for (int i = 0; i < ctx.seeds.count(); ++i)
        for (int d = 0; d < D; ++d) g.dS[i * D + d] = dS(i, d);

    std::atomic<int> fwd{0};
    parallel_for(n, [&](int a) {
        DensityJacobianSlice slice = density_derivative<D>(ctx, a);
        if (slice.forward) ++fwd;
        g.dC[a] = compliance_gradient_entry(slice, WE);
        g.dV[a] = volume_gradient_entry(slice, WV);
    });
    g.forward_count = fwd.load();
    g.guarded_vertices = ctx.ws.guarded_count;
    return g;
}

template bool differentiability_guard<2>(const Vec<2>&, const SeedSet<2>&,
                                         const std::vector<int>&, double);
template bool differentiability_guard<3>(const Vec<3>&, const SeedSet<3>&,
                                         const std::vector<int>&, double);
template SensitivityContext<2> build_context<2>(const SeedSet<2>&, const VoronoiGraph<2>&,
                                                const SignedDomain<2>&, const FineMesh<2>&,
                                                const DensityField&, const FoamParams<2>&,
                                                const Box<2>&, double, double, double);
template SensitivityContext<3> build_context<3>(const SeedSet<3>&, const VoronoiGraph<3>&,
                                                const SignedDomain<3>&, const FineMesh<3>&,
                                                const DensityField&, const FoamParams<3>&,
                                                const Box<3>&, double, double, double);
template DensityJacobianSlice density_derivative<2>(const SensitivityContext<2>&, int);
template DensityJacobianSlice density_derivative<3>(const SensitivityContext<3>&, int);
template std::vector<std::tuple<int, double, double>> element_derivative<2>(
    const FineMesh<2>&, const DensityField&, double, const DensityJacobianSlice&);
template std::vector<std::tuple<int, double, double>> element_derivative<3>(
    const FineMesh<3>&, const DensityField&, double, const DensityJacobianSlice&);
template VecX element_energies<2>(const FineMesh<2>&, const VecX&, const Material&);
template VecX element_energies<3>(const FineMesh<3>&, const VecX&, const Material&);
template void vertex_weights<2>(const FineMesh<2>&, const DensityField&, double, const VecX&,
                                VecX&, VecX&);
template void vertex_weights<3>(const FineMesh<3>&, const DensityField&, double, const VecX&,
                                VecX&, VecX&);
template std::pair<double, MatX> shape_energy_and_gradient<2>(const SeedSet<2>&,
                                                              const std::vector<Vec<2>>&,
                                                              const std::vector<char>&, double);
template std::pair<double, MatX> shape_energy_and_gradient<3>(const SeedSet<3>&,
                                                              const std::vector<Vec<3>>&,
                                                              const std::vector<char>&, double);
template ObjectiveGradients<2> assemble_gradients<2>(const SensitivityContext<2>&, const VecX&,
                                                     const VecX&, const std::vector<Vec<2>>&,
                                                     const std::vector<char>&);
template ObjectiveGradients<3> assemble_gradients<3>(const SensitivityContext<3>&, const VecX&,
                                                     const VecX&, const std::vector<Vec<3>>&,
                                                     const std::vector<char>&);

} // namespace foam
