#include "foam/voronoi.hpp"

#include "foam/delaunay.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace foam {

namespace {

template <int D>
bool lex_less(const Vec<D>& a, const Vec<D>& b) {
    for (int k = 0; k < D; ++k) {
        if (a[k] < b[k]) return true;
        if (a[k] > b[k]) return false;
    }
    return false;
}

// Clip segment [a,b] to an axis box; returns the kept parameter interval.
template <int D>
bool clip_to_box(const Vec<D>& a, const Vec<D>& b, const Box<D>& box, double& t0, double& t1) {
    t0 = 0.0;
    t1 = 1.0;
    Vec<D> d = b - a;
    for (int k = 0; k < D; ++k) {
        if (d[k] == 0.0) {
            if (a[k] < box.lo[k] || a[k] > box.hi[k]) return false;
            continue;
        }
        double u0 = (box.lo[k] - a[k]) / d[k];
        double u1 = (box.hi[k] - a[k]) / d[k];
        if (u0 > u1) std::swap(u0, u1);
        t0 = std::max(t0, u0);
        t1 = std::min(t1, u1);
        if (t0 > t1) return false;
    }
    return true;
}

template <int D>
void check_duplicates(const SeedSet<D>& seeds, double diag) {
    const double tol = 1e-12 * diag;
    std::vector<int> order(seeds.X.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return lex_less<D>(seeds.X[a], seeds.X[b]); });
    // A duplicate pair is lexicographically adjacent up to coordinate ties;
    // scanning a window bounded by the x-coordinate tolerance is exact.
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            const Vec<D>& p = seeds.X[order[i]];
            const Vec<D>& q = seeds.X[order[j]];
            if (q[0] - p[0] > tol) break;
            if ((p - q).norm() < tol)
                throw Error("tessellate: coincident seeds " + std::to_string(std::min(order[i], order[j])) +
                            " and " + std::to_string(std::max(order[i], order[j])));
        }
    }
}

// Guard seeds on the axes far outside the margin box: every real cell becomes
// bounded and degenerate inputs (collinear/coplanar seed sets) stay full-
// dimensional. Guards own no territory inside the box (they sit at 8x the
// half-diagonal while no box point is farther than 2x from a seed... distance
// to any guard exceeds the distance to the nearest real seed).
template <int D>
std::vector<Vec<D>> guard_points(const Box<D>& box) {
    std::vector<Vec<D>> g;
    Vec<D> c = box.center();
    double L = 8.0 * 0.5 * box.diagonal();
    for (int k = 0; k < D; ++k)
        for (double s : {-1.0, 1.0}) {
            Vec<D> p = c;
            p[k] += s * L;
            g.push_back(p);
        }
    return g;
}

} // namespace

template <int D>
std::vector<int> VoronoiGraph<D>::influence_beams(int s) const {
    std::vector<int> out = incident[s];
    for (int t : neighbors[s]) out.insert(out.end(), incident[t].begin(), incident[t].end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

template <int D>
VoronoiGraph<D> tessellate(const SeedSet<D>& seeds, const Box<D>& bbox) {
    if (seeds.count() < 1) throw Error("tessellate: no seeds");
    if (static_cast<int>(seeds.r.size()) != seeds.count())
        throw Error("tessellate: radii/positions size mismatch");
    for (const Vec<D>& x : seeds.X)
        if (!bbox.contains(x)) throw Error("tessellate: seed outside bounding box");
    check_duplicates(seeds, bbox.diagonal());

    VoronoiGraph<D> graph;
    graph.bounds = bbox;
    graph.neighbors.assign(seeds.count(), {});
    graph.incident.assign(seeds.count(), {});

    std::vector<Vec<D>> pts = seeds.X;
    for (const Vec<D>& g : guard_points(bbox)) pts.push_back(g);

    Delaunay<D> dt;
    dt.build(pts);

    const int ns = seeds.count();
    auto adj = dt.vertex_adjacency();
    for (int s = 0; s < ns; ++s) {
        for (int t : adj[s])
            if (t < ns) graph.neighbors[s].push_back(t);
    }

    struct RawEdge {
        Vec<D> a, b;
        std::array<int, D> seeds;
    };
    std::vector<RawEdge> raw;
    for (const auto& f : dt.real_facets()) {
        bool all_seeds = true;
        for (int v : f.v)
            if (v >= ns) all_seeds = false;
        if (!all_seeds) continue;
        if (f.s1 < 0) throw Error("tessellate: unbounded dual edge (guard failure)");
        RawEdge e;
        e.a = dt.simplex_circumcenter(f.s0);
        e.b = dt.simplex_circumcenter(f.s1);
        if (lex_less<D>(e.b, e.a)) std::swap(e.a, e.b);
        e.seeds = f.v;
        raw.push_back(e);
    }
    // Canonical beam order, independent of construction history.
    std::sort(raw.begin(), raw.end(), [](const RawEdge& x, const RawEdge& y) {
        if (x.seeds != y.seeds) return x.seeds < y.seeds;
        if (lex_less<D>(x.a, y.a)) return true;
        if (lex_less<D>(y.a, x.a)) return false;
        return lex_less<D>(x.b, y.b);
    });

    const double degen_tol = 1e-14 * bbox.diagonal();
    for (const RawEdge& e : raw) {
        double t0, t1;
        if (!clip_to_box<D>(e.a, e.b, bbox, t0, t1)) continue;
        Vec<D> a = e.a + t0 * (e.b - e.a);
        Vec<D> b = e.a + t1 * (e.b - e.a);
        Beam<D> beam;
        beam.v0 = static_cast<int>(graph.vertices.size());
        graph.vertices.push_back(a);
        beam.v1 = static_cast<int>(graph.vertices.size());
        graph.vertices.push_back(b);
        beam.seeds = e.seeds;
        beam.rbar = beam_radius(seeds.r, e.seeds.data(), D);
        beam.degenerate = (a - b).norm() <= degen_tol;
        int id = static_cast<int>(graph.beams.size());
        graph.beams.push_back(beam);
        for (int s : beam.seeds) graph.incident[s].push_back(id);
    }
    for (auto& v : graph.neighbors) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return graph;
}

template <int D>
void clip(VoronoiGraph<D>& graph, const SignedDomain<D>& domain, double tol, double step) {
    VoronoiGraph<D> out;
    out.bounds = graph.bounds;
    out.neighbors = graph.neighbors;
    out.incident.assign(graph.incident.size(), {});

    auto push_beam = [&](const Vec<D>& a, const Vec<D>& b, const Beam<D>& src) {
        Beam<D> nb = src;
        nb.v0 = static_cast<int>(out.vertices.size());
        out.vertices.push_back(a);
        nb.v1 = static_cast<int>(out.vertices.size());
        out.vertices.push_back(b);
        nb.degenerate = src.degenerate;
        int id = static_cast<int>(out.beams.size());
        out.beams.push_back(nb);
        for (int s : nb.seeds) out.incident[s].push_back(id);
    };

    for (const Beam<D>& beam : graph.beams) {
        Vec<D> a = graph.vertices[beam.v0];
        Vec<D> b = graph.vertices[beam.v1];
        if (beam.degenerate) {
            if (domain.phi(a) >= 0) push_beam(a, b, beam);
            continue;
        }
        double len = (b - a).norm();
        int n = std::max(2, static_cast<int>(std::ceil(len / std::max(step, 1e-12))) + 1);
        auto at = [&](double t) { return Vec<D>(a + t * (b - a)); };
        auto inside = [&](double t) { return domain.phi(at(t)) >= 0; };
        // Bisection between an inside and an outside parameter.
        auto cross = [&](double tin, double tout) {
            for (int it = 0; it < 64; ++it) {
                double tm = 0.5 * (tin + tout);
                if (std::abs(tin - tout) * len <= tol) break;
                if (inside(tm))
                    tin = tm;
                else
                    tout = tm;
            }
            return tin;
        };
        std::vector<double> ts(n);
        std::vector<bool> in(n);
        for (int i = 0; i < n; ++i) {
            ts[i] = static_cast<double>(i) / (n - 1);
            in[i] = inside(ts[i]);
        }
        int i = 0;
        while (i < n) {
            if (!in[i]) {
                ++i;
                continue;
            }
            int j = i;
            while (j + 1 < n && in[j + 1]) ++j;
            double t_lo = (i == 0) ? 0.0 : cross(ts[i], ts[i - 1]);
            double t_hi = (j == n - 1) ? 1.0 : cross(ts[j], ts[j + 1]);
            if (t_hi > t_lo) push_beam(at(t_lo), at(t_hi), beam);
            i = j + 1;
        }
    }
    graph = std::move(out);
}

double beam_radius(const std::vector<double>& radii, const int* seed_ids, int count) {
    if (count <= 0) throw Error("beam_radius: empty adjacent-seed set");
    double s = 0;
    for (int i = 0; i < count; ++i) s += radii.at(seed_ids[i]);
    return s / count;
}

template <int D>
std::vector<int> two_ring_seeds(const Vec<D>& x0, const SeedSet<D>& seeds, int k) {
    const int n = seeds.count();
    k = std::min(k, n);
    std::vector<std::pair<double, int>> d(n);
    for (int i = 0; i < n; ++i) d[i] = {(seeds.X[i] - x0).squaredNorm(), i};
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) out[i] = d[i].second;
    return out;
}

template <int D>
ThreePointResult three_point_beam(const Vec<D>& x0, const std::vector<Vec<D>>& X,
                                  const std::vector<double>& r) {
    ThreePointResult res;
    const int need = (D == 3) ? 3 : 2;
    if (static_cast<int>(X.size()) < need) {
        res.degenerate = true;
        return res;
    }
    std::vector<std::pair<double, int>> d(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) d[i] = {(X[i] - x0).squaredNorm(), static_cast<int>(i)};
    std::partial_sort(d.begin(), d.begin() + need, d.end());

    if constexpr (D == 2) {
        const Vec<2>&a = X[d[0].second], &b = X[d[1].second];
        Vec<2> ab = b - a;
        double nrm = ab.norm();
        if (nrm <= 1e-14 * (1.0 + a.norm() + b.norm())) {
            res.degenerate = true;
            return res;
        }
        Vec<2> mid = 0.5 * (a + b);
        // Distance from x0 to the bisector line through mid, normal ab.
        res.dist = std::abs(ab.dot(x0 - mid)) / nrm;
        res.rbar = 0.5 * (r[d[0].second] + r[d[1].second]);
    } else {
        const Vec<3>&a = X[d[0].second], &b = X[d[1].second], &c = X[d[2].second];
        Vec<3> n = (b - a).cross(c - a);
        double scale = (b - a).norm() * (c - a).norm();
        if (n.norm() <= 1e-12 * std::max(scale, 1e-300)) {
            res.degenerate = true;   // collinear triple
            return res;
        }
        // Circumcenter of the triangle in its plane; the locus is the line
        // through it along the plane normal.
        Eigen::Matrix3d A;
        Vec<3> rhs;
        A.row(0) = 2.0 * (b - a).transpose();
        rhs[0] = b.squaredNorm() - a.squaredNorm();
        A.row(1) = 2.0 * (c - a).transpose();
        rhs[1] = c.squaredNorm() - a.squaredNorm();
        A.row(2) = n.transpose();
        rhs[2] = n.dot(a);
        Vec<3> center = A.fullPivLu().solve(rhs);
        Vec<3> axis = n.normalized();
        Vec<3> v = x0 - center;
        res.dist = (v - v.dot(axis) * axis).norm();
        res.rbar = (r[d[0].second] + r[d[1].second] + r[d[2].second]) / 3.0;
    }
    return res;
}

namespace {

// Grows the k-nearest candidate set until a security-radius argument proves
// the probe's owner cell and its one-ring exact: a seed can only cut cell(s)
// if it lies within twice the farthest cell-vertex distance of s, so once
// every excluded seed is provably beyond that, the diagram around the probe
// (owner, one-ring, and every beam incident to them) matches the global one.
// Unbounded or degenerate core cells cannot be certified and force growth,
// degrading to the full seed set in the worst case.
template <int D>
std::vector<int> certified_cover(const Vec<D>& x0, const SeedSet<D>& seeds, int k) {
    const int n = seeds.count();
    std::vector<std::pair<double, int>> d(n);
    for (int i = 0; i < n; ++i) d[i] = {(seeds.X[i] - x0).squaredNorm(), i};
    std::sort(d.begin(), d.end());
    k = std::min(std::max(k, D + 2), n);
    for (;; k = std::min(2 * k, n)) {
        std::vector<int> out(k);
        for (int i = 0; i < k; ++i) out[i] = d[i].second;
        if (k == n) return out;
        std::vector<Vec<D>> pts(k);
        for (int i = 0; i < k; ++i) pts[i] = seeds.X[out[i]];
        bool certified = true;
        try {
            Delaunay<D> dt;
            dt.build(pts);
            auto adj = dt.vertex_adjacency();
            std::vector<char> core(k, 0);
            core[0] = 1;
            for (int t : adj[0]) core[t] = 1;
            std::vector<double> rho(k, 0.0);
            const auto& simp = dt.simplices();
            for (std::size_t sid = 0; certified && sid < simp.size(); ++sid) {
                const auto& sx = simp[sid];
                if (!sx.alive) continue;
                bool touches = false;
                for (int i = 0; i <= D; ++i)
                    if (dt.is_real_vertex(sx.v[i]) && core[sx.v[i]]) touches = true;
                if (!touches) continue;
                if (sx.synthetic) {
                    certified = false;
                    break;
                }
                Vec<D> c = dt.simplex_circumcenter(static_cast<int>(sid));
                if (!c.allFinite()) {
                    certified = false;
                    break;
                }
                for (int i = 0; i <= D; ++i)
                    if (core[sx.v[i]])
                        rho[sx.v[i]] = std::max(rho[sx.v[i]], (c - pts[sx.v[i]]).norm());
            }
            if (certified) {
                const double d_next = std::sqrt(d[k].first);
                for (int i = 0; i < k && certified; ++i)
                    if (core[i] &&
                        d_next <= (2.0 * rho[i] + (pts[i] - x0).norm()) * (1.0 + 1e-12))
                        certified = false;
            }
        } catch (const Error&) {
            certified = false;
        }
        if (certified) return out;
    }
}

} // namespace

template <int D>
VoronoiGraph<D> local_reconstruct(const Vec<D>& x0, const SeedSet<D>& seeds, int k,
                                  const Box<D>& bounds) {
    std::vector<int> subset = certified_cover<D>(x0, seeds, k);
    const int ns = seeds.count();
    if (static_cast<int>(subset.size()) >= D + 1) {
        SeedSet<D> local;
        for (int id : subset) {
            local.X.push_back(seeds.X[id]);
            local.r.push_back(seeds.r[id]);
        }
        try {
            VoronoiGraph<D> g = tessellate(local, bounds);
            // Re-key to global seed ids.
            VoronoiGraph<D> out;
            out.bounds = g.bounds;
            out.vertices = g.vertices;
            out.beams = g.beams;
            out.neighbors.assign(ns, {});
            out.incident.assign(ns, {});
            for (auto& b : out.beams) {
                for (int& s : b.seeds) s = subset[s];
                std::sort(b.seeds.begin(), b.seeds.end());
            }
            for (std::size_t i = 0; i < g.neighbors.size(); ++i) {
                for (int t : g.neighbors[i]) out.neighbors[subset[i]].push_back(subset[t]);
                std::sort(out.neighbors[subset[i]].begin(), out.neighbors[subset[i]].end());
            }
            for (std::size_t i = 0; i < g.incident.size(); ++i) {
                out.incident[subset[i]] = g.incident[i];
                std::sort(out.incident[subset[i]].begin(), out.incident[subset[i]].end());
            }
            return out;
        } catch (const Error&) {
            // Degenerate local subset: fall through to the global diagram.
        }
    }
    return tessellate(seeds, bounds);
}

template <int D>
std::vector<std::optional<Vec<D>>> cell_centroids(const SeedSet<D>& seeds,
                                                  const SignedDomain<D>& domain,
                                                  const FineMesh<D>& fine) {
    const int ns = seeds.count();
    std::vector<Vec<D>> acc(ns, Vec<D>::Zero());
    std::vector<double> mass(ns, 0.0);
    for (std::size_t e = 0; e < fine.elements.size(); ++e) {
        Vec<D> c = fine.element_centroid(static_cast<int>(e));
        if (domain.phi(c) < 0) continue;
        int best = 0;
        double bd = (seeds.X[0] - c).squaredNorm();
        for (int i = 1; i < ns; ++i) {
            double di = (seeds.X[i] - c).squaredNorm();
            if (di < bd) {
                bd = di;
                best = i;
            }
        }
        acc[best] += fine.volume[e] * c;
        mass[best] += fine.volume[e];
    }
    std::vector<std::optional<Vec<D>>> out(ns);
    for (int i = 0; i < ns; ++i)
        if (mass[i] > 0) out[i] = acc[i] / mass[i];
    return out;
}

template struct VoronoiGraph<2>;
template struct VoronoiGraph<3>;
template VoronoiGraph<2> tessellate<2>(const SeedSet<2>&, const Box<2>&);
template VoronoiGraph<3> tessellate<3>(const SeedSet<3>&, const Box<3>&);
template void clip<2>(VoronoiGraph<2>&, const SignedDomain<2>&, double, double);
template void clip<3>(VoronoiGraph<3>&, const SignedDomain<3>&, double, double);
template std::vector<int> two_ring_seeds<2>(const Vec<2>&, const SeedSet<2>&, int);
template std::vector<int> two_ring_seeds<3>(const Vec<3>&, const SeedSet<3>&, int);
template ThreePointResult three_point_beam<2>(const Vec<2>&, const std::vector<Vec<2>>&,
                                              const std::vector<double>&);
template ThreePointResult three_point_beam<3>(const Vec<3>&, const std::vector<Vec<3>>&,
                                              const std::vector<double>&);
template VoronoiGraph<2> local_reconstruct<2>(const Vec<2>&, const SeedSet<2>&, int, const Box<2>&);
template VoronoiGraph<3> local_reconstruct<3>(const Vec<3>&, const SeedSet<3>&, int, const Box<3>&);
template std::vector<std::optional<Vec<2>>> cell_centroids<2>(const SeedSet<2>&,
                                                              const SignedDomain<2>&,
                                                              const FineMesh<2>&);
template std::vector<std::optional<Vec<3>>> cell_centroids<3>(const SeedSet<3>&,
                                                              const SignedDomain<3>&,
                                                              const FineMesh<3>&);

} // namespace foam
