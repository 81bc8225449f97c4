#include "foam/delaunay.hpp"

#include <algorithm>
#include <random>
#include <unordered_set>

namespace foam {

namespace {

template <int D>
struct FacetKey {
    std::array<int, D> v;
    bool operator==(const FacetKey&) const = default;
};

template <int D>
struct FacetKeyHash {
    std::size_t operator()(const FacetKey<D>& k) const {
        std::size_t h = 1469598103934665603ULL;
        for (int x : k.v) {
            h ^= static_cast<std::size_t>(x) + 0x9e3779b9;
            h *= 1099511628211ULL;
        }
        return h;
    }
};

} // namespace

template <int D>
std::array<Vec<D>, D + 1> Delaunay<D>::corners(int s) const {
    std::array<Vec<D>, D + 1> c;
    for (int i = 0; i <= D; ++i) c[i] = pts_[simp_[s].v[i]];
    return c;
}

template <int D>
bool Delaunay<D>::ball_contains(int s, const Vec<D>& p) const {
    return in_ball<D>(corners(s), p) > 0;
}

template <int D>
int Delaunay<D>::locate(const Vec<D>& p, int hint) const {
    auto inside_test = [&](int s, int skip_from) -> int {
        // Returns -1 if p inside (closed) simplex s, else the facet to cross.
        const Simplex& sx = simp_[s];
        auto c = corners(s);
        walk_rng_ ^= walk_rng_ << 13;
        walk_rng_ ^= walk_rng_ >> 7;
        walk_rng_ ^= walk_rng_ << 17;
        int start = static_cast<int>(walk_rng_ % (D + 1));
        for (int k = 0; k <= D; ++k) {
            int i = (start + k) % (D + 1);
            if (sx.nb[i] == skip_from && skip_from >= 0) continue;
            auto trial = c;
            trial[i] = p;
            if (orientation<D>(trial) < 0) return i;
        }
        return -1;
    };

    int s = hint;
    if (s < 0 || s >= static_cast<int>(simp_.size()) || !simp_[s].alive) {
        s = -1;
        for (int i = static_cast<int>(simp_.size()) - 1; i >= 0; --i)
            if (simp_[i].alive) {
                s = i;
                break;
            }
        if (s < 0) throw Error("delaunay: empty triangulation");
    }
    int prev = -1;
    std::size_t cap = 4 * simp_.size() + 64;
    for (std::size_t step = 0; step < cap; ++step) {
        int i = inside_test(s, prev);
        if (i < 0) return s;
        int next = simp_[s].nb[i];
        if (next < 0) throw Error("delaunay: walked out of the super simplex");
        prev = s;
        s = next;
        if (!simp_[s].alive) throw Error("delaunay: walk reached dead simplex");
    }
    // Degenerate walk; exhaustive scan.
    for (int cand = 0; cand < static_cast<int>(simp_.size()); ++cand) {
        if (!simp_[cand].alive) continue;
        auto c = corners(cand);
        bool ok = true;
        for (int i = 0; i <= D && ok; ++i) {
            auto trial = c;
            trial[i] = p;
            if (orientation<D>(trial) < 0) ok = false;
        }
        if (ok) return cand;
    }
    throw Error("delaunay: point location failed");
}

template <int D>
void Delaunay<D>::insert(int pid, int hint) {
    const Vec<D>& p = pts_[pid];
    int t0 = locate(p, hint);

    std::vector<int> bad;
    std::unordered_set<int> in_bad;
    bad.push_back(t0);
    in_bad.insert(t0);
    for (std::size_t q = 0; q < bad.size(); ++q) {
        const Simplex& sx = simp_[bad[q]];
        for (int i = 0; i <= D; ++i) {
            int nb = sx.nb[i];
            if (nb < 0 || in_bad.count(nb)) continue;
            if (ball_contains(nb, p)) {
                bad.push_back(nb);
                in_bad.insert(nb);
            }
        }
    }

    struct Boundary {
        std::array<int, D> verts;
        int outer;
    };
    std::vector<Boundary> boundary;
    for (int widen = 0;; ++widen) {
        if (widen > 2 * D + 8) throw Error("delaunay: degenerate insertion (duplicate point?)");
        boundary.clear();
        bool widened = false;
        for (int sid : bad) {
            const Simplex& sx = simp_[sid];
            for (int i = 0; i <= D; ++i) {
                int nb = sx.nb[i];
                if (nb >= 0 && in_bad.count(nb)) continue;
                Boundary b;
                int c = 0;
                for (int j = 0; j <= D; ++j)
                    if (j != i) b.verts[c++] = sx.v[j];
                b.outer = nb;
                // p exactly on the facet plane: widen the cavity across it.
                std::array<Vec<D>, D + 1> t;
                for (int j = 0; j < D; ++j) t[j] = pts_[b.verts[j]];
                t[D] = p;
                if (orientation<D>(t) == 0) {
                    if (nb < 0) throw Error("delaunay: point on super-simplex boundary");
                    bad.push_back(nb);
                    in_bad.insert(nb);
                    widened = true;
                    break;
                }
                boundary.push_back(b);
            }
            if (widened) break;
        }
        if (!widened) break;
    }

    for (int sid : bad) simp_[sid].alive = false;

    std::unordered_map<FacetKey<D>, std::pair<int, int>, FacetKeyHash<D>> open;
    std::vector<int> created;
    created.reserve(boundary.size());
    for (const Boundary& b : boundary) {
        Simplex ns;
        for (int j = 0; j < D; ++j) ns.v[j] = b.verts[j];
        ns.v[D] = pid;
        std::array<Vec<D>, D + 1> c;
        for (int i = 0; i <= D; ++i) c[i] = pts_[ns.v[i]];
        int o = orientation<D>(c);
        if (o == 0) throw Error("delaunay: zero-volume simplex created");
        std::array<int, D + 1> nb;
        nb.fill(-1);
        if (o < 0) {
            std::swap(ns.v[0], ns.v[1]);
        }
        ns.nb = nb;
        int id = static_cast<int>(simp_.size());
        // Facet opposite pid is the cavity boundary facet.
        for (int i = 0; i <= D; ++i)
            if (ns.v[i] == pid) ns.nb[i] = b.outer;
        simp_.push_back(ns);
        created.push_back(id);
        if (b.outer >= 0) {
            Simplex& out = simp_[b.outer];
            for (int i = 0; i <= D; ++i) {
                int nb2 = out.nb[i];
                if (nb2 >= 0 && in_bad.count(nb2)) {
                    // Check the facet opposite i matches b.verts.
                    std::array<int, D> fv;
                    int c2 = 0;
                    for (int j = 0; j <= D; ++j)
                        if (j != i) fv[c2++] = out.v[j];
                    std::sort(fv.begin(), fv.end());
                    std::array<int, D> bv = b.verts;
                    std::sort(bv.begin(), bv.end());
                    if (fv == bv) {
                        out.nb[i] = id;
                        break;
                    }
                }
            }
        }
    }

    // Wire neighbor links between the new simplices (facets containing pid).
    for (int id : created) {
        Simplex& ns = simp_[id];
        for (int i = 0; i <= D; ++i) {
            if (ns.v[i] == pid) continue;
            FacetKey<D> key;
            int c = 0;
            for (int j = 0; j <= D; ++j)
                if (j != i) key.v[c++] = ns.v[j];
            std::sort(key.v.begin(), key.v.end());
            auto it = open.find(key);
            if (it == open.end()) {
                open.emplace(key, std::make_pair(id, i));
            } else {
                ns.nb[i] = it->second.first;
                simp_[it->second.first].nb[it->second.second] = id;
                open.erase(it);
            }
        }
    }
    if (!open.empty()) throw Error("delaunay: cavity boundary not closed");
}

template <int D>
void Delaunay<D>::build(const std::vector<Vec<D>>& points) {
    pts_.clear();
    simp_.clear();
    n_input_ = static_cast<int>(points.size());
    if (n_input_ < 1) throw Error("delaunay: no points");
    pts_ = points;

    Box<D> bb = Box<D>::of(points);
    Vec<D> c = bb.center();
    double R = std::max(0.5 * bb.diagonal(), 1e-12);
    const double S = 1e5 * R;

    if constexpr (D == 2) {
        for (double ang : {0.5 * M_PI, 0.5 * M_PI + 2.0 * M_PI / 3.0, 0.5 * M_PI + 4.0 * M_PI / 3.0}) {
            Vec<2> v;
            v << c[0] + 3.0 * S * std::cos(ang), c[1] + 3.0 * S * std::sin(ang);
            pts_.push_back(v);
        }
    } else {
        const double dirs[4][3] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
        for (auto& d : dirs) {
            Vec<3> v;
            v << c[0] + 3.0 * S * d[0], c[1] + 3.0 * S * d[1], c[2] + 3.0 * S * d[2];
            pts_.push_back(v);
        }
    }

    Simplex root;
    for (int i = 0; i <= D; ++i) {
        root.v[i] = n_input_ + i;
        root.nb[i] = -1;
    }
    {
        std::array<Vec<D>, D + 1> cs;
        for (int i = 0; i <= D; ++i) cs[i] = pts_[root.v[i]];
        if (orientation<D>(cs) < 0) std::swap(root.v[0], root.v[1]);
    }
    simp_.push_back(root);

    std::vector<int> order(n_input_);
    for (int i = 0; i < n_input_; ++i) order[i] = i;
    std::mt19937_64 rng(0xC0FFEEULL);
    std::shuffle(order.begin(), order.end(), rng);

    for (int pid : order) insert(pid, static_cast<int>(simp_.size()) - 1);

    for (Simplex& s : simp_) {
        if (!s.alive) continue;
        for (int i = 0; i <= D; ++i)
            if (s.v[i] >= n_input_) {
                s.synthetic = true;
                break;
            }
    }
}

template <int D>
std::vector<typename Delaunay<D>::Facet> Delaunay<D>::real_facets() const {
    std::vector<Facet> out;
    std::unordered_map<FacetKey<D>, std::pair<int, int>, FacetKeyHash<D>> seen;
    for (int sid = 0; sid < static_cast<int>(simp_.size()); ++sid) {
        const Simplex& sx = simp_[sid];
        if (!sx.alive) continue;
        for (int i = 0; i <= D; ++i) {
            bool real = true;
            FacetKey<D> key;
            int c = 0;
            for (int j = 0; j <= D; ++j) {
                if (j == i) continue;
                if (sx.v[j] >= n_input_) {
                    real = false;
                    break;
                }
                key.v[c++] = sx.v[j];
            }
            if (!real) continue;
            std::sort(key.v.begin(), key.v.end());
            auto it = seen.find(key);
            if (it == seen.end()) {
                seen.emplace(key, std::make_pair(sid, -1));
            } else if (it->second.first != sid) {
                it->second.second = sid;
            }
        }
    }
    out.reserve(seen.size());
    for (const auto& [key, pair] : seen) {
        Facet f;
        f.v = key.v;
        f.s0 = pair.first;
        f.s1 = pair.second;
        out.push_back(f);
    }
    std::sort(out.begin(), out.end(), [](const Facet& a, const Facet& b) { return a.v < b.v; });
    return out;
}

template <int D>
std::vector<std::vector<int>> Delaunay<D>::vertex_adjacency() const {
    std::vector<std::vector<int>> adj(n_input_);
    for (const Simplex& sx : simp_) {
        if (!sx.alive) continue;
        for (int i = 0; i <= D; ++i) {
            if (sx.v[i] >= n_input_) continue;
            for (int j = i + 1; j <= D; ++j) {
                if (sx.v[j] >= n_input_) continue;
                adj[sx.v[i]].push_back(sx.v[j]);
                adj[sx.v[j]].push_back(sx.v[i]);
            }
        }
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return adj;
}

template <int D>
Vec<D> Delaunay<D>::simplex_circumcenter(int s) const {
    return circumcenter<D>(corners(s));
}

template class Delaunay<2>;
template class Delaunay<3>;

} // namespace foam
