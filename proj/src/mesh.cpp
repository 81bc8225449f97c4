#include "foam/mesh.hpp"

#include <map>
#include <numeric>
#include <unordered_map>

namespace foam {

namespace {

template <int D>
double simplex_signed_volume(const FineMesh<D>& m, const std::array<int, D + 1>& el) {
    Eigen::Matrix<double, D, D> A;
    for (int i = 0; i < D; ++i) A.col(i) = m.nodes[el[i + 1]] - m.nodes[el[0]];
    double factorial = (D == 2) ? 2.0 : 6.0;
    return A.determinant() / factorial;
}

} // namespace

template <int D>
void FineMesh<D>::finalize() {
    if (nodes.empty() || elements.empty()) throw Error("fine mesh: empty");
    volume.resize(elements.size());
    for (std::size_t e = 0; e < elements.size(); ++e) {
        double v = simplex_signed_volume(*this, elements[e]);
        if (v < 0) {
            std::swap(elements[e][0], elements[e][1]);
            v = -v;
        }
        if (v <= 0) throw Error("fine mesh: degenerate simplex");
        volume[e] = v;
    }
    double len = 0;
    std::size_t cnt = 0;
    for (const auto& el : elements)
        for (int i = 0; i <= D; ++i)
            for (int j = i + 1; j <= D; ++j) {
                len += (nodes[el[i]] - nodes[el[j]]).norm();
                ++cnt;
            }
    l_a = len / cnt;
    bbox = Box<D>::of(nodes);
    node_elements.assign(nodes.size(), {});
    for (std::size_t e = 0; e < elements.size(); ++e)
        for (int v : elements[e]) node_elements[v].push_back(static_cast<int>(e));
}

template <int D>
void classify_element_nodes(const FineMesh<D>& fine, CoarseElement<D>& elem) {
    std::map<std::array<int, D>, int> facet_count;
    for (int e : elem.fine_elements) {
        const auto& el = fine.elements[e];
        for (int i = 0; i <= D; ++i) {
            std::array<int, D> f;
            int c = 0;
            for (int j = 0; j <= D; ++j)
                if (j != i) f[c++] = el[j];
            std::sort(f.begin(), f.end());
            facet_count[f] += 1;
        }
    }
    std::vector<int> bnd;
    for (const auto& [f, cnt] : facet_count) {
        if (cnt == 1)
            for (int v : f) bnd.push_back(v);
    }
    std::sort(bnd.begin(), bnd.end());
    bnd.erase(std::unique(bnd.begin(), bnd.end()), bnd.end());
    elem.boundary_nodes = bnd;
    elem.interior_nodes.clear();
    for (int v : elem.fine_nodes)
        if (!std::binary_search(bnd.begin(), bnd.end(), v)) elem.interior_nodes.push_back(v);
}

template <int D>
CoarseMesh<D> build_structured(const SignedDomain<D>& domain, const std::array<int, D>& coarse_res,
                               int refine) {
    if (refine < 2) throw Error("build_structured: refine must be >= 2");
    for (int k = 0; k < D; ++k)
        if (coarse_res[k] < 1) throw Error("build_structured: coarse_res must be >= 1");

    CoarseMesh<D> cm;
    cm.res = coarse_res;
    cm.refine = refine;
    cm.box = domain.bbox();
    const Box<D>& box = cm.box;
    double diag = box.diagonal();
    const double keep_tol = 1e-10 * diag;

    std::array<int, D> fdims;   // global fine lattice node counts
    Vec<D> hf;
    for (int k = 0; k < D; ++k) {
        fdims[k] = coarse_res[k] * refine + 1;
        hf[k] = box.extent()[k] / (coarse_res[k] * refine);
    }
    auto coord = [&](int k, int g) { return box.lo[k] + g * hf[k]; };
    auto lattice_point = [&](const std::array<int, D>& g) {
        Vec<D> p;
        for (int k = 0; k < D; ++k) p[k] = coord(k, g[k]);
        return p;
    };

    // Pass 1: which coarse cells survive.
    std::vector<std::array<int, D>> kept;
    std::array<int, D> cc{};
    auto cell_kept = [&](const std::array<int, D>& c) {
        std::array<int, D> g;
        int nloc = 1;
        for (int k = 0; k < D; ++k) nloc *= refine + 1;
        for (int loc = 0; loc < nloc; ++loc) {
            int rem = loc;
            for (int k = 0; k < D; ++k) {
                g[k] = c[k] * refine + rem % (refine + 1);
                rem /= refine + 1;
            }
            if (domain.phi(lattice_point(g)) >= -keep_tol) return true;
        }
        return false;
    };
    int ncells = 1;
    for (int k = 0; k < D; ++k) ncells *= coarse_res[k];
    for (int cell = 0; cell < ncells; ++cell) {
        int rem = cell;
        for (int k = 0; k < D; ++k) {
            cc[k] = rem % coarse_res[k];
            rem /= coarse_res[k];
        }
        if (cell_kept(cc)) kept.push_back(cc);
    }
    if (kept.empty()) throw Error("build_structured: domain has empty interior");

    // Pass 2: nodes (deduplicated through the global lattice) and elements.
    std::unordered_map<std::int64_t, int> node_id;
    auto lattice_key = [&](const std::array<int, D>& g) {
        std::int64_t key = 0;
        for (int k = 0; k < D; ++k) key = key * (fdims[k] + 1) + g[k];
        return key;
    };
    FineMesh<D>& fm = cm.fine;
    auto ensure_node = [&](const std::array<int, D>& g) {
        auto [it, inserted] = node_id.try_emplace(lattice_key(g), static_cast<int>(fm.nodes.size()));
        if (inserted) fm.nodes.push_back(lattice_point(g));
        return it->second;
    };

    for (const auto& c : kept) {
        CoarseElement<D> ce;
        for (int k = 0; k < D; ++k) {
            ce.box.lo[k] = coord(k, c[k] * refine);
            ce.box.hi[k] = coord(k, (c[k] + 1) * refine);
        }
        // Local fine node grid.
        std::vector<int> local;
        int side = refine + 1;
        int nloc = 1;
        for (int k = 0; k < D; ++k) nloc *= side;
        local.resize(nloc);
        for (int loc = 0; loc < nloc; ++loc) {
            std::array<int, D> g;
            int rem = loc;
            for (int k = 0; k < D; ++k) {
                g[k] = c[k] * refine + rem % side;
                rem /= side;
            }
            local[loc] = ensure_node(g);
        }
        auto lid = [&](std::array<int, D> l) {
            int idx = 0;
            for (int k = D - 1; k >= 0; --k) idx = idx * side + l[k];
            return local[idx];
        };
        // Simplex split of each fine sub-cell (diagonal pattern is
        // translation-invariant, so shared faces match across cells).
        int nsub = 1;
        for (int k = 0; k < D; ++k) nsub *= refine;
        for (int sub = 0; sub < nsub; ++sub) {
            std::array<int, D> s;
            int rem = sub;
            for (int k = 0; k < D; ++k) {
                s[k] = rem % refine;
                rem /= refine;
            }
            if constexpr (D == 2) {
                int v00 = lid({s[0], s[1]}), v10 = lid({s[0] + 1, s[1]});
                int v01 = lid({s[0], s[1] + 1}), v11 = lid({s[0] + 1, s[1] + 1});
                ce.fine_elements.push_back(static_cast<int>(fm.elements.size()));
                fm.elements.push_back({v00, v10, v11});
                ce.fine_elements.push_back(static_cast<int>(fm.elements.size()));
                fm.elements.push_back({v00, v11, v01});
            } else {
                const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                         {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
                for (const auto& pm : perms) {
                    std::array<std::array<int, 3>, 4> path;
                    path[0] = s;
                    for (int step = 0; step < 3; ++step) {
                        path[step + 1] = path[step];
                        path[step + 1][pm[step]] += 1;
                    }
                    ce.fine_elements.push_back(static_cast<int>(fm.elements.size()));
                    fm.elements.push_back({lid(path[0]), lid(path[1]), lid(path[2]), lid(path[3])});
                }
            }
        }
        ce.fine_nodes = local;
        std::sort(ce.fine_nodes.begin(), ce.fine_nodes.end());
        ce.fine_nodes.erase(std::unique(ce.fine_nodes.begin(), ce.fine_nodes.end()),
                            ce.fine_nodes.end());

        // Face geometry for the S-patch layer.
        if constexpr (D == 2) {
            Vec<2> p00 = ce.box.lo;
            Vec<2> p11 = ce.box.hi;
            Vec<2> p10(ce.box.hi[0], ce.box.lo[1]);
            Vec<2> p01(ce.box.lo[0], ce.box.hi[1]);
            ce.faces = {{p00, p10}, {p10, p11}, {p11, p01}, {p01, p00}};
        } else {
            auto corner = [&](int ix, int iy, int iz) {
                Vec<3> p;
                p[0] = ix ? ce.box.hi[0] : ce.box.lo[0];
                p[1] = iy ? ce.box.hi[1] : ce.box.lo[1];
                p[2] = iz ? ce.box.hi[2] : ce.box.lo[2];
                return p;
            };
            ce.faces = {
                {corner(0, 0, 0), corner(0, 1, 0), corner(0, 1, 1), corner(0, 0, 1)},  // -x
                {corner(1, 0, 0), corner(1, 1, 0), corner(1, 1, 1), corner(1, 0, 1)},  // +x
                {corner(0, 0, 0), corner(1, 0, 0), corner(1, 0, 1), corner(0, 0, 1)},  // -y
                {corner(0, 1, 0), corner(1, 1, 0), corner(1, 1, 1), corner(0, 1, 1)},  // +y
                {corner(0, 0, 0), corner(1, 0, 0), corner(1, 1, 0), corner(0, 1, 0)},  // -z
                {corner(0, 0, 1), corner(1, 0, 1), corner(1, 1, 1), corner(0, 1, 1)},  // +z
            };
        }
        cm.elements.push_back(std::move(ce));
    }

    fm.finalize();
    for (auto& ce : cm.elements) classify_element_nodes(fm, ce);
    return cm;
}

template struct FineMesh<2>;
template struct FineMesh<3>;
template void classify_element_nodes<2>(const FineMesh<2>&, CoarseElement<2>&);
template void classify_element_nodes<3>(const FineMesh<3>&, CoarseElement<3>&);
template CoarseMesh<2> build_structured<2>(const SignedDomain<2>&, const std::array<int, 2>&, int);
template CoarseMesh<3> build_structured<3>(const SignedDomain<3>&, const std::array<int, 3>&, int);

} // namespace foam
