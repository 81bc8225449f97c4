#include "foam/implicit.hpp"

#include <algorithm>
#include <map>

namespace foam {

double ks_union(const std::vector<double>& values, double p) {
    if (values.empty()) throw Error("ks_union: empty value list");
    if (p <= 0) throw Error("ks_union: p must be positive");
    double vmax = *std::max_element(values.begin(), values.end());
    double s = 0;
    for (double v : values) s += std::exp(p * (v - vmax));
    return std::log(s) / p + vmax;
}

double heaviside(double phi, double eps, double alpha) {
    // Inclusive clamps make the band-edge values exact; the cubic blend at
    // t = +-1 only reaches them up to rounding.
    if (phi >= eps) return 1.0;
    if (phi <= -eps) return alpha;
    double t = phi / eps;
    return 0.75 * (1.0 - alpha) * (t - t * t * t / 3.0) + 0.5 * (1.0 + alpha);
}

template <int D>
double segment_distance(const Vec<D>& x, const Vec<D>& v1, const Vec<D>& v2) {
    Vec<D> a = v2 - v1;
    Vec<D> b = x - v1;
    double aa = a.squaredNorm();
    if (aa == 0) return b.norm();
    double ab = a.dot(b);
    if (ab <= 0) return b.norm();
    if (ab >= aa) return (x - v2).norm();
    return (b - (ab / aa) * a).norm();
}

template <int D>
double beam_phi(const Vec<D>& x, const Vec<D>& v1, const Vec<D>& v2, double rbar, bool degenerate) {
    if (degenerate) return rbar - (x - v1).norm();
    return rbar - segment_distance<D>(x, v1, v2);
}

template <int D>
FoamField<D>::FoamField(const VoronoiGraph<D>* graph, const SeedSet<D>* seeds,
                        const SignedDomain<D>* domain, const FoamParams<D>& params)
    : graph_(graph), seeds_(seeds), domain_(domain), params_(params) {
    const int ns = seeds_->count();
    infl_.resize(ns);
    auto canonical = [&](int i, int j) {
        const Beam<D>& a = graph_->beams[i];
        const Beam<D>& b = graph_->beams[j];
        if (a.seeds != b.seeds) return a.seeds < b.seeds;
        const Vec<D>&pa = graph_->vertices[a.v0], &pb = graph_->vertices[b.v0];
        for (int k = 0; k < D; ++k) {
            if (pa[k] < pb[k]) return true;
            if (pa[k] > pb[k]) return false;
        }
        return i < j;
    };
    for (int s = 0; s < ns; ++s) {
        infl_[s] = graph_->influence_beams(s);
        std::sort(infl_[s].begin(), infl_[s].end(), canonical);
    }

    ribs_.resize(ns);
    if (params_.boundary_faces) {
        // A face (pair of adjacent seeds) is flagged when any beam bounding it
        // ends on the domain boundary, i.e. was trimmed by the clip.
        const double btol = 1e-6 * graph_->bounds.diagonal();
        std::map<std::pair<int, int>, bool> crosses;
        for (const Beam<D>& beam : graph_->beams) {
            bool on_boundary = std::abs(domain_->phi(graph_->vertices[beam.v0])) <= btol ||
                               std::abs(domain_->phi(graph_->vertices[beam.v1])) <= btol;
            if (!on_boundary) continue;
            for (int i = 0; i < D; ++i)
                for (int j = i + 1; j < D; ++j)
                    crosses[{beam.seeds[i], beam.seeds[j]}] = true;
        }
        for (const auto& [pair, flag] : crosses) {
            if (!flag) continue;
            double half = 0.5 * (seeds_->r[pair.first] + seeds_->r[pair.second]);
            ribs_[pair.first].push_back({pair.first, pair.second, half});
            ribs_[pair.second].push_back({pair.first, pair.second, half});
        }
    }
}

template <int D>
int FoamField<D>::nearest_seed(const Vec<D>& x) const {
    const auto& X = seeds_->X;
    int best = 0;
    double bd = (X[0] - x).squaredNorm();
    for (int i = 1; i < static_cast<int>(X.size()); ++i) {
        double d = (X[i] - x).squaredNorm();
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    return best;
}

template <int D>
void FoamField<D>::collect_terms(const Vec<D>& x, int s_star, std::vector<double>& terms) const {
    for (int b : infl_[s_star]) {
        const Beam<D>& beam = graph_->beams[b];
        terms.push_back(beam_phi<D>(x, graph_->vertices[beam.v0], graph_->vertices[beam.v1],
                                    beam.rbar, beam.degenerate));
    }
    if (params_.shell)
        terms.push_back(params_.shell_thickness - std::abs(domain_->phi(x)));
    if (params_.boundary_faces) {
        double aphi = std::abs(domain_->phi(x));
        for (const FaceRib& rib : ribs_[s_star]) {
            Vec<D> n = seeds_->X[rib.b] - seeds_->X[rib.a];
            double len = n.norm();
            if (len == 0) continue;
            Vec<D> mid = 0.5 * (seeds_->X[rib.a] + seeds_->X[rib.b]);
            double dplane = std::abs(n.dot(x - mid)) / len;
            terms.push_back(rib.half - std::max(dplane, aphi));
        }
    }
}

template <int D>
double FoamField<D>::phi(const Vec<D>& x) const {
    thread_local std::vector<double> terms;
    terms.clear();
    int s = nearest_seed(x);
    collect_terms(x, s, terms);
    if (terms.empty()) return -1e300;
    return ks_union(terms, params_.p);
}

template <int D>
double FoamField<D>::density(const Vec<D>& x) const {
    return heaviside(phi(x), params_.eps, params_.alpha);
}

template <int D>
DensityField sample_density(const FineMesh<D>& mesh, const FoamField<D>& field) {
    DensityField out;
    const std::size_t nv = mesh.nodes.size();
    out.vertex_phi.resize(nv);
    out.vertex_h.resize(nv);
    out.vertex_mask.resize(nv);
    const FoamParams<D>& prm = field.params();
    const double mask_tol = 1e-12 * mesh.bbox.diagonal();
    parallel_for(nv, [&](std::size_t v) {
        out.vertex_phi[v] = field.phi(mesh.nodes[v]);
        out.vertex_h[v] = heaviside(out.vertex_phi[v], prm.eps, prm.alpha);
        out.vertex_mask[v] = field.domain().phi(mesh.nodes[v]) >= -mask_tol ? 1 : 0;
    });
    const std::size_t ne = mesh.elements.size();
    out.He.resize(ne);
    out.He_vol.resize(ne);
    double v0 = 0;
    for (std::size_t e = 0; e < ne; ++e) {
        double acc = 0, inside = 0;
        for (int v : mesh.elements[e]) {
            if (out.vertex_mask[v]) {
                acc += out.vertex_h[v];
                inside += 1;
            }
        }
        acc /= (D + 1);
        inside /= (D + 1);
        out.He[e] = std::max(prm.alpha, acc);
        out.He_vol[e] = acc;
        v0 += inside * mesh.volume[e];
    }
    out.V0 = v0;
    return out;
}

template <int D>
std::pair<double, double> volume(const DensityField& density, const FineMesh<D>& mesh) {
    double v = 0;
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) v += density.He_vol[e] * mesh.volume[e];
    return {v, density.V0 > 0 ? v / density.V0 : 0.0};
}

template <int D>
double foam_phi(const Vec<D>& x, const SeedSet<D>& seeds, const SignedDomain<D>& domain,
                const FoamParams<D>& params, const Box<D>& bounds, double clip_tol,
                double clip_step, PhiMode mode) {
    if (mode == PhiMode::ThreePoint) {
        std::vector<int> subset = two_ring_seeds(x, seeds, params.knn);
        std::vector<Vec<D>> X;
        std::vector<double> r;
        for (int id : subset) {
            X.push_back(seeds.X[id]);
            r.push_back(seeds.r[id]);
        }
        ThreePointResult tp = three_point_beam<D>(x, X, r);
        if (tp.degenerate)
            return foam_phi(x, seeds, domain, params, bounds, clip_tol, clip_step,
                            PhiMode::Reconstruct);
        std::vector<double> terms{tp.rbar - tp.dist};
        if (params.shell) terms.push_back(params.shell_thickness - std::abs(domain.phi(x)));
        return ks_union(terms, params.p);
    }
    VoronoiGraph<D> local = local_reconstruct(x, seeds, params.knn, bounds);
    clip(local, domain, clip_tol, clip_step);
    FoamField<D> field(&local, &seeds, &domain, params);
    return field.phi(x);
}

template double segment_distance<2>(const Vec<2>&, const Vec<2>&, const Vec<2>&);
template double segment_distance<3>(const Vec<3>&, const Vec<3>&, const Vec<3>&);
template double beam_phi<2>(const Vec<2>&, const Vec<2>&, const Vec<2>&, double, bool);
template double beam_phi<3>(const Vec<3>&, const Vec<3>&, const Vec<3>&, double, bool);
template class FoamField<2>;
template class FoamField<3>;
template DensityField sample_density<2>(const FineMesh<2>&, const FoamField<2>&);
template DensityField sample_density<3>(const FineMesh<3>&, const FoamField<3>&);
template std::pair<double, double> volume<2>(const DensityField&, const FineMesh<2>&);
template std::pair<double, double> volume<3>(const DensityField&, const FineMesh<3>&);
template double foam_phi<2>(const Vec<2>&, const SeedSet<2>&, const SignedDomain<2>&,
                            const FoamParams<2>&, const Box<2>&, double, double, PhiMode);
template double foam_phi<3>(const Vec<3>&, const SeedSet<3>&, const SignedDomain<3>&,
                            const FoamParams<3>&, const Box<3>&, double, double, PhiMode);

} // namespace foam
