#include "foam/spatch.hpp"

#include <algorithm>

namespace foam {

namespace {

// Orthonormal in-plane frame of a planar polygon (3D case).
void plane_frame(const std::vector<Vec<3>>& poly, Vec<3>& origin, Vec<3>& e1, Vec<3>& e2) {
    origin = poly[0];
    e1 = (poly[1] - poly[0]).normalized();
    Vec<3> n = Vec<3>::Zero();
    for (std::size_t i = 2; i < poly.size(); ++i) {
        n = (poly[1] - poly[0]).cross(poly[i] - poly[0]);
        if (n.norm() > 0) break;
    }
    if (n.norm() == 0) throw Error("spatch: degenerate polygon");
    e2 = n.normalized().cross(e1);
}

std::vector<double> mvc_2d(const std::vector<Eigen::Vector2d>& p, const Eigen::Vector2d& v,
                           double scale) {
    const std::size_t n = p.size();
    std::vector<double> w(n, 0.0);
    const double tol = 1e-12 * scale;

    std::vector<Eigen::Vector2d> d(n);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = p[i] - v;
        r[i] = d[i].norm();
        if (r[i] <= tol) {
            w[i] = 1.0;
            return w;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = (i + 1) % n;
        double cross = d[i].x() * d[j].y() - d[i].y() * d[j].x();
        double dot = d[i].dot(d[j]);
        if (std::abs(cross) <= tol * (r[i] + r[j]) && dot < 0) {
            // On the open edge (i, j): linear interpolation limit.
            w[i] = r[j] / (r[i] + r[j]);
            w[j] = r[i] / (r[i] + r[j]);
            return w;
        }
    }
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = (i + 1) % n;
        double cross = d[i].x() * d[j].y() - d[i].y() * d[j].x();
        double dot = d[i].dot(d[j]);
        t[i] = cross / (r[i] * r[j] + dot);
    }
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t h = (i + n - 1) % n;
        w[i] = (t[h] + t[i]) / r[i];
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

} // namespace

template <>
std::vector<double> mean_value_coords<2>(const std::vector<Vec<2>>& poly, const Vec<2>& x) {
    if (poly.size() == 2) {
        double len2 = (poly[1] - poly[0]).squaredNorm();
        if (len2 == 0) throw Error("spatch: degenerate segment");
        double s = (x - poly[0]).dot(poly[1] - poly[0]) / len2;
        return {1.0 - s, s};
    }
    double scale = 0;
    for (std::size_t i = 0; i < poly.size(); ++i)
        scale = std::max(scale, (poly[i] - poly[0]).norm());
    std::vector<Eigen::Vector2d> p(poly.begin(), poly.end());
    return mvc_2d(p, x, scale);
}

template <>
std::vector<double> mean_value_coords<3>(const std::vector<Vec<3>>& poly, const Vec<3>& x) {
    if (poly.size() == 2) {
        double len2 = (poly[1] - poly[0]).squaredNorm();
        if (len2 == 0) throw Error("spatch: degenerate segment");
        double s = (x - poly[0]).dot(poly[1] - poly[0]) / len2;
        return {1.0 - s, s};
    }
    Vec<3> o, e1, e2;
    plane_frame(poly, o, e1, e2);
    std::vector<Eigen::Vector2d> p(poly.size());
    double scale = 0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        p[i] = Eigen::Vector2d((poly[i] - o).dot(e1), (poly[i] - o).dot(e2));
        scale = std::max(scale, p[i].norm());
    }
    Eigen::Vector2d v((x - o).dot(e1), (x - o).dot(e2));
    return mvc_2d(p, v, std::max(scale, 1e-300));
}

double multinomial(const std::vector<int>& idx) {
    int d = 0;
    for (int i : idx) d += i;
    double out = 1;
    int used = 0;
    for (int i : idx) {
        for (int k = 1; k <= i; ++k) {
            ++used;
            out *= static_cast<double>(used) / k;
        }
    }
    (void)d;
    return out;
}

template <int D>
FacePatch<D> build_face_patch(const std::vector<Vec<D>>& poly, int depth) {
    if (depth < 1) throw Error("spatch: depth must be >= 1");
    FacePatch<D> patch;
    patch.poly = poly;
    patch.depth = depth;

    const int n = static_cast<int>(poly.size());
    std::vector<std::vector<int>> labels;
    std::vector<int> cur(n, 0);
    // Enumerate all multi-indices with |i| = depth, lexicographically.
    auto rec = [&](auto&& self, int pos, int rem) -> void {
        if (pos == n - 1) {
            cur[pos] = rem;
            labels.push_back(cur);
            return;
        }
        for (int v = rem; v >= 0; --v) {
            cur[pos] = v;
            self(self, pos + 1, rem - v);
        }
    };
    rec(rec, 0, depth);

    double scale = 0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, (poly[i] - poly[0]).norm());
    const double merge_tol = 1e-9 * std::max(scale, 1e-300);

    for (const auto& lab : labels) {
        Vec<D> g = Vec<D>::Zero();
        for (int k = 0; k < n; ++k) g += (static_cast<double>(lab[k]) / depth) * poly[k];
        bool merged = false;
        for (auto& c : patch.controls) {
            if ((c.pos - g).norm() <= merge_tol) {
                c.labels.push_back(lab);
                merged = true;
                break;
            }
        }
        if (!merged) {
            typename FacePatch<D>::Control c;
            c.pos = g;
            c.labels.push_back(lab);
            patch.controls.push_back(std::move(c));
        }
    }
    return patch;
}

template <int D>
std::vector<double> spatch_eval(const FacePatch<D>& patch, const Vec<D>& x, bool* extrapolated) {
    std::vector<double> w = mean_value_coords<D>(patch.poly, x);
    if (extrapolated) {
        *extrapolated = false;
        for (double wi : w)
            if (wi < -1e-12) *extrapolated = true;
    }
    std::vector<double> out(patch.controls.size(), 0.0);
    for (std::size_t c = 0; c < patch.controls.size(); ++c) {
        for (const auto& lab : patch.controls[c].labels) {
            double term = multinomial(lab);
            for (std::size_t k = 0; k < lab.size(); ++k)
                for (int rep = 0; rep < lab[k]; ++rep) term *= w[k];
            out[c] += term;
        }
    }
    return out;
}

template struct FacePatch<2>;
template struct FacePatch<3>;
template FacePatch<2> build_face_patch<2>(const std::vector<Vec<2>>&, int);
template FacePatch<3> build_face_patch<3>(const std::vector<Vec<3>>&, int);
template std::vector<double> spatch_eval<2>(const FacePatch<2>&, const Vec<2>&, bool*);
template std::vector<double> spatch_eval<3>(const FacePatch<3>&, const Vec<3>&, bool*);

} // namespace foam
