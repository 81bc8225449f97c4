#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace foam {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Axis-aligned box. Used both as geometric primitive and as tessellation bounds.
template <int D>
struct Box {
    Vec<D> lo = Vec<D>::Zero();
    Vec<D> hi = Vec<D>::Zero();

    Vec<D> center() const { return 0.5 * (lo + hi); }
    Vec<D> extent() const { return hi - lo; }
    double diagonal() const { return (hi - lo).norm(); }

    bool contains(const Vec<D>& p, double tol = 0.0) const {
        for (int k = 0; k < D; ++k)
            if (p[k] < lo[k] - tol || p[k] > hi[k] + tol) return false;
        return true;
    }

    Box expanded(double margin) const {
        Box b;
        b.lo = lo.array() - margin;
        b.hi = hi.array() + margin;
        return b;
    }

    void absorb(const Vec<D>& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }

    static Box of(const std::vector<Vec<D>>& pts) {
        if (pts.empty()) throw Error("Box::of: empty point set");
        Box b;
        b.lo = b.hi = pts[0];
        for (const auto& p : pts) b.absorb(p);
        return b;
    }
};

inline int& thread_count() {
    static int n = 1;
    return n;
}

// Chunked parallel map over [0, n). Runs inline when thread_count() == 1 so
// all default runs stay deterministic.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const int nt = thread_count();
    if (nt <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        std::size_t b = t * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] {
            for (std::size_t i = b; i < e; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

template <typename T>
int sgn(T v) {
    return (v > T(0)) - (v < T(0));
}

} // namespace foam
