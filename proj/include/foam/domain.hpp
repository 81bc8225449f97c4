#pragma once

#include "foam/core.hpp"

#include <memory>

namespace foam {

// Design domain Omega given as a signed implicit function, positive inside.
template <int D>
struct SignedDomain {
    virtual ~SignedDomain() = default;
    virtual double phi(const Vec<D>& x) const = 0;
    virtual Box<D> bbox() const = 0;

    bool inside(const Vec<D>& x, double tol = 0.0) const { return phi(x) >= -tol; }
};

template <int D>
struct BoxDomain final : SignedDomain<D> {
    Box<D> box;
    explicit BoxDomain(const Box<D>& b) : box(b) {}

    double phi(const Vec<D>& x) const override {
        Vec<D> q = (x - box.center()).cwiseAbs() - 0.5 * box.extent();
        double outside = q.cwiseMax(0.0).norm();
        double inside = std::min(q.maxCoeff(), 0.0);
        return -(outside + inside);
    }
    Box<D> bbox() const override { return box; }
};

template <int D>
struct BallDomain final : SignedDomain<D> {
    Vec<D> center;
    double radius;
    BallDomain(const Vec<D>& c, double r) : center(c), radius(r) {}

    double phi(const Vec<D>& x) const override { return radius - (x - center).norm(); }
    Box<D> bbox() const override {
        Box<D> b;
        b.lo = center.array() - radius;
        b.hi = center.array() + radius;
        return b;
    }
};

// Axis-aligned capped cylinder (3D only).
struct CylinderDomain final : SignedDomain<3> {
    Vec<3> base;    // center of the bottom cap
    double radius, height;
    int axis;

    CylinderDomain(const Vec<3>& b, double r, double h, int ax)
        : base(b), radius(r), height(h), axis(ax) {}

    double phi(const Vec<3>& x) const override {
        Vec<3> d = x - base;
        double z = d[axis];
        d[axis] = 0;
        double dr = d.norm() - radius;
        double dz = std::max(-z, z - height);
        double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
        double inside = std::min(std::max(dr, dz), 0.0);
        return -(outside + inside);
    }
    Box<3> bbox() const override {
        Box<3> b;
        b.lo = base.array() - radius;
        b.hi = base.array() + radius;
        b.lo[axis] = base[axis];
        b.hi[axis] = base[axis] + height;
        return b;
    }
};

template <int D>
struct UnionDomain final : SignedDomain<D> {
    std::vector<std::shared_ptr<SignedDomain<D>>> parts;

    double phi(const Vec<D>& x) const override {
        double v = -std::numeric_limits<double>::infinity();
        for (const auto& p : parts) v = std::max(v, p->phi(x));
        return v;
    }
    Box<D> bbox() const override {
        Box<D> b = parts.at(0)->bbox();
        for (const auto& p : parts) {
            Box<D> pb = p->bbox();
            b.absorb(pb.lo);
            b.absorb(pb.hi);
        }
        return b;
    }
};

// Dense sampled signed distance on a regular lattice, multilinear interpolation.
template <int D>
struct GridDomain final : SignedDomain<D> {
    Box<D> box;
    std::array<int, D> dims;       // node counts per axis
    std::vector<double> values;    // row-major, x fastest

    double phi(const Vec<D>& x) const override;
    Box<D> bbox() const override { return box; }

    std::size_t index(const std::array<int, D>& c) const {
        std::size_t idx = 0;
        for (int k = D - 1; k >= 0; --k) idx = idx * dims[k] + c[k];
        return idx;
    }
};

} // namespace foam
