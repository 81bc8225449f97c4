#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "foam/predicates.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cstring>
#include <random>

using namespace foam;
using Rational = boost::multiprecision::cpp_rational;

namespace {

int exact_orient2(const Vec<2>& a, const Vec<2>& b, const Vec<2>& c) {
    Rational ax(a[0]), ay(a[1]), bx(b[0]), by(b[1]), cx(c[0]), cy(c[1]);
    Rational det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    return det > 0 ? 1 : (det < 0 ? -1 : 0);
}

int exact_inball2(const Vec<2>& a, const Vec<2>& b, const Vec<2>& c, const Vec<2>& p) {
    auto row = [&](const Vec<2>& q, Rational out[3]) {
        Rational x(q[0] - p[0]), y(q[1] - p[1]);
        out[0] = x;
        out[1] = y;
        out[2] = x * x + y * y;
    };
    Rational m[3][3];
    row(a, m[0]);
    row(b, m[1]);
    row(c, m[2]);
    Rational det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                   m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                   m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    const int orient = exact_orient2(a, b, c);
    if (orient == 0) return 0;
    det *= orient;
    return det > 0 ? 1 : (det < 0 ? -1 : 0);
}

template <int D>
bool bits_equal(const Vec<D>& a, const Vec<D>& b) {
    return std::memcmp(a.data(), b.data(), sizeof(double) * D) == 0;
}

} // namespace

TEST_CASE("orientation2 basic signs") {
    Vec<2> a(0, 0), b(1, 0), c(0, 1);
    CHECK(orientation2(a, b, c) == 1);
    CHECK(orientation2(a, c, b) == -1);
    CHECK(orientation2(a, b, Vec<2>(2, 0)) == 0);
    CHECK(orientation2(a, a, c) == 0);
}

TEST_CASE("orientation2 adversarial near-collinear grid matches exact rational sign") {
    const Vec<2> b(12, 12), c(24, 24);
    int disagreements = 0;
    for (int i = 0; i < 32; ++i) {
        for (int j = 0; j < 32; ++j) {
            Vec<2> a(0.5 + i * 0x1p-53, 0.5 + j * 0x1p-53);
            if (orientation2(a, b, c) != exact_orient2(a, b, c)) ++disagreements;
        }
    }
    CHECK(disagreements == 0);
}

TEST_CASE("orientation3 signs and degeneracy") {
    Vec<3> a(0, 0, 0), b(1, 0, 0), c(0, 1, 0), d(0, 0, 1);
    CHECK(orientation3(a, b, c, d) == 1);
    CHECK(orientation3(a, c, b, d) == -1);
    CHECK(orientation3(a, b, c, Vec<3>(0.3, 0.4, 0)) == 0);
}

TEST_CASE("in_ball2 matches exact rational oracle on random and cocircular inputs") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int t = 0; t < 2000; ++t) {
        Vec<2> a(U(rng), U(rng)), b(U(rng), U(rng)), c(U(rng), U(rng)), p(U(rng), U(rng));
        if (exact_orient2(a, b, c) == 0) continue;
        CHECK(in_ball2(a, b, c, p) == exact_inball2(a, b, c, p));
        CHECK(in_ball2(a, c, b, p) == exact_inball2(a, b, c, p));
    }
    Vec<2> a(1, 0), b(0, 1), c(-1, 0), p(0, -1);
    CHECK(in_ball2(a, b, c, p) == 0);
    CHECK(in_ball2(a, b, c, Vec<2>(0, -0.999999)) == 1);
    CHECK(in_ball2(a, b, c, Vec<2>(0, -1.000001)) == -1);
}

TEST_CASE("in_ball3 sphere membership") {
    Vec<3> a(1, 0, 0), b(0, 1, 0), c(0, 0, 1), d(-1, 0, 0);
    CHECK(in_ball3(a, b, c, d, Vec<3>(0, 0, 0)) == 1);
    CHECK(in_ball3(a, b, c, d, Vec<3>(0, -1, 0)) == 0);
    CHECK(in_ball3(a, b, c, d, Vec<3>(0, 0, -1.0000001)) == -1);
    CHECK(in_ball3(a, c, b, d, Vec<3>(0, 0, 0)) == 1);
}

TEST_CASE("circumcenter equidistant and permutation bit-identical (2D)") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int t = 0; t < 200; ++t) {
        std::array<Vec<2>, 3> s{Vec<2>(U(rng), U(rng)), Vec<2>(U(rng), U(rng)),
                                Vec<2>(U(rng), U(rng))};
        if (orientation<2>(s) == 0) continue;
        Vec<2> cc = circumcenter<2>(s);
        const double r0 = (cc - s[0]).norm();
        for (int k = 1; k < 3; ++k)
            CHECK((cc - s[k]).norm() == doctest::Approx(r0).epsilon(1e-9));
        std::array<Vec<2>, 3> perm = {s[2], s[0], s[1]};
        CHECK(bits_equal<2>(cc, circumcenter<2>(perm)));
        std::array<Vec<2>, 3> perm2 = {s[1], s[2], s[0]};
        CHECK(bits_equal<2>(cc, circumcenter<2>(perm2)));
    }
}

TEST_CASE("circumcenter equidistant and permutation bit-identical (3D)") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int t = 0; t < 100; ++t) {
        std::array<Vec<3>, 4> s{Vec<3>(U(rng), U(rng), U(rng)), Vec<3>(U(rng), U(rng), U(rng)),
                                Vec<3>(U(rng), U(rng), U(rng)), Vec<3>(U(rng), U(rng), U(rng))};
        if (orientation<3>(s) == 0) continue;
        Vec<3> cc = circumcenter<3>(s);
        const double r0 = (cc - s[0]).norm();
        for (int k = 1; k < 4; ++k)
            CHECK((cc - s[k]).norm() == doctest::Approx(r0).epsilon(1e-8));
        std::array<Vec<3>, 4> perm = {s[3], s[1], s[0], s[2]};
        CHECK(bits_equal<3>(cc, circumcenter<3>(perm)));
    }
}
