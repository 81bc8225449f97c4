#include "foam/predicates.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>

namespace foam {

namespace {

using Rational = boost::multiprecision::cpp_rational;

// det and a same-shape magnitude bound (all terms made positive). The bound
// feeds the floating-point filter: |det| above FILTER * bound is trustworthy.
constexpr double FILTER = 1e-12;

template <typename T>
T det2x2(T a, T b, T c, T d) {
    return a * d - b * c;
}

template <typename T>
T det3x3(const T m[3][3]) {
    return m[0][0] * det2x2(m[1][1], m[1][2], m[2][1], m[2][2]) -
           m[0][1] * det2x2(m[1][0], m[1][2], m[2][0], m[2][2]) +
           m[0][2] * det2x2(m[1][0], m[1][1], m[2][0], m[2][1]);
}

template <typename T>
T det4x4(const T m[4][4]) {
    T out = T(0);
    for (int c = 0; c < 4; ++c) {
        T sub[3][3];
        for (int i = 0; i < 3; ++i) {
            int cc = 0;
            for (int j = 0; j < 4; ++j) {
                if (j == c) continue;
                sub[i][cc++] = m[i + 1][j];
            }
        }
        T term = m[0][c] * det3x3(sub);
        out += (c % 2 == 0) ? term : -term;
    }
    return out;
}

double mag2x2(double a, double b, double c, double d) {
    return std::abs(a) * std::abs(d) + std::abs(b) * std::abs(c);
}

double mag3x3(const double m[3][3]) {
    return std::abs(m[0][0]) * mag2x2(m[1][1], m[1][2], m[2][1], m[2][2]) +
           std::abs(m[0][1]) * mag2x2(m[1][0], m[1][2], m[2][0], m[2][2]) +
           std::abs(m[0][2]) * mag2x2(m[1][0], m[1][1], m[2][0], m[2][1]);
}

double mag4x4(const double m[4][4]) {
    double out = 0;
    for (int c = 0; c < 4; ++c) {
        double sub[3][3];
        for (int i = 0; i < 3; ++i) {
            int cc = 0;
            for (int j = 0; j < 4; ++j) {
                if (j == c) continue;
                sub[i][cc++] = m[i + 1][j];
            }
        }
        out += std::abs(m[0][c]) * mag3x3(sub);
    }
    return out;
}

int exact_sign(const Rational& v) {
    if (v > 0) return 1;
    if (v < 0) return -1;
    return 0;
}

} // namespace

int orientation2(const Vec<2>& a, const Vec<2>& b, const Vec<2>& c) {
    double m[2][2] = {{b[0] - a[0], b[1] - a[1]}, {c[0] - a[0], c[1] - a[1]}};
    double det = det2x2(m[0][0], m[0][1], m[1][0], m[1][1]);
    double mag = mag2x2(m[0][0], m[0][1], m[1][0], m[1][1]);
    if (std::abs(det) > FILTER * mag) return sgn(det);
    Rational r[2][2];
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) r[i][j] = Rational(m[i][j]);
    // Differences recomputed exactly from the original coordinates.
    r[0][0] = Rational(b[0]) - Rational(a[0]);
    r[0][1] = Rational(b[1]) - Rational(a[1]);
    r[1][0] = Rational(c[0]) - Rational(a[0]);
    r[1][1] = Rational(c[1]) - Rational(a[1]);
    return exact_sign(det2x2(r[0][0], r[0][1], r[1][0], r[1][1]));
}

int orientation3(const Vec<3>& a, const Vec<3>& b, const Vec<3>& c, const Vec<3>& d) {
    double m[3][3];
    const Vec<3>* rows[3] = {&b, &c, &d};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = (*rows[i])[j] - a[j];
    double det = det3x3(m);
    double mag = mag3x3(m);
    if (std::abs(det) > FILTER * mag) return sgn(det);
    Rational r[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = Rational((*rows[i])[j]) - Rational(a[j]);
    return exact_sign(det3x3(r));
}

int in_ball2(const Vec<2>& a, const Vec<2>& b, const Vec<2>& c, const Vec<2>& p) {
    int o = orientation2(a, b, c);
    if (o == 0) throw Error("in_ball2: degenerate simplex");
    const Vec<2>* v[3] = {&a, &b, &c};
    double m[3][3];
    for (int i = 0; i < 3; ++i) {
        double dx = (*v[i])[0] - p[0], dy = (*v[i])[1] - p[1];
        m[i][0] = dx;
        m[i][1] = dy;
        m[i][2] = dx * dx + dy * dy;
    }
    double det = det3x3(m);
    double mag = mag3x3(m);
    if (std::abs(det) > FILTER * mag) return sgn(det) * o;
    Rational r[3][3];
    for (int i = 0; i < 3; ++i) {
        Rational dx = Rational((*v[i])[0]) - Rational(p[0]);
        Rational dy = Rational((*v[i])[1]) - Rational(p[1]);
        r[i][0] = dx;
        r[i][1] = dy;
        r[i][2] = dx * dx + dy * dy;
    }
    return exact_sign(det3x3(r)) * o;
}

int in_ball3(const Vec<3>& a, const Vec<3>& b, const Vec<3>& c, const Vec<3>& d, const Vec<3>& p) {
    int o = orientation3(a, b, c, d);
    if (o == 0) throw Error("in_ball3: degenerate simplex");
    const Vec<3>* v[4] = {&a, &b, &c, &d};
    double m[4][4];
    for (int i = 0; i < 4; ++i) {
        double dx = (*v[i])[0] - p[0], dy = (*v[i])[1] - p[1], dz = (*v[i])[2] - p[2];
        m[i][0] = dx;
        m[i][1] = dy;
        m[i][2] = dz;
        m[i][3] = dx * dx + dy * dy + dz * dz;
    }
    double det = det4x4(m);
    double mag = mag4x4(m);
    // Lifted determinant sign is negative for interior points when the
    // simplex is positively oriented in 3D.
    if (std::abs(det) > FILTER * mag) return -sgn(det) * o;
    Rational r[4][4];
    for (int i = 0; i < 4; ++i) {
        Rational dx = Rational((*v[i])[0]) - Rational(p[0]);
        Rational dy = Rational((*v[i])[1]) - Rational(p[1]);
        Rational dz = Rational((*v[i])[2]) - Rational(p[2]);
        r[i][0] = dx;
        r[i][1] = dy;
        r[i][2] = dz;
        r[i][3] = dx * dx + dy * dy + dz * dz;
    }
    Rational rd = det4x4(r);
    if (rd > 0) return -o;
    if (rd < 0) return o;
    return 0;
}

template <int D>
Vec<D> circumcenter(std::array<Vec<D>, D + 1> s) {
    std::sort(s.begin(), s.end(), [](const Vec<D>& x, const Vec<D>& y) {
        for (int k = 0; k < D; ++k) {
            if (x[k] < y[k]) return true;
            if (x[k] > y[k]) return false;
        }
        return false;
    });
    Eigen::Matrix<double, D, D> A;
    Vec<D> rhs;
    for (int i = 0; i < D; ++i) {
        Vec<D> d = s[i + 1] - s[0];
        A.row(i) = 2.0 * d.transpose();
        rhs[i] = s[i + 1].squaredNorm() - s[0].squaredNorm();
    }
    return A.fullPivLu().solve(rhs);
}

template Vec<2> circumcenter<2>(std::array<Vec<2>, 3>);
template Vec<3> circumcenter<3>(std::array<Vec<3>, 4>);

} // namespace foam
