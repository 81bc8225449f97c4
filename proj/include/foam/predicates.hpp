#pragma once

#include "foam/core.hpp"

namespace foam {

// Sign of the orientation determinant of a (D+1)-point simplex.
// +1: positively oriented, 0: degenerate (exact), -1: negative.
// Double-precision fast path with a conservative error filter; falls back to
// exact rational arithmetic on inconclusive signs.
int orientation2(const Vec<2>& a, const Vec<2>& b, const Vec<2>& c);
int orientation3(const Vec<3>& a, const Vec<3>& b, const Vec<3>& c, const Vec<3>& d);

// Circumball membership test for query p against the simplex's circumsphere.
// +1: strictly inside the open ball, 0: exactly on the sphere, -1: outside.
// Result is orientation-normalized, so vertex order does not matter.
int in_ball2(const Vec<2>& a, const Vec<2>& b, const Vec<2>& c, const Vec<2>& p);
int in_ball3(const Vec<3>& a, const Vec<3>& b, const Vec<3>& c, const Vec<3>& d, const Vec<3>& p);

template <int D>
int orientation(const std::array<Vec<D>, D + 1>& s);

template <int D>
int in_ball(const std::array<Vec<D>, D + 1>& s, const Vec<D>& p);

template <>
inline int orientation<2>(const std::array<Vec<2>, 3>& s) {
    return orientation2(s[0], s[1], s[2]);
}
template <>
inline int orientation<3>(const std::array<Vec<3>, 4>& s) {
    return orientation3(s[0], s[1], s[2], s[3]);
}
template <>
inline int in_ball<2>(const std::array<Vec<2>, 3>& s, const Vec<2>& p) {
    return in_ball2(s[0], s[1], s[2], p);
}
template <>
inline int in_ball<3>(const std::array<Vec<3>, 4>& s, const Vec<3>& p) {
    return in_ball3(s[0], s[1], s[2], s[3], p);
}

// Circumcenter of a nondegenerate simplex. Vertices are processed in a
// canonical (lexicographically sorted) order so the same geometric simplex
// yields bit-identical centers regardless of input vertex order.
template <int D>
Vec<D> circumcenter(std::array<Vec<D>, D + 1> s);

} // namespace foam
