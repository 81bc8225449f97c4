#pragma once

#include "foam/core.hpp"

namespace foam {

// Generalized barycentric coordinates (mean value coordinates) of x with
// respect to a planar polygon. In 2D the "polygon" is a segment (2 vertices)
// and the coordinates reduce to linear interpolation. Exact on vertices and
// edges (snap branches), linear precision everywhere.
template <int D>
std::vector<double> mean_value_coords(const std::vector<Vec<D>>& poly, const Vec<D>& x);

// One face patch: Bernstein-like basis of depth d over the polygon's
// barycentric coordinates. Controls sit at Greville points; coincident
// Greville points (e.g. hexagon diagonals at the center) are merged and their
// basis functions summed.
template <int D>
struct FacePatch {
    std::vector<Vec<D>> poly;
    int depth = 1;
    struct Control {
        Vec<D> pos;
        std::vector<std::vector<int>> labels;   // merged multi-indices, |label| = depth
    };
    std::vector<Control> controls;
};

template <int D>
FacePatch<D> build_face_patch(const std::vector<Vec<D>>& poly, int depth);

// Basis value per control at x; Sum = 1 on the polygon. If extrapolated is
// given, it is set when x lies outside the polygon (negative coordinates).
template <int D>
std::vector<double> spatch_eval(const FacePatch<D>& patch, const Vec<D>& x,
                                bool* extrapolated = nullptr);

// d!/(i_0! i_1! ... ), |i| = d.
double multinomial(const std::vector<int>& idx);

} // namespace foam
