#include "foam/domain.hpp"

namespace foam {

template <int D>
double GridDomain<D>::phi(const Vec<D>& x) const {
    std::array<int, D> c;
    Vec<D> t;
    for (int k = 0; k < D; ++k) {
        double u = (x[k] - box.lo[k]) / (box.hi[k] - box.lo[k]) * (dims[k] - 1);
        u = std::clamp(u, 0.0, static_cast<double>(dims[k] - 1));
        c[k] = std::min(static_cast<int>(u), dims[k] - 2);
        t[k] = u - c[k];
    }
    double acc = 0;
    for (int corner = 0; corner < (1 << D); ++corner) {
        std::array<int, D> cc = c;
        double w = 1;
        for (int k = 0; k < D; ++k) {
            if (corner & (1 << k)) {
                cc[k] += 1;
                w *= t[k];
            } else {
                w *= 1 - t[k];
            }
        }
        acc += w * values[index(cc)];
    }
    return acc;
}

template struct GridDomain<2>;
template struct GridDomain<3>;

} // namespace foam
