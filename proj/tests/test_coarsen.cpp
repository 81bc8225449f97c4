#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "foam/coarsen.hpp"
#include "foam/fem.hpp"
#include "foam/implicit.hpp"
#include "foam/mesh.hpp"
#include "foam/voronoi.hpp"

#include <Eigen/Eigenvalues>
#include <random>
#include <unordered_map>

using namespace foam;

namespace {

// Local element stiffness assembled independently of the coarsening code:
// rows/cols follow `order` (global fine node ids).
MatX local_stiffness(const CoarseMesh<2>& cm, int alpha, const std::vector<double>& He,
                     const Material& mat, const std::vector<int>& order) {
    std::unordered_map<int, int> lid;
    for (std::size_t i = 0; i < order.size(); ++i) lid[order[i]] = static_cast<int>(i);
    MatX k = MatX::Zero(2 * order.size(), 2 * order.size());
    for (int e : cm.elements[alpha].fine_elements) {
        std::array<Vec<2>, 3> xs;
        for (int j = 0; j < 3; ++j) xs[j] = cm.fine.nodes[cm.fine.elements[e][j]];
        auto ke = element_stiffness<2>(xs, mat) * He[e];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                k.block<2, 2>(2 * lid[cm.fine.elements[e][r]], 2 * lid[cm.fine.elements[e][c]]) +=
                    ke.block<2, 2>(2 * r, 2 * c);
    }
    return k;
}

std::vector<int> local_order(const CoarseElement<2>& ce) {
    std::vector<int> order = ce.boundary_nodes;
    order.insert(order.end(), ce.interior_nodes.begin(), ce.interior_nodes.end());
    return order;
}

struct FoamFixture {
    BoxDomain<2> domain{Box<2>{Vec<2>::Zero(), Vec<2>::Ones()}};
    CoarseMesh<2> cm;
    SeedSet<2> seeds;
    VoronoiGraph<2> graph;
    FoamParams<2> params;
    DensityField density;

    FoamFixture() {
        cm = build_structured<2>(domain, {2, 2}, 4);
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> u(0.12, 0.88);
        for (int i = 0; i < 5; ++i) {
            seeds.X.push_back(Vec<2>(u(rng), u(rng)));
            seeds.r.push_back(0.08);
        }
        graph = tessellate(seeds, domain.bbox().expanded(2.0 * domain.bbox().diagonal()));
        clip(graph, domain, 1e-3 * cm.fine.l_a, cm.fine.l_a);
        params.eps = 1.5 * cm.fine.l_a;
        FoamField<2> field(&graph, &seeds, &domain, params);
        density = sample_density(cm.fine, field);
    }
};

LoadCase edge_loadcase(const FineMesh<2>& mesh, double pull) {
    LoadCase lc;
    lc.f = VecX::Zero(static_cast<int>(mesh.nodes.size()) * 2);
    auto left = select_nodes(mesh, Box<2>{Vec<2>(0, 0), Vec<2>(0, 1)}, 1e-9);
    fix_nodes(lc, left, {}, 2);
    auto right = select_nodes(mesh, Box<2>{Vec<2>(1, 0), Vec<2>(1, 1)}, 1e-9);
    VecX total(2);
    total << 0.0, pull;
    spread_load(lc, right, total, 2);
    return lc;
}

double fine_compliance(const FineMesh<2>& mesh, const std::vector<double>& He, const Material& mat,
                       const LoadCase& lc, VecX* q_out = nullptr) {
    SparseMat K = assemble(mesh, He, mat);
    VecX q = solve(K, lc);
    if (q_out) *q_out = q;
    return compliance(K, q, lc.f);
}

double coarse_compliance(const CoarseMesh<2>& cm, const CoarseSpace<2>& space,
                         const std::vector<double>& He, const Material& mat, const VecX& f_fine,
                         CoarseSystem<2>* sys_out = nullptr, VecX* QH_out = nullptr) {
    auto sys = build_coarse_system(cm, space, He, mat, f_fine);
    LoadCase lcH;
    auto fixed = select_coarse_nodes(space, Box<2>{Vec<2>(0, 0), Vec<2>(0, 1)}, 1e-9);
    fix_nodes(lcH, fixed, {}, 2);
    lcH.f = sys.fH;
    VecX QH = solve(sys.K, lcH);
    double Cc = compliance(sys.K, QH, sys.fH);
    if (sys_out) *sys_out = std::move(sys);
    if (QH_out) *QH_out = QH;
    return Cc;
}

std::vector<double> random_density(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> He(n);
    for (auto& v : He) v = u(rng);
    return He;
}

} // namespace

TEST_CASE("schur transform eliminates the interior residual") {
    FoamFixture fx;
    Material mat;
    std::mt19937 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int alpha = 0; alpha < static_cast<int>(fx.cm.elements.size()); ++alpha) {
        const auto& ce = fx.cm.elements[alpha];
        REQUIRE(!ce.interior_nodes.empty());
        auto order = local_order(ce);
        MatX k = local_stiffness(fx.cm, alpha, fx.density.He, mat, order);
        MatX M = schur_transform<2>(fx.cm, alpha, fx.density.He, mat);
        const int nb = 2 * static_cast<int>(ce.boundary_nodes.size());
        const int ni = 2 * static_cast<int>(ce.interior_nodes.size());
        REQUIRE(M.rows() == nb + ni);
        REQUIRE(M.cols() == nb);
        CHECK((M.topRows(nb) - MatX::Identity(nb, nb)).norm() == 0.0);
        MatX k_ib = k.bottomLeftCorner(ni, nb);
        MatX k_ii = k.bottomRightCorner(ni, ni);
        for (int trial = 0; trial < 10; ++trial) {
            VecX qb(nb);
            for (int i = 0; i < nb; ++i) qb[i] = g(rng);
            VecX qi = M.bottomRows(ni) * qb;
            VecX drive = k_ib * qb;
            CHECK((drive + k_ii * qi).norm() <= 1e-8 * std::max(drive.norm(), 1e-12));
        }
    }
}

TEST_CASE("element operators reproduce rigid motions") {
    FoamFixture fx;
    Material mat;
    auto space = build_coarse_space(fx.cm, 2);
    for (int alpha = 0; alpha < static_cast<int>(fx.cm.elements.size()); ++alpha) {
        auto ops = build_element_operators(fx.cm, space, alpha, fx.density.He, mat);
        const auto& ids = space.elem_nodes[alpha];
        const int nc = static_cast<int>(ids.size());
        REQUIRE(ops.Psi.cols() == 2 * nc);
        REQUIRE(ops.Psi.rows() == 2 * static_cast<int>(ops.local_nodes.size()));

        Vec<2> t(0.3, -0.7);
        VecX qt(2 * nc);
        for (int i = 0; i < nc; ++i) qt.segment<2>(2 * i) = t;
        VecX ut = ops.Psi * qt;
        for (int i = 0; i < static_cast<int>(ops.local_nodes.size()); ++i)
            CHECK((ut.segment<2>(2 * i) - t).norm() <= 1e-10);

        const Vec<2> c(0.5, 0.5);
        const double w = 0.25;
        auto rot = [&](const Vec<2>& x) { return Vec<2>(-w * (x[1] - c[1]), w * (x[0] - c[0])); };
        VecX qr(2 * nc);
        for (int i = 0; i < nc; ++i) qr.segment<2>(2 * i) = rot(space.nodes[ids[i]]);
        VecX ur = ops.Psi * qr;
        for (int i = 0; i < static_cast<int>(ops.local_nodes.size()); ++i)
            CHECK((ur.segment<2>(2 * i) - rot(fx.cm.fine.nodes[ops.local_nodes[i]])).norm() <=
                  1e-8);
    }
}

TEST_CASE("coarse element stiffness is symmetric PSD with translation null space") {
    FoamFixture fx;
    Material mat;
    auto space = build_coarse_space(fx.cm, 2);
    for (int alpha = 0; alpha < static_cast<int>(fx.cm.elements.size()); ++alpha) {
        auto ops = build_element_operators(fx.cm, space, alpha, fx.density.He, mat);
        const MatX& K = ops.K;
        const double scale = K.norm();
        CHECK((K - K.transpose()).norm() <= 1e-10 * scale);
        const int nc = static_cast<int>(space.elem_nodes[alpha].size());
        for (int axis = 0; axis < 2; ++axis) {
            VecX q = VecX::Zero(2 * nc);
            for (int i = 0; i < nc; ++i) q[2 * i + axis] = 1.0;
            CHECK((K * q).norm() <= 1e-8 * scale * q.norm());
        }
        Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (K + K.transpose()));
        CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * eig.eigenvalues().maxCoeff());
    }
}

TEST_CASE("depth-2 controls span the refine-2 trace space exactly") {
    BoxDomain<2> domain{Box<2>{Vec<2>::Zero(), Vec<2>::Ones()}};
    auto cm = build_structured<2>(domain, {2, 2}, 2);
    auto He = random_density(cm.fine.elements.size(), 5);
    Material mat;
    LoadCase lc = edge_loadcase(cm.fine, -1.0);
    VecX qf;
    double Cf = fine_compliance(cm.fine, He, mat, lc, &qf);
    auto space = build_coarse_space(cm, 2);
    CoarseSystem<2> sys;
    VecX QH;
    double Cc = coarse_compliance(cm, space, He, mat, lc.f, &sys, &QH);
    CHECK(error_metric(Cc, Cf) <= 1e-12);

    VecX qp = prolong(cm, space, sys.ops, QH);
    REQUIRE(qp.size() == qf.size());
    CHECK((qp - qf).norm() <= 1e-8 * std::max(qf.norm(), 1e-12));
}

TEST_CASE("coarse compliance is a Ritz lower bound") {
    FoamFixture fx;
    Material mat;
    LoadCase lc = edge_loadcase(fx.cm.fine, -1.0);
    double Cf = fine_compliance(fx.cm.fine, fx.density.He, mat, lc);
    auto space = build_coarse_space(fx.cm, 2);
    double Cc = coarse_compliance(fx.cm, space, fx.density.He, mat, lc.f);
    CHECK(Cc <= Cf * (1 + 1e-10));
    CHECK(Cc > 0.0);
}

TEST_CASE("prolonged solution carries the coarse energy") {
    FoamFixture fx;
    Material mat;
    LoadCase lc = edge_loadcase(fx.cm.fine, -1.0);
    auto space = build_coarse_space(fx.cm, 2);
    CoarseSystem<2> sys;
    VecX QH;
    double Cc = coarse_compliance(fx.cm, space, fx.density.He, mat, lc.f, &sys, &QH);

    const int nc = static_cast<int>(space.nodes.size());
    VecX qt = VecX::Zero(2 * nc);
    for (int i = 0; i < nc; ++i) qt[2 * i] = 1.0;
    VecX ut = prolong(fx.cm, space, sys.ops, qt);
    for (int n = 0; n < static_cast<int>(fx.cm.fine.nodes.size()); ++n) {
        CHECK(ut[2 * n] == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(std::abs(ut[2 * n + 1]) <= 1e-10);
    }

    VecX qp = prolong(fx.cm, space, sys.ops, QH);
    SparseMat Kf = assemble(fx.cm.fine, fx.density.He, mat);
    double energy = 0.5 * qp.dot(Kf * qp);
    CHECK(energy == doctest::Approx(Cc).epsilon(1e-8));
}

TEST_CASE("raising the patch depth does not worsen the coarse error") {
    FoamFixture fx;
    Material mat;
    LoadCase lc = edge_loadcase(fx.cm.fine, -1.0);
    double Cf = fine_compliance(fx.cm.fine, fx.density.He, mat, lc);
    auto s1 = build_coarse_space(fx.cm, 1);
    auto s2 = build_coarse_space(fx.cm, 2);
    double r1 = error_metric(coarse_compliance(fx.cm, s1, fx.density.He, mat, lc.f), Cf);
    double r2 = error_metric(coarse_compliance(fx.cm, s2, fx.density.He, mat, lc.f), Cf);
    CHECK(r2 <= r1 + 1e-12);
}

TEST_CASE("boundary interpolation is a partition of unity per axis") {
    FoamFixture fx;
    auto space = build_coarse_space(fx.cm, 2);
    for (int alpha : {0, 3}) {
        MatX psi = boundary_interpolation(fx.cm, space, alpha);
        const auto& ce = fx.cm.elements[alpha];
        const int nc = static_cast<int>(space.elem_nodes[alpha].size());
        REQUIRE(psi.rows() == 2 * static_cast<int>(ce.boundary_nodes.size()));
        REQUIRE(psi.cols() == 2 * nc);
        Vec<2> t(1.25, -0.5);
        VecX qt(2 * nc);
        for (int i = 0; i < nc; ++i) qt.segment<2>(2 * i) = t;
        VecX ub = psi * qt;
        for (int i = 0; i < static_cast<int>(ce.boundary_nodes.size()); ++i)
            CHECK((ub.segment<2>(2 * i) - t).norm() <= 1e-10);
    }
}

TEST_CASE("frozen-basis gradient matches a hand-built congruence") {
    FoamFixture fx;
    Material mat;
    auto space = build_coarse_space(fx.cm, 2);
    const int alpha = 1;
    auto ops = build_element_operators(fx.cm, space, alpha, fx.density.He, mat);
    const auto& ce = fx.cm.elements[alpha];
    const int e = ce.fine_elements[ce.fine_elements.size() / 2];

    MatX G = coarse_gradient(fx.cm, ops, {{e, 1.0}}, mat);

    auto order = local_order(ce);
    std::unordered_map<int, int> lid;
    for (std::size_t i = 0; i < order.size(); ++i) lid[order[i]] = static_cast<int>(i);
    std::array<Vec<2>, 3> xs;
    for (int j = 0; j < 3; ++j) xs[j] = fx.cm.fine.nodes[fx.cm.fine.elements[e][j]];
    auto khat = element_stiffness<2>(xs, mat);
    MatX big = MatX::Zero(ops.Psi.rows(), ops.Psi.rows());
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            big.block<2, 2>(2 * lid[fx.cm.fine.elements[e][r]], 2 * lid[fx.cm.fine.elements[e][c]]) =
                khat.block<2, 2>(2 * r, 2 * c);
    MatX expect = ops.Psi.transpose() * big * ops.Psi;
    CHECK((G - expect).norm() <= 1e-12 * std::max(expect.norm(), 1e-12));

    // Measure how far the frozen-basis gradient sits from the full rebuild.
    const double h = 1e-6;
    auto He2 = fx.density.He;
    He2[e] += h;
    auto ops2 = build_element_operators(fx.cm, space, alpha, He2, mat);
    MatX fd = (ops2.K - ops.K) / h;
    double rel = (fd - G).norm() / std::max(fd.norm(), 1e-12);
    MESSAGE("frozen-basis vs full-rebuild gradient gap: ", rel);
    CHECK(rel < 1.0);
}
