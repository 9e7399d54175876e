#include <doctest.h>

#include "nlad/builtin_models.hpp"
#include "nlad/eigenpath.hpp"
#include "nlad/quadrature.hpp"
#include "nlad/transport.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

using namespace nlad;

namespace {

Mat similarity() {
    Mat S(4, 4);
    S << 1.0, 0.3, 0.0, 0.1, 0.2, 1.0, 0.4, 0.0, 0.0, -0.3, 1.0, 0.2, 0.1, 0.0, 0.2, 1.0;
    return S;
}

Mat antisym() {
    RMat A(4, 4);
    A << 0, 1.0, -0.5, 0.2, -1.0, 0, 0.7, 0.3, 0.5, -0.7, 0, -0.4, -0.2, -0.3, 0.4, 0;
    return A.cast<cplx>();
}

// F(t) = R(t) S D S^-1 R(t)^T, R = exp(tA)
struct Rotating {
    Mat S = similarity(), A = antisym(), D;
    Rotating() {
        D = Mat::Zero(4, 4);
        D.diagonal() << -1.5, 0.0, 0.8, 2.0;
    }
    Mat R(double t) const { return Mat(t * A).exp(); }
    Mat F(double t) const { return R(t) * S * D * S.inverse() * R(t).transpose(); }
    // exact intertwiner R(t) exp(-t sum_j P_j A P_j) with P_j of F(0)
    Mat W(double t) const {
        Mat B = Mat::Zero(4, 4);
        Mat Si = S.inverse();
        for (int j = 0; j < 4; ++j) {
            Mat P = S.col(j) * Si.row(j);
            B -= P * A * P;
        }
        return R(t) * Mat(t * B).exp();
    }
    TransportBundle bundle(int n) const {
        std::vector<double> t = linspace(0, 1, n);
        std::vector<Mat> f;
        for (double s : t) f.push_back(F(s));
        return build_bundle(t, f);
    }
};

} // namespace

TEST_CASE("constant F: trivial intertwiner and exact exponential") {
    Mat S = similarity(), D = Mat::Zero(4, 4);
    D.diagonal() << -1.0, 0.0, 0.5, 2.0;
    Mat F = S * D * S.inverse();
    std::vector<double> t = linspace(0, 1, 21);
    TransportBundle b = build_bundle(t, std::vector<Mat>(t.size(), F));
    CHECK(b.clusters() == 4);
    CHECK(b.labels[b.kernel] == 0);
    for (size_t k = 0; k < b.size(); ++k) {
        CHECK(b.K[k].norm() < 1e-12);
        CHECK((b.W[k] - Mat::Identity(4, 4)).norm() < 1e-12);
    }
    const double eps = 0.05;
    TrueEvolution te = true_evolution(b, eps);
    for (size_t k = 0; k < b.size(); ++k) {
        Mat ref = Mat(-I * t[k] / eps * F).exp();
        CHECK((te.T[k] - ref).norm() < 1e-8);
        CHECK((comparison_operator(b, eps, k, 0) - ref).norm() < 1e-8);
    }
    CHECK(te.inversion_defect < 1e-10);
    CHECK(compare_one(b, eps).sup_defect < 1e-8);
}

TEST_CASE("rotating family: Kato generator and intertwiner against closed forms") {
    Rotating r;
    auto errors = [&](int n) {
        TransportBundle b = r.bundle(n);
        double ek = 0, ew = 0;
        for (size_t k = 1; k + 1 < b.size(); ++k) {
            Mat K = Mat::Zero(4, 4);
            for (size_t j = 0; j < b.P.size(); ++j) K += b.P[j][k] * r.A * b.P[j][k];
            K = I * (r.A - K);
            ek = std::max(ek, (b.K[k] - K).norm());
        }
        for (size_t k = 0; k < b.size(); ++k) ew = std::max(ew, (b.W[k] - r.W(b.times[k])).norm());
        return std::make_pair(ek, ew);
    };
    auto [k1, w1] = errors(51);
    auto [k2, w2] = errors(101);
    CHECK(k2 < 1e-2);
    CHECK(w2 < 1e-3);
    CHECK(std::log2(k1 / k2) == doctest::Approx(2.0).epsilon(0.15));
    CHECK(std::log2(w1 / w2) > 1.8);
    TransportBundle b = r.bundle(101);
    double m1 = b.max_intertwining();
    CHECK(m1 < 1e-3);
    CHECK(r.bundle(201).max_intertwining() < m1 / 3);
    // diagonal blocks of K vanish up to the difference error
    double d1 = r.bundle(51).k_diagonal_defect, d2 = r.bundle(101).k_diagonal_defect;
    CHECK(d2 < 1e-2);
    CHECK(d1 / d2 > 3.0);
}

TEST_CASE("comparison operator inverts and intertwines") {
    Rotating r;
    TransportBundle b = r.bundle(201);
    const double eps = 0.05;
    Mat V = comparison_operator(b, eps, 150, 40);
    CHECK((V * comparison_operator(b, eps, 40, 150) - Mat::Identity(4, 4)).norm() < 1e-10);
    for (size_t j = 0; j < b.P.size(); ++j) CHECK((V * b.P[j][40] - b.P[j][150] * V).norm() < 1e-3);
}

TEST_CASE("dynamical phase group law") {
    Rotating r;
    TransportBundle b = r.bundle(41);
    const double eps = 0.07;
    for (auto [a, m, c] : {std::tuple{40, 25, 0}, std::tuple{10, 30, 5}, std::tuple{0, 20, 40}}) {
        Mat lhs = dynamical_phase(b, eps, a, m) * dynamical_phase(b, eps, m, c);
        CHECK((lhs - dynamical_phase(b, eps, a, c)).norm() < 1e-10);
    }
    CHECK((dynamical_phase(b, eps, 17, 17) - Mat::Identity(4, 4)).norm() < 1e-12);
    CHECK((dynamical_phase(b, eps, 30, 3) * dynamical_phase(b, eps, 3, 30) - Mat::Identity(4, 4)).norm() < 1e-10);
    // the kernel cluster carries no phase
    Mat phi = dynamical_phase(b, eps, 40, 0);
    CHECK((phi * b.P[b.kernel][0] - b.P[b.kernel][0]).norm() < 1e-12);
}

TEST_CASE("true evolution is second order and the comparison defect first order") {
    Rotating r;
    TransportBundle b = r.bundle(41);
    const double eps = 0.05;
    TrueEvolution a = true_evolution(b, eps, 10), c = true_evolution(b, eps, 20), d = true_evolution(b, eps, 40);
    double e1 = 0, e2 = 0;
    for (size_t k = 0; k < b.size(); ++k) {
        e1 = std::max(e1, (a.T[k] - c.T[k]).norm());
        e2 = std::max(e2, (c.T[k] - d.T[k]).norm());
    }
    CHECK(std::log2(e1 / e2) == doctest::Approx(2.0).epsilon(0.1));
    b = r.bundle(401);
    ComparisonSweep sw = compare_adiabatic(b, {0.04, 0.02, 0.01}, 40, 3);
    CHECK(sw.defect_fit.slope == doctest::Approx(1.0).epsilon(0.1));
    CHECK(sw.uniform_variation < 0.05);
    try {
        true_evolution(b, eps, 0.5);
        FAIL("expected StepTooLarge");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::StepTooLarge);
    }
}

TEST_CASE("Hermitian F evolves unitarily") {
    Rotating r;
    r.S = Mat::Identity(4, 4);
    TransportBundle b = r.bundle(201);
    AdiabaticComparison c = compare_one(b, 0.05);
    CHECK(c.uniform_bound == doctest::Approx(1.0).epsilon(1e-9));
    for (size_t k = 0; k < b.size(); ++k) CHECK((b.W[k].adjoint() * b.W[k] - Mat::Identity(4, 4)).norm() < 1e-5);
}

TEST_CASE("Hermitian block operator keeps its blocks decoupled") {
    Rotating r;
    r.S = Mat::Identity(4, 4);
    std::vector<double> t = linspace(0, 1, 101);
    std::vector<Mat> f;
    for (double s : t) {
        Mat h = r.F(s), F0 = Mat::Zero(8, 8);
        F0.topLeftCorner(4, 4) = h;
        F0.bottomRightCorner(4, 4) = -h.conjugate();
        f.push_back(F0);
    }
    TrueEvolution te = true_evolution(build_bundle(t, f, 1e-6), 0.05);
    for (const Mat& T : te.T) {
        CHECK(T.topRightCorner(4, 4).norm() < 1e-14);
        CHECK(T.bottomLeftCorner(4, 4).norm() < 1e-14);
        Mat top = T.topLeftCorner(4, 4);
        CHECK((top.adjoint() * top - Mat::Identity(4, 4)).norm() < 1e-10);
    }
}

TEST_CASE("non-real spectrum and level crossings are rejected") {
    Mat F(2, 2);
    F << 0.0, 1.0, -1.0, 0.0; // eigenvalues +-i
    std::vector<double> t = linspace(0, 1, 5);
    TransportBundle b = build_bundle(t, std::vector<Mat>(t.size(), F));
    try {
        dynamical_phase(b, 0.1, 4, 0);
        FAIL("expected NonRealEigenvaluePath");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonRealEigenvaluePath);
    }
    std::vector<Mat> cross;
    for (double s : t) {
        Mat c = Mat::Zero(2, 2);
        c.diagonal() << s - 0.5, 0.5 - s;
        cross.push_back(c);
    }
    try {
        build_bundle(t, cross);
        FAIL("expected TrackingBroken");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TrackingBroken);
    }
}

TEST_CASE("double well bundle: tracked kernel and small intertwining residual") {
    ModelSpec m = double_well_mcww(ScalarFunction::polynomial({0.2, 0.1}), ScalarFunction::constant(1.0),
                                   ScalarFunction::constant(0.5));
    SmoothFrame f = make_frame(m, {0.0, RVec::Constant(2, 0.5)});
    FixedPointConfig cfg;
    cfg.dt = 1e-3;
    EigenPath p = continue_path(m, f, 0.0, 0.5, f.phi0, cfg);
    TransportBundle b = build_bundle(m, p);
    REQUIRE(b.kernel >= 0);
    CHECK(b.max_imag < 1e-10);
    CHECK(b.min_overlap > 0.99);
    CHECK(b.max_intertwining() < 1e-6);
    SourceIntegralReport s = source_integral_check(b, {0.05, 0.025});
    CHECK(s.kernel_component < 1e-8);
    CHECK(s.fit.slope == doctest::Approx(1.0).epsilon(0.15));
    CHECK(std::abs(s.control_fit.slope) < 0.2);
    // a frozen eigenvector has no source
    TransportBundle frozen = b;
    for (auto& c : frozen.chi) c.setZero();
    for (double x : source_integral(frozen, 0.05)) CHECK(x == 0.0);
}
