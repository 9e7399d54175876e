#include <doctest.h>

#include "nlad/builtin_models.hpp"
#include "nlad/eigenpath.hpp"
#include "nlad/linearized.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace nlad;

namespace {

RMat random_orthogonal(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g;
    RMat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    Eigen::HouseholderQR<RMat> qr(a);
    return qr.householderQ();
}

// H_shift = Q diag(spec) Q^T with spec[0] = 0 and omega = Q e_0; v_j random in omega^perp
DoubledOperator random_doubled(std::mt19937_64& rng, const std::vector<double>& spec, int p) {
    const int n = int(spec.size());
    RMat Q = random_orthogonal(rng, n);
    RVec d = Eigen::Map<const RVec>(spec.data(), n);
    RMat h = Q * d.asDiagonal() * Q.transpose();
    RVec w = Q.col(0);
    if (w(0) < 0) w = -w;
    std::normal_distribution<double> g;
    std::vector<Vec> v;
    for (int j = 0; j < p; ++j) {
        RVec x(n);
        for (int i = 0; i < n; ++i) x(i) = g(rng);
        x -= x.dot(w) * w;
        v.push_back(x.cast<cplx>());
    }
    return make_doubled(h.cast<cplx>(), w.cast<cplx>(), v);
}

double match_distance(std::vector<cplx> a, std::vector<cplx> b) {
    REQUIRE(a.size() == b.size());
    double worst = 0;
    for (cplx z : a) {
        auto it = std::min_element(b.begin(), b.end(), [&](cplx x, cplx y) { return std::abs(x - z) < std::abs(y - z); });
        worst = std::max(worst, std::abs(*it - z));
        b.erase(it);
    }
    return worst;
}

} // namespace

TEST_CASE("polynomial roots recover the roots a polynomial was built from") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<cplx> roots, c{1.0};
        for (int i = 0; i < 6; ++i) roots.push_back({g(rng), g(rng)});
        for (cplx r : roots) {
            std::vector<cplx> next(c.size() + 1, 0.0);
            for (size_t i = 0; i < c.size(); ++i) {
                next[i + 1] += c[i];
                next[i] -= r * c[i];
            }
            c = next;
        }
        CHECK(match_distance(polynomial_roots(c), roots) < 1e-9);
    }
    CHECK(polynomial_roots({2.0}).empty());
}

TEST_CASE("Aronszajn-Weinstein determinant is det(F - z) / det(F0 - z)") {
    std::mt19937_64 rng(3);
    for (int p : {1, 2}) {
        DoubledOperator op = random_doubled(rng, {0.0, -1.3, 0.7, 2.1, 3.4}, p);
        const int m = 2 * op.n;
        for (cplx z : {cplx(0.3, 0.2), cplx(-1.7, 0.5), cplx(2.5, -0.1)}) {
            cplx ref = (op.F - z * Mat::Identity(m, m)).determinant() / (op.F0 - z * Mat::Identity(m, m)).determinant();
            CHECK(std::abs(aw_determinant(op, z) - ref) < 1e-10 * std::max(1.0, std::abs(ref)));
            if (p == 1) CHECK(std::abs(aw_closed_form(op, z) - ref) < 1e-10 * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST_CASE("numerator roots are the eigenvalues of F off the unperturbed spectrum") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        DoubledOperator op = random_doubled(rng, {0.0, -2.0, -0.6, 1.1, 2.9}, 1);
        BiorthogonalSpectrum s = spectrum_f(op);
        for (cplx z : aw_roots_p1(op)) {
            double best = 1e300;
            for (cplx e : s.eigenvalues) best = std::min(best, std::abs(e - z));
            CHECK(best < 1e-7);
        }
        CHECK(quadruple_defect(s, op) < 1e-9);
        REQUIRE(s.kernel_cluster >= 0);
        CHECK(s.clusters[s.kernel_cluster].members.size() == 2);
    }
}

TEST_CASE("winding counts zeros minus poles") {
    std::mt19937_64 rng(8);
    DoubledOperator op = random_doubled(rng, {0.0, -1.0, 1.5, 2.5}, 1);
    // a circle around a pair of unperturbed eigenvalues +-1.5 with no roots nearby
    std::vector<cplx> roots = aw_roots_p1(op);
    int zeros = 0;
    for (cplx z : roots)
        if (std::abs(z - 1.5) < 0.3) ++zeros;
    bool clear = true;
    for (cplx z : roots)
        if (std::abs(std::abs(z - 1.5) - 0.3) < 1e-2) clear = false;
    if (clear) CHECK(aw_winding(op, 1.5, 0.3) == zeros - 1);
}

TEST_CASE("kernel projector matches the biorthogonal cluster projector") {
    std::mt19937_64 rng(13);
    for (int p : {1, 2}) {
        DoubledOperator op = random_doubled(rng, {0.0, -1.0, 0.8, 1.9, 2.6, -3.0}, p);
        BiorthogonalSpectrum s = spectrum_f(op);
        Mat P0 = kernel_projector(op);
        CHECK((P0 - s.clusters[s.kernel_cluster].projector).norm() < 1e-8);
        CHECK((P0 * P0 - P0).norm() < 1e-9);
        // (i omega, -i conj omega) lies in the kernel
        Vec k(2 * op.n);
        k << I * op.omega, -I * op.omega.conjugate();
        CHECK((op.F * k).norm() < 1e-12);
        CHECK((P0 * k - k).norm() < 1e-9);
    }
}

TEST_CASE("eigenprojector of a persistent degenerate eigenvalue") {
    std::mt19937_64 rng(17);
    DoubledOperator op = random_doubled(rng, {0.0, 1.0, 1.0, -2.0, 3.0}, 1);
    int k = -1;
    for (int i = 0; i < op.shifted.size(); ++i)
        if (std::abs(op.shifted.eigenvalues[i] - 1.0) < 1e-9) k = i;
    REQUIRE(k >= 0);
    REQUIRE(op.shifted.multiplicities[k] == 2);
    P1Projector pr = p1_eigenprojector(op, k);
    CHECK(std::abs(pr.identity - 1.0) < 1e-12);
    CHECK(pr.idempotency < 1e-12);
    CHECK((op.F * pr.projector - pr.projector * op.F).norm() < 1e-12);
    CHECK(std::abs(pr.projector.trace() - 1.0) < 1e-12);
    BiorthogonalSpectrum s = spectrum_f(op);
    for (const Cluster& c : s.clusters)
        if (std::abs(c.mean - 1.0) < 1e-6) CHECK((c.projector - pr.projector).norm() < 1e-8);
}

TEST_CASE("input errors of the linearized operator") {
    std::mt19937_64 rng(19);
    DoubledOperator op = random_doubled(rng, {0.0, 1.0, -2.0}, 1);
    try {
        aw_determinant(op, 1.0 + 1e-10);
        FAIL("expected TooCloseToUnperturbedSpectrum");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TooCloseToUnperturbedSpectrum);
    }
    // a near-zero level that the nonlinearity does not couple to
    Mat h = Mat::Zero(4, 4);
    h.diagonal() << 0.0, 1e-9, 1.0, -2.0;
    DoubledOperator tight = make_doubled(h, Vec::Unit(4, 0), {Vec::Unit(4, 2)});
    try {
        kernel_projector(tight);
        FAIL("expected GapTooSmall");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::GapTooSmall);
    }
    Vec w = op.omega, e1 = Vec::Unit(3, 0), e2 = Vec::Unit(3, 1);
    try {
        realness_discriminant(e1, e2, w, w, op.v[0]);
        FAIL("expected ConstraintViolated");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConstraintViolated);
    }
    DoubledOperator two = random_doubled(rng, {0.0, 1.0, -2.0}, 2);
    CHECK_THROWS_AS(aw_numerator_p1(two), Error);
}

TEST_CASE("a Jordan block is reported as non-diagonalizable") {
    Mat J(2, 2);
    J << 0.0, 1.0, 0.0, 0.0;
    BiorthogonalSpectrum s = spectrum_f(J, 1e-6, false);
    REQUIRE(s.clusters.size() == 1);
    CHECK(s.clusters[0].nilpotent_norm > 0.5);
    // diagonalizable, but with nearly parallel eigenvectors
    Mat V(2, 2), D = Mat::Zero(2, 2);
    V << 1.0, 1.0, 0.0, 1e-10;
    D(1, 1) = 1.0;
    Mat A = V * D * V.inverse();
    try {
        spectrum_f(A, 1e-6, true);
        FAIL("expected IllConditioned");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::IllConditioned);
    }
}

TEST_CASE("symmetric models give real spectra with the kernel pair") {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 8; ++i) {
        const int n = 4 + 2 * (i % 2);
        ModelSpec m = random_real_model(rng, n, 1 + i % 2, 0.05);
        SmoothFrame f = make_frame(m, {0.0, RVec::Constant(m.p, 1.0 / n)});
        FixedPointConfig cfg;
        FixedPointResult r = solve_fixed_point(m, f, 0.0, f.phi0, cfg);
        DoubledOperator op = build_f(m, 0.0, r.omega);
        BiorthogonalSpectrum s = spectrum_f(op);
        CHECK(s.max_imag < 1e-8);
        CHECK(s.clusters[s.kernel_cluster].members.size() == 2);
        // the kernel block is diagonalizable
        CHECK(s.clusters[s.kernel_cluster].nilpotent_norm < 1e-10);
    }
}

TEST_CASE("negative discriminant yields a non-real pair and a rotation flips its sign") {
    std::mt19937_64 rng(7);
    DiscriminantInstance inst = search_negative_discriminant(rng, 5, 100000);
    CHECK(inst.discriminant < 0);
    // the discriminant is invariant under the sign of v
    DiscriminantInstance neg = inst;
    for (auto& v : neg.v) v = -v;
    CHECK(instance_discriminant(neg, neg.e) == doctest::Approx(inst.discriminant).epsilon(1e-12));
    BiorthogonalSpectrum s = spectrum_f(discriminant_operator(inst, 1.0, 50.0), -1.0, false);
    CHECK(s.max_imag > 1e-3);
    SignFlip sf = find_sign_flip(inst, rng, 100000);
    REQUIRE(sf.found);
    CHECK(sf.discriminant > 0);
    CHECK((sf.R * inst.omega - inst.omega).norm() < 1e-12);
    CHECK((sf.R.transpose() * sf.R - RMat::Identity(5, 5)).norm() < 1e-12);
    CHECK_THROWS_AS(search_negative_discriminant(rng, 4, 10), Error);
}

TEST_CASE("discriminant is a perfect square without cross terms") {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> g;
    const int n = 5;
    for (int trial = 0; trial < 10; ++trial) {
        RMat basis(n, 3);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 3; ++j) basis(i, j) = g(rng);
        basis.col(1) = RVec::Unit(n, 1); // e2
        RVec w = basis.col(0).normalized();
        // u orthogonal to omega and e2, so <e2|u> = 0 kills the cross term
        Eigen::HouseholderQR<RMat> qr(basis);
        RMat Q = qr.householderQ();
        RVec u = basis.col(2) - Q.leftCols(2) * (Q.leftCols(2).transpose() * basis.col(2));
        Vec e1 = Vec::Unit(n, 0), e2 = Vec::Unit(n, 1), wc = w.cast<cplx>(), uc = u.cast<cplx>();
        double a = w(0) * u(0);
        double d = realness_discriminant(e1, e2, wc, uc, uc);
        CHECK(d == doctest::Approx(a * a).epsilon(1e-10));
        CHECK(d >= 0.0);
    }
}

TEST_CASE("a strongly negative instance still gives a non-real pair") {
    std::mt19937_64 rng(7);
    DiscriminantInstance inst = search_negative_discriminant(rng, 5, 100000, -0.1);
    CHECK(inst.discriminant < -0.1);
    CHECK(spectrum_f(discriminant_operator(inst, 1.0, 50.0), -1.0, false).max_imag > 1e-3);
}

TEST_CASE("block operator diag(A, -conj A) has the mirrored spectrum") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g;
    Mat A(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) A(i, j) = cplx(g(rng), g(rng));
    A = (0.5 * (A + A.adjoint())).eval();
    Mat F = Mat::Zero(8, 8);
    F.topLeftCorner(4, 4) = A;
    F.bottomRightCorner(4, 4) = -A.conjugate();
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    std::vector<cplx> expect;
    for (int i = 0; i < 4; ++i) {
        expect.push_back(es.eigenvalues()(i));
        expect.push_back(-es.eigenvalues()(i));
    }
    BiorthogonalSpectrum s = spectrum_f(F);
    CHECK(match_distance(s.eigenvalues, expect) < 1e-10);
    for (const Cluster& c : s.clusters) CHECK((c.projector - c.projector.adjoint()).norm() < 1e-10);
}
