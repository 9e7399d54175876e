#include <doctest.h>

#include "nlad/builtin_models.hpp"
#include "nlad/eigenpath.hpp"
#include "nlad/quadrature.hpp"

#include <cmath>

using namespace nlad;

namespace {

// |omega_1|^2 of the double-well fixed point, by bisection on the closed-form 2x2 ground state
double double_well_population(double kappa, double omega, double tilt) {
    auto g = [&](double a2) {
        double d1 = kappa * a2 + tilt, d2 = kappa * (1 - a2) - tilt;
        double lam = 0.5 * (d1 + d2) - std::sqrt(0.25 * (d1 - d2) * (d1 - d2) + omega * omega);
        double c1 = omega, c2 = lam - d1;
        return c1 * c1 / (c1 * c1 + c2 * c2) - a2;
    };
    double lo = 0, hi = 1;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (g(lo) * g(mid) <= 0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

ModelSpec tilted_well(double kappa, double tilt) {
    return double_well_mcww(ScalarFunction::constant(kappa), ScalarFunction::constant(1.0),
                            ScalarFunction::constant(tilt));
}

} // namespace

TEST_CASE("double well fixed point matches the bisection oracle") {
    for (double tilt : {0.0, 0.5, -0.3}) {
        ModelSpec m = tilted_well(0.3, tilt);
        SmoothFrame f = make_frame(m, {0.0, RVec::Constant(2, 0.5)});
        FixedPointConfig cfg;
        FixedPointResult r = solve_fixed_point(m, f, 0.0, f.phi0, cfg);
        CHECK(std::norm(r.omega(0)) == doctest::Approx(double_well_population(0.3, 1.0, tilt)).epsilon(1e-10));
        CHECK(r.eigen_residual < 1e-10);
        CHECK(r.omega.norm() == doctest::Approx(1.0));
    }
    // untilted: the symmetric state (1,-1)/sqrt 2
    ModelSpec m = tilted_well(0.3, 0.0);
    SmoothFrame f = make_frame(m, {0.0, RVec::Constant(2, 0.5)});
    FixedPointConfig cfg;
    Vec w = solve_fixed_point(m, f, 0.0, f.phi0, cfg).omega;
    CHECK(std::abs(std::abs(w(0)) - std::sqrt(0.5)) < 1e-12);
    CHECK(std::abs(w(0) + w(1)) < 1e-12);
}

TEST_CASE("Newton jacobian matches finite differences of v - phi([v])") {
    ModelSpec m = tilted_well(0.8, 0.4);
    SmoothFrame f = make_frame(m, {0.0, RVec::Constant(2, 0.5)});
    Vec v(2);
    v << cplx(0.6, 0.1), cplx(-0.7, 0.2);
    v.normalize();
    RMat J = fixed_point_jacobian(m, f, 0.0, v);
    const int n = 2;
    const double h = 1e-6;
    for (int c = 0; c < 2 * n; ++c) {
        Vec dv = Vec::Zero(n);
        dv(c % n) = c < n ? cplx(h, 0) : cplx(0, h);
        Vec gp = (v + dv) - frame_map(m, f, 0.0, v + dv);
        Vec gm = (v - dv) - frame_map(m, f, 0.0, v - dv);
        Vec d = (gp - gm) / (2 * h);
        RVec col(2 * n);
        col << d.real(), d.imag();
        CHECK((J.col(c) - col).norm() < 1e-7);
    }
}

TEST_CASE("two-level flip eigenpath: omega_+ and Lambda = int gamma / 2") {
    auto gamma = ScalarFunction::sinusoid(1, 0.5, 1);
    ModelSpec m = two_level_flip(gamma);
    SmoothFrame f = make_frame(m, {0.0, RVec::Constant(1, 0.5)});
    FixedPointConfig cfg;
    cfg.dt = 0.01;
    EigenPath p = continue_path(m, f, 0.0, 1.0, f.phi0, cfg);
    REQUIRE_FALSE(p.truncated);
    for (size_t k = 0; k < p.size(); ++k) {
        double t = p.times[k];
        CHECK(std::abs(std::abs(p.omega[k](0)) - std::sqrt(0.5)) < 1e-12);
        CHECK(p.lambda[k] == doctest::Approx(gamma(t) / 2).epsilon(1e-12));
        double s = t + 0.5 * (1 - std::cos(t));
        CHECK(p.phase[k] == doctest::Approx(s / 2).epsilon(1e-8));
        CHECK(p.phase_defect[k] < 1e-12);
    }
}

TEST_CASE("continuation keeps the parallel-transport gauge on a complex model") {
    // complex Hamiltonian so that the raw phase drifts
    ModelSpec m = tilted_well(0.4, 0.2);
    auto base = m.h;
    m.is_real = false;
    m.h = [base](double t, const RVec& x) -> Mat {
        Mat h = base(t, x);
        h(0, 1) = std::exp(I * 2.0 * t);
        h(1, 0) = std::conj(h(0, 1));
        return h;
    };
    m.dh_dt = nullptr;
    SmoothFrame f = make_frame(m, {0.0, RVec::Constant(2, 0.5)});
    FixedPointConfig cfg;
    auto defect = [&](double dt) {
        cfg.dt = dt;
        EigenPath p = continue_path(m, f, 0.0, 1.0, f.phi0, cfg);
        REQUIRE_FALSE(p.truncated);
        double mx = 0;
        for (size_t k = 1; k + 1 < p.size(); ++k) mx = std::max(mx, p.phase_defect[k]);
        return mx;
    };
    double a = defect(0.02), b = defect(0.01);
    CHECK(b < 1e-3);
    CHECK(std::log2(a / b) > 1.8);
}

TEST_CASE("DomainExit outside the time domain") {
    ModelSpec m = tilted_well(0.3, 0.5);
    SmoothFrame f = make_frame(m, {0.0, RVec::Constant(2, 0.5)});
    FixedPointConfig cfg;
    try {
        solve_fixed_point(m, f, 5.0, f.phi0, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK((e.kind() == ErrorKind::DomainExit || e.kind() == ErrorKind::OutOfDomain));
    }
}

namespace {

// sign changes of Y - cos(t theta(Y^2) / 2) on a dense grid
int brute_count(const ThetaPoly& th, double t) {
    int c = 0;
    const int n = 200000;
    double prev = -1.0; // value at Y = 0
    for (int i = 1; i <= n; ++i) {
        double Y = double(i) / n;
        double r = Y - std::cos(0.5 * t * th(Y * Y));
        if ((r >= 0) != (prev >= 0)) ++c;
        prev = r;
    }
    return c;
}

} // namespace

TEST_CASE("solution count and fold against a brute-force scan") {
    ThetaPoly th;
    ModelSpec m = rotation_bifurcation(th);
    for (double t : {0.0, 0.3, 0.65, 0.75, 0.9, 1.0}) CHECK(count_solutions(m, t).count == brute_count(th, t));
    FixedPointConfig cfg;
    FoldResult fr = detect_fold(m, 0.0, 1.0, cfg);
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 40; ++i) {
        double mid = 0.5 * (lo + hi);
        (brute_count(th, mid) >= 3 ? hi : lo) = mid;
    }
    CHECK(fr.tau == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-5));
    CHECK(count_solutions(m, fr.tau - 1e-3).count == 1);
    CHECK(count_solutions(m, fr.tau + 1e-3).count == 3);
    CHECK(std::abs(fr.tangency_residual) < 1e-6);
    CHECK(std::abs(fr.tangency_slope) < 1e-3);
}

TEST_CASE("the near-fold branch truncates at the fold") {
    ModelSpec m = rotation_bifurcation(ThetaPoly{});
    FixedPointConfig cfg;
    FoldResult fr = detect_fold(m, 0.0, 1.0, cfg);
    SolutionCount sc = count_solutions(m, 1.0);
    REQUIRE(sc.count == 3);
    double Y = sc.roots.front();
    Vec seed = reduction_vector(m, 1.0, Y);
    SmoothFrame f = make_frame(m, {1.0, populations(seed, 1)}, seed);
    cfg.dt = 1e-3;
    EigenPath p = continue_path(m, f, 1.0, 0.0, seed, cfg);
    CHECK(p.truncated);
    CHECK(std::abs(p.times.back() - fr.tau) < 1e-2);
    CHECK(p.fold);
    CHECK_THROWS_AS(require_complete(p), Error);
    // the upper branch exists all the way
    Vec top = reduction_vector(m, 1.0, sc.roots.back());
    SmoothFrame g = make_frame(m, {1.0, populations(top, 1)}, top);
    EigenPath q = continue_path(m, g, 1.0, 0.0, top, cfg);
    CHECK_FALSE(q.truncated);
}

TEST_CASE("rescaled theta has no fold") {
    ThetaPoly th;
    th.scale = 0.5;
    CHECK_FALSE(theta_shape(th).fold_expected);
    ModelSpec m = rotation_bifurcation(th);
    for (double t : linspace(0, 1, 41)) CHECK(count_solutions(m, t).count == 1);
    FixedPointConfig cfg;
    try {
        detect_fold(m, 0.0, 1.0, cfg);
        FAIL("expected NoFoldInRange");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoFoldInRange);
    }
}

TEST_CASE("theta without the required shape is rejected") {
    ThetaPoly th;
    th.A = -3.2;
    CHECK_FALSE(theta_shape(th).has_max);
    CHECK_THROWS_AS(rotation_bifurcation(th), Error);
}

TEST_CASE("path is gauge covariant and stays real for real models") {
    ModelSpec m = tilted_well(0.4, 0.5);
    SmoothFrame f = make_frame(m, {0.0, RVec::Constant(2, 0.5)});
    FixedPointConfig cfg;
    cfg.dt = 0.01;
    EigenPath a = continue_path(m, f, 0.0, 1.0, f.phi0, cfg);
    const cplx g = std::exp(I * 0.7);
    SmoothFrame f2 = make_frame(m, {0.0, RVec::Constant(2, 0.5)});
    EigenPath b = continue_path(m, f2, 0.0, 1.0, Vec(g * f.phi0), cfg);
    REQUIRE(a.size() == b.size());
    double imag = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        CHECK(std::abs(std::abs(a.omega[k].dot(b.omega[k])) - 1.0) < 1e-10);
        imag = std::max(imag, a.omega[k].imag().cwiseAbs().maxCoeff());
        CHECK(a.omega[k].norm() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(a.residual[k] < 1e-8);
    }
    CHECK(imag < 1e-10);
}

TEST_CASE("fold detection needs a fold") {
    ModelSpec m = two_level_flip(ScalarFunction::constant(1.0));
    SmoothFrame f = make_frame(m, {0.0, RVec::Constant(1, 0.5)});
    FixedPointConfig cfg;
    try {
        detect_fold(m, f, f.phi0, 0.0, 1.0, cfg);
        FAIL("expected NoFoldInRange");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoFoldInRange);
    }
    CHECK_THROWS_AS(detect_fold(m, 0.0, 1.0, cfg), Error); // no scalar reduction
    SolutionCount c = count_solutions(rotation_bifurcation(ThetaPoly{}), 0.0);
    REQUIRE(c.count == 1);
    CHECK(c.roots[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("singular-value fold detection agrees with the solution count") {
    ModelSpec m = rotation_bifurcation(ThetaPoly{});
    FixedPointConfig cfg;
    FoldResult ref = detect_fold(m, 0.0, 1.0, cfg);
    Vec seed = reduction_vector(m, 1.0, count_solutions(m, 1.0).roots.front());
    SmoothFrame f = make_frame(m, {1.0, populations(seed, 1)}, seed);
    cfg.dt = 1e-3;
    FoldResult gen = detect_fold(m, f, seed, 1.0, 0.0, cfg);
    CHECK_FALSE(gen.from_reduction);
    CHECK(gen.tau == doctest::Approx(ref.tau).epsilon(1e-4));
    CHECK(gen.sigma_min < 0.05);
}
