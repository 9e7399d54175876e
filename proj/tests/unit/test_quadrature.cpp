#include <doctest.h>

#include "nlad/quadrature.hpp"

#include <cmath>

using namespace nlad;

TEST_CASE("cumulative simpson is exact for cubics on every prefix") {
    const double h = 0.1;
    std::vector<double> f;
    for (int k = 0; k <= 11; ++k) {
        double t = k * h;
        f.push_back(1 + 2 * t - 3 * t * t + 4 * t * t * t);
    }
    auto F = cumulative_simpson(f, h);
    for (int k = 0; k <= 11; ++k) {
        double t = k * h;
        double exact = t + t * t - t * t * t + t * t * t * t;
        // odd prefixes use a three-point end rule, exact for quadratics only
        CHECK(F[k] == doctest::Approx(exact).epsilon(k % 2 == 0 ? 1e-13 : 1e-3));
    }
}

TEST_CASE("cumulative simpson converges at fourth order") {
    auto err = [](int n) {
        double h = 1.0 / n;
        std::vector<double> f;
        for (int k = 0; k <= n; ++k) f.push_back(std::exp(k * h));
        return std::abs(cumulative_simpson(f, h).back() - (std::exp(1.0) - 1));
    };
    CHECK(std::log2(err(20) / err(40)) == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("trapezoid and derivative on a quadratic") {
    const double h = 0.05;
    std::vector<double> f;
    for (int k = 0; k <= 20; ++k) f.push_back(std::pow(k * h, 2));
    auto d = grid_derivative(f, h);
    for (int k = 0; k <= 20; ++k) CHECK(d[k] == doctest::Approx(2 * k * h).epsilon(1e-12));
    auto F = cumulative_trapezoid(f, h);
    CHECK(F.back() == doctest::Approx(1.0 / 3).epsilon(1e-3));
}

TEST_CASE("loglog fit recovers a power law") {
    std::vector<double> x{0.1, 0.05, 0.025, 0.0125}, y;
    for (double v : x) y.push_back(3 * std::pow(v, 1.5));
    LinearFit f = loglog_fit(x, y);
    CHECK(f.slope == doctest::Approx(1.5));
    CHECK(std::exp(f.intercept) == doctest::Approx(3.0));
    CHECK(f.r2 == doctest::Approx(1.0));
}

TEST_CASE("parabolic extrema of a sampled cosine") {
    std::vector<double> t = linspace(0, 10, 401), f;
    for (double s : t) f.push_back(std::cos(2 * s));
    auto ex = local_extrema(t, f);
    REQUIRE(ex.size() == 6);
    for (const auto& e : ex) {
        CHECK(std::abs(e.value) == doctest::Approx(1.0).epsilon(1e-5));
        double k = e.t / (std::numbers::pi / 2);
        CHECK(std::abs(k - std::round(k)) < 1e-4);
        CHECK(e.is_max == (int(std::lround(k)) % 2 == 0));
    }
}
