#pragma once

#include "nlad/eigenpath.hpp"
#include "nlad/model.hpp"
#include "nlad/scalar_function.hpp"

#include <array>
#include <functional>
#include <vector>

namespace nlad {

enum class Scheme {
    Midpoint,  // v_{n+1} = exp(-i dt/eps H(t_{n+1/2},[v_{n+1/2}])) v_n, v_{n+1/2} its half-step image
    Composed4, // symmetric triple-jump composition of Midpoint, fourth order
};

struct IntegratorConfig {
    double epsilon = 0.0;
    double dt_factor = 40.0; // dt = epsilon / dt_factor
    double midpoint_fixed_point_tol = 1e-13;
    int midpoint_max_iters = 100;
    bool norm_renormalize = false;
    Scheme scheme = Scheme::Composed4;

    int order() const { return scheme == Scheme::Midpoint ? 2 : 4; }
    void validate() const;
};

struct PropagationResult {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<double> norm_drift;
    std::vector<double> energy;
    double epsilon = 0;
    long steps = 0;
    int max_inner_iters = 0;
};

// One step of the configured scheme from (t, v) to t + dt; dt may be negative.
Vec integrator_step(const ModelSpec& m, const Vec& v, double t, double dt, const IntegratorConfig& cfg,
                    int* inner_iters = nullptr);

// Uniform grid with dt = epsilon / dt_factor (rounded to divide the range).
PropagationResult propagate(const ModelSpec& m, const Vec& v0, double t0, double t1, const IntegratorConfig& cfg);
// Output on the given grid; each interval is split into equal steps no longer than epsilon / dt_factor.
PropagationResult propagate_on(const ModelSpec& m, const Vec& v0, const std::vector<double>& times,
                               const IntegratorConfig& cfg);

// Closed-form solution of the two-level flip model for real data (x0, z0).
PropagationResult analytic_two_level(const ScalarFunction& gamma, double x0, double z0,
                                     const std::vector<double>& times, double epsilon);

// x^2 + t^2, y^2 + z^2, xz + yt for v = (x + iy, z + it)
std::array<double, 3> two_level_constants(const Vec& v);

std::vector<double> energy_content(const ModelSpec& m, const PropagationResult& r);

using GaugeFunction = std::function<double(double t, const RVec& x)>;

struct GaugeShiftReport {
    double residual = 0;
    double integrator_tolerance = 0; // Richardson estimate of the global error
    double ratio = 0;
};

GaugeShiftReport gauge_shift_check(const ModelSpec& m, const GaugeFunction& chi, const Vec& v0, double t0,
                                   double t1, const IntegratorConfig& cfg);

struct AdiabaticError {
    std::vector<double> times, err;
    double sup = 0;
    double early_ratio = 0; // max err(t)/t over 0 < t - t0 <= epsilon
    double energy_gap = 0;  // max |E(t) - lambda(t)|
    PropagationResult propagation;
};

AdiabaticError adiabatic_error(const ModelSpec& m, const EigenPath& path, const IntegratorConfig& cfg);

struct OrderEstimate {
    double order = 0;
    double coarse_diff = 0, fine_diff = 0;
    double norm_drift = 0;
};

// Richardson step-halving: solutions at dt, dt/2, dt/4 compared on the dt grid.
OrderEstimate measure_order(const ModelSpec& m, const Vec& v0, double t0, double t1, const IntegratorConfig& cfg);

} // namespace nlad
