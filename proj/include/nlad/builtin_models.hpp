#pragma once

#include "nlad/model.hpp"
#include "nlad/scalar_function.hpp"

#include <random>
#include <string>
#include <vector>

namespace nlad {

// theta(s) = scale * pi * (s + A s (1 - s)(s - s0))
struct ThetaPoly {
    double A = -11.0;
    double s0 = 0.55;
    double scale = 1.0;
    double operator()(double s) const;
    double derivative(double s) const;
};

struct ThetaShape {
    bool has_max = false, has_min = false;
    double s_max = 0, theta_max = 0, s_min = 0, theta_min = 0;
    double y_max = 0;      // sqrt(s_max)
    bool fold_expected = false; // cos(theta_max / 2) < y_max
};

// Scan theta on [0,1] for the interior maximum and the following minimum.
ThetaShape theta_shape(const ThetaPoly& th, int samples = 20001);

struct ModelParams {
    ScalarFunction gamma = ScalarFunction::constant(1.0);
    ScalarFunction kappa = ScalarFunction::constant(0.2);
    ScalarFunction omega = ScalarFunction::constant(1.0);
    ScalarFunction tilt = ScalarFunction::constant(0.0);
    ThetaPoly theta;
    ScalarFunction a = ScalarFunction::constant(1.0);
    ScalarFunction b = ScalarFunction::constant(1.0);
    int truncation = 64;
    int quadrature = 200;
    double basis_scale = 0.45;
    int selected_index = -1; // -1: model default
};

ModelSpec two_level_flip(const ScalarFunction& gamma);
// [[kappa x1 + tilt, Omega], [Omega, kappa x2 - tilt]]; ground state tracked
ModelSpec double_well_mcww(const ScalarFunction& kappa, const ScalarFunction& omega,
                           const ScalarFunction& tilt = ScalarFunction::constant(0.0));
ModelSpec rotation_bifurcation(const ThetaPoly& theta, bool require_shape = true);
ModelSpec truncated_anharmonic(int n, int quad, const ScalarFunction& a, const ScalarFunction& b,
                               double basis_scale = 0.45);

ModelSpec builtin_model(const std::string& name, const ModelParams& params);
std::vector<std::string> builtin_model_names();

// x-independent diagonal model; p nonlinear slots that H ignores
ModelSpec diagonal_model(const std::vector<double>& diag, int p = 1, int selected = 0);
// H(t,x) = R(x) D R(x)^T, R = exp(x A) with A antisymmetric (p = 1)
ModelSpec rotated_diagonal_model(const std::vector<double>& diag, const RMat& A, int selected);
// H(t,x) = Q diag(lambda) Q^T + t C + sum_j x_j B_j, with ||B_j|| sized so that
// ||B_j|| <= rel_delta * gap on t, x_j in [0,1]
ModelSpec random_real_model(std::mt19937_64& rng, int n, int p, double rel_delta);

// sup over a uniform grid of ||d_xj H||
double measure_delta(const ModelSpec& m, double t0, double t1, int nt = 11, int nx = 11);
std::vector<ParameterPoint> uniform_grid(int p, double t0, double t1, int nt, double x0, double x1, int nx);

struct GaussHermite {
    RVec nodes;
    RVec scaled_weights; // w_i exp(y_i^2)
};
GaussHermite gauss_hermite(int m);
// normalized Hermite functions psi_0..psi_{n-1} at the given points (n x points)
RMat hermite_functions(int n, const RVec& y);

struct AnharmonicOperators {
    double L = 1.0;
    RMat kinetic, y1, y2, y8, h0;
};
AnharmonicOperators anharmonic_operators(int n, int quad, double basis_scale);

struct TruncationReport {
    std::vector<double> full, half;
    int agreeing = 0; // leading eigenvalues agreeing to 1e-6 relative
};
TruncationReport anharmonic_truncation(int n, int quad, double basis_scale);

// lambda_{j+1} - lambda_j ~ c0 j^alpha over the lowest `count` eigenvalues of H0 (j from 1)
struct GapFit {
    std::vector<double> gaps;
    double alpha = 0, c0 = 0, r2 = 0;
    double min_ratio = 0; // min_j gap_j / (c0 j^alpha)
};
GapFit anharmonic_gap_fit(int n, int quad, double basis_scale, int count = 20);

} // namespace nlad
