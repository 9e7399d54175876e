#pragma once

#include "nlad/types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace nlad {

using HamiltonianFn = std::function<Mat(double t, const RVec& x)>;

struct Domain {
    double t_lo = -1.0, t_hi = 2.0;
    double x_lo = -0.25, x_hi = 1.25;
};

// theta(s) for the rotation family, where the eigenvector equation reduces to
// Y = cos((t/2) theta(Y^2)).
struct ScalarReduction {
    std::function<double(double)> theta;
    std::function<double(double)> dtheta;
};

struct ModelSpec {
    std::string name;
    int dim = 0;
    int p = 1;
    HamiltonianFn h;
    std::vector<HamiltonianFn> dh_dx; // empty entries fall back to finite differences
    HamiltonianFn dh_dt;
    bool is_real = false;
    double delta_bound = 0.0;
    int selected_index = 0; // index into the distinct sorted eigenvalues
    Domain domain;
    std::optional<ScalarReduction> reduction;
};

Mat evaluate_h(const ModelSpec& m, const ParameterPoint& q);
Mat evaluate_h(const ModelSpec& m, double t, const RVec& x);
inline Mat evaluate_h_at(const ModelSpec& m, double t, const Vec& v) {
    return evaluate_h(m, t, populations(v, m.p));
}

// d/dx_j H and d/dt H; central differences (step 1e-5 times the box width)
// when the model carries no analytic derivative.
Mat dh_dx(const ModelSpec& m, double t, const RVec& x, int j);
Mat dh_dt(const ModelSpec& m, double t, const RVec& x);

struct SpectralDecomposition {
    std::vector<double> eigenvalues;  // distinct, ascending
    std::vector<int> multiplicities;
    std::vector<Mat> projectors;
    std::vector<Mat> bases;           // orthonormal columns spanning each eigenspace
    double gap = std::numeric_limits<double>::infinity();

    int size() const { return int(eigenvalues.size()); }
    // sum_{k != j} P_k / (lambda_k - lambda_j)
    Mat reduced_resolvent(int j) const;
};

// degeneracy_tol < 0 selects 1e-8 * ||h||.
SpectralDecomposition spectral_decompose(const Mat& h, double degeneracy_tol = -1.0);

// exp(-i c h) for Hermitian h, through its eigendecomposition.
Mat expm_hermitian(const Mat& h, double c);

struct HypothesisReport {
    double gap = std::numeric_limits<double>::infinity(); // min adjacent separation over grid
    double delta = 0.0;                                   // max ||d_xj H|| over grid
    double hermiticity_residual = 0.0;                    // max relative
    double realness_residual = 0.0;
    bool simple_everywhere = true;
    bool real_verdict = true;
    bool generic_verdict = true;
    bool gap_violation = false;
    double contraction_factor = 0.0; // 8 delta / g
    int points = 0;
    std::vector<std::string> notes;
};

HypothesisReport validate_hypotheses(const ModelSpec& m, const std::vector<ParameterPoint>& grid,
                                     double min_gap = 0.0);

inline const double kOverlapFloor = std::pow(2.0, -0.25);

struct SmoothFrame {
    ParameterPoint anchor;
    Vec phi0;
    int index = 0;
    double overlap_floor = kOverlapFloor;
    int reanchors = 0;
    std::vector<std::string> events;
};

SmoothFrame make_frame(const ModelSpec& m, const ParameterPoint& q0, const Vec& phi0);
// Frame anchored at q0 on the model's selected eigenvector (sign fixed by a
// nonnegative real largest component).
SmoothFrame make_frame(const ModelSpec& m, const ParameterPoint& q0);

// P(q) phi0 / ||P(q) phi0||, re-anchoring at q when the overlap drops below the floor.
Vec smooth_eigenvector(SmoothFrame& frame, const ModelSpec& m, const ParameterPoint& q);
// Same map without touching the frame; the caller handles low overlap.
Vec frame_vector(const SpectralDecomposition& sd, int index, const Vec& phi0, double* overlap = nullptr);

} // namespace nlad
