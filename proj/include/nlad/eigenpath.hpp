#pragma once

#include "nlad/model.hpp"

#include <vector>

namespace nlad {

struct FixedPointConfig {
    int picard_max_iters = 400;
    double picard_tol = 1e-12;
    double newton_tol = 1e-12;
    int newton_max_iters = 40;
    double dt = 1e-2;              // continuation step
    int fold_detection_window = 5; // Picard stall window, also the sigma_min extrapolation window
    double stall_ratio = 0.9;
    double jump_tol = 0.05;        // max ||omega_k - omega_{k-1}|| accepted during continuation
};

struct FixedPointResult {
    Vec omega;
    double lambda = 0;
    double fixed_point_residual = 0; // ||omega - phi(t,[omega])||
    double eigen_residual = 0;       // ||H omega - lambda omega||
    int picard_iters = 0;
    int newton_iters = 0;
    bool used_newton = false;
    double sigma_min = 0;            // smallest singular value of the Newton Jacobian at omega
};

// phi(t,[v]) in the frame's gauge
Vec frame_map(const ModelSpec& m, const SmoothFrame& frame, double t, const Vec& v);
// Real 2N x 2N Jacobian of v -> v - phi(t,[v])
RMat fixed_point_jacobian(const ModelSpec& m, const SmoothFrame& frame, double t, const Vec& v);

FixedPointResult solve_fixed_point(const ModelSpec& m, SmoothFrame& frame, double t, const Vec& seed,
                                   const FixedPointConfig& cfg);

struct EigenPath {
    std::vector<double> times;
    std::vector<Vec> omega;
    std::vector<double> lambda, phase, residual, phase_defect, fixed_point_residual, sigma_min;
    double dt = 0; // signed step
    bool truncated = false;
    double t_fail = 0;
    bool fold = false;          // truncation classified as a fold
    double fold_estimate = 0;   // extrapolated zero of sigma_min^2 when available
    std::vector<std::string> events;

    size_t size() const { return times.size(); }
    std::vector<Vec> omega_dot() const; // central differences
};

// Continues from t0 towards t1 (either direction) on a uniform grid with step cfg.dt.
// A failed step ends the path with truncated = true.
EigenPath continue_path(const ModelSpec& m, SmoothFrame frame, double t0, double t1, const Vec& seed,
                        const FixedPointConfig& cfg);
// Same, on an explicit uniform grid.
EigenPath continue_path_on(const ModelSpec& m, SmoothFrame frame, const std::vector<double>& times,
                           const Vec& seed, const FixedPointConfig& cfg);
void require_complete(const EigenPath& path);

struct SolutionCount {
    int count = 0;
    std::vector<double> roots;
};

// Y - cos((t/2) theta(Y^2)) and its Y-derivative
double reduction_residual(const ModelSpec& m, double t, double Y);
double reduction_slope(const ModelSpec& m, double t, double Y);
Vec reduction_vector(const ModelSpec& m, double t, double Y);

SolutionCount count_solutions(const ModelSpec& m, double t, int grid_size = 2001);

struct FoldResult {
    double tau = 0;
    int count_below = 0, count_above = 0;
    double tangency_Y = 0, tangency_residual = 0, tangency_slope = 0;
    double sigma_min = 0; // general models only
    bool from_reduction = true;
};

// Scalar-reduction models: bisection on the solution count.
FoldResult detect_fold(const ModelSpec& m, double t0, double t1, const FixedPointConfig& cfg, int scan = 200);
// General models: continuation until the Newton Jacobian degenerates, then bisection
// on solvability of the branch.
FoldResult detect_fold(const ModelSpec& m, const SmoothFrame& frame, const Vec& seed, double t0, double t1,
                       const FixedPointConfig& cfg);

} // namespace nlad
