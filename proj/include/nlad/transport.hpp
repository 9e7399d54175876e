#pragma once

#include "nlad/eigenpath.hpp"
#include "nlad/linearized.hpp"
#include "nlad/model.hpp"
#include "nlad/quadrature.hpp"

#include <vector>

namespace nlad {

// Spectral data of F(t) on a uniform grid with clusters tracked by projector overlap.
struct TransportBundle {
    std::vector<double> times;
    double dt = 0;
    std::vector<Mat> F;
    std::vector<std::vector<Mat>> P;    // P[j][k]
    std::vector<std::vector<cplx>> ell; // cluster means ell[j][k]
    std::vector<std::vector<double>> Lambda; // int_0^t Re ell_j, filled by integrate_intertwiner
    std::vector<int> labels;
    int kernel = -1;
    double min_overlap = 1;
    double max_imag = 0;
    std::vector<Mat> K, W, Winv;
    std::vector<std::vector<double>> intertwining_residuals; // [j][k]
    std::vector<double> w_condition;
    double k_diagonal_defect = 0; // max ||P_j K P_j||

    // filled when built from an eigenpath
    std::vector<Vec> omega, chi; // chi = (omega', conj(omega'))

    size_t size() const { return times.size(); }
    int clusters() const { return int(P.size()); }
    double max_intertwining() const;
};

// Tracks clusters of the given samples; throws TrackingBroken when a cluster has no
// successor with overlap >= 0.5.
TransportBundle build_bundle(const std::vector<double>& times, const std::vector<Mat>& F, double cluster_tol = -1.0);
TransportBundle build_bundle(const ModelSpec& m, const EigenPath& path, double cluster_tol = -1.0);

// i sum_j P_j' P_j at grid point k
Mat kato_generator(const TransportBundle& b, size_t k);
// RK4 for i W' = K W, W(t0) = Id; attaches residuals, W^{-1} and the phase integrals.
void integrate_intertwiner(TransportBundle& b);

// sum_j P_j(t0) exp(-(i/eps) int_s^t ell_j) between grid points
Mat dynamical_phase(const TransportBundle& b, double eps, size_t kt, size_t ks);
// W(t) Phi(t,s) W(s)^{-1}
Mat comparison_operator(const TransportBundle& b, double eps, size_t kt, size_t ks);

struct TrueEvolution {
    double epsilon = 0;
    std::vector<Mat> T; // T(t_k, t_0)
    double inversion_defect = 0; // ||T(t0,t_end) T(t_end,t0) - Id||
    long steps = 0;
};
// Exponential midpoint for i eps T' = F T, F linear between samples, step <= eps / dt_factor.
// StepTooLarge when max ||F|| / dt_factor > 1.
TrueEvolution true_evolution(const TransportBundle& b, double eps, double dt_factor = 40.0);

struct AdiabaticComparison {
    double epsilon = 0;
    std::vector<double> defect, T_norm, source_integral;
    double sup_defect = 0, uniform_bound = 0, sup_source = 0;
    double inversion_defect = 0;
};

struct ComparisonSweep {
    std::vector<AdiabaticComparison> runs;
    LinearFit defect_fit, source_fit;
    double uniform_variation = 0; // (max - min) / max of the uniform bounds
};

// ||int_0^t V(t,s) chi(s) ds|| on the grid; inject adds c (i omega, -i conj(omega)) to chi
std::vector<double> source_integral(const TransportBundle& b, double eps, double inject = 0.0);

AdiabaticComparison compare_one(const TransportBundle& b, double eps, double dt_factor = 40.0);
ComparisonSweep compare_adiabatic(const TransportBundle& b, const std::vector<double>& eps_list,
                                  double dt_factor = 40.0, int jobs = 1);

struct SourceIntegralReport {
    std::vector<double> epsilon, sup, control_sup;
    LinearFit fit, control_fit;
    double kernel_component = 0; // max ||P_0 chi||
};
SourceIntegralReport source_integral_check(const TransportBundle& b, const std::vector<double>& eps_list,
                                           double inject = 1.0);

} // namespace nlad
