#pragma once

#include "nlad/eigenpath.hpp"
#include "nlad/model.hpp"

#include <random>
#include <vector>

namespace nlad {

// F = F0 + G on the doubled space (Delta, conj(Delta)), shifted so the tracked
// eigenvalue sits at 0.
struct DoubledOperator {
    double t = 0;
    int n = 0, p = 0;
    Vec omega;
    double lambda = 0;
    Mat H_shift;
    Mat F0, G, F;
    std::vector<Vec> v, mu, nu;
    SpectralDecomposition shifted; // of H_shift
    int kernel_index = -1;         // index of the eigenvalue 0 in `shifted`
};

DoubledOperator build_f(const ModelSpec& m, double t, const Vec& omega);
DoubledOperator build_f(const ModelSpec& m, const EigenPath& path, size_t k);
// Assembly from a shifted Hamiltonian, omega with H_shift omega = 0, and v_j (e_j standard basis).
DoubledOperator make_doubled(const Mat& H_shift, const Vec& omega, const std::vector<Vec>& v, double t = 0.0);

struct Cluster {
    cplx mean;
    std::vector<int> members;
    Mat projector;
    double nilpotent_norm = 0;
    double condition = 1; // ||projector||
    int label = 0;        // 0 kernel, +-j for the pairing l_{-j} = -l_j
};

struct BiorthogonalSpectrum {
    std::vector<cplx> eigenvalues; // sorted by real part, then imaginary part
    Mat right, left;               // columns; left normalised so <phi_j|psi_j> = 1
    std::vector<double> condition; // 1 / |<phi_j|psi_j>| for unit vectors
    std::vector<int> cluster_of;
    std::vector<Cluster> clusters;
    int kernel_cluster = -1;
    double cluster_tol = 0;
    double max_imag = 0;
    bool real_verdict = true;
    bool symmetric_pairing = false;

    Mat projector(int j) const { return right.col(j) * left.col(j).adjoint(); }
};

// cluster_tol < 0 selects 1e-6 ||F||
BiorthogonalSpectrum spectrum_f(const Mat& F, double cluster_tol = -1.0, bool throw_ill_conditioned = true);
inline BiorthogonalSpectrum spectrum_f(const DoubledOperator& op, double cluster_tol = -1.0,
                                       bool throw_ill_conditioned = true) {
    return spectrum_f(op.F, cluster_tol, throw_ill_conditioned);
}

// max distance from each eigenvalue off sigma(F0) to its partners conj(z), -z, -conj(z)
double quadruple_defect(const BiorthogonalSpectrum& s, const DoubledOperator& op, double off_tol = 1e-6);

cplx aw_determinant(const DoubledOperator& op, cplx z);

// p = 1: w(z) = wt(z) / prod_k (lambda_k^2 - z^2) over the distinct nonzero shifted eigenvalues
struct AWNumerator {
    std::vector<double> lambdas;
    std::vector<cplx> c;      // <e1|P_k v1>
    std::vector<cplx> a, b;   // residues conj(omega1) c_k and omega1 conj(c_k)
    std::vector<cplx> coeffs; // in z, increasing degree
    bool even = false;
    // product form; the monomial coefficients lose digits to cancellation
    cplx operator()(cplx z) const;
};
AWNumerator aw_numerator_p1(const DoubledOperator& op);
cplx aw_closed_form(const DoubledOperator& op, cplx z);
std::vector<cplx> aw_roots_p1(const DoubledOperator& op);
// zeros minus poles of w inside the circle, from the winding of w
int aw_winding(const DoubledOperator& op, cplx center, double radius, int samples = 512);

std::vector<cplx> polynomial_roots(const std::vector<cplx>& coeffs);

Mat kernel_projector(const DoubledOperator& op, double cluster_tol = -1.0);

struct P1Projector {
    Mat projector;
    cplx s;
    cplx identity;     // conj(omega_1) s_k <e1|P_k v1>, equal to 1
    double idempotency = 0;
};
// k: index of a nonzero distinct eigenvalue of H_shift
P1Projector p1_eigenprojector(const DoubledOperator& op, int k);

double realness_discriminant(const Vec& e1, const Vec& e2, const Vec& omega, const Vec& u1, const Vec& u2);

struct DiscriminantInstance {
    RVec omega;
    RMat P1, P2;
    std::vector<RVec> v;
    RMat e; // columns e_1, e_2
    double discriminant = 0;
    long draws = 0;
};

// Draws omega, a rank-2/rank-2 split of omega^perp and v_1, v_2 in omega^perp until the
// discriminant falls below `threshold`.
DiscriminantInstance search_negative_discriminant(std::mt19937_64& rng, int dim, long max_draws,
                                                  double threshold = 0.0);
double instance_discriminant(const DiscriminantInstance& inst, const RMat& e);
// H_shift = lambda1 P1 + lambda2 P2 with nonlinear directions e_1, e_2
DoubledOperator discriminant_operator(const DiscriminantInstance& inst, double lambda1, double lambda2);

struct SignFlip {
    RMat R;
    double discriminant = 0;
    long draws = 0;
    bool found = false;
};
// Orthogonal R with R omega = omega changing the sign of the discriminant.
SignFlip find_sign_flip(const DiscriminantInstance& inst, std::mt19937_64& rng, long max_draws);

} // namespace nlad
