#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace nlad {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr cplx I{0.0, 1.0};

enum class ErrorKind {
    NonHermitian,
    OutOfDomain,
    GapViolation,
    SimplicityViolation,
    AnchorDegenerate,
    UnknownModel,
    TruncationTooSmall,
    NoConvergence,
    DomainExit,
    PathTruncated,
    NoFoldInRange,
    InnerIterationDiverged,
    StepTooLarge,
    InvalidInitialData,
    DerivativeUnavailable,
    IllConditioned,
    TooCloseToUnperturbedSpectrum,
    NotScalarNonlinearity,
    GapTooSmall,
    NumeratorVanishes,
    ConstraintViolated,
    TrackingBroken,
    NonRealEigenvaluePath,
    ConfigInvalid,
    IoFailure,
};

const char* to_string(ErrorKind k);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ParameterPoint {
    double t = 0.0;
    RVec x;
};

// [v] = (|v_1|^2, ..., |v_p|^2)
inline RVec populations(const Vec& v, int p) {
    RVec x(p);
    for (int j = 0; j < p; ++j) x(j) = std::norm(v(j));
    return x;
}

inline double opnorm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

inline double hermitian_norm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace nlad
