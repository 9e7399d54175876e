#include "nlad/types.hpp"

namespace nlad {

const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::NonHermitian: return "NonHermitian";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::GapViolation: return "GapViolation";
    case ErrorKind::SimplicityViolation: return "SimplicityViolation";
    case ErrorKind::AnchorDegenerate: return "AnchorDegenerate";
    case ErrorKind::UnknownModel: return "UnknownModel";
    case ErrorKind::TruncationTooSmall: return "TruncationTooSmall";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DomainExit: return "DomainExit";
    case ErrorKind::PathTruncated: return "PathTruncated";
    case ErrorKind::NoFoldInRange: return "NoFoldInRange";
    case ErrorKind::InnerIterationDiverged: return "InnerIterationDiverged";
    case ErrorKind::StepTooLarge: return "StepTooLarge";
    case ErrorKind::InvalidInitialData: return "InvalidInitialData";
    case ErrorKind::DerivativeUnavailable: return "DerivativeUnavailable";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::TooCloseToUnperturbedSpectrum: return "TooCloseToUnperturbedSpectrum";
    case ErrorKind::NotScalarNonlinearity: return "NotScalarNonlinearity";
    case ErrorKind::GapTooSmall: return "GapTooSmall";
    case ErrorKind::NumeratorVanishes: return "NumeratorVanishes";
    case ErrorKind::ConstraintViolated: return "ConstraintViolated";
    case ErrorKind::TrackingBroken: return "TrackingBroken";
    case ErrorKind::NonRealEigenvaluePath: return "NonRealEigenvaluePath";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

} // namespace nlad
