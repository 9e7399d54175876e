#include "nlad/model.hpp"

#include <sstream>

namespace nlad {

namespace {

void check_domain(const ModelSpec& m, double t, const RVec& x) {
    const Domain& d = m.domain;
    if (!std::isfinite(t) || t < d.t_lo || t > d.t_hi) {
        std::ostringstream os;
        os << m.name << ": t=" << t << " outside [" << d.t_lo << ", " << d.t_hi << "]";
        throw Error(ErrorKind::OutOfDomain, os.str());
    }
    if (x.size() != m.p) throw Error(ErrorKind::OutOfDomain, m.name + ": wrong number of x components");
    for (int j = 0; j < x.size(); ++j) {
        if (!std::isfinite(x(j)) || x(j) < d.x_lo || x(j) > d.x_hi) {
            std::ostringstream os;
            os << m.name << ": x" << j + 1 << "=" << x(j) << " outside [" << d.x_lo << ", " << d.x_hi << "]";
            throw Error(ErrorKind::OutOfDomain, os.str());
        }
    }
}

void check_hermitian(const ModelSpec& m, const Mat& h) {
    double nrm = h.norm();
    double res = (h - h.adjoint()).norm();
    if (!(res <= 1e-12 * nrm)) {
        std::ostringstream os;
        os << m.name << ": Hermiticity residual " << res << " (norm " << nrm << ")";
        throw Error(ErrorKind::NonHermitian, os.str());
    }
    if (m.is_real) {
        double ri = h.imag().norm();
        if (!(ri <= 1e-12 * nrm)) {
            std::ostringstream os;
            os << m.name << ": declared real but conjugation residual is " << ri;
            throw Error(ErrorKind::NonHermitian, os.str());
        }
    }
}

} // namespace

Mat evaluate_h(const ModelSpec& m, double t, const RVec& x) {
    check_domain(m, t, x);
    Mat h = m.h(t, x);
    if (h.rows() != m.dim || h.cols() != m.dim)
        throw Error(ErrorKind::NonHermitian, m.name + ": wrong matrix size");
    check_hermitian(m, h);
    return h;
}

Mat evaluate_h(const ModelSpec& m, const ParameterPoint& q) { return evaluate_h(m, q.t, q.x); }

Mat dh_dx(const ModelSpec& m, double t, const RVec& x, int j) {
    if (j < 0 || j >= m.p) throw Error(ErrorKind::DerivativeUnavailable, "x index out of range");
    if (j < int(m.dh_dx.size()) && m.dh_dx[j]) return m.dh_dx[j](t, x);
    if (!m.h) throw Error(ErrorKind::DerivativeUnavailable, m.name + ": no Hamiltonian map");
    const double step = 1e-5 * (m.domain.x_hi - m.domain.x_lo);
    RVec xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    return (m.h(t, xp) - m.h(t, xm)) / (2.0 * step);
}

Mat dh_dt(const ModelSpec& m, double t, const RVec& x) {
    if (m.dh_dt) return m.dh_dt(t, x);
    if (!m.h) throw Error(ErrorKind::DerivativeUnavailable, m.name + ": no Hamiltonian map");
    const double step = 1e-5 * (m.domain.t_hi - m.domain.t_lo);
    return (m.h(t + step, x) - m.h(t - step, x)) / (2.0 * step);
}

Mat SpectralDecomposition::reduced_resolvent(int j) const {
    const int n = int(projectors.front().rows());
    Mat r = Mat::Zero(n, n);
    for (int k = 0; k < size(); ++k)
        if (k != j) r += projectors[k] / (eigenvalues[k] - eigenvalues[j]);
    return r;
}

SpectralDecomposition spectral_decompose(const Mat& h, double degeneracy_tol) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "Hermitian eigensolver failed");
    const RVec& ev = es.eigenvalues();
    const Mat& U = es.eigenvectors();
    const int n = int(ev.size());
    double scale = n ? std::max(std::abs(ev(0)), std::abs(ev(n - 1))) : 0.0;
    double tol = degeneracy_tol < 0 ? 1e-8 * scale : degeneracy_tol;

    SpectralDecomposition sd;
    int start = 0;
    for (int i = 1; i <= n; ++i) {
        if (i < n && ev(i) - ev(i - 1) <= tol) continue;
        int mlt = i - start;
        Mat B = U.middleCols(start, mlt);
        sd.eigenvalues.push_back(ev.segment(start, mlt).mean());
        sd.multiplicities.push_back(mlt);
        sd.projectors.push_back(B * B.adjoint());
        sd.bases.push_back(B);
        start = i;
    }
    for (int k = 1; k < sd.size(); ++k)
        sd.gap = std::min(sd.gap, sd.eigenvalues[k] - sd.eigenvalues[k - 1]);
    return sd;
}

Mat expm_hermitian(const Mat& h, double c) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    Vec ph = (-I * c * es.eigenvalues().cast<cplx>()).array().exp();
    return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

HypothesisReport validate_hypotheses(const ModelSpec& m, const std::vector<ParameterPoint>& grid,
                                     double min_gap) {
    if (grid.empty()) throw Error(ErrorKind::ConfigInvalid, "validate_hypotheses: empty grid");
    HypothesisReport rep;
    for (const auto& q : grid) {
        Mat h = m.h(q.t, q.x);
        double nrm = h.norm();
        if (nrm > 0) {
            rep.hermiticity_residual = std::max(rep.hermiticity_residual, (h - h.adjoint()).norm() / nrm);
            rep.realness_residual = std::max(rep.realness_residual, h.imag().norm() / nrm);
        }
        SpectralDecomposition sd = spectral_decompose(h);
        rep.gap = std::min(rep.gap, sd.gap);
        for (int j = 0; j < m.p; ++j) rep.delta = std::max(rep.delta, hermitian_norm(dh_dx(m, q.t, q.x, j)));

        const int j0 = m.selected_index;
        if (j0 >= sd.size() || sd.multiplicities[j0] != 1) {
            if (rep.simple_everywhere) {
                std::ostringstream os;
                os << "tracked eigenvalue not simple at t=" << q.t;
                rep.notes.push_back(os.str());
            }
            rep.simple_everywhere = false;
            ++rep.points;
            continue;
        }
        // sigma(H - lambda) and sigma(-H + lambda) may share only 0
        double tolg = 1e-8 * std::max(1.0, nrm);
        for (int k = 0; k < sd.size(); ++k) {
            if (k == j0) continue;
            for (int l = k; l < sd.size(); ++l) {
                if (l == j0) continue;
                double s = (sd.eigenvalues[k] - sd.eigenvalues[j0]) + (sd.eigenvalues[l] - sd.eigenvalues[j0]);
                if (std::abs(s) <= tolg) rep.generic_verdict = false;
            }
        }
        ++rep.points;
    }
    rep.real_verdict = rep.realness_residual <= 1e-12;
    rep.gap_violation = !(rep.gap > min_gap);
    if (rep.gap_violation) rep.notes.push_back("gap below requested minimum");
    rep.contraction_factor = std::isfinite(rep.gap) && rep.gap > 0 ? 8.0 * rep.delta / rep.gap
                                                                    : std::numeric_limits<double>::infinity();
    return rep;
}

namespace {

Vec fix_phase(Vec v) {
    Eigen::Index i;
    v.cwiseAbs().maxCoeff(&i);
    return v * (std::abs(v(i)) / v(i));
}

const SpectralDecomposition& require_simple(const SpectralDecomposition& sd, int index, double t) {
    if (index >= sd.size() || sd.multiplicities[index] != 1) {
        std::ostringstream os;
        os << "tracked eigenvalue " << index << " is not simple at t=" << t;
        throw Error(ErrorKind::SimplicityViolation, os.str());
    }
    return sd;
}

} // namespace

SmoothFrame make_frame(const ModelSpec& m, const ParameterPoint& q0, const Vec& phi0) {
    SmoothFrame f;
    f.anchor = q0;
    f.phi0 = phi0.normalized();
    f.index = m.selected_index;
    return f;
}

SmoothFrame make_frame(const ModelSpec& m, const ParameterPoint& q0) {
    SpectralDecomposition sd = spectral_decompose(evaluate_h(m, q0));
    require_simple(sd, m.selected_index, q0.t);
    return make_frame(m, q0, fix_phase(sd.bases[m.selected_index].col(0)));
}

Vec frame_vector(const SpectralDecomposition& sd, int index, const Vec& phi0, double* overlap) {
    Vec u = sd.projectors[index] * phi0;
    double n = u.norm();
    if (overlap) *overlap = n;
    if (n < 1e-12) throw Error(ErrorKind::AnchorDegenerate, "anchor vector orthogonal to the eigenspace");
    return u / n;
}

Vec smooth_eigenvector(SmoothFrame& frame, const ModelSpec& m, const ParameterPoint& q) {
    SpectralDecomposition sd = spectral_decompose(evaluate_h(m, q));
    require_simple(sd, frame.index, q.t);
    double ov = 0.0;
    Vec phi = frame_vector(sd, frame.index, frame.phi0, &ov);
    if (ov < frame.overlap_floor) {
        // splice: the new anchor is the current frame value, so phi is continuous at q
        std::ostringstream os;
        os << "re-anchor at t=" << q.t << " (overlap " << ov << ")";
        frame.events.push_back(os.str());
        frame.anchor = q;
        frame.phi0 = phi;
        ++frame.reanchors;
    }
    return phi;
}

} // namespace nlad
