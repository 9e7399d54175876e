#include "nlad/transport.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>

namespace nlad {

double TransportBundle::max_intertwining() const {
    double r = 0;
    for (const auto& row : intertwining_residuals)
        for (double x : row) r = std::max(r, x);
    return r;
}

TransportBundle build_bundle(const std::vector<double>& times, const std::vector<Mat>& F, double cluster_tol) {
    if (times.size() != F.size() || times.size() < 3)
        throw Error(ErrorKind::ConfigInvalid, "bundle needs at least 3 samples with matching times");
    TransportBundle b;
    b.times = times;
    b.dt = times[1] - times[0];
    b.F = F;

    BiorthogonalSpectrum s0 = spectrum_f(F[0], cluster_tol);
    const int nc = int(s0.clusters.size());
    b.P.assign(nc, {});
    b.ell.assign(nc, {});
    for (int j = 0; j < nc; ++j) {
        b.P[j].push_back(s0.clusters[j].projector);
        b.ell[j].push_back(s0.clusters[j].mean);
        b.labels.push_back(s0.clusters[j].label);
    }
    b.kernel = s0.kernel_cluster;
    b.max_imag = s0.max_imag;

    for (size_t k = 1; k < F.size(); ++k) {
        BiorthogonalSpectrum s = spectrum_f(F[k], cluster_tol);
        b.max_imag = std::max(b.max_imag, s.max_imag);
        if (int(s.clusters.size()) != nc) {
            std::ostringstream os;
            os << "cluster count changed from " << nc << " to " << s.clusters.size() << " at t=" << times[k];
            throw Error(ErrorKind::TrackingBroken, os.str());
        }
        std::vector<bool> taken(nc, false);
        for (int j = 0; j < nc; ++j) {
            const Mat& prev = b.P[j].back();
            double rank = std::max(1.0, std::abs(prev.trace()));
            double best = -1;
            int arg = -1;
            for (int c = 0; c < nc; ++c) {
                if (taken[c]) continue;
                double ov = std::abs((prev * s.clusters[c].projector).trace()) / rank;
                if (ov > best) {
                    best = ov;
                    arg = c;
                }
            }
            b.min_overlap = std::min(b.min_overlap, best);
            if (best < 0.5) {
                std::ostringstream os;
                os << "cluster " << j << " lost at t=" << times[k] << " (overlap " << best << ")";
                throw Error(ErrorKind::TrackingBroken, os.str());
            }
            taken[arg] = true;
            b.P[j].push_back(s.clusters[arg].projector);
            b.ell[j].push_back(s.clusters[arg].mean);
        }
    }
    integrate_intertwiner(b);
    return b;
}

TransportBundle build_bundle(const ModelSpec& m, const EigenPath& path, double cluster_tol) {
    require_complete(path);
    std::vector<Mat> F;
    for (size_t k = 0; k < path.size(); ++k) F.push_back(build_f(m, path, k).F);
    TransportBundle b = build_bundle(path.times, F, cluster_tol);
    b.omega = path.omega;
    for (const Vec& d : path.omega_dot()) {
        Vec c(2 * d.size());
        c << d, d.conjugate();
        b.chi.push_back(c);
    }
    return b;
}

Mat kato_generator(const TransportBundle& b, size_t k) {
    const size_t n = b.size();
    const double h = b.dt;
    Mat K = Mat::Zero(b.F[0].rows(), b.F[0].cols());
    for (const auto& Pj : b.P) {
        Mat d;
        if (k == 0)
            d = (-3.0 * Pj[0] + 4.0 * Pj[1] - Pj[2]) / (2 * h);
        else if (k + 1 == n)
            d = (Pj[n - 3] - 4.0 * Pj[n - 2] + 3.0 * Pj[n - 1]) / (2 * h);
        else
            d = (Pj[k + 1] - Pj[k - 1]) / (2 * h);
        K += I * d * Pj[k];
    }
    return K;
}

namespace {

// K at t_{k+1/2} from the two neighbouring samples
Mat kato_half(const TransportBundle& b, size_t k) {
    Mat K = Mat::Zero(b.F[0].rows(), b.F[0].cols());
    for (const auto& Pj : b.P) K += I * (Pj[k + 1] - Pj[k]) / b.dt * (0.5 * (Pj[k] + Pj[k + 1]));
    return K;
}

} // namespace

void integrate_intertwiner(TransportBundle& b) {
    const size_t n = b.size();
    const int dim = int(b.F[0].rows());
    b.K.clear();
    for (size_t k = 0; k < n; ++k) b.K.push_back(kato_generator(b, k));
    b.k_diagonal_defect = 0;
    for (const auto& Pj : b.P)
        for (size_t k = 0; k < n; ++k) b.k_diagonal_defect = std::max(b.k_diagonal_defect, opnorm(Pj[k] * b.K[k] * Pj[k]));

    b.W.assign(1, Mat::Identity(dim, dim));
    const double h = b.dt;
    for (size_t k = 0; k + 1 < n; ++k) {
        Mat Kh = kato_half(b, k);
        const Mat& W = b.W.back();
        Mat k1 = -I * b.K[k] * W;
        Mat k2 = -I * Kh * (W + 0.5 * h * k1);
        Mat k3 = -I * Kh * (W + 0.5 * h * k2);
        Mat k4 = -I * b.K[k + 1] * (W + h * k3);
        b.W.push_back(W + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    b.Winv.clear();
    b.w_condition.clear();
    for (const Mat& W : b.W) {
        b.Winv.push_back(W.partialPivLu().inverse());
        b.w_condition.push_back(opnorm(W) * opnorm(b.Winv.back()));
    }
    b.intertwining_residuals.assign(b.P.size(), {});
    for (size_t j = 0; j < b.P.size(); ++j)
        for (size_t k = 0; k < n; ++k)
            b.intertwining_residuals[j].push_back(opnorm(b.P[j][k] * b.W[k] - b.W[k] * b.P[j][0]));

    b.Lambda.assign(b.P.size(), {});
    for (size_t j = 0; j < b.P.size(); ++j) {
        std::vector<double> re;
        for (const cplx& l : b.ell[j]) re.push_back(int(j) == b.kernel ? 0.0 : l.real());
        b.Lambda[j] = cumulative_simpson(re, h);
    }
}

namespace {

void require_real(const TransportBundle& b) {
    double scale = 1.0;
    for (const Mat& f : b.F) scale = std::max(scale, f.cwiseAbs().maxCoeff());
    if (b.max_imag > 1e-8 * scale) {
        std::ostringstream os;
        os << "tracked spectrum has |Im l| = " << b.max_imag;
        throw Error(ErrorKind::NonRealEigenvaluePath, os.str());
    }
}

} // namespace

Mat dynamical_phase(const TransportBundle& b, double eps, size_t kt, size_t ks) {
    require_real(b);
    Mat phi = Mat::Zero(b.F[0].rows(), b.F[0].cols());
    for (size_t j = 0; j < b.P.size(); ++j)
        phi += std::exp(-I * (b.Lambda[j][kt] - b.Lambda[j][ks]) / eps) * b.P[j][0];
    return phi;
}

Mat comparison_operator(const TransportBundle& b, double eps, size_t kt, size_t ks) {
    return b.W[kt] * dynamical_phase(b, eps, kt, ks) * b.Winv[ks];
}

namespace {

// T(t_to, t_from) along the grid, sampled at every grid point passed
std::vector<Mat> evolve(const TransportBundle& b, double eps, double dt_factor, size_t from, size_t to, long* steps) {
    const int dim = int(b.F[0].rows());
    const double hmax = eps / dt_factor;
    const int m = std::max(1, int(std::ceil(std::abs(b.dt) / hmax - 1e-9)));
    const int dir = to >= from ? 1 : -1;
    std::vector<Mat> out{Mat::Identity(dim, dim)};
    Mat T = out.front();
    for (size_t k = from; k != to; k += dir) {
        const Mat& Fa = b.F[k];
        const Mat& Fb = b.F[k + dir];
        const double h = (b.times[k + dir] - b.times[k]) / m;
        for (int i = 0; i < m; ++i) {
            double s = (i + 0.5) / m;
            Mat Fm = (1 - s) * Fa + s * Fb;
            Mat A = (-I * h / eps) * Fm;
            T = A.exp() * T;
            if (steps) ++*steps;
        }
        out.push_back(T);
    }
    return out;
}

} // namespace

TrueEvolution true_evolution(const TransportBundle& b, double eps, double dt_factor) {
    if (!(eps > 0) || !(dt_factor > 0)) throw Error(ErrorKind::ConfigInvalid, "epsilon and dt_factor must be > 0");
    // phase advanced per substep, h ||F|| / eps with h = eps / dt_factor
    double fmax = 0;
    for (const Mat& f : b.F) fmax = std::max(fmax, opnorm(f));
    if (fmax / dt_factor > 1.0) {
        std::ostringstream os;
        os << "step phase " << fmax / dt_factor << " exceeds 1 (dt_factor " << dt_factor << ")";
        throw Error(ErrorKind::StepTooLarge, os.str());
    }
    TrueEvolution te;
    te.epsilon = eps;
    te.T = evolve(b, eps, dt_factor, 0, b.size() - 1, &te.steps);
    std::vector<Mat> back = evolve(b, eps, dt_factor, b.size() - 1, 0, nullptr);
    const int dim = int(b.F[0].rows());
    te.inversion_defect = opnorm(back.back() * te.T.back() - Mat::Identity(dim, dim));
    return te;
}

std::vector<double> source_integral(const TransportBundle& b, double eps, double inject) {
    if (b.chi.size() != b.size()) throw Error(ErrorKind::ConfigInvalid, "bundle carries no eigenpath derivative");
    require_real(b);
    const size_t n = b.size();
    std::vector<Vec> chi = b.chi;
    if (inject != 0.0)
        for (size_t k = 0; k < n; ++k) {
            Vec g(chi[k].size());
            g << I * b.omega[k], -I * b.omega[k].conjugate();
            chi[k] += inject * g;
        }
    std::vector<Vec> total(n, Vec::Zero(chi[0].size()));
    for (size_t j = 0; j < b.P.size(); ++j) {
        std::vector<Vec> f;
        for (size_t k = 0; k < n; ++k) f.push_back(std::exp(I * b.Lambda[j][k] / eps) * (b.P[j][0] * (b.Winv[k] * chi[k])));
        std::vector<Vec> S = cumulative_simpson(f, b.dt);
        for (size_t k = 0; k < n; ++k) total[k] += std::exp(-I * b.Lambda[j][k] / eps) * S[k];
    }
    std::vector<double> out;
    for (size_t k = 0; k < n; ++k) out.push_back((b.W[k] * total[k]).norm());
    return out;
}

AdiabaticComparison compare_one(const TransportBundle& b, double eps, double dt_factor) {
    require_real(b);
    AdiabaticComparison c;
    c.epsilon = eps;
    TrueEvolution te = true_evolution(b, eps, dt_factor);
    c.inversion_defect = te.inversion_defect;
    for (size_t k = 0; k < b.size(); ++k) {
        double d = opnorm(te.T[k] - comparison_operator(b, eps, k, 0));
        double tn = opnorm(te.T[k]);
        c.defect.push_back(d);
        c.T_norm.push_back(tn);
        c.sup_defect = std::max(c.sup_defect, d);
        c.uniform_bound = std::max(c.uniform_bound, tn);
    }
    if (b.chi.size() == b.size()) {
        c.source_integral = source_integral(b, eps);
        for (double x : c.source_integral) c.sup_source = std::max(c.sup_source, x);
    }
    return c;
}

ComparisonSweep compare_adiabatic(const TransportBundle& b, const std::vector<double>& eps_list, double dt_factor,
                                  int jobs) {
    ComparisonSweep sw;
    sw.runs.resize(eps_list.size());
    if (jobs <= 1) {
        for (size_t i = 0; i < eps_list.size(); ++i) sw.runs[i] = compare_one(b, eps_list[i], dt_factor);
    } else {
        for (size_t start = 0; start < eps_list.size(); start += size_t(jobs)) {
            std::vector<std::future<AdiabaticComparison>> fut;
            for (size_t i = start; i < std::min(eps_list.size(), start + size_t(jobs)); ++i)
                fut.push_back(std::async(std::launch::async, compare_one, std::cref(b), eps_list[i], dt_factor));
            for (size_t i = 0; i < fut.size(); ++i) sw.runs[start + i] = fut[i].get();
        }
    }
    std::vector<double> d, s;
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (const auto& r : sw.runs) {
        d.push_back(r.sup_defect);
        s.push_back(r.sup_source);
        lo = std::min(lo, r.uniform_bound);
        hi = std::max(hi, r.uniform_bound);
    }
    if (eps_list.size() >= 2) {
        sw.defect_fit = loglog_fit(eps_list, d);
        if (b.chi.size() == b.size()) sw.source_fit = loglog_fit(eps_list, s);
    }
    sw.uniform_variation = hi > 0 ? (hi - lo) / hi : 0.0;
    return sw;
}

SourceIntegralReport source_integral_check(const TransportBundle& b, const std::vector<double>& eps_list,
                                           double inject) {
    SourceIntegralReport r;
    if (b.kernel >= 0)
        for (size_t k = 0; k < b.size(); ++k)
            r.kernel_component = std::max(r.kernel_component, (b.P[b.kernel][k] * b.chi[k]).norm());
    for (double eps : eps_list) {
        auto sup = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
        r.epsilon.push_back(eps);
        r.sup.push_back(sup(source_integral(b, eps)));
        r.control_sup.push_back(sup(source_integral(b, eps, inject)));
    }
    if (eps_list.size() >= 2) {
        r.fit = loglog_fit(r.epsilon, r.sup);
        r.control_fit = loglog_fit(r.epsilon, r.control_sup);
    }
    return r;
}

} // namespace nlad
