#include "nlad/eigenpath.hpp"

#include "nlad/quadrature.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace nlad {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Eigen-solve once, expose what the fixed-point map and its Jacobian need.
struct TrackedSpace {
    Eigen::SelfAdjointEigenSolver<Mat> es;
    int first = 0, mult = 0;
    double lambda = 0;

    TrackedSpace(const Mat& h, int index) : es(h) {
        const RVec& ev = es.eigenvalues();
        const int n = int(ev.size());
        double tol = 1e-8 * std::max(std::abs(ev(0)), std::abs(ev(n - 1)));
        int group = 0, start = 0;
        for (int i = 1; i <= n; ++i) {
            if (i < n && ev(i) - ev(i - 1) <= tol) continue;
            if (group == index) {
                first = start;
                mult = i - start;
                lambda = ev.segment(start, mult).mean();
                break;
            }
            ++group;
            start = i;
        }
        if (mult != 1) {
            std::ostringstream os;
            os << "tracked eigenvalue " << index << (mult == 0 ? " does not exist" : " is not simple");
            throw Error(ErrorKind::SimplicityViolation, os.str());
        }
    }
    Vec project(const Vec& v) const {
        auto b = es.eigenvectors().col(first);
        return b * b.dot(v);
    }
    Vec resolvent_apply(const Vec& v) const {
        const Mat& U = es.eigenvectors();
        Vec c = U.adjoint() * v;
        for (int i = 0; i < c.size(); ++i)
            c(i) = (i == first) ? cplx(0) : c(i) / (es.eigenvalues()(i) - lambda);
        return U * c;
    }
};

Vec map_from_space(const TrackedSpace& sp, const Vec& phi0, double* nrm = nullptr) {
    Vec u = sp.project(phi0);
    double n = u.norm();
    if (nrm) *nrm = n;
    if (n < 1e-12) throw Error(ErrorKind::AnchorDegenerate, "anchor orthogonal to the tracked eigenspace");
    return u / n;
}

RVec to_real(const Vec& v) {
    RVec r(2 * v.size());
    r << v.real(), v.imag();
    return r;
}

Vec to_complex(const RVec& r) {
    const int n = int(r.size() / 2);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = cplx(r(i), r(n + i));
    return v;
}

} // namespace

Vec frame_map(const ModelSpec& m, const SmoothFrame& frame, double t, const Vec& v) {
    TrackedSpace sp(evaluate_h_at(m, t, v), frame.index);
    return map_from_space(sp, frame.phi0);
}

RMat fixed_point_jacobian(const ModelSpec& m, const SmoothFrame& frame, double t, const Vec& v) {
    const int n = int(v.size());
    RVec x = populations(v, m.p);
    TrackedSpace sp(evaluate_h(m, t, x), frame.index);
    Vec u = sp.project(frame.phi0);
    double un = u.norm();
    Vec Rphi0 = sp.resolvent_apply(frame.phi0);
    RMat J = RMat::Identity(2 * n, 2 * n);
    for (int j = 0; j < m.p; ++j) {
        Mat D = dh_dx(m, t, x, j);
        // dP = -(R D P + P D R)
        Vec du = -(sp.resolvent_apply(D * u) + sp.project(D * Rphi0));
        Vec dphi = du / un - u * (u.dot(du).real() / (un * un * un));
        RVec col = to_real(dphi);
        // d x_j / d(Re v_j) = 2 Re v_j, d x_j / d(Im v_j) = 2 Im v_j
        J.col(j) -= col * (2.0 * v(j).real());
        J.col(n + j) -= col * (2.0 * v(j).imag());
    }
    return J;
}

FixedPointResult solve_fixed_point(const ModelSpec& m, SmoothFrame& frame, double t, const Vec& seed,
                                   const FixedPointConfig& cfg) {
    FixedPointResult res;
    ParameterPoint q0{t, populations(seed, m.p)};
    Vec v = smooth_eigenvector(frame, m, q0);

    auto check_domain = [&](const Vec& w) {
        RVec x = populations(w, m.p);
        for (int j = 0; j < x.size(); ++j)
            if (x(j) < m.domain.x_lo || x(j) > m.domain.x_hi)
                throw Error(ErrorKind::DomainExit, "[omega] left the parameter box");
    };

    Vec best = v;
    double best_r = std::numeric_limits<double>::infinity();
    double prev_r = std::numeric_limits<double>::infinity();
    int stalled = 0;
    bool converged = false;
    for (int it = 0; it < cfg.picard_max_iters; ++it) {
        check_domain(v);
        Vec w = frame_map(m, frame, t, v);
        double r = (w - v).norm();
        ++res.picard_iters;
        if (r < best_r) {
            best_r = r;
            best = v;
        }
        if (r <= cfg.picard_tol) {
            v = w;
            converged = true;
            break;
        }
        if (!std::isfinite(r)) break;
        stalled = (r > cfg.stall_ratio * prev_r) ? stalled + 1 : 0;
        if (stalled >= cfg.fold_detection_window) break;
        prev_r = r;
        v = w;
    }

    if (!converged) {
        // Newton on v - phi(t,[v]) from the best Picard iterate
        res.used_newton = true;
        v = best;
        for (int it = 0; it < cfg.newton_max_iters; ++it) {
            check_domain(v);
            Vec Jv = v - frame_map(m, frame, t, v);
            ++res.newton_iters;
            if (Jv.norm() <= cfg.newton_tol) {
                converged = true;
                break;
            }
            RMat DJ = fixed_point_jacobian(m, frame, t, v);
            RVec step = DJ.colPivHouseholderQr().solve(-to_real(Jv));
            if (!step.allFinite()) break;
            v += to_complex(step);
        }
        if (!converged) {
            std::ostringstream os;
            os << "fixed point at t=" << t << " not found (Picard " << res.picard_iters << ", Newton "
               << res.newton_iters << " iterations)";
            throw Error(ErrorKind::NoConvergence, os.str());
        }
        v = frame_map(m, frame, t, v);
    }

    res.omega = v;
    Mat h = evaluate_h_at(m, t, v);
    Vec hv = h * v;
    res.lambda = v.dot(hv).real();
    res.eigen_residual = (hv - res.lambda * v).norm();
    res.fixed_point_residual = (v - frame_map(m, frame, t, v)).norm();
    if (res.used_newton) {
        Eigen::JacobiSVD<RMat> svd(fixed_point_jacobian(m, frame, t, v));
        res.sigma_min = svd.singularValues().minCoeff();
    } else {
        res.sigma_min = kNaN;
    }
    return res;
}

std::vector<Vec> EigenPath::omega_dot() const { return grid_derivative(omega, dt); }

void require_complete(const EigenPath& path) {
    if (path.truncated) {
        std::ostringstream os;
        os << "path truncated at t=" << path.t_fail << (path.fold ? " (fold)" : " (solver failure)");
        throw Error(ErrorKind::PathTruncated, os.str());
    }
}

EigenPath continue_path_on(const ModelSpec& m, SmoothFrame frame, const std::vector<double>& times, const Vec& seed,
                           const FixedPointConfig& cfg) {
    EigenPath path;
    if (times.empty()) return path;
    path.dt = times.size() > 1 ? times[1] - times[0] : cfg.dt;

    std::vector<Vec> raw;
    FixedPointResult first = solve_fixed_point(m, frame, times[0], seed, cfg);
    raw.push_back(first.omega);
    path.times.push_back(times[0]);
    path.fixed_point_residual.push_back(first.fixed_point_residual);
    path.sigma_min.push_back(first.sigma_min);

    for (size_t k = 1; k < times.size(); ++k) {
        const Vec& prev = raw.back();
        SmoothFrame f = frame;
        f.anchor = {path.times.back(), populations(prev, m.p)};
        f.phi0 = prev;
        try {
            FixedPointResult r = solve_fixed_point(m, f, times[k], prev, cfg);
            if ((r.omega - prev).norm() > cfg.jump_tol) {
                std::ostringstream os;
                os << "branch jump rejected at t=" << times[k] << " (step " << (r.omega - prev).norm() << ")";
                path.events.push_back(os.str());
                path.truncated = true;
            } else {
                raw.push_back(r.omega);
                path.times.push_back(times[k]);
                path.fixed_point_residual.push_back(r.fixed_point_residual);
                path.sigma_min.push_back(r.sigma_min);
            }
        } catch (const Error& e) {
            path.events.push_back(e.what());
            path.truncated = true;
        }
        if (path.truncated) {
            path.t_fail = times[k];
            break;
        }
    }

    // parallel-transport gauge: omega = omega~ exp(-i int Im<omega~|omega~'>)
    const size_t n = raw.size();
    std::vector<double> conn(n, 0.0);
    if (n >= 2) {
        std::vector<Vec> d = grid_derivative(raw, path.dt);
        for (size_t k = 0; k < n; ++k) conn[k] = raw[k].dot(d[k]).imag();
    }
    std::vector<double> ang = cumulative_trapezoid(conn, path.dt);
    for (size_t k = 0; k < n; ++k) path.omega.push_back(raw[k] * std::exp(-I * ang[k]));

    for (size_t k = 0; k < n; ++k) {
        const Vec& w = path.omega[k];
        Mat h = evaluate_h_at(m, path.times[k], w);
        Vec hw = h * w;
        double lam = w.dot(hw).real();
        path.lambda.push_back(lam);
        path.residual.push_back((hw - lam * w).norm());
    }
    path.phase = cumulative_simpson(path.lambda, path.dt);
    std::vector<Vec> wd = path.omega_dot();
    for (size_t k = 0; k < n; ++k) path.phase_defect.push_back(n >= 2 ? std::abs(path.omega[k].dot(wd[k])) : 0.0);

    if (path.truncated) {
        // Picard may have converged right up to the end, so fill in the Jacobian there
        const size_t window = size_t(std::max(2, cfg.fold_detection_window));
        for (size_t k = n; k-- > 0 && n - k <= window;) {
            if (!std::isnan(path.sigma_min[k])) continue;
            SmoothFrame f = frame;
            f.anchor = {path.times[k], populations(raw[k], m.p)};
            f.phi0 = raw[k];
            Eigen::JacobiSVD<RMat> svd(fixed_point_jacobian(m, f, path.times[k], raw[k]));
            path.sigma_min[k] = svd.singularValues().minCoeff();
        }
        // fold: sigma_min collapses, or sigma_min^2 extrapolates to zero right past the last point
        std::vector<double> ts, s2;
        for (size_t k = n; k-- > 0 && ts.size() < size_t(std::max(2, cfg.fold_detection_window));) {
            if (std::isnan(path.sigma_min[k])) continue;
            if (path.sigma_min[k] < 1e-6) path.fold = true;
            ts.push_back(path.times[k]);
            s2.push_back(path.sigma_min[k] * path.sigma_min[k]);
        }
        if (!path.fold && ts.size() >= 2) {
            LinearFit f = linear_fit(ts, s2);
            if (f.slope != 0.0) {
                double tz = -f.intercept / f.slope;
                double dir = path.dt > 0 ? 1.0 : -1.0;
                double ahead = (tz - path.times.back()) * dir;
                if (ahead >= -std::abs(path.dt) && ahead <= 10 * std::abs(path.dt) + std::abs(path.t_fail - path.times.back())) {
                    path.fold = true;
                    path.fold_estimate = tz;
                }
            }
        }
        if (path.fold && path.fold_estimate == 0.0) path.fold_estimate = path.times.back();
    }
    return path;
}

EigenPath continue_path(const ModelSpec& m, SmoothFrame frame, double t0, double t1, const Vec& seed,
                        const FixedPointConfig& cfg) {
    int steps = std::max(1, int(std::llround(std::abs(t1 - t0) / cfg.dt)));
    return continue_path_on(m, std::move(frame), linspace(t0, t1, steps + 1), seed, cfg);
}

double reduction_residual(const ModelSpec& m, double t, double Y) {
    if (!m.reduction) throw Error(ErrorKind::NotScalarNonlinearity, m.name + " has no scalar reduction");
    return Y - std::cos(0.5 * t * m.reduction->theta(Y * Y));
}

double reduction_slope(const ModelSpec& m, double t, double Y) {
    if (!m.reduction) throw Error(ErrorKind::NotScalarNonlinearity, m.name + " has no scalar reduction");
    double s = Y * Y;
    return 1.0 + std::sin(0.5 * t * m.reduction->theta(s)) * 0.5 * t * m.reduction->dtheta(s) * 2.0 * Y;
}

Vec reduction_vector(const ModelSpec& m, double t, double Y) {
    double a = 0.5 * t * m.reduction->theta(Y * Y);
    Vec v(2);
    v << std::cos(a), std::sin(a);
    return v;
}

namespace {

template <class F>
double bisect(F f, double a, double b, double tol) {
    double fa = f(a);
    while (b - a > tol) {
        double c = 0.5 * (a + b);
        double fc = f(c);
        if (fc == 0.0) return c;
        if ((fc > 0) == (fa > 0)) {
            a = c;
            fa = fc;
        } else {
            b = c;
        }
    }
    return 0.5 * (a + b);
}

std::vector<double> critical_points(const ModelSpec& m, double t, int grid) {
    std::vector<double> c;
    auto d = [&](double Y) { return reduction_slope(m, t, Y); };
    double prev = d(0.0);
    for (int i = 1; i < grid; ++i) {
        double a = double(i - 1) / (grid - 1), b = double(i) / (grid - 1);
        double cur = d(b);
        if ((prev > 0) != (cur > 0) && prev != 0.0) c.push_back(bisect(d, a, b, 1e-14));
        prev = cur;
    }
    return c;
}

} // namespace

SolutionCount count_solutions(const ModelSpec& m, double t, int grid_size) {
    auto r = [&](double Y) { return reduction_residual(m, t, Y); };
    // r is monotone between consecutive critical points
    std::vector<double> knots{0.0};
    for (double c : critical_points(m, t, grid_size)) knots.push_back(c);
    knots.push_back(1.0);
    SolutionCount sc;
    auto add = [&](double y) {
        if (sc.roots.empty() || std::abs(y - sc.roots.back()) > 1e-10) sc.roots.push_back(y);
    };
    if (std::abs(r(0.0)) <= 1e-13) add(0.0);
    for (size_t i = 0; i + 1 < knots.size(); ++i) {
        double a = knots[i], b = knots[i + 1];
        double ra = r(a), rb = r(b);
        if (std::abs(rb) <= 1e-13) {
            add(b);
        } else if ((ra > 0) != (rb > 0) && std::abs(ra) > 1e-13) {
            add(bisect(r, a, b, 1e-12));
        }
    }
    sc.count = int(sc.roots.size());
    return sc;
}

FoldResult detect_fold(const ModelSpec& m, double t0, double t1, const FixedPointConfig&, int scan) {
    if (!m.reduction) throw Error(ErrorKind::NotScalarNonlinearity, m.name + " has no scalar reduction");
    std::vector<double> ts = linspace(t0, t1, scan + 1);
    int c_prev = count_solutions(m, ts[0]).count;
    for (size_t k = 1; k < ts.size(); ++k) {
        int c = count_solutions(m, ts[k]).count;
        if (c == c_prev) continue;
        double a = ts[k - 1], b = ts[k];
        while (b - a > 1e-8) {
            double mid = 0.5 * (a + b);
            if (count_solutions(m, mid).count == c_prev)
                a = mid;
            else
                b = mid;
        }
        FoldResult fr;
        fr.tau = 0.5 * (a + b);
        fr.count_below = count_solutions(m, a).count;
        fr.count_above = count_solutions(m, b).count;
        double best = std::numeric_limits<double>::infinity();
        for (double y : critical_points(m, fr.tau, 2001)) {
            double rv = reduction_residual(m, fr.tau, y);
            if (std::abs(rv) < best) {
                best = std::abs(rv);
                fr.tangency_Y = y;
                fr.tangency_residual = rv;
                fr.tangency_slope = reduction_slope(m, fr.tau, y);
            }
        }
        return fr;
    }
    std::ostringstream os;
    os << "solution count constant (" << c_prev << ") on [" << t0 << ", " << t1 << "]";
    throw Error(ErrorKind::NoFoldInRange, os.str());
}

FoldResult detect_fold(const ModelSpec& m, const SmoothFrame& frame, const Vec& seed, double t0, double t1,
                       const FixedPointConfig& cfg) {
    EigenPath path = continue_path(m, frame, t0, t1, seed, cfg);
    if (!path.truncated) throw Error(ErrorKind::NoFoldInRange, "path continued over the whole range");
    if (!path.fold) throw Error(ErrorKind::NoConvergence, "path truncated by solver failure, not a fold");
    double a = path.times.back(), b = path.t_fail;
    Vec good = path.omega.back();
    double sigma = path.sigma_min.back();
    while (std::abs(b - a) > 1e-8) {
        double mid = 0.5 * (a + b);
        SmoothFrame f = frame;
        f.anchor = {a, populations(good, m.p)};
        f.phi0 = good;
        bool ok = false;
        try {
            FixedPointResult r = solve_fixed_point(m, f, mid, good, cfg);
            if ((r.omega - good).norm() <= cfg.jump_tol) {
                ok = true;
                good = r.omega;
                if (!std::isnan(r.sigma_min)) sigma = r.sigma_min;
            }
        } catch (const Error&) {
        }
        if (ok)
            a = mid;
        else
            b = mid;
    }
    FoldResult fr;
    fr.tau = 0.5 * (a + b);
    fr.from_reduction = false;
    fr.sigma_min = sigma;
    return fr;
}

} // namespace nlad
