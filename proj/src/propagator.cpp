#include "nlad/propagator.hpp"

#include "nlad/quadrature.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace nlad {

namespace {

struct Unitary {
    RVec ev;
    Mat U;
    // exp(-i c H) v
    Vec apply(double c, const Vec& v) const {
        Vec w = U.adjoint() * v;
        for (int i = 0; i < w.size(); ++i) w(i) *= std::exp(-I * (c * ev(i)));
        return U * w;
    }
};

Unitary diagonalize(const Mat& h, bool real) {
    Unitary u;
    if (real) {
        Eigen::SelfAdjointEigenSolver<RMat> es(h.real());
        u.ev = es.eigenvalues();
        u.U = es.eigenvectors().cast<cplx>();
    } else {
        Eigen::SelfAdjointEigenSolver<Mat> es(h);
        u.ev = es.eigenvalues();
        u.U = es.eigenvectors();
    }
    return u;
}

Vec midpoint_step(const ModelSpec& m, const Vec& v, double t, double dt, const IntegratorConfig& cfg, int* iters) {
    const double tm = t + 0.5 * dt;
    const double c = dt / cfg.epsilon;
    Vec vm = v;
    Unitary u;
    double prev = std::numeric_limits<double>::infinity();
    int growing = 0;
    for (int it = 1;; ++it) {
        u = diagonalize(evaluate_h_at(m, tm, vm), m.is_real);
        Vec next = u.apply(0.5 * c, v);
        double d = (next - vm).norm();
        vm = next;
        // eigenvector phases carry roundoff proportional to |c| ||H||
        double hmax = u.ev.cwiseAbs().maxCoeff();
        double floor = 10 * std::numeric_limits<double>::epsilon() * (1 + 0.5 * std::abs(c) * hmax) * std::sqrt(double(v.size()));
        if (d <= std::max(cfg.midpoint_fixed_point_tol, floor)) {
            if (iters) *iters = std::max(*iters, it);
            break;
        }
        growing = d > prev ? growing + 1 : 0;
        if (!std::isfinite(d) || (growing >= 3 && d > 1e-3)) {
            std::ostringstream os;
            os << "midpoint iteration diverged at t=" << t << " (dt=" << dt << ")";
            throw Error(ErrorKind::InnerIterationDiverged, os.str());
        }
        if (it >= cfg.midpoint_max_iters) {
            std::ostringstream os;
            os << "midpoint iteration needs more than " << cfg.midpoint_max_iters << " iterations at t=" << t;
            throw Error(ErrorKind::StepTooLarge, os.str());
        }
        prev = d;
    }
    return u.apply(c, v);
}

} // namespace

void IntegratorConfig::validate() const {
    if (!(epsilon > 0)) throw Error(ErrorKind::ConfigInvalid, "epsilon must be positive");
    if (!(dt_factor >= 10)) throw Error(ErrorKind::ConfigInvalid, "dt_factor must be at least 10");
    if (!(midpoint_fixed_point_tol > 0)) throw Error(ErrorKind::ConfigInvalid, "inner tolerance must be positive");
}

Vec integrator_step(const ModelSpec& m, const Vec& v, double t, double dt, const IntegratorConfig& cfg,
                    int* inner_iters) {
    if (cfg.scheme == Scheme::Midpoint) return midpoint_step(m, v, t, dt, cfg, inner_iters);
    static const double w1 = 1.0 / (2.0 - std::cbrt(2.0));
    static const double w0 = 1.0 - 2.0 * w1;
    Vec a = midpoint_step(m, v, t, w1 * dt, cfg, inner_iters);
    Vec b = midpoint_step(m, a, t + w1 * dt, w0 * dt, cfg, inner_iters);
    return midpoint_step(m, b, t + (w1 + w0) * dt, w1 * dt, cfg, inner_iters);
}

PropagationResult propagate_on(const ModelSpec& m, const Vec& v0, const std::vector<double>& times,
                               const IntegratorConfig& cfg) {
    cfg.validate();
    if (std::abs(v0.norm() - 1.0) > 1e-12) throw Error(ErrorKind::InvalidInitialData, "initial state must be a unit vector");
    PropagationResult r;
    r.epsilon = cfg.epsilon;
    const double hmax = cfg.epsilon / cfg.dt_factor;
    Vec v = v0;
    const double n0 = v0.norm();
    auto record = [&](double t) {
        r.times.push_back(t);
        r.states.push_back(v);
        r.norm_drift.push_back(std::abs(v.norm() - n0));
        Vec hv = evaluate_h_at(m, t, v) * v;
        r.energy.push_back(v.dot(hv).real());
    };
    if (times.empty()) return r;
    record(times[0]);
    for (size_t k = 1; k < times.size(); ++k) {
        double span = times[k] - times[k - 1];
        long sub = std::max(1L, long(std::ceil(std::abs(span) / hmax - 1e-9)));
        double dt = span / double(sub);
        for (long s = 0; s < sub; ++s) {
            v = integrator_step(m, v, times[k - 1] + double(s) * dt, dt, cfg, &r.max_inner_iters);
            if (cfg.norm_renormalize) v *= n0 / v.norm();
            ++r.steps;
        }
        record(times[k]);
    }
    return r;
}

PropagationResult propagate(const ModelSpec& m, const Vec& v0, double t0, double t1, const IntegratorConfig& cfg) {
    cfg.validate();
    long n = std::max(1L, long(std::ceil(std::abs(t1 - t0) / (cfg.epsilon / cfg.dt_factor) - 1e-9)));
    return propagate_on(m, v0, linspace(t0, t1, int(n + 1)), cfg);
}

PropagationResult analytic_two_level(const ScalarFunction& gamma, double x0, double z0, const std::vector<double>& times,
                                     double epsilon) {
    if (!(x0 > 0) || z0 == 0.0 || std::abs(x0 * x0 + z0 * z0 - 1.0) > 1e-12)
        throw Error(ErrorKind::InvalidInitialData, "need x0 > 0, z0 != 0, x0^2 + z0^2 = 1");
    if (!(epsilon > 0)) throw Error(ErrorKind::InvalidInitialData, "epsilon must be positive");
    PropagationResult r;
    r.epsilon = epsilon;
    r.times = times;
    std::vector<double> g;
    for (double t : times) g.push_back(gamma(t));
    double h = times.size() > 1 ? times[1] - times[0] : 0.0;
    // s(t) = int_0^t gamma, assuming the grid starts at 0
    std::vector<double> s = cumulative_simpson(g, h);
    const double ratio = x0 / z0;
    for (size_t k = 0; k < times.size(); ++k) {
        double a = -x0 * z0 * s[k] / epsilon;
        double ca = std::cos(a), sa = std::sin(a);
        double d = std::sqrt(ca * ca + ratio * ratio * sa * sa);
        Vec v(2);
        v(0) = cplx(x0 * ca / d, x0 * sa / d);
        v(1) = cplx(z0 * ca / d, x0 * ratio * sa / d);
        r.states.push_back(v);
        r.norm_drift.push_back(std::abs(v.norm() - 1.0));
        // <v|H v> = 2 gamma |v1|^2 Re(conj(v1) v2)
        r.energy.push_back(2.0 * g[k] * std::norm(v(0)) * (std::conj(v(0)) * v(1)).real());
    }
    return r;
}

std::array<double, 3> two_level_constants(const Vec& v) {
    const double x = v(0).real(), y = v(0).imag(), z = v(1).real(), t = v(1).imag();
    return {x * x + t * t, y * y + z * z, x * z + y * t};
}

std::vector<double> energy_content(const ModelSpec& m, const PropagationResult& r) {
    std::vector<double> e;
    for (size_t k = 0; k < r.states.size(); ++k) {
        const Vec& v = r.states[k];
        cplx z = v.dot(evaluate_h_at(m, r.times[k], v) * v);
        if (std::abs(z.imag()) > 1e-10 * std::max(1.0, std::abs(z)))
            throw Error(ErrorKind::NonHermitian, "energy content has an imaginary part");
        e.push_back(z.real());
    }
    return e;
}

GaugeShiftReport gauge_shift_check(const ModelSpec& m, const GaugeFunction& chi, const Vec& v0, double t0, double t1,
                                   const IntegratorConfig& cfg) {
    ModelSpec shifted = m;
    shifted.h = [h = m.h, chi, n = m.dim](double t, const RVec& x) -> Mat {
        return h(t, x) + chi(t, x) * Mat::Identity(n, n);
    };
    PropagationResult base = propagate(m, v0, t0, t1, cfg);
    PropagationResult sh = propagate_on(shifted, v0, base.times, cfg);

    std::vector<double> c;
    for (size_t k = 0; k < base.times.size(); ++k) c.push_back(chi(base.times[k], populations(base.states[k], m.p)));
    double h = base.times.size() > 1 ? base.times[1] - base.times[0] : 0.0;
    std::vector<double> ichi = cumulative_simpson(c, h);

    GaugeShiftReport rep;
    for (size_t k = 0; k < base.times.size(); ++k) {
        Vec expect = std::exp(-I * ichi[k] / cfg.epsilon) * base.states[k];
        rep.residual = std::max(rep.residual, (sh.states[k] - expect).norm());
    }
    // global error of the base run from one step halving
    IntegratorConfig fine = cfg;
    fine.dt_factor *= 2;
    PropagationResult ref = propagate_on(m, v0, base.times, fine);
    double diff = 0;
    for (size_t k = 0; k < base.times.size(); ++k) diff = std::max(diff, (base.states[k] - ref.states[k]).norm());
    double q = std::pow(2.0, cfg.order());
    rep.integrator_tolerance = std::max(diff * q / (q - 1.0), double(base.steps) * cfg.midpoint_fixed_point_tol);
    rep.ratio = rep.residual / rep.integrator_tolerance;
    return rep;
}

AdiabaticError adiabatic_error(const ModelSpec& m, const EigenPath& path, const IntegratorConfig& cfg) {
    require_complete(path);
    AdiabaticError ae;
    ae.propagation = propagate_on(m, path.omega.front(), path.times, cfg);
    ae.times = path.times;
    const double t0 = path.times.front();
    for (size_t k = 0; k < path.size(); ++k) {
        Vec approx = std::exp(-I * path.phase[k] / cfg.epsilon) * path.omega[k];
        double e = (ae.propagation.states[k] - approx).norm();
        ae.err.push_back(e);
        ae.sup = std::max(ae.sup, e);
        double s = std::abs(path.times[k] - t0);
        if (s > 0 && s <= cfg.epsilon * (1 + 1e-12)) ae.early_ratio = std::max(ae.early_ratio, e / s);
        ae.energy_gap = std::max(ae.energy_gap, std::abs(ae.propagation.energy[k] - path.lambda[k]));
    }
    return ae;
}

OrderEstimate measure_order(const ModelSpec& m, const Vec& v0, double t0, double t1, const IntegratorConfig& cfg) {
    PropagationResult a = propagate(m, v0, t0, t1, cfg);
    IntegratorConfig c2 = cfg, c4 = cfg;
    c2.dt_factor *= 2;
    c4.dt_factor *= 4;
    PropagationResult b = propagate_on(m, v0, a.times, c2);
    PropagationResult c = propagate_on(m, v0, a.times, c4);
    OrderEstimate o;
    for (size_t k = 0; k < a.times.size(); ++k) {
        o.coarse_diff = std::max(o.coarse_diff, (a.states[k] - b.states[k]).norm());
        o.fine_diff = std::max(o.fine_diff, (b.states[k] - c.states[k]).norm());
        o.norm_drift = std::max({o.norm_drift, a.norm_drift[k], c.norm_drift[k]});
    }
    o.order = std::log2(o.coarse_diff / o.fine_diff);
    return o;
}

} // namespace nlad
