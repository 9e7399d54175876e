#include "nlad/lab.hpp"

#include "nlad/eigenpath.hpp"
#include "nlad/linearized.hpp"
#include "nlad/propagator.hpp"
#include "nlad/quadrature.hpp"
#include "nlad/transport.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <iostream>
#include <numbers>
#include <sstream>

namespace nlad {

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k{"simulate",  "eigenpath",    "spectrum",        "transport",
                                            "sweep",     "bifurcate",    "discriminant",    "anharmonic-gaps"};
    return k;
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

double get_number(const Json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) invalid("'" + key + "' must be a number");
    return j[key].get<double>();
}

int get_int(const Json& j, const std::string& key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer()) invalid("'" + key + "' must be an integer");
    return j[key].get<int>();
}

std::vector<double> get_numbers(const Json& j, const std::string& key) {
    if (!j[key].is_array()) invalid("'" + key + "' must be an array of numbers");
    std::vector<double> v;
    for (const auto& x : j[key]) {
        if (!x.is_number()) invalid("'" + key + "' must be an array of numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

std::vector<double> epsilon_list(const Json& numeric) {
    if (!numeric.contains("epsilons")) invalid("numeric.epsilons is required for this experiment");
    std::vector<double> e = get_numbers(numeric, "epsilons");
    if (e.size() < 2) invalid("numeric.epsilons needs at least two values");
    for (size_t i = 0; i < e.size(); ++i) {
        if (!(e[i] > 0)) invalid("numeric.epsilons must be positive");
        if (i && !(e[i] < e[i - 1])) invalid("numeric.epsilons must be strictly decreasing");
    }
    return e;
}

double require_epsilon(const Json& numeric) {
    if (!numeric.contains("epsilon")) invalid("numeric.epsilon is unset");
    double e = get_number(numeric, "epsilon", 0);
    if (!(e > 0)) invalid("numeric.epsilon must be positive");
    return e;
}

std::pair<double, double> time_range(const Json& numeric, double a = 0.0, double b = 1.0) {
    if (numeric.contains("t_range")) {
        std::vector<double> r = get_numbers(numeric, "t_range");
        if (r.size() != 2) invalid("numeric.t_range must hold two numbers");
        a = r[0];
        b = r[1];
    }
    if (!(a != b) || !std::isfinite(a) || !std::isfinite(b)) invalid("numeric.t_range is empty");
    return {a, b};
}

IntegratorConfig integrator_from(const Json& numeric, double eps) {
    IntegratorConfig ic;
    ic.epsilon = eps;
    ic.dt_factor = get_number(numeric, "dt_factor", ic.dt_factor);
    ic.midpoint_fixed_point_tol = get_number(numeric, "midpoint_tol", ic.midpoint_fixed_point_tol);
    ic.midpoint_max_iters = get_int(numeric, "midpoint_max_iters", ic.midpoint_max_iters);
    std::string scheme = numeric.value("scheme", std::string("composed4"));
    if (scheme == "midpoint")
        ic.scheme = Scheme::Midpoint;
    else if (scheme == "composed4")
        ic.scheme = Scheme::Composed4;
    else
        invalid("numeric.scheme must be 'midpoint' or 'composed4'");
    ic.validate();
    return ic;
}

FixedPointConfig fixed_point_from(const Json& numeric) {
    FixedPointConfig fc;
    fc.dt = get_number(numeric, "path_dt", fc.dt);
    fc.picard_tol = get_number(numeric, "picard_tol", fc.picard_tol);
    fc.newton_tol = get_number(numeric, "newton_tol", fc.newton_tol);
    fc.picard_max_iters = get_int(numeric, "picard_max_iters", fc.picard_max_iters);
    fc.newton_max_iters = get_int(numeric, "newton_max_iters", fc.newton_max_iters);
    fc.jump_tol = get_number(numeric, "jump_tol", fc.jump_tol);
    if (!(fc.dt > 0)) invalid("numeric.path_dt must be positive");
    return fc;
}

Vec state_from_json(const Json& j, int dim) {
    if (!j.is_array() || int(j.size()) != dim) invalid("numeric.initial_state must have one entry per component");
    Vec v(dim);
    for (int k = 0; k < dim; ++k) {
        const Json& e = j[k];
        if (e.is_number())
            v(k) = e.get<double>();
        else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number())
            v(k) = cplx(e[0].get<double>(), e[1].get<double>());
        else
            invalid("numeric.initial_state entries are numbers or [re, im] pairs");
    }
    if (std::abs(v.norm() - 1.0) > 1e-10) invalid("numeric.initial_state must have unit norm");
    return v;
}

SmoothFrame default_frame(const ModelSpec& m, double t0, const Json& numeric) {
    RVec x0 = RVec::Constant(m.p, 1.0 / m.dim);
    if (numeric.contains("seed_populations")) {
        std::vector<double> x = get_numbers(numeric, "seed_populations");
        if (int(x.size()) != m.p) invalid("numeric.seed_populations needs p entries");
        for (int j = 0; j < m.p; ++j) x0(j) = x[j];
    }
    return make_frame(m, {t0, x0});
}

Json cplx_json(cplx z) { return Json::array({z.real(), z.imag()}); }

std::string eps_tag(size_t i) { return "eps" + std::to_string(i); }

class Runner {
public:
    Runner(const ExperimentConfig& cfg, RunManifest& man) : cfg_(cfg), man_(man), numeric_(cfg.numeric) {
        expect_ = numeric_.value("expect", Json::object());
    }

    void run() {
        const std::string& k = cfg_.kind;
        if (k == "discriminant") {
            discriminant();
            man_.stage.clear();
            return;
        }
        stage("model");
        model_ = model_from_config(cfg_.model_name, cfg_.model_params);
        man_.diagnostics["model"] = {{"name", model_.name}, {"dim", model_.dim}, {"p", model_.p},
                                     {"delta", model_.delta_bound}, {"selected_index", model_.selected_index}};
        if (k == "simulate") simulate();
        else if (k == "eigenpath") eigenpath();
        else if (k == "spectrum") spectrum();
        else if (k == "transport") transport();
        else if (k == "sweep") sweep();
        else if (k == "bifurcate") bifurcate();
        else if (k == "anharmonic-gaps") anharmonic_gaps();
        man_.stage.clear();
    }

private:
    const ExperimentConfig& cfg_;
    RunManifest& man_;
    const Json& numeric_;
    Json expect_;
    ModelSpec model_;

    void stage(const std::string& s) { man_.stage = s; }

    bool wants(const std::string& fmt) const {
        return std::find(cfg_.formats.begin(), cfg_.formats.end(), fmt) != cfg_.formats.end();
    }
    std::string path(const std::string& file) const { return (std::filesystem::path(cfg_.out_dir) / file).string(); }

    void csv(const std::string& file, const Series& s, const std::string& scale = "linear", const Json& extra = Json::object()) {
        if (!wants("csv")) return;
        emit_plot_data(s, path(file), scale, extra);
        man_.artifacts.push_back(file);
        man_.artifacts.push_back(std::filesystem::path(sidecar_path(file)).string());
    }
    void json(const std::string& file, const Json& j) {
        if (!wants("json")) return;
        write_json(path(file), j);
        man_.artifacts.push_back(file);
    }

    double expect(const std::string& key, double fallback) const { return get_number(expect_, key, fallback); }

    void check_le(const std::string& name, double value, double bound, const std::string& claim) {
        man_.invariants.push_back({name, claim, value, "<=", -INFINITY, bound, value <= bound});
    }
    void check_ge(const std::string& name, double value, double bound, const std::string& claim) {
        man_.invariants.push_back({name, claim, value, ">=", bound, INFINITY, value >= bound});
    }
    void check_in(const std::string& name, double value, double lo, double hi, const std::string& claim) {
        man_.invariants.push_back({name, claim, value, "in", lo, hi, value >= lo && value <= hi});
    }
    void check_order(const std::string& name, double slope, const std::string& claim) {
        double order = expect("order", 1.0), tol = expect("order_tol", 0.2);
        check_in(name, slope, order - tol, order + tol, claim);
    }

    Vec initial_eigenvector(double t0) {
        SmoothFrame fr = default_frame(model_, t0, numeric_);
        return solve_fixed_point(model_, fr, t0, fr.phi0, fixed_point_from(numeric_)).omega;
    }

    EigenPath path_on(double t0, double t1, double dt) {
        SmoothFrame fr = default_frame(model_, t0, numeric_);
        FixedPointConfig fc = fixed_point_from(numeric_);
        Vec seed = solve_fixed_point(model_, fr, t0, fr.phi0, fc).omega;
        fc.dt = dt;
        return continue_path(model_, fr, t0, t1, seed, fc);
    }

    void simulate() {
        const double eps = require_epsilon(numeric_);
        auto [t0, t1] = time_range(numeric_);
        IntegratorConfig ic = integrator_from(numeric_, eps);
        stage("initial_state");
        Vec v0 = numeric_.contains("initial_state") ? state_from_json(numeric_["initial_state"], model_.dim)
                                                    : initial_eigenvector(t0);
        stage("propagate");
        PropagationResult r = propagate(model_, v0, t0, t1, ic);
        std::vector<double> E = energy_content(model_, r);

        Series traj;
        traj.columns = {"t", "norm_drift", "E"};
        for (int j = 0; j < model_.p; ++j) traj.columns.push_back("x" + std::to_string(j + 1));
        double drift = 0;
        for (size_t k = 0; k < r.times.size(); ++k) {
            std::vector<double> row{r.times[k], r.norm_drift[k], E[k]};
            for (int j = 0; j < model_.p; ++j) row.push_back(std::norm(r.states[k](j)));
            traj.add(row);
            drift = std::max(drift, r.norm_drift[k]);
        }
        csv("trajectory.csv", traj);
        check_le("norm_drift", drift, expect("norm_drift", 1e-8), "the evolution preserves the norm");
        man_.diagnostics["steps"] = r.steps;
        man_.diagnostics["max_inner_iterations"] = r.max_inner_iters;

        const bool flip = model_.name == "two_level_flip";
        const ScalarFunction gamma = params_from_json(cfg_.model_params).gamma;
        Series es;
        es.columns = {"t", flip ? "E_over_gamma" : "E"};
        std::vector<double> ev;
        for (size_t k = 0; k < r.times.size(); ++k) {
            double e = flip ? E[k] / gamma(r.times[k]) : E[k];
            es.add({r.times[k], e});
            ev.push_back(e);
        }
        std::vector<Extremum> ext = local_extrema(r.times, ev);
        double emax = -INFINITY, emin = INFINITY;
        for (const auto& x : ext) (x.is_max ? emax : emin) = x.is_max ? std::max(emax, x.value) : std::min(emin, x.value);
        Json extra{{"extrema_max", ext.empty() ? Json() : Json(emax)}, {"extrema_min", ext.empty() ? Json() : Json(emin)},
                   {"extrema_count", ext.size()}};

        const bool real_start = v0.imag().norm() == 0.0 && v0(0).real() > 0 && model_.dim == 2;
        if (flip && real_start && v0(1).real() != 0.0) {
            stage("analytic_comparison");
            const double x0 = v0(0).real(), z0 = v0(1).real();
            PropagationResult a = analytic_two_level(gamma, x0, z0, r.times, eps);
            double err = 0, cnum = 0, cana = 0;
            auto c0 = two_level_constants(v0);
            for (size_t k = 0; k < r.times.size(); ++k) {
                err = std::max(err, (r.states[k] - a.states[k]).norm());
                auto cn = two_level_constants(r.states[k]);
                auto ca = two_level_constants(a.states[k]);
                for (int i = 0; i < 3; ++i) {
                    cnum = std::max(cnum, std::abs(cn[i] - c0[i]));
                    cana = std::max(cana, std::abs(ca[i] - c0[i]));
                }
            }
            check_le("analytic_state_error", err, expect("analytic_error", 1e-6),
                     "the two-level flip model has a closed-form solution");
            check_le("constants_of_motion_numeric", cnum, expect("constants", 1e-8),
                     "x^2+t^2, y^2+z^2 and xz+yt are conserved");
            check_le("constants_of_motion_analytic", cana, expect("constants", 1e-8),
                     "x^2+t^2, y^2+z^2 and xz+yt are conserved");
            if (x0 != z0 && ext.size() >= 3) {
                const double hi = 2 * x0 * x0 * x0 * z0, lo = 2 * x0 * z0 * z0 * z0;
                const double top = std::max(hi, lo), bot = std::min(hi, lo);
                check_le("energy_extremum_max", std::abs(emax - top), expect("energy_extrema", 1e-4),
                         "E/gamma oscillates between 2 x0^3 z0 and 2 x0 z0^3");
                check_le("energy_extremum_min", std::abs(emin - bot), expect("energy_extrema", 1e-4),
                         "E/gamma oscillates between 2 x0^3 z0 and 2 x0 z0^3");
                // period in s = int gamma; consecutive extrema are half a period apart
                std::vector<double> g;
                for (double t : r.times) g.push_back(gamma(t));
                std::vector<double> s = cumulative_simpson(g, r.times[1] - r.times[0]);
                std::vector<double> sext;
                for (const auto& x : ext) {
                    double u = (x.t - r.times.front()) / (r.times[1] - r.times[0]);
                    size_t k = std::min(size_t(u), s.size() - 2);
                    double w = u - double(k);
                    sext.push_back((1 - w) * s[k] + w * s[k + 1]);
                }
                if (sext.size() >= 2) {
                    double period = 2 * (sext.back() - sext.front()) / double(sext.size() - 1);
                    double expected = std::numbers::pi * eps / (x0 * z0);
                    extra["period_in_s"] = period;
                    extra["expected_period_in_s"] = expected;
                    check_le("energy_period_relative_error", std::abs(period / expected - 1), expect("period", 1e-2),
                             "the oscillation has period pi eps / (x0 z0) in the variable int gamma");
                }
            }
        }
        csv("energy.csv", es, "linear", extra);
    }

    void eigenpath() {
        auto [t0, t1] = time_range(numeric_);
        stage("continuation");
        EigenPath p = path_on(t0, t1, fixed_point_from(numeric_).dt);
        Series s;
        s.columns = {"t", "lambda", "phase", "residual", "phase_defect", "fixed_point_residual", "sigma_min"};
        double res = 0, pd = 0;
        for (size_t k = 0; k < p.size(); ++k) {
            s.add({p.times[k], p.lambda[k], p.phase[k], p.residual[k], p.phase_defect[k], p.fixed_point_residual[k],
                   p.sigma_min[k]});
            res = std::max(res, p.residual[k]);
            pd = std::max(pd, p.phase_defect[k]);
        }
        csv("eigenpath.csv", s);
        stage("hypotheses");
        HypothesisReport hr = validate_hypotheses(model_, uniform_grid(model_.p, std::min(t0, t1), std::max(t0, t1), 5,
                                                                       0.0, 1.0, 3));
        Json summary{{"truncated", p.truncated}, {"t_fail", p.t_fail}, {"fold", p.fold},
                     {"fold_estimate", p.fold_estimate}, {"events", p.events}, {"gap", hr.gap}, {"delta", hr.delta},
                     {"contraction_factor", hr.contraction_factor}};
        json("eigenpath.json", summary);
        man_.diagnostics["eigenpath"] = summary;
        check_le("eigen_residual", res, expect("residual", 1e-8), "omega solves H(t,[omega]) omega = lambda omega");
        check_le("phase_defect", pd, expect("phase_defect", 1e-3), "the gauge satisfies <omega|omega'> = 0");
        if (expect_.value("complete", true))
            check_le("truncated", p.truncated ? 1.0 : 0.0, 0.0, "the eigenpath exists over the whole range");
    }

    void spectrum() {
        auto [t0, t1] = time_range(numeric_);
        const int samples = get_int(numeric_, "samples", 5);
        if (samples < 2) invalid("numeric.samples must be >= 2");
        stage("continuation");
        FixedPointConfig fc = fixed_point_from(numeric_);
        EigenPath p = path_on(t0, t1, fc.dt);
        require_complete(p);
        stage("spectrum");
        Series s;
        s.columns = {"t", "index", "re", "im", "condition", "label"};
        double imag = 0, nil = 0, quad = 0, root = 0, ident = 0;
        int kernel_bad = 0;
        const size_t stride = std::max<size_t>(1, (p.size() - 1) / size_t(samples - 1));
        for (size_t k = 0; k < p.size(); k += stride) {
            DoubledOperator op = build_f(model_, p, k);
            BiorthogonalSpectrum b = spectrum_f(op, -1.0, false);
            for (size_t i = 0; i < b.eigenvalues.size(); ++i)
                s.add({p.times[k], double(i), b.eigenvalues[i].real(), b.eigenvalues[i].imag(), b.condition[i],
                       double(b.clusters[b.cluster_of[i]].label)});
            imag = std::max(imag, b.max_imag);
            if (b.kernel_cluster < 0 || b.clusters[b.kernel_cluster].members.size() != 2)
                ++kernel_bad;
            else
                nil = std::max(nil, b.clusters[b.kernel_cluster].nilpotent_norm);
            quad = std::max(quad, quadruple_defect(b, op));
            if (model_.p == 1) {
                for (cplx z : aw_roots_p1(op)) {
                    double d = INFINITY;
                    for (cplx e : b.eigenvalues) d = std::min(d, std::abs(z - e));
                    root = std::max(root, d);
                }
                for (int j = 0; j < op.shifted.size(); ++j)
                    if (j != op.kernel_index) ident = std::max(ident, std::abs(p1_eigenprojector(op, j).identity - 1.0));
            }
        }
        csv("spectrum.csv", s);
        if (expect_.value("real", true))
            check_le("max_imag", imag, expect("max_imag", 1e-8), "the spectrum of F is real");
        check_le("kernel_cluster_defects", kernel_bad, 0, "0 is an eigenvalue of F of multiplicity two");
        check_le("kernel_nilpotent_norm", nil, expect("nilpotent", 1e-8), "the kernel cluster is semisimple");
        check_le("quadruple_defect", quad, expect("quadruple", 1e-8),
                 "eigenvalues off sigma(F0) come in quadruples z, conj z, -z, -conj z");
        if (model_.p == 1) {
            check_le("aw_root_mismatch", root, expect("aw_roots", 1e-6),
                     "zeros of the determinant are the eigenvalues of F");
            check_le("projector_identity", ident, expect("projector_identity", 1e-10),
                     "conj(omega_1) s_k <e1|P_k v1> = 1");
        }
    }

    struct SweepPoint {
        double eps = 0, sup = 0, early = 0, energy_gap = 0, wdot = 0;
        std::vector<double> t, err;
    };

    std::vector<SweepPoint> sweep_points(const std::vector<double>& eps, double t0, double t1) {
        auto one = [&, t0, t1](double e) {
            IntegratorConfig ic = integrator_from(numeric_, e);
            double pdt = numeric_.contains("path_dt") ? get_number(numeric_, "path_dt", 0) : e / ic.dt_factor;
            EigenPath p = path_on(t0, t1, pdt);
            AdiabaticError ae = adiabatic_error(model_, p, ic);
            SweepPoint sp{e, ae.sup, ae.early_ratio, ae.energy_gap, 0, ae.times, ae.err};
            for (const Vec& w : p.omega_dot()) sp.wdot = std::max(sp.wdot, w.norm());
            return sp;
        };
        std::vector<SweepPoint> out(eps.size());
        const size_t jobs = size_t(std::max(1, cfg_.jobs));
        for (size_t start = 0; start < eps.size(); start += jobs) {
            std::vector<std::future<SweepPoint>> f;
            for (size_t i = start; i < std::min(eps.size(), start + jobs); ++i)
                f.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, one, eps[i]));
            for (size_t i = 0; i < f.size(); ++i) out[start + i] = f[i].get();
        }
        return out;
    }

    LinearFit report_sweep(const std::vector<SweepPoint>& pts) {
        Series s;
        s.columns = {"epsilon", "sup_error", "early_ratio", "energy_gap"};
        std::vector<double> e, sup;
        double early = 0, wdot = 0;
        for (size_t i = 0; i < pts.size(); ++i) {
            s.add({pts[i].eps, pts[i].sup, pts[i].early, pts[i].energy_gap});
            e.push_back(pts[i].eps);
            sup.push_back(pts[i].sup);
            early = std::max(early, pts[i].early);
            wdot = std::max(wdot, pts[i].wdot);
            Series tr;
            tr.columns = {"t", "err"};
            for (size_t k = 0; k < pts[i].t.size(); ++k) tr.add({pts[i].t[k], pts[i].err[k]});
            csv("adiabatic_error_" + eps_tag(i) + ".csv", tr, "linear", {{"epsilon", pts[i].eps}});
        }
        LinearFit f = loglog_fit(e, sup);
        csv("adiabatic_error.csv", s, "loglog", {{"fitted_slope", f.slope}, {"r2", f.r2}});
        man_.diagnostics["sweep"] = {{"slope", f.slope}, {"r2", f.r2}, {"max_early_ratio", early},
                                     {"early_constant", 2 * wdot}};
        if (expect_.contains("max_sup_error"))
            check_le("max_sup_error", *std::max_element(sup.begin(), sup.end()), expect("max_sup_error", 0),
                     "the adiabatic approximation is exact for this data");
        if (expect_.contains("order")) check_order("adiabatic_order", f.slope, "the adiabatic error is O(epsilon)");
        if (expect_.value("early_bound", false))
            check_le("early_ratio", early, 2 * wdot, "err(t) <= C t for t <= epsilon with C = 2 sup |omega'|");
        return f;
    }

    void sweep() {
        std::vector<double> eps = epsilon_list(numeric_);
        auto [t0, t1] = time_range(numeric_);
        stage("sweep");
        report_sweep(sweep_points(eps, t0, t1));
    }

    void transport() {
        std::vector<double> eps = epsilon_list(numeric_);
        auto [t0, t1] = time_range(numeric_, 0.0, 0.5);
        const double dt_factor = get_number(numeric_, "dt_factor", 40.0);
        stage("bundle");
        EigenPath p = path_on(t0, t1, eps.back() / dt_factor);
        TransportBundle b = build_bundle(model_, p);
        double wc = *std::max_element(b.w_condition.begin(), b.w_condition.end());
        man_.diagnostics["bundle"] = {{"points", b.size()},           {"clusters", b.clusters()},
                                      {"intertwining", b.max_intertwining()}, {"k_diagonal", b.k_diagonal_defect},
                                      {"min_overlap", b.min_overlap},  {"w_condition", wc}};
        stage("compare");
        ComparisonSweep sw = compare_adiabatic(b, eps, dt_factor, cfg_.jobs);
        stage("source_integral");
        SourceIntegralReport sr = source_integral_check(b, eps, get_number(numeric_, "inject", 1.0));
        Series s;
        s.columns = {"epsilon", "sup_defect", "uniform_bound", "sup_source", "control_sup"};
        double inv = 0;
        for (size_t i = 0; i < eps.size(); ++i) {
            const auto& r = sw.runs[i];
            s.add({eps[i], r.sup_defect, r.uniform_bound, sr.sup[i], sr.control_sup[i]});
            inv = std::max(inv, r.inversion_defect);
            Series tr;
            tr.columns = {"t", "defect", "T_norm", "source_integral"};
            for (size_t k = 0; k < b.size(); ++k) tr.add({b.times[k], r.defect[k], r.T_norm[k], r.source_integral[k]});
            csv("transport_" + eps_tag(i) + ".csv", tr, "linear", {{"epsilon", eps[i]}});
        }
        Json fits{{"defect_slope", sw.defect_fit.slope}, {"source_slope", sr.fit.slope},
                  {"control_slope", sr.control_fit.slope}, {"uniform_variation", sw.uniform_variation},
                  {"kernel_component", sr.kernel_component}};
        csv("transport.csv", s, "loglog", fits);
        check_order("linearized_defect_order", sw.defect_fit.slope, "T - V = O(epsilon)");
        check_le("uniform_bound_variation", sw.uniform_variation, expect("uniform_variation", 0.1),
                 "sup ||T|| is bounded uniformly in epsilon");
        check_order("source_integral_order", sr.fit.slope, "int_0^t V(t,s) (omega', conj omega') ds = O(epsilon)");
        check_le("negative_control_slope", sr.control_fit.slope, expect("control_slope", 0.2),
                 "a kernel component in the source spoils the O(epsilon) bound");
        check_le("intertwining_residual", b.max_intertwining(), expect("intertwining", 1e-6),
                 "W(t) maps spectral subspaces at t0 onto those at t");
        check_le("inversion_defect", inv, expect("inversion", 1e-8), "T(t,s) T(s,t) = Id");

        if (expect_.value("compare_nonlinear", true)) {
            stage("nonlinear_sweep");
            LinearFit nl = report_sweep(sweep_points(eps, t0, t1));
            fits["nonlinear_slope"] = nl.slope;
            check_le("order_consistency", std::abs(nl.slope - sw.defect_fit.slope), 0.3,
                     "nonlinear and linearized errors share the O(epsilon) scaling");
        }
        json("transport.json", fits);
    }

    void bifurcate() {
        auto [t0, t1] = time_range(numeric_);
        const double lo = std::min(t0, t1), hi = std::max(t0, t1);
        FixedPointConfig fc = fixed_point_from(numeric_);
        const int table = get_int(numeric_, "table_points", 21);
        stage("count");
        Json rows = Json::array();
        Series cs;
        cs.columns = {"t", "count"};
        int max_count = 0;
        for (double t : linspace(lo, hi, table)) {
            int c = count_solutions(model_, t).count;
            rows.push_back(Json::array({t, c}));
            cs.add({t, double(c)});
            max_count = std::max(max_count, c);
        }
        csv("counts.csv", cs);
        Json out{{"table", rows}};
        if (!expect_.value("fold", true)) {
            json("tau.json", out);
            check_le("max_solution_count", max_count, 1, "without a fold the fixed point stays unique");
            return;
        }
        stage("fold");
        FoldResult fr = detect_fold(model_, lo, hi, fc);
        const double d = 1e-3;
        int below = count_solutions(model_, fr.tau - d).count, above = count_solutions(model_, fr.tau + d).count;
        out["tau"] = fr.tau;
        out["count_below"] = below;
        out["count_above"] = above;
        out["tangency_Y"] = fr.tangency_Y;
        out["tangency_residual"] = fr.tangency_residual;
        out["tangency_slope"] = fr.tangency_slope;

        stage("continuation");
        // follow the root that merges at the fold, starting on the three-solution side
        SolutionCount sc = count_solutions(model_, hi);
        double Y = sc.roots.front(), best = INFINITY;
        for (double r : sc.roots)
            if (std::abs(r - fr.tangency_Y) < best) {
                best = std::abs(r - fr.tangency_Y);
                Y = r;
            }
        Vec seed = reduction_vector(model_, hi, Y);
        SmoothFrame frame = make_frame(model_, {hi, populations(seed, model_.p)}, seed);
        fc.dt = get_number(numeric_, "path_dt", 1e-3);
        EigenPath p = continue_path(model_, frame, hi, lo, seed, fc);
        double last = p.times.back();
        out["continuation"] = {{"start_Y", Y}, {"truncated", p.truncated}, {"last_time", last}, {"t_fail", p.t_fail},
                               {"fold", p.fold}, {"fold_estimate", p.fold_estimate}, {"events", p.events}};
        json("tau.json", out);
        check_in("tau", fr.tau, lo, hi, "a fold time tau exists in the range");
        check_in("count_below", below, 1, 1, "one solution before the fold");
        check_in("count_above", above, 3, 3, "three solutions after the fold");
        check_le("truncated", p.truncated ? 0.0 : 1.0, 0.0, "the continued branch ends at the fold");
        check_le("truncation_distance", std::abs(last - fr.tau), expect("truncation_distance", 1e-2),
                 "the continued branch ends at the fold");
    }

    void discriminant() {
        const int dim = get_int(numeric_, "dim", 5);
        const long draws = long(get_number(numeric_, "max_draws", 1e5));
        const double l1 = get_number(numeric_, "lambda1", 1.0), ratio = get_number(numeric_, "lambda_ratio", 50.0);
        std::mt19937_64 rng(cfg_.seed);
        stage("search");
        DiscriminantInstance inst = search_negative_discriminant(rng, dim, draws);
        stage("spectrum");
        DoubledOperator op = discriminant_operator(inst, l1, ratio * l1);
        BiorthogonalSpectrum s = spectrum_f(op, -1.0, false);
        stage("sign_flip");
        SignFlip sf = find_sign_flip(inst, rng, draws);
        Json ev = Json::array();
        for (cplx z : s.eigenvalues) ev.push_back(cplx_json(z));
        Json out{{"seed", cfg_.seed},
                 {"draws", inst.draws},
                 {"discriminant", inst.discriminant},
                 {"omega", std::vector<double>(inst.omega.data(), inst.omega.data() + inst.omega.size())},
                 {"eigenvalues", ev},
                 {"max_imag", s.max_imag},
                 {"quadruple_defect", quadruple_defect(s, op)},
                 {"sign_flip", {{"found", sf.found}, {"draws", sf.draws}, {"discriminant", sf.discriminant}}}};
        json("discriminant.json", out);
        Series es;
        es.columns = {"re", "im"};
        for (cplx z : s.eigenvalues) es.add({z.real(), z.imag()});
        csv("eigenvalues.csv", es);
        check_le("discriminant", inst.discriminant, 0.0, "the discriminant can be negative");
        check_ge("max_imag", s.max_imag, expect("min_imag", 1e-3), "F can have a non-real conjugate pair");
        check_ge("sign_flip_found", sf.found ? 1.0 : 0.0, 1.0, "a rotation fixing omega flips the sign");
    }

    void anharmonic_gaps() {
        ModelParams mp = params_from_json(cfg_.model_params);
        const int count = get_int(numeric_, "gap_count", 20);
        stage("gap_fit");
        GapFit g = anharmonic_gap_fit(mp.truncation, mp.quadrature, mp.basis_scale, count);
        TruncationReport tr = anharmonic_truncation(mp.truncation, mp.quadrature, mp.basis_scale);
        Series s;
        s.columns = {"j", "gap", "fit"};
        for (size_t i = 0; i < g.gaps.size(); ++i) {
            double j = double(i + 1);
            s.add({j, g.gaps[i], g.c0 * std::pow(j, g.alpha)});
        }
        csv("gaps.csv", s, "loglog", {{"alpha", g.alpha}, {"c0", g.c0}, {"r2", g.r2}, {"min_ratio", g.min_ratio}});
        man_.diagnostics["truncation"] = {{"agreeing_eigenvalues", tr.agreeing}, {"N", mp.truncation}};
        json("gaps.json", {{"alpha", g.alpha}, {"c0", g.c0}, {"r2", g.r2}, {"truncation_agreeing", tr.agreeing}});
        check_ge("alpha", g.alpha, expect("alpha", 0.5), "gaps grow like j^alpha with alpha > 1/2");
        check_ge("r2", g.r2, expect("r2", 0.99), "gaps grow like j^alpha with alpha > 1/2");
        if (numeric_.contains("epsilons")) {
            auto [t0, t1] = time_range(numeric_, 0.0, 0.5);
            stage("sweep");
            report_sweep(sweep_points(epsilon_list(numeric_), t0, t1));
        }
    }
};

} // namespace

ScalarFunction scalar_from_json(const Json& j) {
    if (j.is_number()) return ScalarFunction::constant(j.get<double>());
    if (!j.is_object() || !j.contains("kind")) invalid("scalar functions are numbers or objects with a 'kind'");
    std::string kind = j["kind"].get<std::string>();
    if (kind == "constant") return ScalarFunction::constant(get_number(j, "value", 0.0));
    if (kind == "sinusoid") {
        std::vector<double> c = get_numbers(j, "c");
        if (c.size() != 3) invalid("sinusoid needs c = [c0, c1, c2]");
        return ScalarFunction::sinusoid(c[0], c[1], c[2]);
    }
    if (kind == "polynomial") return ScalarFunction::polynomial(get_numbers(j, "c"));
    if (kind == "tabulated") {
        std::vector<double> t = get_numbers(j, "t"), v = get_numbers(j, "v");
        if (t.size() != v.size() || t.size() < 2) invalid("tabulated needs matching t and v with >= 2 points");
        return ScalarFunction::tabulated(t, v);
    }
    invalid("unknown scalar function kind '" + kind + "'");
}

ModelParams params_from_json(const Json& j) {
    ModelParams p;
    if (!j.is_object()) invalid("model.params must be an object");
    if (j.contains("gamma")) p.gamma = scalar_from_json(j["gamma"]);
    if (j.contains("kappa")) p.kappa = scalar_from_json(j["kappa"]);
    if (j.contains("omega")) p.omega = scalar_from_json(j["omega"]);
    if (j.contains("tilt")) p.tilt = scalar_from_json(j["tilt"]);
    if (j.contains("a")) p.a = scalar_from_json(j["a"]);
    if (j.contains("b")) p.b = scalar_from_json(j["b"]);
    if (j.contains("theta")) {
        const Json& t = j["theta"];
        p.theta.A = get_number(t, "A", p.theta.A);
        p.theta.s0 = get_number(t, "s0", p.theta.s0);
        p.theta.scale = get_number(t, "scale", p.theta.scale);
    }
    p.truncation = get_int(j, "truncation", p.truncation);
    p.quadrature = get_int(j, "quadrature", p.quadrature);
    p.basis_scale = get_number(j, "basis_scale", p.basis_scale);
    p.selected_index = get_int(j, "selected_index", p.selected_index);
    return p;
}

ModelSpec model_from_config(const std::string& name, const Json& params) {
    ModelParams p = params_from_json(params);
    if (name == "truncated_anharmonic" && params.contains("delta")) {
        if (params.contains("b")) invalid("give either b or delta for truncated_anharmonic");
        const double target = get_number(params, "delta", 0.05);
        // W is linear in b
        p.b = ScalarFunction::constant(1.0);
        ModelSpec unit = builtin_model(name, p);
        p.b = ScalarFunction::constant(target / unit.delta_bound);
    }
    return builtin_model(name, p);
}

ExperimentConfig parse_config(const Json& j) {
    if (!j.is_object()) invalid("config must be a JSON object");
    ExperimentConfig c;
    c.raw = j;
    if (!j.contains("kind") || !j["kind"].is_string()) invalid("'kind' is required");
    c.kind = j["kind"].get<std::string>();
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) invalid("unknown experiment kind '" + c.kind + "'");

    if (c.kind == "discriminant") {
        c.model_name = j.contains("model") ? j["model"].value("name", std::string()) : std::string();
    } else {
        if (!j.contains("model") || !j["model"].is_object()) invalid("'model' block is required");
        c.model_name = j["model"].value("name", std::string());
        const auto names = builtin_model_names();
        if (std::find(names.begin(), names.end(), c.model_name) == names.end())
            invalid("model '" + c.model_name + "' does not exist");
        if (c.kind == "anharmonic-gaps" && c.model_name != "truncated_anharmonic")
            invalid("anharmonic-gaps needs the truncated_anharmonic model");
        c.model_params = j["model"].value("params", Json::object());
        if (!c.model_params.is_object()) invalid("model.params must be an object");
    }
    c.numeric = j.value("numeric", Json::object());
    if (!c.numeric.is_object()) invalid("'numeric' must be an object");
    if (j.contains("output")) {
        const Json& o = j["output"];
        c.out_dir = o.value("directory", c.out_dir);
        if (o.contains("formats")) {
            c.formats.clear();
            for (const auto& f : o["formats"]) {
                std::string s = f.get<std::string>();
                if (s != "csv" && s != "json") invalid("output format '" + s + "' is not csv or json");
                c.formats.push_back(s);
            }
        }
    }
    c.seed = j.value("seed", std::uint64_t(1));
    c.jobs = j.value("jobs", 1);

    // kind-specific requirements that can be decided before running
    if (c.kind == "simulate") require_epsilon(c.numeric);
    if (c.kind == "sweep" || c.kind == "transport") epsilon_list(c.numeric);
    if (c.numeric.contains("epsilons")) epsilon_list(c.numeric);
    if (c.numeric.contains("t_range")) time_range(c.numeric);
    if (c.kind == "bifurcate" && c.model_name != "rotation_bifurcation")
        invalid("bifurcate needs a model with a scalar reduction (rotation_bifurcation)");
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    Json j = read_json(path);
    return parse_config(j);
}

bool RunManifest::all_pass() const {
    return std::all_of(invariants.begin(), invariants.end(), [](const InvariantCheck& c) { return c.pass; });
}

Json RunManifest::to_json() const {
    Json inv = Json::array();
    for (const auto& c : invariants) {
        Json e{{"name", c.name}, {"claim", c.claim}, {"value", c.value}, {"relation", c.relation}, {"pass", c.pass}};
        if (std::isfinite(c.lo)) e["lower"] = c.lo;
        if (std::isfinite(c.hi)) e["upper"] = c.hi;
        inv.push_back(e);
    }
    return {{"version", version}, {"status", status}, {"exit_code", exit_code}, {"stage", stage},
            {"error", error},     {"wall_time_s", wall_time}, {"config", config}, {"diagnostics", diagnostics},
            {"invariants", inv},  {"artifacts", artifacts}};
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
    RunManifest man;
    man.config = cfg.raw;
    man.config["resolved"] = {{"out_dir", cfg.out_dir}, {"seed", cfg.seed}, {"jobs", cfg.jobs}};
    auto start = std::chrono::steady_clock::now();
    try {
        Runner(cfg, man).run();
        if (!man.all_pass()) {
            man.status = "invariant_failure";
            man.exit_code = 4;
            for (const auto& c : man.invariants)
                if (!c.pass) {
                    man.stage = c.name;
                    break;
                }
        }
    } catch (const Error& e) {
        man.error = e.what();
        if (e.kind() == ErrorKind::ConfigInvalid) {
            man.status = "config_invalid";
            man.exit_code = 2;
        } else {
            man.status = "numerical_failure";
            man.exit_code = 3;
        }
    } catch (const std::exception& e) {
        man.error = e.what();
        man.status = "numerical_failure";
        man.exit_code = 3;
    }
    man.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
        write_json((std::filesystem::path(cfg.out_dir) / "manifest.json").string(), man.to_json());
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        if (man.exit_code == 0) man.exit_code = 3;
    }
    return man;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Adiabatic evolution laboratory for nonlinear eigenvalue problems"};
    app.require_subcommand(1);
    CLI::App* run = app.add_subcommand("run", "Run one experiment config");
    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    int jobs = 0;
    run->add_option("config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory (overrides output.directory)");
    run->add_option("--seed", seed, "Random seed (discriminant search)");
    run->add_option("--jobs", jobs, "Worker threads for independent epsilon jobs")->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const Error& e) {
        RunManifest man;
        // an unreadable config file is an input error too
        man.status = "config_invalid";
        man.exit_code = 2;
        man.stage = "config";
        man.error = e.what();
        man.config = {{"path", config_path}};
        std::string dir = out_dir.empty() ? std::string("out") : out_dir;
        try {
            write_json((std::filesystem::path(dir) / "manifest.json").string(), man.to_json());
        } catch (const Error&) {
        }
        std::cerr << e.what() << '\n';
        return man.exit_code;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (run->count("--seed")) cfg.seed = seed;
    if (jobs > 0) cfg.jobs = jobs;

    RunManifest man = run_experiment(cfg);
    int passed = int(std::count_if(man.invariants.begin(), man.invariants.end(), [](auto& c) { return c.pass; }));
    std::cout << cfg.kind << ": " << man.status << " (" << passed << "/" << man.invariants.size()
              << " invariants, " << man.wall_time << " s) -> " << cfg.out_dir << '\n';
    for (const auto& c : man.invariants)
        if (!c.pass) std::cout << "  failed " << c.name << " = " << c.value << '\n';
    if (!man.error.empty()) std::cerr << man.error << '\n';
    return man.exit_code;
}

} // namespace nlad
