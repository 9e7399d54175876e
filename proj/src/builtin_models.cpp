#include "nlad/builtin_models.hpp"
#include "nlad/quadrature.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

namespace nlad {

namespace {

constexpr double kPi = std::numbers::pi;

Mat pauli_x() {
    Mat s(2, 2);
    s << 0, 1, 1, 0;
    return s;
}

double bisect_zero(const std::function<double(double)>& f, double a, double b) {
    double fa = f(a);
    for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
        double c = 0.5 * (a + b), fc = f(c);
        if ((fc > 0) == (fa > 0)) {
            a = c;
            fa = fc;
        } else {
            b = c;
        }
    }
    return 0.5 * (a + b);
}

void finish(ModelSpec& m, int nt = 11, int nx = 11) { m.delta_bound = measure_delta(m, 0.0, 1.0, nt, nx); }

} // namespace

double ThetaPoly::operator()(double s) const { return scale * kPi * (s + A * s * (1 - s) * (s - s0)); }

double ThetaPoly::derivative(double s) const {
    // d/ds [s(1-s)(s-s0)] = -3s^2 + 2(1+s0)s - s0
    return scale * kPi * (1 + A * (-3 * s * s + 2 * (1 + s0) * s - s0));
}

ThetaShape theta_shape(const ThetaPoly& th, int samples) {
    ThetaShape sh;
    auto d = [&](double s) { return th.derivative(s); };
    double prev = d(0.0);
    double sprev = 0.0;
    for (int i = 1; i < samples; ++i) {
        double s = double(i) / (samples - 1);
        double cur = d(s);
        if (!sh.has_max && prev > 0 && cur <= 0 && s < 1.0) {
            sh.s_max = bisect_zero(d, sprev, s);
            sh.theta_max = th(sh.s_max);
            sh.has_max = true;
        } else if (sh.has_max && !sh.has_min && prev < 0 && cur >= 0 && s < 1.0) {
            sh.s_min = bisect_zero(d, sprev, s);
            sh.theta_min = th(sh.s_min);
            sh.has_min = true;
        }
        prev = cur;
        sprev = s;
    }
    sh.y_max = std::sqrt(sh.s_max);
    sh.fold_expected = sh.has_max && std::cos(sh.theta_max / 2) < sh.y_max;
    return sh;
}

ModelSpec two_level_flip(const ScalarFunction& gamma) {
    ModelSpec m;
    m.name = "two_level_flip";
    m.dim = 2;
    m.p = 1;
    m.is_real = true;
    m.selected_index = 1;
    m.h = [gamma](double t, const RVec& x) -> Mat { return gamma(t) * x(0) * pauli_x(); };
    m.dh_dx = {[gamma](double t, const RVec&) -> Mat { return gamma(t) * pauli_x(); }};
    m.dh_dt = [gamma](double t, const RVec& x) -> Mat { return gamma.derivative(t) * x(0) * pauli_x(); };
    finish(m);
    return m;
}

ModelSpec double_well_mcww(const ScalarFunction& kappa, const ScalarFunction& omega, const ScalarFunction& tilt) {
    ModelSpec m;
    m.name = "double_well_mcww";
    m.dim = 2;
    m.p = 2;
    m.is_real = true;
    m.selected_index = 0;
    m.h = [=](double t, const RVec& x) -> Mat {
        double k = kappa(t), w = omega(t), z = tilt(t);
        Mat h(2, 2);
        h << k * x(0) + z, w, w, k * x(1) - z;
        return h;
    };
    m.dh_dx = {[=](double t, const RVec&) -> Mat {
                   Mat d = Mat::Zero(2, 2);
                   d(0, 0) = kappa(t);
                   return d;
               },
               [=](double t, const RVec&) -> Mat {
                   Mat d = Mat::Zero(2, 2);
                   d(1, 1) = kappa(t);
                   return d;
               }};
    m.dh_dt = [=](double t, const RVec& x) -> Mat {
        double k = kappa.derivative(t), w = omega.derivative(t), z = tilt.derivative(t);
        Mat h(2, 2);
        h << k * x(0) + z, w, w, k * x(1) - z;
        return h;
    };
    finish(m);
    return m;
}

ModelSpec rotation_bifurcation(const ThetaPoly& theta, bool require_shape) {
    if (require_shape) {
        ThetaShape sh = theta_shape(theta);
        if (!sh.has_max || !sh.has_min || !(sh.theta_max < kPi) || sh.theta_min < 0) {
            std::ostringstream os;
            os << "theta(s) lacks an interior maximum below pi followed by a minimum (A=" << theta.A
               << ", s0=" << theta.s0 << ", scale=" << theta.scale << ")";
            throw Error(ErrorKind::ConfigInvalid, os.str());
        }
    }
    ModelSpec m;
    m.name = "rotation_bifurcation";
    m.dim = 2;
    m.p = 1;
    m.is_real = true;
    m.selected_index = 1; // eigenvalue +1
    m.h = [theta](double t, const RVec& x) -> Mat {
        double a = t * theta(x(0));
        Mat h(2, 2);
        h << std::cos(a), std::sin(a), std::sin(a), -std::cos(a);
        return h;
    };
    auto rot_deriv = [](double a) {
        Mat d(2, 2);
        d << -std::sin(a), std::cos(a), std::cos(a), std::sin(a);
        return d;
    };
    m.dh_dx = {[theta, rot_deriv](double t, const RVec& x) -> Mat {
        return t * theta.derivative(x(0)) * rot_deriv(t * theta(x(0)));
    }};
    m.dh_dt = [theta, rot_deriv](double t, const RVec& x) -> Mat {
        return theta(x(0)) * rot_deriv(t * theta(x(0)));
    };
    m.reduction = ScalarReduction{[theta](double s) { return theta(s); },
                                  [theta](double s) { return theta.derivative(s); }};
    finish(m);
    return m;
}

RMat hermite_functions(int n, const RVec& y) {
    RMat P(n, y.size());
    P.row(0) = std::pow(kPi, -0.25) * (-0.5 * y.array().square()).exp();
    if (n > 1) P.row(1) = std::sqrt(2.0) * y.transpose().array() * P.row(0).array();
    for (int k = 1; k + 1 < n; ++k)
        P.row(k + 1) = std::sqrt(2.0 / (k + 1)) * y.transpose().array() * P.row(k).array() -
                       std::sqrt(double(k) / (k + 1)) * P.row(k - 1).array();
    return P;
}

GaussHermite gauss_hermite(int m) {
    // Golub-Welsch for the physicists' weight exp(-y^2)
    RMat J = RMat::Zero(m, m);
    for (int k = 1; k < m; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<RMat> es(J);
    RVec y = es.eigenvalues();
    // Newton polish on psi_m(y) = 0, psi_m' = sqrt(2m) psi_{m-1} - y psi_m
    for (int it = 0; it < 3; ++it) {
        RMat P = hermite_functions(m + 1, y);
        for (int i = 0; i < m; ++i) {
            double f = P(m, i), df = std::sqrt(2.0 * m) * P(m - 1, i) - y(i) * f;
            y(i) -= f / df;
        }
    }
    RMat P = hermite_functions(m, y);
    GaussHermite gh;
    gh.nodes = y;
    gh.scaled_weights = P.array().square().colwise().sum().transpose().inverse();
    return gh;
}

AnharmonicOperators anharmonic_operators(int n, int quad, double L) {
    if (quad < n + 5) throw Error(ErrorKind::ConfigInvalid, "quadrature size must be at least N + 5");
    GaussHermite gh = gauss_hermite(quad);
    RMat P = hermite_functions(n, gh.nodes);
    auto mel = [&](const RVec& f) -> RMat {
        RMat Pw = P * (gh.scaled_weights.array() * f.array()).matrix().asDiagonal();
        return Pw * P.transpose();
    };
    const RVec& Y = gh.nodes;
    RMat Y1 = mel(Y), Y2 = mel(Y.array().square().matrix()), Y8 = mel(Y.array().pow(8).matrix());
    AnharmonicOperators ops;
    ops.L = L;
    RMat number = RMat::Zero(n, n);
    for (int k = 0; k < n; ++k) number(k, k) = k + 0.5;
    // basis phi_k(y) = psi_k(y / L) / sqrt(L): -1/2 d^2/dy^2 = (number - Y^2 / 2) / L^2
    ops.kinetic = (number - 0.5 * Y2) / (L * L);
    ops.y1 = L * Y1;
    ops.y2 = L * L * Y2;
    ops.y8 = std::pow(L, 8) * Y8;
    ops.h0 = ops.kinetic + ops.y8;
    ops.h0 = 0.5 * (ops.h0 + ops.h0.transpose()).eval();
    return ops;
}

ModelSpec truncated_anharmonic(int n, int quad, const ScalarFunction& a, const ScalarFunction& b, double L) {
    if (n < 8) throw Error(ErrorKind::TruncationTooSmall, "truncated_anharmonic needs N >= 8");
    auto ops = std::make_shared<AnharmonicOperators>(anharmonic_operators(n, quad, L));
    ModelSpec m;
    m.name = "truncated_anharmonic";
    m.dim = n;
    m.p = 2;
    m.is_real = true;
    m.selected_index = 0;
    const int N = n;
    // W = -b e^{x2} (y - a x1)^2
    auto wmat = [ops, N](double aa, double bb, const RVec& x) -> RMat {
        double ax = aa * x(0);
        RMat id = RMat::Identity(N, N);
        return -bb * std::exp(x(1)) * (ops->y2 - 2 * ax * ops->y1 + ax * ax * id);
    };
    m.h = [=](double t, const RVec& x) -> Mat {
        return (ops->h0 + wmat(a(t), b(t), x)).cast<cplx>();
    };
    m.dh_dx = {[=](double t, const RVec& x) -> Mat {
                   double aa = a(t), bb = b(t);
                   RMat id = RMat::Identity(N, N);
                   return (2 * aa * bb * std::exp(x(1)) * (ops->y1 - aa * x(0) * id)).cast<cplx>();
               },
               [=](double t, const RVec& x) -> Mat { return wmat(a(t), b(t), x).cast<cplx>(); }};
    m.dh_dt = [=](double t, const RVec& x) -> Mat {
        double aa = a(t), bb = b(t), da = a.derivative(t), db = b.derivative(t);
        RMat id = RMat::Identity(N, N);
        double ax = aa * x(0);
        RMat shape = ops->y2 - 2 * ax * ops->y1 + ax * ax * id;
        RMat dshape = -2 * da * x(0) * ops->y1 + 2 * ax * da * x(0) * id;
        return (-std::exp(x(1)) * (db * shape + bb * dshape)).cast<cplx>();
    };
    finish(m, 3, 5);
    return m;
}

TruncationReport anharmonic_truncation(int n, int quad, double L) {
    AnharmonicOperators ops = anharmonic_operators(n, quad, L);
    Eigen::SelfAdjointEigenSolver<RMat> full(ops.h0, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<RMat> half(ops.h0.topLeftCorner(n / 2, n / 2), Eigen::EigenvaluesOnly);
    TruncationReport r;
    for (int k = 0; k < n; ++k) r.full.push_back(full.eigenvalues()(k));
    for (int k = 0; k < n / 2; ++k) r.half.push_back(half.eigenvalues()(k));
    while (r.agreeing < n / 2 &&
           std::abs(r.full[r.agreeing] - r.half[r.agreeing]) <= 1e-6 * std::abs(r.full[r.agreeing]))
        ++r.agreeing;
    return r;
}

GapFit anharmonic_gap_fit(int n, int quad, double L, int count) {
    if (count < 3 || count > n) throw Error(ErrorKind::ConfigInvalid, "gap fit needs 3 <= count <= N");
    AnharmonicOperators ops = anharmonic_operators(n, quad, L);
    Eigen::SelfAdjointEigenSolver<RMat> es(ops.h0, Eigen::EigenvaluesOnly);
    GapFit g;
    std::vector<double> js;
    for (int j = 1; j < count; ++j) {
        js.push_back(j);
        g.gaps.push_back(es.eigenvalues()(j) - es.eigenvalues()(j - 1));
    }
    LinearFit f = loglog_fit(js, g.gaps);
    g.alpha = f.slope;
    g.c0 = std::exp(f.intercept);
    g.r2 = f.r2;
    g.min_ratio = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < js.size(); ++i) g.min_ratio = std::min(g.min_ratio, g.gaps[i] / (g.c0 * std::pow(js[i], g.alpha)));
    return g;
}

ModelSpec diagonal_model(const std::vector<double>& diag, int p, int selected) {
    ModelSpec m;
    m.name = "diagonal";
    m.dim = int(diag.size());
    m.p = p;
    m.is_real = true;
    m.selected_index = selected;
    Mat D = Mat::Zero(m.dim, m.dim);
    for (int k = 0; k < m.dim; ++k) D(k, k) = diag[k];
    m.h = [D](double, const RVec&) -> Mat { return D; };
    const int n = m.dim;
    for (int j = 0; j < p; ++j) m.dh_dx.push_back([n](double, const RVec&) -> Mat { return Mat::Zero(n, n); });
    m.dh_dt = [n](double, const RVec&) -> Mat { return Mat::Zero(n, n); };
    m.delta_bound = 0.0;
    return m;
}

ModelSpec rotated_diagonal_model(const std::vector<double>& diag, const RMat& A, int selected) {
    ModelSpec m;
    m.name = "rotated_diagonal";
    m.dim = int(diag.size());
    m.p = 1;
    m.is_real = true;
    m.selected_index = selected;
    RMat D = RMat::Zero(m.dim, m.dim);
    for (int k = 0; k < m.dim; ++k) D(k, k) = diag[k];
    auto H = [D, A](double x) -> RMat {
        RMat R = (x * A).exp();
        return R * D * R.transpose();
    };
    m.h = [H](double, const RVec& x) -> Mat { return H(x(0)).cast<cplx>(); };
    // d/dx (R D R^T) = [A, H]
    m.dh_dx = {[H, A](double, const RVec& x) -> Mat {
        RMat h = H(x(0));
        return (A * h - h * A).cast<cplx>();
    }};
    const int n = m.dim;
    m.dh_dt = [n](double, const RVec&) -> Mat { return Mat::Zero(n, n); };
    finish(m);
    return m;
}

ModelSpec random_real_model(std::mt19937_64& rng, int n, int p, double rel_delta) {
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    std::normal_distribution<double> G(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<double> lam(n);
    int sel = 0;
    double g0 = 0.0;
    // distinct, well separated, and no pair (k, l) mirrored about the tracked level
    for (;;) {
        for (auto& l : lam) l = U(rng);
        std::sort(lam.begin(), lam.end());
        sel = pick(rng);
        g0 = 1e300;
        for (int k = 1; k < n; ++k) g0 = std::min(g0, lam[k] - lam[k - 1]);
        if (g0 < 0.4) continue;
        double mirror = 1e300;
        for (int k = 0; k < n; ++k)
            for (int l = k + 1; l < n; ++l)
                if (k != sel && l != sel) mirror = std::min(mirror, std::abs(lam[k] + lam[l] - 2 * lam[sel]));
        if (mirror >= 0.3) break;
    }
    auto rand_sym = [&](double target) {
        RMat B(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) B(i, j) = G(rng);
        B = 0.5 * (B + B.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<RMat> es(B, Eigen::EigenvaluesOnly);
        double nrm = es.eigenvalues().cwiseAbs().maxCoeff();
        return RMat(B * (target / nrm));
    };
    RMat Q = Eigen::HouseholderQR<RMat>(rand_sym(1.0)).householderQ();
    RMat A0 = Q * RVec::Map(lam.data(), n).asDiagonal() * Q.transpose();
    RMat C = rand_sym(0.05 * g0);
    // Weyl: on t, x_j in [0,1] the gap stays above g0 - 2 (||C|| + p delta), so
    // delta = rel_delta * that lower bound keeps delta <= rel_delta * g everywhere
    const double delta = rel_delta * 0.9 * g0 / (1.0 + 2.0 * p * rel_delta);
    std::vector<RMat> B;
    for (int j = 0; j < p; ++j) B.push_back(rand_sym(delta));

    ModelSpec m;
    m.name = "random_real";
    m.dim = n;
    m.p = p;
    m.is_real = true;
    m.selected_index = sel;
    m.h = [A0, C, B](double t, const RVec& x) -> Mat {
        RMat h = A0 + t * C;
        for (size_t j = 0; j < B.size(); ++j) h += x(j) * B[j];
        return h.cast<cplx>();
    };
    for (int j = 0; j < p; ++j) {
        RMat Bj = B[j];
        m.dh_dx.push_back([Bj](double, const RVec&) -> Mat { return Bj.cast<cplx>(); });
    }
    m.dh_dt = [C](double, const RVec&) -> Mat { return C.cast<cplx>(); };
    m.delta_bound = delta;
    return m;
}

std::vector<ParameterPoint> uniform_grid(int p, double t0, double t1, int nt, double x0, double x1, int nx) {
    std::vector<ParameterPoint> g;
    // full tensor grid for p <= 2, diagonal x sweep beyond
    for (int i = 0; i < nt; ++i) {
        double t = nt > 1 ? t0 + (t1 - t0) * i / (nt - 1) : t0;
        if (p == 1) {
            for (int a = 0; a < nx; ++a) {
                RVec x(1);
                x(0) = nx > 1 ? x0 + (x1 - x0) * a / (nx - 1) : x0;
                g.push_back({t, x});
            }
        } else if (p == 2) {
            for (int a = 0; a < nx; ++a)
                for (int b = 0; b < nx; ++b) {
                    RVec x(2);
                    x(0) = nx > 1 ? x0 + (x1 - x0) * a / (nx - 1) : x0;
                    x(1) = nx > 1 ? x0 + (x1 - x0) * b / (nx - 1) : x0;
                    g.push_back({t, x});
                }
        } else {
            for (int a = 0; a < nx; ++a) {
                RVec x = RVec::Constant(p, nx > 1 ? x0 + (x1 - x0) * a / (nx - 1) : x0);
                g.push_back({t, x});
            }
        }
    }
    return g;
}

double measure_delta(const ModelSpec& m, double t0, double t1, int nt, int nx) {
    double d = 0.0;
    for (const auto& q : uniform_grid(m.p, t0, t1, nt, 0.0, 1.0, nx))
        for (int j = 0; j < m.p; ++j) d = std::max(d, hermitian_norm(dh_dx(m, q.t, q.x, j)));
    return d;
}

std::vector<std::string> builtin_model_names() {
    return {"two_level_flip", "double_well_mcww", "rotation_bifurcation", "truncated_anharmonic"};
}

ModelSpec builtin_model(const std::string& name, const ModelParams& p) {
    ModelSpec m;
    if (name == "two_level_flip")
        m = two_level_flip(p.gamma);
    else if (name == "double_well_mcww")
        m = double_well_mcww(p.kappa, p.omega, p.tilt);
    else if (name == "rotation_bifurcation")
        m = rotation_bifurcation(p.theta);
    else if (name == "truncated_anharmonic")
        m = truncated_anharmonic(p.truncation, p.quadrature, p.a, p.b, p.basis_scale);
    else
        throw Error(ErrorKind::UnknownModel, "no builtin model named '" + name + "'");
    if (p.selected_index >= 0) m.selected_index = p.selected_index;
    return m;
}

} // namespace nlad
