#include "nlad/linearized.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace nlad {

namespace {

Mat blockdiag(const Mat& a, const Mat& b) {
    Mat m = Mat::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    m.topLeftCorner(a.rows(), a.cols()) = a;
    m.bottomRightCorner(b.rows(), b.cols()) = b;
    return m;
}

Vec stack(const Vec& a, const Vec& b) {
    Vec s(a.size() + b.size());
    s << a, b;
    return s;
}

using Poly = std::vector<cplx>;

Poly poly_mul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, cplx(0));
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

Poly poly_add(Poly a, const Poly& b) {
    if (b.size() > a.size()) a.resize(b.size(), cplx(0));
    for (size_t i = 0; i < b.size(); ++i) a[i] += b[i];
    return a;
}

} // namespace

DoubledOperator make_doubled(const Mat& H_shift, const Vec& omega, const std::vector<Vec>& v, double t) {
    DoubledOperator op;
    op.t = t;
    op.n = int(H_shift.rows());
    op.p = int(v.size());
    op.omega = omega;
    op.H_shift = H_shift;
    op.v = v;
    const int n = op.n;
    op.F0 = blockdiag(H_shift, -H_shift.conjugate());
    op.G = Mat::Zero(2 * n, 2 * n);
    for (int j = 0; j < op.p; ++j) {
        Vec ej = Vec::Zero(n);
        ej(j) = 1.0;
        op.mu.push_back(stack(v[j], -v[j].conjugate()));
        op.nu.push_back(stack(omega(j) * ej, std::conj(omega(j)) * ej));
        op.G += op.mu.back() * op.nu.back().adjoint();
    }
    op.F = op.F0 + op.G;
    op.shifted = spectral_decompose(H_shift);
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < op.shifted.size(); ++k)
        if (std::abs(op.shifted.eigenvalues[k]) < best) {
            best = std::abs(op.shifted.eigenvalues[k]);
            op.kernel_index = k;
        }
    return op;
}

DoubledOperator build_f(const ModelSpec& m, double t, const Vec& omega) {
    RVec x = populations(omega, m.p);
    Mat h = evaluate_h(m, t, x);
    double lambda = omega.dot(h * omega).real();
    Mat hs = h - lambda * Mat::Identity(m.dim, m.dim);
    std::vector<Vec> v;
    for (int j = 0; j < m.p; ++j) {
        Mat D = dh_dx(m, t, x, j);
        double dl = omega.dot(D * omega).real(); // d lambda / d x_j
        v.push_back(D * omega - dl * omega);
    }
    DoubledOperator op = make_doubled(hs, omega, v, t);
    op.lambda = lambda;
    return op;
}

DoubledOperator build_f(const ModelSpec& m, const EigenPath& path, size_t k) {
    if (path.residual[k] > 1e-8) {
        std::ostringstream os;
        os << "eigenpath residual " << path.residual[k] << " at t=" << path.times[k];
        throw Error(ErrorKind::NoConvergence, os.str());
    }
    return build_f(m, path.times[k], path.omega[k]);
}

BiorthogonalSpectrum spectrum_f(const Mat& F, double cluster_tol, bool throw_ill) {
    const int n = int(F.rows());
    BiorthogonalSpectrum s;
    s.cluster_tol = cluster_tol < 0 ? 1e-6 * std::max(opnorm(F), 1e-300) : cluster_tol;
    const double tol = s.cluster_tol;

    Eigen::ComplexEigenSolver<Mat> er(F);
    Eigen::ComplexEigenSolver<Mat> el(F.adjoint());
    if (er.info() != Eigen::Success || el.info() != Eigen::Success)
        throw Error(ErrorKind::NoConvergence, "non-Hermitian eigensolver failed");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    const auto& ev = er.eigenvalues();
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (std::abs(ev(a).real() - ev(b).real()) > tol) return ev(a).real() < ev(b).real();
        return ev(a).imag() < ev(b).imag();
    });
    s.eigenvalues.resize(n);
    Mat psi(n, n);
    for (int i = 0; i < n; ++i) {
        s.eigenvalues[i] = ev(order[i]);
        psi.col(i) = er.eigenvectors().col(order[i]).normalized();
    }

    // clusters: connected components of |l_i - l_j| <= tol
    std::vector<int> comp(n, -1);
    int nc = 0;
    for (int i = 0; i < n; ++i) {
        if (comp[i] >= 0) continue;
        std::vector<int> stackv{i};
        comp[i] = nc;
        while (!stackv.empty()) {
            int a = stackv.back();
            stackv.pop_back();
            for (int b = 0; b < n; ++b)
                if (comp[b] < 0 && std::abs(s.eigenvalues[a] - s.eigenvalues[b]) <= tol) {
                    comp[b] = nc;
                    stackv.push_back(b);
                }
        }
        ++nc;
    }
    s.cluster_of = comp;
    s.clusters.resize(nc);
    for (int i = 0; i < n; ++i) s.clusters[comp[i]].members.push_back(i);

    // left vectors: adjoint eigenvalues conj(l), matched greedily by proximity
    std::vector<bool> used(n, false);
    Mat phi(n, n);
    s.condition.assign(n, 1.0);
    for (int c = 0; c < nc; ++c) {
        Cluster& cl = s.clusters[c];
        const int m = int(cl.members.size());
        cl.mean = 0;
        for (int i : cl.members) cl.mean += s.eigenvalues[i];
        cl.mean /= double(m);
        std::vector<std::pair<double, int>> cand;
        for (int j = 0; j < n; ++j)
            if (!used[j]) cand.push_back({std::abs(std::conj(el.eigenvalues()(j)) - cl.mean), j});
        std::sort(cand.begin(), cand.end());
        Mat Psi(n, m), Phi(n, m);
        for (int a = 0; a < m; ++a) {
            used[cand[a].second] = true;
            Phi.col(a) = el.eigenvectors().col(cand[a].second).normalized();
            Psi.col(a) = psi.col(cl.members[a]);
        }
        for (int a = 0; a < m; ++a) {
            int i = cl.members[a];
            cplx d = Phi.col(a).dot(Psi.col(a));
            s.condition[i] = 1.0 / std::max(std::abs(d), 1e-300);
        }
        Mat M = Phi.adjoint() * Psi;
        Eigen::FullPivLU<Mat> lu(M);
        Mat PhiB = Phi * lu.inverse().adjoint(); // PhiB^H Psi = Id
        for (int a = 0; a < m; ++a) {
            phi.col(cl.members[a]) = PhiB.col(a);
            if (m > 1) s.condition[cl.members[a]] = Psi.col(a).norm() * PhiB.col(a).norm();
        }
        cl.projector = Psi * PhiB.adjoint();
        cl.condition = opnorm(cl.projector);
        cl.nilpotent_norm = opnorm((F - cl.mean * Mat::Identity(n, n)) * cl.projector);
        if (throw_ill && (cl.condition > 1e8 || !std::isfinite(cl.condition))) {
            std::ostringstream os;
            os << "cluster at " << cl.mean << " (eigenvalue index " << cl.members.front() << ") has condition "
               << cl.condition;
            throw Error(ErrorKind::IllConditioned, os.str());
        }
    }
    s.right = psi;
    s.left = phi;

    for (const auto& z : s.eigenvalues) s.max_imag = std::max(s.max_imag, std::abs(z.imag()));
    s.real_verdict = s.max_imag <= tol;

    // labels: kernel 0, positive real part 1, 2, ..., negative -1, -2, ... by |Re|
    std::vector<int> pos, neg;
    for (int c = 0; c < nc; ++c) {
        if (std::abs(s.clusters[c].mean) <= tol) {
            s.kernel_cluster = c;
            s.clusters[c].label = 0;
        } else if (s.clusters[c].mean.real() > 0) {
            pos.push_back(c);
        } else {
            neg.push_back(c);
        }
    }
    auto by_abs = [&](int a, int b) { return std::abs(s.clusters[a].mean.real()) < std::abs(s.clusters[b].mean.real()); };
    std::sort(pos.begin(), pos.end(), by_abs);
    std::sort(neg.begin(), neg.end(), by_abs);
    for (size_t i = 0; i < pos.size(); ++i) s.clusters[pos[i]].label = int(i) + 1;
    for (size_t i = 0; i < neg.size(); ++i) s.clusters[neg[i]].label = -int(i) - 1;
    s.symmetric_pairing = pos.size() == neg.size();
    for (size_t i = 0; s.symmetric_pairing && i < pos.size(); ++i)
        if (std::abs(s.clusters[pos[i]].mean + s.clusters[neg[i]].mean) > 10 * tol) s.symmetric_pairing = false;
    return s;
}

double quadruple_defect(const BiorthogonalSpectrum& s, const DoubledOperator& op, double off_tol) {
    std::vector<double> base;
    for (double l : op.shifted.eigenvalues) {
        base.push_back(l);
        base.push_back(-l);
    }
    auto nearest = [&](cplx w) {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& z : s.eigenvalues) d = std::min(d, std::abs(z - w));
        return d;
    };
    double worst = 0;
    for (const auto& z : s.eigenvalues) {
        double dist = std::numeric_limits<double>::infinity();
        for (double b : base) dist = std::min(dist, std::abs(z - b));
        if (dist <= off_tol) continue;
        worst = std::max({worst, nearest(std::conj(z)), nearest(-z), nearest(-std::conj(z))});
    }
    return worst;
}

cplx aw_determinant(const DoubledOperator& op, cplx z) {
    const auto& sd = op.shifted;
    for (double l : sd.eigenvalues)
        if (std::abs(z - l) < 1e-8 || std::abs(z + l) < 1e-8)
            throw Error(ErrorKind::TooCloseToUnperturbedSpectrum, "z is within 1e-8 of sigma(F0)");
    const int n = op.n;
    Mat top = Mat::Zero(n, n), bot = Mat::Zero(n, n);
    for (int k = 0; k < sd.size(); ++k) {
        top += sd.projectors[k] / (sd.eigenvalues[k] - z);
        bot += sd.projectors[k].conjugate() / (-sd.eigenvalues[k] - z);
    }
    Mat R0 = blockdiag(top, bot); // (F0 - z)^{-1}
    Mat M(op.p, op.p);
    for (int j = 0; j < op.p; ++j) {
        Vec r = R0 * op.mu[j];
        for (int k = 0; k < op.p; ++k) M(j, k) = (j == k ? 1.0 : 0.0) + op.nu[k].dot(r);
    }
    return M.determinant();
}

cplx AWNumerator::operator()(cplx z) const {
    const size_t m = lambdas.size();
    cplx total = 1.0;
    for (double l : lambdas) total *= (l * l - z * z);
    for (size_t k = 0; k < m; ++k) {
        cplx rest = 1.0;
        for (size_t j = 0; j < m; ++j)
            if (j != k) rest *= (lambdas[j] * lambdas[j] - z * z);
        total += (a[k] * (lambdas[k] + z) + b[k] * (lambdas[k] - z)) * rest;
    }
    return total;
}

AWNumerator aw_numerator_p1(const DoubledOperator& op) {
    if (op.p != 1) throw Error(ErrorKind::NotScalarNonlinearity, "closed-form determinant needs p = 1");
    AWNumerator w;
    const auto& sd = op.shifted;
    const cplx w1 = op.omega(0);
    std::vector<cplx>& a = w.a;
    std::vector<cplx>& b = w.b;
    for (int k = 0; k < sd.size(); ++k) {
        if (k == op.kernel_index) continue;
        double l = sd.eigenvalues[k];
        cplx c = (sd.projectors[k] * op.v[0])(0); // <e1|P_k v1>
        w.lambdas.push_back(l);
        w.c.push_back(c);
        a.push_back(std::conj(w1) * c);
        b.push_back(w1 * std::conj(c));
    }
    // wt(z) = prod (l_k^2 - z^2) + sum_k [a_k (l_k + z) + b_k (l_k - z)] prod_{j != k} (l_j^2 - z^2)
    const size_t m = w.lambdas.size();
    auto factor = [&](size_t k) { return Poly{cplx(w.lambdas[k] * w.lambdas[k]), 0.0, -1.0}; };
    Poly total{1.0};
    for (size_t k = 0; k < m; ++k) total = poly_mul(total, factor(k));
    bool even = true;
    for (size_t k = 0; k < m; ++k) {
        Poly rest{1.0};
        for (size_t j = 0; j < m; ++j)
            if (j != k) rest = poly_mul(rest, factor(j));
        Poly lin{(a[k] + b[k]) * w.lambdas[k], a[k] - b[k]};
        if (std::abs(a[k] - b[k]) > 1e-14 * (1.0 + std::abs(a[k]))) even = false;
        total = poly_add(total, poly_mul(lin, rest));
    }
    if (even)
        for (size_t i = 1; i < total.size(); i += 2) total[i] = 0.0;
    w.coeffs = total;
    w.even = even;
    return w;
}

cplx aw_closed_form(const DoubledOperator& op, cplx z) {
    AWNumerator w = aw_numerator_p1(op);
    cplx den = 1.0;
    for (double l : w.lambdas) den *= (l * l - z * z);
    return w(z) / den;
}

std::vector<cplx> polynomial_roots(const std::vector<cplx>& coeffs) {
    Poly c = coeffs;
    while (c.size() > 1 && std::abs(c.back()) == 0.0) c.pop_back();
    const int d = int(c.size()) - 1;
    if (d < 1) return {};
    Mat comp = Mat::Zero(d, d);
    for (int i = 1; i < d; ++i) comp(i, i - 1) = 1.0;
    for (int i = 0; i < d; ++i) comp(i, d - 1) = -c[i] / c[d];
    Eigen::ComplexEigenSolver<Mat> es(comp, false);
    std::vector<cplx> r(es.eigenvalues().data(), es.eigenvalues().data() + d);
    return r;
}

std::vector<cplx> aw_roots_p1(const DoubledOperator& op) {
    AWNumerator w = aw_numerator_p1(op);
    std::vector<cplx> roots;
    if (w.even) {
        // polynomial in u = z^2
        Poly cu;
        for (size_t i = 0; i < w.coeffs.size(); i += 2) cu.push_back(w.coeffs[i]);
        for (cplx u : polynomial_roots(cu)) {
            cplx z = std::sqrt(u);
            roots.push_back(z);
            roots.push_back(-z);
        }
    } else {
        roots = polynomial_roots(w.coeffs);
    }
    std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return roots;
}

int aw_winding(const DoubledOperator& op, cplx center, double radius, int samples) {
    double total = 0;
    cplx prev = aw_determinant(op, center + radius);
    for (int k = 1; k <= samples; ++k) {
        cplx z = center + radius * std::exp(I * (2.0 * std::numbers::pi * k / samples));
        cplx cur = aw_determinant(op, z);
        total += std::arg(cur / prev);
        prev = cur;
    }
    return int(std::lround(total / (2.0 * std::numbers::pi)));
}

Mat kernel_projector(const DoubledOperator& op, double cluster_tol) {
    const int n = op.n;
    double tol = cluster_tol < 0 ? 1e-6 * opnorm(op.F) : cluster_tol;
    Eigen::ComplexEigenSolver<Mat> es(op.F, false);
    std::vector<double> mags;
    for (int i = 0; i < es.eigenvalues().size(); ++i) mags.push_back(std::abs(es.eigenvalues()(i)));
    std::sort(mags.begin(), mags.end());
    if (mags.size() > 2 && !(mags[2] > 10 * tol)) {
        std::ostringstream os;
        os << "third smallest |l| = " << mags[2] << " against cluster tolerance " << tol;
        throw Error(ErrorKind::GapTooSmall, os.str());
    }
    // reduced inverse of F0 on ran(Q0~)
    Mat Hp = Mat::Zero(n, n);
    for (int k = 0; k < op.shifted.size(); ++k)
        if (k != op.kernel_index) Hp += op.shifted.projectors[k] / op.shifted.eigenvalues[k];
    Mat F0inv = blockdiag(Hp, -Hp.conjugate());
    Mat P0t = blockdiag(op.omega * op.omega.adjoint(), op.omega.conjugate() * op.omega.transpose());
    Mat A = Mat::Identity(2 * n, 2 * n) + F0inv * op.G;
    return A.partialPivLu().solve(P0t);
}

P1Projector p1_eigenprojector(const DoubledOperator& op, int k) {
    if (op.p != 1) throw Error(ErrorKind::NotScalarNonlinearity, "projector formula needs p = 1");
    if (k < 0 || k >= op.shifted.size() || k == op.kernel_index)
        throw Error(ErrorKind::ConfigInvalid, "k must index a nonzero shifted eigenvalue");
    AWNumerator w = aw_numerator_p1(op);
    const double lk = op.shifted.eigenvalues[k];
    cplx wt = w(lk);
    double scale = 1.0;
    for (double l : w.lambdas) scale *= std::max(1.0, l * l);
    if (std::abs(wt) <= 1e-13 * scale) throw Error(ErrorKind::NumeratorVanishes, "wt(lambda_k) vanishes");
    cplx prod = 1.0;
    for (double l : w.lambdas)
        if (std::abs(l - lk) > 1e-12) prod *= (l * l - lk * lk);
    P1Projector r;
    r.s = 2.0 * lk * prod / wt;
    const int n = op.n;
    const Mat& Pk = op.shifted.projectors[k];
    const cplx w1 = std::conj(op.omega(0));
    Mat e1t = Mat::Zero(1, n);
    e1t(0, 0) = 1.0;
    Mat X = Pk * (Mat::Identity(n, n) - w1 * r.s * op.v[0] * e1t) * Pk;
    r.identity = w1 * r.s * (Pk * op.v[0])(0);
    r.projector = Mat::Zero(2 * n, 2 * n);
    r.projector.topLeftCorner(n, n) = X;
    r.idempotency = (r.projector * r.projector - r.projector).norm();
    return r;
}

double realness_discriminant(const Vec& e1, const Vec& e2, const Vec& omega, const Vec& u1, const Vec& u2) {
    for (const Vec* u : {&u1, &u2})
        if (std::abs(u->dot(omega)) > 1e-10 * std::max(1.0, u->norm()))
            throw Error(ErrorKind::ConstraintViolated, "<u_j|omega> != 0");
    cplx w1 = omega.dot(e1), w2 = omega.dot(e2);
    cplx a = w1 * e1.dot(u1) - w2 * e2.dot(u2);
    cplx d = a * a + 4.0 * w1 * w2 * e1.dot(u2) * e2.dot(u1);
    return d.real();
}

double instance_discriminant(const DiscriminantInstance& inst, const RMat& e) {
    Vec w = inst.omega.cast<cplx>();
    Vec u1 = (inst.P1 * inst.v[0]).cast<cplx>(), u2 = (inst.P1 * inst.v[1]).cast<cplx>();
    return realness_discriminant(e.col(0).cast<cplx>(), e.col(1).cast<cplx>(), w, u1, u2);
}

namespace {

RMat random_orthogonal(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> G(0.0, 1.0);
    RMat A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = G(rng);
    Eigen::HouseholderQR<RMat> qr(A);
    RMat Q = qr.householderQ();
    RMat R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j)
        if (R(j, j) < 0) Q.col(j) *= -1.0;
    return Q;
}

// orthonormal basis of omega^perp as columns
RMat complement_basis(const RVec& w) {
    const int n = int(w.size());
    RMat wm = w;
    Eigen::HouseholderQR<RMat> qr(wm);
    RMat Q = qr.householderQ() * RMat::Identity(n, n);
    return Q.rightCols(n - 1);
}

} // namespace

DiscriminantInstance search_negative_discriminant(std::mt19937_64& rng, int dim, long max_draws, double threshold) {
    if (dim < 5) throw Error(ErrorKind::ConfigInvalid, "discriminant search needs dimension >= 5");
    std::normal_distribution<double> G(0.0, 1.0);
    RMat e = RMat::Identity(dim, 2);
    for (long d = 1; d <= max_draws; ++d) {
        DiscriminantInstance inst;
        inst.omega = RVec(dim);
        for (int i = 0; i < dim; ++i) inst.omega(i) = G(rng);
        inst.omega.normalize();
        RMat Qp = complement_basis(inst.omega) * random_orthogonal(rng, dim - 1);
        RMat B1 = Qp.leftCols(2), B2 = Qp.middleCols(2, dim - 3);
        inst.P1 = B1 * B1.transpose();
        inst.P2 = B2 * B2.transpose();
        for (int j = 0; j < 2; ++j) {
            RVec g(dim - 1);
            for (int i = 0; i < dim - 1; ++i) g(i) = G(rng);
            inst.v.push_back(complement_basis(inst.omega) * g);
        }
        inst.e = e;
        if (std::abs(inst.omega(0)) < 0.1 || std::abs(inst.omega(1)) < 0.1) continue;
        inst.discriminant = instance_discriminant(inst, e);
        inst.draws = d;
        if (inst.discriminant < threshold) return inst;
    }
    std::ostringstream os;
    os << "no instance below " << threshold << " in " << max_draws << " draws";
    throw Error(ErrorKind::NoConvergence, os.str());
}

DoubledOperator discriminant_operator(const DiscriminantInstance& inst, double lambda1, double lambda2) {
    const int n = int(inst.omega.size());
    // rotate so that e_1, e_2 become the standard basis directions of the nonlinearity
    RMat Q = RMat::Identity(n, n);
    RMat E = inst.e;
    if (!E.isApprox(RMat::Identity(n, 2))) {
        Eigen::HouseholderQR<RMat> qr(E);
        Q = qr.householderQ();
        for (int j = 0; j < 2; ++j)
            if (Q.col(j).dot(E.col(j)) < 0) Q.col(j) *= -1.0;
    }
    RMat hs = lambda1 * inst.P1 + lambda2 * inst.P2;
    RMat hq = Q.transpose() * hs * Q;
    std::vector<Vec> v;
    for (const auto& vj : inst.v) v.push_back((Q.transpose() * vj).cast<cplx>());
    return make_doubled(hq.cast<cplx>(), (Q.transpose() * inst.omega).cast<cplx>(), v);
}

SignFlip find_sign_flip(const DiscriminantInstance& inst, std::mt19937_64& rng, long max_draws) {
    const int n = int(inst.omega.size());
    RMat C = complement_basis(inst.omega);
    double base = instance_discriminant(inst, inst.e);
    SignFlip sf;
    for (long d = 1; d <= max_draws; ++d) {
        RMat R = inst.omega * inst.omega.transpose() + C * random_orthogonal(rng, n - 1) * C.transpose();
        double val = instance_discriminant(inst, R * inst.e);
        if ((val > 0) != (base > 0) && std::abs(val) > 1e-3) {
            sf.R = R;
            sf.discriminant = val;
            sf.draws = d;
            sf.found = true;
            return sf;
        }
    }
    sf.draws = max_draws;
    return sf;
}

} // namespace nlad
