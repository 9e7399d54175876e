#include "nlad/scalar_function.hpp"

#include "nlad/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nlad {

ScalarFunction ScalarFunction::constant(double c) {
    ScalarFunction f;
    f.kind_ = Kind::Constant;
    f.c_ = {c};
    return f;
}

ScalarFunction ScalarFunction::sinusoid(double c0, double c1, double c2) {
    ScalarFunction f;
    f.kind_ = Kind::Sinusoid;
    f.c_ = {c0, c1, c2};
    return f;
}

ScalarFunction ScalarFunction::polynomial(std::vector<double> coeffs) {
    if (coeffs.empty()) coeffs = {0.0};
    ScalarFunction f;
    f.kind_ = Kind::Polynomial;
    f.c_ = std::move(coeffs);
    return f;
}

ScalarFunction ScalarFunction::tabulated(std::vector<double> ts, std::vector<double> vs) {
    if (ts.size() != vs.size() || ts.size() < 2)
        throw Error(ErrorKind::ConfigInvalid, "tabulated function needs >= 2 (t, value) pairs");
    for (size_t i = 1; i < ts.size(); ++i)
        if (!(ts[i] > ts[i - 1]))
            throw Error(ErrorKind::ConfigInvalid, "tabulated times must be strictly increasing");
    ScalarFunction f;
    f.kind_ = Kind::Tabulated;
    const size_t n = ts.size();
    // natural spline: tridiagonal solve for second derivatives
    std::vector<double> m(n, 0.0);
    if (n > 2) {
        std::vector<double> a(n), b(n), c(n), d(n);
        for (size_t i = 1; i + 1 < n; ++i) {
            double h0 = ts[i] - ts[i - 1], h1 = ts[i + 1] - ts[i];
            a[i] = h0;
            b[i] = 2.0 * (h0 + h1);
            c[i] = h1;
            d[i] = 6.0 * ((vs[i + 1] - vs[i]) / h1 - (vs[i] - vs[i - 1]) / h0);
        }
        for (size_t i = 2; i + 1 < n; ++i) {
            double w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        for (size_t i = n - 2; i >= 1; --i) {
            m[i] = (d[i] - (i + 2 < n ? c[i] * m[i + 1] : 0.0)) / b[i];
            if (i == 1) break;
        }
    }
    f.ts_ = std::move(ts);
    f.vs_ = std::move(vs);
    f.m_ = std::move(m);
    return f;
}

int ScalarFunction::segment(double t) const {
    auto it = std::upper_bound(ts_.begin(), ts_.end(), t);
    int i = int(it - ts_.begin()) - 1;
    return std::clamp(i, 0, int(ts_.size()) - 2);
}

double ScalarFunction::value(double t) const {
    switch (kind_) {
    case Kind::Constant: return c_[0];
    case Kind::Sinusoid: return c_[0] + c_[1] * std::sin(c_[2] * t);
    case Kind::Polynomial: {
        double r = 0.0;
        for (size_t k = c_.size(); k-- > 0;) r = r * t + c_[k];
        return r;
    }
    case Kind::Tabulated: {
        int i = segment(t);
        double h = ts_[i + 1] - ts_[i];
        double A = (ts_[i + 1] - t) / h, B = (t - ts_[i]) / h;
        return A * vs_[i] + B * vs_[i + 1] +
               ((A * A * A - A) * m_[i] + (B * B * B - B) * m_[i + 1]) * h * h / 6.0;
    }
    }
    return 0.0;
}

double ScalarFunction::derivative(double t) const {
    switch (kind_) {
    case Kind::Constant: return 0.0;
    case Kind::Sinusoid: return c_[1] * c_[2] * std::cos(c_[2] * t);
    case Kind::Polynomial: {
        double r = 0.0;
        for (size_t k = c_.size(); k-- > 1;) r = r * t + double(k) * c_[k];
        return r;
    }
    case Kind::Tabulated: {
        int i = segment(t);
        double h = ts_[i + 1] - ts_[i];
        double A = (ts_[i + 1] - t) / h, B = (t - ts_[i]) / h;
        return (vs_[i + 1] - vs_[i]) / h +
               (-(3 * A * A - 1) * m_[i] + (3 * B * B - 1) * m_[i + 1]) * h / 6.0;
    }
    }
    return 0.0;
}

std::string ScalarFunction::describe() const {
    std::ostringstream os;
    switch (kind_) {
    case Kind::Constant: os << "constant(" << c_[0] << ")"; break;
    case Kind::Sinusoid: os << "sinusoid(" << c_[0] << "," << c_[1] << "," << c_[2] << ")"; break;
    case Kind::Polynomial:
        os << "polynomial(";
        for (size_t k = 0; k < c_.size(); ++k) os << (k ? "," : "") << c_[k];
        os << ")";
        break;
    case Kind::Tabulated: os << "tabulated(" << ts_.size() << " points)"; break;
    }
    return os.str();
}

} // namespace nlad
