#include "nlad/quadrature.hpp"

#include <cmath>

namespace nlad {

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = int(x.size());
    LinearFit f;
    if (n < 2 || y.size() != x.size()) return f;
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = x[i];
        b(i) = y[i];
    }
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    f.intercept = c(0);
    f.slope = c(1);
    double mean = b.mean();
    double ss_tot = (b.array() - mean).square().sum();
    double ss_res = (b - A * c).squaredNorm();
    f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (size_t i = 0; i < x.size(); ++i) {
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return linear_fit(lx, ly);
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = n > 1 ? a + (b - a) * i / (n - 1) : a;
    return v;
}

} // namespace nlad

namespace nlad {

std::vector<Extremum> local_extrema(const std::vector<double>& t, const std::vector<double>& f) {
    std::vector<Extremum> out;
    for (size_t k = 1; k + 1 < f.size(); ++k) {
        bool mx = f[k] > f[k - 1] && f[k] >= f[k + 1];
        bool mn = f[k] < f[k - 1] && f[k] <= f[k + 1];
        if (!mx && !mn) continue;
        // vertex of the parabola through (t_{k-1}, t_k, t_{k+1}); uniform spacing assumed
        double h = t[k + 1] - t[k];
        double a = 0.5 * (f[k + 1] - 2 * f[k] + f[k - 1]);
        double b = 0.5 * (f[k + 1] - f[k - 1]);
        double u = a != 0.0 ? -b / (2 * a) : 0.0;
        out.push_back({t[k] + u * h, f[k] + b * u + a * u * u, mx});
    }
    return out;
}

} // namespace nlad
