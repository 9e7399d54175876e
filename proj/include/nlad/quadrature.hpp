#pragma once

#include "nlad/types.hpp"

#include <vector>

namespace nlad {

// Cumulative integral on a uniform grid: composite Simpson on even prefixes,
// with a three-point end correction on odd ones.
template <class T>
std::vector<T> cumulative_simpson(const std::vector<T>& f, double h) {
    const size_t n = f.size();
    std::vector<T> out(n);
    if (n == 0) return out;
    out[0] = f[0] * 0.0;
    if (n == 1) return out;
    if (n == 2) {
        out[1] = (f[0] + f[1]) * (0.5 * h);
        return out;
    }
    for (size_t k = 1; k < n; ++k) {
        if (k % 2 == 0) {
            out[k] = out[k - 2] + (f[k - 2] + f[k - 1] * 4.0 + f[k]) * (h / 3.0);
        } else if (k == 1) {
            out[1] = (f[0] * 5.0 + f[1] * 8.0 - f[2]) * (h / 12.0);
        } else {
            out[k] = out[k - 1] + (f[k - 2] * -1.0 + f[k - 1] * 8.0 + f[k] * 5.0) * (h / 12.0);
        }
    }
    return out;
}

template <class T>
std::vector<T> cumulative_trapezoid(const std::vector<T>& f, double h) {
    std::vector<T> out(f.size());
    if (f.empty()) return out;
    out[0] = f[0] * 0.0;
    for (size_t k = 1; k < f.size(); ++k) out[k] = out[k - 1] + (f[k - 1] + f[k]) * (0.5 * h);
    return out;
}

// Second-order finite-difference derivative on a uniform grid.
template <class T>
std::vector<T> grid_derivative(const std::vector<T>& f, double h) {
    const size_t n = f.size();
    std::vector<T> d(n);
    if (n < 3) {
        for (size_t k = 0; k < n; ++k) d[k] = n == 2 ? T((f[1] - f[0]) * (1.0 / h)) : T(f[0] * 0.0);
        return d;
    }
    d[0] = (f[0] * -3.0 + f[1] * 4.0 - f[2]) * (0.5 / h);
    for (size_t k = 1; k + 1 < n; ++k) d[k] = (f[k + 1] - f[k - 1]) * (0.5 / h);
    d[n - 1] = (f[n - 3] - f[n - 2] * 4.0 + f[n - 1] * 3.0) * (0.5 / h);
    return d;
}

struct LinearFit {
    double slope = 0, intercept = 0, r2 = 0;
};
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);
// slope of log(y) against log(x)
LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> linspace(double a, double b, int n);

struct Extremum {
    double t = 0, value = 0;
    bool is_max = false;
};
// Interior local extrema of sampled data, refined by the parabola through the three samples.
std::vector<Extremum> local_extrema(const std::vector<double>& t, const std::vector<double>& f);

} // namespace nlad
