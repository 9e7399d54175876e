#pragma once

#include <string>
#include <vector>

namespace nlad {

// Scalar driving function of time: constant, c0 + c1 sin(c2 t), polynomial,
// or tabulated with natural cubic spline interpolation.
class ScalarFunction {
public:
    enum class Kind { Constant, Sinusoid, Polynomial, Tabulated };

    ScalarFunction() : c_{0.0} {}

    static ScalarFunction constant(double c);
    static ScalarFunction sinusoid(double c0, double c1, double c2);
    // coefficients in increasing degree
    static ScalarFunction polynomial(std::vector<double> coeffs);
    static ScalarFunction tabulated(std::vector<double> ts, std::vector<double> vs);

    double operator()(double t) const { return value(t); }
    double value(double t) const;
    double derivative(double t) const;

    Kind kind() const { return kind_; }
    std::string describe() const;

private:
    Kind kind_ = Kind::Constant;
    std::vector<double> c_;
    std::vector<double> ts_, vs_, m_; // m_: spline second derivatives
    int segment(double t) const;
};

} // namespace nlad
