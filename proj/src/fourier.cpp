#include "fpl/fourier.hpp"

#include "fpl/error.hpp"

#include <cmath>
#include <numbers>

namespace fpl::fourier {

namespace {

constexpr double kPi = std::numbers::pi;

// Normalized spherical average of exp(i xi . x) over |xi| = 1 in R^d, at u = |xi||x|.
double spherical_mean(int d, double u) {
    if (u < 1.0) {
        // sum_k (-u^2/4)^k / (k! (d/2)_k)
        double term = 1.0;
        double sum = 1.0;
        for (int k = 1; k < 30; ++k) {
            term *= -0.25 * u * u / (k * (0.5 * d + k - 1));
            sum += term;
        }
        return sum;
    }
    switch (d) {
    case 1:
        return std::cos(u);
    case 2:
        return std::cyl_bessel_j(0.0, u);
    case 3:
        return std::sin(u) / u;
    default:
        throw DomainError("spherical_mean: d must be 1, 2 or 3");
    }
}

// (j_d(u) - Taylor_{<power}) / u^{power+1}, evaluated by series below u = 1 to avoid cancellation.
double regularized_integrand(int d, int power, double u) {
    const int skip = (power + 1) / 2;  // number of leading series terms removed
    if (u < 1.0) {
        double term = 1.0;
        double sum = 0.0;
        for (int k = 1; k < 30 + skip; ++k) {
            term *= -0.25 * u * u / (k * (0.5 * d + k - 1));
            if (k >= skip)
                sum += term / std::pow(u * u, skip);
        }
        return sum;
    }
    double taylor = 1.0;
    if (power == 3)
        taylor -= u * u / (2.0 * d);
    return (spherical_mean(d, u) - taylor) / std::pow(u, power + 1);
}

double sphere_area(int d) {
    switch (d) {
    case 1:
        return 2.0;
    case 2:
        return 2.0 * kPi;
    case 3:
        return 4.0 * kPi;
    default:
        throw DomainError("sphere_area: d must be 1, 2 or 3");
    }
}

}  // namespace

double TaperWindow::operator()(double x) const {
    if (x >= flat_lo && x <= flat_hi)
        return 1.0;
    const double dist = x < flat_lo ? flat_lo - x : x - flat_hi;
    if (dist >= taper)
        return 0.0;
    return 0.5 * (1.0 + std::cos(kPi * dist / taper));
}

TaperWindow TaperWindow::around(double data_lo, double data_hi) {
    double extent = data_hi - data_lo;
    if (!(extent > 0.0))
        extent = 1.0;
    return TaperWindow{data_lo, data_hi, 0.5 * extent};
}

Complex grid_transform(double x0, double dx, const Vector& values, double xi) {
    Complex acc{0.0, 0.0};
    for (Eigen::Index m = 0; m < values.size(); ++m)
        if (values[m] != 0.0)
            acc += values[m] * std::polar(1.0, -xi * (x0 + static_cast<double>(m) * dx));
    return acc * dx;
}

WindowedSamples sample_windowed(const std::function<double(double)>& f, const TaperWindow& window, int samples) {
    if (samples < 3)
        throw DomainError("sample_windowed: need at least three samples");
    WindowedSamples out;
    out.x0 = window.lo();
    out.dx = (window.hi() - window.lo()) / (samples - 1);
    out.values.resize(samples);
    for (int m = 0; m < samples; ++m) {
        const double x = out.x0 + m * out.dx;
        const double w = window(x);
        out.values[m] = w == 0.0 ? 0.0 : w * f(x);
    }
    return out;
}

double tapered_power_transform(int power, double xi, double extent, double dx) {
    if (power < 1 || !(extent > 0.0) || !(dx > 0.0))
        throw DomainError("tapered_power_transform: bad arguments");
    // Gaussian taper with width extent / 8 makes the truncation at `extent` negligible
    // (exp(-32)); it smears the pair by a relative (p+1)(p+2) / (2 s^2 xi^2).
    const double s = extent / 8.0;
    const auto M = static_cast<long>(std::ceil(extent / dx));
    const double h = extent / static_cast<double>(M);
    double acc = 0.0;
    for (long m = 1; m <= M; ++m) {
        const double x = h * static_cast<double>(m);
        const double weight = m == M ? 0.5 : 1.0;
        acc += weight * std::pow(x, power) * std::exp(-0.5 * (x / s) * (x / s)) * std::cos(xi * x);
    }
    // Even integrand: twice the half-line integral; the x = 0 node contributes zero.
    return 2.0 * h * acc;
}

FourierPairReport verify_power_pairs(double extent, double xi_lo, double xi_hi, int xi_samples, double tolerance) {
    if (xi_samples < 2 || !(xi_hi > xi_lo) || !(xi_lo > 0.0))
        throw DomainError("verify_power_pairs: bad frequency range");
    FourierPairReport report;
    report.extent = extent;
    const double dx = std::min(0.005, 0.05 / xi_hi);
    for (int s = 0; s < xi_samples; ++s) {
        const double xi = xi_lo + (xi_hi - xi_lo) * s / (xi_samples - 1);
        const double lin = tapered_power_transform(1, xi, extent, dx);
        const double cub = tapered_power_transform(3, xi, extent, dx);
        const double lin_exact = -2.0 / (xi * xi);
        const double cub_exact = 12.0 / std::pow(xi, 4);
        report.max_rel_error_linear = std::max(report.max_rel_error_linear, std::abs(lin / lin_exact - 1.0));
        report.max_rel_error_cubic = std::max(report.max_rel_error_cubic, std::abs(cub / cub_exact - 1.0));
    }
    report.passed = report.max_rel_error_linear <= tolerance && report.max_rel_error_cubic <= tolerance;
    return report;
}

double riesz_constant(int d, int power) {
    if (d < 1 || (power != 1 && power != 3))
        throw DomainError("riesz_constant: need d >= 1 and power in {1, 3}");
    return std::pow(2.0, power + d) * std::pow(kPi, 0.5 * d) * std::tgamma(0.5 * (d + power)) /
           std::tgamma(-0.5 * power);
}

double radial_inverse_coefficient(int d, int power) {
    if (d < 1 || d > 3 || (power != 1 && power != 3))
        throw DomainError("radial_inverse_coefficient: need d in {1, 2, 3} and power in {1, 3}");
    // Composite Simpson on [0, U] plus the non-oscillatory tail in closed form.
    const double U = 2000.0;
    const long M = 100000;
    const double h = U / static_cast<double>(M);
    double acc = regularized_integrand(d, power, 1e-12) + regularized_integrand(d, power, U);
    for (long m = 1; m < M; ++m)
        acc += (m % 2 ? 4.0 : 2.0) * regularized_integrand(d, power, h * static_cast<double>(m));
    double integral = acc * h / 3.0;
    if (power == 1)
        integral += -1.0 / U;
    else
        integral += 1.0 / (2.0 * d * U) - 1.0 / (3.0 * U * U * U);
    return sphere_area(d) / std::pow(2.0 * kPi, d) * integral;
}

}  // namespace fpl::fourier
