#pragma once

#include "fpl/core.hpp"

#include <functional>

namespace fpl::fourier {

// Flat on [flat_lo, flat_hi], raised-cosine roll-off of width `taper` on each side.
struct TaperWindow {
    double flat_lo = 0.0;
    double flat_hi = 0.0;
    double taper = 1.0;

    double lo() const { return flat_lo - taper; }
    double hi() const { return flat_hi + taper; }
    double operator()(double x) const;

    // [lo - L/2, hi + L/2] with L the data extent (1 when the data is a single point).
    static TaperWindow around(double data_lo, double data_hi);
};

// dx * sum_m values_m exp(-i xi (x0 + m dx)): rectangle-rule transform of grid samples.
Complex grid_transform(double x0, double dx, const Vector& values, double xi);

// Samples f * window on `samples` uniform points spanning the window support.
struct WindowedSamples {
    double x0 = 0.0;
    double dx = 0.0;
    Vector values;
};
WindowedSamples sample_windowed(const std::function<double(double)>& f, const TaperWindow& window, int samples);

// int |x|^power w(x) exp(-i xi x) dx with w a C-infinity taper that is 1 on |x| <= extent/2
// and 0 beyond `extent`; trapezoid rule on spacing dx.
double tapered_power_transform(int power, double xi, double extent, double dx);

struct FourierPairReport {
    double extent = 0.0;
    double max_rel_error_linear = 0.0;  // against -2 / xi^2
    double max_rel_error_cubic = 0.0;   // against 12 / xi^4
    bool passed = false;
};

// Checks FT(|x|) = -2/xi^2 and FT(|x|^3) = 12/xi^4 on xi in [xi_lo, xi_hi].
FourierPairReport verify_power_pairs(double extent = 480.0, double xi_lo = 1.0, double xi_hi = 10.0,
                                     int xi_samples = 37, double tolerance = 0.01);

// Signed distributional constants: FT(|x|^s)(xi) = c_{d,s} |xi|^{-d-s} for s = 1, 3 in R^d.
double riesz_constant(int d, int power);

// (2 pi)^-d |S^{d-1}| int_0^inf (j_d(u) - Taylor) / u^{power+1} du, for d <= 3: the value that
// the spatial kernel of |xi|^{-d-power} multiplies |x|^power by. Equals 1 / riesz_constant(d, power).
double radial_inverse_coefficient(int d, int power);

}  // namespace fpl::fourier
