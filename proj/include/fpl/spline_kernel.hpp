#pragma once

#include "fpl/core.hpp"
#include "fpl/fourier.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fpl::spline {

// phi(r) = cubic * r^3 - linear * r with an affine (poly_order 2) or constant (poly_order 1) tail.
// Both -r and +r^3 are conditionally positive definite, so the sign lives in phi and the
// weights stay nonnegative.
struct CpdKernelSpec {
    int d = 1;
    double cubic = 0.0;
    double linear = 0.0;
    int poly_order = 2;

    static CpdKernelSpec make(int d, double cubic, double linear, std::optional<int> poly_order = std::nullopt);
    void validate() const;
    double phi(double r) const { return cubic * r * r * r - linear * r; }
};

// Maps <a^2 + r^2> (A) and <a^2 r^2> (B) to kernel weights: cubic = A / c_{d,3},
// linear = B / |c_{d,1}| with the distributional Riesz constants (12 and 2 when d = 1).
CpdKernelSpec kernel_weights_from_stats(double A, double B, int d);

// Whether the Riesz constants for this d passed the numerical radial-transform check.
// Always true for d > 3 where no check is run.
bool riesz_constants_verified(int d);

class KernelInterpolant {
public:
    KernelInterpolant(CpdKernelSpec kernel, Matrix centers, Vector alpha, Vector poly);

    const CpdKernelSpec& kernel() const { return kernel_; }
    const Matrix& centers() const { return centers_; }
    const Vector& alpha() const { return alpha_; }
    // [constant] or [constant, gradient...]
    const Vector& poly() const { return poly_; }

    double operator()(const Vector& x) const;
    Vector evaluate_rows(const Matrix& xs) const;

    nlohmann::json to_json() const;
    static KernelInterpolant from_json(const nlohmann::json& j);

private:
    CpdKernelSpec kernel_;
    Matrix centers_;
    Vector alpha_;
    Vector poly_;
};

// Solves [K P; P^T 0][alpha; p] = [y; 0]. Points spanning fewer than d affine dimensions are
// accepted only when n <= d (the tail is restricted to their affine hull).
KernelInterpolant steady_state(const Dataset& dataset, const CpdKernelSpec& kernel);

double evaluate(const KernelInterpolant& interpolant, const Vector& x);

// Relative residual of the saddle system for the interpolant's own data.
double saddle_residual(const KernelInterpolant& interpolant, const Vector& values);

struct EnergyResult {
    double energy = 0.0;
    // Share of the energy in the outer 10% of the lattice band.
    double tail_fraction = 0.0;
    std::optional<std::string> warning;
};

using Function1d = std::function<double(double)>;

// int gamma^-1 |h_hat|^2 dxi over the lattice nodes (d = 1), h_hat from the windowed
// function sampled on `samples` grid points.
EnergyResult fp_energy_of_function(const Function1d& h, const GammaSpec& spec, const FrequencyLattice& lattice,
                                   const fourier::TaperWindow& window, int samples = 1024);

// Window defaults to the data extent widened by half of itself on each side.
EnergyResult fp_energy_of_interpolant(const KernelInterpolant& interpolant, const GammaSpec& spec,
                                      const FrequencyLattice& lattice,
                                      std::optional<fourier::TaperWindow> window = std::nullopt,
                                      int samples = 1024);

struct Candidate {
    std::string name;
    Function1d f;
};

struct EnergyComparison {
    std::vector<std::string> names;     // "steady_state" first, then candidates
    std::vector<double> energies;
    std::vector<std::string> warnings;
    bool minimizer_is_minimal = false;
    // Largest candidate energy deficit below the minimizer (<= 0 when minimal).
    double worst_margin = 0.0;
};

// All candidates must interpolate the data to 1e-6; a violating candidate raises ConfigError
// carrying the largest violation. The window is flat well beyond the data (5 extents plus 25
// kernel reach lengths per side), so candidates should differ from the minimizer by decaying
// perturbations. `samples` is raised as needed to resolve the lattice band.
EnergyComparison energy_comparison(const Dataset& dataset, const CpdKernelSpec& kernel,
                                   const std::vector<Candidate>& candidates, const GammaSpec& spec,
                                   const FrequencyLattice& lattice, int samples = 4096);

}  // namespace fpl::spline
