#pragma once

#include "fpl/core.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fpl::spectral {

// Frequencies k are in cycles (exp(-2 pi i k p)); the lattice solvers use angular xi = 2 pi k.
inline double cycles_to_angular(double k) { return 2.0 * 3.14159265358979323846 * k; }
inline double angular_to_cycles(double xi) { return xi / (2.0 * 3.14159265358979323846); }

struct SpectralProfile {
    std::vector<double> frequencies;
    std::vector<double> amplitudes;
    std::vector<double> phases;
    std::string provenance;
};

// Top eigenvector of the centred covariance; the largest-magnitude component is made positive.
Vector first_principal_direction(const Matrix& points);

enum class Projection { Rescaled, Raw };

// p_i = direction . x_i, affinely mapped to [0, 1] in Rescaled mode.
Vector project(const Matrix& points, const Vector& direction, Projection mode = Projection::Rescaled);

// F(k) = (1/n) sum_i v_i exp(-2 pi i k p_i)
Complex nudft_at(const Vector& projections, const Vector& values, double k);
SpectralProfile nudft(const Matrix& points, const Vector& values, const Vector& direction,
                      const std::vector<double>& k_grid, Projection mode = Projection::Rescaled,
                      std::string provenance = {});

// Same sum with a full wave vector: F(kv) = (1/n) sum_i v_i exp(-2 pi i kv . x_i), raw coordinates.
Complex nudft_vector(const Matrix& points, const Vector& values, const Vector& wave);

struct ConvergenceCurves {
    std::vector<double> times;
    std::vector<double> peaks;     // accepted peaks
    std::vector<double> rejected;  // peaks with |F_target| < 1e-12
    Matrix relative_error;         // checkpoints x accepted peaks
    // First checkpoint time with error below the threshold; nullopt if never reached.
    std::vector<std::optional<double>> tau;
};

// Delta(k, t) = |F_h(k, t) - F_f(k)| / |F_f(k)| at each peak, all transforms on the same projections.
ConvergenceCurves convergence_per_frequency(const std::vector<double>& times, const std::vector<Vector>& predictions,
                                            const Vector& target, const Matrix& points, const Vector& direction,
                                            const std::vector<double>& peaks, double threshold = 0.2,
                                            Projection mode = Projection::Rescaled);

struct SampledEnergy {
    double energy = 0.0;
    double nyquist_fraction = 0.0;  // share of the energy in the top 10% of the grid band
    std::optional<std::string> warning;
};

// Windowed DFT of samples on a uniform 1-d grid, then dxi * sum gamma^-1 |h_hat|^2 over the
// induced frequencies 2 pi j / (N dx), |j| <= N/2, excluding |xi| < dxi / 2.
SampledEnergy fp_energy_sampled(double x0, double dx, const Vector& values, const GammaSpec& spec,
                                const std::function<double(double)>& window);

struct BoundReport {
    double energy = 0.0;
    int n = 0;
    double delta = 0.0;
    double c_gamma = 1.0;
    double bound = 0.0;
    std::optional<double> measured_mse;

    nlohmann::json to_json() const;
};

// E / sqrt(n) * C * (2 + 4 sqrt(2 log(4 / delta)))
BoundReport generalization_bound(double energy, int n, double delta, double c_gamma = 1.0,
                                 std::optional<double> measured_mse = std::nullopt);

// One trial: given n and a trial seed, return the mean-square error of the fitted steady state.
using ScalingTrial = std::function<double(int n, std::uint64_t seed)>;

struct ScalingReport {
    std::vector<int> n_values;
    Matrix errors;                 // n_values x trials
    std::vector<double> mean_error;
    double slope = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool degenerate = false;       // all errors vanish, slope undefined
    bool monotone = true;          // mean error non-increasing in n
    std::optional<std::string> note;
};

// Least-squares slope of log(mean error) against log(n), bootstrap CI over trials.
ScalingReport error_vs_n_scaling(const ScalingTrial& trial, const std::vector<int>& n_values, int trials,
                                 std::uint64_t seed, int bootstrap = 1000, double confidence = 0.95);

void write_profile_csv(const std::filesystem::path& path, const SpectralProfile& profile);
void write_convergence_csv(const std::filesystem::path& path, const ConvergenceCurves& curves);

}  // namespace fpl::spectral
