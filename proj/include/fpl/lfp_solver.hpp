#pragma once

#include "fpl/core.hpp"

#include <filesystem>
#include <functional>
#include <mutex>
#include <unordered_map>

namespace fpl::lfp {

// Gamma(x) = (2 pi)^-d dxi^d sum_k gamma(xi_k) cos(xi_k . x): inverse transform of the
// rate by uniform-lattice quadrature. Real because the lattice is symmetric.
double kernel_from_gamma(const GammaSpec& spec, const FrequencyLattice& lattice, const Vector& displacement);

// Caches gamma at the nodes and Gamma per displacement (quantized to 1e-12).
// Safe to share between threads.
class LatticeKernel {
public:
    LatticeKernel(GammaSpec spec, FrequencyLattice lattice);
    LatticeKernel(const LatticeKernel& other);
    LatticeKernel& operator=(const LatticeKernel&) = delete;

    double operator()(const Vector& displacement) const;
    double at_origin() const { return (*this)(Vector::Zero(lattice_.dimension())); }

    const GammaSpec& gamma() const { return spec_; }
    const FrequencyLattice& lattice() const { return lattice_; }
    // gamma(xi_k) for every lattice node.
    const Vector& rates() const { return rates_; }
    // (2 pi)^-d dxi^d
    double quadrature_weight() const { return weight_; }

private:
    struct KeyHash {
        std::size_t operator()(const std::vector<long long>& key) const noexcept;
    };

    double evaluate(const Vector& displacement) const;

    GammaSpec spec_;
    FrequencyLattice lattice_;
    Vector rates_;
    double weight_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::vector<long long>, double, KeyHash> cache_;
};

// G_ji = Gamma(x_j - x_i) / n
Matrix build_gram(const Dataset& dataset, const LatticeKernel& kernel);
Matrix build_gram(const Dataset& dataset, const GammaSpec& spec, const FrequencyLattice& lattice);

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
double power_iteration_max_eig(const Matrix& sym, int max_iter = 500, double tol = 1e-12);

// Residual dynamics at the training points, r' = -G r, solved exactly through the
// eigendecomposition of G. beta accumulates -(1/n) int r dt for off-sample prediction.
class ReducedState {
public:
    ReducedState(Matrix gram, Vector residuals, double time = 0.0);
    // h_ini = 0 so r(0) = -y.
    static ReducedState from_dataset(const Dataset& dataset, const LatticeKernel& kernel);

    const Vector& residuals() const { return residuals_; }
    const Vector& beta() const { return beta_; }
    const Matrix& gram() const { return gram_; }
    double time() const { return time_; }
    int size() const { return static_cast<int>(residuals_.size()); }
    // Eigenvalues of G clamped at zero.
    const Vector& eigenvalues() const { return evals_; }
    const Matrix& eigenvectors() const { return evecs_; }

    // Closed-form jump to time t (t >= time()).
    void advance_to(double t);
    // t -> infinity limit; modes with eigenvalue <= rel_tol * max are left untouched.
    ReducedState steady_state(double rel_tol = 1e-13) const;

private:
    Matrix gram_;
    Vector residuals_;
    Vector beta_;
    double time_;
    Vector evals_;
    Matrix evecs_;
};

struct SpectralSnapshot {
    double time = 0.0;
    CVector uhat;
    CVector uhat_rho;
};

struct FlowTrajectory {
    std::vector<double> times;
    std::vector<double> loss;
    std::vector<Vector> residuals;
    std::vector<SpectralSnapshot> snapshots;
};

// Samples the flow at the current time and n_checkpoints evenly spaced times up to t_end.
FlowTrajectory evolve_reduced(ReducedState& state, double t_end, int n_checkpoints);

// Lattice field uhat plus per-point offsets for the part of u that the lattice does not
// represent: u(x_i) = offsets_i + (2 pi)^-d dxi^d sum_k uhat_k exp(i xi_k . x_i).
class SpectralState {
public:
    SpectralState(FrequencyLattice lattice, CVector uhat, Vector offsets, double time = 0.0);

    // Entire initial residual carried by the offsets; uhat starts at zero.
    static SpectralState from_residuals(FrequencyLattice lattice, const Vector& residuals);
    // Pure lattice field, zero offsets.
    static SpectralState from_field(FrequencyLattice lattice, CVector uhat, int n_points);
    // d = 1 only: project u onto the lattice by quadrature over one period cell centred on
    // the data, offsets absorb what the truncated lattice misses at the training points.
    static SpectralState from_function(FrequencyLattice lattice, const Dataset& dataset,
                                       const std::function<double(double)>& u, int cell_samples = 4096);

    const FrequencyLattice& lattice() const { return lattice_; }
    const CVector& uhat() const { return uhat_; }
    const Vector& offsets() const { return offsets_; }
    double time() const { return time_; }

    // max |uhat(-xi) - conj(uhat(xi))|
    double symmetry_defect() const;

private:
    friend FlowTrajectory evolve_spectral(SpectralState&, const Dataset&, const GammaSpec&, double, int, int, bool);

    FrequencyLattice lattice_;
    CVector uhat_;
    Vector offsets_;
    double time_;
};

// Largest explicit-Euler step the spectral solver accepts: 1 / lambda_max of the discretized operator.
double spectral_stability_bound(const Dataset& dataset, const GammaSpec& spec, const FrequencyLattice& lattice);

// Explicit Euler on the lattice: uhat <- uhat - dt gamma uhat_rho. dt <= 0 selects half the
// stability bound. Records every checkpoint_every steps (and the initial state).
FlowTrajectory evolve_spectral(SpectralState& state, const Dataset& dataset, const GammaSpec& spec, double dt,
                               int steps, int checkpoint_every = 1, bool record_snapshots = false);

using InitialFunction = std::function<double(const Vector&)>;

// h(x, t) = h_ini(x) + sum_i Gamma(x - x_i) beta_i(t)
double predict_offsample(const ReducedState& state, const Dataset& dataset, const LatticeKernel& kernel,
                         const Vector& x, const InitialFunction& h_ini = {});

struct DissipationCurves {
    std::vector<double> times;
    // checkpoints x nodes, Re(uhat conj(uhat_rho)) / 2
    Matrix energy;
};

DissipationCurves frequency_dissipation(const FlowTrajectory& trajectory);

// Quadrature inverse transform of a lattice field at the rows of `points`.
Vector inverse_at(const FrequencyLattice& lattice, const CVector& uhat, const Matrix& points);

void write_trajectory_csv(const std::filesystem::path& path, const FlowTrajectory& trajectory);
void write_snapshots_csv(const std::filesystem::path& path, const FlowTrajectory& trajectory,
                         const FrequencyLattice& lattice);

}  // namespace fpl::lfp
