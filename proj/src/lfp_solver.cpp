#include "fpl/lfp_solver.hpp"

#include "fpl/error.hpp"
#include "fpl/io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

#include <cmath>
#include <limits>
#include <numbers>

namespace fpl::lfp {

namespace {

constexpr double kQuantum = 1e-12;

double inverse_weight(const FrequencyLattice& lattice) {
    return lattice.cell_volume() / std::pow(2.0 * std::numbers::pi, lattice.dimension());
}

Vector lattice_rates(const GammaSpec& spec, const FrequencyLattice& lattice) {
    Vector rates(lattice.size());
    for (int k = 0; k < lattice.size(); ++k)
        rates[k] = spec.radial(lattice.nodes().row(k).norm());
    return rates;
}

// Half of the nodes suffice: node k and node N-1-k are negatives of each other.
double cosine_sum(const FrequencyLattice& lattice, const Vector& rates, const Vector& x) {
    const int half = lattice.size() / 2;
    const Vector phase = lattice.nodes().topRows(half) * x;
    double acc = 0.0;
    for (int k = 0; k < half; ++k)
        acc += rates[k] * std::cos(phase[k]);
    return 2.0 * acc;
}

void require_finite(const Vector& v, const char* what, double t) {
    if (!v.allFinite())
        throw NumericalError(std::string(what) + " became non-finite at t = " + format_double(t));
}

}  // namespace

double kernel_from_gamma(const GammaSpec& spec, const FrequencyLattice& lattice, const Vector& displacement) {
    if (displacement.size() != lattice.dimension())
        throw DomainError("kernel_from_gamma: displacement dimension mismatch");
    return inverse_weight(lattice) * cosine_sum(lattice, lattice_rates(spec, lattice), displacement);
}

LatticeKernel::LatticeKernel(GammaSpec spec, FrequencyLattice lattice)
    : spec_(std::move(spec)), lattice_(std::move(lattice)), rates_(lattice_rates(spec_, lattice_)),
      weight_(inverse_weight(lattice_)) {}

LatticeKernel::LatticeKernel(const LatticeKernel& other)
    : spec_(other.spec_), lattice_(other.lattice_), rates_(other.rates_), weight_(other.weight_) {
    std::lock_guard lock(other.mutex_);
    cache_ = other.cache_;
}

std::size_t LatticeKernel::KeyHash::operator()(const std::vector<long long>& key) const noexcept {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (long long v : key)
        h = (h ^ std::hash<long long>{}(v)) * 0x100000001b3ULL;
    return h;
}

double LatticeKernel::evaluate(const Vector& displacement) const {
    return weight_ * cosine_sum(lattice_, rates_, displacement);
}

double LatticeKernel::operator()(const Vector& displacement) const {
    if (displacement.size() != lattice_.dimension())
        throw DomainError("LatticeKernel: displacement dimension mismatch");
    std::vector<long long> key(static_cast<std::size_t>(displacement.size()));
    for (Eigen::Index a = 0; a < displacement.size(); ++a)
        // Gamma is even, so x and -x share an entry.
        key[a] = std::llround(displacement[a] / kQuantum);
    if (!key.empty()) {
        auto first = std::find_if(key.begin(), key.end(), [](long long v) { return v != 0; });
        if (first != key.end() && *first < 0)
            for (auto& v : key)
                v = -v;
    }
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end())
            return it->second;
    }
    const double value = evaluate(displacement);
    std::lock_guard lock(mutex_);
    cache_.emplace(std::move(key), value);
    return value;
}

Matrix build_gram(const Dataset& dataset, const LatticeKernel& kernel) {
    const int n = dataset.size();
    Matrix G(n, n);
    const double diag = kernel.at_origin() / n;
    for (int j = 0; j < n; ++j) {
        G(j, j) = diag;
        for (int i = j + 1; i < n; ++i) {
            const Vector disp = dataset.point(j) - dataset.point(i);
            G(j, i) = G(i, j) = kernel(disp) / n;
        }
    }
    return G;
}

Matrix build_gram(const Dataset& dataset, const GammaSpec& spec, const FrequencyLattice& lattice) {
    return build_gram(dataset, LatticeKernel(spec, lattice));
}

double power_iteration_max_eig(const Matrix& sym, int max_iter, double tol) {
    const Eigen::Index n = sym.rows();
    if (n == 0)
        return 0.0;
    Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    // Perturb away from symmetric subspaces the all-ones vector might sit in.
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] += 1e-3 * std::sin(1.0 + 7.0 * static_cast<double>(i));
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vector w = sym * v;
        const double next = v.dot(w);
        const double norm = w.norm();
        if (norm == 0.0)
            return 0.0;
        v = w / norm;
        if (std::abs(next - lambda) <= tol * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotients approach from below; one extra norm step gives a safe upper estimate.
    return std::max(lambda, (sym * v).norm());
}

ReducedState::ReducedState(Matrix gram, Vector residuals, double time)
    : gram_(std::move(gram)), residuals_(std::move(residuals)), beta_(Vector::Zero(residuals_.size())),
      time_(time) {
    if (gram_.rows() != gram_.cols() || gram_.rows() != residuals_.size())
        throw DomainError("ReducedState: Gram matrix and residual vector disagree in size");
    if (!gram_.allFinite() || !residuals_.allFinite())
        throw NumericalError("ReducedState: non-finite Gram matrix or residuals");
    const Matrix sym = 0.5 * (gram_ + gram_.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    if (eig.info() != Eigen::Success)
        throw NumericalError("ReducedState: eigendecomposition of the Gram matrix failed");
    evals_ = eig.eigenvalues().cwiseMax(0.0);
    evecs_ = eig.eigenvectors();
}

ReducedState ReducedState::from_dataset(const Dataset& dataset, const LatticeKernel& kernel) {
    return ReducedState(build_gram(dataset, kernel), -dataset.values());
}

void ReducedState::advance_to(double t) {
    if (!(t >= time_))
        throw DomainError("advance_to: target time precedes the current time");
    const double dt = t - time_;
    if (dt == 0.0)
        return;
    const Vector coeff = evecs_.transpose() * residuals_;
    Vector decay(coeff.size());
    Vector integral(coeff.size());
    for (Eigen::Index k = 0; k < coeff.size(); ++k) {
        const double lt = evals_[k] * dt;
        decay[k] = std::exp(-lt);
        // (1 - e^{-lambda dt}) / lambda, continuous through lambda = 0
        integral[k] = lt < 1e-8 ? dt * (1.0 - 0.5 * lt) : -std::expm1(-lt) / evals_[k];
    }
    residuals_ = evecs_ * decay.cwiseProduct(coeff);
    beta_ -= evecs_ * integral.cwiseProduct(coeff) / static_cast<double>(size());
    time_ = t;
    require_finite(residuals_, "reduced residual", t);
    require_finite(beta_, "reduced beta", t);
}

ReducedState ReducedState::steady_state(double rel_tol) const {
    ReducedState out = *this;
    const Vector coeff = evecs_.transpose() * residuals_;
    const double cut = rel_tol * std::max(evals_.maxCoeff(), 0.0);
    Vector kept = Vector::Zero(coeff.size());
    Vector integral = Vector::Zero(coeff.size());
    for (Eigen::Index k = 0; k < coeff.size(); ++k) {
        if (evals_[k] > cut)
            integral[k] = coeff[k] / evals_[k];
        else
            kept[k] = coeff[k];
    }
    out.residuals_ = evecs_ * kept;
    out.beta_ = beta_ - evecs_ * integral / static_cast<double>(size());
    out.time_ = std::numeric_limits<double>::infinity();
    return out;
}

FlowTrajectory evolve_reduced(ReducedState& state, double t_end, int n_checkpoints) {
    if (!(t_end > state.time()))
        throw DomainError("evolve_reduced: t_end must exceed the current time");
    if (n_checkpoints < 1)
        throw DomainError("evolve_reduced: need at least one checkpoint");
    FlowTrajectory traj;
    const double t0 = state.time();
    const double n = state.size();
    auto record = [&] {
        traj.times.push_back(state.time());
        traj.loss.push_back(state.residuals().squaredNorm() / (2.0 * n));
        traj.residuals.push_back(state.residuals());
    };
    record();
    for (int c = 1; c <= n_checkpoints; ++c) {
        const double t = c == n_checkpoints ? t_end : t0 + (t_end - t0) * c / n_checkpoints;
        state.advance_to(t);
        record();
    }
    return traj;
}

SpectralState::SpectralState(FrequencyLattice lattice, CVector uhat, Vector offsets, double time)
    : lattice_(std::move(lattice)), uhat_(std::move(uhat)), offsets_(std::move(offsets)), time_(time) {
    if (uhat_.size() != lattice_.size())
        throw DomainError("SpectralState: field size does not match the lattice");
}

SpectralState SpectralState::from_residuals(FrequencyLattice lattice, const Vector& residuals) {
    const int N = lattice.size();
    return SpectralState(std::move(lattice), CVector::Zero(N), residuals);
}

SpectralState SpectralState::from_field(FrequencyLattice lattice, CVector uhat, int n_points) {
    return SpectralState(std::move(lattice), std::move(uhat), Vector::Zero(n_points));
}

SpectralState SpectralState::from_function(FrequencyLattice lattice, const Dataset& dataset,
                                           const std::function<double(double)>& u, int cell_samples) {
    if (lattice.dimension() != 1 || dataset.dimension() != 1)
        throw DomainError("from_function projects one-dimensional fields only");
    if (cell_samples < 2)
        throw DomainError("from_function: need at least two cell samples");
    const double period = 2.0 * std::numbers::pi / lattice.dxi();
    const double lo = dataset.points().minCoeff();
    const double hi = dataset.points().maxCoeff();
    if (hi - lo >= period)
        throw DomainError("from_function: data extent exceeds the lattice period 2 pi / dxi");
    const double start = 0.5 * (lo + hi) - 0.5 * period;
    const double h = period / cell_samples;

    Vector xs(cell_samples);
    Vector us(cell_samples);
    for (int m = 0; m < cell_samples; ++m) {
        xs[m] = start + (m + 0.5) * h;
        us[m] = u(xs[m]);
    }
    CVector uhat(lattice.size());
    for (int k = 0; k < lattice.size(); ++k) {
        const double xi = lattice.nodes()(k, 0);
        Complex acc{0.0, 0.0};
        for (int m = 0; m < cell_samples; ++m)
            acc += us[m] * std::polar(1.0, -xi * xs[m]);
        uhat[k] = acc * h;
    }
    for (int k = 0; k < lattice.size() / 2; ++k)
        uhat[lattice.negated(k)] = std::conj(uhat[k]);

    Vector at_points(dataset.size());
    for (int i = 0; i < dataset.size(); ++i)
        at_points[i] = u(dataset.points()(i, 0));
    Vector offsets = at_points - inverse_at(lattice, uhat, dataset.points());
    return SpectralState(std::move(lattice), std::move(uhat), std::move(offsets));
}

double SpectralState::symmetry_defect() const {
    double worst = 0.0;
    for (int k = 0; k < lattice_.size(); ++k)
        worst = std::max(worst, std::abs(uhat_[lattice_.negated(k)] - std::conj(uhat_[k])));
    return worst;
}

Vector inverse_at(const FrequencyLattice& lattice, const CVector& uhat, const Matrix& points) {
    const double w = inverse_weight(lattice);
    Vector out(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const Vector phase = lattice.nodes() * points.row(i).transpose();
        Complex acc{0.0, 0.0};
        for (int k = 0; k < lattice.size(); ++k)
            acc += uhat[k] * std::polar(1.0, phase[k]);
        out[i] = w * acc.real();
    }
    return out;
}

double spectral_stability_bound(const Dataset& dataset, const GammaSpec& spec, const FrequencyLattice& lattice) {
    const double lmax = power_iteration_max_eig(build_gram(dataset, spec, lattice));
    if (!(lmax > 0.0))
        throw NumericalError("spectral operator has no positive eigenvalue");
    return 1.0 / lmax;
}

FlowTrajectory evolve_spectral(SpectralState& state, const Dataset& dataset, const GammaSpec& spec, double dt,
                               int steps, int checkpoint_every, bool record_snapshots) {
    const FrequencyLattice& lattice = state.lattice_;
    if (lattice.dimension() != dataset.dimension())
        throw DomainError("evolve_spectral: lattice and dataset dimensions differ");
    if (state.offsets_.size() != dataset.size())
        throw DomainError("evolve_spectral: state offsets do not match the dataset size");
    if (steps < 0 || checkpoint_every < 1)
        throw DomainError("evolve_spectral: steps >= 0 and checkpoint_every >= 1 required");

    const double bound = spectral_stability_bound(dataset, spec, lattice);
    if (dt <= 0.0)
        dt = 0.5 * bound;
    if (dt > bound * (1.0 + 1e-12))
        throw NumericalError("evolve_spectral: dt = " + format_double(dt) + " exceeds the stability bound " +
                             format_double(bound) + "; refusing to run");

    const int n = dataset.size();
    const int half = lattice.size() / 2;
    const double w = inverse_weight(lattice);
    const Vector rates = lattice_rates(spec, lattice);

    // phases(k, i) = exp(i xi_k . x_i) for the first half of the nodes
    const Matrix angle = lattice.nodes().topRows(half) * dataset.points().transpose();
    const Eigen::MatrixXcd phases = angle.unaryExpr([](double a) { return std::polar(1.0, a); });

    CVector& uhat = state.uhat_;
    auto point_values = [&] {
        const Eigen::VectorXcd s = phases.transpose() * uhat.head(half);
        return Vector(state.offsets_ + 2.0 * w * s.real());
    };
    auto transform_rho = [&](const Vector& u) {
        CVector rho(lattice.size());
        const CVector hv = phases.conjugate() * u.cast<Complex>() / static_cast<double>(n);
        for (int k = 0; k < half; ++k) {
            rho[k] = hv[k];
            rho[lattice.negated(k)] = std::conj(hv[k]);
        }
        return rho;
    };

    FlowTrajectory traj;
    auto record = [&](const Vector& u, const CVector& rho) {
        traj.times.push_back(state.time_);
        traj.loss.push_back(u.squaredNorm() / (2.0 * n));
        traj.residuals.push_back(u);
        if (record_snapshots)
            traj.snapshots.push_back({state.time_, uhat, rho});
    };

    Vector u = point_values();
    CVector rho = transform_rho(u);
    record(u, rho);
    const double t0 = state.time_;
    for (int s = 1; s <= steps; ++s) {
        for (int k = 0; k < half; ++k) {
            uhat[k] -= dt * rates[k] * rho[k];
            uhat[lattice.negated(k)] = std::conj(uhat[k]);
        }
        state.time_ = t0 + dt * s;
        u = point_values();
        require_finite(u, "spectral residual", state.time_);
        rho = transform_rho(u);
        if (s % checkpoint_every == 0 || s == steps)
            record(u, rho);
    }
    return traj;
}

double predict_offsample(const ReducedState& state, const Dataset& dataset, const LatticeKernel& kernel,
                         const Vector& x, const InitialFunction& h_ini) {
    if (x.size() != dataset.dimension())
        throw DomainError("predict_offsample: query dimension mismatch");
    double h = h_ini ? h_ini(x) : 0.0;
    for (int i = 0; i < dataset.size(); ++i)
        h += kernel(x - dataset.point(i)) * state.beta()[i];
    return h;
}

DissipationCurves frequency_dissipation(const FlowTrajectory& trajectory) {
    if (trajectory.snapshots.empty())
        throw DomainError("frequency_dissipation: trajectory carries no spectral snapshots");
    const auto rows = static_cast<Eigen::Index>(trajectory.snapshots.size());
    const Eigen::Index cols = trajectory.snapshots.front().uhat.size();
    DissipationCurves out;
    out.energy.resize(rows, cols);
    for (Eigen::Index t = 0; t < rows; ++t) {
        const auto& snap = trajectory.snapshots[static_cast<std::size_t>(t)];
        out.times.push_back(snap.time);
        for (Eigen::Index k = 0; k < cols; ++k)
            out.energy(t, k) = 0.5 * (snap.uhat[k] * std::conj(snap.uhat_rho[k])).real();
    }
    return out;
}

void write_trajectory_csv(const std::filesystem::path& path, const FlowTrajectory& trajectory) {
    std::vector<std::string> header{"time", "loss"};
    const std::size_t n = trajectory.residuals.empty() ? 0 : static_cast<std::size_t>(trajectory.residuals[0].size());
    for (std::size_t i = 0; i < n; ++i)
        header.push_back("residual_" + std::to_string(i));
    CsvWriter csv(path, header);
    for (std::size_t t = 0; t < trajectory.times.size(); ++t) {
        std::vector<double> row{trajectory.times[t], trajectory.loss[t]};
        for (std::size_t i = 0; i < n; ++i)
            row.push_back(trajectory.residuals[t][static_cast<Eigen::Index>(i)]);
        csv.row(row);
    }
}

void write_snapshots_csv(const std::filesystem::path& path, const FlowTrajectory& trajectory,
                         const FrequencyLattice& lattice) {
    std::vector<std::string> header{"time"};
    for (int a = 0; a < lattice.dimension(); ++a)
        header.push_back("xi" + std::to_string(a));
    header.emplace_back("re_uhat");
    header.emplace_back("im_uhat");
    CsvWriter csv(path, header);
    for (const auto& snap : trajectory.snapshots)
        for (int k = 0; k < lattice.size(); ++k) {
            std::vector<double> row{snap.time};
            for (int a = 0; a < lattice.dimension(); ++a)
                row.push_back(lattice.nodes()(k, a));
            row.push_back(snap.uhat[k].real());
            row.push_back(snap.uhat[k].imag());
            csv.row(row);
        }
}

}  // namespace fpl::lfp
