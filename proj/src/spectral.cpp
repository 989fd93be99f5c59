#include "fpl/spectral.hpp"

#include "fpl/error.hpp"
#include "fpl/io.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>

namespace fpl::spectral {

namespace {

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

Vector first_principal_direction(const Matrix& points) {
    if (points.rows() < 2)
        throw DomainError("first_principal_direction: need at least two points");
    const Matrix centered = points.rowwise() - points.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(points.rows());
    if (cov.cwiseAbs().maxCoeff() == 0.0)
        throw DegenerateGeometryError("first_principal_direction: all points coincide (zero covariance)");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    Vector dir = eig.eigenvectors().col(cov.rows() - 1);
    Eigen::Index imax = 0;
    dir.cwiseAbs().maxCoeff(&imax);
    if (dir[imax] < 0.0)
        dir = -dir;
    return dir;
}

Vector project(const Matrix& points, const Vector& direction, Projection mode) {
    if (direction.size() != points.cols())
        throw DomainError("project: direction dimension mismatch");
    if (std::abs(direction.norm() - 1.0) > 1e-9)
        throw DomainError("project: direction must be a unit vector");
    Vector p = points * direction;
    if (mode == Projection::Rescaled) {
        const double lo = p.minCoeff();
        const double span = p.maxCoeff() - lo;
        if (span > 0.0)
            p = (p.array() - lo) / span;
        else
            p.setZero();
    }
    return p;
}

Complex nudft_at(const Vector& projections, const Vector& values, double k) {
    if (projections.size() != values.size())
        throw DomainError("nudft: projections and values differ in length");
    Complex sum = 0.0;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        sum += values[i] * std::polar(1.0, -2.0 * std::numbers::pi * k * projections[i]);
    return sum / static_cast<double>(values.size());
}

SpectralProfile nudft(const Matrix& points, const Vector& values, const Vector& direction,
                      const std::vector<double>& k_grid, Projection mode, std::string provenance) {
    const Vector p = project(points, direction, mode);
    SpectralProfile out;
    out.provenance = std::move(provenance);
    out.frequencies = k_grid;
    for (double k : k_grid) {
        const Complex f = nudft_at(p, values, k);
        out.amplitudes.push_back(std::abs(f));
        out.phases.push_back(std::arg(f));
    }
    return out;
}

Complex nudft_vector(const Matrix& points, const Vector& values, const Vector& wave) {
    if (wave.size() != points.cols())
        throw DomainError("nudft_vector: wave vector dimension mismatch");
    return nudft_at(points * wave, values, 1.0);
}

ConvergenceCurves convergence_per_frequency(const std::vector<double>& times, const std::vector<Vector>& predictions,
                                            const Vector& target, const Matrix& points, const Vector& direction,
                                            const std::vector<double>& peaks, double threshold, Projection mode) {
    if (times.size() != predictions.size())
        throw DomainError("convergence_per_frequency: times and predictions differ in length");
    for (const auto& p : predictions)
        if (p.size() != target.size())
            throw DomainError("convergence_per_frequency: checkpoints must share the target's points");
    const Vector proj = project(points, direction, mode);

    ConvergenceCurves out;
    out.times = times;
    std::vector<Complex> ref;
    for (double k : peaks) {
        const Complex f = nudft_at(proj, target, k);
        if (std::abs(f) < 1e-12) {
            out.rejected.push_back(k);
            continue;
        }
        out.peaks.push_back(k);
        ref.push_back(f);
    }
    out.relative_error.resize(static_cast<Eigen::Index>(times.size()), static_cast<Eigen::Index>(out.peaks.size()));
    out.tau.assign(out.peaks.size(), std::nullopt);
    for (std::size_t t = 0; t < times.size(); ++t)
        for (std::size_t j = 0; j < out.peaks.size(); ++j) {
            const double err = std::abs(nudft_at(proj, predictions[t], out.peaks[j]) - ref[j]) / std::abs(ref[j]);
            out.relative_error(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = err;
            if (!out.tau[j] && err < threshold)
                out.tau[j] = times[t];
        }
    return out;
}

SampledEnergy fp_energy_sampled(double x0, double dx, const Vector& values, const GammaSpec& spec,
                                const std::function<double(double)>& window) {
    if (!(dx > 0.0) || values.size() < 2)
        throw DomainError("fp_energy_sampled: need dx > 0 and at least two samples");
    const Eigen::Index N = values.size();
    Vector windowed(N);
    for (Eigen::Index m = 0; m < N; ++m)
        windowed[m] = values[m] * (window ? window(x0 + dx * static_cast<double>(m)) : 1.0);

    const double dxi = 2.0 * std::numbers::pi / (static_cast<double>(N) * dx);
    const Eigen::Index jmax = N / 2;
    const Eigen::Index tail_start = jmax - std::max<Eigen::Index>(1, jmax / 10) + 1;
    double total = 0.0, tail = 0.0;
    for (Eigen::Index j = 1; j <= jmax; ++j) {
        const double xi = dxi * static_cast<double>(j);
        Complex hh = 0.0;
        for (Eigen::Index m = 0; m < N; ++m)
            hh += windowed[m] * std::polar(1.0, -xi * (x0 + dx * static_cast<double>(m)));
        hh *= dx;
        // +xi and -xi contribute equally for real samples
        const double e = 2.0 * dxi * std::norm(hh) / spec.radial(xi);
        total += e;
        if (j >= tail_start)
            tail += e;
    }
    SampledEnergy out;
    out.energy = total;
    out.nyquist_fraction = total > 0.0 ? tail / total : 0.0;
    if (out.nyquist_fraction > 0.05)
        out.warning = "aliasing: " + format_double(100.0 * out.nyquist_fraction) +
                      "% of the energy sits next to the Nyquist frequency";
    return out;
}

nlohmann::json BoundReport::to_json() const {
    nlohmann::json j{{"energy", energy}, {"n", n}, {"delta", delta}, {"c_gamma", c_gamma}, {"bound", bound}};
    j["measured_mse"] = measured_mse ? nlohmann::json(*measured_mse) : nlohmann::json(nullptr);
    return j;
}

BoundReport generalization_bound(double energy, int n, double delta, double c_gamma,
                                 std::optional<double> measured_mse) {
    if (n < 1 || !(delta > 0.0 && delta < 1.0) || !(c_gamma > 0.0) || !(energy >= 0.0))
        throw ConfigError("generalization_bound: need n >= 1, 0 < delta < 1, C > 0, E >= 0");
    BoundReport r;
    r.energy = energy;
    r.n = n;
    r.delta = delta;
    r.c_gamma = c_gamma;
    r.bound = energy / std::sqrt(static_cast<double>(n)) * c_gamma * (2.0 + 4.0 * std::sqrt(2.0 * std::log(4.0 / delta)));
    r.measured_mse = measured_mse;
    return r;
}

ScalingReport error_vs_n_scaling(const ScalingTrial& trial, const std::vector<int>& n_values, int trials,
                                 std::uint64_t seed, int bootstrap, double confidence) {
    if (n_values.size() < 4 || trials < 10)
        throw ConfigError("error_vs_n_scaling: need at least 4 sample sizes and 10 trials");
    ScalingReport rep;
    rep.n_values = n_values;
    const auto rows = static_cast<Eigen::Index>(n_values.size());
    rep.errors.resize(rows, trials);
    const RandomSource root(seed);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (int t = 0; t < trials; ++t) {
            RandomSource s = root.split(static_cast<std::uint64_t>(i) * 1000003ULL + static_cast<std::uint64_t>(t));
            rep.errors(i, t) = trial(n_values[static_cast<std::size_t>(i)], s.next_u64());
        }
    for (Eigen::Index i = 0; i < rows; ++i)
        rep.mean_error.push_back(rep.errors.row(i).mean());

    if (rep.errors.cwiseAbs().maxCoeff() == 0.0) {
        rep.degenerate = true;
        rep.slope = std::numeric_limits<double>::quiet_NaN();
        rep.ci_low = rep.ci_high = rep.slope;
        rep.note = "all errors vanish; slope undefined";
        return rep;
    }
    for (std::size_t i = 1; i < rep.mean_error.size(); ++i)
        if (rep.mean_error[i] > rep.mean_error[i - 1])
            rep.monotone = false;

    std::vector<double> lx;
    for (int n : n_values)
        lx.push_back(std::log(static_cast<double>(n)));
    auto slope_of = [&](const std::vector<double>& means) {
        std::vector<double> ly;
        for (double m : means)
            ly.push_back(std::log(std::max(m, 1e-300)));
        return ls_slope(lx, ly);
    };
    rep.slope = slope_of(rep.mean_error);

    RandomSource rng = root.split(0xb007ULL);
    std::vector<double> slopes;
    for (int b = 0; b < bootstrap; ++b) {
        std::vector<double> means;
        for (Eigen::Index i = 0; i < rows; ++i) {
            double s = 0.0;
            for (int t = 0; t < trials; ++t)
                s += rep.errors(i, static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(trials)));
            means.push_back(s / trials);
        }
        slopes.push_back(slope_of(means));
    }
    rep.ci_low = quantile(slopes, 0.5 * (1.0 - confidence));
    rep.ci_high = quantile(slopes, 0.5 * (1.0 + confidence));
    if (!rep.monotone)
        rep.note = "mean error is not monotone in n";
    return rep;
}

void write_profile_csv(const std::filesystem::path& path, const SpectralProfile& profile) {
    CsvWriter out(path, {"k", "amplitude", "phase"});
    for (std::size_t i = 0; i < profile.frequencies.size(); ++i)
        out.row({profile.frequencies[i], profile.amplitudes[i], profile.phases[i]});
}

void write_convergence_csv(const std::filesystem::path& path, const ConvergenceCurves& curves) {
    std::vector<std::string> header{"t"};
    for (double k : curves.peaks)
        header.push_back("delta_k" + format_double(k));
    CsvWriter out(path, header);
    for (std::size_t t = 0; t < curves.times.size(); ++t) {
        std::vector<double> row{curves.times[t]};
        for (Eigen::Index j = 0; j < curves.relative_error.cols(); ++j)
            row.push_back(curves.relative_error(static_cast<Eigen::Index>(t), j));
        out.row(row);
    }
}

}  // namespace fpl::spectral
