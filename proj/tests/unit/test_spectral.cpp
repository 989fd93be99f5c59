#include "fpl/error.hpp"
#include "fpl/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fpl;
using namespace fpl::spectral;

namespace {

constexpr double pi = std::numbers::pi;

Matrix gaussian_cloud(int n, const Vector& axis, double major, double minor, std::uint64_t seed) {
    RandomSource rng(seed);
    const int d = static_cast<int>(axis.size());
    Matrix out(n, d);
    for (int i = 0; i < n; ++i) {
        Vector z(d);
        for (int j = 0; j < d; ++j)
            z[j] = minor * rng.normal();
        z += (major - minor) * rng.normal() * axis;
        out.row(i) = z.transpose();
    }
    return out;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("principal direction examples") {
    Matrix line(3, 2);
    line << 0, 0, 1, 1, 2, 2;
    const Vector v = first_principal_direction(line);
    CHECK(v[0] == doctest::Approx(std::sqrt(0.5)));
    CHECK(v[1] == doctest::Approx(std::sqrt(0.5)));

    Matrix same(3, 2);
    same << 1, 2, 1, 2, 1, 2;
    CHECK_THROWS_AS(first_principal_direction(same), DegenerateGeometryError);
    CHECK_THROWS_AS(first_principal_direction(Matrix::Ones(1, 2)), DomainError);
}

TEST_CASE("principal direction of an elongated cloud") {
    Vector axis(3);
    axis << 1.0, 2.0, -0.5;
    axis.normalize();
    const Matrix pts = gaussian_cloud(2000, axis, 3.0, 0.3, 17);
    const Vector v = first_principal_direction(pts);
    CHECK(std::acos(std::min(1.0, std::abs(v.dot(axis)))) <= 5.0 * pi / 180.0);
    CHECK(v.norm() == doctest::Approx(1.0));

    Matrix shifted = pts;
    shifted.rowwise() += Eigen::RowVectorXd::Constant(3, 40.0);
    CHECK((first_principal_direction(shifted) - v).norm() <= 1e-9);
}

TEST_CASE("projection") {
    Matrix pts(4, 1);
    pts << -3, -1, 1, 5;
    const Vector e = Vector::Ones(1);
    const Vector p = project(pts, e);
    CHECK(p[0] == 0.0);
    CHECK(p[3] == 1.0);
    CHECK(p[1] == doctest::Approx(0.25));
    CHECK(project(pts, e, Projection::Raw)[3] == 5.0);
    CHECK_THROWS_AS(project(pts, Vector::Constant(1, 2.0)), DomainError);
}

TEST_CASE("nudft peak, linearity and the uniform-grid DFT") {
    const int n = 200;
    Matrix x(n, 1);
    Vector f(n), g(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = static_cast<double>(i) / n;
        f[i] = std::cos(2 * pi * 5 * x(i, 0));
        g[i] = std::sin(2 * pi * 3 * x(i, 0));
    }
    const Vector e = Vector::Ones(1);
    std::vector<double> ks;
    for (int k = 0; k <= 20; ++k)
        ks.push_back(k);
    const auto prof = nudft(x, f, e, ks, Projection::Raw);
    const auto best = std::max_element(prof.amplitudes.begin(), prof.amplitudes.end()) - prof.amplitudes.begin();
    CHECK(prof.frequencies[static_cast<std::size_t>(best)] == 5.0);
    CHECK(prof.amplitudes[5] == doctest::Approx(0.5));

    const Vector p = project(x, e, Projection::Raw);
    for (double k : {1.5, 3.0, 7.25}) {
        const Complex lhs = nudft_at(p, 2.0 * f - 3.0 * g, k);
        const Complex rhs = 2.0 * nudft_at(p, f, k) - 3.0 * nudft_at(p, g, k);
        CHECK(std::abs(lhs - rhs) <= 1e-12);
    }

    // uniform grid: matches the DFT and satisfies Parseval
    RandomSource rng(5);
    Vector h(n);
    for (int i = 0; i < n; ++i)
        h[i] = rng.normal();
    double spec = 0.0;
    for (int k = 0; k < n; ++k) {
        Complex direct = 0.0;
        for (int i = 0; i < n; ++i)
            direct += h[i] * std::polar(1.0, -2 * pi * k * i / n);
        direct /= n;
        const Complex ours = nudft_at(p, h, k);
        CHECK(std::abs(ours - direct) <= 1e-12);
        spec += std::norm(ours);
    }
    CHECK(spec * n == doctest::Approx(h.squaredNorm()).epsilon(1e-10));

    Vector w(1);
    w << 5.0;
    CHECK(std::abs(nudft_vector(x, f, w) - nudft_at(p, f, 5.0)) <= 1e-14);
}

TEST_CASE("convergence curves and tau ordering") {
    // exponential per-mode decay with rate falling in k
    const int n = 128;
    Matrix x(n, 1);
    for (int i = 0; i < n; ++i)
        x(i, 0) = static_cast<double>(i) / n;
    const std::vector<double> peaks{1, 3, 6, 9};
    Vector target = Vector::Zero(n);
    for (double k : peaks)
        for (int i = 0; i < n; ++i)
            target[i] += std::cos(2 * pi * k * x(i, 0));
    std::vector<double> times;
    std::vector<Vector> preds;
    for (int t = 0; t <= 400; ++t) {
        Vector pr = Vector::Zero(n);
        for (double k : peaks) {
            const double frac = 1.0 - std::exp(-static_cast<double>(t) / (k * k));
            for (int i = 0; i < n; ++i)
                pr[i] += frac * std::cos(2 * pi * k * x(i, 0));
        }
        times.push_back(t);
        preds.push_back(pr);
    }
    const auto cc = convergence_per_frequency(times, preds, target, x, Vector::Ones(1), {1, 3, 6, 9, 4}, 0.2,
                                              Projection::Raw);
    REQUIRE(cc.peaks.size() == 4);
    CHECK(cc.rejected == std::vector<double>{4});
    for (std::size_t j = 0; j < 4; ++j) {
        REQUIRE(cc.tau[j].has_value());
        // closed form: exp(-t/k^2) < 0.2
        CHECK(*cc.tau[j] == std::ceil(peaks[j] * peaks[j] * std::log(5.0) + 1e-12));
        if (j > 0)
            CHECK(*cc.tau[j] > *cc.tau[j - 1]);
    }
    CHECK(cc.relative_error(0, 0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(convergence_per_frequency({0.0}, {}, target, x, Vector::Ones(1), peaks), DomainError);
}

TEST_CASE("sampled energy") {
    const auto spec = GammaSpec::power_law(0.0, 1.0, 1);
    const int N = 256;
    const double dx = 2 * pi / N;
    Vector zero = Vector::Zero(N), s1(N), s5(N);
    for (int m = 0; m < N; ++m) {
        s1[m] = std::sin(m * dx);
        s5[m] = std::sin(5 * m * dx);
    }
    CHECK(fp_energy_sampled(0.0, dx, zero, spec, nullptr).energy == 0.0);
    const double e1 = fp_energy_sampled(0.0, dx, s1, spec, nullptr).energy;
    const double e5 = fp_energy_sampled(0.0, dx, s5, spec, nullptr).energy;
    CHECK(e5 / e1 == doctest::Approx(25.0).epsilon(0.1));
    CHECK(fp_energy_sampled(0.0, dx, 3.0 * s1, spec, nullptr).energy == doctest::Approx(9.0 * e1));
    CHECK_FALSE(fp_energy_sampled(0.0, dx, s1, spec, nullptr).warning);

    Vector alt(N);
    for (int m = 0; m < N; ++m)
        alt[m] = (m % 2 == 0) ? 1.0 : -1.0;
    CHECK(fp_energy_sampled(0.0, dx, alt, spec, nullptr).warning);
}

TEST_CASE("generalization bound") {
    const auto r = generalization_bound(1.0, 100, 0.05);
    CHECK(r.bound == doctest::Approx(1.3841657498406388).epsilon(1e-12));
    CHECK(generalization_bound(1.0, 400, 0.05).bound == doctest::Approx(r.bound / 2.0));
    CHECK(generalization_bound(1.0, 100, 0.01).bound > r.bound);
    CHECK(generalization_bound(2.0, 100, 0.05, 3.0).bound == doctest::Approx(6.0 * r.bound));
    CHECK(r.to_json()["measured_mse"].is_null());
    CHECK(generalization_bound(1.0, 100, 0.05, 1.0, 0.2).to_json()["measured_mse"] == 0.2);
    CHECK_THROWS_AS(generalization_bound(1.0, 0, 0.05), ConfigError);
    CHECK_THROWS_AS(generalization_bound(1.0, 10, 1.0), ConfigError);
    CHECK_THROWS_AS(generalization_bound(-1.0, 10, 0.5), ConfigError);
}

TEST_CASE("scaling fit") {
    const auto power = [](double c) {
        return [c](int n, std::uint64_t seed) {
            const double jitter = 1.0 + 0.01 * (static_cast<double>(seed % 1000) / 1000.0 - 0.5);
            return c * jitter / std::sqrt(static_cast<double>(n));
        };
    };
    const std::vector<int> ns{8, 16, 32, 64, 128};
    const auto a = error_vs_n_scaling(power(1.0), ns, 20, 3, 200);
    CHECK(a.slope == doctest::Approx(-0.5).epsilon(0.02));
    CHECK(a.ci_low <= a.slope);
    CHECK(a.ci_high >= a.slope);
    CHECK(a.monotone);
    // the constant does not move the slope
    const auto b = error_vs_n_scaling(power(7.5), ns, 20, 3, 200);
    CHECK(b.slope == doctest::Approx(a.slope).epsilon(1e-12));

    const auto zero = error_vs_n_scaling([](int, std::uint64_t) { return 0.0; }, ns, 10, 1);
    CHECK(zero.degenerate);
    CHECK(std::isnan(zero.slope));
    CHECK(zero.note.has_value());

    const auto up = error_vs_n_scaling([](int n, std::uint64_t) { return static_cast<double>(n); }, ns, 10, 1, 50);
    CHECK_FALSE(up.monotone);
    CHECK_THROWS_AS(error_vs_n_scaling(power(1.0), {8, 16, 32}, 20, 1), ConfigError);
}

}
