// One PASS/FAIL line per criterion. `--only N` runs a single criterion.
#include "fpl/error.hpp"
#include "fpl/fourier.hpp"
#include "fpl/lfp_solver.hpp"
#include "fpl/nn.hpp"
#include "fpl/scenario.hpp"
#include "fpl/spectral.hpp"
#include "fpl/spline_kernel.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

using namespace fpl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

cli::ScenarioConfig config(const std::string& name, std::uint64_t seed) {
    auto cfg = cli::load_config(fs::path(FPL_SOURCE_DIR) / "configs" / name);
    cli::override_seed(cfg, seed);
    return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

Dataset random_1d(RandomSource& rng, int n) {
    Matrix x(n, 1);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = -1.0 + 2.0 * rng.uniform();
        y[i] = rng.normal();
    }
    return Dataset(x, y);
}

// sorted, with a minimum gap so the saddle systems stay well conditioned
Dataset random_sorted_1d(RandomSource& rng, int n, double lo, double hi) {
    std::vector<double> xs;
    while (static_cast<int>(xs.size()) < n) {
        const double t = lo + (hi - lo) * rng.uniform();
        bool ok = true;
        for (double s : xs)
            ok = ok && std::abs(s - t) > 0.02 * (hi - lo);
        if (ok)
            xs.push_back(t);
    }
    std::sort(xs.begin(), xs.end());
    Matrix x(n, 1);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = xs[static_cast<std::size_t>(i)];
        y[i] = rng.normal();
    }
    return Dataset(x, y);
}

Outcome frequency_ordering() {
    const auto t0 = std::chrono::steady_clock::now();
    int ok = 0;
    std::ostringstream d;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto r = cli::run_fig1(config("fig1_two_tone.json", seed));
        const auto& tau = r.curves.tau;
        const bool good = tau.size() == 2 && tau[0] && tau[1] && *tau[0] < *tau[1];
        ok += good;
        d << " seed" << seed << ":" << (tau.size() > 0 && tau[0] ? fmt(*tau[0]) : "-") << "<"
          << (tau.size() > 1 && tau[1] ? fmt(*tau[1]) : "-");
    }
    const double secs = seconds_since(t0);
    d << " (" << ok << "/5, " << fmt(secs) << " s)";
    return {ok == 5 && secs < 120.0, "tau(k=1) < tau(k=5)" + d.str()};
}

Outcome spline_regime(const std::string& file, const std::string& label) {
    const auto r = cli::run_fig3(config(file, 1));
    std::ostringstream d;
    d << label << " rel L2 " << fmt(r.rel_l2_reference) << " (limit 0.05, loss " << fmt(r.final_loss) << ")";
    bool shrinking = true;
    if (!r.sweep.empty()) {
        d << "; m-sweep";
        for (std::size_t i = 0; i < r.sweep.size(); ++i) {
            d << " " << r.sweep[i].m << ":" << fmt(r.sweep[i].rel_l2);
            if (i > 0 && r.sweep[i].rel_l2 >= r.sweep[i - 1].rel_l2)
                shrinking = false;
        }
        if (!shrinking)
            d << " (not monotone)";
    }
    return {r.rel_l2_reference <= 0.05 && r.final_loss < 1e-6 && shrinking, d.str()};
}

Outcome xor_prediction() {
    const auto r = cli::run_fig4(config("fig4_xor.json", 1));
    const bool ok = r.metrics.correlation >= 0.95 && r.metrics.slope >= 0.9 && r.metrics.slope <= 1.1;
    return {ok, "corr " + fmt(r.metrics.correlation) + " slope " + fmt(r.metrics.slope) + " on " +
                    std::to_string(r.resolution) + "x" + std::to_string(r.resolution) + " grid"};
}

Outcome parity_failure() {
    bool ok = true;
    std::ostringstream d;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto r = cli::run_parity(config("parity.json", seed));
        const bool acc = r.train_accuracy == 1.0 && r.test_accuracy <= 0.6;
        bool peaks = true;
        for (double k : r.axis_peak)
            peaks = peaks && std::abs(std::abs(k) - 0.25) < 1e-9;
        ok = ok && acc && peaks && !r.axis_peak.empty();
        d << " seed" << seed << ": train " << fmt(r.train_accuracy) << " test " << fmt(r.test_accuracy)
          << (peaks ? " peaks at 1/4" : " peaks off 1/4");
    }
    return {ok, d.str().substr(1)};
}

Outcome solver_cross_check() {
    const auto t0 = std::chrono::steady_clock::now();
    RandomSource rng(2024);
    const auto spec = GammaSpec::power_law(0.5, 1.0, 1);
    const auto lat = build_lattice(1, 30.0, 0.05);
    lfp::LatticeKernel K(spec, lat);
    double worst_spec = 0.0, worst_rk4 = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const Dataset ds = random_1d(rng, 4 + trial);
        const auto red = lfp::ReducedState::from_dataset(ds, K);
        const Vector& ev = red.eigenvalues();
        const double lam_min = (ev.array() > 1e-9 * ev.maxCoeff()).select(ev.array(), 1e300).minCoeff();
        const double horizon = 5.0 / lam_min;

        const double dt = 0.5 * lfp::spectral_stability_bound(ds, spec, lat);
        const int steps = static_cast<int>(std::min(20000.0, std::ceil(horizon / dt)));
        auto sp = lfp::SpectralState::from_residuals(lat, -ds.values());
        const auto tr = lfp::evolve_spectral(sp, ds, spec, dt, steps, std::max(1, steps / 200));
        double num = 0.0, den = 0.0;
        for (std::size_t c = 0; c < tr.times.size(); ++c) {
            auto r = red;
            r.advance_to(tr.times[c]);
            num += (r.residuals() - tr.residuals[c]).squaredNorm();
            den += r.residuals().squaredNorm();
        }
        worst_spec = std::max(worst_spec, std::sqrt(num / den));

        const double h = 0.05 / ev.maxCoeff();
        for (double t : {1000.0 * h, std::min(horizon, 100000.0 * h)}) {
            auto r = red;
            r.advance_to(t);
            const Vector ref = oracle::rk4_linear(red.gram(), -ds.values(), t, h);
            worst_rk4 = std::max(worst_rk4, (r.residuals() - ref).norm() / ref.norm());
        }
    }
    const double secs = seconds_since(t0);
    return {worst_spec <= 0.02 && worst_rk4 <= 1e-6 && secs < 60.0,
            "spectral vs reduced " + fmt(worst_spec) + " (limit 0.02), reduced vs RK4 " + fmt(worst_rk4) +
                " (limit 1e-6), " + fmt(secs) + " s"};
}

Outcome spline_oracles() {
    RandomSource rng(77);
    double worst_cubic = 0.0, worst_linear = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + trial % 10;
        const Dataset ds = random_sorted_1d(rng, n, -2.0, 2.0);
        std::vector<double> xs(ds.points().col(0).data(), ds.points().col(0).data() + n);
        std::vector<double> ys(ds.values().data(), ds.values().data() + n);
        const auto cub = spline::steady_state(ds, spline::CpdKernelSpec::make(1, 1.0, 0.0));
        const auto lin = spline::steady_state(ds, spline::CpdKernelSpec::make(1, 0.0, 1.0));
        const oracle::NaturalCubicSpline ref(xs, ys);
        for (int k = 0; k <= 2000; ++k) {
            const double t = -2.5 + 5.0 * k / 2000.0;
            worst_cubic = std::max(worst_cubic, std::abs(cub(Vector::Constant(1, t)) - ref(t)));
            if (t >= xs.front() && t <= xs.back())
                worst_linear =
                    std::max(worst_linear, std::abs(lin(Vector::Constant(1, t)) - oracle::piecewise_linear(xs, ys, t)));
        }
    }
    return {worst_cubic <= 1e-6 && worst_linear <= 1e-10,
            "cubic vs natural spline " + fmt(worst_cubic) + " (limit 1e-6), linear vs piecewise " +
                fmt(worst_linear) + " (limit 1e-10)"};
}

Outcome fourier_pairs() {
    const auto rep = fourier::verify_power_pairs(480.0, 1.0, 10.0, 37, 0.01);
    return {rep.passed && rep.extent >= 100.0 && rep.max_rel_error_linear <= 0.01 && rep.max_rel_error_cubic <= 0.01,
            "|x|: " + fmt(rep.max_rel_error_linear) + ", |x|^3: " + fmt(rep.max_rel_error_cubic) +
                " max rel error on |xi| in [1, 10], extent " + fmt(rep.extent)};
}

template <class Net>
int gradient_probes(Net net, const Dataset& ds, RandomSource& rng, int probes, double& worst) {
    int good = 0;
    Vector g;
    net.loss_and_gradient(ds, g);
    const Vector theta = net.parameters();
    const auto loss = [&](const Vector& th) {
        Net copy = net;
        copy.set_parameters(th);
        return copy.loss(ds);
    };
    for (int p = 0; p < probes; ++p) {
        Vector v(theta.size());
        for (Eigen::Index k = 0; k < v.size(); ++k)
            v[k] = rng.normal();
        v.normalize();
        const double fd = oracle::central_difference(loss, theta, v, 1e-6 * std::max(1.0, theta.norm()));
        const double an = g.dot(v);
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-12});
        worst = std::max(worst, rel);
        good += rel <= 1e-5;
    }
    return good;
}

Outcome gradients() {
    RandomSource rng(9);
    Matrix x(8, 2);
    Vector y(8);
    for (int i = 0; i < 8; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y[i] = rng.normal();
    }
    const Dataset ds(x, y);
    nn::InitConfig ic;
    ic.asi = false;
    ic.seed = 3;
    double w1 = 0.0, w2 = 0.0;
    const int a = gradient_probes(nn::init_two_layer(64, 2, ic), ds, rng, 100, w1);
    auto mlp = nn::build_mlp({2, 16, 16, 1}, 4);
    Vector th = mlp.parameters();
    for (Eigen::Index k = 0; k < th.size(); ++k)
        th[k] += 0.05 * rng.normal();
    mlp.set_parameters(th);
    const int b = gradient_probes(mlp, ds, rng, 100, w2);
    return {a == 100 && b == 100, "two-layer " + std::to_string(a) + "/100 (worst " + fmt(w1) + "), mlp " +
                                      std::to_string(b) + "/100 (worst " + fmt(w2) + ")"};
}

Outcome scaling_rate() {
    const auto r = cli::run_scaling(config("scaling_law.json", 1));
    const auto& rep = r.report;
    const bool ok = !rep.degenerate && rep.slope >= -1.3 && rep.slope <= -0.7;
    return {ok, "log-log slope " + fmt(rep.slope) + " CI [" + fmt(rep.ci_low) + ", " + fmt(rep.ci_high) + "]" +
                    (rep.monotone ? ", monotone" : ", not monotone")};
}

Outcome energy_minimality() {
    RandomSource rng(31);
    const auto spec = GammaSpec::power_law(1.0, 1.0, 1);
    const auto kernel = spline::kernel_weights_from_stats(1.0, 1.0, 1);
    const auto lat = build_lattice(1, 60.0, 0.02);
    int ok = 0;
    double worst = -INFINITY;
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + trial % 6;
        const Dataset ds = random_sorted_1d(rng, n, -1.0, 1.0);
        const auto h = spline::steady_state(ds, kernel);
        const auto hf = [h](double t) { return h(Vector::Constant(1, t)); };
        const Matrix& x = ds.points();
        // perturbations vanish at every x_i and decay away from the data
        const auto poly_bump = [hf, x, n](double amp, double width) {
            return [=](double t) {
                double p = amp;
                for (int i = 0; i < n; ++i)
                    p *= t - x(i, 0);
                return hf(t) + p * std::exp(-t * t / (width * width));
            };
        };
        const auto sine_bump = [hf, x, n](double amp, double freq) {
            return [=](double t) {
                double p = amp;
                for (int i = 0; i < n; ++i)
                    p *= std::sin(freq * (t - x(i, 0)));
                return hf(t) + p * std::exp(-0.5 * t * t);
            };
        };
        const double a = 0.05 + rng.uniform();
        const double f = 1.0 + 3.0 * rng.uniform();
        const auto rep = spline::energy_comparison(ds, kernel,
                                                   {{"poly", poly_bump(a, 1.0)},
                                                    {"poly_small", poly_bump(0.01 * a, 1.0)},
                                                    {"poly_wide", poly_bump(0.1 * a, 2.0)},
                                                    {"sine", sine_bump(a, f)},
                                                    {"sine_small", sine_bump(0.01 * a, f)}},
                                                   spec, lat);
        ok += rep.minimizer_is_minimal;
        worst = std::max(worst, rep.worst_margin);
    }
    return {ok == 10, std::to_string(ok) + "/10 problems minimal (worst margin " + fmt(worst) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fpl acceptance suite"};
    int only = 0;
    app.add_option("--only", only, "run a single criterion (1-11)")->check(CLI::Range(1, 11));
    CLI11_PARSE(app, argc, argv);

    const std::map<int, std::function<Outcome()>> criteria{
        {1, frequency_ordering},
        {2, [] { return spline_regime("fig3b_linear.json", "linear regime"); }},
        {3, [] { return spline_regime("fig3a_cubic.json", "cubic regime"); }},
        {4, xor_prediction},
        {5, parity_failure},
        {6, solver_cross_check},
        {7, spline_oracles},
        {8, fourier_pairs},
        {9, gradients},
        {10, scaling_rate},
        {11, energy_minimality},
    };
    int failed = 0;
    for (const auto& [id, fn] : criteria) {
        if (only != 0 && id != only)
            continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
