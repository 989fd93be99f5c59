#include "fpl/error.hpp"
#include "fpl/lfp_solver.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fpl;

namespace {

Dataset random_1d(RandomSource& rng, int n, double lo = -1.0, double hi = 1.0) {
    Matrix x(n, 1);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = lo + (hi - lo) * rng.uniform();
        y[i] = rng.normal();
    }
    return Dataset(x, y);
}

}  // namespace

TEST_SUITE("lfp_solver") {

TEST_CASE("kernel at the origin is the plain rate sum") {
    const auto spec = GammaSpec::power_law(1.0, 2.0, 1);
    const auto lat = build_lattice(1, 5.0, 0.1);
    double s = 0.0;
    for (int i = 0; i < lat.size(); ++i)
        s += gamma_eval(spec, lat.node(i));
    const double expect = s * 0.1 / (2.0 * std::numbers::pi);
    CHECK(lfp::kernel_from_gamma(spec, lat, Vector::Zero(1)) == doctest::Approx(expect).epsilon(1e-13));
    CHECK(expect > 0.0);
}

TEST_CASE("constant tabulated rate factorizes") {
    const auto lat = build_lattice(2, 2.0, 0.5);
    const auto spec = GammaSpec::tabulated({0.0, 10.0}, {3.0, 3.0});
    Vector x(2);
    x << 0.3, -1.1;
    double s = 0.0;
    for (int i = 0; i < lat.size(); ++i)
        s += std::cos(lat.node(i).dot(x));
    const double expect = 3.0 * s * 0.25 / std::pow(2.0 * std::numbers::pi, 2);
    CHECK(lfp::kernel_from_gamma(spec, lat, x) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("pure-B kernel differences follow -|x|/2") {
    const auto spec = GammaSpec::power_law(0.0, 1.0, 1);
    const auto lat = build_lattice(1, 1000.0, 0.002);
    const double diff = lfp::kernel_from_gamma(spec, lat, Vector::Constant(1, 0.7)) -
                        lfp::kernel_from_gamma(spec, lat, Vector::Constant(1, 0.3));
    CHECK(diff == doctest::Approx(-0.2).epsilon(0.01));
}

TEST_CASE("gram matrix structure") {
    RandomSource rng(3);
    const auto spec = GammaSpec::power_law(0.5, 1.0, 1);
    const auto lat = build_lattice(1, 30.0, 0.05);
    lfp::LatticeKernel K(spec, lat);
    const Dataset one(Matrix::Zero(1, 1), Vector::Ones(1));
    CHECK(lfp::build_gram(one, K)(0, 0) == doctest::Approx(K.at_origin()));
    for (int t = 0; t < 10; ++t) {
        const Dataset ds = random_1d(rng, 5);
        const Matrix G = lfp::build_gram(ds, K);
        CHECK((G - G.transpose()).cwiseAbs().maxCoeff() == 0.0);
        for (int i = 0; i < 5; ++i)
            CHECK(G(i, i) == doctest::Approx(K.at_origin() / 5.0));
        const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-8 * G.norm());
        // cross-check the cached kernel against direct quadrature
        CHECK(G(0, 1) * 5.0 == doctest::Approx(lfp::kernel_from_gamma(spec, lat, ds.point(0) - ds.point(1))).epsilon(1e-12));
    }
}

TEST_CASE("reduced flow: fixed point, scalar case, RK4 oracle") {
    const auto spec = GammaSpec::power_law(0.5, 1.0, 1);
    const auto lat = build_lattice(1, 30.0, 0.05);
    lfp::LatticeKernel K(spec, lat);

    lfp::ReducedState zero(Matrix::Identity(3, 3), Vector::Zero(3));
    const auto tz = lfp::evolve_reduced(zero, 5.0, 5);
    for (const auto& r : tz.residuals)
        CHECK(r.norm() == 0.0);

    const Dataset one(Matrix::Zero(1, 1), Vector::Constant(1, 2.0));
    auto s1 = lfp::ReducedState::from_dataset(one, K);
    s1.advance_to(0.3);
    CHECK(s1.residuals()[0] == doctest::Approx(-2.0 * std::exp(-K.at_origin() * 0.3)).epsilon(1e-12));

    RandomSource rng(17);
    const Dataset ds = random_1d(rng, 4);
    auto st = lfp::ReducedState::from_dataset(ds, K);
    const Vector r0 = st.residuals();
    st.advance_to(10.0);
    const Vector ref = oracle::rk4_linear(st.gram(), r0, 10.0, 1e-3);
    CHECK(oracle::rel_l2(st.residuals(), ref) <= 1e-6);
}

TEST_CASE("reduced flow: monotone loss, linearity, interpolating steady state") {
    RandomSource rng(23);
    const auto spec = GammaSpec::power_law(1.0, 1.0, 1);
    const auto lat = build_lattice(1, 40.0, 0.05);
    lfp::LatticeKernel K(spec, lat);
    for (int t = 0; t < 5; ++t) {
        const Dataset ds = random_1d(rng, 3 + t);
        auto a = lfp::ReducedState::from_dataset(ds, K);
        lfp::ReducedState b(a.gram(), 2.5 * a.residuals());
        const auto ta = lfp::evolve_reduced(a, 20.0, 40);
        const auto tb = lfp::evolve_reduced(b, 20.0, 40);
        for (std::size_t c = 1; c < ta.loss.size(); ++c) {
            CHECK(ta.loss[c] <= ta.loss[c - 1] + 1e-12);
            CHECK(ta.times[c] > ta.times[c - 1]);
            CHECK(ta.loss[c] == doctest::Approx(ta.residuals[c].squaredNorm() / (2.0 * ds.size())));
        }
        for (std::size_t c = 0; c < ta.residuals.size(); ++c)
            CHECK((tb.residuals[c] - 2.5 * ta.residuals[c]).norm() <= 1e-12 * std::max(1.0, tb.residuals[c].norm()));

        auto c = lfp::ReducedState::from_dataset(ds, K);
        const double lmin = c.eigenvalues().minCoeff();
        REQUIRE(lmin > 0.0);
        const Vector r0 = c.residuals();
        c.advance_to(30.0 / lmin);
        CHECK(c.residuals().norm() <= 1e-10 * r0.norm());
        const auto inf = lfp::ReducedState::from_dataset(ds, K).steady_state();
        for (int i = 0; i < ds.size(); ++i)
            CHECK(lfp::predict_offsample(inf, ds, K, ds.point(i)) == doctest::Approx(ds.values()[i]).epsilon(1e-6));
    }
}

TEST_CASE("off-sample prediction starts at the initial function") {
    RandomSource rng(2);
    const Dataset ds = random_1d(rng, 4);
    const auto lat = build_lattice(1, 20.0, 0.05);
    lfp::LatticeKernel K(GammaSpec::power_law(1.0, 1.0, 1), lat);
    const auto st = lfp::ReducedState::from_dataset(ds, K);
    const auto hini = [](const Vector& x) { return std::sin(3.0 * x[0]); };
    CHECK(lfp::predict_offsample(st, ds, K, Vector::Constant(1, 0.123), hini) == doctest::Approx(std::sin(0.369)));
    CHECK(lfp::predict_offsample(st, ds, K, Vector::Constant(1, 0.123)) == 0.0);
}

TEST_CASE("spectral flow: frozen field, flat drive, symmetry") {
    const auto spec = GammaSpec::power_law(1.0, 1.0, 1);
    const auto lat = build_lattice(1, 10.0, 0.1);
    Matrix x(2, 1);
    x << -0.5, 0.5;
    const Dataset ds(x, Vector::Zero(2));
    // cos(pi x) carried by the nodes +-pi vanishes at both training points, so nothing drives it
    const auto plat = build_lattice(1, 1.05 * std::numbers::pi, std::numbers::pi / 10.0);
    CVector uhat = CVector::Zero(plat.size());
    uhat[0] = uhat[plat.size() - 1] = Complex(1.0, 0.0);
    REQUIRE(std::abs(plat.node(0)[0] + std::numbers::pi) < 1e-12);
    auto frozen = lfp::SpectralState::from_field(plat, uhat, 2);
    lfp::evolve_spectral(frozen, ds, spec, 0.0, 10, 5);
    CHECK((frozen.uhat() - uhat).cwiseAbs().maxCoeff() <= 1e-12);

    const Dataset one(Matrix::Zero(1, 1), Vector::Zero(1));
    auto s = lfp::SpectralState::from_residuals(lat, Vector::Ones(1));
    const double dt = 0.5 * lfp::spectral_stability_bound(one, spec, lat);
    lfp::evolve_spectral(s, one, spec, dt, 1, 1);
    for (int i = 0; i < lat.size(); ++i) {
        const Complex expect = -dt * gamma_eval(spec, lat.node(i));
        CHECK(std::abs(s.uhat()[i] - expect) <= 1e-12 * std::abs(expect));
    }

    RandomSource rng(8);
    const Dataset rd = random_1d(rng, 6);
    auto sr = lfp::SpectralState::from_residuals(lat, -rd.values());
    const double dtr = 0.5 * lfp::spectral_stability_bound(rd, spec, lat);
    const auto tr = lfp::evolve_spectral(sr, rd, spec, dtr, 300, 30, true);
    CHECK(sr.symmetry_defect() <= 1e-10);
    for (std::size_t c = 1; c < tr.loss.size(); ++c)
        CHECK(tr.loss[c] <= tr.loss[c - 1] + 1e-12);
}

TEST_CASE("spectral flow refuses an unstable step") {
    const auto spec = GammaSpec::power_law(1.0, 1.0, 1);
    const auto lat = build_lattice(1, 10.0, 0.1);
    const Dataset one(Matrix::Zero(1, 1), Vector::Zero(1));
    auto s = lfp::SpectralState::from_residuals(lat, Vector::Ones(1));
    const double bound = lfp::spectral_stability_bound(one, spec, lat);
    CHECK_THROWS_AS(lfp::evolve_spectral(s, one, spec, 1.5 * bound, 1, 1), NumericalError);
}

TEST_CASE("spectral and reduced flows agree on the two-tone dataset") {
    Matrix x(40, 1);
    Vector y(40);
    for (int i = 0; i < 40; ++i) {
        x(i, 0) = -3.14 + 6.28 * i / 39.0;
        y[i] = std::sin(x(i, 0)) + std::sin(5.0 * x(i, 0));
    }
    const Dataset ds(x, y);
    const auto spec = GammaSpec::power_law(0.0, 1.0, 1);
    const auto lat = build_lattice(1, 30.0, 0.04);
    lfp::LatticeKernel K(spec, lat);
    const auto red = lfp::ReducedState::from_dataset(ds, K);
    const double dt = 0.5 * lfp::spectral_stability_bound(ds, spec, lat);
    auto sp = lfp::SpectralState::from_residuals(lat, -y);
    const auto tr = lfp::evolve_spectral(sp, ds, spec, dt, 4000, 100);
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < tr.times.size(); ++c) {
        auto r = red;
        r.advance_to(tr.times[c]);
        num += (r.residuals() - tr.residuals[c]).squaredNorm();
        den += r.residuals().squaredNorm();
    }
    CHECK(std::sqrt(num / den) <= 0.02);
}

TEST_CASE("dissipation diagnostics") {
    const auto spec = GammaSpec::power_law(1.0, 1.0, 1);
    const auto lat = build_lattice(1, 10.0, 0.1);
    const Dataset one(Matrix::Zero(1, 1), Vector::Zero(1));
    auto zero = lfp::SpectralState::from_residuals(lat, Vector::Zero(1));
    const auto tz = lfp::evolve_spectral(zero, one, spec, 0.0, 4, 1, true);
    CHECK(lfp::frequency_dissipation(tz).energy.cwiseAbs().maxCoeff() == 0.0);

    auto s = lfp::SpectralState::from_residuals(lat, Vector::Ones(1));
    const double dt = 0.25 * lfp::spectral_stability_bound(one, spec, lat);
    const auto tr = lfp::evolve_spectral(s, one, spec, dt, 3, 1, true);
    const auto dis = lfp::frequency_dissipation(tr);
    // after the first step uhat_k = -dt gamma_k and the drive is flat, so energy_k / gamma_k is constant
    const Eigen::Index row = 1;
    const double ratio0 = dis.energy(row, 0) / gamma_eval(spec, lat.node(0));
    for (int i = 1; i < lat.size(); ++i)
        CHECK(dis.energy(row, i) / gamma_eval(spec, lat.node(i)) == doctest::Approx(ratio0).epsilon(1e-10));
    CHECK_THROWS_AS(lfp::frequency_dissipation(lfp::FlowTrajectory{}), DomainError);
}

TEST_CASE("two-point pure-B steady state against the linear spline") {
    Matrix x(2, 1);
    x << -0.4, 0.5;
    Vector y(2);
    y << 1.0, -0.5;
    const Dataset ds(x, y);
    lfp::LatticeKernel K(GammaSpec::power_law(0.0, 1.0, 1), build_lattice(1, 1000.0, 0.002));
    const auto inf = lfp::ReducedState::from_dataset(ds, K).steady_state();
    for (double t : {-0.3, 0.0, 0.2, 0.45}) {
        const double lin = 1.0 + (t + 0.4) / 0.9 * (-1.5);
        CHECK(lfp::predict_offsample(inf, ds, K, Vector::Constant(1, t)) == doctest::Approx(lin).epsilon(1e-3));
    }
}

}
