#include "fpl/error.hpp"
#include "fpl/io.hpp"
#include "fpl/nn.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

using namespace fpl;

namespace {

nn::InitConfig init(double sa, double sw, double sc, std::uint64_t seed, bool asi = true) {
    nn::InitConfig c;
    c.sigma_a = sa;
    c.sigma_w = sw;
    c.sigma_c = sc;
    c.asi = asi;
    c.seed = seed;
    return c;
}

Dataset fig3_data() {
    Matrix x(6, 1);
    Vector y(6);
    for (int i = 0; i < 6; ++i) {
        x(i, 0) = -1.0 + 0.4 * i;
        y[i] = std::sin(2.0 * x(i, 0)) + 0.5 * std::cos(5.0 * x(i, 0));
    }
    return Dataset(x, y);
}

double auto_eta(const nn::TwoLayerNet& net, const Dataset& ds) {
    const Matrix K = nn::empirical_ntk(net, ds.points());
    return ds.size() / Eigen::SelfAdjointEigenSolver<Matrix>(K).eigenvalues().maxCoeff();
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("forward examples") {
    nn::TwoLayerNet zero(Vector::Zero(3), Matrix::Ones(3, 1), Vector::Ones(3));
    CHECK(zero(Vector::Constant(1, 0.7)) == 0.0);
    nn::TwoLayerNet single(Vector::Ones(1), Matrix::Ones(1, 1), Vector::Zero(1));
    CHECK(single(Vector::Constant(1, 2.0)) == 2.0);
    CHECK(nn::forward(single, Vector::Constant(1, -2.0)) == 0.0);

    const auto net = nn::init_two_layer(64, 3, init(1.0, 1.0, 1.0, 5, false));
    RandomSource rng(1);
    for (int t = 0; t < 20; ++t) {
        Vector x(3);
        x << rng.normal(), rng.normal(), rng.normal();
        CHECK(std::abs(net(x) - oracle::slow_forward(net, x)) <= 1e-12);
    }
}

TEST_CASE("antisymmetric initialization cancels exactly") {
    for (int d = 1; d <= 3; ++d) {
        const auto net = nn::init_two_layer(256, d, init(2.0, 1.5, 3.0, 9));
        RandomSource rng(d);
        for (int t = 0; t < 50; ++t) {
            Vector x(d);
            for (int j = 0; j < d; ++j)
                x[j] = 5.0 * rng.normal();
            CHECK(std::abs(net(x)) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(nn::init_two_layer(7, 1, init(1, 1, 1, 0)), ConfigError);
}

TEST_CASE("initialization is deterministic") {
    const auto a = nn::init_two_layer(128, 2, init(1, 1, 1, 77));
    const auto b = nn::init_two_layer(128, 2, init(1, 1, 1, 77));
    const auto c = nn::init_two_layer(128, 2, init(1, 1, 1, 78));
    CHECK(a.parameters() == b.parameters());
    CHECK(a.parameters() != c.parameters());
}

TEST_CASE("initial moments") {
    const int m = 100000;
    const auto net = nn::init_two_layer(m, 2, init(1.0, 1.0, 1.0, 4, false));
    const Vector r2 = net.w().rowwise().squaredNorm();
    const double mean = r2.mean();
    const double se = std::sqrt((r2.array() - mean).square().sum() / (m - 1) / m);
    CHECK(std::abs(mean - 2.0) <= 3.0 * se);

    // A = <a^2 + r^2> with E a^2 = sigma_a^2, E r^2 = d sigma_w^2; B = <a^2 r^2>
    const auto s = nn::init_stats(nn::init_two_layer(m, 3, init(2.0, 0.5, 1.0, 6, false)));
    const double EA = 4.0 + 3 * 0.25, EB = 4.0 * 3 * 0.25;
    // standard errors from the fourth moments: Var(a^2) = 2 sa^4, Var(r^2) = 2 d sw^4
    const double seA = std::sqrt((2 * 16.0 + 2 * 3 * 0.0625) / m);
    const double seB = std::sqrt((3 * 16.0 * (3 * 5) * 0.0625 - EB * EB) / m);
    CHECK(std::abs(s.A - EA) <= 3.0 * seA);
    CHECK(std::abs(s.B - EB) <= 3.0 * seB);

    nn::TwoLayerNet unit(Vector::Ones(3), Matrix::Ones(3, 1), Vector::Zero(3));
    CHECK(nn::init_stats(unit).A == doctest::Approx(2.0));
    CHECK(nn::init_stats(unit).B == doctest::Approx(1.0));
    nn::TwoLayerNet mute(Vector::Zero(2), Matrix::Constant(2, 1, 2.0), Vector::Zero(2));
    CHECK(nn::init_stats(mute).A == doctest::Approx(4.0));
    CHECK(nn::init_stats(mute).B == 0.0);
}

TEST_CASE("two-layer gradient against central differences") {
    RandomSource rng(12);
    for (int t = 0; t < 20; ++t) {
        const int d = 1 + t % 3;
        auto net = nn::init_two_layer(16, d, init(1.0, 1.0, 1.0, 100 + t, false));
        Matrix x(5, d);
        Vector y(5);
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < d; ++j)
                x(i, j) = rng.normal();
            y[i] = rng.normal();
        }
        const Dataset ds(x, y);
        Vector g;
        net.loss_and_gradient(ds, g);
        Vector v(g.size());
        for (Eigen::Index k = 0; k < v.size(); ++k)
            v[k] = rng.normal();
        v.normalize();
        const Vector theta = net.parameters();
        const auto loss = [&](const Vector& th) {
            auto n2 = net;
            n2.set_parameters(th);
            return n2.loss(ds);
        };
        const double fd = oracle::central_difference(loss, theta, v, 1e-6 * theta.norm());
        CHECK(g.dot(v) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("zero residual leaves parameters unchanged; small steps descend") {
    auto net = nn::init_two_layer(32, 1, init(1, 1, 1, 3));
    const Matrix x = Matrix::Random(4, 1);
    const Dataset zero(x, Vector::Zero(4));
    const Vector before = net.parameters();
    nn::grad_step(net, zero, 0.1);
    CHECK(net.parameters() == before);

    const Dataset ds = fig3_data();
    const double eta = 0.1 * auto_eta(net, ds);
    double prev = nn::grad_step(net, ds, eta);
    for (int s = 0; s < 100; ++s) {
        const double l = nn::grad_step(net, ds, eta);
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("train stops at tolerance and flags divergence") {
    auto net = nn::init_two_layer(32, 1, init(1, 1, 1, 3));
    const Dataset zero(Matrix::Random(4, 1), Vector::Zero(4));
    nn::TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.max_steps = 100;
    cfg.loss_tolerance = 1e-12;
    const auto r = nn::train(net, zero, cfg);
    CHECK(r.converged);
    CHECK(r.steps == 0);

    auto hot = nn::init_two_layer(64, 1, init(1, 1, 1, 4));
    cfg.learning_rate = 1e4;
    cfg.loss_tolerance = 0.0;
    CHECK_THROWS_AS(nn::train(hot, fig3_data(), cfg), NumericalError);
}

TEST_CASE("stable learning-rate probe gives monotone descent") {
    const auto net = nn::init_two_layer(64, 1, init(3, 3, 2, 8));
    const Dataset ds = fig3_data();
    const double eta = nn::probe_stable_learning_rate(net, ds, 100.0);
    auto copy = net;
    double prev = nn::grad_step(copy, ds, eta);
    for (int s = 0; s < 100; ++s) {
        const double l = nn::grad_step(copy, ds, eta);
        CHECK(l <= prev);
        prev = l;
    }
}

TEST_CASE("empirical NTK") {
    const auto net = nn::init_two_layer(512, 2, init(1, 1, 1, 21));
    Matrix x(1, 2);
    x << 0.3, -0.4;
    const Matrix K1 = nn::empirical_ntk(net, x);
    CHECK(K1(0, 0) == doctest::Approx(net.parameter_gradient(x.row(0).transpose()).squaredNorm()));
    const Matrix pts = Matrix::Random(6, 2);
    const Matrix K = nn::empirical_ntk(net, pts);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);

    const int m = 20000;
    const Matrix A = nn::empirical_ntk(nn::init_two_layer(m, 2, init(1, 1, 1, 1)), pts);
    const Matrix B = nn::empirical_ntk(nn::init_two_layer(m, 2, init(1, 1, 1, 2)), pts);
    CHECK(((A - B).array().abs() / A.array().abs()).maxCoeff() <= 0.05);
}

TEST_CASE("linearized forward") {
    const auto net = nn::init_two_layer(64, 1, init(1, 1, 1, 2, false));
    const Vector th0 = net.parameters();
    const Vector x = Vector::Constant(1, 0.37);
    CHECK(nn::linearized_forward(net, th0, x) == doctest::Approx(net(x)));
    RandomSource rng(4);
    Vector dv(th0.size());
    for (Eigen::Index k = 0; k < dv.size(); ++k)
        dv[k] = rng.normal();
    const double c1 = nn::linearized_forward(net, th0 + dv, x) - net(x);
    const double c2 = nn::linearized_forward(net, th0 + 2.0 * dv, x) - net(x);
    CHECK(c2 == doctest::Approx(2.0 * c1).epsilon(1e-12));
}

TEST_CASE("wide net stays close to its linearization") {
    const Dataset ds = fig3_data();
    const int m = 20000;
    auto net = nn::init_two_layer(m, 1, init(10, 10, 1, 5));
    const auto net0 = net;
    nn::TrainConfig cfg;
    cfg.learning_rate = auto_eta(net, ds);
    cfg.max_steps = 5000;
    cfg.loss_tolerance = 1e-6;
    REQUIRE(nn::train(net, ds, cfg).converged);
    Matrix grid(201, 1);
    for (int k = 0; k <= 200; ++k)
        grid(k, 0) = -1.0 + 0.01 * k;
    const Vector f = net.forward_rows(grid);
    double gap = 0.0;
    for (int k = 0; k <= 200; ++k)
        gap = std::max(gap, std::abs(nn::linearized_forward(net0, net.parameters(), grid.row(k).transpose()) - f[k]));
    CHECK(gap <= 0.05 * (f.maxCoeff() - f.minCoeff()));
}

TEST_CASE("parameter displacement shrinks with width") {
    const Dataset ds = fig3_data();
    double prev = INFINITY;
    for (int m : {1000, 10000, 40000}) {
        auto net = nn::init_two_layer(m, 1, init(10, 10, 1, 3));
        const Vector th0 = net.parameters();
        nn::TrainConfig cfg;
        cfg.learning_rate = auto_eta(net, ds);
        cfg.max_steps = 20000;
        cfg.loss_tolerance = 1e-6;
        REQUIRE(nn::train(net, ds, cfg).converged);
        const double disp = (net.parameters() - th0).norm() / th0.norm();
        CHECK(disp < prev);
        prev = disp;
    }
}

TEST_CASE("training is deterministic") {
    const Dataset ds = fig3_data();
    nn::TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.max_steps = 50;
    auto a = nn::init_two_layer(128, 1, init(1, 1, 1, 9));
    auto b = nn::init_two_layer(128, 1, init(1, 1, 1, 9));
    const auto ra = nn::train(a, ds, cfg);
    const auto rb = nn::train(b, ds, cfg);
    CHECK(a.parameters() == b.parameters());
    CHECK(ra.loss_history == rb.loss_history);
}

TEST_CASE("mlp gradient against central differences") {
    RandomSource rng(33);
    for (int t = 0; t < 10; ++t) {
        auto net = nn::build_mlp({3, 7, 5, 1}, 40 + t);
        auto th = net.parameters();
        for (Eigen::Index k = 0; k < th.size(); ++k)
            th[k] += 0.1 * rng.normal();  // nonzero biases
        net.set_parameters(th);
        const Matrix x = Matrix::Random(6, 3);
        Vector y(6);
        for (int i = 0; i < 6; ++i)
            y[i] = rng.normal();
        const Dataset ds(x, y);
        Vector g;
        net.loss_and_gradient(ds, g);
        Vector v(g.size());
        for (Eigen::Index k = 0; k < v.size(); ++k)
            v[k] = rng.normal();
        v.normalize();
        const auto loss = [&](const Vector& p) {
            auto n2 = net;
            n2.set_parameters(p);
            return n2.loss(ds);
        };
        CHECK(g.dot(v) == doctest::Approx(oracle::central_difference(loss, th, v, 1e-6 * th.norm())).epsilon(1e-5));
    }
}

TEST_CASE("mlp without hidden layers is least squares") {
    RandomSource rng(2);
    Matrix X(30, 3);
    Vector y(30);
    for (int i = 0; i < 30; ++i) {
        for (int j = 0; j < 3; ++j)
            X(i, j) = rng.normal();
        y[i] = 1.0 + X(i, 0) - 2.0 * X(i, 2) + 0.3 * rng.normal();
    }
    auto net = nn::build_mlp({3, 1}, 1);
    nn::TrainConfig cfg;
    cfg.learning_rate = 0.3;
    cfg.max_steps = 20000;
    nn::train_mlp(net, Dataset(X, y), cfg);
    const Vector beta = oracle::normal_equations(X, y);
    for (int j = 0; j < 3; ++j)
        CHECK(net.weights()[0](0, j) == doctest::Approx(beta[j]).epsilon(1e-4));
    CHECK(net.biases()[0][0] == doctest::Approx(beta[3]).epsilon(1e-4));
}

TEST_CASE("mlp fits xor") {
    Matrix X(4, 2);
    X << -1, -1, -1, 1, 1, -1, 1, 1;
    Vector y(4);
    y << -1, 1, 1, -1;
    auto net = nn::build_mlp({2, 64, 1}, 3);
    nn::TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.max_steps = 20000;
    cfg.loss_tolerance = 1e-3;
    const auto r = nn::train_mlp(net, Dataset(X, y), cfg);
    CHECK(r.converged);
    CHECK(r.final_loss < 1e-3);
}

TEST_CASE("checkpoint format round trip") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto net = nn::init_two_layer(10, 2, init(1, 1, 1, 2));
    nn::save_checkpoint(dir / "fpl_two.ckpt", net, {{"seed", 2}, {"step", 0}});
    const std::string bytes = read_file(dir / "fpl_two.ckpt");
    CHECK(bytes.substr(0, 8) == "FPLCKPT1");
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i)
        hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    CHECK(bytes.size() == 16 + hlen + 8 * static_cast<std::size_t>(net.parameter_count()));
    double first = 0.0;
    std::memcpy(&first, bytes.data() + 16 + hlen, 8);
    CHECK(first == net.parameters()[0]);
    const auto ck = nn::load_checkpoint(dir / "fpl_two.ckpt");
    CHECK(ck.header.at("seed") == 2);
    CHECK(nn::two_layer_from_checkpoint(ck).parameters() == net.parameters());

    const auto mlp = nn::build_mlp({3, 4, 1}, 5);
    nn::save_checkpoint(dir / "fpl_mlp.ckpt", mlp, {});
    CHECK(nn::mlp_from_checkpoint(nn::load_checkpoint(dir / "fpl_mlp.ckpt")).parameters() == mlp.parameters());
    write_file(dir / "fpl_bad.ckpt", "NOTACKPT");
    CHECK_THROWS_AS(nn::load_checkpoint(dir / "fpl_bad.ckpt"), ConfigError);
}

}
