#include "fpl/nn.hpp"

#include "fpl/error.hpp"
#include "fpl/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fpl::nn {

namespace {

constexpr char kMagic[8] = {'F', 'P', 'L', 'C', 'K', 'P', 'T', '1'};

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

void check_data(int d, const Dataset& data) {
    if (data.dimension() != d)
        throw DomainError("network input dimension " + std::to_string(d) + " differs from data dimension " +
                          std::to_string(data.dimension()));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b)
        out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
        v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return v;
}

void write_blob(const std::filesystem::path& path, nlohmann::json header, const Vector& theta) {
    header["parameter_count"] = theta.size();
    header["format_version"] = 1;
    const std::string text = header.dump();
    std::string blob(kMagic, sizeof kMagic);
    put_u64(blob, text.size());
    blob += text;
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        put_u64(blob, std::bit_cast<std::uint64_t>(theta[i]));
    write_file(path, blob);
}

template <class Net>
TrainResult run_training(Net& net, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult result;
    auto record = [&](long step, double loss) {
        Checkpoint cp;
        cp.step = step;
        cp.loss = loss;
        cp.train_outputs = net.forward_rows(data.points());
        if (cfg.eval_points)
            cp.eval_outputs = net.forward_rows(*cfg.eval_points);
        if (cfg.keep_parameters)
            cp.parameters = net.parameters();
        result.checkpoints.push_back(std::move(cp));
    };
    auto wanted = [&](long step) {
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)
            return true;
        return std::find(cfg.checkpoint_steps.begin(), cfg.checkpoint_steps.end(), step) != cfg.checkpoint_steps.end();
    };

    Vector grad;
    double loss = net.loss_and_gradient(data, grad);
    const double initial = loss;
    record(0, loss);
    long step = 0;
    while (true) {
        if (!std::isfinite(loss))
            throw NumericalError("training produced a non-finite loss at step " + std::to_string(step));
        if (loss > cfg.divergence_factor * std::max(initial, 1e-300))
            throw NumericalError("training diverged at step " + std::to_string(step) + " (loss " +
                                 format_double(loss) + ", initial " + format_double(initial) +
                                 "); try a smaller learning rate");
        if (loss <= cfg.loss_tolerance) {
            result.converged = true;
            break;
        }
        if (step >= cfg.max_steps)
            break;
        if (cfg.stop_condition && cfg.stop_check_every > 0 && step % cfg.stop_check_every == 0 &&
            cfg.stop_condition(net.forward_rows(data.points()))) {
            result.stopped = true;
            break;
        }
        result.loss_history.push_back(loss);
        net.set_parameters(net.parameters() - cfg.learning_rate * grad);
        ++step;
        loss = net.loss_and_gradient(data, grad);
        if (wanted(step))
            record(step, loss);
    }
    result.loss_history.push_back(loss);
    result.steps = step;
    result.final_loss = loss;
    if (result.checkpoints.back().step != step)
        record(step, loss);
    return result;
}

}  // namespace

void InitConfig::validate() const {
    if (!(sigma_a > 0.0) || !(sigma_w > 0.0) || !(sigma_c > 0.0))
        throw ConfigError("initialization standard deviations must be positive");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0))
        throw ConfigError("learning rate must be positive");
    if (max_steps < 0 || checkpoint_every < 0 || stop_check_every < 0)
        throw ConfigError("max_steps and checkpoint_every must be nonnegative");
}

TwoLayerNet::TwoLayerNet(Vector a, Matrix w, Vector c) : a_(std::move(a)), w_(std::move(w)), c_(std::move(c)) {
    if (a_.size() < 1 || w_.rows() != a_.size() || c_.size() != a_.size() || w_.cols() < 1)
        throw DomainError("TwoLayerNet: inconsistent parameter shapes");
}

double TwoLayerNet::operator()(const Vector& x) const {
    if (x.size() != dimension())
        throw DomainError("TwoLayerNet: input dimension mismatch");
    const Vector r = this->r();
    const Vector z = w_ * x + r.cwiseProduct(c_);
    return a_.dot(z.cwiseMax(0.0)) / std::sqrt(static_cast<double>(width()));
}

Vector TwoLayerNet::forward_rows(const Matrix& xs) const {
    if (xs.cols() != dimension())
        throw DomainError("TwoLayerNet: input dimension mismatch");
    // one neuron at a time keeps the working set at a few n-vectors
    const Vector bias = r().cwiseProduct(c_);
    Vector out = Vector::Zero(xs.rows());
    Vector z(xs.rows());
    for (int j = 0; j < width(); ++j) {
        z.noalias() = xs * w_.row(j).transpose();
        out.array() += a_[j] * (z.array() + bias[j]).cwiseMax(0.0);
    }
    return out / std::sqrt(static_cast<double>(width()));
}

Vector TwoLayerNet::parameters() const {
    const int d = dimension();
    Vector theta(parameter_count());
    for (int j = 0; j < width(); ++j) {
        const int o = j * (d + 2);
        theta[o] = a_[j];
        theta.segment(o + 1, d) = w_.row(j).transpose();
        theta[o + d + 1] = c_[j];
    }
    return theta;
}

void TwoLayerNet::set_parameters(const Vector& theta) {
    if (theta.size() != parameter_count())
        throw DomainError("TwoLayerNet: parameter vector has the wrong length");
    const int d = dimension();
    for (int j = 0; j < width(); ++j) {
        const int o = j * (d + 2);
        a_[j] = theta[o];
        w_.row(j) = theta.segment(o + 1, d).transpose();
        c_[j] = theta[o + d + 1];
    }
}

Vector TwoLayerNet::parameter_gradient(const Vector& x) const {
    return jacobian(x.transpose()).row(0).transpose();
}

Matrix TwoLayerNet::jacobian(const Matrix& xs) const {
    if (xs.cols() != dimension())
        throw DomainError("TwoLayerNet: input dimension mismatch");
    const int d = dimension();
    const int m = width();
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    const Vector r = this->r();
    Matrix J(xs.rows(), parameter_count());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        const Vector x = xs.row(i).transpose();
        const Vector z = w_ * x + r.cwiseProduct(c_);
        for (int j = 0; j < m; ++j) {
            const int o = j * (d + 2);
            if (z[j] > 0.0) {
                J(i, o) = z[j] * scale;
                // d(r_j)/d(w_j) = w_j / r_j, taken as 0 at r_j = 0
                const double dir = r[j] > 0.0 ? c_[j] / r[j] : 0.0;
                for (int k = 0; k < d; ++k)
                    J(i, o + 1 + k) = a_[j] * (x[k] + dir * w_(j, k)) * scale;
                J(i, o + d + 1) = a_[j] * r[j] * scale;
            } else {
                J.row(i).segment(o, d + 2).setZero();
            }
        }
    }
    return J;
}

double TwoLayerNet::loss(const Dataset& data) const {
    check_data(dimension(), data);
    return (forward_rows(data.points()) - data.values()).squaredNorm() / (2.0 * data.size());
}

double TwoLayerNet::loss_and_gradient(const Dataset& data, Vector& grad) const {
    check_data(dimension(), data);
    const int n = data.size();
    const int m = width();
    const int d = dimension();
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    const Matrix& X = data.points();
    const Vector r = this->r();

    const Vector bias = r.cwiseProduct(c_);
    const Vector err = forward_rows(X) - data.values();
    const Vector e = err / static_cast<double>(n);

    grad.resize(parameter_count());
    Vector z(n), masked(n);
    for (int j = 0; j < m; ++j) {
        z.noalias() = X * w_.row(j).transpose();
        z.array() += bias[j];
        // masked_i = e_i 1{z_ij > 0}
        masked = (z.array() > 0.0).select(e, 0.0);
        const int o = j * (d + 2);
        grad[o] = z.cwiseMax(0.0).dot(e) * scale;
        const double as = a_[j] * scale;
        const double s = as * masked.sum();
        const double dir = r[j] > 0.0 ? c_[j] * s / r[j] : 0.0;
        grad.segment(o + 1, d).noalias() = as * (X.transpose() * masked);
        grad.segment(o + 1, d) += dir * w_.row(j).transpose();
        grad[o + d + 1] = r[j] * s;
    }
    return err.squaredNorm() / (2.0 * n);
}

TwoLayerNet init_two_layer(int m, int d, const InitConfig& cfg) {
    cfg.validate();
    if (m < 1 || d < 1)
        throw ConfigError("init_two_layer: need m >= 1 and d >= 1");
    if (cfg.asi && m % 2 != 0)
        throw ConfigError("antisymmetric initialization needs an even neuron count, got " + std::to_string(m));
    const RandomSource root(cfg.seed);
    const int drawn = cfg.asi ? m / 2 : m;
    Vector a(m);
    Matrix w(m, d);
    Vector c(m);
    for (int j = 0; j < drawn; ++j) {
        RandomSource rng = root.split(static_cast<std::uint64_t>(j));
        a[j] = rng.normal(0.0, cfg.sigma_a);
        for (int k = 0; k < d; ++k)
            w(j, k) = rng.normal(0.0, cfg.sigma_w);
        c[j] = rng.normal(0.0, cfg.sigma_c);
    }
    if (cfg.asi) {
        a.tail(drawn) = -a.head(drawn);
        w.bottomRows(drawn) = w.topRows(drawn);
        c.tail(drawn) = c.head(drawn);
    }
    return TwoLayerNet(std::move(a), std::move(w), std::move(c));
}

double forward(const TwoLayerNet& net, const Vector& x) { return net(x); }

double grad_step(TwoLayerNet& net, const Dataset& data, double eta) {
    if (!(eta > 0.0))
        throw ConfigError("grad_step: learning rate must be positive");
    Vector grad;
    const double loss = net.loss_and_gradient(data, grad);
    net.set_parameters(net.parameters() - eta * grad);
    return loss;
}

InitStats init_stats(const TwoLayerNet& net) {
    const Vector a2 = net.a().cwiseAbs2();
    const Vector r2 = net.w().rowwise().squaredNorm();
    return {(a2 + r2).mean(), a2.cwiseProduct(r2).mean()};
}

Matrix empirical_ntk(const TwoLayerNet& net, const Matrix& points) {
    const Matrix J = net.jacobian(points);
    Matrix K = J * J.transpose();
    // Exact symmetry regardless of GEMM blocking.
    return 0.5 * (K + K.transpose());
}

double linearized_forward(const TwoLayerNet& net0, const Vector& theta_t, const Vector& x) {
    if (theta_t.size() != net0.parameter_count())
        throw DomainError("linearized_forward: parameter vector is not shape-compatible with the base network");
    return net0(x) + net0.parameter_gradient(x).dot(theta_t - net0.parameters());
}

Mlp::Mlp(std::vector<int> widths, std::vector<Matrix> weights, std::vector<Vector> biases)
    : widths_(std::move(widths)), weights_(std::move(weights)), biases_(std::move(biases)) {
    if (widths_.size() < 2 || widths_.back() != 1)
        throw ConfigError("MLP widths need an input layer and a scalar output layer");
    if (weights_.size() != widths_.size() - 1 || biases_.size() != weights_.size())
        throw DomainError("MLP: layer count mismatch");
    for (std::size_t l = 0; l < weights_.size(); ++l)
        if (weights_[l].rows() != widths_[l + 1] || weights_[l].cols() != widths_[l] ||
            biases_[l].size() != widths_[l + 1])
            throw DomainError("MLP: layer " + std::to_string(l) + " has inconsistent shape");
}

int Mlp::parameter_count() const {
    int count = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        count += static_cast<int>(weights_[l].size() + biases_[l].size());
    return count;
}

Vector Mlp::forward_rows(const Matrix& xs) const {
    if (xs.cols() != widths_.front())
        throw DomainError("MLP: input dimension mismatch");
    Matrix act = xs.transpose();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Matrix z = (weights_[l] * act).colwise() + biases_[l];
        act = l + 1 < weights_.size() ? relu(z) : z;
    }
    return act.row(0).transpose();
}

double Mlp::operator()(const Vector& x) const { return forward_rows(x.transpose())[0]; }

Vector Mlp::parameters() const {
    Vector theta(parameter_count());
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        theta.segment(o, weights_[l].size()) = weights_[l].reshaped();
        o += weights_[l].size();
        theta.segment(o, biases_[l].size()) = biases_[l];
        o += biases_[l].size();
    }
    return theta;
}

void Mlp::set_parameters(const Vector& theta) {
    if (theta.size() != parameter_count())
        throw DomainError("MLP: parameter vector has the wrong length");
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        weights_[l].reshaped() = theta.segment(o, weights_[l].size());
        o += weights_[l].size();
        biases_[l] = theta.segment(o, biases_[l].size());
        o += biases_[l].size();
    }
}

double Mlp::loss(const Dataset& data) const {
    check_data(widths_.front(), data);
    return (forward_rows(data.points()) - data.values()).squaredNorm() / (2.0 * data.size());
}

double Mlp::loss_and_gradient(const Dataset& data, Vector& grad) const {
    check_data(widths_.front(), data);
    const std::size_t L = weights_.size();
    const double n = data.size();
    // acts[l + 1] holds relu(pre) for hidden layers; the ReLU mask is read back from it
    std::vector<Matrix> acts(L + 1);
    acts[0] = data.points().transpose();
    for (std::size_t l = 0; l < L; ++l) {
        acts[l + 1].noalias() = weights_[l] * acts[l];
        acts[l + 1].colwise() += biases_[l];
        if (l + 1 < L)
            acts[l + 1] = acts[l + 1].cwiseMax(0.0);
    }
    const Vector err = acts[L].row(0).transpose() - data.values();
    Matrix delta = (err / n).transpose();

    grad.resize(parameter_count());
    std::vector<Eigen::Index> offsets(L);
    Eigen::Index o = 0;
    for (std::size_t l = 0; l < L; ++l) {
        offsets[l] = o;
        o += weights_[l].size() + biases_[l].size();
    }
    Matrix back;
    for (std::size_t l = L; l-- > 0;) {
        Eigen::Map<Matrix> gw(grad.data() + offsets[l], weights_[l].rows(), weights_[l].cols());
        gw.noalias() = delta * acts[l].transpose();
        grad.segment(offsets[l] + gw.size(), biases_[l].size()) = delta.rowwise().sum();
        if (l > 0) {
            back.noalias() = weights_[l].transpose() * delta;
            delta = (acts[l].array() > 0.0).select(back, 0.0);
        }
    }
    return err.squaredNorm() / (2.0 * n);
}

Mlp build_mlp(const std::vector<int>& widths, std::uint64_t seed) {
    if (widths.size() < 2 || widths.back() != 1)
        throw ConfigError("MLP widths need an input layer and a scalar output layer");
    for (int w : widths)
        if (w < 1)
            throw ConfigError("MLP layer widths must be positive");
    const RandomSource root(seed);
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        RandomSource rng = root.split(l);
        const bool output = l + 2 == widths.size();
        const double stddev = std::sqrt((output ? 1.0 : 2.0) / widths[l]);
        Matrix W(widths[l + 1], widths[l]);
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            for (Eigen::Index i = 0; i < W.rows(); ++i)
                W(i, j) = rng.normal(0.0, stddev);
        weights.push_back(std::move(W));
        biases.push_back(Vector::Zero(widths[l + 1]));
    }
    return Mlp(widths, std::move(weights), std::move(biases));
}

double grad_step(Mlp& net, const Dataset& data, double eta) {
    if (!(eta > 0.0))
        throw ConfigError("grad_step: learning rate must be positive");
    Vector grad;
    const double loss = net.loss_and_gradient(data, grad);
    net.set_parameters(net.parameters() - eta * grad);
    return loss;
}

TrainResult train(TwoLayerNet& net, const Dataset& data, const TrainConfig& cfg) {
    return run_training(net, data, cfg);
}

TrainResult train_mlp(Mlp& net, const Dataset& data, const TrainConfig& cfg) { return run_training(net, data, cfg); }

double probe_stable_learning_rate(const TwoLayerNet& net, const Dataset& data, double eta_hi, int steps,
                                  int max_halvings) {
    if (!(eta_hi > 0.0))
        throw ConfigError("probe_stable_learning_rate: eta_hi must be positive");
    double eta = eta_hi;
    for (int k = 0; k < max_halvings; ++k, eta *= 0.5) {
        TwoLayerNet trial = net;
        double prev = trial.loss(data);
        bool monotone = true;
        for (int s = 0; s < steps && monotone; ++s) {
            grad_step(trial, data, eta);
            const double next = trial.loss(data);
            monotone = std::isfinite(next) && next <= prev;
            prev = next;
        }
        if (monotone)
            return eta;
    }
    throw NumericalError("probe_stable_learning_rate: no monotone step found down to " + format_double(eta));
}

void save_checkpoint(const std::filesystem::path& path, const TwoLayerNet& net, const nlohmann::json& header) {
    nlohmann::json h = header;
    h["model"] = "two_layer";
    h["m"] = net.width();
    h["d"] = net.dimension();
    write_blob(path, std::move(h), net.parameters());
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& net, const nlohmann::json& header) {
    nlohmann::json h = header;
    h["model"] = "mlp";
    h["widths"] = net.widths();
    write_blob(path, std::move(h), net.parameters());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string blob = read_file(path);
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0)
        throw ConfigError(path.string() + " is not an fpl checkpoint");
    const std::uint64_t hlen = get_u64(bytes + 8);
    if (16 + hlen > blob.size())
        throw ConfigError(path.string() + ": truncated header");
    LoadedCheckpoint out;
    try {
        out.header = nlohmann::json::parse(blob.substr(16, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": bad checkpoint header: " + e.what());
    }
    const auto count = out.header.value("parameter_count", std::uint64_t{0});
    if (16 + hlen + 8 * count != blob.size())
        throw ConfigError(path.string() + ": parameter block size does not match the header");
    out.parameters.resize(static_cast<Eigen::Index>(count));
    for (std::uint64_t i = 0; i < count; ++i)
        out.parameters[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_u64(bytes + 16 + hlen + 8 * i));
    return out;
}

TwoLayerNet two_layer_from_checkpoint(const LoadedCheckpoint& ckpt) {
    if (ckpt.header.value("model", "") != "two_layer")
        throw ConfigError("checkpoint does not hold a two-layer network");
    const int m = ckpt.header.at("m").get<int>();
    const int d = ckpt.header.at("d").get<int>();
    TwoLayerNet net(Vector::Zero(m), Matrix::Zero(m, d), Vector::Zero(m));
    net.set_parameters(ckpt.parameters);
    return net;
}

Mlp mlp_from_checkpoint(const LoadedCheckpoint& ckpt) {
    if (ckpt.header.value("model", "") != "mlp")
        throw ConfigError("checkpoint does not hold an MLP");
    const auto widths = ckpt.header.at("widths").get<std::vector<int>>();
    Mlp net = build_mlp(widths, 0);
    net.set_parameters(ckpt.parameters);
    return net;
}

}  // namespace fpl::nn
