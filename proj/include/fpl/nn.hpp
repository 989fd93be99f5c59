#pragma once

#include "fpl/core.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

namespace fpl::nn {

struct InitConfig {
    double sigma_a = 1.0;
    double sigma_w = 1.0;
    double sigma_c = 1.0;
    bool asi = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainConfig {
    double learning_rate = 1e-2;
    long max_steps = 1000;
    double loss_tolerance = 0.0;
    // 0 disables periodic checkpoints; step 0 and the final step are always recorded.
    long checkpoint_every = 0;
    std::vector<long> checkpoint_steps;
    std::optional<Matrix> eval_points;
    bool keep_parameters = false;
    // Abort when the loss exceeds this multiple of the initial loss.
    double divergence_factor = 1e6;
    // Checked on the training outputs every stop_check_every steps (0 disables).
    std::function<bool(const Vector&)> stop_condition;
    long stop_check_every = 0;

    void validate() const;
};

// f(x) = (1/sqrt m) sum_j a_j relu(w_j . x + r_j c_j), r_j = |w_j|.
// Flattened parameters are laid out per neuron as [a_j, w_j (d entries), c_j].
class TwoLayerNet {
public:
    TwoLayerNet(Vector a, Matrix w, Vector c);

    int width() const { return static_cast<int>(a_.size()); }
    int dimension() const { return static_cast<int>(w_.cols()); }
    int parameter_count() const { return width() * (dimension() + 2); }

    const Vector& a() const { return a_; }
    const Matrix& w() const { return w_; }
    const Vector& c() const { return c_; }
    Vector r() const { return w_.rowwise().norm(); }

    double operator()(const Vector& x) const;
    Vector forward_rows(const Matrix& xs) const;

    Vector parameters() const;
    void set_parameters(const Vector& theta);

    // Gradient of f(x) with respect to the flattened parameters.
    Vector parameter_gradient(const Vector& x) const;
    // n x P matrix of parameter gradients at the rows of xs.
    Matrix jacobian(const Matrix& xs) const;

    // R_S = (1/2n) sum (f(x_i) - y_i)^2 and its flattened gradient.
    double loss(const Dataset& data) const;
    double loss_and_gradient(const Dataset& data, Vector& grad) const;

private:
    Vector a_;
    Matrix w_;
    Vector c_;
};

TwoLayerNet init_two_layer(int m, int d, const InitConfig& cfg);
double forward(const TwoLayerNet& net, const Vector& x);

// One explicit Euler step of the gradient flow; returns the loss before the step.
double grad_step(TwoLayerNet& net, const Dataset& data, double eta);

struct InitStats {
    double A = 0.0;  // mean(a^2 + r^2)
    double B = 0.0;  // mean(a^2 r^2)
};
InitStats init_stats(const TwoLayerNet& net);

// K(x, x') = grad f(x) . grad f(x')
Matrix empirical_ntk(const TwoLayerNet& net, const Matrix& points);

// f(x; theta0) + grad f(x; theta0) . (theta_t - theta0)
double linearized_forward(const TwoLayerNet& net0, const Vector& theta_t, const Vector& x);

// Fully connected ReLU network with identity output; weights[l] maps layer l to l+1.
class Mlp {
public:
    Mlp(std::vector<int> widths, std::vector<Matrix> weights, std::vector<Vector> biases);

    const std::vector<int>& widths() const { return widths_; }
    const std::vector<Matrix>& weights() const { return weights_; }
    const std::vector<Vector>& biases() const { return biases_; }
    int parameter_count() const;

    double operator()(const Vector& x) const;
    Vector forward_rows(const Matrix& xs) const;

    Vector parameters() const;
    void set_parameters(const Vector& theta);

    double loss(const Dataset& data) const;
    double loss_and_gradient(const Dataset& data, Vector& grad) const;

private:
    std::vector<int> widths_;
    std::vector<Matrix> weights_;
    std::vector<Vector> biases_;
};

// He-normal hidden layers, 1/fan_in output layer, zero biases.
Mlp build_mlp(const std::vector<int>& widths, std::uint64_t seed);
double grad_step(Mlp& net, const Dataset& data, double eta);

struct Checkpoint {
    long step = 0;
    double loss = 0.0;
    Vector train_outputs;
    Vector eval_outputs;
    std::optional<Vector> parameters;
};

struct TrainResult {
    std::vector<Checkpoint> checkpoints;
    std::vector<double> loss_history;  // pre-step loss of every step taken, then the final loss
    long steps = 0;
    bool converged = false;
    bool stopped = false;  // stop_condition fired
    double final_loss = 0.0;
};

TrainResult train(TwoLayerNet& net, const Dataset& data, const TrainConfig& cfg);
TrainResult train_mlp(Mlp& net, const Dataset& data, const TrainConfig& cfg);

// Largest eta_hi / 2^k (k < max_halvings) for which `steps` steps from `net` never raise the loss.
double probe_stable_learning_rate(const TwoLayerNet& net, const Dataset& data, double eta_hi, int steps = 100,
                                  int max_halvings = 30);

// Checkpoint file: "FPLCKPT1", uint64 LE header length, JSON header, float64 LE parameters.
void save_checkpoint(const std::filesystem::path& path, const TwoLayerNet& net, const nlohmann::json& header);
void save_checkpoint(const std::filesystem::path& path, const Mlp& net, const nlohmann::json& header);

struct LoadedCheckpoint {
    nlohmann::json header;
    Vector parameters;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
TwoLayerNet two_layer_from_checkpoint(const LoadedCheckpoint& ckpt);
Mlp mlp_from_checkpoint(const LoadedCheckpoint& ckpt);

}  // namespace fpl::nn
