#pragma once

#include "fpl/core.hpp"
#include "fpl/error.hpp"
#include "fpl/lfp_solver.hpp"
#include "fpl/nn.hpp"
#include "fpl/spectral.hpp"
#include "fpl/spline_kernel.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fpl::cli {

inline constexpr const char* kSchema = "fpl-scenario/1";

enum class ScenarioId { Fig1TwoTone, Fig3Splines, Fig4Xor, Parity, ScalingLaw, Custom };

std::string to_string(ScenarioId id);
ScenarioId scenario_from_string(const std::string& name);

struct TargetSpec {
    // sines | xor | parity | random_fourier | zero | csv
    std::string kind = "sines";
    std::vector<double> frequencies{1.0};
    std::vector<double> amplitudes{1.0};
    std::vector<double> phases{0.0};  // sines: a sin(k x + phase)
    int k_max = 256;
    double decay = 1.0;  // random_fourier amplitudes k^-decay
    std::uint64_t target_seed = 7;
    std::string path;    // csv
};

struct SamplingSpec {
    int n = 40;
    int d = 1;
    double lo = -1.0;
    double hi = 1.0;
    // uniform (grid including both ends) | random | corners
    std::string layout = "uniform";
};

struct ModelSpec {
    // two_layer | mlp | lfp
    std::string kind = "two_layer";
    int m = 4096;
    double sigma_a = 1.0;
    double sigma_w = 1.0;
    double sigma_c = 1.0;
    bool asi = true;
    std::vector<int> widths;
};

struct TrainingSpec {
    // 0 selects lr_scale * n / lambda_max(empirical NTK) for the two-layer net
    double learning_rate = 0.0;
    double lr_scale = 1.0;
    long max_steps = 10000;
    double loss_tolerance = 1e-6;
    long checkpoint_every = 0;
    std::vector<long> stages;
};

struct SolverSpec {
    // measured | explicit
    std::string gamma = "measured";
    double A = 1.0;
    double B = 1.0;
    double xi_max = 200.0;
    double dxi = 0.01;
    double eps_zero = 0.0;  // 0 selects dxi / 2
    double t_end = 0.0;     // 0 runs to the steady state
    int checkpoints = 50;
};

struct AnalysisSpec {
    std::vector<double> peaks;
    double threshold = 0.2;
    int grid_points = 401;
    int heatmap_resolution = 101;
    double split = 0.8;
    std::vector<int> n_list;
    int trials = 20;
    // linear | cubic | mixed
    std::string reference = "mixed";
    std::vector<int> m_sweep;
    double c_gamma = 1.0;
    double delta = 0.05;
};

struct ScenarioConfig {
    ScenarioId id = ScenarioId::Custom;
    std::uint64_t seed = 0;
    TargetSpec target;
    SamplingSpec sampling;
    ModelSpec model;
    TrainingSpec training;
    SolverSpec solver;
    AnalysisSpec analysis;
    std::optional<std::string> output_dir;
    // Fully resolved configuration (defaults merged) that the run is reproducible from.
    nlohmann::json resolved;
};

// Scenario defaults as a complete config document.
nlohmann::json default_config(ScenarioId id);

// Validates the document (schema tag, unknown keys, types, ranges) and merges it over the
// scenario defaults. Throws ConfigError naming the offending key.
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig load_config(const std::filesystem::path& path);

// Desk defaults -> full widths (fig3: m = 40000, fig4: m = 160000).
void apply_paper_scale(ScenarioConfig& cfg);
void override_seed(ScenarioConfig& cfg, std::uint64_t seed);

// Training data (and evaluation data where the scenario has a split) from the config.
Dataset make_dataset(const ScenarioConfig& cfg);
double target_value(const TargetSpec& target, const Vector& x);

struct PairMetrics {
    std::string a;
    std::string b;
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double rel_l2 = 0.0;       // |a - b| / |b|
    double correlation = 0.0;
    double slope = 0.0;        // least-squares fit b = slope * a + intercept
    double intercept = 0.0;
};

struct Comparison {
    std::vector<std::string> names;
    std::vector<PairMetrics> pairs;
    const PairMetrics& get(const std::string& a, const std::string& b) const;
};

// Pairwise metrics for every ordered pair (a before b in the input order).
Comparison compare_predictors(const std::vector<std::pair<std::string, Vector>>& predictors);

struct Fig1Result {
    Dataset data;
    double eta = 0.0;
    nn::InitStats stats;
    std::vector<double> grid;
    Vector target_on_grid;
    std::vector<long> stage_steps;
    std::vector<Vector> stage_on_grid;
    std::vector<double> checkpoint_steps;
    std::vector<Vector> checkpoint_train;
    std::vector<double> loss_history;
    spectral::ConvergenceCurves curves;
    spectral::SpectralProfile target_profile;
    spectral::SpectralProfile final_profile;
    std::optional<nn::TwoLayerNet> net;
    long steps = 0;
};

struct SweepEntry {
    int m = 0;
    double rel_l2 = 0.0;
    double displacement = 0.0;
};

struct Fig3Result {
    Dataset data;
    double eta = 0.0;
    nn::InitStats stats;
    spline::CpdKernelSpec lfp_kernel;
    std::vector<double> grid;
    Vector nn;
    Vector lfp;
    Vector linear;
    Vector cubic;
    Comparison comparison;
    std::string reference;
    double rel_l2_reference = 0.0;
    double displacement = 0.0;  // |theta_T - theta_0| / |theta_0|
    std::optional<nn::TwoLayerNet> net;
    double final_loss = 0.0;
    long steps = 0;
    std::vector<SweepEntry> sweep;
};

struct Fig4Result {
    Dataset data;
    double eta = 0.0;
    nn::InitStats stats;
    spline::CpdKernelSpec lfp_kernel;
    int resolution = 101;
    Matrix grid;  // resolution^2 x 2, x0 outer
    Vector nn;
    Vector lfp;
    PairMetrics metrics;  // a = nn, b = lfp
    std::optional<nn::TwoLayerNet> net;
    double final_loss = 0.0;
    long steps = 0;
};

struct ParityResult {
    Dataset data;  // training split with the held-out corners as evaluation set
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double final_loss = 0.0;
    long steps = 0;
    Vector direction;
    spectral::SpectralProfile target_profile;
    spectral::SpectralProfile nn_profile;
    std::vector<double> axis_k;
    Matrix axis_amplitude;  // axis_k x d, |F| of the full parity along each axis (others at 1/4)
    std::vector<double> axis_peak;  // argmax |k| per axis
    std::optional<nn::Mlp> net;
};

struct ScalingResult {
    spectral::ScalingReport report;
    double target_energy = 0.0;
    std::vector<spectral::BoundReport> bounds;
    spline::CpdKernelSpec kernel;
};

struct CustomResult {
    Dataset data;
    std::vector<double> grid_1d;
    Matrix grid;
    std::optional<lfp::FlowTrajectory> trajectory;
    Vector lfp_prediction;
    std::optional<Vector> spline_prediction;
    std::optional<Vector> nn_prediction;
    std::optional<nn::TwoLayerNet> net;
    long steps = 0;
    double final_loss = 0.0;
};

// `stage`, when given, tracks the pipeline stage in progress.
Fig1Result run_fig1(const ScenarioConfig& cfg, std::string* stage = nullptr);
Fig3Result run_fig3(const ScenarioConfig& cfg, std::string* stage = nullptr);
Fig4Result run_fig4(const ScenarioConfig& cfg, std::string* stage = nullptr);
ParityResult run_parity(const ScenarioConfig& cfg, std::string* stage = nullptr);
ScalingResult run_scaling(const ScenarioConfig& cfg, std::string* stage = nullptr);
CustomResult run_custom(const ScenarioConfig& cfg, std::string* stage = nullptr);

struct FileRecord {
    std::string path;  // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string scenario;
    std::string config_sha256;
    std::uint64_t seed = 0;
    std::string fpl_version;
    std::string eigen_version;
    double wall_clock_seconds = 0.0;
    std::vector<FileRecord> files;
    std::optional<std::string> failed_stage;
    std::optional<std::string> error;

    nlohmann::json to_json() const;
};

struct PlotSpec {
    std::string file;     // svg name
    std::string kind;     // line | scatter | heatmap
    std::string csv;      // source csv
    std::string x;        // column
    std::vector<std::string> y;  // columns, legend order
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool log_x = false;
    bool log_y = false;
    std::vector<std::string> markers;  // columns drawn as points
    int resolution = 0;   // heatmap cells per side
};

// Renders each plot from CSVs in `dir`; a missing file or column raises ConfigError naming it.
std::vector<std::string> emit_plots(const std::filesystem::path& dir, const std::vector<PlotSpec>& plots);

// Error carrying the pipeline stage and the manifest of what was emitted before the failure.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause, RunManifest partial, int exit_code);
    const std::string& stage() const { return stage_; }
    const RunManifest& partial() const { return partial_; }
    int exit_code() const { return exit_code_; }

private:
    std::string stage_;
    RunManifest partial_;
    int exit_code_;
};

// sample -> train/solve -> diagnose -> emit; writes manifest.json last.
RunManifest run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir);

int exit_code_for(const std::exception& e);

}  // namespace fpl::cli
