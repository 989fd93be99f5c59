#include "fpl/scenario.hpp"

#include "fpl/error.hpp"
#include "fpl/fourier.hpp"
#include "fpl/io.hpp"
#include "fpl/svg.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#ifndef FPL_VERSION
#define FPL_VERSION "0.0.0"
#endif

namespace fpl::cli {

namespace {

using json = nlohmann::json;

const std::map<std::string, ScenarioId>& scenario_names() {
    static const std::map<std::string, ScenarioId> names{
        {"fig1_two_tone", ScenarioId::Fig1TwoTone}, {"fig3_splines", ScenarioId::Fig3Splines},
        {"fig4_xor", ScenarioId::Fig4Xor},          {"parity", ScenarioId::Parity},
        {"scaling_law", ScenarioId::ScalingLaw},    {"custom", ScenarioId::Custom}};
    return names;
}

// Every accepted key with its default; sections absent from a user document keep these values.
json base_document() {
    return json{
        {"schema", kSchema},
        {"scenario", "custom"},
        {"seed", 0},
        {"output_dir", nullptr},
        {"target",
         {{"kind", "sines"},
          {"frequencies", {1.0}},
          {"amplitudes", {1.0}},
          {"phases", {0.0}},
          {"k_max", 256},
          {"decay", 1.0},
          {"target_seed", 7},
          {"path", ""}}},
        {"sampling", {{"n", 8}, {"d", 1}, {"lo", -1.0}, {"hi", 1.0}, {"layout", "uniform"}}},
        {"model",
         {{"kind", "lfp"},
          {"m", 4096},
          {"sigma_a", 1.0},
          {"sigma_w", 1.0},
          {"sigma_c", 1.0},
          {"asi", true},
          {"widths", json::array()}}},
        {"training",
         {{"learning_rate", 0.0},
          {"lr_scale", 1.0},
          {"max_steps", 10000},
          {"loss_tolerance", 1e-6},
          {"checkpoint_every", 0},
          {"stages", json::array()}}},
        {"solver",
         {{"gamma", "explicit"},
          {"A", 1.0},
          {"B", 1.0},
          {"xi_max", 200.0},
          {"dxi", 0.01},
          {"eps_zero", 0.0},
          {"t_end", 0.0},
          {"checkpoints", 50}}},
        {"analysis",
         {{"peaks", json::array()},
          {"threshold", 0.2},
          {"grid_points", 401},
          {"heatmap_resolution", 101},
          {"split", 0.8},
          {"n_list", json::array()},
          {"trials", 20},
          {"reference", "mixed"},
          {"m_sweep", json::array()},
          {"c_gamma", 1.0},
          {"delta", 0.05}}},
    };
}

json scenario_overrides(ScenarioId id) {
    switch (id) {
        case ScenarioId::Fig1TwoTone:
            return json{
                {"scenario", "fig1_two_tone"},
                {"seed", 1},
                {"target", {{"kind", "sines"}, {"frequencies", {1.0, 5.0}}, {"amplitudes", {1.0, 1.0}}, {"phases", {0.0, 0.0}}}},
                {"sampling", {{"n", 40}, {"d", 1}, {"lo", -3.14}, {"hi", 3.14}, {"layout", "uniform"}}},
                {"model", {{"kind", "two_layer"}, {"m", 4096}, {"sigma_a", 3.0}, {"sigma_w", 3.0}, {"sigma_c", 2.0}}},
                {"training",
                 {{"max_steps", 4000}, {"loss_tolerance", 1e-6}, {"checkpoint_every", 10}, {"stages", {0, 300, 4000}}}},
                {"solver", {{"gamma", "measured"}}},
                {"analysis", {{"peaks", {1.0, 5.0}}, {"threshold", 0.2}, {"grid_points", 401}}},
            };
        case ScenarioId::Fig3Splines:
            return json{
                {"scenario", "fig3_splines"},
                {"seed", 1},
                {"target",
                 {{"kind", "sines"},
                  {"frequencies", {2.0, 5.0}},
                  {"amplitudes", {1.0, 0.5}},
                  {"phases", {0.0, std::numbers::pi / 2}}}},
                {"sampling", {{"n", 6}, {"d", 1}, {"lo", -1.0}, {"hi", 1.0}, {"layout", "uniform"}}},
                {"model", {{"kind", "two_layer"}, {"m", 4096}, {"sigma_a", 10.0}, {"sigma_w", 10.0}, {"sigma_c", 1.0}}},
                {"training", {{"max_steps", 400000}, {"loss_tolerance", 1e-6}}},
                {"solver", {{"gamma", "measured"}}},
                {"analysis", {{"grid_points", 401}, {"reference", "linear"}}},
            };
        case ScenarioId::Fig4Xor:
            return json{
                {"scenario", "fig4_xor"},
                {"seed", 1},
                {"target", {{"kind", "xor"}}},
                {"sampling", {{"n", 4}, {"d", 2}, {"lo", -1.0}, {"hi", 1.0}, {"layout", "corners"}}},
                {"model", {{"kind", "two_layer"}, {"m", 8192}, {"sigma_a", 1.0}, {"sigma_w", 1.0}, {"sigma_c", 3.0}}},
                {"training", {{"max_steps", 400000}, {"loss_tolerance", 1e-8}}},
                {"solver", {{"gamma", "measured"}}},
                {"analysis", {{"heatmap_resolution", 101}}},
            };
        case ScenarioId::Parity:
            return json{
                {"scenario", "parity"},
                {"seed", 1},
                {"target", {{"kind", "parity"}}},
                {"sampling", {{"n", 1024}, {"d", 10}, {"lo", -1.0}, {"hi", 1.0}, {"layout", "corners"}}},
                {"model", {{"kind", "mlp"}, {"widths", {10, 500, 500, 1}}}},
                {"training", {{"learning_rate", 0.05}, {"max_steps", 20000}, {"loss_tolerance", 1e-4}}},
                {"analysis", {{"split", 0.8}}},
            };
        case ScenarioId::ScalingLaw:
            return json{
                {"scenario", "scaling_law"},
                {"seed", 1},
                {"target", {{"kind", "random_fourier"}, {"k_max", 256}, {"decay", 1.0}, {"target_seed", 7}}},
                {"sampling", {{"n", 8}, {"d", 1}, {"lo", 0.0}, {"hi", 2.0 * std::numbers::pi}, {"layout", "random"}}},
                {"model", {{"kind", "lfp"}}},
                {"solver", {{"gamma", "explicit"}, {"A", 1.0}, {"B", 10.0}}},
                {"analysis",
                 {{"n_list", {8, 16, 32, 64, 128}}, {"trials", 20}, {"grid_points", 4001}, {"c_gamma", 1.0}, {"delta", 0.05}}},
            };
        case ScenarioId::Custom:
            return json{{"scenario", "custom"}};
    }
    return json::object();
}

std::string kind_name(const json& v) {
    switch (v.type()) {
        case json::value_t::null: return "null";
        case json::value_t::boolean: return "boolean";
        case json::value_t::string: return "string";
        case json::value_t::array: return "array";
        case json::value_t::object: return "object";
        default: return "number";
    }
}

void check_keys(const json& user, const json& schema, const std::string& where) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!schema.contains(it.key()))
            throw ConfigError("unknown key '" + path + "'");
        const json& ref = schema.at(it.key());
        const json& val = it.value();
        if (ref.is_object()) {
            if (!val.is_object())
                throw ConfigError("'" + path + "' must be an object");
            check_keys(val, ref, path);
            continue;
        }
        if (ref.is_null()) {
            if (!val.is_null() && !val.is_string())
                throw ConfigError("'" + path + "' must be a string or null");
            continue;
        }
        if (kind_name(ref) != kind_name(val))
            throw ConfigError("'" + path + "' must be a " + kind_name(ref) + ", got " + kind_name(val));
        if (ref.is_array())
            for (const auto& e : val)
                if (!e.is_number())
                    throw ConfigError("'" + path + "' must contain only numbers");
    }
}

template <class T>
T get_as(const json& j, const char* key, const std::string& section) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("'" + section + "." + key + "': " + e.what());
    }
}

void require(bool ok, const std::string& message) {
    if (!ok)
        throw ConfigError(message);
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return v;
}

Matrix column(const std::vector<double>& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i)
        m(static_cast<Eigen::Index>(i), 0) = v[i];
    return m;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix corners(int d, double lo, double hi) {
    const Eigen::Index count = Eigen::Index{1} << d;
    Matrix pts(count, d);
    for (Eigen::Index c = 0; c < count; ++c)
        for (int j = 0; j < d; ++j)
            pts(c, j) = ((c >> j) & 1) ? hi : lo;
    return pts;
}

std::vector<double> random_fourier_phases(const TargetSpec& t) {
    RandomSource rng(t.target_seed, 0x7a11);
    std::vector<double> ph(static_cast<std::size_t>(t.k_max));
    for (auto& p : ph)
        p = 2.0 * std::numbers::pi * rng.uniform();
    return ph;
}

double random_fourier_norm(const TargetSpec& t) {
    double s = 0.0;
    for (int k = 1; k <= t.k_max; ++k)
        s += std::pow(k, -2.0 * t.decay) / 2.0;
    return std::sqrt(s);
}

struct TrainedTwoLayer {
    nn::TwoLayerNet net;
    Vector theta0;
    nn::InitStats stats;
    double eta = 0.0;
    nn::TrainResult result;
};

double auto_learning_rate(const nn::TwoLayerNet& net, const Dataset& data, double scale) {
    const Matrix K = nn::empirical_ntk(net, data.points());
    const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(K, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    if (!(lmax > 0.0))
        throw NumericalError("empirical NTK vanishes on the training points; cannot choose a learning rate");
    return scale * data.size() / lmax;
}

TrainedTwoLayer train_two_layer(const ScenarioConfig& cfg, const Dataset& data, int m,
                                std::optional<Matrix> eval_points = std::nullopt, bool keep_checkpoints = false) {
    nn::InitConfig ic;
    ic.sigma_a = cfg.model.sigma_a;
    ic.sigma_w = cfg.model.sigma_w;
    ic.sigma_c = cfg.model.sigma_c;
    ic.asi = cfg.model.asi;
    ic.seed = cfg.seed;
    TrainedTwoLayer out{nn::init_two_layer(m, data.dimension(), ic), {}, {}, 0.0, {}};
    out.theta0 = out.net.parameters();
    out.stats = nn::init_stats(out.net);
    out.eta = cfg.training.learning_rate > 0.0 ? cfg.training.learning_rate
                                               : auto_learning_rate(out.net, data, cfg.training.lr_scale);
    nn::TrainConfig tc;
    tc.learning_rate = out.eta;
    tc.max_steps = cfg.training.max_steps;
    tc.loss_tolerance = cfg.training.loss_tolerance;
    if (keep_checkpoints) {
        tc.checkpoint_every = cfg.training.checkpoint_every;
        tc.checkpoint_steps = cfg.training.stages;
    }
    tc.eval_points = std::move(eval_points);
    out.result = nn::train(out.net, data, tc);
    return out;
}

spline::CpdKernelSpec lfp_kernel_for(const ScenarioConfig& cfg, const nn::InitStats& stats, int d) {
    if (cfg.solver.gamma == "measured")
        return spline::kernel_weights_from_stats(stats.A, stats.B, d);
    return spline::kernel_weights_from_stats(cfg.solver.A, cfg.solver.B, d);
}

double rel_l2(const Vector& a, const Vector& b) {
    const double nb = b.norm();
    return nb > 0.0 ? (a - b).norm() / nb : (a - b).norm();
}

void set_stage(std::string* stage, const char* name) {
    if (stage)
        *stage = name;
}

// Output directory bookkeeping.
class Emitter {
public:
    explicit Emitter(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }
    std::filesystem::path operator/(const std::string& name) const { return dir_ / name; }
    void json_file(const std::string& name, const json& j) const { write_file(dir_ / name, j.dump(2) + "\n"); }
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

void write_predictions(const std::filesystem::path& path, const std::vector<double>& grid,
                       const std::vector<std::pair<std::string, const Vector*>>& cols) {
    std::vector<std::string> header{"x"};
    for (const auto& c : cols)
        header.push_back(c.first);
    CsvWriter out(path, header);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> row{grid[i]};
        for (const auto& c : cols)
            row.push_back((*c.second)[static_cast<Eigen::Index>(i)]);
        out.row(row);
    }
}

json comparison_json(const Comparison& c) {
    json arr = json::array();
    for (const auto& p : c.pairs)
        arr.push_back({{"a", p.a},
                       {"b", p.b},
                       {"max_abs", p.max_abs},
                       {"mean_abs", p.mean_abs},
                       {"rel_l2", p.rel_l2},
                       {"correlation", p.correlation},
                       {"slope", p.slope},
                       {"intercept", p.intercept}});
    return arr;
}

json kernel_json(const spline::CpdKernelSpec& k) {
    return {{"d", k.d}, {"cubic", k.cubic}, {"linear", k.linear}, {"poly_order", k.poly_order}};
}

template <class Net>
void write_model(const Emitter& em, const ScenarioConfig& cfg, const std::optional<Net>& net, long step) {
    if (net)
        nn::save_checkpoint(em / "model.fplckpt", *net, {{"config", cfg.resolved}, {"seed", cfg.seed}, {"step", step}});
}

void write_comparison_csv(const std::filesystem::path& path, const Comparison& c) {
    // names go in the header order a, b -> index into c.names
    CsvWriter out(path, {"a", "b", "max_abs", "mean_abs", "rel_l2", "correlation", "slope", "intercept"});
    auto index = [&](const std::string& n) {
        return static_cast<double>(std::find(c.names.begin(), c.names.end(), n) - c.names.begin());
    };
    for (const auto& p : c.pairs)
        out.row({index(p.a), index(p.b), p.max_abs, p.mean_abs, p.rel_l2, p.correlation, p.slope, p.intercept});
}

std::vector<PlotSpec> emit_fig1(const Emitter& em, const ScenarioConfig& cfg, const Fig1Result& r) {
    write_model(em, cfg, r.net, r.steps);
    write_dataset_csv(em / "dataset.csv", r.data);
    std::vector<std::pair<std::string, const Vector*>> cols{{"target", &r.target_on_grid}};
    std::vector<std::string> stage_names;
    for (std::size_t s = 0; s < r.stage_steps.size(); ++s)
        stage_names.push_back("step_" + std::to_string(r.stage_steps[s]));
    for (std::size_t s = 0; s < r.stage_steps.size(); ++s)
        cols.emplace_back(stage_names[s], &r.stage_on_grid[s]);
    write_predictions(em / "stages.csv", r.grid, cols);
    spectral::write_convergence_csv(em / "convergence.csv", r.curves);
    {
        CsvWriter out(em / "loss.csv", {"step", "loss"});
        for (std::size_t i = 0; i < r.loss_history.size(); ++i)
            out.row({static_cast<double>(i), r.loss_history[i]});
    }
    {
        CsvWriter out(em / "spectrum.csv", {"k", "target", "final"});
        for (std::size_t i = 0; i < r.target_profile.frequencies.size(); ++i)
            out.row({r.target_profile.frequencies[i], r.target_profile.amplitudes[i], r.final_profile.amplitudes[i]});
    }
    json tau = json::object();
    for (std::size_t j = 0; j < r.curves.peaks.size(); ++j)
        tau[format_double(r.curves.peaks[j])] = r.curves.tau[j] ? json(*r.curves.tau[j]) : json(nullptr);
    em.json_file("summary.json", {{"scenario", "fig1_two_tone"},
                                  {"seed", cfg.seed},
                                  {"learning_rate", r.eta},
                                  {"A", r.stats.A},
                                  {"B", r.stats.B},
                                  {"steps", r.steps},
                                  {"final_loss", r.loss_history.empty() ? 0.0 : r.loss_history.back()},
                                  {"tau", tau},
                                  {"rejected_peaks", r.curves.rejected}});
    std::vector<std::string> deltas;
    for (double k : r.curves.peaks)
        deltas.push_back("delta_k" + format_double(k));
    std::vector<std::string> ys{"target"};
    ys.insert(ys.end(), stage_names.begin(), stage_names.end());
    return {
        {"stages.svg", "line", "stages.csv", "x", ys, "Network output at training stages", "x", "f(x)"},
        {"convergence.svg", "line", "convergence.csv", "t", deltas, "Relative error at target peaks", "step",
         "relative error", false, true},
        {"spectrum.svg", "line", "spectrum.csv", "k", {"target", "final"}, "Frequency composition", "k", "|F(k)|"},
        {"loss.svg", "line", "loss.csv", "step", {"loss"}, "Training loss", "step", "loss", false, true},
    };
}

std::vector<PlotSpec> emit_fig3(const Emitter& em, const ScenarioConfig& cfg, const Fig3Result& r) {
    write_model(em, cfg, r.net, r.steps);
    write_dataset_csv(em / "dataset.csv", r.data);
    write_predictions(em / "predictions.csv", r.grid,
                      {{"nn", &r.nn}, {"lfp", &r.lfp}, {"linear", &r.linear}, {"cubic", &r.cubic}});
    write_comparison_csv(em / "comparison.csv", r.comparison);
    std::vector<PlotSpec> plots{{"overlay.svg", "line", "predictions.csv", "x", {"nn", "lfp", "linear", "cubic"},
                                 "Trained network against spline steady states", "x", "f(x)"}};
    json sweep = json::array();
    if (!r.sweep.empty()) {
        CsvWriter out(em / "m_sweep.csv", {"m", "rel_l2", "displacement"});
        for (const auto& s : r.sweep) {
            out.row({static_cast<double>(s.m), s.rel_l2, s.displacement});
            sweep.push_back({{"m", s.m}, {"rel_l2", s.rel_l2}, {"displacement", s.displacement}});
        }
        plots.push_back({"m_sweep.svg", "line", "m_sweep.csv", "m", {"rel_l2"}, "Distance to the reference spline",
                         "m", "relative L2", true, true});
    }
    em.json_file("summary.json", {{"scenario", "fig3_splines"},
                                  {"seed", cfg.seed},
                                  {"m", cfg.model.m},
                                  {"learning_rate", r.eta},
                                  {"A", r.stats.A},
                                  {"B", r.stats.B},
                                  {"lfp_kernel", kernel_json(r.lfp_kernel)},
                                  {"reference", r.reference},
                                  {"rel_l2_reference", r.rel_l2_reference},
                                  {"displacement", r.displacement},
                                  {"final_loss", r.final_loss},
                                  {"steps", r.steps},
                                  {"comparison", comparison_json(r.comparison)},
                                  {"m_sweep", sweep}});
    return plots;
}

std::vector<PlotSpec> emit_fig4(const Emitter& em, const ScenarioConfig& cfg, const Fig4Result& r) {
    write_model(em, cfg, r.net, r.steps);
    write_dataset_csv(em / "dataset.csv", r.data);
    {
        CsvWriter out(em / "grid.csv", {"x0", "x1", "nn", "lfp"});
        for (Eigen::Index i = 0; i < r.grid.rows(); ++i)
            out.row({r.grid(i, 0), r.grid(i, 1), r.nn[i], r.lfp[i]});
    }
    const auto& p = r.metrics;
    em.json_file("summary.json", {{"scenario", "fig4_xor"},
                                  {"seed", cfg.seed},
                                  {"m", cfg.model.m},
                                  {"learning_rate", r.eta},
                                  {"A", r.stats.A},
                                  {"B", r.stats.B},
                                  {"lfp_kernel", kernel_json(r.lfp_kernel)},
                                  {"final_loss", r.final_loss},
                                  {"steps", r.steps},
                                  {"correlation", p.correlation},
                                  {"slope", p.slope},
                                  {"intercept", p.intercept},
                                  {"max_abs", p.max_abs}});
    PlotSpec heat{"nn_heatmap.svg", "heatmap", "grid.csv", "x0", {"x1", "nn"}, "Trained network output", "x0", "x1"};
    heat.resolution = r.resolution;
    PlotSpec heat_lfp = heat;
    heat_lfp.file = "lfp_heatmap.svg";
    heat_lfp.y = {"x1", "lfp"};
    heat_lfp.title = "LFP steady state";
    return {heat, heat_lfp,
            {"scatter.svg", "scatter", "grid.csv", "nn", {"lfp"}, "LFP prediction against the network", "f_NN", "f_LFP"}};
}

std::vector<PlotSpec> emit_parity(const Emitter& em, const ScenarioConfig& cfg, const ParityResult& r) {
    write_model(em, cfg, r.net, r.steps);
    write_dataset_csv(em / "train.csv", r.data);
    write_dataset_csv(em / "test.csv", Dataset(r.data.eval_points(), r.data.eval_values()));
    {
        CsvWriter out(em / "spectrum.csv", {"k", "target", "nn"});
        for (std::size_t i = 0; i < r.target_profile.frequencies.size(); ++i)
            out.row({r.target_profile.frequencies[i], r.target_profile.amplitudes[i], r.nn_profile.amplitudes[i]});
    }
    std::vector<std::string> axes;
    {
        std::vector<std::string> header{"k"};
        for (Eigen::Index j = 0; j < r.axis_amplitude.cols(); ++j) {
            axes.push_back("axis" + std::to_string(j));
            header.push_back(axes.back());
        }
        CsvWriter out(em / "axis_spectrum.csv", header);
        for (std::size_t i = 0; i < r.axis_k.size(); ++i) {
            std::vector<double> row{r.axis_k[i]};
            for (Eigen::Index j = 0; j < r.axis_amplitude.cols(); ++j)
                row.push_back(r.axis_amplitude(static_cast<Eigen::Index>(i), j));
            out.row(row);
        }
    }
    em.json_file("summary.json", {{"scenario", "parity"},
                                  {"seed", cfg.seed},
                                  {"widths", cfg.model.widths},
                                  {"learning_rate", cfg.training.learning_rate},
                                  {"train_accuracy", r.train_accuracy},
                                  {"test_accuracy", r.test_accuracy},
                                  {"final_loss", r.final_loss},
                                  {"steps", r.steps},
                                  {"direction", to_std(r.direction)},
                                  {"axis_peak", r.axis_peak}});
    return {{"spectrum.svg", "line", "spectrum.csv", "k", {"target", "nn"},
             "Frequency composition along the first principal direction", "k", "|F(k)|"},
            {"axis_spectrum.svg", "line", "axis_spectrum.csv", "k", axes, "Parity transform along each axis", "k_j",
             "|F|"}};
}

std::vector<PlotSpec> emit_scaling(const Emitter& em, const ScenarioConfig& cfg, const ScalingResult& r) {
    const auto& rep = r.report;
    {
        CsvWriter out(em / "scaling.csv", {"n", "mse", "bound"});
        for (std::size_t i = 0; i < rep.n_values.size(); ++i)
            out.row({static_cast<double>(rep.n_values[i]), rep.mean_error[i], r.bounds[i].bound});
    }
    {
        std::vector<std::string> header{"n"};
        for (Eigen::Index t = 0; t < rep.errors.cols(); ++t)
            header.push_back("trial" + std::to_string(t));
        CsvWriter out(em / "trials.csv", header);
        for (Eigen::Index i = 0; i < rep.errors.rows(); ++i) {
            std::vector<double> row{static_cast<double>(rep.n_values[static_cast<std::size_t>(i)])};
            for (Eigen::Index t = 0; t < rep.errors.cols(); ++t)
                row.push_back(rep.errors(i, t));
            out.row(row);
        }
    }
    json bounds = json::array();
    for (const auto& b : r.bounds)
        bounds.push_back(b.to_json());
    em.json_file("bound.json", {{"target_energy", r.target_energy}, {"reports", bounds}});
    em.json_file("summary.json", {{"scenario", "scaling_law"},
                                  {"seed", cfg.seed},
                                  {"kernel", kernel_json(r.kernel)},
                                  {"slope", rep.degenerate ? json(nullptr) : json(rep.slope)},
                                  {"ci", rep.degenerate ? json(nullptr) : json{rep.ci_low, rep.ci_high}},
                                  {"degenerate", rep.degenerate},
                                  {"monotone", rep.monotone},
                                  {"note", rep.note ? json(*rep.note) : json(nullptr)}});
    return {{"scaling.svg", "line", "scaling.csv", "n", {"mse"}, "Test error against sample size", "n", "MSE", true,
             true, {"mse"}}};
}

std::vector<PlotSpec> emit_custom(const Emitter& em, const ScenarioConfig& cfg, const CustomResult& r) {
    write_model(em, cfg, r.net, r.steps);
    write_dataset_csv(em / "dataset.csv", r.data);
    std::vector<PlotSpec> plots;
    std::vector<std::string> names{"lfp"};
    {
        std::vector<std::string> header;
        for (Eigen::Index j = 0; j < r.grid.cols(); ++j)
            header.push_back("x" + std::to_string(j));
        header.push_back("lfp");
        if (r.spline_prediction) {
            header.push_back("spline");
            names.push_back("spline");
        }
        if (r.nn_prediction) {
            header.push_back("nn");
            names.push_back("nn");
        }
        CsvWriter out(em / "predictions.csv", header);
        for (Eigen::Index i = 0; i < r.grid.rows(); ++i) {
            std::vector<double> row;
            for (Eigen::Index j = 0; j < r.grid.cols(); ++j)
                row.push_back(r.grid(i, j));
            row.push_back(r.lfp_prediction[i]);
            if (r.spline_prediction)
                row.push_back((*r.spline_prediction)[i]);
            if (r.nn_prediction)
                row.push_back((*r.nn_prediction)[i]);
            out.row(row);
        }
    }
    if (r.grid.cols() == 1)
        plots.push_back({"predictions.svg", "line", "predictions.csv", "x0", names, "Predictions", "x", "h(x)"});
    if (r.trajectory) {
        lfp::write_trajectory_csv(em / "trajectory.csv", *r.trajectory);
        plots.push_back({"loss.svg", "line", "trajectory.csv", "time", {"loss"}, "LFP training loss", "t", "R_S",
                         false, true});
    }
    const double eps = cfg.solver.eps_zero > 0.0 ? cfg.solver.eps_zero : cfg.solver.dxi / 2;
    em.json_file("summary.json", {{"scenario", "custom"},
                                  {"seed", cfg.seed},
                                  {"model", cfg.model.kind},
                                  {"lattice", {{"xi_max", cfg.solver.xi_max}, {"dxi", cfg.solver.dxi}, {"eps_zero", eps}}},
                                  {"final_loss", r.final_loss}});
    return plots;
}

std::map<std::string, std::vector<double>> read_columns(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("missing series file '" + path.filename().string() + "'");
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    const auto header = split_csv_line(line);
    std::map<std::string, std::vector<double>> cols;
    for (const auto& h : header)
        cols[h];
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto cells = split_csv_line(line);
        for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i)
            cols[header[i]].push_back(parse_double(cells[i]));
    }
    return cols;
}

const std::vector<double>& column_of(const std::map<std::string, std::vector<double>>& cols, const std::string& name,
                                     const std::string& file) {
    const auto it = cols.find(name);
    if (it == cols.end())
        throw ConfigError("missing series '" + name + "' in " + file);
    return it->second;
}

}  // namespace

std::string to_string(ScenarioId id) {
    for (const auto& [name, v] : scenario_names())
        if (v == id)
            return name;
    return "custom";
}

ScenarioId scenario_from_string(const std::string& name) {
    const auto it = scenario_names().find(name);
    if (it == scenario_names().end())
        throw ConfigError("unknown scenario '" + name + "'");
    return it->second;
}

nlohmann::json default_config(ScenarioId id) {
    json doc = base_document();
    doc.merge_patch(scenario_overrides(id));
    return doc;
}

ScenarioConfig parse_config(const nlohmann::json& doc) {
    if (!doc.is_object())
        throw ConfigError("config must be a JSON object");
    if (!doc.contains("schema") || !doc["schema"].is_string())
        throw ConfigError("config is missing the 'schema' tag (expected \"" + std::string(kSchema) + "\")");
    if (doc["schema"].get<std::string>() != kSchema)
        throw ConfigError("unsupported schema '" + doc["schema"].get<std::string>() + "' (expected \"" +
                          std::string(kSchema) + "\")");
    if (!doc.contains("scenario") || !doc["scenario"].is_string())
        throw ConfigError("config is missing 'scenario'");
    const ScenarioId id = scenario_from_string(doc["scenario"].get<std::string>());
    check_keys(doc, base_document(), "");

    json r = default_config(id);
    r.merge_patch(doc);
    if (!r.contains("output_dir"))
        r["output_dir"] = nullptr;  // merge_patch drops explicit nulls

    ScenarioConfig cfg;
    cfg.id = id;
    cfg.resolved = r;
    require(r["seed"].is_number_integer() && r["seed"].get<long long>() >= 0, "'seed' must be a nonnegative integer");
    cfg.seed = r["seed"].get<std::uint64_t>();
    if (r["output_dir"].is_string())
        cfg.output_dir = r["output_dir"].get<std::string>();

    const json& t = r["target"];
    cfg.target.kind = get_as<std::string>(t, "kind", "target");
    cfg.target.frequencies = get_as<std::vector<double>>(t, "frequencies", "target");
    cfg.target.amplitudes = get_as<std::vector<double>>(t, "amplitudes", "target");
    auto phases = get_as<std::vector<double>>(t, "phases", "target");
    cfg.target.k_max = get_as<int>(t, "k_max", "target");
    cfg.target.decay = get_as<double>(t, "decay", "target");
    cfg.target.target_seed = get_as<std::uint64_t>(t, "target_seed", "target");
    cfg.target.path = get_as<std::string>(t, "path", "target");
    static const std::set<std::string> kinds{"sines", "xor", "parity", "random_fourier", "zero", "csv"};
    require(kinds.count(cfg.target.kind) == 1, "unknown target kind '" + cfg.target.kind + "'");
    if (cfg.target.kind == "sines") {
        require(!cfg.target.frequencies.empty() && cfg.target.frequencies.size() == cfg.target.amplitudes.size(),
                "target.frequencies and target.amplitudes must be non-empty and of equal length");
        phases.resize(cfg.target.frequencies.size(), 0.0);
        cfg.target.phases = phases;
    }
    if (cfg.target.kind == "random_fourier")
        require(cfg.target.k_max >= 1 && cfg.target.k_max <= 100000 && cfg.target.decay >= 0.0,
                "target.k_max must be in [1, 100000] and target.decay >= 0");
    if (cfg.target.kind == "csv") {
        require(!cfg.target.path.empty(), "target.path is required for a csv target");
        require(std::filesystem::exists(cfg.target.path), "target.path '" + cfg.target.path + "' does not exist");
    }

    const json& s = r["sampling"];
    cfg.sampling.n = get_as<int>(s, "n", "sampling");
    cfg.sampling.d = get_as<int>(s, "d", "sampling");
    cfg.sampling.lo = get_as<double>(s, "lo", "sampling");
    cfg.sampling.hi = get_as<double>(s, "hi", "sampling");
    cfg.sampling.layout = get_as<std::string>(s, "layout", "sampling");
    if (cfg.target.kind != "csv") {
        require(cfg.sampling.n >= 1, "sampling.n must be at least 1 (got " + std::to_string(cfg.sampling.n) + ")");
        require(cfg.sampling.n <= 1000000, "sampling.n must not exceed 1000000");
    }
    require(cfg.sampling.d >= 1 && cfg.sampling.d <= 20, "sampling.d must be in [1, 20]");
    require(cfg.sampling.hi > cfg.sampling.lo, "sampling.hi must exceed sampling.lo");
    require(cfg.sampling.layout == "uniform" || cfg.sampling.layout == "random" || cfg.sampling.layout == "corners",
            "sampling.layout must be uniform, random or corners");
    if (cfg.sampling.layout == "uniform")
        require(cfg.sampling.d == 1, "the uniform layout is one-dimensional; use random or corners for d > 1");
    if (cfg.sampling.layout == "corners" && cfg.target.kind != "csv")
        require(cfg.sampling.n == (1 << cfg.sampling.d), "the corners layout needs n = 2^d");
    if (cfg.target.kind == "sines" || cfg.target.kind == "random_fourier")
        require(cfg.sampling.d == 1, "target kind '" + cfg.target.kind + "' is one-dimensional");
    if (cfg.target.kind == "xor")
        require(cfg.sampling.d == 2, "the xor target needs d = 2");

    const json& m = r["model"];
    cfg.model.kind = get_as<std::string>(m, "kind", "model");
    cfg.model.m = get_as<int>(m, "m", "model");
    cfg.model.sigma_a = get_as<double>(m, "sigma_a", "model");
    cfg.model.sigma_w = get_as<double>(m, "sigma_w", "model");
    cfg.model.sigma_c = get_as<double>(m, "sigma_c", "model");
    cfg.model.asi = get_as<bool>(m, "asi", "model");
    cfg.model.widths = get_as<std::vector<int>>(m, "widths", "model");
    require(cfg.model.kind == "two_layer" || cfg.model.kind == "mlp" || cfg.model.kind == "lfp",
            "model.kind must be two_layer, mlp or lfp");
    if (cfg.model.kind == "two_layer") {
        require(cfg.model.m >= 2 && cfg.model.m <= 1000000, "model.m must be in [2, 1000000]");
        require(!cfg.model.asi || cfg.model.m % 2 == 0, "model.m must be even with antisymmetric initialization");
        require(cfg.model.sigma_a > 0 && cfg.model.sigma_w > 0 && cfg.model.sigma_c > 0,
                "model.sigma_a, sigma_w and sigma_c must be positive");
    }
    if (cfg.model.kind == "mlp") {
        require(cfg.model.widths.size() >= 2, "model.widths needs at least input and output layers");
        require(cfg.model.widths.front() == cfg.sampling.d, "model.widths must start with the input dimension");
        require(cfg.model.widths.back() == 1, "model.widths must end with a scalar output");
        for (int w : cfg.model.widths)
            require(w >= 1 && w <= 100000, "model.widths entries must be in [1, 100000]");
    }

    const json& tr = r["training"];
    cfg.training.learning_rate = get_as<double>(tr, "learning_rate", "training");
    cfg.training.lr_scale = get_as<double>(tr, "lr_scale", "training");
    cfg.training.max_steps = get_as<long>(tr, "max_steps", "training");
    cfg.training.loss_tolerance = get_as<double>(tr, "loss_tolerance", "training");
    cfg.training.checkpoint_every = get_as<long>(tr, "checkpoint_every", "training");
    cfg.training.stages = get_as<std::vector<long>>(tr, "stages", "training");
    require(cfg.training.learning_rate >= 0.0, "training.learning_rate must be >= 0 (0 selects it automatically)");
    require(cfg.training.lr_scale > 0.0 && cfg.training.lr_scale < 2.0, "training.lr_scale must be in (0, 2)");
    require(cfg.training.max_steps >= 0 && cfg.training.max_steps <= 100000000, "training.max_steps out of range");
    require(cfg.training.loss_tolerance >= 0.0, "training.loss_tolerance must be >= 0");
    require(cfg.training.checkpoint_every >= 0, "training.checkpoint_every must be >= 0");
    if (cfg.model.kind == "mlp")
        require(cfg.training.learning_rate > 0.0, "an mlp model needs an explicit training.learning_rate");

    const json& so = r["solver"];
    cfg.solver.gamma = get_as<std::string>(so, "gamma", "solver");
    cfg.solver.A = get_as<double>(so, "A", "solver");
    cfg.solver.B = get_as<double>(so, "B", "solver");
    cfg.solver.xi_max = get_as<double>(so, "xi_max", "solver");
    cfg.solver.dxi = get_as<double>(so, "dxi", "solver");
    cfg.solver.eps_zero = get_as<double>(so, "eps_zero", "solver");
    cfg.solver.t_end = get_as<double>(so, "t_end", "solver");
    cfg.solver.checkpoints = get_as<int>(so, "checkpoints", "solver");
    require(cfg.solver.gamma == "measured" || cfg.solver.gamma == "explicit", "solver.gamma must be measured or explicit");
    if (cfg.solver.gamma == "measured")
        require(cfg.model.kind == "two_layer", "solver.gamma = measured needs a two_layer model");
    require(cfg.solver.A >= 0 && cfg.solver.B >= 0 && cfg.solver.A + cfg.solver.B > 0,
            "solver.A and solver.B must be nonnegative with a positive sum");
    require(cfg.solver.dxi > 0 && cfg.solver.xi_max >= cfg.solver.dxi, "solver needs dxi > 0 and xi_max >= dxi");
    require(cfg.solver.eps_zero >= 0 && cfg.solver.eps_zero < cfg.solver.dxi, "solver.eps_zero must be in [0, dxi)");
    require(cfg.solver.t_end >= 0, "solver.t_end must be >= 0");
    require(cfg.solver.checkpoints >= 1 && cfg.solver.checkpoints <= 100000, "solver.checkpoints out of range");

    const json& a = r["analysis"];
    cfg.analysis.peaks = get_as<std::vector<double>>(a, "peaks", "analysis");
    cfg.analysis.threshold = get_as<double>(a, "threshold", "analysis");
    cfg.analysis.grid_points = get_as<int>(a, "grid_points", "analysis");
    cfg.analysis.heatmap_resolution = get_as<int>(a, "heatmap_resolution", "analysis");
    cfg.analysis.split = get_as<double>(a, "split", "analysis");
    cfg.analysis.n_list = get_as<std::vector<int>>(a, "n_list", "analysis");
    cfg.analysis.trials = get_as<int>(a, "trials", "analysis");
    cfg.analysis.reference = get_as<std::string>(a, "reference", "analysis");
    cfg.analysis.m_sweep = get_as<std::vector<int>>(a, "m_sweep", "analysis");
    cfg.analysis.c_gamma = get_as<double>(a, "c_gamma", "analysis");
    cfg.analysis.delta = get_as<double>(a, "delta", "analysis");
    require(cfg.analysis.threshold > 0 && cfg.analysis.threshold < 1, "analysis.threshold must be in (0, 1)");
    require(cfg.analysis.grid_points >= 2 && cfg.analysis.grid_points <= 1000000, "analysis.grid_points out of range");
    require(cfg.analysis.heatmap_resolution >= 2 && cfg.analysis.heatmap_resolution <= 1001,
            "analysis.heatmap_resolution must be in [2, 1001]");
    require(cfg.analysis.split > 0 && cfg.analysis.split < 1, "analysis.split must be in (0, 1)");
    require(cfg.analysis.reference == "linear" || cfg.analysis.reference == "cubic" || cfg.analysis.reference == "mixed",
            "analysis.reference must be linear, cubic or mixed");
    require(cfg.analysis.c_gamma > 0, "analysis.c_gamma must be positive");
    require(cfg.analysis.delta > 0 && cfg.analysis.delta < 1, "analysis.delta must be in (0, 1)");
    for (int mm : cfg.analysis.m_sweep)
        require(mm >= 2 && mm % 2 == 0, "analysis.m_sweep entries must be even and >= 2");

    switch (id) {
        case ScenarioId::Fig1TwoTone:
            require(cfg.model.kind == "two_layer" && cfg.sampling.d == 1, "fig1_two_tone trains a 1-d two_layer model");
            require(!cfg.analysis.peaks.empty(), "fig1_two_tone needs analysis.peaks");
            break;
        case ScenarioId::Fig3Splines:
            require(cfg.model.kind == "two_layer" && cfg.sampling.d == 1, "fig3_splines trains a 1-d two_layer model");
            break;
        case ScenarioId::Fig4Xor:
            require(cfg.model.kind == "two_layer" && cfg.sampling.d == 2, "fig4_xor trains a 2-d two_layer model");
            break;
        case ScenarioId::Parity:
            require(cfg.model.kind == "mlp" && cfg.target.kind == "parity", "parity trains an mlp on the parity target");
            require(cfg.sampling.layout == "corners", "parity samples the hypercube corners");
            break;
        case ScenarioId::ScalingLaw:
            require(cfg.sampling.d == 1, "scaling_law is one-dimensional");
            require(cfg.analysis.n_list.size() >= 4, "scaling_law needs at least 4 entries in analysis.n_list");
            require(cfg.analysis.trials >= 10, "scaling_law needs analysis.trials >= 10");
            for (int n : cfg.analysis.n_list)
                require(n >= 2, "analysis.n_list entries must be >= 2");
            require(cfg.target.kind != "csv", "scaling_law needs an analytic target");
            break;
        case ScenarioId::Custom:
            if (cfg.model.kind == "mlp")
                throw ConfigError("custom runs support lfp and two_layer models");
            break;
    }
    return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("config file '" + path.string() + "' does not exist");
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

void apply_paper_scale(ScenarioConfig& cfg) {
    if (cfg.id == ScenarioId::Fig3Splines)
        cfg.model.m = 40000;
    else if (cfg.id == ScenarioId::Fig4Xor)
        cfg.model.m = 160000;
    else
        return;
    cfg.resolved["model"]["m"] = cfg.model.m;
}

void override_seed(ScenarioConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.resolved["seed"] = seed;
}

double target_value(const TargetSpec& t, const Vector& x) {
    if (t.kind == "sines") {
        double v = 0.0;
        for (std::size_t i = 0; i < t.frequencies.size(); ++i)
            v += t.amplitudes[i] * std::sin(t.frequencies[i] * x[0] + t.phases[i]);
        return v;
    }
    if (t.kind == "xor")
        return -x[0] * x[1];
    if (t.kind == "parity")
        return x.prod();
    if (t.kind == "zero")
        return 0.0;
    if (t.kind == "random_fourier") {
        static thread_local std::uint64_t cached_seed = ~0ULL;
        static thread_local int cached_k = -1;
        static thread_local std::vector<double> phases;
        if (cached_seed != t.target_seed || cached_k != t.k_max) {
            phases = random_fourier_phases(t);
            cached_seed = t.target_seed;
            cached_k = t.k_max;
        }
        double v = 0.0;
        for (int k = 1; k <= t.k_max; ++k)
            v += std::pow(k, -t.decay) * std::cos(k * x[0] + phases[static_cast<std::size_t>(k - 1)]);
        return v / random_fourier_norm(t);
    }
    throw ConfigError("target kind '" + t.kind + "' has no analytic values");
}

Dataset make_dataset(const ScenarioConfig& cfg) {
    if (cfg.target.kind == "csv")
        return read_dataset_csv(cfg.target.path);
    const auto& s = cfg.sampling;
    Matrix pts;
    if (s.layout == "uniform") {
        pts = column(linspace(s.lo, s.hi, s.n));
    } else if (s.layout == "corners") {
        pts = corners(s.d, s.lo, s.hi);
    } else {
        RandomSource rng(cfg.seed, 0x5a3d);
        pts.resize(s.n, s.d);
        for (int i = 0; i < s.n; ++i)
            for (int j = 0; j < s.d; ++j)
                pts(i, j) = s.lo + (s.hi - s.lo) * rng.uniform();
    }
    Vector y(pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        y[i] = target_value(cfg.target, pts.row(i).transpose());
    return Dataset(std::move(pts), std::move(y));
}

const PairMetrics& Comparison::get(const std::string& a, const std::string& b) const {
    for (const auto& p : pairs)
        if (p.a == a && p.b == b)
            return p;
    throw DomainError("no comparison between '" + a + "' and '" + b + "'");
}

Comparison compare_predictors(const std::vector<std::pair<std::string, Vector>>& predictors) {
    if (predictors.size() < 2)
        throw ConfigError("compare_predictors needs at least two predictors");
    const Eigen::Index n = predictors.front().second.size();
    for (const auto& p : predictors)
        if (p.second.size() != n || n == 0)
            throw ConfigError("predictor '" + p.first + "' is not evaluated on the shared grid");
    Comparison c;
    for (const auto& p : predictors)
        c.names.push_back(p.first);
    for (std::size_t i = 0; i < predictors.size(); ++i)
        for (std::size_t j = i + 1; j < predictors.size(); ++j) {
            const Vector& a = predictors[i].second;
            const Vector& b = predictors[j].second;
            PairMetrics m;
            m.a = predictors[i].first;
            m.b = predictors[j].first;
            const Vector diff = a - b;
            m.max_abs = diff.cwiseAbs().maxCoeff();
            m.mean_abs = diff.cwiseAbs().mean();
            m.rel_l2 = rel_l2(a, b);
            const Vector ac = a.array() - a.mean();
            const Vector bc = b.array() - b.mean();
            const double saa = ac.squaredNorm(), sbb = bc.squaredNorm(), sab = ac.dot(bc);
            if (saa > 0.0 && sbb > 0.0)
                m.correlation = sab / std::sqrt(saa * sbb);
            else
                m.correlation = diff.cwiseAbs().maxCoeff() == 0.0 ? 1.0 : 0.0;
            m.slope = saa > 0.0 ? sab / saa : (sbb == 0.0 ? 1.0 : 0.0);
            m.intercept = b.mean() - m.slope * a.mean();
            c.pairs.push_back(m);
        }
    return c;
}

Fig1Result run_fig1(const ScenarioConfig& cfg, std::string* stage) {
    set_stage(stage, "sample");
    Fig1Result r{make_dataset(cfg)};
    r.grid = linspace(cfg.sampling.lo, cfg.sampling.hi, cfg.analysis.grid_points);
    const Matrix grid = column(r.grid);
    r.target_on_grid.resize(grid.rows());
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
        r.target_on_grid[i] = target_value(cfg.target, grid.row(i).transpose());

    set_stage(stage, "train");
    auto trained = train_two_layer(cfg, r.data, cfg.model.m, grid, true);
    r.eta = trained.eta;
    r.stats = trained.stats;
    r.steps = trained.result.steps;
    r.loss_history = trained.result.loss_history;

    set_stage(stage, "diagnose");
    for (const auto& cp : trained.result.checkpoints) {
        r.checkpoint_steps.push_back(static_cast<double>(cp.step));
        r.checkpoint_train.push_back(cp.train_outputs);
        if (std::find(cfg.training.stages.begin(), cfg.training.stages.end(), cp.step) != cfg.training.stages.end()) {
            r.stage_steps.push_back(cp.step);
            r.stage_on_grid.push_back(cp.eval_outputs);
        }
    }
    const Vector dir = spectral::first_principal_direction(r.data.points());
    r.curves = spectral::convergence_per_frequency(r.checkpoint_steps, r.checkpoint_train, r.data.values(),
                                                   r.data.points(), dir, cfg.analysis.peaks, cfg.analysis.threshold);
    std::vector<double> kgrid;
    const double kmax = 2.0 * *std::max_element(cfg.analysis.peaks.begin(), cfg.analysis.peaks.end());
    for (int i = 0; i <= 200; ++i)
        kgrid.push_back(kmax * i / 200.0);
    r.target_profile = spectral::nudft(r.data.points(), r.data.values(), dir, kgrid, spectral::Projection::Rescaled, "target");
    r.final_profile = spectral::nudft(r.data.points(), r.checkpoint_train.back(), dir, kgrid,
                                      spectral::Projection::Rescaled, "final");
    r.net = std::move(trained.net);
    return r;
}

Fig3Result run_fig3(const ScenarioConfig& cfg, std::string* stage) {
    set_stage(stage, "sample");
    Fig3Result r{make_dataset(cfg)};
    r.grid = linspace(cfg.sampling.lo, cfg.sampling.hi, cfg.analysis.grid_points);
    const Matrix grid = column(r.grid);

    set_stage(stage, "train");
    auto trained = train_two_layer(cfg, r.data, cfg.model.m);
    if (!trained.result.converged)
        throw NumericalError("training stopped at step " + std::to_string(trained.result.steps) + " with loss " +
                             format_double(trained.result.final_loss) + " above the tolerance " +
                             format_double(cfg.training.loss_tolerance));
    r.eta = trained.eta;
    r.stats = trained.stats;
    r.steps = trained.result.steps;
    r.final_loss = trained.result.final_loss;
    r.displacement = (trained.net.parameters() - trained.theta0).norm() / trained.theta0.norm();

    set_stage(stage, "solve");
    r.lfp_kernel = lfp_kernel_for(cfg, r.stats, 1);
    r.nn = trained.net.forward_rows(grid);
    r.lfp = spline::steady_state(r.data, r.lfp_kernel).evaluate_rows(grid);
    r.linear = spline::steady_state(r.data, spline::CpdKernelSpec::make(1, 0.0, 1.0)).evaluate_rows(grid);
    r.cubic = spline::steady_state(r.data, spline::CpdKernelSpec::make(1, 1.0, 0.0)).evaluate_rows(grid);

    set_stage(stage, "diagnose");
    r.comparison = compare_predictors({{"nn", r.nn}, {"lfp", r.lfp}, {"linear", r.linear}, {"cubic", r.cubic}});
    r.reference = cfg.analysis.reference == "mixed" ? "lfp" : cfg.analysis.reference;
    const Vector& ref = r.reference == "lfp" ? r.lfp : (r.reference == "linear" ? r.linear : r.cubic);
    r.rel_l2_reference = rel_l2(r.nn, ref);
    for (int m : cfg.analysis.m_sweep) {
        auto t = train_two_layer(cfg, r.data, m);
        if (!t.result.converged)
            throw NumericalError("m-sweep training at m = " + std::to_string(m) + " did not reach the loss tolerance");
        r.sweep.push_back({m, rel_l2(t.net.forward_rows(grid), ref),
                           (t.net.parameters() - t.theta0).norm() / t.theta0.norm()});
    }
    r.net = std::move(trained.net);
    return r;
}

Fig4Result run_fig4(const ScenarioConfig& cfg, std::string* stage) {
    set_stage(stage, "sample");
    Fig4Result r{make_dataset(cfg)};
    r.resolution = cfg.analysis.heatmap_resolution;
    const auto axis = linspace(cfg.sampling.lo, cfg.sampling.hi, r.resolution);
    r.grid.resize(static_cast<Eigen::Index>(r.resolution) * r.resolution, 2);
    for (int i = 0; i < r.resolution; ++i)
        for (int j = 0; j < r.resolution; ++j) {
            r.grid(i * r.resolution + j, 0) = axis[static_cast<std::size_t>(i)];
            r.grid(i * r.resolution + j, 1) = axis[static_cast<std::size_t>(j)];
        }

    set_stage(stage, "train");
    auto trained = train_two_layer(cfg, r.data, cfg.model.m);
    if (!trained.result.converged)
        throw NumericalError("training stopped at step " + std::to_string(trained.result.steps) + " with loss " +
                             format_double(trained.result.final_loss) + " above the tolerance");
    r.eta = trained.eta;
    r.stats = trained.stats;
    r.steps = trained.result.steps;
    r.final_loss = trained.result.final_loss;

    set_stage(stage, "solve");
    r.lfp_kernel = lfp_kernel_for(cfg, r.stats, 2);
    r.nn = trained.net.forward_rows(r.grid);
    r.lfp = spline::steady_state(r.data, r.lfp_kernel).evaluate_rows(r.grid);

    set_stage(stage, "diagnose");
    r.metrics = compare_predictors({{"nn", r.nn}, {"lfp", r.lfp}}).pairs.front();
    r.net = std::move(trained.net);
    return r;
}

ParityResult run_parity(const ScenarioConfig& cfg, std::string* stage) {
    set_stage(stage, "sample");
    const Dataset all = make_dataset(cfg);
    const int total = all.size();
    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    RandomSource rng(cfg.seed, 0x5b11);
    for (int i = total - 1; i > 0; --i) {
        const auto j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const int n_train = static_cast<int>(std::lround(cfg.analysis.split * total));
    if (n_train < 1 || n_train >= total)
        throw ConfigError("analysis.split leaves an empty training or test set");
    const int d = all.dimension();
    Matrix xtr(n_train, d), xte(total - n_train, d);
    Vector ytr(n_train), yte(total - n_train);
    for (int i = 0; i < total; ++i) {
        const int src = order[static_cast<std::size_t>(i)];
        if (i < n_train) {
            xtr.row(i) = all.points().row(src);
            ytr[i] = all.values()[src];
        } else {
            xte.row(i - n_train) = all.points().row(src);
            yte[i - n_train] = all.values()[src];
        }
    }
    ParityResult r{Dataset(xtr, ytr, xte, yte)};

    set_stage(stage, "train");
    nn::Mlp net = nn::build_mlp(cfg.model.widths, cfg.seed);
    nn::TrainConfig tc;
    tc.learning_rate = cfg.training.learning_rate;
    tc.max_steps = cfg.training.max_steps;
    tc.loss_tolerance = cfg.training.loss_tolerance;
    tc.stop_check_every = 25;
    tc.stop_condition = [&](const Vector& out) {
        for (Eigen::Index i = 0; i < out.size(); ++i)
            if ((out[i] > 0.0) != (ytr[i] > 0.0))
                return false;
        return true;
    };
    const auto res = nn::train_mlp(net, r.data, tc);
    r.steps = res.steps;
    r.final_loss = res.final_loss;

    set_stage(stage, "diagnose");
    auto accuracy = [](const Vector& f, const Vector& y) {
        int hits = 0;
        for (Eigen::Index i = 0; i < y.size(); ++i)
            hits += (f[i] > 0.0) == (y[i] > 0.0);
        return static_cast<double>(hits) / static_cast<double>(y.size());
    };
    const Vector ftr = net.forward_rows(xtr);
    r.train_accuracy = accuracy(ftr, ytr);
    r.test_accuracy = accuracy(net.forward_rows(xte), yte);

    r.direction = spectral::first_principal_direction(xtr);
    std::vector<double> kgrid;
    for (int i = 0; i <= 400; ++i)
        kgrid.push_back(-10.0 + 20.0 * i / 400.0);
    r.target_profile = spectral::nudft(xtr, ytr, r.direction, kgrid, spectral::Projection::Rescaled, "target");
    r.nn_profile = spectral::nudft(xtr, ftr, r.direction, kgrid, spectral::Projection::Rescaled, "nn");

    for (int i = 0; i <= 100; ++i)
        r.axis_k.push_back(-0.5 + i / 100.0);
    r.axis_amplitude.resize(static_cast<Eigen::Index>(r.axis_k.size()), d);
    for (int j = 0; j < d; ++j) {
        double best = -1.0, arg = 0.0;
        for (std::size_t i = 0; i < r.axis_k.size(); ++i) {
            Vector wave = Vector::Constant(d, 0.25);
            wave[j] = r.axis_k[i];
            const double amp = std::abs(spectral::nudft_vector(all.points(), all.values(), wave));
            r.axis_amplitude(static_cast<Eigen::Index>(i), j) = amp;
            if (amp > best + 1e-12) {
                best = amp;
                arg = std::abs(r.axis_k[i]);
            }
        }
        r.axis_peak.push_back(arg);
    }
    r.net = std::move(net);
    return r;
}

ScalingResult run_scaling(const ScenarioConfig& cfg, std::string* stage) {
    set_stage(stage, "sample");
    ScalingResult r;
    r.kernel = spline::kernel_weights_from_stats(cfg.solver.A, cfg.solver.B, 1);
    const auto grid_v = linspace(cfg.sampling.lo, cfg.sampling.hi, cfg.analysis.grid_points);
    const Matrix grid = column(grid_v);
    Vector truth(grid.rows());
    for (Eigen::Index i = 0; i < grid.rows(); ++i)
        truth[i] = target_value(cfg.target, grid.row(i).transpose());
    const double lo = cfg.sampling.lo, hi = cfg.sampling.hi;

    set_stage(stage, "solve");
    const auto trial = [&](int n, std::uint64_t seed) {
        RandomSource rng(seed);
        Matrix x(n, 1);
        for (int i = 0; i < n; ++i)
            x(i, 0) = lo + (hi - lo) * rng.uniform();
        Vector y(n);
        for (int i = 0; i < n; ++i)
            y[i] = target_value(cfg.target, x.row(i).transpose());
        const auto h = spline::steady_state(Dataset(x, y), r.kernel);
        return (h.evaluate_rows(grid) - truth).squaredNorm() / static_cast<double>(truth.size());
    };
    r.report = spectral::error_vs_n_scaling(trial, cfg.analysis.n_list, cfg.analysis.trials, cfg.seed);

    set_stage(stage, "diagnose");
    const auto window = fourier::TaperWindow::around(lo, hi);
    const int samples = std::max(4 * cfg.analysis.grid_points, 2048);
    const double dx = (window.hi() - window.lo()) / (samples - 1);
    Vector vals(samples);
    for (int m = 0; m < samples; ++m) {
        Vector x(1);
        x[0] = window.lo() + dx * m;
        vals[m] = target_value(cfg.target, x);
    }
    const auto spec = GammaSpec::power_law(cfg.solver.A, cfg.solver.B, 1);
    r.target_energy = spectral::fp_energy_sampled(window.lo(), dx, vals, spec, [&](double x) { return window(x); }).energy;
    for (std::size_t i = 0; i < r.report.n_values.size(); ++i)
        r.bounds.push_back(spectral::generalization_bound(r.target_energy, r.report.n_values[i], cfg.analysis.delta,
                                                          cfg.analysis.c_gamma, r.report.mean_error[i]));
    return r;
}

CustomResult run_custom(const ScenarioConfig& cfg, std::string* stage) {
    set_stage(stage, "sample");
    CustomResult r{make_dataset(cfg)};
    const int d = r.data.dimension();
    if (d == 1) {
        const double lo = r.data.points().minCoeff(), hi = r.data.points().maxCoeff();
        const double pad = hi > lo ? 0.25 * (hi - lo) : 1.0;
        r.grid_1d = linspace(lo - pad, hi + pad, cfg.analysis.grid_points);
        r.grid = column(r.grid_1d);
    } else {
        r.grid = r.data.has_eval() ? r.data.eval_points() : r.data.points();
    }

    nn::InitStats stats{cfg.solver.A, cfg.solver.B};
    if (cfg.model.kind == "two_layer") {
        set_stage(stage, "train");
        auto trained = train_two_layer(cfg, r.data, cfg.model.m);
        stats = trained.stats;
        r.nn_prediction = trained.net.forward_rows(r.grid);
        r.final_loss = trained.result.final_loss;
        r.steps = trained.result.steps;
        r.net = std::move(trained.net);
    }

    set_stage(stage, "solve");
    const double A = cfg.solver.gamma == "measured" ? stats.A : cfg.solver.A;
    const double B = cfg.solver.gamma == "measured" ? stats.B : cfg.solver.B;
    const auto spec = GammaSpec::power_law(A, B, d);
    const auto lattice = build_lattice(d, cfg.solver.xi_max, cfg.solver.dxi,
                                       cfg.solver.eps_zero > 0.0 ? std::optional<double>(cfg.solver.eps_zero) : std::nullopt);
    lfp::LatticeKernel kernel(spec, lattice);
    auto state = lfp::ReducedState::from_dataset(r.data, kernel);
    if (cfg.solver.t_end > 0.0) {
        r.trajectory = lfp::evolve_reduced(state, cfg.solver.t_end, cfg.solver.checkpoints);
    } else {
        state = state.steady_state();
    }
    r.lfp_prediction.resize(r.grid.rows());
    for (Eigen::Index i = 0; i < r.grid.rows(); ++i)
        r.lfp_prediction[i] = lfp::predict_offsample(state, r.data, kernel, r.grid.row(i).transpose());
    if (cfg.model.kind == "lfp")
        r.final_loss = state.residuals().squaredNorm() / (2.0 * r.data.size());
    if (d <= 3)
        r.spline_prediction = spline::steady_state(r.data, spline::kernel_weights_from_stats(A, B, d)).evaluate_rows(r.grid);
    return r;
}

nlohmann::json RunManifest::to_json() const {
    json files = json::array();
    for (const auto& f : this->files)
        files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    json j{{"scenario", scenario},
           {"config_sha256", config_sha256},
           {"seed", seed},
           {"versions", {{"fpl", fpl_version}, {"eigen", eigen_version}}},
           {"wall_clock_seconds", wall_clock_seconds},
           {"files", files}};
    if (failed_stage)
        j["failed_stage"] = *failed_stage;
    if (error)
        j["error"] = *error;
    return j;
}

std::vector<std::string> emit_plots(const std::filesystem::path& dir, const std::vector<PlotSpec>& plots) {
    if (plots.empty())
        throw ConfigError("emit_plots: empty plot list");
    std::vector<std::string> written;
    for (const auto& p : plots) {
        if (p.y.empty())
            throw ConfigError("plot '" + p.file + "' has no series");
        const auto cols = read_columns(dir / p.csv);
        svg::Axes axes{p.title, p.xlabel, p.ylabel, std::nullopt, std::nullopt, p.log_x, p.log_y};
        std::string doc;
        if (p.kind == "line") {
            const auto& x = column_of(cols, p.x, p.csv);
            std::vector<svg::Series> series;
            for (const auto& name : p.y) {
                const bool marks = std::find(p.markers.begin(), p.markers.end(), name) != p.markers.end();
                series.push_back({name, x, column_of(cols, name, p.csv), marks});
            }
            doc = svg::line_plot(axes, series);
        } else if (p.kind == "scatter") {
            doc = svg::scatter_identity(axes, column_of(cols, p.x, p.csv), column_of(cols, p.y.front(), p.csv));
        } else if (p.kind == "heatmap") {
            const auto& x0 = column_of(cols, p.x, p.csv);
            if (p.y.size() != 2)
                throw ConfigError("heatmap '" + p.file + "' needs a y column and a value column");
            const auto& x1 = column_of(cols, p.y[0], p.csv);
            const auto& v = column_of(cols, p.y[1], p.csv);
            const int res = p.resolution;
            if (res < 2 || static_cast<std::size_t>(res) * res != v.size())
                throw ConfigError("heatmap '" + p.file + "' expects a " + std::to_string(res) + "x" +
                                  std::to_string(res) + " grid");
            Matrix grid(res, res);
            for (int i = 0; i < res; ++i)
                for (int j = 0; j < res; ++j)
                    grid(i, j) = v[static_cast<std::size_t>(i * res + j)];
            axes.xrange = std::pair{x0.front(), x0.back()};
            axes.yrange = std::pair{x1.front(), x1.back()};
            doc = svg::heatmap(axes, grid);
        } else {
            throw ConfigError("plot '" + p.file + "' has unknown kind '" + p.kind + "'");
        }
        write_file(dir / p.file, doc);
        written.push_back(p.file);
    }
    return written;
}

StageError::StageError(std::string stage, const Error& cause, RunManifest partial, int exit_code)
    : Error("stage '" + stage + "' failed: " + cause.what()),
      stage_(std::move(stage)),
      partial_(std::move(partial)),
      exit_code_(exit_code) {}

int exit_code_for(const std::exception& e) {
    if (const auto* s = dynamic_cast<const StageError*>(&e))
        return s->exit_code();
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e))
        return 2;
    if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DegenerateGeometryError*>(&e) ||
        dynamic_cast<const ResourceError*>(&e))
        return 3;
    return 1;
}

RunManifest run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest man;
    man.scenario = to_string(cfg.id);
    man.config_sha256 = sha256_hex(cfg.resolved.dump());
    man.seed = cfg.seed;
    man.fpl_version = FPL_VERSION;
    man.eigen_version = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION);

    auto finish = [&] {
        man.files.clear();
        if (std::filesystem::exists(out_dir)) {
            std::vector<std::filesystem::path> paths;
            for (const auto& e : std::filesystem::recursive_directory_iterator(out_dir))
                if (e.is_regular_file() && e.path().filename() != "manifest.json")
                    paths.push_back(e.path());
            std::sort(paths.begin(), paths.end());
            for (const auto& p : paths)
                man.files.push_back({std::filesystem::relative(p, out_dir).generic_string(), sha256_file(p),
                                     std::filesystem::file_size(p)});
            man.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_file(out_dir / "manifest.json", man.to_json().dump(2) + "\n");
        }
    };

    std::string stage = "setup";
    try {
        Emitter em(out_dir);
        em.json_file("config.json", cfg.resolved);
        std::vector<PlotSpec> plots;
        switch (cfg.id) {
            case ScenarioId::Fig1TwoTone: {
                const auto r = run_fig1(cfg, &stage);
                stage = "emit";
                plots = emit_fig1(em, cfg, r);
                break;
            }
            case ScenarioId::Fig3Splines: {
                const auto r = run_fig3(cfg, &stage);
                stage = "emit";
                plots = emit_fig3(em, cfg, r);
                break;
            }
            case ScenarioId::Fig4Xor: {
                const auto r = run_fig4(cfg, &stage);
                stage = "emit";
                plots = emit_fig4(em, cfg, r);
                break;
            }
            case ScenarioId::Parity: {
                const auto r = run_parity(cfg, &stage);
                stage = "emit";
                plots = emit_parity(em, cfg, r);
                break;
            }
            case ScenarioId::ScalingLaw: {
                const auto r = run_scaling(cfg, &stage);
                stage = "emit";
                plots = emit_scaling(em, cfg, r);
                break;
            }
            case ScenarioId::Custom: {
                const auto r = run_custom(cfg, &stage);
                stage = "emit";
                plots = emit_custom(em, cfg, r);
                break;
            }
        }
        stage = "plot";
        if (!plots.empty())
            emit_plots(out_dir, plots);
    } catch (const Error& e) {
        man.failed_stage = stage;
        man.error = e.what();
        finish();
        throw StageError(stage, e, man, exit_code_for(e));
    } catch (const std::filesystem::filesystem_error& e) {
        man.failed_stage = stage;
        man.error = e.what();
        throw StageError(stage, Error(e.what()), man, 1);
    }
    finish();
    return man;
}

}  // namespace fpl::cli
