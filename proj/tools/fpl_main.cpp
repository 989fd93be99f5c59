#include "fpl/io.hpp"
#include "fpl/scenario.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace fpl;
using namespace fpl::cli;

struct Job {
    std::filesystem::path config_path;
    ScenarioConfig cfg;
    std::filesystem::path out;
};

int run_job(const Job& job) {
    try {
        const RunManifest man = run_scenario(job.cfg, job.out);
        std::printf("%s: %s -> %s (%zu files, %.1f s)\n", job.config_path.string().c_str(), man.scenario.c_str(),
                    job.out.string().c_str(), man.files.size(), man.wall_clock_seconds);
        return 0;
    } catch (const StageError& e) {
        std::fprintf(stderr, "%s: %s\n", job.config_path.string().c_str(), e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s: %s\n", job.config_path.string().c_str(), e.what());
        return exit_code_for(e);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frequency-principle experiments: linear F-Principle model, spline kernels and two-layer nets"};
    app.require_subcommand(1);
    app.set_version_flag("--version", FPL_VERSION);

    std::vector<std::string> run_configs;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    bool paper_scale = false;
    int jobs = 1;
    auto* run = app.add_subcommand("run", "Run one or more scenario configs");
    run->add_option("config", run_configs, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory (one subdirectory per config when several are given)");
    run->add_option("--seed", seed, "Override the config seed");
    run->add_flag("--paper-scale", paper_scale, "Use the full network widths (fig3: m = 40000, fig4: m = 160000)");
    run->add_option("--jobs", jobs, "Run up to N configs concurrently")->check(CLI::Range(1, 256));

    std::string validate_config;
    auto* validate = app.add_subcommand("validate", "Check a scenario config without running it");
    validate->add_option("config", validate_config, "Scenario config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*validate) {
        try {
            const ScenarioConfig cfg = load_config(validate_config);
            std::printf("%s: ok (%s, config sha256 %s)\n", validate_config.c_str(), to_string(cfg.id).c_str(),
                        sha256_hex(cfg.resolved.dump()).c_str());
            return 0;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "%s: %s\n", validate_config.c_str(), e.what());
            return exit_code_for(e);
        }
    }

    std::vector<Job> queue;
    for (const auto& path : run_configs) {
        try {
            ScenarioConfig cfg = load_config(path);
            if (seed)
                override_seed(cfg, *seed);
            if (paper_scale)
                apply_paper_scale(cfg);
            std::filesystem::path out;
            const std::string stem = std::filesystem::path(path).stem().string();
            if (out_dir)
                out = run_configs.size() == 1 ? std::filesystem::path(*out_dir) : std::filesystem::path(*out_dir) / stem;
            else if (cfg.output_dir)
                out = *cfg.output_dir;
            else
                out = std::filesystem::path("runs") / stem;
            queue.push_back({path, std::move(cfg), std::move(out)});
        } catch (const std::exception& e) {
            std::fprintf(stderr, "%s: %s\n", path.c_str(), e.what());
            return exit_code_for(e);
        }
    }

    int status = 0;
    auto merge = [&](int code) {
        if (status == 0)
            status = code;
    };
    if (jobs == 1) {
        for (const auto& job : queue)
            merge(run_job(job));
        return status;
    }
    std::vector<std::future<int>> running;
    for (const auto& job : queue) {
        if (static_cast<int>(running.size()) == jobs) {
            merge(running.front().get());
            running.erase(running.begin());
        }
        running.push_back(std::async(std::launch::async, run_job, std::cref(job)));
    }
    for (auto& f : running)
        merge(f.get());
    return status;
}
