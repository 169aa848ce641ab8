// Batch CLI for the first-passage diffusion estimation experiments.
//
//   sdefit moments  --config cfg.toml [--out dir]
//   sdefit simulate --config cfg.toml [--seed s] [--out dir]
//   sdefit estimate --config cfg.toml [--stream stream.csv] [--threads n]
//   sdefit clt      --config cfg.toml [--threads n]
//   sdefit diagnose --config cfg.toml --stream stream.csv
//
// Exit status is 0 iff the run completed and every assertion requested in
// the config's [assert] block passed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"

#include "sdefit/config.hpp"
#include "sdefit/experiments.hpp"

namespace fs = std::filesystem;
using namespace sdefit;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    std::string stream_path;
};

ExperimentConfig load_config(const GlobalOptions& opts) {
    ExperimentConfig config = ExperimentConfig::parse_file(opts.config_path);
    if (opts.seed) config.seed = *opts.seed;
    if (opts.out_dir) config.output_directory = *opts.out_dir;
    return config;
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::vector<ObservationRecord> load_stream(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open stream file: " + path);
    return read_stream_csv(in);
}

void write_trajectories(const fs::path& dir, const EstimateResult& result) {
    for (const ReplicationRow& row : result.rows) {
        if (row.trajectory.empty()) continue;
        std::ostringstream os;
        os << "n";
        if (!row.trajectory.empty())
            for (std::size_t k = 0; k < row.trajectory.front().theta.size(); ++k)
                os << ",theta_" << (k + 1);
        os << ",gamma_n,innovation\n";
        char buf[64];
        for (const TrajectoryPoint& pt : row.trajectory) {
            os << pt.n;
            for (double v : pt.theta) {
                std::snprintf(buf, sizeof(buf), ",%.17g", v);
                os << buf;
            }
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", pt.gamma, pt.innovation);
            os << buf;
        }
        write_file(dir / ("trajectory_rep" + std::to_string(row.rep) + ".csv"), os.str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"recursive parameter estimation for grid-observed diffusions"};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "experiment configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--seed", opts.seed, "override run.seed");
    app.add_option("--out", opts.out_dir, "override output.directory");
    app.add_option("--threads", opts.threads, "worker pool size for replications");
    app.add_option("--stream", opts.stream_path, "observation stream CSV (estimate/diagnose)");

    auto* cmd_moments = app.add_subcommand("moments", "moment table and monotonicity report");
    auto* cmd_simulate = app.add_subcommand("simulate", "generate an observation stream");
    auto* cmd_estimate = app.add_subcommand("estimate", "run the configured estimator");
    auto* cmd_clt = app.add_subcommand("clt", "normalized-recursion normality study");
    auto* cmd_diagnose = app.add_subcommand("diagnose", "embedded-chain diagnostics");
    for (CLI::App* sub : {cmd_moments, cmd_simulate, cmd_estimate, cmd_clt, cmd_diagnose})
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        const ExperimentConfig config = load_config(opts);
        const fs::path out_dir = config.output_directory;
        fs::create_directories(out_dir);
        bool passed = true;

        if (cmd_moments->parsed()) {
            const MomentsResult result = run_moments(config);
            write_file(out_dir / "moments.json", result.table_json);
            write_file(out_dir / "monotonicity.json", result.report_json);
            std::cout << result.report_json << "\n";
        } else if (cmd_simulate->parsed()) {
            const SimulateResult result = run_simulate(config);
            std::ostringstream os;
            write_stream_csv(os, result.records);
            write_file(out_dir / "stream.csv", os.str());
            write_file(out_dir / "simulate_summary.json", result.summary_json);
            std::cout << result.summary_json << "\n";
            passed = result.asserts_passed;
        } else if (cmd_estimate->parsed()) {
            std::vector<ObservationRecord> stream;
            const std::vector<ObservationRecord>* replay = nullptr;
            if (!opts.stream_path.empty()) {
                stream = load_stream(opts.stream_path);
                replay = &stream;
            }
            const EstimateResult result = run_estimate(config, replay, opts.threads);
            write_file(out_dir / "estimate_summary.json", result.summary_json);
            write_trajectories(out_dir, result);
            std::cout << result.summary_json << "\n";
            passed = result.asserts_passed;
        } else if (cmd_clt->parsed()) {
            const CltResult result = run_clt(config, opts.threads);
            write_file(out_dir / "clt_summary.json", result.summary_json);
            std::cout << result.summary_json << "\n";
            passed = result.asserts_passed;
        } else if (cmd_diagnose->parsed()) {
            if (opts.stream_path.empty())
                throw std::runtime_error("diagnose requires --stream");
            const DiagnoseResult result = run_diagnose(config, load_stream(opts.stream_path));
            write_file(out_dir / "diagnostics.json", result.report_json);
            std::cout << result.report_json << "\n";
            passed = result.asserts_passed;
        }
        return passed ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
