#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lithoroute/common.hpp"
#include "lithoroute/config.hpp"
#include "lithoroute/pipeline.hpp"
#include "lithoroute/synthetic.hpp"

namespace {

using namespace lithoroute;

struct CommonOpts {
    std::string config_path;
    std::string seed;
    std::string run_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "pipeline config file")->required();
    cmd->add_option("--seed", opts.seed, "override run.seed");
    cmd->add_option("--run-dir", opts.run_dir, "override run.dir");
}

PipelineConfig load_with_overrides(const CommonOpts& opts) {
    PipelineConfig cfg = load_config(opts.config_path);
    if (!opts.seed.empty()) apply_override(cfg, "run.seed", opts.seed);
    if (!opts.run_dir.empty()) apply_override(cfg, "run.dir", opts.run_dir);
    return cfg;
}

const char* reused_tag(bool reused) { return reused ? " (reused)" : ""; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coarse-to-fine lithology classification over well logs"};
    app.require_subcommand(1);

    CommonOpts opts;
    auto* ingest = app.add_subcommand("ingest", "read the raw table into a canonical bundle");
    add_common(ingest, opts);
    auto* train = app.add_subcommand("train-base", "train and persist the base classifier");
    add_common(train, opts);
    auto* calibrate =
        app.add_subcommand("calibrate", "sweep the threshold grid on the validation wells");
    add_common(calibrate, opts);
    auto* classify =
        app.add_subcommand("classify", "full pass: route, gather evidence, reason, refine");
    add_common(classify, opts);
    auto* evaluate = app.add_subcommand("evaluate", "score the audit files against the labels");
    add_common(evaluate, opts);
    std::vector<std::string> compare_dirs;
    evaluate->add_option("--compare", compare_dirs,
                         "extra evaluated classify directories for a comparison table");
    auto* sweep = app.add_subcommand("sweep", "classify and evaluate once per value of one knob");
    add_common(sweep, opts);
    std::string sweep_key;
    std::vector<std::string> sweep_values;
    sweep->add_option("--key", sweep_key, "dotted config key to sweep")->required();
    sweep->add_option("--values", sweep_values, "values the key takes")->required();
    auto* demo = app.add_subcommand("make-demo", "write the bundled demo workspace");
    std::string demo_dir = "demo";
    std::string demo_seed = "7";
    demo->add_option("--dir", demo_dir, "workspace directory");
    demo->add_option("--seed", demo_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (demo->parsed()) {
            if (demo_seed.empty() ||
                demo_seed.find_first_not_of("0123456789") != std::string::npos)
                throw ConfigError("--seed wants a non-negative integer, got '" + demo_seed + "'");
            write_demo_workspace(demo_dir, std::strtoull(demo_seed.c_str(), nullptr, 10));
            std::cout << "make-demo: " << demo_dir << " (config " << demo_dir
                      << "/pipeline.conf)\n";
            return 0;
        }

        const PipelineConfig cfg = load_with_overrides(opts);
        if (ingest->parsed()) {
            const IngestResult r = cmd_ingest(cfg);
            std::cout << "ingest: " << r.dir << " wells=" << r.wells << " rows=" << r.rows
                      << " classes=" << r.classes << " imputed_cells=" << r.imputed_cells
                      << reused_tag(r.reused) << "\n";
        } else if (train->parsed()) {
            const TrainBaseResult r = cmd_train_base(cfg);
            std::cout << "train-base: " << r.dir << " kind=" << r.kind
                      << " best_epoch=" << r.best_epoch
                      << " best_val_f1=" << format_fixed(r.best_val_f1, 4)
                      << reused_tag(r.reused) << "\n";
        } else if (calibrate->parsed()) {
            const CalibrateResult r = cmd_calibrate(cfg);
            std::cout << "calibrate: " << r.dir << " tau_star=" << format_full(r.tau_star)
                      << " coverage=" << format_fixed(r.coverage_at_tau, 4)
                      << " accuracy=" << format_fixed(r.accuracy_at_tau, 4)
                      << reused_tag(r.reused) << "\n";
        } else if (classify->parsed()) {
            const ClassifyResult r = cmd_classify(cfg);
            std::cout << "classify: " << r.dir << " tau=" << format_full(r.tau)
                      << " accepted=" << r.accepted << " routed=" << r.routed
                      << " total=" << r.total << " windows_routed=" << r.windows_routed
                      << reused_tag(r.reused) << "\n";
        } else if (evaluate->parsed()) {
            const EvaluateResult r = cmd_evaluate(cfg);
            std::cout << r.text;
            std::cout << "evaluate: " << r.dir << "\n";
            if (!compare_dirs.empty()) {
                std::vector<std::string> dirs = {r.dir};
                dirs.insert(dirs.end(), compare_dirs.begin(), compare_dirs.end());
                std::cout << "\n" << compare_metrics_dirs(dirs);
            }
        } else if (sweep->parsed()) {
            const SweepResult r = cmd_sweep(cfg, sweep_key, sweep_values);
            for (const auto& row : r.rows)
                std::cout << sweep_key << "=" << row.value
                          << " f1=" << format_fixed(row.report.weighted_f1, 4)
                          << " flying=" << format_fixed(row.report.flying_point_ratio, 4)
                          << " coverage=" << format_fixed(row.report.coverage, 4) << " "
                          << row.dir << "\n";
            std::cout << "sweep: " << r.dir << "/sweep.csv\n";
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.error_class() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
}
