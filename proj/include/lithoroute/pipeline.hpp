#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lithoroute/config.hpp"
#include "lithoroute/metrics.hpp"
#include "lithoroute/reasoning.hpp"

namespace lithoroute {

// Stage directories are named by a hash over the config knobs the stage
// depends on, so a changed knob lands in a fresh directory and an unchanged
// one finds its previous artifacts.
std::string ingest_dir(const PipelineConfig& cfg);
std::string train_dir(const PipelineConfig& cfg);
std::string calibrate_dir(const PipelineConfig& cfg);
std::string classify_dir(const PipelineConfig& cfg);

struct IngestResult {
    std::string dir;
    std::size_t wells = 0;
    std::size_t rows = 0;
    std::size_t classes = 0;
    std::size_t imputed_cells = 0;
    bool reused = false;
};

struct TrainBaseResult {
    std::string dir;
    std::string kind;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
    bool reused = false;
};

struct CalibrateResult {
    std::string dir;
    double tau_star = 0.0;
    double accuracy_at_tau = 0.0;
    double coverage_at_tau = 0.0;
    std::size_t calibration_size = 0;
    bool reused = false;
};

struct ClassifyResult {
    std::string dir;
    double tau = 0.0;
    std::size_t accepted = 0;
    std::size_t routed = 0;
    std::size_t total = 0;
    std::size_t windows_routed = 0;
    bool reused = false;
};

struct EvaluateResult {
    std::string dir;
    MetricsReport report;
    std::string text;
};

struct SweepRow {
    std::string value;
    std::string dir;  // the classify directory for this value
    MetricsReport report;
};

struct SweepResult {
    std::string dir;
    std::vector<SweepRow> rows;
};

// Reads the raw table, validates the split, fits normalization on the
// training wells, and persists the canonical bundle.
IngestResult cmd_ingest(const PipelineConfig& cfg);

// Trains the configured base classifier on the bundle and persists the best
// validation checkpoint.
TrainBaseResult cmd_train_base(const PipelineConfig& cfg);

// Sweeps the threshold grid on the validation wells and persists the
// coverage curve plus the calibrated tau.
CalibrateResult cmd_calibrate(const PipelineConfig& cfg);

// Full coarse-to-fine pass over the test wells: base probabilities, routing,
// evidence assembly, persona panel, refinement, per-well audit files. A
// non-null backend_override replaces the configured backend (tests); every
// backend runs behind the completion log, so an interrupted run resumes
// without re-querying.
ClassifyResult cmd_classify(const PipelineConfig& cfg, ReasonerBackend* backend_override = nullptr);

// Scores the audit files of the classify stage against the bundled labels
// and writes metrics.txt / metrics.json into the classify directory.
EvaluateResult cmd_evaluate(const PipelineConfig& cfg);

// Comparison table over previously evaluated classify directories.
std::string compare_metrics_dirs(const std::vector<std::string>& classify_dirs);

// One classify+evaluate per value of the swept knob, upstream stages reused
// where their inputs are unchanged; writes sweep.csv.
SweepResult cmd_sweep(const PipelineConfig& cfg, const std::string& key,
                      const std::vector<std::string>& values,
                      ReasonerBackend* backend_override = nullptr);

// Reconstructs a MetricsReport from a metrics.json written by cmd_evaluate.
MetricsReport load_metrics_json(const std::string& path);

}  // namespace lithoroute
