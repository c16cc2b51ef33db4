#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lithoroute/classifier.hpp"
#include "lithoroute/evidence.hpp"
#include "lithoroute/reasoning.hpp"
#include "lithoroute/well_log.hpp"

namespace lithoroute {

// Every pipeline knob, parsed from a sectioned key=value file. Unknown keys
// are rejected; backend credentials come from the environment instead.
struct PipelineConfig {
    // [data]
    std::string data_csv;
    std::string data_mapping;
    std::string data_kb;
    std::string data_guidelines;

    // [split]
    DatasetSplit split;

    // [base]
    std::string base_model = "mlp";
    TrainConfig train;  // seed filled from run.seed via effective_train()

    // [routing]
    std::optional<double> tau;  // absent: use the calibrated threshold
    double epsilon = 0.01;
    std::size_t grid = 101;

    // [tools]
    ToolFlags tools;
    std::size_t delta = 8;
    std::size_t k = 5;
    std::size_t h = 4;

    // [reasoning]
    std::size_t reasoning_window = 4;
    std::vector<std::string> personas = {"analyst", "stratigrapher", "physicist"};
    std::size_t prompt_budget = 24000;  // characters; 0 = unlimited

    // [sampling]
    SamplingParams sampling;  // seed filled from run.seed via effective_sampling()

    // [backend]
    std::string backend_kind = "mock";
    int backend_attempts = 3;
    int backend_backoff_ms = 500;

    // [refine]
    std::string refine_mode = "llm";
    std::size_t min_run = 2;

    // [run]
    std::string run_dir = "runs";
    std::uint64_t seed = 7;
    std::size_t parallelism = 1;

    void validate() const;

    TrainConfig effective_train() const;
    SamplingParams effective_sampling() const;
    std::vector<Persona> panel() const;

    // Dotted key -> canonical value for every knob, the basis of run-dir
    // subset hashes.
    std::map<std::string, std::string> to_key_values() const;

    // Hash over the knobs whose dotted keys start with any given prefix.
    std::string subset_hash(const std::vector<std::string>& prefixes) const;
};

PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

// Sets one knob by its dotted key (sweeps and CLI overrides).
void apply_override(PipelineConfig& config, const std::string& dotted_key,
                    const std::string& value);

}  // namespace lithoroute
