#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lithoroute/evidence.hpp"
#include "lithoroute/reasoning.hpp"

namespace lithoroute {

// Prose continuity rules for the refiner prompt plus the minimum plausible
// run length the deterministic smoother enforces.
struct GeologyGuidelines {
    std::vector<std::string> rules;
    std::size_t min_run = 2;

    void validate() const;
};

GeologyGuidelines default_guidelines();
// One rule per line; '#' comments and blank lines skipped.
GeologyGuidelines load_guidelines(const std::string& path, std::size_t min_run);

struct RefinedWindow {
    std::vector<int> labels;
    std::string method;  // llm | deterministic | base-passthrough
    std::string rationale;
    std::string note;
    std::size_t backend_calls = 0;
};

// Relabels maximal runs shorter than r to the longer adjacent run (ties to
// the run above) until no such run remains. A single-run sequence has no
// adjacent run and stays unchanged.
std::vector<int> refine_deterministic(const std::vector<int>& labels, std::size_t r);

// Fraction of depths whose label differs from every neighbor they have.
double flying_point_ratio(const std::vector<int>& labels);

// Per-depth most frequent candidate label; ties go to the earliest candidate
// in panel order holding a tied label at that depth.
std::vector<int> candidate_plurality(const std::vector<CandidatePrediction>& candidates);

// Resolves the candidates through the backend under the guidelines. Skips
// the call when all parseable candidates already agree; falls back to
// deterministic smoothing when nothing parses.
RefinedWindow refine_llm(ReasonerBackend& backend, const EvidenceProfile& profile,
                         const std::vector<CandidatePrediction>& candidates,
                         const GeologyGuidelines& guidelines, const LabelSchema& schema,
                         const SamplingParams& params);

}  // namespace lithoroute
