#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lithoroute/evidence.hpp"
#include "lithoroute/well_log.hpp"

namespace lithoroute {

// One reasoning perspective; exactly three are registered.
struct Persona {
    std::string name;
    std::string emphasis;
    std::string template_id;
};

const std::vector<Persona>& default_personas();  // analyst, stratigrapher, physicist order
const Persona& persona_by_name(const std::string& name);  // full names or short aliases

struct SamplingParams {
    double temperature = 0.6;
    double top_p = 0.7;
    std::size_t max_tokens = 8192;
    std::uint64_t seed = 7;
    std::size_t votes = 3;

    void validate() const;
};

// Text-completion capability the panel runs against.
class ReasonerBackend {
public:
    virtual ~ReasonerBackend() = default;
    // call_seed varies per vote/retry; implementations may ignore it.
    virtual std::string complete(const std::string& system_text, const std::string& user_text,
                                 const SamplingParams& params, std::uint64_t call_seed) = 0;
    virtual std::string kind() const = 0;
};

// Deterministic offline stand-in: reads the per-depth hint tokens the prompt
// renderer embeds (nearest=[..], candidates=[..|..], argmax=[..]) and answers
// from them, falling back to a seed-hashed label pick.
class MockBackend : public ReasonerBackend {
public:
    std::string complete(const std::string& system_text, const std::string& user_text,
                         const SamplingParams& params, std::uint64_t call_seed) override;
    std::string kind() const override { return "mock"; }
};

// Chat-style HTTP completion endpoint; retries transient failures with
// exponential backoff.
class HttpBackend : public ReasonerBackend {
public:
    HttpBackend(std::string url, std::string model, std::string api_key, int max_attempts = 3,
                int backoff_ms = 500);

    std::string complete(const std::string& system_text, const std::string& user_text,
                         const SamplingParams& params, std::uint64_t call_seed) override;
    std::string kind() const override { return "remote"; }

private:
    std::string scheme_host_;
    std::string path_;
    std::string model_;
    std::string api_key_;
    int max_attempts_;
    int backoff_ms_;
};

// Reads LITHOROUTE_API_URL, LITHOROUTE_MODEL, LITHOROUTE_API_KEY.
std::unique_ptr<HttpBackend> make_http_backend_from_env(int max_attempts = 3, int backoff_ms = 500);

// Write-through completion log keyed by request content; replays logged
// completions instead of re-querying, which is what makes interrupted runs
// resumable.
class CachingBackend : public ReasonerBackend {
public:
    CachingBackend(ReasonerBackend& inner, std::string cache_dir);

    std::string complete(const std::string& system_text, const std::string& user_text,
                         const SamplingParams& params, std::uint64_t call_seed) override;
    std::string kind() const override { return inner_.kind(); }

    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    ReasonerBackend& inner_;
    std::string dir_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
    std::mutex mu_;
};

struct PromptRender {
    std::string system_text;
    std::string user_text;
    std::vector<std::string> warnings;
    std::vector<std::string> dropped_sections;
};

// Deterministic prompt pair; the persona's emphasized sections come first.
// Over-budget prompts drop optional sections in a fixed order (raw values
// last) and record what was dropped. char_budget 0 means unlimited.
PromptRender render_persona_prompt(const Persona& persona, const EvidenceProfile& profile,
                                   const LabelSchema& schema, std::size_t char_budget = 0);

struct CandidatePrediction {
    std::string persona;
    std::vector<int> labels;  // window-relative, one per depth
    std::string rationale;
    std::vector<std::string> raw_completions;  // every vote and retry, in order
    bool parse_ok = false;
    std::size_t failed_votes = 0;
    std::string note;
};

// Parses the completion's final fenced block of "<depth_index>: <LABEL>"
// lines; requires exact coverage of 0..width-1 and schema label names
// (case-insensitive). Returns nullopt with a reason on any violation.
std::optional<std::vector<int>> parse_answer_block(const std::string& completion,
                                                   const LabelSchema& schema, std::size_t width,
                                                   std::string* error);

// Appended to the user text when a completion fails to parse.
std::string format_reminder(std::size_t width);

// Completion text that precedes the final fenced block, trimmed.
std::string completion_rationale(const std::string& completion);

// Answer-format instructions shared by persona and refinement prompts.
std::string answer_contract_text(std::size_t width);

// "## Window" section carrying the Depths and Valid labels lines the offline
// mock keys on; every prompt starts with it.
std::string window_preamble(const EvidenceProfile& profile, const LabelSchema& schema);

std::string raw_values_section(const EvidenceProfile& profile);

// Runs `votes` completions for one persona, majority-voting per depth (ties
// to the label with higher base probability). All-votes-unparseable yields a
// failed candidate carrying the base-argmax labels.
CandidatePrediction infer_persona(ReasonerBackend& backend, const Persona& persona,
                                  const EvidenceProfile& profile, const LabelSchema& schema,
                                  const SamplingParams& params, std::size_t char_budget = 0);

// One candidate per persona, in panel order.
std::vector<CandidatePrediction> run_panel(ReasonerBackend& backend,
                                           const EvidenceProfile& profile,
                                           const LabelSchema& schema, const SamplingParams& params,
                                           const std::vector<Persona>& personas,
                                           std::size_t char_budget = 0);

std::vector<int> base_argmax_labels(const EvidenceProfile& profile);

}  // namespace lithoroute
