#include "lithoroute/refinement.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "lithoroute/common.hpp"

namespace lithoroute {

void GeologyGuidelines::validate() const {
    if (min_run < 1) throw ConfigError("refine.min_run must be >= 1");
    if (rules.empty()) throw ConfigError("geology guidelines carry no rules");
}

GeologyGuidelines default_guidelines() {
    GeologyGuidelines g;
    g.rules = {
        "Lithology is continuous along depth; prefer runs several steps long over isolated "
        "single-depth switches.",
        "A label change should line up with a visible shift in the measurements; keep "
        "boundaries where the curves actually move.",
        "Transitions tend to pass through intermediate textures; an abrupt one-depth jump "
        "between end-member lithologies is suspect.",
        "When candidates disagree at one depth but agree around it, side with the label that "
        "preserves the enclosing run.",
    };
    return g;
}

GeologyGuidelines load_guidelines(const std::string& path, std::size_t min_run) {
    GeologyGuidelines g;
    g.min_run = min_run;
    std::istringstream is(read_text_file(path));
    std::string line;
    while (std::getline(is, line)) {
        const std::string rule = trim(line);
        if (rule.empty() || rule[0] == '#') continue;
        g.rules.push_back(rule);
    }
    if (g.rules.empty()) throw SchemaError("guidelines file has no rules: " + path);
    return g;
}

namespace {

struct Run {
    int label;
    std::size_t start;
    std::size_t length;
};

std::vector<Run> find_runs(const std::vector<int>& labels) {
    std::vector<Run> runs;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (runs.empty() || runs.back().label != labels[i])
            runs.push_back({labels[i], i, 1});
        else
            ++runs.back().length;
    }
    return runs;
}

}  // namespace

std::vector<int> refine_deterministic(const std::vector<int>& labels, std::size_t r) {
    if (labels.empty()) throw DataError("refine_deterministic on an empty sequence");
    if (r < 1) throw ConfigError("minimum run length must be >= 1");
    std::vector<int> out = labels;
    for (;;) {
        const auto runs = find_runs(out);
        if (runs.size() <= 1) break;
        std::size_t fix = runs.size();
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (runs[i].length < r) {
                fix = i;
                break;
            }
        }
        if (fix == runs.size()) break;
        std::size_t source;
        if (fix == 0)
            source = 1;
        else if (fix + 1 == runs.size())
            source = fix - 1;
        else
            source = runs[fix - 1].length >= runs[fix + 1].length ? fix - 1 : fix + 1;
        for (std::size_t j = 0; j < runs[fix].length; ++j)
            out[runs[fix].start + j] = runs[source].label;
    }
    return out;
}

double flying_point_ratio(const std::vector<int>& labels) {
    if (labels.empty()) throw DataError("flying_point_ratio on an empty sequence");
    const std::size_t n = labels.size();
    if (n == 1) return 0.0;
    std::size_t isolated = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool differs_above = i == 0 || labels[i] != labels[i - 1];
        const bool differs_below = i + 1 == n || labels[i] != labels[i + 1];
        if (differs_above && differs_below) ++isolated;
    }
    return static_cast<double>(isolated) / static_cast<double>(n);
}

std::vector<int> candidate_plurality(const std::vector<CandidatePrediction>& candidates) {
    if (candidates.empty()) throw DataError("candidate_plurality with no candidates");
    const std::size_t width = candidates.front().labels.size();
    for (const auto& c : candidates)
        if (c.labels.size() != width)
            throw DataError("candidate label lists disagree in length");

    std::vector<int> out(width);
    for (std::size_t d = 0; d < width; ++d) {
        std::map<int, std::size_t> counts;
        for (const auto& c : candidates) ++counts[c.labels[d]];
        std::size_t best = 0;
        for (const auto& [label, n] : counts) best = std::max(best, n);
        int winner = -1;
        for (const auto& c : candidates) {
            if (counts[c.labels[d]] == best) {
                winner = c.labels[d];
                break;
            }
        }
        out[d] = winner;
    }
    return out;
}

namespace {

std::string refine_user_text(const EvidenceProfile& profile,
                             const std::vector<CandidatePrediction>& candidates,
                             const GeologyGuidelines& guidelines, const LabelSchema& schema) {
    std::ostringstream os;
    os << window_preamble(profile, schema);
    os << "\n## Candidates\n";
    for (const auto& c : candidates) {
        os << c.persona << (c.parse_ok ? "" : " (fallback)") << ":";
        for (std::size_t d = 0; d < c.labels.size(); ++d)
            os << " " << d << "=" << schema.class_names[static_cast<std::size_t>(c.labels[d])];
        os << "\n";
    }
    for (std::size_t d = 0; d < profile.width(); ++d) {
        os << "depth " << d << ": candidates=[";
        for (std::size_t m = 0; m < candidates.size(); ++m)
            os << (m ? "|" : "")
               << schema.class_names[static_cast<std::size_t>(candidates[m].labels[d])];
        os << "]\n";
    }
    os << "\n## Guidelines\n";
    for (std::size_t i = 0; i < guidelines.rules.size(); ++i)
        os << (i + 1) << ". " << guidelines.rules[i] << "\n";
    os << "\n" << raw_values_section(profile);
    return os.str();
}

}  // namespace

RefinedWindow refine_llm(ReasonerBackend& backend, const EvidenceProfile& profile,
                         const std::vector<CandidatePrediction>& candidates,
                         const GeologyGuidelines& guidelines, const LabelSchema& schema,
                         const SamplingParams& params) {
    guidelines.validate();
    if (candidates.empty()) throw DataError("refine_llm with no candidates");
    const std::size_t width = profile.width();
    for (const auto& c : candidates)
        if (c.labels.size() != width)
            throw DataError("candidate for persona " + c.persona +
                            " does not cover the window");

    RefinedWindow out;
    std::vector<const CandidatePrediction*> parseable;
    for (const auto& c : candidates)
        if (c.parse_ok) parseable.push_back(&c);

    if (parseable.empty()) {
        out.labels = refine_deterministic(candidates.front().labels, guidelines.min_run);
        out.method = "deterministic";
        out.note = "no parseable candidates; deterministic smoothing of the base argmax";
        return out;
    }

    bool unanimous = true;
    for (std::size_t i = 1; i < parseable.size() && unanimous; ++i)
        unanimous = parseable[i]->labels == parseable[0]->labels;
    if (unanimous) {
        out.labels = parseable[0]->labels;
        out.method = "llm";
        out.rationale = "all parseable candidates agree; backend not consulted";
        return out;
    }

    const std::string system_text =
        "You are the geological refiner. Interpretation personas proposed conflicting candidate "
        "label sequences for this window. Resolve the conflicts under stratigraphic continuity "
        "and plausible transition behavior, preferring the listed candidates at each depth.\n" +
        answer_contract_text(width);
    const std::string user_text = refine_user_text(profile, candidates, guidelines, schema);
    const std::string tag = std::to_string(params.seed) + ":refine:" + profile.well_id + ":" +
                            std::to_string(profile.start);

    std::string err;
    std::string text = backend.complete(system_text, user_text, params, fnv1a64(tag));
    ++out.backend_calls;
    auto labels = parse_answer_block(text, schema, width, &err);
    if (!labels) {
        text = backend.complete(system_text, user_text + format_reminder(width), params,
                                fnv1a64(tag + ":retry"));
        ++out.backend_calls;
        labels = parse_answer_block(text, schema, width, &err);
    }
    if (labels) {
        out.labels = std::move(*labels);
        out.method = "llm";
        out.rationale = completion_rationale(text);
        return out;
    }
    out.labels = refine_deterministic(candidate_plurality(candidates), guidelines.min_run);
    out.method = "deterministic";
    out.note = "refiner completions unparseable (" + err +
               "); deterministic smoothing of the candidate plurality";
    return out;
}

}  // namespace lithoroute
