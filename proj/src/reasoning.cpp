#include "lithoroute/reasoning.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "lithoroute/common.hpp"

namespace lithoroute {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<Persona>& default_personas() {
    static const std::vector<Persona> personas = {
        {"DataCentricAnalyst",
         "statistical evidence first: base-classifier probabilities and retrieved nearest "
         "neighbors carry the most weight",
         "analyst"},
        {"ContextAwareStratigrapher",
         "contextual consistency first: depth trends and the labels assigned above this window "
         "carry the most weight",
         "stratigrapher"},
        {"RuleBasedPhysicist",
         "domain constraints first: the physical meaning of each channel and the expert "
         "guidelines carry the most weight",
         "physicist"},
    };
    return personas;
}

const Persona& persona_by_name(const std::string& name) {
    const std::string key = lower(name);
    for (const auto& p : default_personas())
        if (lower(p.name) == key || p.template_id == key) return p;
    throw ConfigError("unknown persona: " + name);
}

void SamplingParams::validate() const {
    if (!(temperature >= 0.0)) throw ConfigError("sampling.temperature must be >= 0");
    if (!(top_p > 0.0) || top_p > 1.0) throw ConfigError("sampling.top_p must be in (0, 1]");
    if (max_tokens < 1) throw ConfigError("sampling.max_tokens must be >= 1");
    if (votes < 1 || votes % 2 == 0) throw ConfigError("sampling.votes must be odd and >= 1");
}

namespace {

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    return out;
}

std::string label_name(const LabelSchema& schema, int idx) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= schema.num_classes())
        throw LabelError("label index " + std::to_string(idx) + " outside schema");
    return schema.class_names[static_cast<std::size_t>(idx)];
}

// Last complete fenced block, as [begin, end) line indices of its body.
bool last_fenced_block(const std::vector<std::string>& lines, std::size_t* begin,
                       std::size_t* end) {
    std::vector<std::size_t> fences;
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (trim(lines[i]).rfind("```", 0) == 0) fences.push_back(i);
    if (fences.size() < 2) return false;
    const std::size_t close = fences[fences.size() - (fences.size() % 2 ? 2 : 1)];
    const std::size_t open = fences[fences.size() - (fences.size() % 2 ? 3 : 2)];
    *begin = open + 1;
    *end = close;
    return true;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

std::optional<std::vector<int>> parse_answer_block(const std::string& completion,
                                                   const LabelSchema& schema, std::size_t width,
                                                   std::string* error) {
    auto fail = [&](const std::string& why) -> std::optional<std::vector<int>> {
        if (error) *error = why;
        return std::nullopt;
    };
    const auto lines = split_lines(completion);
    std::size_t begin = 0, end = 0;
    if (!last_fenced_block(lines, &begin, &end)) return fail("no fenced answer block");

    std::map<std::string, int> by_name;
    for (std::size_t i = 0; i < schema.num_classes(); ++i)
        by_name[lower(schema.class_names[i])] = static_cast<int>(i);

    std::vector<int> labels(width, -1);
    std::size_t seen = 0;
    for (std::size_t i = begin; i < end; ++i) {
        const std::string line = trim(lines[i]);
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            return fail("unrecognized line in answer block: '" + line + "'");
        const std::string idx_text = trim(line.substr(0, colon));
        if (idx_text.empty() || idx_text.size() > 9 ||
            idx_text.find_first_not_of("0123456789") != std::string::npos)
            return fail("bad depth index in answer block: '" + line + "'");
        const std::size_t idx = std::stoul(idx_text);
        if (idx >= width)
            return fail("depth index " + idx_text + " outside 0.." + std::to_string(width - 1));
        if (labels[idx] != -1) return fail("depth " + idx_text + " listed twice");
        const std::string name = trim(line.substr(colon + 1));
        auto it = by_name.find(lower(name));
        if (it == by_name.end()) return fail("unknown label '" + name + "' in answer block");
        labels[idx] = it->second;
        ++seen;
    }
    if (seen < width) {
        for (std::size_t i = 0; i < width; ++i)
            if (labels[i] == -1) return fail("answer block misses depth " + std::to_string(i));
    }
    return labels;
}

std::string format_reminder(std::size_t width) {
    return "\n\nReminder: reply with exactly one fenced code block whose lines are "
           "'<depth_index>: <LABEL_NAME>', covering every depth index from 0 to " +
           std::to_string(width - 1) + " exactly once, using only the valid labels.";
}

std::string answer_contract_text(std::size_t width) {
    return "Classify every depth of the window.\n"
           "Reply with exactly one fenced code block in which each line is\n"
           "<depth_index>: <LABEL_NAME>\n"
           "covering every window-relative depth index from 0 to " +
           std::to_string(width - 1) +
           " exactly once, using only labels from the valid-label list. No other text inside "
           "the block.\n";
}

std::string window_preamble(const EvidenceProfile& p, const LabelSchema& schema) {
    std::ostringstream os;
    os << "## Window\n";
    os << "Well " << p.well_id << ", absolute depth indices " << p.start << ".." << p.end
       << ".\n";
    os << "Depths: " << p.width() << "\n";
    os << "Valid labels: " << join_list(schema.class_names) << "\n";
    return os.str();
}

std::string raw_values_section(const EvidenceProfile& p) {
    std::ostringstream os;
    os << "## Raw values\n";
    for (std::size_t i = 0; i < p.width(); ++i) {
        os << "depth " << i << ":";
        for (std::size_t c = 0; c < p.channel_names.size(); ++c)
            os << (c ? ", " : " ") << p.channel_names[c] << "="
               << format_fixed(p.window_values[c][i], 4);
        os << "\n";
    }
    return os.str();
}

namespace {

std::string base_section(const EvidenceProfile& p, const LabelSchema& schema) {
    std::ostringstream os;
    os << "## Base probabilities\n";
    for (std::size_t i = 0; i < p.base_probs.size(); ++i) {
        const auto& probs = p.base_probs[i];
        std::vector<std::size_t> order(probs.size());
        for (std::size_t c = 0; c < probs.size(); ++c) order[c] = c;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
        os << "depth " << i << ": argmax=[" << label_name(schema, static_cast<int>(order[0]))
           << "] p=" << format_fixed(probs[order[0]], 3) << "; top:";
        const std::size_t top = std::min<std::size_t>(3, order.size());
        for (std::size_t r = 0; r < top; ++r)
            os << (r ? ", " : " ") << label_name(schema, static_cast<int>(order[r])) << "="
               << format_fixed(probs[order[r]], 3);
        os << "\n";
    }
    return os.str();
}

std::string neighbors_section(const EvidenceProfile& p, const LabelSchema& schema) {
    std::ostringstream os;
    os << "## Neighbors\n";
    for (std::size_t i = 0; i < p.neighbors->size(); ++i) {
        const auto& set = (*p.neighbors)[i].neighbors;
        if (set.empty()) {
            os << "depth " << i << ": none\n";
            continue;
        }
        os << "depth " << i << ": nearest=[" << label_name(schema, set[0].label) << "]; all:";
        for (std::size_t r = 0; r < set.size(); ++r)
            os << (r ? ", " : " ") << label_name(schema, set[r].label) << " d="
               << format_fixed(set[r].distance, 3);
        os << "\n";
    }
    return os.str();
}

std::string trend_section(const EvidenceProfile& p) {
    std::ostringstream os;
    const auto& t = *p.trend;
    os << "## Trend\n";
    os << "Extended segment " << t.segment_start << ".." << t.segment_end << " (delta "
       << t.delta << ").\n";
    for (const auto& c : t.channels)
        os << c.channel << ": slope=" << format_fixed(c.slope, 4) << ", mean="
           << format_fixed(c.mean, 4) << ", std=" << format_fixed(c.std_dev, 4)
           << ", regime=" << c.regime << "\n";
    return os.str();
}

std::string history_section(const EvidenceProfile& p, const LabelSchema& schema) {
    std::ostringstream os;
    os << "## History\n";
    if (p.history->labels.empty()) {
        os << "Labels above this window: none (top of well).\n";
        return os.str();
    }
    os << "Labels above this window, nearest first:";
    for (std::size_t i = 0; i < p.history->labels.size(); ++i)
        os << (i ? ", " : " ") << label_name(schema, p.history->labels[i]);
    os << "\n";
    return os.str();
}

std::string knowledge_section(const EvidenceProfile& p) {
    return "## Knowledge\n" + p.knowledge->to_text();
}

}  // namespace

PromptRender render_persona_prompt(const Persona& persona, const EvidenceProfile& profile,
                                   const LabelSchema& schema, std::size_t char_budget) {
    PromptRender out;
    out.system_text = "You are " + persona.name +
                      ", one of three lithology-interpretation personas.\n"
                      "Your inductive bias: " +
                      persona.emphasis + ".\n" + answer_contract_text(profile.width());

    std::vector<std::string> order;
    std::vector<std::string> primary;
    if (persona.template_id == "analyst") {
        order = {"base", "neighbors", "trend", "history", "knowledge"};
        primary = {"neighbors"};
    } else if (persona.template_id == "stratigrapher") {
        order = {"trend", "history", "base", "neighbors", "knowledge"};
        primary = {"trend", "history"};
    } else {
        order = {"knowledge", "base", "neighbors", "trend", "history"};
        primary = {"knowledge"};
    }
    order.push_back("raw");

    std::map<std::string, std::string> sections;
    sections["base"] = base_section(profile, schema);
    if (profile.neighbors) sections["neighbors"] = neighbors_section(profile, schema);
    if (profile.trend) sections["trend"] = trend_section(profile);
    if (profile.history) sections["history"] = history_section(profile, schema);
    if (profile.knowledge) sections["knowledge"] = knowledge_section(profile);
    sections["raw"] = raw_values_section(profile);

    for (const auto& name : primary)
        if (!sections.count(name))
            out.warnings.push_back("persona " + persona.name + " emphasizes the " + name +
                                   " section but the profile has none");

    auto assemble = [&]() {
        std::string user = window_preamble(profile, schema);
        for (const auto& name : order) {
            auto it = sections.find(name);
            if (it == sections.end()) continue;
            user += "\n" + it->second;
        }
        return user;
    };

    out.user_text = assemble();
    if (char_budget > 0) {
        static const std::vector<std::string> drop_order = {"neighbors", "history", "trend",
                                                            "knowledge", "base", "raw"};
        for (const auto& victim : drop_order) {
            if (out.system_text.size() + out.user_text.size() <= char_budget) break;
            if (sections.erase(victim)) {
                out.dropped_sections.push_back(victim);
                out.user_text = assemble();
            }
        }
        if (out.system_text.size() + out.user_text.size() > char_budget)
            out.warnings.push_back("prompt still exceeds the character budget after dropping "
                                   "all optional sections");
    }
    return out;
}

std::string MockBackend::complete(const std::string& system_text, const std::string& user_text,
                                  const SamplingParams& params, std::uint64_t call_seed) {
    (void)system_text;
    (void)params;
    const auto lines = split_lines(user_text);

    std::vector<std::string> valid;
    std::size_t width = 0;
    struct Hints {
        std::string nearest, argmax;
        std::vector<std::string> candidates;
    };
    std::map<std::size_t, Hints> hints;

    auto bracket = [](const std::string& line, const std::string& key) -> std::string {
        const auto at = line.find(key + "=[");
        if (at == std::string::npos) return "";
        const auto from = at + key.size() + 2;
        const auto to = line.find(']', from);
        if (to == std::string::npos) return "";
        return line.substr(from, to - from);
    };

    for (const auto& raw : lines) {
        const std::string line = trim(raw);
        if (line.rfind("Valid labels: ", 0) == 0 && valid.empty()) {
            for (const auto& part : split(line.substr(14), ',')) valid.push_back(trim(part));
        } else if (line.rfind("Depths: ", 0) == 0 && width == 0) {
            width = std::strtoul(line.c_str() + 8, nullptr, 10);
        } else if (line.rfind("depth ", 0) == 0) {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            const std::string idx_text = trim(line.substr(6, colon - 6));
            if (idx_text.empty() || idx_text.size() > 9 ||
                idx_text.find_first_not_of("0123456789") != std::string::npos)
                continue;
            const std::size_t idx = std::stoul(idx_text);
            auto& h = hints[idx];
            if (h.nearest.empty()) h.nearest = bracket(line, "nearest");
            if (h.argmax.empty()) h.argmax = bracket(line, "argmax");
            if (h.candidates.empty()) {
                const std::string packed = bracket(line, "candidates");
                if (!packed.empty())
                    for (const auto& part : split(packed, '|')) h.candidates.push_back(trim(part));
            }
        }
    }
    if (valid.empty() || width == 0) return "cannot answer: prompt lacks the window preamble";

    std::map<std::string, std::size_t> valid_index;
    for (std::size_t i = 0; i < valid.size(); ++i) valid_index[lower(valid[i])] = i;
    auto resolve = [&](const std::string& name) -> int {
        auto it = valid_index.find(lower(trim(name)));
        return it == valid_index.end() ? -1 : static_cast<int>(it->second);
    };

    std::ostringstream os;
    os << "Reading the evidence hints for each depth.\n```\n";
    for (std::size_t i = 0; i < width; ++i) {
        int choice = -1;
        auto it = hints.find(i);
        if (it != hints.end()) {
            if (int r = resolve(it->second.nearest); r >= 0) choice = r;
            if (choice < 0 && !it->second.candidates.empty()) {
                std::map<int, std::size_t> counts;
                for (const auto& c : it->second.candidates)
                    if (int r = resolve(c); r >= 0) ++counts[r];
                std::size_t best = 0;
                for (const auto& [lab, n] : counts) best = std::max(best, n);
                std::vector<int> tied;
                for (const auto& [lab, n] : counts)
                    if (n == best && best > 0) tied.push_back(lab);
                if (tied.size() == 1) choice = tied[0];
                else if (tied.size() > 1)
                    choice = tied[fnv1a64(std::to_string(call_seed) + ":" + std::to_string(i)) %
                                  tied.size()];
            }
            if (choice < 0)
                if (int r = resolve(it->second.argmax); r >= 0) choice = r;
        }
        if (choice < 0)
            choice = static_cast<int>(
                fnv1a64(std::to_string(call_seed) + ":" + std::to_string(i)) % valid.size());
        os << i << ": " << valid[static_cast<std::size_t>(choice)] << "\n";
    }
    os << "```\n";
    return os.str();
}

HttpBackend::HttpBackend(std::string url, std::string model, std::string api_key,
                         int max_attempts, int backoff_ms)
    : model_(std::move(model)), api_key_(std::move(api_key)), max_attempts_(max_attempts),
      backoff_ms_(backoff_ms) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("backend URL needs a scheme: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme == "https")
        throw ConfigError("https endpoints need a TLS-enabled build; use http");
    if (scheme != "http") throw ConfigError("unsupported backend URL scheme: " + scheme);
    const auto path_at = url.find('/', scheme_end + 3);
    if (path_at == std::string::npos) {
        scheme_host_ = url;
        path_ = "/v1/chat/completions";
    } else {
        scheme_host_ = url.substr(0, path_at);
        path_ = url.substr(path_at);
    }
    if (model_.empty()) throw ConfigError("backend model name is empty");
    if (max_attempts_ < 1) throw ConfigError("backend attempts must be >= 1");
}

std::string HttpBackend::complete(const std::string& system_text, const std::string& user_text,
                                  const SamplingParams& params, std::uint64_t call_seed) {
    json body;
    body["model"] = model_;
    body["messages"] = {{{"role", "system"}, {"content", system_text}},
                        {{"role", "user"}, {"content", user_text}}};
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    body["max_tokens"] = params.max_tokens;
    body["seed"] = call_seed;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    std::string last_error;
    for (int attempt = 0; attempt < max_attempts_; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_ms_ * (1l << (attempt - 1))));
        httplib::Client client(scheme_host_);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(120, 0);
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status == 200) {
            try {
                json reply = json::parse(res->body);
                return reply.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const json::exception& e) {
                throw BackendError(std::string("malformed completion response: ") + e.what());
            }
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        throw BackendError("backend returned status " + std::to_string(res->status) + ": " +
                           res->body.substr(0, 200));
    }
    throw BackendError("backend unreachable after " + std::to_string(max_attempts_) +
                       " attempts; last error: " + last_error);
}

std::unique_ptr<HttpBackend> make_http_backend_from_env(int max_attempts, int backoff_ms) {
    const char* url = std::getenv("LITHOROUTE_API_URL");
    const char* model = std::getenv("LITHOROUTE_MODEL");
    const char* key = std::getenv("LITHOROUTE_API_KEY");
    if (!url || !*url)
        throw ConfigError("backend.kind = remote needs LITHOROUTE_API_URL in the environment");
    if (!model || !*model)
        throw ConfigError("backend.kind = remote needs LITHOROUTE_MODEL in the environment");
    return std::make_unique<HttpBackend>(url, model, key ? key : "", max_attempts, backoff_ms);
}

CachingBackend::CachingBackend(ReasonerBackend& inner, std::string cache_dir)
    : inner_(inner), dir_(std::move(cache_dir)) {
    fs::create_directories(dir_);
}

std::string CachingBackend::complete(const std::string& system_text, const std::string& user_text,
                                     const SamplingParams& params, std::uint64_t call_seed) {
    const char sep = '\x1f';
    std::string key_material = inner_.kind();
    key_material += sep + format_full(params.temperature);
    key_material += sep + format_full(params.top_p);
    key_material += sep + std::to_string(params.max_tokens);
    key_material += sep + std::to_string(call_seed);
    key_material += sep + system_text;
    key_material += sep + user_text;
    const std::string key = to_hex(fnv1a64(key_material));
    const fs::path path = fs::path(dir_) / (key + ".json");

    {
        std::lock_guard<std::mutex> lock(mu_);
        if (fs::exists(path)) {
            try {
                json j = json::parse(read_text_file(path.string()));
                if (j.at("system").get<std::string>() == system_text &&
                    j.at("user").get<std::string>() == user_text &&
                    j.at("seed").get<std::uint64_t>() == call_seed) {
                    ++hits_;
                    return j.at("completion").get<std::string>();
                }
            } catch (const std::exception&) {
                // Corrupt entry: fall through and re-query.
            }
        }
    }

    const std::string completion = inner_.complete(system_text, user_text, params, call_seed);

    json j;
    j["backend"] = inner_.kind();
    j["temperature"] = params.temperature;
    j["top_p"] = params.top_p;
    j["max_tokens"] = params.max_tokens;
    j["seed"] = call_seed;
    j["system"] = system_text;
    j["user"] = user_text;
    j["completion"] = completion;
    {
        std::lock_guard<std::mutex> lock(mu_);
        write_text_file(path.string(), j.dump());
        ++misses_;
    }
    return completion;
}

std::vector<int> base_argmax_labels(const EvidenceProfile& profile) {
    std::vector<int> labels;
    labels.reserve(profile.base_probs.size());
    for (const auto& probs : profile.base_probs) {
        auto it = std::max_element(probs.begin(), probs.end());
        labels.push_back(static_cast<int>(it - probs.begin()));
    }
    return labels;
}

std::string completion_rationale(const std::string& completion) {
    const auto lines = split_lines(completion);
    std::size_t begin = 0, end = 0;
    std::string text;
    if (last_fenced_block(lines, &begin, &end)) {
        for (std::size_t i = 0; i + 1 < begin; ++i) text += lines[i] + "\n";
    } else {
        text = completion;
    }
    std::string trimmed = trim(text);
    if (trimmed.size() > 600) trimmed = trimmed.substr(0, 600) + "...";
    return trimmed;
}

CandidatePrediction infer_persona(ReasonerBackend& backend, const Persona& persona,
                                  const EvidenceProfile& profile, const LabelSchema& schema,
                                  const SamplingParams& params, std::size_t char_budget) {
    params.validate();
    const auto render = render_persona_prompt(persona, profile, schema, char_budget);
    const std::size_t width = profile.width();

    CandidatePrediction cand;
    cand.persona = persona.name;

    std::vector<std::vector<int>> parsed;
    std::string first_parsed_text;
    for (std::size_t vote = 0; vote < params.votes; ++vote) {
        const std::string tag =
            std::to_string(params.seed) + ":" + persona.name + ":" + std::to_string(vote);
        std::string text =
            backend.complete(render.system_text, render.user_text, params, fnv1a64(tag));
        cand.raw_completions.push_back(text);
        std::string err;
        auto labels = parse_answer_block(text, schema, width, &err);
        if (!labels) {
            text = backend.complete(render.system_text,
                                    render.user_text + format_reminder(width), params,
                                    fnv1a64(tag + ":retry"));
            cand.raw_completions.push_back(text);
            labels = parse_answer_block(text, schema, width, &err);
        }
        if (labels) {
            if (parsed.empty()) first_parsed_text = text;
            parsed.push_back(std::move(*labels));
        } else {
            ++cand.failed_votes;
        }
    }

    if (parsed.empty()) {
        cand.parse_ok = false;
        cand.labels = base_argmax_labels(profile);
        cand.note = "all " + std::to_string(params.votes) +
                    " completions unparseable; labels fall back to the base argmax";
        return cand;
    }

    cand.parse_ok = true;
    cand.rationale = completion_rationale(first_parsed_text);
    if (cand.failed_votes > 0)
        cand.note = std::to_string(cand.failed_votes) + " of " + std::to_string(params.votes) +
                    " completions unparseable; majority taken over the rest";

    cand.labels.resize(width);
    const std::size_t k = schema.num_classes();
    for (std::size_t d = 0; d < width; ++d) {
        std::vector<std::size_t> counts(k, 0);
        for (const auto& labels : parsed) ++counts[static_cast<std::size_t>(labels[d])];
        int best = -1;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            if (best < 0 || counts[c] > counts[static_cast<std::size_t>(best)] ||
                (counts[c] == counts[static_cast<std::size_t>(best)] &&
                 profile.base_probs[d][c] > profile.base_probs[d][static_cast<std::size_t>(best)]))
                best = static_cast<int>(c);
        }
        cand.labels[d] = best;
    }
    return cand;
}

std::vector<CandidatePrediction> run_panel(ReasonerBackend& backend,
                                           const EvidenceProfile& profile,
                                           const LabelSchema& schema, const SamplingParams& params,
                                           const std::vector<Persona>& personas,
                                           std::size_t char_budget) {
    if (personas.empty()) throw ConfigError("the reasoning panel selects no personas");
    std::vector<CandidatePrediction> out;
    out.reserve(personas.size());
    for (const auto& persona : personas)
        out.push_back(infer_persona(backend, persona, profile, schema, params, char_budget));
    return out;
}

}  // namespace lithoroute
