#include "lithoroute/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "lithoroute/common.hpp"

namespace lithoroute {

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
    const std::string v = lower(value);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError(key + " wants a boolean, got '" + value + "'");
}

double parse_real(const std::string& key, const std::string& value) {
    const char* p = value.c_str();
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p || *end != '\0')
        throw ConfigError(key + " wants a number, got '" + value + "'");
    return v;
}

std::uint64_t parse_count(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(key + " wants a non-negative integer, got '" + value + "'");
    return std::strtoull(value.c_str(), nullptr, 10);
}

std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> out;
    for (const auto& part : split(value, ',')) {
        const std::string item = trim(part);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"data.csv", [](PipelineConfig& c, const std::string&, const std::string& v) { c.data_csv = v; }},
        {"data.mapping", [](PipelineConfig& c, const std::string&, const std::string& v) { c.data_mapping = v; }},
        {"data.kb", [](PipelineConfig& c, const std::string&, const std::string& v) { c.data_kb = v; }},
        {"data.guidelines", [](PipelineConfig& c, const std::string&, const std::string& v) { c.data_guidelines = v; }},
        {"split.train", [](PipelineConfig& c, const std::string&, const std::string& v) { c.split.train_wells = parse_list(v); }},
        {"split.val", [](PipelineConfig& c, const std::string&, const std::string& v) { c.split.val_wells = parse_list(v); }},
        {"split.test", [](PipelineConfig& c, const std::string&, const std::string& v) { c.split.test_wells = parse_list(v); }},
        {"base.model", [](PipelineConfig& c, const std::string&, const std::string& v) { c.base_model = lower(v); }},
        {"base.window", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.window = parse_count(k, v); }},
        {"base.hidden", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.hidden = parse_count(k, v); }},
        {"base.learning_rate", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.learning_rate = parse_real(k, v); }},
        {"base.epochs", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.epochs = parse_count(k, v); }},
        {"base.batch_size", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = parse_count(k, v); }},
        {"base.patience", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.train.patience = parse_count(k, v); }},
        {"routing.tau", [](PipelineConfig& c, const std::string& k, const std::string& v) {
             if (lower(v) == "auto") c.tau.reset();
             else c.tau = parse_real(k, v);
         }},
        {"routing.epsilon", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.epsilon = parse_real(k, v); }},
        {"routing.grid", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.grid = parse_count(k, v); }},
        {"tools.knowledge", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.tools.knowledge = parse_bool(k, v); }},
        {"tools.trend", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.tools.trend = parse_bool(k, v); }},
        {"tools.neighbors", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.tools.neighbors = parse_bool(k, v); }},
        {"tools.history", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.tools.history = parse_bool(k, v); }},
        {"tools.delta", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.delta = parse_count(k, v); }},
        {"tools.k", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.k = parse_count(k, v); }},
        {"tools.h", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.h = parse_count(k, v); }},
        {"reasoning.window", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.reasoning_window = parse_count(k, v); }},
        {"reasoning.personas", [](PipelineConfig& c, const std::string&, const std::string& v) { c.personas = parse_list(v); }},
        {"reasoning.prompt_budget", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.prompt_budget = parse_count(k, v); }},
        {"sampling.temperature", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.sampling.temperature = parse_real(k, v); }},
        {"sampling.top_p", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.sampling.top_p = parse_real(k, v); }},
        {"sampling.max_tokens", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.sampling.max_tokens = parse_count(k, v); }},
        {"sampling.votes", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.sampling.votes = parse_count(k, v); }},
        {"backend.kind", [](PipelineConfig& c, const std::string&, const std::string& v) { c.backend_kind = lower(v); }},
        {"backend.attempts", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.backend_attempts = static_cast<int>(parse_count(k, v)); }},
        {"backend.backoff_ms", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.backend_backoff_ms = static_cast<int>(parse_count(k, v)); }},
        {"refine.mode", [](PipelineConfig& c, const std::string&, const std::string& v) { c.refine_mode = lower(v); }},
        {"refine.min_run", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.min_run = parse_count(k, v); }},
        {"run.dir", [](PipelineConfig& c, const std::string&, const std::string& v) { c.run_dir = v; }},
        {"run.seed", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.seed = parse_count(k, v); }},
        {"run.parallelism", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.parallelism = parse_count(k, v); }},
    };
    return table;
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    std::vector<std::string> seen;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section '" +
                                  t + "'");
            section = lower(trim(t.substr(1, t.size() - 2)));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value, got '" +
                              t + "'");
        if (section.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": key before any [section]");
        const std::string key = section + "." + lower(trim(t.substr(0, eq)));
        const std::string value = trim(t.substr(eq + 1));
        auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError("unknown config key: " + key);
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw ConfigError("duplicate config key: " + key);
        seen.push_back(key);
        it->second(cfg, key, value);
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path));
}

void apply_override(PipelineConfig& config, const std::string& dotted_key,
                    const std::string& value) {
    auto it = setters().find(lower(trim(dotted_key)));
    if (it == setters().end()) throw ConfigError("unknown config key: " + dotted_key);
    it->second(config, dotted_key, trim(value));
}

void PipelineConfig::validate() const {
    if (base_model != "mlp" && base_model != "centroid")
        throw ConfigError("base.model must be mlp or centroid, got '" + base_model + "'");
    effective_train().validate();
    if (tau && (!(*tau >= 0.0) || *tau > 1.0))
        throw ConfigError("routing.tau must be in [0, 1] or auto");
    if (!(epsilon >= 0.0) || epsilon > 1.0)
        throw ConfigError("routing.epsilon must be in [0, 1]");
    if (grid < 2) throw ConfigError("routing.grid must be >= 2");
    if (k < 1) throw ConfigError("tools.k must be >= 1");
    if (h < 1) throw ConfigError("tools.h must be >= 1");
    if (reasoning_window < 1) throw ConfigError("reasoning.window must be >= 1");
    panel();
    effective_sampling().validate();
    if (backend_kind != "mock" && backend_kind != "remote")
        throw ConfigError("backend.kind must be mock or remote, got '" + backend_kind + "'");
    if (backend_attempts < 1) throw ConfigError("backend.attempts must be >= 1");
    if (backend_backoff_ms < 0) throw ConfigError("backend.backoff_ms must be >= 0");
    if (refine_mode != "llm" && refine_mode != "deterministic" && refine_mode != "off")
        throw ConfigError("refine.mode must be llm, deterministic, or off, got '" + refine_mode +
                          "'");
    if (min_run < 1) throw ConfigError("refine.min_run must be >= 1");
    if (parallelism < 1) throw ConfigError("run.parallelism must be >= 1");
    if (run_dir.empty()) throw ConfigError("run.dir must not be empty");
}

TrainConfig PipelineConfig::effective_train() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

SamplingParams PipelineConfig::effective_sampling() const {
    SamplingParams s = sampling;
    s.seed = seed;
    return s;
}

std::vector<Persona> PipelineConfig::panel() const {
    if (personas.empty()) throw ConfigError("reasoning.personas selects no personas");
    std::vector<Persona> out;
    for (const auto& name : personas) {
        const Persona& p = persona_by_name(name);
        for (const auto& existing : out)
            if (existing.name == p.name)
                throw ConfigError("reasoning.personas lists " + p.name + " twice");
        out.push_back(p);
    }
    return out;
}

std::map<std::string, std::string> PipelineConfig::to_key_values() const {
    std::map<std::string, std::string> kv;
    kv["data.csv"] = data_csv;
    kv["data.mapping"] = data_mapping;
    kv["data.kb"] = data_kb;
    kv["data.guidelines"] = data_guidelines;
    kv["split.train"] = join_list(split.train_wells);
    kv["split.val"] = join_list(split.val_wells);
    kv["split.test"] = join_list(split.test_wells);
    kv["base.model"] = base_model;
    kv["base.window"] = std::to_string(train.window);
    kv["base.hidden"] = std::to_string(train.hidden);
    kv["base.learning_rate"] = format_full(train.learning_rate);
    kv["base.epochs"] = std::to_string(train.epochs);
    kv["base.batch_size"] = std::to_string(train.batch_size);
    kv["base.patience"] = std::to_string(train.patience);
    kv["routing.tau"] = tau ? format_full(*tau) : "auto";
    kv["routing.epsilon"] = format_full(epsilon);
    kv["routing.grid"] = std::to_string(grid);
    kv["tools.knowledge"] = tools.knowledge ? "true" : "false";
    kv["tools.trend"] = tools.trend ? "true" : "false";
    kv["tools.neighbors"] = tools.neighbors ? "true" : "false";
    kv["tools.history"] = tools.history ? "true" : "false";
    kv["tools.delta"] = std::to_string(delta);
    kv["tools.k"] = std::to_string(k);
    kv["tools.h"] = std::to_string(h);
    kv["reasoning.window"] = std::to_string(reasoning_window);
    kv["reasoning.personas"] = join_list(personas);
    kv["reasoning.prompt_budget"] = std::to_string(prompt_budget);
    kv["sampling.temperature"] = format_full(sampling.temperature);
    kv["sampling.top_p"] = format_full(sampling.top_p);
    kv["sampling.max_tokens"] = std::to_string(sampling.max_tokens);
    kv["sampling.votes"] = std::to_string(sampling.votes);
    kv["backend.kind"] = backend_kind;
    kv["backend.attempts"] = std::to_string(backend_attempts);
    kv["backend.backoff_ms"] = std::to_string(backend_backoff_ms);
    kv["refine.mode"] = refine_mode;
    kv["refine.min_run"] = std::to_string(min_run);
    kv["run.dir"] = run_dir;
    kv["run.seed"] = std::to_string(seed);
    kv["run.parallelism"] = std::to_string(parallelism);
    return kv;
}

std::string PipelineConfig::subset_hash(const std::vector<std::string>& prefixes) const {
    const auto kv = to_key_values();
    std::uint64_t h = fnv1a64("config-subset");
    for (const auto& [key, value] : kv) {
        bool wanted = false;
        for (const auto& prefix : prefixes)
            if (key.rfind(prefix, 0) == 0) {
                wanted = true;
                break;
            }
        if (wanted) h = fnv1a64(key + "=" + value + "\n", h);
    }
    return to_hex(h);
}

}  // namespace lithoroute
