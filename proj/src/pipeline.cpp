#include "lithoroute/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "lithoroute/classifier.hpp"
#include "lithoroute/common.hpp"
#include "lithoroute/evidence.hpp"
#include "lithoroute/refinement.hpp"
#include "lithoroute/router.hpp"
#include "lithoroute/well_log.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace lithoroute {

namespace {

// Stage identity: the dotted-key prefixes each stage's directory hash covers.
// run.dir and run.parallelism never enter a hash, so moving or parallelizing
// a run cannot change which artifacts it finds; backend retry knobs stay out
// for the same reason.
const std::vector<std::string> kIngestKeys = {"data.csv", "data.mapping", "split."};
const std::vector<std::string> kTrainKeys = {"data.csv", "data.mapping", "split.",
                                             "base.",    "run.seed"};
const std::vector<std::string> kCalibrateKeys = {"data.csv", "data.mapping",    "split.",
                                                 "base.",    "run.seed",        "routing.epsilon",
                                                 "routing.grid"};
const std::vector<std::string> kClassifyKeys = {
    "data.csv",  "data.mapping", "split.",       "base.",     "run.seed",
    "routing.",  "tools.",       "reasoning.",   "sampling.", "backend.kind",
    "refine.",   "data.kb",      "data.guidelines"};

bool key_matches(const std::string& key, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
        if (key.rfind(p, 0) == 0) return true;
    return false;
}

std::string sanitize_id(const std::string& id) {
    std::string out;
    for (char c : id)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out;
}

std::string now_iso_utc() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string file_hash(const std::string& path) { return to_hex(fnv1a64(read_text_file(path))); }

enum class StageState { kNew, kComplete, kIncomplete };

// A run directory is immutable evidence of one configuration. Finding one
// whose manifest disagrees on any identity key means a hash collision or
// outside tampering, and both abort rather than overwrite.
StageState prepare_stage(const std::string& dir, const std::string& command,
                         const PipelineConfig& cfg, const std::vector<std::string>& prefixes,
                         const std::vector<std::string>& required_files, bool resumable) {
    const std::string manifest_path = dir + "/manifest.json";
    if (!fs::exists(manifest_path)) {
        fs::create_directories(dir);
        return StageState::kNew;
    }
    json m;
    try {
        m = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw ArtifactError("manifest at " + manifest_path + " is unreadable: " + e.what());
    }
    const std::string stored_command = m.value("command", std::string());
    if (stored_command != command)
        throw ArtifactError("run directory " + dir + " belongs to command '" + stored_command +
                            "', not '" + command + "'");
    const json stored = m.value("config", json::object());
    for (const auto& [key, value] : cfg.to_key_values()) {
        if (!key_matches(key, prefixes)) continue;
        const std::string have = stored.value(key, std::string());
        if (have != value)
            throw ArtifactError("run directory " + dir + " was produced with " + key + " = '" +
                                have + "'; refusing to overwrite (current '" + value + "')");
    }
    bool complete = !(resumable && fs::exists(dir + "/RESUME"));
    for (const auto& f : required_files)
        if (!fs::exists(dir + "/" + f)) complete = false;
    return complete ? StageState::kComplete : StageState::kIncomplete;
}

void write_manifest(const std::string& dir, const std::string& command, const PipelineConfig& cfg,
                    const std::map<std::string, std::string>& inputs,
                    const std::map<std::string, std::string>& summary) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["created"] = now_iso_utc();
    m["config"] = json::object();
    for (const auto& [key, value] : cfg.to_key_values()) m["config"][key] = value;
    m["inputs"] = json::object();
    for (const auto& [key, value] : inputs) m["inputs"][key] = value;
    m["summary"] = json::object();
    for (const auto& [key, value] : summary) m["summary"][key] = value;
    write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
    std::map<std::string, std::string> kv;
    std::istringstream is(read_text_file(path));
    std::string line;
    while (std::getline(is, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) continue;
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

const std::string& kv_get(const std::map<std::string, std::string>& kv, const std::string& key,
                          const std::string& path) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ArtifactError(path + " lacks key " + key);
    return it->second;
}

double kv_real(const std::map<std::string, std::string>& kv, const std::string& key,
               const std::string& path) {
    const std::string& v = kv_get(kv, key, path);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ArtifactError(path + " holds unparseable " + key + " = '" + v + "'");
    return out;
}

std::size_t kv_count(const std::map<std::string, std::string>& kv, const std::string& key,
                     const std::string& path) {
    const std::string& v = kv_get(kv, key, path);
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw ArtifactError(path + " holds unparseable " + key + " = '" + v + "'");
    return std::strtoull(v.c_str(), nullptr, 10);
}

int argmax(const ProbabilityVector& probs) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < probs.size(); ++k)
        if (probs[k] > probs[best]) best = k;
    return static_cast<int>(best);
}

DatasetBundle load_bundle_checked(const PipelineConfig& cfg) {
    return load_bundle(ingest_dir(cfg) + "/bundle");
}

std::unique_ptr<BaseClassifier> load_model_checked(const PipelineConfig& cfg) {
    const std::string path = train_dir(cfg) + "/model.txt";
    if (!fs::exists(path))
        throw ArtifactError("no trained model at " + path + "; run train-base first");
    return load_model(path);
}

// Per-depth probabilities for a whole well: tile the normalized sequence with
// model-width windows; the truncated tail window recomputes its depths with
// tail context and wins.
std::vector<ProbabilityVector> well_probabilities(const BaseClassifier& model,
                                                  const WellLogSequence& normalized) {
    std::vector<ProbabilityVector> probs(normalized.length());
    const std::size_t width = model.window_width();
    for (const auto& w : make_windows(normalized, width, width)) {
        auto wp = model.predict_proba(w);
        for (std::size_t j = 0; j < wp.size(); ++j) probs[w.start + j] = std::move(wp[j]);
    }
    return probs;
}

double resolve_tau(const PipelineConfig& cfg) {
    if (cfg.tau) return *cfg.tau;
    const std::string path = calibrate_dir(cfg) + "/calibration.txt";
    if (!fs::exists(path))
        throw ArtifactError("no calibration at " + path +
                            "; run calibrate first (or set routing.tau)");
    return kv_real(read_key_values(path), "tau_star", path);
}

}  // namespace

std::string ingest_dir(const PipelineConfig& cfg) {
    return cfg.run_dir + "/ingest_" + cfg.subset_hash(kIngestKeys);
}

std::string train_dir(const PipelineConfig& cfg) {
    return cfg.run_dir + "/train_base_" + cfg.subset_hash(kTrainKeys);
}

std::string calibrate_dir(const PipelineConfig& cfg) {
    return cfg.run_dir + "/calibrate_" + cfg.subset_hash(kCalibrateKeys);
}

std::string classify_dir(const PipelineConfig& cfg) {
    return cfg.run_dir + "/classify_" + cfg.subset_hash(kClassifyKeys);
}

IngestResult cmd_ingest(const PipelineConfig& cfg) {
    cfg.validate();
    if (cfg.data_csv.empty()) throw ConfigError("data.csv is required");
    if (cfg.data_mapping.empty()) throw ConfigError("data.mapping is required");
    if (cfg.split.train_wells.empty()) throw ConfigError("split.train names no wells");

    const std::string dir = ingest_dir(cfg);
    const StageState state = prepare_stage(dir, "ingest", cfg, kIngestKeys,
                                           {"bundle/schema.txt", "ingest_report.txt"}, false);
    IngestResult result;
    result.dir = dir;
    if (state == StageState::kComplete) {
        const std::string report = dir + "/ingest_report.txt";
        const auto kv = read_key_values(report);
        result.wells = kv_count(kv, "wells", report);
        result.rows = kv_count(kv, "rows", report);
        result.classes = kv_count(kv, "classes", report);
        result.imputed_cells = kv_count(kv, "imputed_cells", report);
        result.reused = true;
        return result;
    }

    const ColumnMapping mapping = load_column_mapping(cfg.data_mapping);
    LoadResult loaded = load_dataset(cfg.data_csv, mapping);
    if (loaded.schema.num_classes() == 0)
        throw SchemaError("dataset carries no labels; the mapping needs a label role");
    std::vector<std::string> known;
    for (const auto& seq : loaded.sequences) known.push_back(seq.well_id);
    cfg.split.validate(known);

    DatasetBundle bundle;
    bundle.schema = loaded.schema;
    std::vector<WellLogSequence> train;
    for (const auto& id : cfg.split.train_wells)
        for (const auto& seq : loaded.sequences)
            if (seq.well_id == id) train.push_back(seq);
    bundle.stats = fit_normalization(train);
    bundle.sequences = std::move(loaded.sequences);

    std::size_t rows = 0;
    for (const auto& seq : bundle.sequences) rows += seq.length();
    result.wells = bundle.sequences.size();
    result.rows = rows;
    result.classes = bundle.schema.num_classes();
    result.imputed_cells = loaded.imputed_cells;

    if (state == StageState::kNew) {
        write_manifest(dir, "ingest", cfg,
                       {{"csv", file_hash(cfg.data_csv)}, {"mapping", file_hash(cfg.data_mapping)}},
                       {{"wells", std::to_string(result.wells)},
                        {"rows", std::to_string(result.rows)},
                        {"classes", std::to_string(result.classes)},
                        {"imputed_cells", std::to_string(result.imputed_cells)}});
    }
    save_bundle(dir + "/bundle", bundle);

    auto role_of = [&](const std::string& id) {
        auto in = [&](const std::vector<std::string>& part) {
            return std::find(part.begin(), part.end(), id) != part.end();
        };
        if (in(cfg.split.train_wells)) return "train";
        if (in(cfg.split.val_wells)) return "val";
        if (in(cfg.split.test_wells)) return "test";
        return "unused";
    };
    std::ostringstream report;
    report << "wells = " << result.wells << "\n";
    report << "rows = " << result.rows << "\n";
    report << "classes = " << result.classes << "\n";
    report << "channels = " << bundle.stats.channel_names.size() << "\n";
    report << "imputed_cells = " << result.imputed_cells << "\n\n";
    for (const auto& seq : bundle.sequences)
        report << "well " << seq.well_id << ": rows=" << seq.length()
               << " role=" << role_of(seq.well_id) << "\n";
    write_text_file(dir + "/ingest_report.txt", report.str());
    return result;
}

TrainBaseResult cmd_train_base(const PipelineConfig& cfg) {
    cfg.validate();
    const std::string dir = train_dir(cfg);
    const StageState state =
        prepare_stage(dir, "train_base", cfg, kTrainKeys, {"model.txt", "train_report.txt"}, false);
    TrainBaseResult result;
    result.dir = dir;
    if (state == StageState::kComplete) {
        const std::string report = dir + "/train_report.txt";
        const auto kv = read_key_values(report);
        result.kind = kv_get(kv, "kind", report);
        result.best_epoch = kv_count(kv, "best_epoch", report);
        result.best_val_f1 = kv_real(kv, "best_val_f1", report);
        result.reused = true;
        return result;
    }

    const DatasetBundle bundle = load_bundle_checked(cfg);
    const TrainConfig train_cfg = cfg.effective_train();
    auto windows_for = [&](const std::vector<std::string>& wells) {
        std::vector<DepthWindow> out;
        for (const auto& id : wells) {
            const WellLogSequence norm = normalize(bundle.well(id), bundle.stats);
            auto ws = make_windows(norm, train_cfg.window, train_cfg.window);
            out.insert(out.end(), std::make_move_iterator(ws.begin()),
                       std::make_move_iterator(ws.end()));
        }
        return out;
    };
    const auto train_windows = windows_for(cfg.split.train_wells);
    const auto val_windows = windows_for(cfg.split.val_wells);

    TrainResult tr = cfg.base_model == "mlp"
                         ? train_mlp(train_windows, val_windows, bundle.schema, train_cfg)
                         : train_centroid(train_windows, val_windows, bundle.schema, train_cfg);

    result.kind = tr.model->kind();
    result.best_epoch = tr.best_epoch;
    result.best_val_f1 = tr.best_val_f1;

    if (state == StageState::kNew) {
        write_manifest(dir, "train_base", cfg, {{"bundle", to_hex(bundle.content_hash())}},
                       {{"kind", result.kind},
                        {"best_epoch", std::to_string(result.best_epoch)},
                        {"best_val_f1", format_full(result.best_val_f1)},
                        {"epochs_run", std::to_string(tr.val_f1_per_epoch.size())}});
    }
    tr.model->save(dir + "/model.txt");

    std::ostringstream report;
    report << "kind = " << result.kind << "\n";
    report << "classes = " << bundle.schema.num_classes() << "\n";
    report << "channels = " << bundle.stats.channel_names.size() << "\n";
    report << "window = " << train_cfg.window << "\n";
    report << "epochs_run = " << tr.val_f1_per_epoch.size() << "\n";
    report << "best_epoch = " << result.best_epoch << "\n";
    report << "best_val_f1 = " << format_full(result.best_val_f1) << "\n\n";
    report << "epoch val_weighted_f1\n";
    for (std::size_t e = 0; e < tr.val_f1_per_epoch.size(); ++e)
        report << e << " " << format_full(tr.val_f1_per_epoch[e]) << "\n";
    write_text_file(dir + "/train_report.txt", report.str());
    return result;
}

CalibrateResult cmd_calibrate(const PipelineConfig& cfg) {
    cfg.validate();
    const std::string dir = calibrate_dir(cfg);
    const StageState state = prepare_stage(dir, "calibrate", cfg, kCalibrateKeys,
                                           {"calibration.txt", "coverage_curve.csv"}, false);
    CalibrateResult result;
    result.dir = dir;
    if (state == StageState::kComplete) {
        const std::string path = dir + "/calibration.txt";
        const auto kv = read_key_values(path);
        result.tau_star = kv_real(kv, "tau_star", path);
        result.accuracy_at_tau = kv_real(kv, "accuracy_at_tau", path);
        result.coverage_at_tau = kv_real(kv, "coverage_at_tau", path);
        result.calibration_size = kv_count(kv, "calibration_size", path);
        result.reused = true;
        return result;
    }

    if (cfg.split.val_wells.empty())
        throw ConfigError("split.val names no wells; calibration needs held-out depths");
    const DatasetBundle bundle = load_bundle_checked(cfg);
    const auto model = load_model_checked(cfg);

    std::vector<double> confidences;
    std::vector<bool> correct;
    for (const auto& id : cfg.split.val_wells) {
        const WellLogSequence& raw = bundle.well(id);
        if (!raw.labels) throw DataError("well " + id + " carries no labels to calibrate on");
        const auto probs = well_probabilities(*model, normalize(raw, bundle.stats));
        for (std::size_t i = 0; i < probs.size(); ++i) {
            confidences.push_back(confidence(probs[i]));
            correct.push_back(argmax(probs[i]) == (*raw.labels)[i]);
        }
    }
    const CoverageCurve curve =
        coverage_curve(confidences, correct, default_threshold_grid(cfg.grid));
    const ThresholdCalibration cal = calibrate_threshold(curve, cfg.epsilon);

    result.tau_star = cal.tau_star;
    result.accuracy_at_tau = cal.accuracy_at_tau;
    result.coverage_at_tau = cal.coverage_at_tau;
    result.calibration_size = cal.calibration_size;

    if (state == StageState::kNew) {
        write_manifest(dir, "calibrate", cfg,
                       {{"bundle", to_hex(bundle.content_hash())},
                        {"model", file_hash(train_dir(cfg) + "/model.txt")}},
                       {{"tau_star", format_full(result.tau_star)},
                        {"epsilon", format_full(cfg.epsilon)},
                        {"accuracy_at_tau", format_full(result.accuracy_at_tau)},
                        {"coverage_at_tau", format_full(result.coverage_at_tau)},
                        {"calibration_size", std::to_string(result.calibration_size)}});
    }
    write_text_file(dir + "/coverage_curve.csv", coverage_curve_to_csv(curve));
    std::ostringstream text;
    text << "tau_star = " << format_full(result.tau_star) << "\n";
    text << "epsilon = " << format_full(cfg.epsilon) << "\n";
    text << "accuracy_at_tau = " << format_full(result.accuracy_at_tau) << "\n";
    text << "coverage_at_tau = " << format_full(result.coverage_at_tau) << "\n";
    text << "calibration_size = " << result.calibration_size << "\n";
    write_text_file(dir + "/calibration.txt", text.str());
    return result;
}

namespace {

// Everything classify precomputes for one test well before any backend work.
struct WellPlan {
    const WellLogSequence* raw = nullptr;
    WellLogSequence norm;
    std::vector<ProbabilityVector> probs;
    std::vector<int> base;
    std::vector<bool> routed;
};

// Classes worth describing to the panel: the union of each depth's top-2
// base classes, heaviest total probability mass first.
std::vector<int> window_candidate_classes(const std::vector<ProbabilityVector>& probs,
                                          std::size_t s, std::size_t e) {
    const std::size_t K = probs[s].size();
    std::vector<double> mass(K, 0.0);
    std::vector<bool> in(K, false);
    for (std::size_t i = s; i <= e; ++i) {
        for (std::size_t k = 0; k < K; ++k) mass[k] += probs[i][k];
        std::size_t first = 0, second = K;
        for (std::size_t k = 1; k < K; ++k)
            if (probs[i][k] > probs[i][first]) first = k;
        for (std::size_t k = 0; k < K; ++k) {
            if (k == first) continue;
            if (second == K || probs[i][k] > probs[i][second]) second = k;
        }
        in[first] = true;
        if (second < K) in[second] = true;
    }
    std::vector<int> out;
    for (std::size_t k = 0; k < K; ++k)
        if (in[k]) out.push_back(static_cast<int>(k));
    std::stable_sort(out.begin(), out.end(), [&](int a, int b) { return mass[a] > mass[b]; });
    return out;
}

struct ClassifyContext {
    const PipelineConfig* cfg;
    const DatasetBundle* bundle;
    const KnowledgeBase* kb;  // null when tools.knowledge is off
    const GeologyGuidelines* guidelines;
    const ReferenceSet* reference;  // null when tools.neighbors is off
    std::vector<Persona> panel;
    SamplingParams sampling;
    double tau = 0.0;
    ReasonerBackend* backend = nullptr;
};

struct WellOutput {
    std::string evidence_jsonl;
    std::string audit_csv;
};

WellOutput classify_well(const ClassifyContext& ctx, const WellPlan& plan) {
    const PipelineConfig& cfg = *ctx.cfg;
    const LabelSchema& schema = ctx.bundle->schema;
    const WellLogSequence& raw = *plan.raw;
    const std::size_t L = raw.length();

    std::vector<int> final_labels(L, 0);
    std::vector<std::string> method(L);
    std::vector<std::optional<int>> so_far(L);
    std::vector<std::vector<std::string>> persona_cols(ctx.panel.size(),
                                                       std::vector<std::string>(L));
    std::string evidence;

    for (const auto& w : make_windows(raw, cfg.reasoning_window, cfg.reasoning_window)) {
        bool any_routed = false;
        for (std::size_t i = w.start; i <= w.end; ++i) any_routed = any_routed || plan.routed[i];
        if (!any_routed) {
            for (std::size_t i = w.start; i <= w.end; ++i) {
                final_labels[i] = plan.base[i];
                method[i] = "base-passthrough";
                so_far[i] = final_labels[i];
            }
            continue;
        }

        const auto candidate_classes = window_candidate_classes(plan.probs, w.start, w.end);
        std::optional<KnowledgeExcerpt> knowledge;
        if (cfg.tools.knowledge)
            knowledge = kb_lookup(*ctx.kb, schema, raw.channel_names, candidate_classes);
        std::optional<TrendSummary> trend;
        if (cfg.tools.trend) trend = analyze_trend(raw, w.start, w.end, cfg.delta);
        std::optional<std::vector<NeighborSet>> neighbors;
        if (cfg.tools.neighbors) {
            std::vector<NeighborSet> sets;
            std::vector<double> query(plan.norm.num_channels());
            for (std::size_t i = w.start; i <= w.end; ++i) {
                for (std::size_t c = 0; c < query.size(); ++c) query[c] = plan.norm.channels[c][i];
                sets.push_back(retrieve_neighbors(query, *ctx.reference, cfg.k));
            }
            neighbors = std::move(sets);
        }
        std::optional<HistoryWindow> history;
        if (cfg.tools.history) history = gather_history(so_far, w.start, cfg.h, raw.well_id);

        std::vector<ProbabilityVector> window_probs(plan.probs.begin() + w.start,
                                                    plan.probs.begin() + w.end + 1);
        const EvidenceProfile profile =
            build_evidence_profile(w, std::move(window_probs), std::move(knowledge),
                                   std::move(trend), std::move(neighbors), std::move(history),
                                   cfg.tools);
        evidence += profile_to_json(profile) + "\n";

        const auto candidates = run_panel(*ctx.backend, profile, schema, ctx.sampling, ctx.panel,
                                          cfg.prompt_budget);
        std::vector<int> window_labels;
        std::string window_method;
        if (cfg.refine_mode == "llm") {
            RefinedWindow rw = refine_llm(*ctx.backend, profile, candidates, *ctx.guidelines,
                                          schema, ctx.sampling);
            window_labels = std::move(rw.labels);
            window_method = rw.method;
        } else {
            window_labels = candidate_plurality(candidates);
            window_method = "panel";
        }

        for (std::size_t j = 0; j < w.width(); ++j) {
            const std::size_t i = w.start + j;
            for (std::size_t c = 0; c < ctx.panel.size(); ++c)
                persona_cols[c][i] = schema.class_names[candidates[c].labels[j]];
            if (plan.routed[i]) {
                final_labels[i] = window_labels[j];
                method[i] = window_method;
            } else {
                final_labels[i] = plan.base[i];
                method[i] = "base-passthrough";
            }
            so_far[i] = final_labels[i];
        }
    }

    if (cfg.refine_mode == "deterministic") {
        const std::vector<int> smoothed = refine_deterministic(final_labels, cfg.min_run);
        for (std::size_t i = 0; i < L; ++i) {
            if (plan.routed[i] || smoothed[i] != final_labels[i]) method[i] = "deterministic";
        }
        final_labels = smoothed;
    }

    std::ostringstream audit;
    audit << "depth_index,depth,base_label,base_confidence,verdict";
    for (const auto& p : ctx.panel) audit << "," << p.name;
    audit << ",final_label,method\n";
    for (std::size_t i = 0; i < L; ++i) {
        audit << i << "," << format_full(raw.depths[i]) << "," << schema.class_names[plan.base[i]]
              << "," << format_full(confidence(plan.probs[i])) << ","
              << to_string(plan.routed[i] ? Verdict::Reason : Verdict::Base);
        for (std::size_t c = 0; c < ctx.panel.size(); ++c) audit << "," << persona_cols[c][i];
        audit << "," << schema.class_names[final_labels[i]] << "," << method[i] << "\n";
    }
    return {std::move(evidence), audit.str()};
}

}  // namespace

ClassifyResult cmd_classify(const PipelineConfig& cfg, ReasonerBackend* backend_override) {
    cfg.validate();
    if (cfg.split.test_wells.empty())
        throw ConfigError("split.test names no wells to classify");

    const std::string dir = classify_dir(cfg);
    std::vector<std::string> required = {"routing_counts.txt"};
    for (const auto& id : cfg.split.test_wells) {
        required.push_back("audit_" + sanitize_id(id) + ".csv");
        required.push_back("evidence_" + sanitize_id(id) + ".jsonl");
    }
    const StageState state = prepare_stage(dir, "classify", cfg, kClassifyKeys, required, true);
    ClassifyResult result;
    result.dir = dir;
    if (state == StageState::kComplete) {
        const std::string path = dir + "/routing_counts.txt";
        const auto kv = read_key_values(path);
        result.tau = kv_real(kv, "tau", path);
        result.accepted = kv_count(kv, "accepted", path);
        result.routed = kv_count(kv, "routed", path);
        result.total = kv_count(kv, "total", path);
        result.windows_routed = kv_count(kv, "windows_routed", path);
        result.reused = true;
        return result;
    }

    const DatasetBundle bundle = load_bundle_checked(cfg);
    const auto model = load_model_checked(cfg);
    const double tau = resolve_tau(cfg);

    ClassifyContext ctx;
    ctx.cfg = &cfg;
    ctx.bundle = &bundle;
    ctx.sampling = cfg.effective_sampling();
    ctx.panel = cfg.panel();
    ctx.tau = tau;

    KnowledgeBase kb;
    std::map<std::string, std::string> inputs = {
        {"bundle", to_hex(bundle.content_hash())},
        {"model", file_hash(train_dir(cfg) + "/model.txt")}};
    if (!cfg.tau) inputs["calibration"] = file_hash(calibrate_dir(cfg) + "/calibration.txt");
    if (cfg.tools.knowledge) {
        if (cfg.data_kb.empty())
            throw ConfigError("data.kb is required while tools.knowledge is on");
        kb = load_knowledge_base(cfg.data_kb);
        kb.validate_against(bundle.stats.channel_names, bundle.schema);
        ctx.kb = &kb;
        inputs["kb"] = file_hash(cfg.data_kb);
    }
    GeologyGuidelines guidelines;
    if (cfg.data_guidelines.empty()) {
        guidelines = default_guidelines();
        guidelines.min_run = cfg.min_run;
    } else {
        guidelines = load_guidelines(cfg.data_guidelines, cfg.min_run);
        inputs["guidelines"] = file_hash(cfg.data_guidelines);
    }
    guidelines.validate();
    ctx.guidelines = &guidelines;

    ReferenceSet reference;
    if (cfg.tools.neighbors) {
        std::vector<WellLogSequence> normalized_train;
        for (const auto& id : cfg.split.train_wells)
            normalized_train.push_back(normalize(bundle.well(id), bundle.stats));
        reference = build_reference(normalized_train);
        ctx.reference = &reference;
    }

    // Phase one: base probabilities and routing verdicts for every test
    // depth, so the routing summary is known before any file is written.
    std::vector<WellPlan> plans;
    for (const auto& id : cfg.split.test_wells) {
        WellPlan plan;
        plan.raw = &bundle.well(id);
        plan.norm = normalize(*plan.raw, bundle.stats);
        plan.probs = well_probabilities(*model, plan.norm);
        const std::size_t L = plan.raw->length();
        plan.base.resize(L);
        plan.routed.resize(L);
        for (std::size_t i = 0; i < L; ++i) {
            plan.base[i] = argmax(plan.probs[i]);
            const RoutingDecision d = decide(confidence(plan.probs[i]), tau);
            plan.routed[i] = d.verdict == Verdict::Reason;
            ++(plan.routed[i] ? result.routed : result.accepted);
        }
        result.total += L;
        for (const auto& w : make_windows(*plan.raw, cfg.reasoning_window, cfg.reasoning_window)) {
            bool any = false;
            for (std::size_t i = w.start; i <= w.end; ++i) any = any || plan.routed[i];
            if (any) ++result.windows_routed;
        }
        plans.push_back(std::move(plan));
    }
    result.tau = tau;

    if (state == StageState::kNew) {
        write_manifest(dir, "classify", cfg, inputs,
                       {{"tau", format_full(tau)},
                        {"accepted", std::to_string(result.accepted)},
                        {"routed", std::to_string(result.routed)},
                        {"total", std::to_string(result.total)},
                        {"windows_routed", std::to_string(result.windows_routed)}});
    }
    std::ostringstream counts;
    counts << "tau = " << format_full(tau) << "\n";
    counts << "accepted = " << result.accepted << "\n";
    counts << "routed = " << result.routed << "\n";
    counts << "total = " << result.total << "\n";
    counts << "windows_routed = " << result.windows_routed << "\n";
    write_text_file(dir + "/routing_counts.txt", counts.str());

    MockBackend mock;
    std::unique_ptr<HttpBackend> remote;
    ReasonerBackend* inner = backend_override;
    if (!inner) {
        if (cfg.backend_kind == "mock") {
            inner = &mock;
        } else {
            remote = make_http_backend_from_env(cfg.backend_attempts, cfg.backend_backoff_ms);
            inner = remote.get();
        }
    }
    CachingBackend caching(*inner, dir + "/completions");
    ctx.backend = &caching;

    // Phase two: evidence, panel, refinement per well. Wells are independent
    // work items; windows inside a well stay top-down for history.
    const std::size_t n = plans.size();
    std::vector<WellOutput> outputs(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                outputs[i] = classify_well(ctx, plans[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min<std::size_t>(cfg.parallelism, n);
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(work);
        for (auto& t : threads) t.join();
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) continue;
        const std::string id = sanitize_id(cfg.split.test_wells[i]);
        write_text_file(dir + "/evidence_" + id + ".jsonl", outputs[i].evidence_jsonl);
        write_text_file(dir + "/audit_" + id + ".csv", outputs[i].audit_csv);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i]) continue;
        std::string reason = "unknown failure";
        try {
            std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
            reason = e.what();
        } catch (...) {
        }
        write_text_file(dir + "/RESUME", "well " + cfg.split.test_wells[i] +
                                             " is incomplete: " + reason +
                                             "\nre-run classify to resume from the completion "
                                             "log\n");
        std::rethrow_exception(errors[i]);
    }
    fs::remove(dir + "/RESUME");
    return result;
}

EvaluateResult cmd_evaluate(const PipelineConfig& cfg) {
    cfg.validate();
    if (cfg.split.test_wells.empty()) throw ConfigError("split.test names no wells to evaluate");
    const std::string dir = classify_dir(cfg);
    if (!fs::exists(dir + "/routing_counts.txt") || fs::exists(dir + "/RESUME"))
        throw ArtifactError("no finished classification at " + dir + "; run classify first");
    const DatasetBundle bundle = load_bundle_checked(cfg);
    const LabelSchema& schema = bundle.schema;

    ConfusionStats cm(schema.num_classes());
    double flying_mass = 0.0;
    std::size_t depth_count = 0;
    std::map<std::string, double> per_well;
    for (const auto& id : cfg.split.test_wells) {
        const std::string path = dir + "/audit_" + sanitize_id(id) + ".csv";
        if (!fs::exists(path))
            throw ArtifactError("missing audit file " + path + "; run classify first");
        const WellLogSequence& raw = bundle.well(id);
        if (!raw.labels) throw DataError("well " + id + " carries no labels to score");

        std::istringstream is(read_text_file(path));
        std::string line;
        if (!std::getline(is, line)) throw ArtifactError("audit file " + path + " is empty");
        const auto header = split(trim(line), ',');
        std::size_t idx_col = header.size(), label_col = header.size();
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == "depth_index") idx_col = c;
            if (header[c] == "final_label") label_col = c;
        }
        if (idx_col == header.size() || label_col == header.size())
            throw ArtifactError("audit file " + path + " lacks depth_index/final_label columns");

        std::vector<int> finals(raw.length(), -1);
        while (std::getline(is, line)) {
            if (trim(line).empty()) continue;
            const auto fields = split(line, ',');
            if (fields.size() != header.size())
                throw ArtifactError("audit file " + path + " has a malformed row: " + line);
            const std::size_t i = std::strtoull(fields[idx_col].c_str(), nullptr, 10);
            if (i >= finals.size())
                throw ArtifactError("audit file " + path + " indexes depth " + fields[idx_col] +
                                    " beyond well length " + std::to_string(finals.size()));
            const int label = schema.index_of(fields[label_col]);
            if (label < 0)
                throw ArtifactError("audit file " + path + " holds unknown label '" +
                                    fields[label_col] + "'");
            finals[i] = label;
        }
        for (std::size_t i = 0; i < finals.size(); ++i) {
            if (finals[i] < 0)
                throw ArtifactError("audit file " + path + " misses depth " + std::to_string(i));
            cm.accumulate((*raw.labels)[i], finals[i]);
        }
        const double fpr = flying_point_ratio(finals);
        per_well[id] = fpr;
        flying_mass += fpr * static_cast<double>(finals.size());
        depth_count += finals.size();
    }

    MetricsReport report = weighted_metrics(cm);
    report.flying_point_ratio = flying_mass / static_cast<double>(depth_count);
    report.per_well_flying_point = std::move(per_well);
    const std::string counts_path = dir + "/routing_counts.txt";
    const auto counts = read_key_values(counts_path);
    report.accepted = kv_count(counts, "accepted", counts_path);
    report.routed = kv_count(counts, "routed", counts_path);
    const std::size_t total = kv_count(counts, "total", counts_path);
    report.coverage = total ? static_cast<double>(report.accepted) / static_cast<double>(total)
                            : 1.0;

    EvaluateResult result;
    result.dir = dir;
    result.report = report;
    result.text = metrics_to_text(report, schema.class_names);
    write_text_file(dir + "/metrics.txt", result.text);

    json j;
    j["weighted_precision"] = report.weighted_precision;
    j["weighted_recall"] = report.weighted_recall;
    j["weighted_f1"] = report.weighted_f1;
    j["flying_point_ratio"] = report.flying_point_ratio;
    j["coverage"] = report.coverage;
    j["accepted"] = report.accepted;
    j["routed"] = report.routed;
    j["per_class"] = json::array();
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        const ClassMetrics& m = report.per_class[c];
        j["per_class"].push_back({{"name", schema.class_names[c]},
                                  {"precision", m.precision},
                                  {"recall", m.recall},
                                  {"f1", m.f1},
                                  {"support", m.support}});
    }
    j["per_well_flying_point"] = json::object();
    for (const auto& [well, fpr] : report.per_well_flying_point)
        j["per_well_flying_point"][well] = fpr;
    write_text_file(dir + "/metrics.json", j.dump(2) + "\n");
    return result;
}

MetricsReport load_metrics_json(const std::string& path) {
    if (!fs::exists(path))
        throw ArtifactError("no metrics at " + path + "; run evaluate first");
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ArtifactError("metrics file " + path + " is unreadable: " + e.what());
    }
    try {
        MetricsReport report;
        report.weighted_precision = j.at("weighted_precision").get<double>();
        report.weighted_recall = j.at("weighted_recall").get<double>();
        report.weighted_f1 = j.at("weighted_f1").get<double>();
        report.flying_point_ratio = j.at("flying_point_ratio").get<double>();
        report.coverage = j.at("coverage").get<double>();
        report.accepted = j.at("accepted").get<std::size_t>();
        report.routed = j.at("routed").get<std::size_t>();
        for (const auto& c : j.at("per_class")) {
            ClassMetrics m;
            m.precision = c.at("precision").get<double>();
            m.recall = c.at("recall").get<double>();
            m.f1 = c.at("f1").get<double>();
            m.support = c.at("support").get<std::size_t>();
            report.per_class.push_back(m);
        }
        for (const auto& [well, fpr] : j.at("per_well_flying_point").items())
            report.per_well_flying_point[well] = fpr.get<double>();
        return report;
    } catch (const json::exception& e) {
        throw ArtifactError("metrics file " + path + " is malformed: " + e.what());
    }
}

std::string compare_metrics_dirs(const std::vector<std::string>& classify_dirs) {
    if (classify_dirs.empty()) throw ConfigError("compare needs at least one run directory");
    std::vector<std::pair<std::string, MetricsReport>> reports;
    for (const auto& dir : classify_dirs) {
        const std::string name = fs::path(dir).filename().string();
        reports.emplace_back(name.empty() ? dir : name, load_metrics_json(dir + "/metrics.json"));
    }
    return compare_runs(reports);
}

SweepResult cmd_sweep(const PipelineConfig& cfg, const std::string& key,
                      const std::vector<std::string>& values, ReasonerBackend* backend_override) {
    cfg.validate();
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    {
        PipelineConfig probe = cfg;
        apply_override(probe, key, values.front());  // rejects unknown keys up front
    }

    std::uint64_t h = fnv1a64("sweep:" + cfg.subset_hash(kClassifyKeys) + ":" + key);
    for (const auto& v : values) h = fnv1a64(v + "\n", h);
    const std::string dir = cfg.run_dir + "/sweep_" + sanitize_id(key) + "_" + to_hex(h);
    prepare_stage(dir, "sweep", cfg, kClassifyKeys, {}, false);

    SweepResult result;
    result.dir = dir;
    for (const auto& value : values) {
        PipelineConfig c2 = cfg;
        apply_override(c2, key, value);
        c2.validate();
        cmd_ingest(c2);
        cmd_train_base(c2);
        if (!c2.tau) cmd_calibrate(c2);
        const ClassifyResult cls = cmd_classify(c2, backend_override);
        const EvaluateResult ev = cmd_evaluate(c2);
        result.rows.push_back({value, cls.dir, ev.report});
    }

    if (!fs::exists(dir + "/manifest.json")) {
        std::string joined;
        for (const auto& v : values) joined += (joined.empty() ? "" : ", ") + v;
        write_manifest(dir, "sweep", cfg, {},
                       {{"key", key}, {"values", joined},
                        {"runs", std::to_string(result.rows.size())}});
    }
    std::ostringstream csv;
    csv << "value,run_dir,weighted_precision,weighted_recall,weighted_f1,flying_point_ratio,"
           "coverage,accepted,routed\n";
    for (const auto& row : result.rows) {
        csv << row.value << "," << row.dir << "," << format_full(row.report.weighted_precision)
            << "," << format_full(row.report.weighted_recall) << ","
            << format_full(row.report.weighted_f1) << ","
            << format_full(row.report.flying_point_ratio) << ","
            << format_full(row.report.coverage) << "," << row.report.accepted << ","
            << row.report.routed << "\n";
    }
    write_text_file(dir + "/sweep.csv", csv.str());
    return result;
}

}  // namespace lithoroute
