#include "lithoroute/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lithoroute/common.hpp"

namespace lithoroute {

namespace {

using nlohmann::json;

struct PendingEntry {
    std::string kind;  // feature | label | guideline
    std::string name;
    std::vector<std::string> lines;
};

void commit_entry(KnowledgeBase& kb, std::vector<std::pair<int, std::string>>& guidelines,
                  const PendingEntry& entry) {
    std::string prose;
    for (const auto& line : entry.lines) {
        if (!prose.empty()) prose += " ";
        prose += line;
    }
    if (prose.empty())
        throw SchemaError("knowledge base entry '" + entry.kind + " " + entry.name +
                          "' has no prose");
    if (entry.kind == "feature") {
        if (!kb.feature_descriptions.emplace(entry.name, prose).second)
            throw SchemaError("duplicate FEATURE header: " + entry.name);
    } else if (entry.kind == "label") {
        if (!kb.label_descriptions.emplace(entry.name, prose).second)
            throw SchemaError("duplicate LABEL header: " + entry.name);
    } else {
        int n = 0;
        try {
            n = std::stoi(entry.name);
        } catch (const std::exception&) {
            throw SchemaError("GUIDELINE header needs a number, got '" + entry.name + "'");
        }
        for (const auto& [num, text] : guidelines)
            if (num == n) throw SchemaError("duplicate GUIDELINE header: " + entry.name);
        guidelines.emplace_back(n, prose);
    }
}

}  // namespace

KnowledgeBase parse_knowledge_base(const std::string& text) {
    KnowledgeBase kb;
    std::vector<std::pair<int, std::string>> guidelines;
    std::optional<PendingEntry> pending;

    std::istringstream is(text);
    std::string raw;
    while (std::getline(is, raw)) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        std::string kind;
        if (line.rfind("FEATURE ", 0) == 0) kind = "feature";
        else if (line.rfind("LABEL ", 0) == 0) kind = "label";
        else if (line.rfind("GUIDELINE ", 0) == 0) kind = "guideline";

        if (!kind.empty()) {
            if (pending) commit_entry(kb, guidelines, *pending);
            PendingEntry e;
            e.kind = kind;
            e.name = trim(line.substr(line.find(' ') + 1));
            if (e.name.empty())
                throw SchemaError("knowledge base header '" + line + "' names nothing");
            pending = std::move(e);
        } else {
            if (!pending)
                throw SchemaError("knowledge base text precedes the first header: '" + line + "'");
            pending->lines.push_back(line);
        }
    }
    if (pending) commit_entry(kb, guidelines, *pending);

    std::sort(guidelines.begin(), guidelines.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [num, prose] : guidelines) kb.expert_guidelines.push_back(std::move(prose));
    return kb;
}

KnowledgeBase load_knowledge_base(const std::string& path) {
    return parse_knowledge_base(read_text_file(path));
}

void KnowledgeBase::validate_against(const std::vector<std::string>& channels,
                                     const LabelSchema& schema) {
    for (const auto& cls : schema.class_names)
        if (!label_descriptions.count(cls))
            throw SchemaError("knowledge base lacks a description for class " + cls);
    for (const auto& ch : channels)
        feature_descriptions.emplace(ch, "no entry");
}

std::string KnowledgeExcerpt::to_text() const {
    std::ostringstream os;
    os << "Channels:\n";
    for (const auto& [name, prose] : features) os << "- " << name << ": " << prose << "\n";
    if (!labels.empty()) {
        os << "Candidate labels:\n";
        for (const auto& [name, prose] : labels) os << "- " << name << ": " << prose << "\n";
    }
    os << "Guidelines:\n";
    for (std::size_t i = 0; i < guidelines.size(); ++i)
        os << (i + 1) << ". " << guidelines[i] << "\n";
    return os.str();
}

KnowledgeExcerpt kb_lookup(const KnowledgeBase& kb, const LabelSchema& schema,
                           const std::vector<std::string>& channels,
                           const std::vector<int>& candidate_classes) {
    KnowledgeExcerpt out;
    for (const auto& ch : channels) {
        auto it = kb.feature_descriptions.find(ch);
        if (it == kb.feature_descriptions.end())
            throw SchemaError("knowledge base has no entry for channel " + ch);
        out.features.emplace_back(ch, it->second);
    }
    for (int cls : candidate_classes) {
        if (cls < 0 || static_cast<std::size_t>(cls) >= schema.num_classes())
            throw LabelError("class index " + std::to_string(cls) + " outside schema");
        const std::string& name = schema.class_names[static_cast<std::size_t>(cls)];
        auto it = kb.label_descriptions.find(name);
        if (it == kb.label_descriptions.end())
            throw SchemaError("knowledge base has no entry for class " + name);
        out.labels.emplace_back(name, it->second);
    }
    out.guidelines = kb.expert_guidelines;
    return out;
}

TrendSummary analyze_trend(const WellLogSequence& seq, std::size_t s, std::size_t e,
                           std::size_t delta) {
    const std::size_t L = seq.length();
    if (L == 0) throw DataError("analyze_trend on an empty sequence");
    if (s > e || e >= L)
        throw DataError("analyze_trend: invalid segment [" + std::to_string(s) + ", " +
                        std::to_string(e) + "] for length " + std::to_string(L));

    TrendSummary summary;
    summary.delta = delta;
    summary.segment_start = s > delta ? s - delta : 0;
    summary.segment_end = std::min(L - 1, e + delta);
    const std::size_t a = summary.segment_start;
    const std::size_t b = summary.segment_end;
    const std::size_t n = b - a + 1;

    for (std::size_t c = 0; c < seq.num_channels(); ++c) {
        ChannelTrend t;
        t.channel = seq.channel_names[c];
        const auto& x = seq.channels[c];

        double mean = 0.0;
        for (std::size_t i = a; i <= b; ++i) mean += x[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = a; i <= b; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);

        double slope = 0.0;
        if (n > 1) {
            // OLS against the step index 0..n-1.
            const double xbar = static_cast<double>(n - 1) / 2.0;
            double num = 0.0, den = 0.0;
            for (std::size_t i = a; i <= b; ++i) {
                const double dx = static_cast<double>(i - a) - xbar;
                num += dx * (x[i] - mean);
                den += dx * dx;
            }
            slope = num / den;
        }

        double max_step = 0.0;
        for (std::size_t i = a; i + 1 <= b; ++i)
            max_step = std::max(max_step, std::abs(x[i + 1] - x[i]));

        t.slope = slope;
        t.mean = mean;
        t.std_dev = sd;
        if (max_step > 3.0 * sd && sd > 0.0)
            t.regime = "boundary";
        else if (std::abs(slope) * static_cast<double>(n) > sd)
            t.regime = "gradual-transition";
        else
            t.regime = "stable";
        summary.channels.push_back(std::move(t));
    }
    return summary;
}

void ReferenceSet::add(const std::vector<double>& feature, int label, std::string well_id,
                       std::size_t depth_index) {
    if (dims == 0) dims = feature.size();
    if (feature.size() != dims)
        throw DataError("reference feature has " + std::to_string(feature.size()) +
                        " dims, set holds " + std::to_string(dims));
    features.insert(features.end(), feature.begin(), feature.end());
    labels.push_back(label);
    well_ids.push_back(std::move(well_id));
    depth_indices.push_back(depth_index);
}

ReferenceSet build_reference(const std::vector<WellLogSequence>& normalized_train) {
    ReferenceSet ref;
    for (const auto& seq : normalized_train) {
        if (!seq.labels)
            throw DataError("reference well " + seq.well_id + " carries no labels");
        std::vector<double> feature(seq.num_channels());
        for (std::size_t i = 0; i < seq.length(); ++i) {
            for (std::size_t c = 0; c < seq.num_channels(); ++c) feature[c] = seq.channels[c][i];
            ref.add(feature, (*seq.labels)[i], seq.well_id, i);
        }
    }
    if (ref.size() == 0) throw DataError("reference set is empty");
    return ref;
}

NeighborSet retrieve_neighbors(const std::vector<double>& query, const ReferenceSet& reference,
                               std::size_t k) {
    if (reference.size() == 0) throw DataError("retrieve_neighbors: reference set is empty");
    if (k == 0) throw DataError("retrieve_neighbors: k must be positive");
    if (query.size() != reference.dims)
        throw DataError("query has " + std::to_string(query.size()) + " dims, reference holds " +
                        std::to_string(reference.dims));

    const std::size_t n = reference.size();
    const std::size_t d = reference.dims;
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* row = reference.features.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = query[j] - row[j];
            acc += diff * diff;
        }
        sq[i] = acc;
    }

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t take = std::min(k, n);
    auto by_distance = [&](std::size_t a, std::size_t b) {
        if (sq[a] != sq[b]) return sq[a] < sq[b];
        return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(take), idx.end(), by_distance);

    NeighborSet out;
    out.neighbors.reserve(take);
    for (std::size_t r = 0; r < take; ++r) {
        const std::size_t i = idx[r];
        Neighbor nb;
        nb.reference_index = i;
        nb.distance = std::sqrt(sq[i]);
        nb.label = reference.labels[i];
        nb.well_id = reference.well_ids[i];
        nb.depth_index = reference.depth_indices[i];
        nb.features.assign(reference.features.begin() + static_cast<long>(i * d),
                           reference.features.begin() + static_cast<long>((i + 1) * d));
        out.neighbors.push_back(std::move(nb));
    }
    return out;
}

HistoryWindow gather_history(const std::vector<std::optional<int>>& predictions_so_far,
                             std::size_t s, std::size_t h, const std::string& well_id) {
    if (h == 0) throw DataError("gather_history: h must be positive");
    HistoryWindow out;
    const std::size_t take = std::min(s, h);
    for (std::size_t i = 1; i <= take; ++i) {
        const std::size_t depth = s - i;
        if (depth >= predictions_so_far.size() || !predictions_so_far[depth])
            throw DataError("history for well " + well_id + " needs a prediction at depth " +
                            std::to_string(depth) + " before depth " + std::to_string(s));
        out.labels.push_back(*predictions_so_far[depth]);
    }
    return out;
}

EvidenceProfile build_evidence_profile(const DepthWindow& window,
                                       std::vector<ProbabilityVector> base_probs,
                                       std::optional<KnowledgeExcerpt> knowledge,
                                       std::optional<TrendSummary> trend,
                                       std::optional<std::vector<NeighborSet>> neighbors,
                                       std::optional<HistoryWindow> history,
                                       const ToolFlags& flags) {
    auto check = [](bool flag, bool present, const char* name) {
        if (flag && !present)
            throw DataError(std::string(name) + " flag is set but no " + name + " was supplied");
        if (!flag && present)
            throw DataError(std::string(name) + " supplied but its flag is off");
    };
    check(flags.knowledge, knowledge.has_value(), "knowledge");
    check(flags.trend, trend.has_value(), "trend");
    check(flags.neighbors, neighbors.has_value(), "neighbors");
    check(flags.history, history.has_value(), "history");

    if (base_probs.size() != window.width())
        throw DataError("profile needs one probability vector per depth");
    if (neighbors && neighbors->size() != window.width())
        throw DataError("profile needs one neighbor set per depth");

    EvidenceProfile p;
    p.well_id = window.well_id;
    p.start = window.start;
    p.end = window.end;
    p.channel_names = window.channel_names;
    p.window_values = window.features;
    p.base_probs = std::move(base_probs);
    p.flags = flags;
    p.knowledge = std::move(knowledge);
    p.trend = std::move(trend);
    p.neighbors = std::move(neighbors);
    p.history = std::move(history);
    return p;
}

namespace {

json excerpt_to_json(const KnowledgeExcerpt& e) {
    json j;
    j["features"] = json::array();
    for (const auto& [name, prose] : e.features) j["features"].push_back({{"name", name}, {"prose", prose}});
    j["labels"] = json::array();
    for (const auto& [name, prose] : e.labels) j["labels"].push_back({{"name", name}, {"prose", prose}});
    j["guidelines"] = e.guidelines;
    return j;
}

KnowledgeExcerpt excerpt_from_json(const json& j) {
    KnowledgeExcerpt e;
    for (const auto& f : j.at("features"))
        e.features.emplace_back(f.at("name").get<std::string>(), f.at("prose").get<std::string>());
    for (const auto& l : j.at("labels"))
        e.labels.emplace_back(l.at("name").get<std::string>(), l.at("prose").get<std::string>());
    e.guidelines = j.at("guidelines").get<std::vector<std::string>>();
    return e;
}

}  // namespace

std::string profile_to_json(const EvidenceProfile& p) {
    json j;
    j["well_id"] = p.well_id;
    j["start"] = p.start;
    j["end"] = p.end;
    j["channels"] = p.channel_names;
    j["values"] = p.window_values;
    j["base_probs"] = p.base_probs;
    j["flags"] = {{"knowledge", p.flags.knowledge},
                  {"trend", p.flags.trend},
                  {"neighbors", p.flags.neighbors},
                  {"history", p.flags.history}};
    if (p.knowledge) j["knowledge"] = excerpt_to_json(*p.knowledge);
    if (p.trend) {
        json t;
        t["segment_start"] = p.trend->segment_start;
        t["segment_end"] = p.trend->segment_end;
        t["delta"] = p.trend->delta;
        t["channels"] = json::array();
        for (const auto& c : p.trend->channels)
            t["channels"].push_back({{"channel", c.channel},
                                     {"slope", c.slope},
                                     {"mean", c.mean},
                                     {"std", c.std_dev},
                                     {"regime", c.regime}});
        j["trend"] = t;
    }
    if (p.neighbors) {
        json all = json::array();
        for (const auto& set : *p.neighbors) {
            json one = json::array();
            for (const auto& nb : set.neighbors)
                one.push_back({{"reference_index", nb.reference_index},
                               {"distance", nb.distance},
                               {"label", nb.label},
                               {"well_id", nb.well_id},
                               {"depth_index", nb.depth_index},
                               {"features", nb.features}});
            all.push_back(std::move(one));
        }
        j["neighbors"] = all;
    }
    if (p.history) j["history"] = p.history->labels;
    return j.dump();
}

EvidenceProfile profile_from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        EvidenceProfile p;
        p.well_id = j.at("well_id").get<std::string>();
        p.start = j.at("start").get<std::size_t>();
        p.end = j.at("end").get<std::size_t>();
        p.channel_names = j.at("channels").get<std::vector<std::string>>();
        p.window_values = j.at("values").get<std::vector<std::vector<double>>>();
        p.base_probs = j.at("base_probs").get<std::vector<ProbabilityVector>>();
        const auto& f = j.at("flags");
        p.flags.knowledge = f.at("knowledge").get<bool>();
        p.flags.trend = f.at("trend").get<bool>();
        p.flags.neighbors = f.at("neighbors").get<bool>();
        p.flags.history = f.at("history").get<bool>();
        if (j.contains("knowledge")) p.knowledge = excerpt_from_json(j.at("knowledge"));
        if (j.contains("trend")) {
            TrendSummary t;
            const auto& jt = j.at("trend");
            t.segment_start = jt.at("segment_start").get<std::size_t>();
            t.segment_end = jt.at("segment_end").get<std::size_t>();
            t.delta = jt.at("delta").get<std::size_t>();
            for (const auto& jc : jt.at("channels")) {
                ChannelTrend c;
                c.channel = jc.at("channel").get<std::string>();
                c.slope = jc.at("slope").get<double>();
                c.mean = jc.at("mean").get<double>();
                c.std_dev = jc.at("std").get<double>();
                c.regime = jc.at("regime").get<std::string>();
                t.channels.push_back(std::move(c));
            }
            p.trend = std::move(t);
        }
        if (j.contains("neighbors")) {
            std::vector<NeighborSet> sets;
            for (const auto& jset : j.at("neighbors")) {
                NeighborSet set;
                for (const auto& jn : jset) {
                    Neighbor nb;
                    nb.reference_index = jn.at("reference_index").get<std::size_t>();
                    nb.distance = jn.at("distance").get<double>();
                    nb.label = jn.at("label").get<int>();
                    nb.well_id = jn.at("well_id").get<std::string>();
                    nb.depth_index = jn.at("depth_index").get<std::size_t>();
                    nb.features = jn.at("features").get<std::vector<double>>();
                    set.neighbors.push_back(std::move(nb));
                }
                sets.push_back(std::move(set));
            }
            p.neighbors = std::move(sets);
        }
        if (j.contains("history")) {
            HistoryWindow h;
            h.labels = j.at("history").get<std::vector<int>>();
            p.history = std::move(h);
        }
        return p;
    } catch (const json::exception& e) {
        throw ArtifactError(std::string("evidence profile JSON malformed: ") + e.what());
    }
}

}  // namespace lithoroute
