#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lithoroute/classifier.hpp"
#include "lithoroute/well_log.hpp"

namespace lithoroute {

// Curated prose about channels, classes, and decision heuristics. Channels
// without an entry are recorded as "no entry"; every class must have one.
struct KnowledgeBase {
    std::map<std::string, std::string> feature_descriptions;
    std::map<std::string, std::string> label_descriptions;
    std::vector<std::string> expert_guidelines;

    // Checks class coverage and backfills "no entry" for unlisted channels.
    void validate_against(const std::vector<std::string>& channels, const LabelSchema& schema);
};

KnowledgeBase parse_knowledge_base(const std::string& text);
KnowledgeBase load_knowledge_base(const std::string& path);

struct KnowledgeExcerpt {
    std::vector<std::pair<std::string, std::string>> features;  // (channel, prose)
    std::vector<std::pair<std::string, std::string>> labels;    // (class name, prose)
    std::vector<std::string> guidelines;

    std::string to_text() const;
};

KnowledgeExcerpt kb_lookup(const KnowledgeBase& kb, const LabelSchema& schema,
                           const std::vector<std::string>& channels,
                           const std::vector<int>& candidate_classes);

struct ChannelTrend {
    std::string channel;
    double slope = 0.0;  // units per depth step
    double mean = 0.0;
    double std_dev = 0.0;
    std::string regime;  // stable | gradual-transition | boundary
};

struct TrendSummary {
    std::size_t segment_start = 0;  // extended segment bounds, clamped at edges
    std::size_t segment_end = 0;
    std::size_t delta = 0;
    std::vector<ChannelTrend> channels;
};

// Slope/mean/std and a regime tag per channel over [s-delta, e+delta]
// truncated at the well edges.
TrendSummary analyze_trend(const WellLogSequence& seq, std::size_t s, std::size_t e,
                           std::size_t delta);

// Labeled per-depth feature vectors, queryable by Euclidean distance.
struct ReferenceSet {
    std::size_t dims = 0;
    std::vector<double> features;  // row major [n][dims], insertion order
    std::vector<int> labels;
    std::vector<std::string> well_ids;
    std::vector<std::size_t> depth_indices;

    std::size_t size() const { return labels.size(); }
    void add(const std::vector<double>& feature, int label, std::string well_id,
             std::size_t depth_index);
};

// One row per labeled depth of each (already normalized) training well.
ReferenceSet build_reference(const std::vector<WellLogSequence>& normalized_train);

struct Neighbor {
    std::size_t reference_index = 0;
    double distance = 0.0;
    int label = 0;
    std::string well_id;
    std::size_t depth_index = 0;
    std::vector<double> features;
};

struct NeighborSet {
    std::vector<Neighbor> neighbors;  // nearest first
};

// Exact k-nearest search; ties broken by reference insertion order, all of
// the reference returned when k exceeds its size.
NeighborSet retrieve_neighbors(const std::vector<double>& query, const ReferenceSet& reference,
                               std::size_t k);

struct HistoryWindow {
    std::vector<int> labels;  // nearest first: depths s-1, s-2, ...
};

// Up to h already-predicted labels immediately above depth s.
HistoryWindow gather_history(const std::vector<std::optional<int>>& predictions_so_far,
                             std::size_t s, std::size_t h, const std::string& well_id);

struct ToolFlags {
    bool knowledge = true;
    bool trend = true;
    bool neighbors = true;
    bool history = true;
};

// The structured bundle handed to reasoning for one routed window.
struct EvidenceProfile {
    std::string well_id;
    std::size_t start = 0;
    std::size_t end = 0;
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> window_values;  // [channel][i], raw scale
    std::vector<ProbabilityVector> base_probs;       // per depth
    ToolFlags flags;
    std::optional<KnowledgeExcerpt> knowledge;
    std::optional<TrendSummary> trend;
    std::optional<std::vector<NeighborSet>> neighbors;  // one set per depth
    std::optional<HistoryWindow> history;

    std::size_t width() const { return end - start + 1; }
};

EvidenceProfile build_evidence_profile(const DepthWindow& window,
                                       std::vector<ProbabilityVector> base_probs,
                                       std::optional<KnowledgeExcerpt> knowledge,
                                       std::optional<TrendSummary> trend,
                                       std::optional<std::vector<NeighborSet>> neighbors,
                                       std::optional<HistoryWindow> history,
                                       const ToolFlags& flags);

std::string profile_to_json(const EvidenceProfile& profile);
EvidenceProfile profile_from_json(const std::string& text);

}  // namespace lithoroute
