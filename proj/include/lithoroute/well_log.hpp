#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lithoroute {

// Ordered lithology class names; indices into this list are the label values
// used everywhere else.
struct LabelSchema {
    std::vector<std::string> class_names;

    std::size_t num_classes() const { return class_names.size(); }
    int index_of(const std::string& name) const;  // -1 if unknown
    void validate() const;
    std::uint64_t content_hash() const;
};

// Depth-indexed multichannel measurements for one well. Channels are stored
// channel-major: channels[c][i] is channel c at depth index i.
struct WellLogSequence {
    std::string well_id;
    std::vector<double> depths;
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> channels;
    std::optional<std::vector<int>> labels;
    double sampling_interval = 1.0;

    std::size_t length() const { return depths.size(); }
    std::size_t num_channels() const { return channels.size(); }
    void validate(std::size_t num_classes) const;
};

// Per-channel z-scoring parameters, fit on training wells only.
struct NormalizationStats {
    std::vector<std::string> channel_names;
    std::vector<double> means;
    std::vector<double> stds;  // degenerate channels carry 1.0
};

struct DatasetSplit {
    std::vector<std::string> train_wells;
    std::vector<std::string> val_wells;
    std::vector<std::string> test_wells;

    void validate(const std::vector<std::string>& known_wells) const;
};

// Contiguous slice [start, end] of one well, with the channel block copied out.
struct DepthWindow {
    std::string well_id;
    std::size_t start = 0;
    std::size_t end = 0;                         // inclusive
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> features;   // [channel][i], i < width()
    std::optional<std::vector<int>> labels;

    std::size_t width() const { return end - start + 1; }
};

// Maps dataset columns onto roles. Channel order here fixes the channel order
// of every loaded sequence.
struct ColumnMapping {
    std::string well_column;
    std::string depth_column;
    std::vector<std::pair<std::string, std::string>> channel_columns;  // (channel name, csv column)
    std::optional<std::string> label_column;
    std::vector<std::string> label_names;  // optional; inferred from data when empty
};

ColumnMapping parse_column_mapping(const std::string& text);
ColumnMapping load_column_mapping(const std::string& path);

struct LoadResult {
    std::vector<WellLogSequence> sequences;
    LabelSchema schema;
    std::size_t imputed_cells = 0;
};

// Reads a delimited-text table (comma separated, header row), groups rows by
// well, sorts by depth, and forward-fills unparseable channel cells.
LoadResult load_dataset(const std::string& path, const ColumnMapping& mapping);

NormalizationStats fit_normalization(const std::vector<WellLogSequence>& train);
WellLogSequence normalize(const WellLogSequence& seq, const NormalizationStats& stats);
WellLogSequence denormalize(const WellLogSequence& seq, const NormalizationStats& stats);

// Tiles [0, L-1] with stride-spaced windows; a truncated window covers the
// tail so every depth belongs to at least one window.
std::vector<DepthWindow> make_windows(const WellLogSequence& seq, std::size_t width,
                                      std::size_t stride);

// Canonical on-disk bundle: one delimited file per well plus schema and stats.
struct DatasetBundle {
    std::vector<WellLogSequence> sequences;
    LabelSchema schema;
    NormalizationStats stats;

    const WellLogSequence& well(const std::string& well_id) const;
    std::vector<std::string> well_ids() const;
    std::uint64_t content_hash() const;
};

void save_bundle(const std::string& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::string& dir);

void save_stats(const std::string& path, const NormalizationStats& stats);
NormalizationStats load_stats(const std::string& path);

}  // namespace lithoroute
