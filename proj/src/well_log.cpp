#include "lithoroute/well_log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>

#include "lithoroute/common.hpp"

namespace fs = std::filesystem;

namespace lithoroute {
namespace {

// Minimal CSV splitter: comma separated, double quotes protect commas.
std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

double median_step(const std::vector<double>& depths) {
    if (depths.size() < 2) return 1.0;
    std::vector<double> diffs(depths.size() - 1);
    for (size_t i = 0; i + 1 < depths.size(); ++i) diffs[i] = depths[i + 1] - depths[i];
    std::sort(diffs.begin(), diffs.end());
    return diffs[diffs.size() / 2];
}

std::string sanitize_filename(const std::string& id) {
    std::string out;
    for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

}  // namespace

int LabelSchema::index_of(const std::string& name) const {
    for (size_t i = 0; i < class_names.size(); ++i)
        if (class_names[i] == name) return static_cast<int>(i);
    return -1;
}

void LabelSchema::validate() const {
    if (class_names.size() < 2) throw SchemaError("label schema needs at least 2 classes");
    for (const auto& n : class_names) {
        if (n.empty()) throw SchemaError("label schema contains an empty class name");
        if (std::count(class_names.begin(), class_names.end(), n) != 1)
            throw SchemaError("duplicate class name in label schema: " + n);
    }
}

std::uint64_t LabelSchema::content_hash() const {
    std::uint64_t h = fnv1a64("labels");
    for (const auto& n : class_names) h = fnv1a64(n + "\x1f", h);
    return h;
}

void WellLogSequence::validate(std::size_t num_classes) const {
    if (depths.empty()) throw DataError("well " + well_id + ": empty sequence");
    for (size_t i = 0; i + 1 < depths.size(); ++i)
        if (!(depths[i] < depths[i + 1]))
            throw DataError("well " + well_id + ": depths not strictly increasing");
    if (channel_names.size() != channels.size())
        throw DataError("well " + well_id + ": channel name/series count mismatch");
    for (size_t c = 0; c < channels.size(); ++c)
        if (channels[c].size() != depths.size())
            throw DataError("well " + well_id + ": channel " + channel_names[c] +
                            " length mismatch");
    if (labels) {
        if (labels->size() != depths.size())
            throw DataError("well " + well_id + ": label length mismatch");
        for (int y : *labels)
            if (y < 0 || static_cast<size_t>(y) >= num_classes)
                throw LabelError("well " + well_id + ": label index out of range");
    }
    if (!(sampling_interval > 0)) throw DataError("well " + well_id + ": sampling interval <= 0");
}

void DatasetSplit::validate(const std::vector<std::string>& known_wells) const {
    auto check = [&](const std::vector<std::string>& part, const char* name) {
        for (const auto& w : part)
            if (std::find(known_wells.begin(), known_wells.end(), w) == known_wells.end())
                throw ConfigError(std::string("split ") + name + " references unknown well: " + w);
    };
    check(train_wells, "train");
    check(val_wells, "val");
    check(test_wells, "test");
    auto overlap = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        for (const auto& w : a)
            if (std::find(b.begin(), b.end(), w) != b.end()) return w;
        return std::string();
    };
    for (auto [a, b] : {std::pair{&train_wells, &val_wells},
                        std::pair{&train_wells, &test_wells},
                        std::pair{&val_wells, &test_wells}}) {
        std::string w = overlap(*a, *b);
        if (!w.empty()) throw ConfigError("split parts overlap on well: " + w);
    }
}

ColumnMapping parse_column_mapping(const std::string& text) {
    ColumnMapping m;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("mapping line " + std::to_string(lineno) + ": expected 'role = column'");
        std::string role = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (role == "well_id") {
            if (!m.well_column.empty()) throw ConfigError("mapping: duplicate well_id role");
            m.well_column = value;
        } else if (role == "depth") {
            if (!m.depth_column.empty()) throw ConfigError("mapping: duplicate depth role");
            m.depth_column = value;
        } else if (role == "label") {
            if (m.label_column) throw ConfigError("mapping: duplicate label role");
            m.label_column = value;
        } else if (role == "labels") {
            for (auto& name : split(value, ',')) {
                std::string n = trim(name);
                if (!n.empty()) m.label_names.push_back(n);
            }
        } else if (role.rfind("channel:", 0) == 0) {
            std::string ch = trim(role.substr(8));
            if (ch.empty()) throw ConfigError("mapping: empty channel name");
            for (const auto& [name, col] : m.channel_columns)
                if (name == ch) throw ConfigError("mapping: duplicate channel " + ch);
            m.channel_columns.emplace_back(ch, value);
        } else {
            throw ConfigError("mapping: unknown role '" + role + "'");
        }
    }
    if (m.well_column.empty()) throw SchemaError("mapping missing mandatory role well_id");
    if (m.depth_column.empty()) throw SchemaError("mapping missing mandatory role depth");
    if (m.channel_columns.empty()) throw SchemaError("mapping defines no channels");
    return m;
}

ColumnMapping load_column_mapping(const std::string& path) {
    return parse_column_mapping(read_text_file(path));
}

LoadResult load_dataset(const std::string& path, const ColumnMapping& mapping) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty dataset file: " + path);
    std::vector<std::string> header = split_csv_row(line);

    auto column_index = [&](const std::string& col) -> size_t {
        auto it = std::find(header.begin(), header.end(), col);
        if (it == header.end())
            throw SchemaError("missing mandatory column '" + col + "' in " + path);
        return static_cast<size_t>(it - header.begin());
    };

    size_t well_idx = column_index(mapping.well_column);
    size_t depth_idx = column_index(mapping.depth_column);
    std::vector<size_t> channel_idx;
    for (const auto& [name, col] : mapping.channel_columns) channel_idx.push_back(column_index(col));
    std::optional<size_t> label_idx;
    if (mapping.label_column) label_idx = column_index(*mapping.label_column);

    struct Row {
        double depth;
        std::vector<std::optional<double>> values;
        std::string label;
    };
    std::vector<std::string> well_order;
    std::map<std::string, std::vector<Row>> rows_by_well;

    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_csv_row(line);
        if (fields.size() < header.size())
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        const std::string& well = fields[well_idx];
        if (well.empty()) throw DataError(path + ":" + std::to_string(lineno) + ": empty well id");
        if (well.find(',') != std::string::npos)
            throw DataError("well id may not contain ',': " + well);
        auto depth = parse_double(fields[depth_idx]);
        if (!depth)
            throw DataError(path + ":" + std::to_string(lineno) + ": unparseable depth '" +
                            fields[depth_idx] + "'");
        Row row;
        row.depth = *depth;
        for (size_t c = 0; c < channel_idx.size(); ++c)
            row.values.push_back(parse_double(fields[channel_idx[c]]));
        if (label_idx) row.label = fields[*label_idx];
        if (rows_by_well.find(well) == rows_by_well.end()) well_order.push_back(well);
        rows_by_well[well].push_back(std::move(row));
    }
    if (well_order.empty()) throw DataError("no data rows in " + path);

    // Label schema: explicit ordering from the mapping when given, otherwise
    // the sorted set of strings seen in the data.
    LabelSchema schema;
    if (!mapping.label_names.empty()) {
        schema.class_names = mapping.label_names;
    } else if (label_idx) {
        std::vector<std::string> seen;
        for (const auto& [well, rows] : rows_by_well)
            for (const auto& r : rows)
                if (std::find(seen.begin(), seen.end(), r.label) == seen.end())
                    seen.push_back(r.label);
        std::sort(seen.begin(), seen.end());
        schema.class_names = std::move(seen);
    }
    if (label_idx) schema.validate();

    LoadResult result;
    result.schema = schema;

    for (const auto& well : well_order) {
        auto& rows = rows_by_well[well];
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Row& a, const Row& b) { return a.depth < b.depth; });
        for (size_t i = 0; i + 1 < rows.size(); ++i)
            if (!(rows[i].depth < rows[i + 1].depth))
                throw DataError("well " + well + ": depth not strictly increasing after sort (" +
                                format_full(rows[i].depth) + " repeated)");

        WellLogSequence seq;
        seq.well_id = well;
        for (const auto& [name, col] : mapping.channel_columns) seq.channel_names.push_back(name);
        seq.channels.assign(seq.channel_names.size(), {});
        for (const auto& r : rows) seq.depths.push_back(r.depth);

        // Forward fill unparseable cells, backfill at the top of the well.
        for (size_t c = 0; c < seq.channel_names.size(); ++c) {
            auto& series = seq.channels[c];
            series.resize(rows.size());
            size_t first_valid = rows.size();
            for (size_t i = 0; i < rows.size(); ++i)
                if (rows[i].values[c]) {
                    first_valid = i;
                    break;
                }
            if (first_valid == rows.size())
                throw DataError("well " + well + ": channel " + seq.channel_names[c] +
                                " has no valid values");
            double last = *rows[first_valid].values[c];
            for (size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].values[c]) {
                    last = *rows[i].values[c];
                } else {
                    ++result.imputed_cells;
                }
                series[i] = last;
            }
            // Top-of-well backfill: cells before the first valid value.
            for (size_t i = 0; i < first_valid; ++i) series[i] = *rows[first_valid].values[c];
        }

        if (label_idx) {
            std::vector<int> labels;
            for (const auto& r : rows) {
                int idx = schema.index_of(r.label);
                if (idx < 0) throw LabelError("unknown label string '" + r.label + "' in well " + well);
                labels.push_back(idx);
            }
            seq.labels = std::move(labels);
        }
        seq.sampling_interval = median_step(seq.depths);
        seq.validate(schema.num_classes());
        result.sequences.push_back(std::move(seq));
    }
    return result;
}

NormalizationStats fit_normalization(const std::vector<WellLogSequence>& train) {
    if (train.empty()) throw DataError("fit_normalization: no training wells");
    const auto& names = train.front().channel_names;
    for (const auto& seq : train)
        if (seq.channel_names != names)
            throw DataError("fit_normalization: channel sets differ between wells");

    NormalizationStats stats;
    stats.channel_names = names;
    for (size_t c = 0; c < names.size(); ++c) {
        double sum = 0.0;
        size_t n = 0;
        for (const auto& seq : train)
            for (double v : seq.channels[c]) {
                sum += v;
                ++n;
            }
        double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& seq : train)
            for (double v : seq.channels[c]) ss += (v - mean) * (v - mean);
        double sd = std::sqrt(ss / static_cast<double>(n));
        if (sd == 0.0) sd = 1.0;  // degenerate channel: mean-shift only
        stats.means.push_back(mean);
        stats.stds.push_back(sd);
    }
    return stats;
}

WellLogSequence normalize(const WellLogSequence& seq, const NormalizationStats& stats) {
    if (seq.channel_names != stats.channel_names)
        throw DataError("normalize: channel set mismatch for well " + seq.well_id);
    WellLogSequence out = seq;
    for (size_t c = 0; c < out.channels.size(); ++c)
        for (double& v : out.channels[c]) v = (v - stats.means[c]) / stats.stds[c];
    return out;
}

WellLogSequence denormalize(const WellLogSequence& seq, const NormalizationStats& stats) {
    if (seq.channel_names != stats.channel_names)
        throw DataError("denormalize: channel set mismatch for well " + seq.well_id);
    WellLogSequence out = seq;
    for (size_t c = 0; c < out.channels.size(); ++c)
        for (double& v : out.channels[c]) v = stats.means[c] + v * stats.stds[c];
    return out;
}

std::vector<DepthWindow> make_windows(const WellLogSequence& seq, std::size_t width,
                                      std::size_t stride) {
    if (width < 1 || stride < 1) throw DataError("make_windows: width and stride must be >= 1");
    const size_t L = seq.length();
    std::vector<DepthWindow> out;
    for (size_t s = 0; s < L; s += stride) {
        DepthWindow w;
        w.well_id = seq.well_id;
        w.start = s;
        w.end = std::min(s + width, L) - 1;
        w.channel_names = seq.channel_names;
        for (const auto& series : seq.channels)
            w.features.emplace_back(series.begin() + s, series.begin() + w.end + 1);
        if (seq.labels)
            w.labels = std::vector<int>(seq.labels->begin() + s, seq.labels->begin() + w.end + 1);
        bool truncated = w.end + 1 == L;
        out.push_back(std::move(w));
        if (truncated) break;
    }
    return out;
}

const WellLogSequence& DatasetBundle::well(const std::string& well_id) const {
    for (const auto& seq : sequences)
        if (seq.well_id == well_id) return seq;
    throw DataError("unknown well: " + well_id);
}

std::vector<std::string> DatasetBundle::well_ids() const {
    std::vector<std::string> ids;
    for (const auto& seq : sequences) ids.push_back(seq.well_id);
    return ids;
}

std::uint64_t DatasetBundle::content_hash() const {
    std::uint64_t h = schema.content_hash();
    for (const auto& seq : sequences) {
        h = fnv1a64(seq.well_id + "\x1f", h);
        for (double d : seq.depths) h = fnv1a64(format_full(d) + ",", h);
        for (const auto& series : seq.channels)
            for (double v : series) h = fnv1a64(format_full(v) + ",", h);
        if (seq.labels)
            for (int y : *seq.labels) h = fnv1a64(std::to_string(y) + ",", h);
    }
    return h;
}

namespace {
std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}
}  // namespace

void save_bundle(const std::string& dir, const DatasetBundle& bundle) {
    fs::create_directories(fs::path(dir) / "wells");
    std::ostringstream schema_txt;
    schema_txt << "labels = " << join(bundle.schema.class_names, ", ") << "\n";
    schema_txt << "channels = " << join(bundle.sequences.front().channel_names, ", ") << "\n";
    schema_txt << "wells = " << join(bundle.well_ids(), ", ") << "\n";
    write_text_file((fs::path(dir) / "schema.txt").string(), schema_txt.str());
    save_stats((fs::path(dir) / "stats.txt").string(), bundle.stats);

    for (const auto& seq : bundle.sequences) {
        std::ostringstream out;
        out << "well_id,depth";
        for (const auto& c : seq.channel_names) out << "," << c;
        if (seq.labels) out << ",label";
        out << "\n";
        for (size_t i = 0; i < seq.length(); ++i) {
            out << seq.well_id << "," << format_full(seq.depths[i]);
            for (const auto& series : seq.channels) out << "," << format_full(series[i]);
            if (seq.labels) out << "," << bundle.schema.class_names[(*seq.labels)[i]];
            out << "\n";
        }
        write_text_file((fs::path(dir) / "wells" / (sanitize_filename(seq.well_id) + ".csv")).string(),
                        out.str());
    }
}

DatasetBundle load_bundle(const std::string& dir) {
    std::string schema_txt;
    try {
        schema_txt = read_text_file((fs::path(dir) / "schema.txt").string());
    } catch (const IoError&) {
        throw ArtifactError("no dataset bundle at " + dir + "; run ingest first");
    }
    std::vector<std::string> labels, channels, wells;
    std::istringstream in(schema_txt);
    std::string line;
    while (std::getline(in, line)) {
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = trim(line.substr(0, eq));
        std::vector<std::string> vals;
        for (auto& v : split(line.substr(eq + 1), ',')) {
            std::string t = trim(v);
            if (!t.empty()) vals.push_back(t);
        }
        if (key == "labels") labels = vals;
        else if (key == "channels") channels = vals;
        else if (key == "wells") wells = vals;
    }
    if (wells.empty()) throw ArtifactError("bundle schema lists no wells: " + dir);

    DatasetBundle bundle;
    bundle.schema.class_names = labels;
    bundle.stats = load_stats((fs::path(dir) / "stats.txt").string());

    ColumnMapping mapping;
    mapping.well_column = "well_id";
    mapping.depth_column = "depth";
    for (const auto& c : channels) mapping.channel_columns.emplace_back(c, c);
    mapping.label_names = labels;

    for (const auto& well : wells) {
        std::string path = (fs::path(dir) / "wells" / (sanitize_filename(well) + ".csv")).string();
        ColumnMapping well_mapping = mapping;
        // Unlabeled wells simply lack the label column.
        std::istringstream head(read_text_file(path));
        std::string header;
        std::getline(head, header);
        if (header.find(",label") != std::string::npos) well_mapping.label_column = "label";
        LoadResult r = load_dataset(path, well_mapping);
        if (r.sequences.size() != 1 || r.sequences.front().well_id != well)
            throw DataError("bundle well file does not match schema entry: " + well);
        bundle.sequences.push_back(std::move(r.sequences.front()));
    }
    return bundle;
}

void save_stats(const std::string& path, const NormalizationStats& stats) {
    std::ostringstream out;
    for (size_t c = 0; c < stats.channel_names.size(); ++c)
        out << stats.channel_names[c] << " " << format_full(stats.means[c]) << " "
            << format_full(stats.stds[c]) << "\n";
    write_text_file(path, out.str());
}

NormalizationStats load_stats(const std::string& path) {
    NormalizationStats stats;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        std::istringstream row(t);
        std::string name;
        double mean, sd;
        if (!(row >> name >> mean >> sd)) throw DataError("malformed stats line: " + t);
        stats.channel_names.push_back(name);
        stats.means.push_back(mean);
        stats.stds.push_back(sd);
    }
    return stats;
}

}  // namespace lithoroute
