#include <doctest.h>

#include <cmath>
#include <random>

#include "lithoroute/common.hpp"
#include "lithoroute/well_log.hpp"
#include "test_util.hpp"

using namespace lithoroute;

namespace {

const char* kMappingText =
    "well_id = Well\n"
    "depth = Depth\n"
    "channel:GR = GR\n"
    "channel:PHI = PHI\n"
    "label = Facies\n"
    "labels = A,B\n";

const char* kSmallCsv =
    "Well,Depth,GR,PHI,Facies\n"
    "W1,100.0,50,0.10,A\n"
    "W1,100.5,52,0.11,A\n"
    "W1,101.0,54,0.12,B\n"
    "W1,101.5,56,0.13,B\n"
    "W2,200.0,60,0.20,A\n"
    "W2,200.5,62,0.21,A\n"
    "W2,201.0,64,0.22,A\n"
    "W3,300.0,70,0.30,B\n"
    "W3,300.5,72,0.31,B\n"
    "W3,301.0,74,0.32,B\n";

LoadResult load_small(const TempDir& tmp) {
    write_text_file(tmp.file("d.csv"), kSmallCsv);
    return load_dataset(tmp.file("d.csv"), parse_column_mapping(kMappingText));
}

WellLogSequence make_seq(const std::string& id, std::size_t length) {
    WellLogSequence seq;
    seq.well_id = id;
    seq.channel_names = {"GR"};
    seq.channels.resize(1);
    for (std::size_t i = 0; i < length; ++i) {
        seq.depths.push_back(static_cast<double>(i));
        seq.channels[0].push_back(static_cast<double>(i % 7));
    }
    return seq;
}

}  // namespace

TEST_SUITE("well_log") {

TEST_CASE("label schema lookup and validation") {
    LabelSchema schema{{"SS", "WS", "D"}};
    CHECK(schema.index_of("WS") == 1);
    CHECK(schema.index_of("XX") == -1);
    schema.validate();
    CHECK_THROWS_AS((LabelSchema{{"only"}}.validate()), SchemaError);
    CHECK_THROWS_AS((LabelSchema{{"A", "A"}}.validate()), SchemaError);
    CHECK_THROWS_AS((LabelSchema{{"A", ""}}.validate()), SchemaError);
}

TEST_CASE("loading groups rows by well and keeps mapping channel order") {
    TempDir tmp;
    auto result = load_small(tmp);
    REQUIRE(result.sequences.size() == 3);
    std::size_t total = 0;
    for (const auto& seq : result.sequences) total += seq.length();
    CHECK(total == 10);
    CHECK(result.sequences[0].well_id == "W1");
    CHECK(result.sequences[0].length() == 4);
    CHECK(result.sequences[0].channel_names == std::vector<std::string>{"GR", "PHI"});
    CHECK(result.sequences[0].channels[0][2] == 54.0);
    CHECK(result.sequences[0].channels[1][2] == 0.12);
    CHECK(result.schema.class_names == std::vector<std::string>{"A", "B"});
    REQUIRE(result.sequences[0].labels.has_value());
    CHECK((*result.sequences[0].labels)[2] == 1);
    CHECK(result.imputed_cells == 0);
    CHECK(result.sequences[0].sampling_interval == 0.5);
}

TEST_CASE("single data row yields a length-one sequence") {
    TempDir tmp;
    write_text_file(tmp.file("d.csv"),
                    "Well,Depth,GR,PHI,Facies\nW1,100.0,50,0.10,A\n");
    auto result = load_dataset(tmp.file("d.csv"), parse_column_mapping(kMappingText));
    REQUIRE(result.sequences.size() == 1);
    CHECK(result.sequences[0].length() == 1);
}

TEST_CASE("rows are sorted by depth within each well") {
    TempDir tmp;
    write_text_file(tmp.file("d.csv"),
                    "Well,Depth,GR,PHI,Facies\n"
                    "W1,101.0,54,0.12,B\n"
                    "W1,100.0,50,0.10,A\n");
    auto result = load_dataset(tmp.file("d.csv"), parse_column_mapping(kMappingText));
    CHECK(result.sequences[0].depths == std::vector<double>{100.0, 101.0});
    CHECK((*result.sequences[0].labels)[0] == 0);
}

TEST_CASE("missing cells forward-fill and count as imputed") {
    TempDir tmp;
    write_text_file(tmp.file("d.csv"),
                    "Well,Depth,GR,PHI,Facies\n"
                    "W1,100.0,,0.10,A\n"
                    "W1,100.5,52,,A\n"
                    "W1,101.0,,0.12,B\n");
    auto result = load_dataset(tmp.file("d.csv"), parse_column_mapping(kMappingText));
    const auto& seq = result.sequences[0];
    CHECK(seq.channels[0] == std::vector<double>{52.0, 52.0, 52.0});  // top backfill then hold
    CHECK(seq.channels[1] == std::vector<double>{0.10, 0.10, 0.12});
    CHECK(result.imputed_cells == 3);
}

TEST_CASE("loader rejects malformed inputs") {
    TempDir tmp;
    auto mapping = parse_column_mapping(kMappingText);
    write_text_file(tmp.file("a.csv"), "Well,Depth,GR,Facies\nW1,1,2,A\n");
    CHECK_THROWS_AS(load_dataset(tmp.file("a.csv"), mapping), SchemaError);
    write_text_file(tmp.file("b.csv"), "Well,Depth,GR,PHI,Facies\nW1,oops,2,0.1,A\n");
    CHECK_THROWS_AS(load_dataset(tmp.file("b.csv"), mapping), DataError);
    write_text_file(tmp.file("c.csv"), "Well,Depth,GR,PHI,Facies\nW1,1,2,0.1,Z\n");
    CHECK_THROWS_AS(load_dataset(tmp.file("c.csv"), mapping), LabelError);
    write_text_file(tmp.file("d.csv"),
                    "Well,Depth,GR,PHI,Facies\nW1,1,2,0.1,A\nW1,1,3,0.2,B\n");
    CHECK_THROWS_AS(load_dataset(tmp.file("d.csv"), mapping), DataError);  // duplicate depth
    write_text_file(tmp.file("e.csv"), "Well,Depth,GR,PHI,Facies\n");
    CHECK_THROWS_AS(load_dataset(tmp.file("e.csv"), mapping), DataError);
}

TEST_CASE("mapping parser enforces roles") {
    CHECK_THROWS_AS(parse_column_mapping("depth = D\nchannel:GR = GR\n"), SchemaError);
    CHECK_THROWS_AS(parse_column_mapping("well_id = W\ndepth = D\n"), SchemaError);
    CHECK_THROWS_AS(parse_column_mapping("well_id = W\nwell_id = X\n"), ConfigError);
    CHECK_THROWS_AS(parse_column_mapping("sideways = W\n"), ConfigError);
    auto m = parse_column_mapping("# comment\nwell_id = W\ndepth = D\nchannel:GR = gr_col\n");
    CHECK(m.channel_columns.size() == 1);
    CHECK(m.channel_columns[0].second == "gr_col");
    CHECK_FALSE(m.label_column.has_value());
}

TEST_CASE("normalization fixtures") {
    WellLogSequence seq;
    seq.well_id = "W";
    seq.depths = {0, 1, 2};
    seq.channel_names = {"C1", "C2"};
    seq.channels = {{5.0, 5.0, 5.0}, {1.0, 2.0, 3.0}};
    auto stats = fit_normalization({seq});
    CHECK(stats.means[0] == 5.0);
    CHECK(stats.stds[0] == 1.0);  // degenerate channel
    CHECK(stats.means[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(stats.stds[1] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("normalize and denormalize round trip") {
    std::mt19937_64 rng(3);
    WellLogSequence seq;
    seq.well_id = "W";
    seq.channel_names = {"C1", "C2", "C3"};
    seq.channels.resize(3);
    for (int i = 0; i < 64; ++i) {
        seq.depths.push_back(i);
        for (int c = 0; c < 3; ++c)
            seq.channels[c].push_back((c + 1) * 10.0 +
                                      static_cast<double>(rng() % 1000) / 100.0);
    }
    auto stats = fit_normalization({seq});
    auto norm = normalize(seq, stats);
    for (int c = 0; c < 3; ++c) {
        double sum = 0, ss = 0;
        for (double v : norm.channels[c]) sum += v;
        double mean = sum / 64.0;
        for (double v : norm.channels[c]) ss += (v - mean) * (v - mean);
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(std::sqrt(ss / 64.0) == doctest::Approx(1.0).epsilon(1e-9));
    }
    auto back = denormalize(norm, stats);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 64; ++i)
            CHECK(back.channels[c][i] == doctest::Approx(seq.channels[c][i]).epsilon(1e-9));
}

TEST_CASE("window tiling fixtures") {
    auto one = make_windows(make_seq("W", 16), 16, 16);
    REQUIRE(one.size() == 1);
    CHECK(one[0].start == 0);
    CHECK(one[0].end == 15);

    auto tail = make_windows(make_seq("W", 10), 4, 4);
    REQUIRE(tail.size() == 3);
    CHECK(tail[0].start == 0);
    CHECK(tail[0].end == 3);
    CHECK(tail[1].start == 4);
    CHECK(tail[1].end == 7);
    CHECK(tail[2].start == 8);
    CHECK(tail[2].end == 9);
    CHECK(tail[2].width() == 2);

    auto shorter = make_windows(make_seq("W", 3), 16, 16);
    REQUIRE(shorter.size() == 1);
    CHECK(shorter[0].start == 0);
    CHECK(shorter[0].end == 2);
}

TEST_CASE("window tiling covers every depth exactly once at stride == width") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t length = 1 + rng() % 40;
        std::size_t width = 1 + rng() % 10;
        auto windows = make_windows(make_seq("W", length), width, width);
        std::vector<int> covered(length, 0);
        for (const auto& w : windows) {
            REQUIRE(w.end < length);
            REQUIRE(w.start <= w.end);
            CHECK(w.features[0].size() == w.width());
            for (std::size_t i = w.start; i <= w.end; ++i) ++covered[i];
        }
        for (std::size_t i = 0; i < length; ++i) CHECK(covered[i] == 1);
    }
}

TEST_CASE("window copies carry the right slices") {
    TempDir tmp;
    auto result = load_small(tmp);
    auto windows = make_windows(result.sequences[0], 2, 2);
    REQUIRE(windows.size() == 2);
    CHECK(windows[1].features[0] == std::vector<double>{54.0, 56.0});
    REQUIRE(windows[1].labels.has_value());
    CHECK(*windows[1].labels == std::vector<int>{1, 1});
    CHECK(windows[1].well_id == "W1");
}

TEST_CASE("split validation flags unknown wells and overlaps") {
    std::vector<std::string> known{"W1", "W2", "W3"};
    DatasetSplit good{{"W1"}, {"W2"}, {"W3"}};
    good.validate(known);
    DatasetSplit unknown{{"W9"}, {}, {}};
    CHECK_THROWS_AS(unknown.validate(known), ConfigError);
    DatasetSplit overlap{{"W1"}, {"W1"}, {}};
    CHECK_THROWS_AS(overlap.validate(known), ConfigError);
}

TEST_CASE("bundle save and load round trip") {
    TempDir tmp;
    auto result = load_small(tmp);
    DatasetBundle bundle;
    bundle.sequences = result.sequences;
    bundle.schema = result.schema;
    bundle.stats = fit_normalization({result.sequences[0]});
    save_bundle(tmp.file("bundle"), bundle);
    auto loaded = load_bundle(tmp.file("bundle"));
    CHECK(loaded.schema.class_names == bundle.schema.class_names);
    CHECK(loaded.well_ids() == bundle.well_ids());
    CHECK(loaded.content_hash() == bundle.content_hash());
    const auto& a = bundle.well("W2");
    const auto& b = loaded.well("W2");
    CHECK(a.depths == b.depths);
    CHECK(a.channels == b.channels);
    CHECK(a.labels == b.labels);
    CHECK(loaded.stats.means == bundle.stats.means);
    CHECK(loaded.stats.stds == bundle.stats.stds);
}

TEST_CASE("loading a missing bundle points at the ingest step") {
    TempDir tmp;
    try {
        load_bundle(tmp.file("nope"));
        FAIL("expected ArtifactError");
    } catch (const ArtifactError& e) {
        CHECK(std::string(e.what()).find("ingest") != std::string::npos);
    }
}

TEST_CASE("stats file round trip") {
    TempDir tmp;
    NormalizationStats stats{{"GR", "PHI"}, {55.5, 0.25}, {8.25, 1.0}};
    save_stats(tmp.file("stats.txt"), stats);
    auto loaded = load_stats(tmp.file("stats.txt"));
    CHECK(loaded.channel_names == stats.channel_names);
    CHECK(loaded.means == stats.means);
    CHECK(loaded.stds == stats.stds);
}

}
