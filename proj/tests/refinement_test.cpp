#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "lithoroute/common.hpp"
#include "lithoroute/refinement.hpp"
#include "test_util.hpp"

using namespace lithoroute;

namespace {

EvidenceProfile small_profile(std::size_t width) {
    DepthWindow window;
    window.well_id = "W";
    window.start = 0;
    window.end = width - 1;
    window.channel_names = {"GR"};
    window.features.resize(1);
    std::vector<ProbabilityVector> probs;
    for (std::size_t i = 0; i < width; ++i) {
        window.features[0].push_back(50.0 + static_cast<double>(i));
        probs.push_back({0.6, 0.4});
    }
    ToolFlags off{false, false, false, false};
    return build_evidence_profile(window, probs, std::nullopt, std::nullopt, std::nullopt,
                                  std::nullopt, off);
}

CandidatePrediction candidate(const std::string& persona, std::vector<int> labels,
                              bool parse_ok = true) {
    CandidatePrediction c;
    c.persona = persona;
    c.labels = std::move(labels);
    c.parse_ok = parse_ok;
    return c;
}

class ScriptedBackend : public ReasonerBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> completions)
        : completions_(std::move(completions)) {}
    std::string complete(const std::string&, const std::string& user_text, const SamplingParams&,
                         std::uint64_t) override {
        last_user = user_text;
        if (next_ >= completions_.size()) return completions_.back();
        return completions_[next_++];
    }
    std::string kind() const override { return "scripted"; }
    std::size_t calls() const { return next_; }
    std::string last_user;

private:
    std::vector<std::string> completions_;
    std::size_t next_ = 0;
};

std::vector<int> random_labels(std::mt19937_64& rng) {
    std::size_t n = 1 + rng() % 40;
    std::size_t k = 2 + rng() % 5;
    std::vector<int> labels(n);
    for (auto& v : labels) v = static_cast<int>(rng() % k);
    return labels;
}

}  // namespace

TEST_SUITE("refinement") {

TEST_CASE("default guidelines are valid prose rules") {
    auto g = default_guidelines();
    g.validate();
    CHECK(g.min_run == 2);
    CHECK_FALSE(g.rules.empty());
    GeologyGuidelines bad;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.rules = {"rule"};
    bad.min_run = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("guidelines load one rule per line, skipping comments") {
    TempDir tmp;
    write_text_file(tmp.file("g.txt"), "# header\nrule one\n\n  rule two  \n# trailing\n");
    auto g = load_guidelines(tmp.file("g.txt"), 3);
    CHECK(g.rules == std::vector<std::string>{"rule one", "rule two"});
    CHECK(g.min_run == 3);
    write_text_file(tmp.file("empty.txt"), "# only comments\n\n");
    CHECK_THROWS_AS(load_guidelines(tmp.file("empty.txt"), 2), SchemaError);
}

TEST_CASE("smoothing fixtures") {
    CHECK(refine_deterministic({0, 0, 1, 0, 0}, 2) == std::vector<int>{0, 0, 0, 0, 0});
    CHECK(refine_deterministic({0, 0, 1, 1, 2, 2}, 2) == std::vector<int>{0, 0, 1, 1, 2, 2});
    CHECK(refine_deterministic({5}, 2) == std::vector<int>{5});
    CHECK(refine_deterministic({0, 1}, 1) == std::vector<int>{0, 1});
}

TEST_CASE("short runs take the longer adjacent label, ties to the run above") {
    // Run of one 2 between a 3-long 0-run and a 2-long 1-run: 0 wins.
    CHECK(refine_deterministic({0, 0, 0, 2, 1, 1}, 2) == std::vector<int>{0, 0, 0, 0, 1, 1});
    // Equal-length runs on both sides: the run above wins.
    CHECK(refine_deterministic({0, 0, 2, 1, 1}, 2) == std::vector<int>{0, 0, 0, 1, 1});
    // Short run at the top has only the run below.
    CHECK(refine_deterministic({2, 0, 0, 0}, 2) == std::vector<int>{0, 0, 0, 0});
    CHECK(refine_deterministic({0, 0, 0, 2}, 2) == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("smoothing invariants over random sequences") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 200; ++trial) {
        auto labels = random_labels(rng);
        auto smoothed = refine_deterministic(labels, 2);
        REQUIRE(smoothed.size() == labels.size());
        CHECK(flying_point_ratio(smoothed) == 0.0);
        CHECK(refine_deterministic(smoothed, 2) == smoothed);
        std::set<int> input_alphabet(labels.begin(), labels.end());
        for (int v : smoothed) CHECK(input_alphabet.count(v) == 1);
    }
}

TEST_CASE("flying point fixtures") {
    CHECK(flying_point_ratio({0, 0, 1, 0, 0}) == doctest::Approx(0.2));
    CHECK(flying_point_ratio({0, 0, 0}) == 0.0);
    CHECK(flying_point_ratio({0, 1, 0, 1}) == doctest::Approx(1.0));
    CHECK(flying_point_ratio({7}) == 0.0);
    CHECK(flying_point_ratio({0, 1}) == doctest::Approx(1.0));  // both edges isolated
    CHECK_THROWS_AS(flying_point_ratio({}), DataError);
}

TEST_CASE("flying point ratio is invariant under relabeling") {
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 50; ++trial) {
        auto labels = random_labels(rng);
        std::vector<int> mapped(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) mapped[i] = 100 - labels[i];
        CHECK(flying_point_ratio(labels) == doctest::Approx(flying_point_ratio(mapped)));
    }
}

TEST_CASE("plurality fixtures") {
    auto a = candidate("P1", {0, 0, 1});
    auto b = candidate("P2", {0, 1, 1});
    auto c = candidate("P3", {1, 1, 1});
    CHECK(candidate_plurality({a, b, c}) == std::vector<int>{0, 1, 1});
    // Two-way tie at every depth: the earliest candidate in panel order wins.
    CHECK(candidate_plurality({a, b}) == std::vector<int>{0, 0, 1});
    CHECK_THROWS_AS(candidate_plurality({}), DataError);
    auto short_cand = candidate("P4", {0});
    CHECK_THROWS_AS(candidate_plurality({a, short_cand}), DataError);
}

TEST_CASE("unanimous candidates skip the backend") {
    auto profile = small_profile(3);
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    ScriptedBackend backend({"```\n0: B\n1: B\n2: B\n```\n"});
    auto candidates = {candidate("P1", {0, 0, 1}), candidate("P2", {0, 0, 1})};
    auto refined = refine_llm(backend, profile, candidates, default_guidelines(), schema, params);
    CHECK(refined.labels == std::vector<int>{0, 0, 1});
    CHECK(refined.method == "llm");
    CHECK(refined.backend_calls == 0);
    CHECK(backend.calls() == 0);
    CHECK(refined.rationale.find("agree") != std::string::npos);
}

TEST_CASE("a fallback candidate does not break unanimity of the parseable ones") {
    auto profile = small_profile(2);
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    ScriptedBackend backend({"unused"});
    auto refined = refine_llm(backend, profile,
                              {candidate("P1", {1, 1}), candidate("P2", {0, 0}, false),
                               candidate("P3", {1, 1})},
                              default_guidelines(), schema, params);
    CHECK(refined.labels == std::vector<int>{1, 1});
    CHECK(refined.backend_calls == 0);
}

TEST_CASE("conflicting candidates are resolved by the backend") {
    auto profile = small_profile(2);
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    ScriptedBackend backend({"continuity favors B.\n```\n0: B\n1: B\n```\n"});
    auto refined = refine_llm(backend, profile,
                              {candidate("P1", {0, 1}), candidate("P2", {1, 1})},
                              default_guidelines(), schema, params);
    CHECK(refined.method == "llm");
    CHECK(refined.labels == std::vector<int>{1, 1});
    CHECK(refined.backend_calls == 1);
    CHECK(refined.rationale == "continuity favors B.");
    // The refiner prompt shows the window, the attributed candidates, and the rules.
    CHECK(backend.last_user.find("## Window") != std::string::npos);
    CHECK(backend.last_user.find("## Candidates") != std::string::npos);
    CHECK(backend.last_user.find("P1") != std::string::npos);
    CHECK(backend.last_user.find("## Guidelines") != std::string::npos);
    CHECK(backend.last_user.find("## Raw values") != std::string::npos);
    CHECK(backend.last_user.find("candidates=[A|B]") != std::string::npos);
}

TEST_CASE("an unparseable refiner answer is retried once with a reminder") {
    auto profile = small_profile(2);
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    ScriptedBackend backend({"word salad", "```\n0: A\n1: A\n```\n"});
    auto refined = refine_llm(backend, profile,
                              {candidate("P1", {0, 1}), candidate("P2", {1, 0})},
                              default_guidelines(), schema, params);
    CHECK(refined.method == "llm");
    CHECK(refined.labels == std::vector<int>{0, 0});
    CHECK(refined.backend_calls == 2);
    CHECK(backend.last_user.find("Reminder") != std::string::npos);
}

TEST_CASE("twice-malformed refiner output falls back to smoothed plurality") {
    auto profile = small_profile(5);
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    ScriptedBackend backend({"junk", "junk again"});
    // Plurality of the two candidates is A,A,B,A,A; smoothing flattens it.
    auto refined = refine_llm(backend, profile,
                              {candidate("P1", {0, 0, 1, 0, 0}), candidate("P2", {0, 1, 1, 1, 0})},
                              default_guidelines(), schema, params);
    CHECK(refined.method == "deterministic");
    CHECK(refined.labels == std::vector<int>{0, 0, 0, 0, 0});
    CHECK(refined.backend_calls == 2);
    CHECK(refined.note.find("unparseable") != std::string::npos);
}

TEST_CASE("zero parseable candidates smooth the fallback labels without any call") {
    auto profile = small_profile(5);
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    ScriptedBackend backend({"unused"});
    auto refined = refine_llm(backend, profile,
                              {candidate("P1", {0, 0, 1, 0, 0}, false),
                               candidate("P2", {1, 1, 1, 1, 1}, false)},
                              default_guidelines(), schema, params);
    CHECK(refined.method == "deterministic");
    CHECK(refined.labels == std::vector<int>{0, 0, 0, 0, 0});
    CHECK(refined.backend_calls == 0);
    CHECK(backend.calls() == 0);
    CHECK(refined.note.find("no parseable candidates") != std::string::npos);
}

TEST_CASE("refine_llm validates its inputs") {
    auto profile = small_profile(2);
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    ScriptedBackend backend({"x"});
    CHECK_THROWS_AS(refine_llm(backend, profile, {}, default_guidelines(), schema, params),
                    DataError);
    CHECK_THROWS_AS(refine_llm(backend, profile, {candidate("P1", {0})}, default_guidelines(),
                               schema, params),
                    DataError);
    GeologyGuidelines empty;
    CHECK_THROWS_AS(refine_llm(backend, profile, {candidate("P1", {0, 1})}, empty, schema, params),
                    ConfigError);
}

TEST_CASE("smoothing rejects degenerate arguments") {
    CHECK_THROWS_AS(refine_deterministic({}, 2), DataError);
    CHECK_THROWS_AS(refine_deterministic({0, 1}, 0), ConfigError);
}

}
