#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include <nlohmann/json.hpp>

#include "lithoroute/common.hpp"
#include "lithoroute/reasoning.hpp"
#include "test_util.hpp"

using namespace lithoroute;
using nlohmann::json;

namespace {

EvidenceProfile two_depth_profile(std::vector<ProbabilityVector> probs = {{0.8, 0.2}, {0.3, 0.7}}) {
    DepthWindow window;
    window.well_id = "W";
    window.start = 12;
    window.end = 13;
    window.channel_names = {"GR"};
    window.features = {{55.0, 81.0}};
    ToolFlags off{false, false, false, false};
    return build_evidence_profile(window, std::move(probs), std::nullopt, std::nullopt,
                                  std::nullopt, std::nullopt, off);
}

EvidenceProfile full_profile() {
    DepthWindow window;
    window.well_id = "W";
    window.start = 4;
    window.end = 5;
    window.channel_names = {"GR"};
    window.features = {{55.0, 81.0}};

    KnowledgeExcerpt excerpt;
    excerpt.features = {{"GR", "gamma ray"}};
    excerpt.labels = {{"A", "clean sand"}};
    excerpt.guidelines = {"prefer continuity"};

    TrendSummary trend;
    trend.segment_start = 2;
    trend.segment_end = 7;
    trend.delta = 2;
    trend.channels = {{"GR", 0.5, 60.0, 4.0, "gradual-transition"}};

    NeighborSet set;
    set.neighbors.push_back({0, 0.1, 1, "T1", 3, {0.5}});
    std::vector<NeighborSet> neighbors{set, set};

    HistoryWindow history{{0, 0}};

    ToolFlags flags;
    return build_evidence_profile(window, {{0.8, 0.2}, {0.3, 0.7}}, excerpt, trend, neighbors,
                                  history, flags);
}

// Replays a fixed list of completions in call order.
class ScriptedBackend : public ReasonerBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> completions)
        : completions_(std::move(completions)) {}

    std::string complete(const std::string&, const std::string&, const SamplingParams&,
                         std::uint64_t) override {
        if (next_ >= completions_.size()) return completions_.back();
        return completions_[next_++];
    }
    std::string kind() const override { return "scripted"; }

    std::size_t calls() const { return next_; }

private:
    std::vector<std::string> completions_;
    std::size_t next_ = 0;
};

class CountingBackend : public ReasonerBackend {
public:
    explicit CountingBackend(std::string reply) : reply_(std::move(reply)) {}
    std::string complete(const std::string&, const std::string&, const SamplingParams&,
                         std::uint64_t) override {
        ++calls;
        return reply_;
    }
    std::string kind() const override { return "counting"; }
    std::size_t calls = 0;

private:
    std::string reply_;
};

struct LocalServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit LocalServer(httplib::Server::Handler handler) {
        server.Post("/v1/chat/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }

    ~LocalServer() {
        server.stop();
        thread.join();
    }
};

std::string chat_reply(const std::string& content) {
    json j;
    j["choices"] = {{{"message", {{"role", "assistant"}, {"content", content}}}}};
    return j.dump();
}

const char* kGoodBlock = "Looks clear from the hints.\n```\n0: A\n1: B\n```\n";

}  // namespace

TEST_SUITE("reasoning") {

TEST_CASE("exactly three personas in panel order") {
    const auto& personas = default_personas();
    REQUIRE(personas.size() == 3);
    CHECK(personas[0].name == "DataCentricAnalyst");
    CHECK(personas[1].name == "ContextAwareStratigrapher");
    CHECK(personas[2].name == "RuleBasedPhysicist");
    CHECK(personas[0].template_id == "analyst");
    CHECK(persona_by_name("analyst").name == "DataCentricAnalyst");
    CHECK(persona_by_name("RuleBasedPhysicist").template_id == "physicist");
    CHECK(persona_by_name("STRATIGRAPHER").name == "ContextAwareStratigrapher");
    CHECK_THROWS_AS(persona_by_name("geologist"), ConfigError);
}

TEST_CASE("sampling parameter validation") {
    SamplingParams params;
    params.validate();
    CHECK(params.temperature == 0.6);
    CHECK(params.top_p == 0.7);
    CHECK(params.max_tokens == 8192);
    CHECK(params.votes == 3);

    SamplingParams bad = params;
    bad.votes = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = params;
    bad.votes = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = params;
    bad.top_p = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = params;
    bad.temperature = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = params;
    bad.votes = 5;
    bad.validate();
}

TEST_CASE("prompt rendering is deterministic") {
    auto profile = full_profile();
    LabelSchema schema{{"A", "B"}};
    auto persona = persona_by_name("analyst");
    auto a = render_persona_prompt(persona, profile, schema);
    auto b = render_persona_prompt(persona, profile, schema);
    CHECK(a.system_text == b.system_text);
    CHECK(a.user_text == b.user_text);
    CHECK(a.system_text.find("DataCentricAnalyst") != std::string::npos);
}

TEST_CASE("personas order their emphasized sections first") {
    auto profile = full_profile();
    LabelSchema schema{{"A", "B"}};

    auto analyst = render_persona_prompt(persona_by_name("analyst"), profile, schema).user_text;
    CHECK(analyst.find("## Base probabilities") < analyst.find("## Neighbors"));
    CHECK(analyst.find("## Neighbors") < analyst.find("## Trend"));

    auto strat = render_persona_prompt(persona_by_name("stratigrapher"), profile, schema).user_text;
    CHECK(strat.find("## Trend") < strat.find("## Base probabilities"));
    CHECK(strat.find("## History") < strat.find("## Base probabilities"));

    auto phys = render_persona_prompt(persona_by_name("physicist"), profile, schema).user_text;
    CHECK(phys.find("## Knowledge") < phys.find("## Base probabilities"));

    for (const auto* text : {&analyst, &strat, &phys}) {
        CHECK(text->find("## Window") == 0);
        CHECK(text->rfind("## Raw values") > text->rfind("## Base probabilities"));
    }
}

TEST_CASE("ablated profiles render without their sections and warn the persona") {
    auto profile = two_depth_profile();
    LabelSchema schema{{"A", "B"}};
    auto render = render_persona_prompt(persona_by_name("analyst"), profile, schema);
    CHECK(render.user_text.find("## Neighbors") == std::string::npos);
    CHECK(render.user_text.find("## Trend") == std::string::npos);
    CHECK(render.user_text.find("## Base probabilities") != std::string::npos);
    CHECK(render.user_text.find("## Raw values") != std::string::npos);
    REQUIRE_FALSE(render.warnings.empty());
    CHECK(render.warnings[0].find("neighbors") != std::string::npos);
}

TEST_CASE("a character budget drops optional sections in fixed order") {
    auto profile = full_profile();
    LabelSchema schema{{"A", "B"}};
    auto persona = persona_by_name("analyst");
    auto unlimited = render_persona_prompt(persona, profile, schema, 0);
    CHECK(unlimited.dropped_sections.empty());

    auto squeezed = render_persona_prompt(persona, profile, schema,
                                          unlimited.system_text.size() +
                                              unlimited.user_text.size() - 1);
    REQUIRE_FALSE(squeezed.dropped_sections.empty());
    CHECK(squeezed.dropped_sections[0] == "neighbors");
    CHECK(squeezed.user_text.find("## Neighbors") == std::string::npos);

    auto tiny = render_persona_prompt(persona, profile, schema, 10);
    CHECK(tiny.user_text.find("## Window") == 0);  // preamble survives
    REQUIRE_FALSE(tiny.warnings.empty());
    CHECK(tiny.dropped_sections.size() == 6);
}

TEST_CASE("answer block parsing fixtures") {
    LabelSchema schema{{"A", "B"}};
    std::string err;

    auto good = parse_answer_block(kGoodBlock, schema, 2, &err);
    REQUIRE(good.has_value());
    CHECK(*good == std::vector<int>{0, 1});

    auto lower = parse_answer_block("```\n0: a\n1: b\n```\n", schema, 2, &err);
    REQUIRE(lower.has_value());
    CHECK(*lower == std::vector<int>{0, 1});

    auto last = parse_answer_block("```\n0: A\n```\nrethinking\n```\n0: B\n```\n", schema, 1, &err);
    REQUIRE(last.has_value());
    CHECK(*last == std::vector<int>{1});

    CHECK_FALSE(parse_answer_block("no block here", schema, 2, &err).has_value());
    CHECK(err == "no fenced answer block");

    CHECK_FALSE(parse_answer_block("```\n0: A\n```\n", schema, 2, &err).has_value());
    CHECK(err.find("misses depth 1") != std::string::npos);

    CHECK_FALSE(parse_answer_block("```\n0: A\n0: B\n```\n", schema, 1, &err).has_value());
    CHECK(err.find("twice") != std::string::npos);

    CHECK_FALSE(parse_answer_block("```\n0: Q\n```\n", schema, 1, &err).has_value());
    CHECK(err.find("unknown label") != std::string::npos);

    CHECK_FALSE(parse_answer_block("```\n5: A\n```\n", schema, 1, &err).has_value());
    CHECK(err.find("outside") != std::string::npos);

    CHECK_FALSE(parse_answer_block("```\nnonsense\n```\n", schema, 1, &err).has_value());
}

TEST_CASE("rationale is the text before the final block") {
    CHECK(completion_rationale(kGoodBlock) == "Looks clear from the hints.");
    CHECK(completion_rationale("no block") == "no block");
}

TEST_CASE("mock backend follows hint priority") {
    SamplingParams params;
    MockBackend mock;
    LabelSchema schema{{"A", "B"}};

    std::string prompt =
        "Depths: 2\nValid labels: A, B\n"
        "depth 0: nearest=[B]\n"
        "depth 0: argmax=[A]\n"
        "depth 1: argmax=[A]\n";
    auto text = mock.complete("sys", prompt, params, 1);
    auto labels = parse_answer_block(text, schema, 2, nullptr);
    REQUIRE(labels.has_value());
    CHECK((*labels)[0] == 1);  // nearest outranks argmax
    CHECK((*labels)[1] == 0);

    std::string plurality =
        "Depths: 1\nValid labels: A, B\n"
        "depth 0: candidates=[A|B|A]\n";
    auto voted = parse_answer_block(mock.complete("sys", plurality, params, 1), schema, 1, nullptr);
    REQUIRE(voted.has_value());
    CHECK((*voted)[0] == 0);
}

TEST_CASE("mock backend is a pure function of prompt and seed") {
    SamplingParams params;
    MockBackend mock;
    std::string prompt = "Depths: 3\nValid labels: A, B, C\n";
    CHECK(mock.complete("s", prompt, params, 9) == mock.complete("s", prompt, params, 9));
    // Unhinted depths come from the seed hash; at least one seed pair differs.
    bool differs = false;
    for (std::uint64_t s = 0; s < 8 && !differs; ++s)
        differs = mock.complete("s", prompt, params, s) != mock.complete("s", prompt, params, s + 1);
    CHECK(differs);
    CHECK(mock.complete("s", "no preamble", params, 1).find("cannot answer") != std::string::npos);
}

TEST_CASE("a fixed-echo backend passes its block through persona inference") {
    auto profile = two_depth_profile();
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    params.votes = 1;
    ScriptedBackend backend({kGoodBlock});
    auto cand = infer_persona(backend, persona_by_name("analyst"), profile, schema, params);
    CHECK(cand.parse_ok);
    CHECK(cand.labels == std::vector<int>{0, 1});
    CHECK(cand.persona == "DataCentricAnalyst");
    CHECK(cand.failed_votes == 0);
    CHECK(cand.rationale == "Looks clear from the hints.");
    CHECK(cand.raw_completions.size() == 1);
}

TEST_CASE("majority voting picks the two-of-three answer") {
    auto profile = two_depth_profile();
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    params.votes = 3;
    ScriptedBackend backend({"```\n0: A\n1: A\n```\n",
                             "```\n0: A\n1: B\n```\n",
                             "```\n0: B\n1: B\n```\n"});
    auto cand = infer_persona(backend, persona_by_name("analyst"), profile, schema, params);
    CHECK(cand.parse_ok);
    CHECK(cand.labels == std::vector<int>{0, 1});
    CHECK(backend.calls() == 3);
}

TEST_CASE("vote ties break toward the higher base probability") {
    auto profile = two_depth_profile({{0.8, 0.2}, {0.3, 0.7}});
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    params.votes = 3;
    // Vote 2 fails twice (initial + reminder retry), leaving a 1-1 tie.
    ScriptedBackend backend({"```\n0: A\n1: A\n```\n",
                             "garbled", "still garbled",
                             "```\n0: B\n1: B\n```\n"});
    auto cand = infer_persona(backend, persona_by_name("analyst"), profile, schema, params);
    CHECK(cand.parse_ok);
    CHECK(cand.failed_votes == 1);
    CHECK(cand.labels == std::vector<int>{0, 1});  // 0.8 favors A, 0.7 favors B
    CHECK(cand.note.find("1 of 3") != std::string::npos);
    CHECK(cand.raw_completions.size() == 4);
}

TEST_CASE("an unparseable vote is retried once with a reminder") {
    auto profile = two_depth_profile();
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    params.votes = 1;
    ScriptedBackend backend({"not an answer", kGoodBlock});
    auto cand = infer_persona(backend, persona_by_name("analyst"), profile, schema, params);
    CHECK(cand.parse_ok);
    CHECK(cand.failed_votes == 0);
    CHECK(cand.labels == std::vector<int>{0, 1});
    CHECK(backend.calls() == 2);
    CHECK(format_reminder(2).find("0 to 1") != std::string::npos);
}

TEST_CASE("permanently malformed completions fall back to the base argmax") {
    auto profile = two_depth_profile({{0.8, 0.2}, {0.3, 0.7}});
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    params.votes = 1;
    ScriptedBackend backend({"junk", "more junk"});
    auto cand = infer_persona(backend, persona_by_name("analyst"), profile, schema, params);
    CHECK_FALSE(cand.parse_ok);
    CHECK(cand.labels == std::vector<int>{0, 1});
    CHECK(cand.failed_votes == 1);
    CHECK(cand.note.find("base argmax") != std::string::npos);
}

TEST_CASE("the panel yields one candidate per persona in order") {
    auto profile = two_depth_profile();
    LabelSchema schema{{"A", "B"}};
    SamplingParams params;
    params.votes = 1;
    MockBackend mock;
    auto panel = run_panel(mock, profile, schema, params, default_personas());
    REQUIRE(panel.size() == 3);
    CHECK(panel[0].persona == "DataCentricAnalyst");
    CHECK(panel[1].persona == "ContextAwareStratigrapher");
    CHECK(panel[2].persona == "RuleBasedPhysicist");
    for (const auto& cand : panel) {
        CHECK(cand.parse_ok);
        CHECK(cand.labels.size() == 2);
    }
    CHECK_THROWS_AS(run_panel(mock, profile, schema, params, {}), ConfigError);
}

TEST_CASE("base argmax labels read the profile probabilities") {
    auto profile = two_depth_profile({{0.8, 0.2}, {0.3, 0.7}});
    CHECK(base_argmax_labels(profile) == std::vector<int>{0, 1});
}

TEST_CASE("caching backend writes through once and replays afterwards") {
    TempDir tmp;
    CountingBackend inner(kGoodBlock);
    CachingBackend cache(inner, tmp.file("cache"));
    SamplingParams params;

    CHECK(cache.complete("sys", "user", params, 5) == kGoodBlock);
    CHECK(inner.calls == 1);
    CHECK(cache.misses() == 1);

    CHECK(cache.complete("sys", "user", params, 5) == kGoodBlock);
    CHECK(inner.calls == 1);
    CHECK(cache.hits() == 1);

    CHECK(cache.complete("sys", "user", params, 6) == kGoodBlock);
    CHECK(inner.calls == 2);

    // A fresh instance over the same directory replays from disk.
    CachingBackend warm(inner, tmp.file("cache"));
    CHECK(warm.complete("sys", "user", params, 5) == kGoodBlock);
    CHECK(inner.calls == 2);
    CHECK(warm.hits() == 1);
    CHECK(warm.kind() == "counting");
}

TEST_CASE("a corrupt cache entry is re-queried, not trusted") {
    TempDir tmp;
    CountingBackend inner(kGoodBlock);
    CachingBackend cache(inner, tmp.file("cache"));
    SamplingParams params;
    cache.complete("sys", "user", params, 5);
    REQUIRE(inner.calls == 1);

    for (const auto& entry : std::filesystem::directory_iterator(tmp.file("cache")))
        write_text_file(entry.path().string(), "{broken");
    CHECK(cache.complete("sys", "user", params, 5) == kGoodBlock);
    CHECK(inner.calls == 2);
}

TEST_CASE("http backend round trip against a local endpoint") {
    std::atomic<int> requests{0};
    json seen_body;
    std::string seen_auth;
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        seen_body = json::parse(req.body);
        seen_auth = req.get_header_value("Authorization");
        res.set_content(chat_reply("the completion text"), "application/json");
    });

    HttpBackend backend(server.url(), "test-model", "secret-key", 3, 1);
    SamplingParams params;
    auto text = backend.complete("system words", "user words", params, 42);
    CHECK(text == "the completion text");
    CHECK(requests == 1);
    CHECK(backend.kind() == "remote");
    CHECK(seen_auth == "Bearer secret-key");
    CHECK(seen_body.at("model") == "test-model");
    CHECK(seen_body.at("messages").at(0).at("role") == "system");
    CHECK(seen_body.at("messages").at(0).at("content") == "system words");
    CHECK(seen_body.at("messages").at(1).at("role") == "user");
    CHECK(seen_body.at("messages").at(1).at("content") == "user words");
    CHECK(seen_body.at("temperature").get<double>() == doctest::Approx(0.6));
    CHECK(seen_body.at("top_p").get<double>() == doctest::Approx(0.7));
    CHECK(seen_body.at("max_tokens").get<std::size_t>() == 8192);
    CHECK(seen_body.at("seed").get<std::uint64_t>() == 42);
}

TEST_CASE("transient server errors are retried with backoff until success") {
    std::atomic<int> requests{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        int n = ++requests;
        if (n <= 2) {
            res.status = 500;
            res.set_content("flaky", "text/plain");
        } else {
            res.set_content(chat_reply("recovered"), "application/json");
        }
    });
    HttpBackend backend(server.url(), "m", "", 3, 1);
    SamplingParams params;
    CHECK(backend.complete("s", "u", params, 1) == "recovered");
    CHECK(requests == 3);
}

TEST_CASE("exhausted retries raise a backend error naming the attempt count") {
    std::atomic<int> requests{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++requests;
        res.status = 503;
    });
    HttpBackend backend(server.url(), "m", "", 2, 1);
    SamplingParams params;
    try {
        backend.complete("s", "u", params, 1);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(std::string(e.what()).find("unreachable after 2 attempts") != std::string::npos);
    }
    CHECK(requests == 2);
}

TEST_CASE("non-retryable statuses fail immediately") {
    std::atomic<int> requests{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++requests;
        res.status = 404;
        res.set_content("nope", "text/plain");
    });
    HttpBackend backend(server.url(), "m", "", 3, 1);
    SamplingParams params;
    CHECK_THROWS_AS(backend.complete("s", "u", params, 1), BackendError);
    CHECK(requests == 1);
}

TEST_CASE("a malformed success body is a backend error") {
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content("plain text, no json", "text/plain");
    });
    HttpBackend backend(server.url(), "m", "", 1, 1);
    SamplingParams params;
    try {
        backend.complete("s", "u", params, 1);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(std::string(e.what()).find("malformed completion response") != std::string::npos);
    }
}

TEST_CASE("backend construction validates the url and model") {
    CHECK_THROWS_AS(HttpBackend("https://host/v1", "m", ""), ConfigError);
    CHECK_THROWS_AS(HttpBackend("ftp://host", "m", ""), ConfigError);
    CHECK_THROWS_AS(HttpBackend("host-without-scheme", "m", ""), ConfigError);
    CHECK_THROWS_AS(HttpBackend("http://host", "", ""), ConfigError);
    CHECK_THROWS_AS(HttpBackend("http://host", "m", "", 0), ConfigError);
}

TEST_CASE("environment-driven construction reports missing variables") {
    unsetenv("LITHOROUTE_API_URL");
    unsetenv("LITHOROUTE_MODEL");
    unsetenv("LITHOROUTE_API_KEY");
    try {
        make_http_backend_from_env();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("LITHOROUTE_API_URL") != std::string::npos);
    }
    setenv("LITHOROUTE_API_URL", "http://127.0.0.1:1", 1);
    CHECK_THROWS_AS(make_http_backend_from_env(), ConfigError);
    setenv("LITHOROUTE_MODEL", "m", 1);
    auto backend = make_http_backend_from_env(5, 9);
    CHECK(backend->kind() == "remote");
    unsetenv("LITHOROUTE_API_URL");
    unsetenv("LITHOROUTE_MODEL");
}

}
