#include <doctest.h>

#include "lithoroute/common.hpp"
#include "lithoroute/config.hpp"
#include "lithoroute/synthetic.hpp"
#include "test_util.hpp"

using namespace lithoroute;

namespace {

const char* kMinimalConfig =
    "[data]\n"
    "csv = data.csv\n"
    "mapping = mapping.conf\n"
    "[split]\n"
    "train = W1, W2\n"
    "val = W3\n"
    "test = W4\n";

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults survive a minimal file") {
    auto cfg = parse_config(kMinimalConfig);
    CHECK(cfg.data_csv == "data.csv");
    CHECK(cfg.split.train_wells == std::vector<std::string>{"W1", "W2"});
    CHECK(cfg.split.val_wells == std::vector<std::string>{"W3"});
    CHECK(cfg.base_model == "mlp");
    CHECK(cfg.train.window == 16);
    CHECK(cfg.train.hidden == 128);
    CHECK_FALSE(cfg.tau.has_value());
    CHECK(cfg.epsilon == 0.01);
    CHECK(cfg.grid == 101);
    CHECK(cfg.tools.knowledge);
    CHECK(cfg.tools.history);
    CHECK(cfg.delta == 8);
    CHECK(cfg.k == 5);
    CHECK(cfg.h == 4);
    CHECK(cfg.reasoning_window == 4);
    CHECK(cfg.personas.size() == 3);
    CHECK(cfg.sampling.temperature == 0.6);
    CHECK(cfg.sampling.top_p == 0.7);
    CHECK(cfg.sampling.max_tokens == 8192);
    CHECK(cfg.sampling.votes == 3);
    CHECK(cfg.backend_kind == "mock");
    CHECK(cfg.refine_mode == "llm");
    CHECK(cfg.min_run == 2);
    CHECK(cfg.seed == 7);
    CHECK(cfg.parallelism == 1);
    cfg.validate();
}

TEST_CASE("the demo workspace config parses and validates") {
    auto cfg = parse_config(demo_config_text("/tmp/x"));
    cfg.validate();
    CHECK(cfg.split.test_wells == std::vector<std::string>{"W7"});
    CHECK(cfg.backend_kind == "mock");
}

TEST_CASE("full key coverage") {
    auto cfg = parse_config(
        "[data]\n"
        "csv = a.csv\nmapping = m.conf\nkb = kb.txt\nguidelines = g.txt\n"
        "[split]\ntrain = W1\nval = W2\ntest = W3\n"
        "[base]\nmodel = centroid\nwindow = 8\nhidden = 32\nlearning_rate = 0.01\n"
        "epochs = 5\nbatch_size = 16\npatience = 3\n"
        "[routing]\ntau = 0.75\nepsilon = 0.02\ngrid = 51\n"
        "[tools]\nknowledge = false\ntrend = true\nneighbors = false\nhistory = true\n"
        "delta = 4\nk = 9\nh = 2\n"
        "[reasoning]\nwindow = 6\npersonas = analyst, physicist\nprompt_budget = 9000\n"
        "[sampling]\ntemperature = 0.3\ntop_p = 0.9\nmax_tokens = 512\nvotes = 5\n"
        "[backend]\nkind = remote\nattempts = 4\nbackoff_ms = 50\n"
        "[refine]\nmode = deterministic\nmin_run = 3\n"
        "[run]\ndir = out\nseed = 11\nparallelism = 4\n");
    cfg.validate();
    CHECK(cfg.base_model == "centroid");
    CHECK(cfg.train.window == 8);
    CHECK(cfg.train.learning_rate == 0.01);
    CHECK(cfg.train.patience == 3);
    REQUIRE(cfg.tau.has_value());
    CHECK(*cfg.tau == 0.75);
    CHECK(cfg.grid == 51);
    CHECK_FALSE(cfg.tools.knowledge);
    CHECK(cfg.tools.trend);
    CHECK_FALSE(cfg.tools.neighbors);
    CHECK(cfg.delta == 4);
    CHECK(cfg.personas == std::vector<std::string>{"analyst", "physicist"});
    CHECK(cfg.prompt_budget == 9000);
    CHECK(cfg.sampling.votes == 5);
    CHECK(cfg.backend_kind == "remote");
    CHECK(cfg.backend_attempts == 4);
    CHECK(cfg.backend_backoff_ms == 50);
    CHECK(cfg.refine_mode == "deterministic");
    CHECK(cfg.min_run == 3);
    CHECK(cfg.run_dir == "out");
    CHECK(cfg.seed == 11);
    CHECK(cfg.parallelism == 4);
}

TEST_CASE("parser rejects malformed input") {
    CHECK_THROWS_AS(parse_config("csv = a\n"), ConfigError);  // key before any section
    CHECK_THROWS_AS(parse_config("[data]\ncsv = a\ncsv = b\n"), ConfigError);  // duplicate
    try {
        parse_config("[data]\nsideways = x\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("unknown config key: data.sideways") !=
              std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[data\ncsv = a\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[data]\nno equals sign\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[routing]\ntau = elephant\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[tools]\nknowledge = maybe\n"), ConfigError);
}

TEST_CASE("tau accepts auto as absent") {
    auto cfg = parse_config("[routing]\ntau = 0.4\n");
    REQUIRE(cfg.tau.has_value());
    apply_override(cfg, "routing.tau", "auto");
    CHECK_FALSE(cfg.tau.has_value());
}

TEST_CASE("validation rejects out-of-range knobs") {
    auto ok = parse_config(kMinimalConfig);
    ok.validate();

    auto bad = ok;
    bad.base_model = "transformer";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.tau = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.epsilon = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.grid = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.k = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.h = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.reasoning_window = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.personas = {"analyst", "analyst"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.personas = {"nobody"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.sampling.votes = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.backend_kind = "carrier-pigeon";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.refine_mode = "sometimes";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.min_run = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.parallelism = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ok;
    bad.run_dir = "";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("run seed flows into training and sampling") {
    auto cfg = parse_config(kMinimalConfig);
    cfg.seed = 99;
    CHECK(cfg.effective_train().seed == 99);
    CHECK(cfg.effective_sampling().seed == 99);
    CHECK(cfg.effective_sampling().votes == cfg.sampling.votes);
}

TEST_CASE("panel resolves persona aliases in order") {
    auto cfg = parse_config(kMinimalConfig);
    auto panel = cfg.panel();
    REQUIRE(panel.size() == 3);
    CHECK(panel[0].name == "DataCentricAnalyst");
    cfg.personas = {"physicist"};
    CHECK(cfg.panel().size() == 1);
    CHECK(cfg.panel()[0].name == "RuleBasedPhysicist");
}

TEST_CASE("apply_override round-trips every exported key") {
    auto cfg = parse_config(kMinimalConfig);
    auto kv = cfg.to_key_values();
    CHECK(kv.count("data.csv") == 1);
    CHECK(kv.count("routing.tau") == 1);
    CHECK(kv.count("run.seed") == 1);
    auto copy = cfg;
    for (const auto& [key, value] : kv) apply_override(copy, key, value);
    CHECK(copy.to_key_values() == kv);
    CHECK_THROWS_AS(apply_override(copy, "no.such.key", "1"), ConfigError);
    CHECK_THROWS_AS(apply_override(copy, "routing.tau", "nonsense"), ConfigError);
}

TEST_CASE("subset hashes track only the selected prefixes") {
    auto cfg = parse_config(kMinimalConfig);
    auto base = cfg.subset_hash({"base.", "run.seed"});

    auto moved = cfg;
    moved.run_dir = "elsewhere";
    moved.parallelism = 8;
    CHECK(moved.subset_hash({"base.", "run.seed"}) == base);

    auto retuned = cfg;
    retuned.train.hidden = 64;
    CHECK(retuned.subset_hash({"base.", "run.seed"}) != base);

    auto reseeded = cfg;
    reseeded.seed = 123;
    CHECK(reseeded.subset_hash({"base.", "run.seed"}) != base);
    CHECK(reseeded.subset_hash({"base."}) == cfg.subset_hash({"base."}));
}

TEST_CASE("config files load from disk") {
    TempDir tmp;
    write_text_file(tmp.file("p.conf"), kMinimalConfig);
    auto cfg = load_config(tmp.file("p.conf"));
    CHECK(cfg.data_csv == "data.csv");
    CHECK_THROWS_AS(load_config(tmp.file("absent.conf")), IoError);
}

}
