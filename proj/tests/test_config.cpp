#include <doctest.h>

#include "usflab/config.hpp"
#include "usflab/experiment.hpp"

using namespace usflab;

TEST_SUITE("config") {

TEST_CASE("sections, comments, and whitespace") {
    ConfigFile cfg = ConfigFile::parse_string(R"(
# leading comment
[experiment]
dim = 8           ; trailing comment
model = non-usf
out = results/run1

[train]
max_epochs=42
)");
    CHECK(cfg.get("experiment", "dim") == std::string("8"));
    CHECK(cfg.get("experiment", "model") == std::string("non-usf"));
    CHECK(cfg.get("experiment", "out") == std::string("results/run1"));
    CHECK(cfg.get_size_or("train", "max_epochs", 0) == 42);
    CHECK_FALSE(cfg.get("train", "missing").has_value());
    CHECK(cfg.get_or("train", "missing", "fallback") == "fallback");
    CHECK(cfg.get_double_or("train", "missing", 1.5) == 1.5);
}

TEST_CASE("malformed lines are rejected with a line number") {
    try {
        ConfigFile::parse_string("[experiment]\nnot a key value line\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(ConfigFile::parse_string("[unclosed\n"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse_string("= value\n"), ConfigError);
}

TEST_CASE("type errors") {
    ConfigFile cfg = ConfigFile::parse_string("[a]\nx = abc\ny = 1.5\nz = -2\n");
    CHECK_THROWS_AS(cfg.get_double_or("a", "x", 0.0), ConfigError);
    CHECK_THROWS_AS(cfg.get_size_or("a", "y", 0), ConfigError);
    CHECK_THROWS_AS(cfg.get_size_or("a", "z", 0), ConfigError);
}

TEST_CASE("experiment config from file keeps defaults for missing keys") {
    ExperimentConfig def;
    ConfigFile cfg = ConfigFile::parse_string(R"(
[experiment]
dim = 8
model = svdd
seed = 99

[sweep]
trials = 3
batch_sizes = 32,64

[train]
max_epochs = 17
)");
    ExperimentConfig c = ExperimentConfig::from_config(cfg);
    CHECK(c.dim == 8);
    CHECK(c.model == ModelKind::Svdd);
    CHECK(c.seed == 99);
    CHECK(c.train_samples == def.train_samples);
    CHECK(c.val_samples == def.val_samples);
    CHECK(c.search.trials == 3);
    CHECK(c.search.batch_sizes == std::vector<std::size_t>{32, 64});
    CHECK(c.max_epochs == 17);
    CHECK(c.patience == def.patience);
}

TEST_CASE("experiment config validation") {
    ExperimentConfig c;
    c.dim = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.test_samples = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("model kind names round trip") {
    for (ModelKind k : {ModelKind::Usf, ModelKind::NonUsf, ModelKind::Svdd, ModelKind::VaeUsf,
                        ModelKind::VaeNonUsf}) {
        CHECK(parse_model_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_model_kind("bogus"), ConfigError);
}

} // TEST_SUITE
