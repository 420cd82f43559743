#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "clab/csv.hpp"
#include "clab/lab.hpp"

using namespace clab;
using nlohmann::json;

namespace {

std::string config_error_field(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

ExperimentConfig small_config() {
    return parse_config(json::parse(R"({
        "ladder": [120, 240],
        "cutoff": {"fixed_k_tilde": 3},
        "eigen_count": 5,
        "quadrature": 512,
        "ops_draws": 4,
        "seeds": [0, 1],
        "responses": {"dictionary": 6, "signals": 2},
        "training": {"l": 5, "dictionary": 24, "heldout": 2},
        "gap_demo": {"lambda_max": 500}
    })"));
}

}  // namespace

TEST_CASE("csv quoting and numbers") {
    CHECK(CsvWriter::quote("plain") == "plain");
    CHECK(CsvWriter::quote("a,b") == "\"a,b\"");
    CHECK(CsvWriter::quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(CsvWriter::quote("two\nlines") == "\"two\nlines\"");
    CHECK(CsvWriter::number(0.1) == "0.1");
    CHECK(CsvWriter::number(1.0 / 3.0) == "0.333333333333");
    CHECK(CsvWriter::number(std::nan("")) == "nan");
    CHECK(CsvWriter::number(-1.0 / 0.0) == "-inf");

    CsvWriter w({"x", "label"});
    w.add(1).add("a,b").end_row();
    w.add(2.5).add(true).end_row();
    CHECK(w.rows() == 2);
    CHECK(w.text() == "x,label\n1,\"a,b\"\n2.5,1\n");
    w.add(3);
    CHECK_THROWS_AS(w.end_row(), InvalidState);
}

TEST_CASE("config defaults and round trip") {
    const auto c = parse_config(json::object());
    CHECK(c.manifold.kind == "circle");
    CHECK(c.ladder == std::vector<int>{250, 500, 1000, 2000});
    CHECK(c.alpha == 0.5);
    CHECK(c.training.l == 16);
    CHECK(c.training.dictionary == 256);
    CHECK(c.training.zeta_rel == 1e-3);
    CHECK(c.responses.dictionary == 64);
    CHECK(c.stages == kAllStages);
    const auto back = parse_config(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    const auto s = small_config();
    CHECK(config_to_json(parse_config(config_to_json(s))) == config_to_json(s));
}

TEST_CASE("config errors name the offending field") {
    CHECK(config_error_field(json{{"ladder", {500, 250}}}) == "ladder");
    CHECK(config_error_field(json{{"manifold", {{"kind", "klein"}}}}) == "manifold.kind");
    CHECK(config_error_field(json{{"training", {{"lr", 0.1}}}}) == "training.lr");
    CHECK(config_error_field(json{{"alpha", 1.5}}) == "alpha");
    CHECK(config_error_field(json{{"kernel", "gauss"}}) == "kernel");
    CHECK(config_error_field(json{{"stages", {"spectra", "bogus"}}}) == "stages");
    CHECK(config_error_field(json{{"h_rule", {0.1}}}) == "h_rule");
    CHECK(config_error_field(json{{"colour", 1}}) == "colour");
    CHECK(config_error_field(json{{"responses", {{"restrictions", {"X"}}}}}) == "responses.restrictions");
    CHECK(config_error_field(json::array()) == "<root>");
}

TEST_CASE("load_config reports unreadable files") {
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    const auto path = std::filesystem::temp_directory_path() / "clab_bad_config.json";
    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(load_config(path.string()), ConfigError);
}

TEST_CASE("a small run produces every table and is thread-count invariant") {
    const auto cfg = small_config();
    const auto serial = run(cfg, 1, false);
    REQUIRE(serial.ok());
    const auto parallel = run(cfg, 3, false);
    REQUIRE(parallel.ok());
    REQUIRE(serial.csv_contents.size() == parallel.csv_contents.size());
    for (std::size_t i = 0; i < serial.csv_contents.size(); ++i) {
        CAPTURE(serial.csv_contents[i].first);
        CHECK(serial.csv_contents[i] == parallel.csv_contents[i]);
    }
    std::vector<std::string> names;
    for (const auto& [name, text] : serial.csv_contents) names.push_back(name);
    for (const char* expect : {"ladder.csv", "alignment.csv", "spectra_n120.csv", "spectra_n240.csv", "ops_check.csv",
                               "response_conv.csv", "high_frequency.csv", "train_ladder.csv", "heldout.csv",
                               "gap_demo.csv"}) {
        CHECK(std::find(names.begin(), names.end(), expect) != names.end());
    }
    const auto& r = serial.results;
    CHECK(r.ladder.size() == 4);
    for (const auto& row : r.ladder) CHECK(row.K == 3);
    CHECK(r.training.size() == 2 * 3);
    CHECK(serial.manifest.at("status") == "ok");
    CHECK(serial.manifest.at("training").at("seeds").size() == 2);

    // A different master seed changes the samples.
    auto other = cfg;
    other.master_seed = 5;
    other.stages = {"spectra"};
    const auto moved = run(other, 1, false);
    CHECK(moved.csv_contents.front().second != serial.csv_contents.front().second);
}

TEST_CASE("stage failures are reported, not thrown") {
    auto cfg = small_config();
    cfg.h_explicit = {1e-4, 1e-4};  // far below the sample spacing: no edges
    cfg.stages = {"spectra"};
    const auto rep = run(cfg, 1, false);
    CHECK_FALSE(rep.ok());
    CHECK(rep.failed_stage == "spectra");
    CHECK(rep.error.find("components") != std::string::npos);
    CHECK(rep.manifest.at("status") == "failed");
}
