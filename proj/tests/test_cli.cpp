#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "steerkt/cli.hpp"
#include "steerkt/dumpio.hpp"
#include "steerkt/pairgen.hpp"

using namespace steerkt;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = STEERKT_FIXTURE_DIR;

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("parse_layers") {
    CHECK(parse_layers("0-2,5") == std::vector<int>{0, 1, 2, 5});
    CHECK(parse_layers("3,1,3") == std::vector<int>{1, 3});
    CHECK_THROWS(parse_layers("a"));
    CHECK_THROWS(parse_layers("4-2"));
    CHECK_THROWS(parse_layers(""));
}

TEST_CASE("exit codes") {
    CHECK(dispatch(std::vector<std::string>{}) == kExitUsage);
    CHECK(dispatch({"nonsense"}) == kExitUsage);
    CHECK(dispatch({"identify", "--k", "x"}) == kExitUsage);
    CHECK(dispatch({"pairs", "validate", "--in", "/nonexistent/file.json"}) == kExitRuntime);
    CHECK(dispatch({"--help"}) == kExitOk);
}

TEST_CASE("exporter fixture: dumps parse and masks mark the special positions") {
    auto entries = read_manifest((kFixtures / "manifest.json").string());
    auto info = read_json(kFixtures / "export_info.json");
    CHECK(entries.size() == 2 * info["pairs"].get<std::size_t>() * info["layers"].size());
    for (const auto& e : entries) {
        auto d = read_dump((kFixtures / e.file).string());
        CHECK(d.header.kind == DumpKind::activations);
        CHECK(d.header.cols == info["m"].get<std::uint64_t>());
        CHECK(static_cast<int>(d.header.layer) == e.layer);
        REQUIRE(d.mask);
        const auto& mk = *d.mask;
        CHECK(mk.front() == 0);
        CHECK(mk.back() == 0);
        CHECK(std::count(mk.begin(), mk.end(), 1) == static_cast<long>(mk.size()) - 2);
    }
}

TEST_CASE("exporter fixture: identify_from_dumps reproduces the expected selection") {
    auto expected = read_json(kFixtures / "expected.json");
    FeatureScoreTable table;
    auto spec = identify_from_dumps((kFixtures / "manifest.json").string(), expected["k"].get<int>(),
                                    expected["epsilon"].get<double>(), nullptr, &table);
    std::vector<std::vector<int>> got;
    for (const auto& [l, f] : spec.features)
        for (int j : f) got.push_back({l, j});
    CHECK(got == expected["top"].get<std::vector<std::vector<int>>>());
    auto mu = expected["mu"].get<std::vector<double>>();
    auto var = expected["var"].get<std::vector<double>>();
    REQUIRE(table.features.size() == mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
        CHECK(std::fabs(table.features[j].mu - mu[j]) <= 1e-9);
        CHECK(std::fabs(table.features[j].var - var[j]) <= 1e-9);
    }
    // the spec written by the CLI loads back
    auto dir = scratch("steerkt_cli_ident");
    auto out = (dir / "spec.json").string();
    CHECK(dispatch({"identify", "--manifest", (kFixtures / "manifest.json").string(), "--k", "2", "--out", out}) ==
          kExitOk);
    CHECK(load_spec(out).features == spec.features);
    fs::remove_all(dir);
}

TEST_CASE("identify_from_dumps rejects incomplete manifests") {
    auto dir = scratch("steerkt_cli_bad_manifest");
    auto entries = read_manifest((kFixtures / "manifest.json").string());
    for (auto& e : entries) e.file = (kFixtures / e.file).string();
    entries.pop_back();
    write_manifest(entries, (dir / "m.json").string());
    CHECK_THROWS(identify_from_dumps((dir / "m.json").string(), 2, 1e-6));
    fs::remove_all(dir);
}

TEST_CASE("pairs subcommands") {
    auto dir = scratch("steerkt_cli_pairs");
    auto p = (dir / "p.json").string(), q = (dir / "q.json").string();
    CHECK(dispatch({"pairs", "synth", "--n", "20", "--seed", "3", "--out", p}) == kExitOk);
    CHECK(load_pairs_json(p).size() == 20);
    CHECK(dispatch({"pairs", "validate", "--in", p}) == kExitOk);
    CHECK(dispatch({"pairs", "dedup", "--in", p, "--out", q}) == kExitOk);
    CHECK(load_pairs_json(q).size() <= 20);
    std::ofstream(p) << R"([{"prompt":"a","answer_markdown":"b","answer_plain":"b"}])";
    CHECK(dispatch({"pairs", "validate", "--in", p}) == kExitRuntime);
    fs::remove_all(dir);
}
