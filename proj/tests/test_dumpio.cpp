#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "steerkt/dumpio.hpp"

using namespace steerkt;
namespace fs = std::filesystem;

namespace {

ActivationDump random_dump(SeededRng& rng) {
    std::size_t r = static_cast<std::size_t>(rng.range(0, 6)), c = static_cast<std::size_t>(rng.range(1, 5));
    Matrix v(r, c);
    for (auto& x : v.data) x = static_cast<float>(rng.normal() * 10);
    std::optional<std::vector<std::uint8_t>> mask;
    if (rng.below(2)) {
        mask.emplace(r);
        for (auto& b : *mask) b = static_cast<std::uint8_t>(rng.below(2));
    }
    auto kinds = {DumpKind::activations, DumpKind::sae, DumpKind::model};
    DumpKind k = *(kinds.begin() + rng.below(3));
    std::uint32_t layer = rng.below(2) ? kNoLayer : static_cast<std::uint32_t>(rng.below(40));
    return make_dump(k, layer, v, mask);
}

} // namespace

TEST_CASE("header is 48 bytes with the documented layout") {
    auto d = make_dump(DumpKind::activations, 3, Matrix(2, 2, {1, 2, 3, 4}), std::vector<std::uint8_t>{1, 0});
    auto b = encode_dump(d);
    CHECK(b.size() == 48 + 16 + 2);
    CHECK(std::memcmp(b.data(), "STEERKT\0", 8) == 0);
    std::uint32_t kind;
    std::memcpy(&kind, b.data() + 12, 4);
    CHECK(kind == 0x53544341u);
    CHECK(std::memcmp(b.data() + 12, "ACTS", 4) == 0);
    std::uint64_t rows;
    std::memcpy(&rows, b.data() + 24, 8);
    CHECK(rows == 2);
    float f;
    std::memcpy(&f, b.data() + 48, 4);
    CHECK(f == 1.0f);
}

TEST_CASE("round trip is the identity and encoding is canonical") {
    SeededRng rng(17);
    for (int i = 0; i < 200; ++i) {
        auto d = random_dump(rng);
        auto b = encode_dump(d);
        auto back = decode_dump(b);
        CHECK(back == d);
        CHECK(encode_dump(back) == b);
    }
}

TEST_CASE("reader rejects corrupted input") {
    auto good = encode_dump(make_dump(DumpKind::activations, 0, Matrix(2, 1, {1, 2}), std::vector<std::uint8_t>{1, 1}));
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS(decode_dump(bad));
    bad = good;
    bad[8] = 2; // version
    CHECK_THROWS(decode_dump(bad));
    bad = good;
    bad[20] = 1; // reserved
    CHECK_THROWS(decode_dump(bad));
    bad = good;
    bad.pop_back();
    CHECK_THROWS(decode_dump(bad));
    bad = good;
    bad.push_back(0);
    CHECK_THROWS(decode_dump(bad));
    bad = good;
    bad.back() = 2; // mask byte
    CHECK_THROWS(decode_dump(bad));
    bad = good;
    float nan = NAN;
    std::memcpy(bad.data() + 48, &nan, 4);
    CHECK_THROWS(decode_dump(bad));
    CHECK_THROWS(decode_dump(std::vector<std::uint8_t>(10)));
}

TEST_CASE("element cap and writer validation") {
    auto d = make_dump(DumpKind::activations, 0, Matrix(4, 4));
    CHECK_THROWS(encode_dump(d, 8));
    CHECK_THROWS(decode_dump(encode_dump(d), 8));
    ActivationDump inconsistent = d;
    inconsistent.header.rows = 3;
    CHECK_THROWS(encode_dump(inconsistent));
    ActivationDump nonfinite = d;
    nonfinite.values.data[0] = INFINITY;
    CHECK_THROWS(encode_dump(nonfinite));
}

TEST_CASE("failed writes leave no file behind") {
    auto dir = fs::temp_directory_path() / "steerkt_dump_atomic";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto path = (dir / "x.bin").string();
    auto d = make_dump(DumpKind::activations, 0, Matrix(1, 1, {NAN}));
    CHECK_THROWS(write_dump(d, path));
    CHECK(fs::is_empty(dir));
    write_dump(make_dump(DumpKind::activations, 0, Matrix(1, 1, {0.5})), path);
    CHECK(read_dump(path).values(0, 0) == 0.5);
    CHECK_THROWS(write_dump(d, path));
    CHECK(read_dump(path).values(0, 0) == 0.5);
    fs::remove_all(dir);
}

TEST_CASE("manifest round trip and validation") {
    auto path = (fs::temp_directory_path() / "steerkt_manifest.json").string();
    std::vector<ManifestEntry> e{{"p0", "md", 1, "a.bin"}, {"p0", "pl", 1, "b.bin"}};
    write_manifest(e, path);
    CHECK(read_manifest(path) == e);
    write_file_bytes(path, {'[', '{', '"', 'x', '"', ':', '1', '}', ']'});
    CHECK_THROWS(read_manifest(path));
    std::string bad = R"([{"pair_id":"p","role":"xx","layer":0,"file":"f"}])";
    write_file_bytes(path, std::vector<std::uint8_t>(bad.begin(), bad.end()));
    CHECK_THROWS(read_manifest(path));
    fs::remove(path);
}
