#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "steerkt/pairgen.hpp"

using namespace steerkt;

namespace {

std::map<Token, int> multiset(const Tokens& t) {
    std::map<Token, int> m;
    for (Token x : t) ++m[x];
    return m;
}

} // namespace

TEST_CASE("synthesized pairs satisfy the content invariant") {
    TokenVocab v;
    SeededRng rng(3);
    auto ps = synth_pairs(rng, 200, {}, v);
    CHECK(ps.size() == 200);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& p = ps.pairs[i];
        CHECK(validate_pair(p, v).ok());
        auto a = multiset(p.answer_md);
        for (Token m : v.markup) a.erase(m);
        CHECK(a == multiset(p.answer_plain));
        CHECK(strip_markup(v, p.answer_md) == p.answer_plain);
        CHECK(p.domain == kDomainBuckets[i % 4]);
        REQUIRE(p.meta);
        for (Token t : p.prompt) CHECK_FALSE(v.is_markup(t));
    }
}

TEST_CASE("synth is deterministic per seed") {
    SeededRng a(9), b(9);
    CHECK(synth_pairs(a, 30) == synth_pairs(b, 30));
}

TEST_CASE("validate_pair flags each failure") {
    TokenVocab v;
    PairedExample p{{9, 10}, {11, 3, 12}, {11, 12}, "chat", std::nullopt};
    CHECK(validate_pair(p, v).ok());
    auto q = p;
    q.answer_md = {11, 12};
    auto r = validate_pair(q, v);
    CHECK_FALSE(r.has_markup);
    CHECK(validate_pair(q, v, true).ok());
    q = p;
    q.answer_plain = {11, 4, 12};
    CHECK_FALSE(validate_pair(q, v).plain_clean);
    q = p;
    q.answer_plain = {11, 13};
    CHECK_FALSE(validate_pair(q, v).stripped_equal);
}

TEST_CASE("dedup edge cases") {
    TokenVocab v;
    PairSet ps;
    ps.pairs.push_back({{9, 10, 11}, {12, 3}, {12}, "chat", std::nullopt});
    ps.pairs.push_back({{9, 10, 11}, {13, 3}, {13}, "chat", std::nullopt});
    ps.pairs.push_back({{20, 21}, {13, 3}, {13}, "chat", std::nullopt});
    auto out = dedup(ps, 0.95, v);
    REQUIRE(out.size() == 2);
    CHECK(out.pairs[0] == ps.pairs[0]);
    CHECK(out.pairs[1] == ps.pairs[2]);
}

TEST_CASE("dedup matches an O(n^2) oracle") {
    TokenVocab v;
    SeededRng rng(21);
    PairSet ps;
    for (int i = 0; i < 150; ++i) {
        Tokens pr;
        int len = static_cast<int>(rng.range(1, 4));
        for (int j = 0; j < len; ++j) pr.push_back(static_cast<Token>(rng.range(9, 14)));
        ps.pairs.push_back({pr, {15, 3}, {15}, "chat", std::nullopt});
    }
    auto cos = [&](const Tokens& a, const Tokens& b) {
        auto x = bag_of_tokens(a, v), y = bag_of_tokens(b, v);
        return cosine(x, y);
    };
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        bool drop = false;
        for (std::size_t j : kept) drop = drop || cos(ps.pairs[i].prompt, ps.pairs[j].prompt) >= 0.9;
        if (!drop) kept.push_back(i);
    }
    auto out = dedup(ps, 0.9, v);
    REQUIRE(out.size() == kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) CHECK(out.pairs[i] == ps.pairs[kept[i]]);
    CHECK_THROWS(dedup(ps, 0.0, v));
    CHECK_THROWS(dedup(ps, 1.5, v));
}

TEST_CASE("text tokenizer maps markup and words") {
    TokenVocab v;
    Tokens t = tokenize_text("**Good** job - see `x`", v);
    CHECK(std::count(t.begin(), t.end(), v.markup[0]) == 2); // bold
    CHECK(std::count(t.begin(), t.end(), v.markup[2]) == 1); // list
    CHECK(std::count(t.begin(), t.end(), v.good) == 1);
    for (Token x : t) {
        CHECK(x >= 3);
        CHECK(x < v.size);
    }
    CHECK(tokenize_text("Hello", v) == tokenize_text("hello", v));
    CHECK(tokenize_text("## Title here\nbody", v).front() == v.markup[1]);
    CHECK(tokenize_text("```\ncode\n```", v) == Tokens{v.markup[3], tokenize_text("code", v)[0], v.markup[3]});
    CHECK(tokenize_text(render_tokens(t, v), v) == t);
}

TEST_CASE("hand-written markdown/plain pair is valid") {
    PairText t{
        "How do I keep basil alive on a windowsill?",
        "Basil is easy once it gets light.\n\n## Care\n\n- **Water** when the top soil feels dry.\n- **Pinch** the tips "
        "every week.\n\nTurn the pot now and then so it grows evenly.",
        "Basil is easy once it gets light.\n\n Water when the top soil feels dry.\n Pinch the tips every "
        "week.\n\nTurn the pot now and then so it grows evenly."};
    auto p = pair_from_text(t);
    CHECK(validate_pair(p).ok());
    REQUIRE(p.meta);
    CHECK(*p.meta == t);
}

TEST_CASE("pair JSON round trip and schema errors") {
    TokenVocab v;
    SeededRng rng(4);
    auto ps = synth_pairs(rng, 12, {}, v);
    auto path = (std::filesystem::temp_directory_path() / "steerkt_pairs.json").string();
    save_pairs_json(ps, path, v);
    CHECK(load_pairs_json(path, v) == ps);
    std::filesystem::remove(path);

    auto j = pairs_to_json(ps, v);
    CHECK(j.find("\"answer_markdown\"") != std::string::npos);
    CHECK(pairs_from_json(j, v) == ps);
    CHECK_THROWS(pairs_from_json(R"([{"prompt":"a","answer_markdown":"**b**"}])", v));
    CHECK_THROWS(pairs_from_json("[{", v));
    CHECK_THROWS(pairs_from_json(R"([{"prompt":"a","answer_markdown":"b","answer_plain":"b"}])", v));
    CHECK(pairs_from_json(R"([{"prompt":"a","answer_markdown":"b","answer_plain":"b"}])", v, false).size() == 1);
    CHECK(pairs_from_json(R"({"prompt":"a","answer_markdown":"**b**","answer_plain":"b"})", v).size() == 1);
}
