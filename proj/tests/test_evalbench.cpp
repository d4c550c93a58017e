#include <doctest.h>

#include <algorithm>

#include "steerkt/evalbench.hpp"

using namespace steerkt;

TEST_CASE("triplets respect their split structure") {
    TokenVocab v;
    SeededRng rng(3);
    auto ts = build_triplets(rng, 60, {}, v);
    CHECK(ts.size() == 180);
    auto good = [&](const Tokens& t) { return static_cast<int>(std::count(t.begin(), t.end(), v.good)); };
    auto markup = [&](const Tokens& t) {
        return static_cast<int>(std::count_if(t.begin(), t.end(), [&](Token x) { return v.is_markup(x); }));
    };
    for (const auto& t : ts) {
        CHECK(good(t.chosen) == t.chosen_good);
        CHECK(good(t.rejected) == t.rejected_good);
        CHECK(t.chosen_good > t.rejected_good);
        CHECK(t.chosen.size() - markup(t.chosen) == t.rejected.size() - markup(t.rejected));
        if (t.split == Split::easy) {
            CHECK(markup(t.chosen) > 0);
            CHECK(markup(t.rejected) == 0);
        } else if (t.split == Split::hard) {
            CHECK(markup(t.chosen) == 0);
            CHECK(markup(t.rejected) > 0);
        } else {
            CHECK(markup(t.chosen) == markup(t.rejected));
        }
    }
}

TEST_CASE("a content-only head gets every split right; ties count as wrong") {
    auto m = build_model(ToyConfig{}, 7);
    TokenScorer sc(m);
    SeededRng rng(4);
    auto ts = build_triplets(rng, 40, {}, m.vocab);
    auto r = evaluate_with(sc, ts);
    CHECK(r.acc(Split::normal) > 0.9);
    CHECK(r.counts.at("hard") == 40);
    CHECK(r.by_domain.size() == 4);

    EvalTriplet tie;
    tie.prompt = {9};
    tie.chosen = {10};
    tie.rejected = {10};
    tie.split = Split::easy;
    CHECK(evaluate_with(sc, {tie}).acc(Split::easy) == 0.0);
}

TEST_CASE("triplet config validation") {
    TripletConfig c;
    c.gap_min = 0;
    CHECK_THROWS(c.validate());
    c = {};
    c.length_min = 2;
    CHECK_THROWS(c.validate());
    SeededRng rng(1);
    CHECK_THROWS(build_triplets(rng, 0));
}

TEST_CASE("spec overlap") {
    InterventionSpec a, b;
    a.features = {{0, {1, 2}}, {1, {3}}};
    b.features = {{0, {2}}, {1, {3, 4}}};
    CHECK(spec_overlap(a, b, 3) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS(spec_overlap(a, b, 0));
}
