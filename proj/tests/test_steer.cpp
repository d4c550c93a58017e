#include <doctest.h>

#include <cmath>

#include "steerkt/steer.hpp"

using namespace steerkt;

namespace {

SaeModel small_sae(SeededRng& rng, int d, int m, int layer) {
    SaeModel s = init_sae(d, m, layer, rng);
    for (auto& x : s.b_enc) x = 0.1 * rng.normal();
    return s;
}

} // namespace

TEST_CASE("ablate_latents zeroes only listed columns") {
    Matrix z(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(ablate_latents(z, {0, 2}) == Matrix(2, 3, {0, 2, 0, 0, 5, 0}));
    CHECK(ablate_latents(z, {}) == z);
    CHECK_THROWS(ablate_latents(z, {3}));
}

TEST_CASE("intervene_layer with the empty set reconstructs masked rows only") {
    SeededRng rng(4);
    auto sae = small_sae(rng, 4, 8, 0);
    Matrix h(3, 4);
    for (auto& x : h.data) x = rng.normal();
    Mask mk{0, 1, 1};
    Matrix out = intervene_layer(h, sae, {}, mk);
    Matrix rec = reconstruct(sae, h);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(out(0, k) == h(0, k));
        CHECK(out(1, k) == rec(1, k));
        CHECK(out(2, k) == rec(2, k));
    }
}

TEST_CASE("ablating every feature leaves the decoder bias") {
    SeededRng rng(5);
    auto sae = small_sae(rng, 3, 5, 0);
    Matrix h(1, 3, {1, -1, 2});
    Matrix out = intervene_layer(h, sae, {0, 1, 2, 3, 4}, {1});
    for (std::size_t k = 0; k < 3; ++k) CHECK(out(0, k) == sae.b_dec[k]);
}

TEST_CASE("single-pair suppression direction maps markdown pooled onto plain pooled") {
    auto m = build_model(ToyConfig{}, 7);
    PairSet ps;
    ps.pairs.push_back({{9, 10, 11}, {12, 3, 13, 4}, {12, 13}, "chat", std::nullopt});
    std::vector<int> layers{0, 2, 6};
    auto sd = build_suppression_directions(ps, m, layers);
    CHECK(sd.n_pairs == 1);
    const auto& p = ps.pairs[0];
    auto tm = forward(m, concat_seq(m.vocab, p.prompt, p.answer_md));
    auto tp = forward(m, concat_seq(m.vocab, p.prompt, p.answer_plain));
    for (int l : layers) {
        Vec md = masked_mean(tm.layers[static_cast<std::size_t>(l)], tm.mask);
        Vec pl = masked_mean(tp.layers[static_cast<std::size_t>(l)], tp.mask);
        const Vec& dir = sd.dirs.at(l);
        for (std::size_t k = 0; k < md.size(); ++k) CHECK(std::fabs(md[k] - dir[k] - pl[k]) <= 1e-12);
    }
}

TEST_CASE("apply_suppression leaves unmasked rows alone") {
    Matrix h(2, 2, {1, 2, 3, 4});
    CHECK(apply_suppression(h, {1, 1}, {0, 1}) == Matrix(2, 2, {1, 2, 2, 3}));
    CHECK_THROWS(apply_suppression(h, {1}, {1, 1}));
}

TEST_CASE("make_hooks validates the spec against the model and SAEs") {
    auto m = build_model(ToyConfig{}, 1);
    SeededRng rng(1);
    SaeMap saes;
    saes[2] = small_sae(rng, 32, 16, 2);
    InterventionSpec s;
    s.features[2] = {0, 5};
    CHECK(make_hooks(m, s, saes).hooks.size() == 1);
    s.features[3] = {1};
    CHECK_THROWS(make_hooks(m, s, saes));
    s.features.erase(3);
    s.features[2] = {16};
    CHECK_THROWS(make_hooks(m, s, saes));
    s.features[9] = {0};
    CHECK_THROWS(make_hooks(m, s, saes));
    InterventionSpec d;
    d.mode = SpecMode::direct_suppress;
    d.directions[1] = Vec(31, 0.0);
    CHECK_THROWS(make_hooks(m, d, saes));
}

TEST_CASE("hooked scoring of an empty-feature spec equals reconstruction at that layer") {
    auto m = build_model(ToyConfig{}, 3);
    SeededRng rng(2);
    SaeMap saes;
    saes[1] = small_sae(rng, 32, 16, 1);
    InterventionSpec s;
    s.features[1] = {};
    Tokens x{9, 10}, y{11, 3};
    auto hs = reconstruction_hooks(saes[1], 1);
    CHECK(score_with_intervention(m, s, saes, x, y) == reward(m, concat_seq(m.vocab, x, y), &hs));
}
