#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "steerkt/toymodel.hpp"

using namespace steerkt;

namespace {

// Straight-line forward pass used as an oracle for the library implementation.
double oracle_reward(const ToyRewardModel& m, const Tokens& toks) {
    Vec acc(static_cast<std::size_t>(m.d), 0.0);
    int n = 0;
    for (Token t : toks) {
        if (m.vocab.is_special(t)) continue;
        Vec h(m.embed.row(static_cast<std::size_t>(t)).begin(), m.embed.row(static_cast<std::size_t>(t)).end());
        for (int l = 0; l < m.depth; ++l) {
            const Matrix& w1 = m.w1[static_cast<std::size_t>(l)];
            const Matrix& w2 = m.w2[static_cast<std::size_t>(l)];
            Vec a(w1.rows, 0.0);
            for (std::size_t i = 0; i < w1.rows; ++i) {
                double s = 0;
                for (std::size_t k = 0; k < w1.cols; ++k) s += w1(i, k) * h[k];
                a[i] = s > 0 ? s : 0;
            }
            for (std::size_t k = 0; k < w2.rows; ++k) {
                double s = 0;
                for (std::size_t i = 0; i < w2.cols; ++i) s += w2(k, i) * a[i];
                h[k] += s;
            }
        }
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += h[k];
        ++n;
    }
    double r = 0;
    for (std::size_t k = 0; k < acc.size(); ++k) r += m.head[k] * acc[k] / n;
    return r;
}

Tokens random_seq(SeededRng& rng, const TokenVocab& v, int len) {
    Tokens t{v.bos};
    for (int i = 0; i < len; ++i) t.push_back(static_cast<Token>(rng.range(3, v.size - 1)));
    t.push_back(v.eos);
    return t;
}

} // namespace

TEST_CASE("build_model is deterministic and f32-exact") {
    ToyConfig cfg;
    auto a = build_model(cfg, 3), b = build_model(cfg, 3), c = build_model(cfg, 4);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (double x : a.embed.data) CHECK(static_cast<double>(static_cast<float>(x)) == x);
    CHECK(a.w1.size() == 6);
    CHECK(a.embed.rows == 64);
    CHECK(a.embed.cols == 32);
}

TEST_CASE("content gate rewires only the last block's first hidden unit") {
    ToyConfig off;
    ToyConfig on = off;
    on.gate_gain = 20.0;
    auto a = build_model(off, 5), g = build_model(on, 5);
    CHECK(a.embed == g.embed);
    CHECK(a.content_dir == g.content_dir);
    CHECK(a.format_dir == g.format_dir);
    for (std::size_t l = 0; l + 1 < a.w1.size(); ++l) {
        CHECK(a.w1[l] == g.w1[l]);
        CHECK(a.w2[l] == g.w2[l]);
    }
    const Matrix &w1a = a.w1.back(), &w1g = g.w1.back(), &w2a = a.w2.back(), &w2g = g.w2.back();
    Vec out(w2g.rows);
    for (std::size_t i = 0; i < w1g.rows; ++i)
        for (std::size_t k = 0; k < w1g.cols; ++k)
            if (i != 0) CHECK(w1a(i, k) == w1g(i, k));
    for (std::size_t k = 0; k < w2g.rows; ++k) {
        out[k] = w2g(k, 0);
        for (std::size_t j = 1; j < w2g.cols; ++j) CHECK(w2a(k, j) == w2g(k, j));
    }
    CHECK(norm(out) == doctest::Approx(20.0).epsilon(1e-6));
    CHECK(std::fabs(dot(out, g.content_dir)) < 1e-4);
    CHECK(std::fabs(dot(out, g.format_dir)) < 1e-4);
    Vec row(w1g.row(0).begin(), w1g.row(0).end());
    CHECK(dot(row, g.content_dir) > 0.5);

    ToyConfig bad = on;
    bad.base_scale = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("forward agrees with a straight-line oracle") {
    auto m = build_model(ToyConfig{}, 11);
    SeededRng rng(5);
    for (int i = 0; i < 20; ++i) {
        Tokens t = random_seq(rng, m.vocab, 3 + i % 9);
        CHECK(reward(m, t) == doctest::Approx(oracle_reward(m, t)).epsilon(1e-12));
    }
}

TEST_CASE("token mask excludes special ids") {
    TokenVocab v;
    Mask mk = token_mask(v, {v.bos, 9, v.pad, 3, v.eos});
    CHECK(mk == Mask{0, 1, 0, 1, 0});
}

TEST_CASE("forward rejects bad input") {
    auto m = build_model(ToyConfig{}, 1);
    CHECK_THROWS_AS(forward(m, {}), std::invalid_argument);
    CHECK_THROWS_AS(forward(m, {1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(forward(m, {1, 64, 2}), std::invalid_argument);
    CHECK_THROWS_AS(forward(m, {1, -1, 2}), std::invalid_argument);
}

TEST_CASE("forward trace has depth+1 layers and hooks change downstream rows only") {
    auto m = build_model(ToyConfig{}, 2);
    Tokens t{1, 9, 10, 3, 2};
    auto tr = forward(m, t);
    CHECK(tr.layers.size() == 7);
    HookSet hs;
    hs.hooks[3] = [](const Matrix& h, const Mask&) {
        Matrix o = h;
        for (auto& x : o.data) x *= 0.5;
        return o;
    };
    auto tr2 = forward(m, t, &hs);
    for (int l = 0; l < 3; ++l) CHECK(tr2.layers[static_cast<std::size_t>(l)] == tr.layers[static_cast<std::size_t>(l)]);
    CHECK_FALSE(tr2.layers[3] == tr.layers[3]);
    hs.active = false;
    CHECK(forward(m, t, &hs).reward == tr.reward);
}

TEST_CASE("TokenScorer matches forward bit for bit") {
    auto m = build_model(ToyConfig{}, 9);
    SeededRng rng(8);
    std::vector<Tokens> calib;
    for (int i = 0; i < 20; ++i) calib.push_back({1, 8, 3, 9, 4, 10, 2});
    auto planted = plant_bias(m, 0.7, calib);
    TokenScorer sc(planted);
    for (int i = 0; i < 50; ++i) {
        Tokens t = random_seq(rng, planted.vocab, 1 + i % 12);
        CHECK(sc.score(t) == reward(planted, t));
    }
}

TEST_CASE("plant_bias head is normalize(v_c) + alpha * normalize(v_f)") {
    auto m = build_model(ToyConfig{}, 4);
    std::vector<Tokens> calib{{1, 8, 3, 9, 2}, {1, 4, 8, 10, 5, 2}};
    auto [vc, vf] = calibration_means(m, calib);
    auto p = plant_bias(m, 0.5, calib);
    double nc = norm(vc), nf = norm(vf);
    for (std::size_t k = 0; k < vc.size(); ++k)
        CHECK(p.head[k] == doctest::Approx(vc[k] / nc + 0.5 * vf[k] / nf).epsilon(1e-6));
    CHECK(p.alpha == 0.5);
    CHECK_THROWS(calibration_means(m, {{1, 9, 10, 2}}));
}

TEST_CASE("raising alpha raises the markdown preference") {
    auto m = build_model(ToyConfig{}, 4);
    std::vector<Tokens> calib{{1, 8, 3, 9, 2}, {1, 4, 8, 10, 5, 2}};
    Tokens x{11, 12}, md{13, 3, 14, 4}, pl{13, 14};
    double g0 = format_gap(plant_bias(m, 0.0, calib), x, md, pl);
    double g1 = format_gap(plant_bias(m, 1.0, calib), x, md, pl);
    CHECK(g1 > g0);
}

TEST_CASE("model blob round trip") {
    auto m = plant_bias(build_model(ToyConfig{}, 0xdeadbeefcafeULL), 0.65, {{1, 8, 3, 2}});
    auto path = (std::filesystem::temp_directory_path() / "steerkt_model_rt.bin").string();
    save_model(m, path);
    auto back = load_model(path);
    CHECK(back == m);
    std::filesystem::remove(path);
    CHECK(model_from_payload(model_to_payload(m)) == m);
}
