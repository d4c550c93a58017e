#include <doctest.h>

#include "steerkt/diagnostics.hpp"
#include "steerkt/pipeline.hpp"

using namespace steerkt;

TEST_CASE("recommended layers keep the leading run within the factor") {
    std::vector<LayerRow> rows(5);
    double rel[] = {0.01, 0.02, 0.04, 0.2, 0.03};
    for (int i = 0; i < 5; ++i) {
        rows[static_cast<std::size_t>(i)].layer = i;
        rows[static_cast<std::size_t>(i)].rel_mse = rel[i];
    }
    CHECK(recommended_layers(rows, 5.0) == std::vector<int>{0, 1, 2});
    CHECK(recommended_layers(rows, 100.0) == std::vector<int>{0, 1, 2, 3, 4});
    rows[0].rel_mse = 1.0;
    CHECK(recommended_layers(rows, 5.0).empty());
}

TEST_CASE("l0 and recon_mse on hand values") {
    CHECK(l0(Matrix(2, 3, {0, 1, 2, 0, 0, 3})) == doctest::Approx(1.5));
    SaeModel s;
    s.d = 1;
    s.m = 1;
    s.w_enc = Matrix(1, 1, {1});
    s.b_enc = {0};
    s.w_dec = Matrix(1, 1, {1});
    s.b_dec = {0};
    CHECK(recon_mse(s, Matrix(2, 1, {2, -2})) == doctest::Approx(2.0)); // the negative row reconstructs to 0
}

TEST_CASE("feature histogram lists every layer") {
    Matrix d(2, 4, {1, 2, 0, 3, 1, 2, 0, 3});
    FeatureLayout lay{{0, 4}, {2, 2}};
    auto t = score_features(d, 1e-6, lay);
    auto h = feature_layer_histogram(t, 2);
    CHECK(h.size() == 2);
    CHECK(h.at(0) + h.at(4) == 2);
}

TEST_CASE("layer report on a toy with exact SAEs") {
    auto m = build_model(ToyConfig{}, 5);
    SaeMap saes;
    for (int l : {0, 3}) {
        // Identity-like SAE with paired +/- units reconstructs exactly.
        SaeModel s;
        s.layer = l;
        s.d = 32;
        s.m = 64;
        s.w_enc = Matrix(64, 32);
        s.w_dec = Matrix(32, 64);
        for (std::size_t k = 0; k < 32; ++k) {
            s.w_enc(k, k) = 1;
            s.w_enc(32 + k, k) = -1;
            s.w_dec(k, k) = 1;
            s.w_dec(k, 32 + k) = -1;
        }
        s.b_enc.assign(64, 0);
        s.b_dec.assign(32, 0);
        saes[l] = s;
    }
    std::vector<Tokens> corpus{{1, 9, 3, 10, 2}, {1, 8, 11, 2}};
    auto rep = layer_report(m, saes, corpus);
    REQUIRE(rep.rows.size() == 2);
    for (const auto& r : rep.rows) {
        CHECK(r.rel_mse == doctest::Approx(0.0));
        CHECK(r.reward_delta == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(r.samples == 2);
    }
    CHECK(rep.recommended == std::vector<int>{0, 3});
    CHECK(layer_report_csv(rep).rfind("layer,", 0) == 0);
}

TEST_CASE("trained SAEs on layers 0-1 and untrained elsewhere give the range {0, 1}") {
    RunConfig cfg;
    cfg.n_pool = 60;
    cfg.n_pairs = 60;
    cfg.alpha = 0.7;
    ToyData data = make_toy_data(cfg);
    auto m = reference_model(cfg, data);
    SaeTrainConfig sc = pipeline_sae_config();
    sc.epochs = 3000;
    SaeMap saes = train_layer_saes(m, data.pool, {0, 1}, sc);
    SeededRng rng(5);
    for (int l = 2; l <= m.depth; ++l) saes[l] = init_sae(m.d, sc.m, l, rng);
    std::vector<Tokens> corpus;
    for (const auto& p : data.heldout.pairs) corpus.push_back(concat_seq(m.vocab, p.prompt, p.answer_md));
    auto rep = layer_report(m, saes, corpus);
    CHECK(rep.recommended == std::vector<int>{0, 1});
}
