#include "steerkt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>
#include <json.hpp>

#include "steerkt/steer.hpp"

namespace steerkt {

double recon_mse(const SaeModel& sae, const Matrix& acts) {
    if (acts.rows == 0) throw std::invalid_argument("recon_mse: empty corpus");
    Matrix hh = reconstruct(sae, acts);
    double s = 0;
    for (std::size_t i = 0; i < acts.data.size(); ++i) {
        double e = hh.data[i] - acts.data[i];
        s += e * e;
    }
    return s / static_cast<double>(acts.rows);
}

double l0(const Matrix& z) { return mean_l0(z); }

double reward_delta(const ToyRewardModel& model, const SaeModel& sae, int layer, const Tokens& tokens) {
    HookSet hs = reconstruction_hooks(sae, layer);
    return std::fabs(reward(model, tokens) - reward(model, tokens, &hs));
}

std::vector<int> recommended_layers(const std::vector<LayerRow>& rows, double factor) {
    if (rows.empty()) return {};
    double lo = rows.front().rel_mse;
    for (const auto& r : rows) lo = std::min(lo, r.rel_mse);
    std::vector<int> out;
    for (const auto& r : rows) {
        if (r.rel_mse > factor * lo) break;
        out.push_back(r.layer);
    }
    return out;
}

LayerReport layer_report(const ToyRewardModel& model, const SaeMap& saes, const std::vector<Tokens>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("layer_report: empty corpus");
    LayerReport rep;
    TokenScorer raw(model);
    Vec raw_scores;
    for (const auto& s : corpus) raw_scores.push_back(raw.score(s));
    double mean = 0, var = 0;
    for (double x : raw_scores) mean += x;
    mean /= static_cast<double>(raw_scores.size());
    for (double x : raw_scores) var += (x - mean) * (x - mean);
    double sd = std::sqrt(var / static_cast<double>(raw_scores.size()));

    for (const auto& [layer, sae] : saes) {
        if (layer < 0 || layer > model.depth) throw std::invalid_argument(fmt::format("SAE layer {} outside the model", layer));
        // gather masked rows of every sequence, in corpus order
        std::size_t n = 0;
        for (const auto& s : corpus)
            for (Token t : s) n += model.vocab.is_special(t) ? 0 : 1;
        Matrix acts(n, static_cast<std::size_t>(model.d));
        const Matrix& tab = raw.layer_rows(layer);
        std::size_t r = 0;
        for (const auto& s : corpus)
            for (Token t : s) {
                if (model.vocab.is_special(t)) continue;
                auto src = tab.row(static_cast<std::size_t>(t));
                std::copy(src.begin(), src.end(), acts.row(r++).begin());
            }
        LayerRow row;
        row.layer = layer;
        row.samples = corpus.size();
        row.mse = recon_mse(sae, acts);
        row.rel_mse = relative_mse(sae, acts);
        row.l0 = mean_l0(encode(sae, acts));
        HookSet hs = reconstruction_hooks(sae, layer);
        TokenScorer rec(model, &hs);
        double dsum = 0;
        for (std::size_t i = 0; i < corpus.size(); ++i) dsum += std::fabs(raw_scores[i] - rec.score(corpus[i]));
        row.reward_delta = dsum / static_cast<double>(corpus.size());
        row.reward_delta_rel = sd > 0 ? row.reward_delta / sd : 0.0;
        rep.rows.push_back(row);
    }
    rep.recommended = recommended_layers(rep.rows);
    return rep;
}

std::map<int, int> feature_layer_histogram(const FeatureScoreTable& table, int top_n) {
    if (top_n < 1) throw std::invalid_argument("feature_layer_histogram: top_n must be >= 1");
    std::map<int, int> h;
    for (const auto& f : table.features) h[f.layer] = 0;
    std::vector<std::size_t> idx(table.features.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& fa = table.features[a];
        const auto& fb = table.features[b];
        if (fa.score != fb.score) return fa.score > fb.score;
        if (fa.layer != fb.layer) return fa.layer < fb.layer;
        return fa.index < fb.index;
    });
    std::size_t take = std::min(idx.size(), static_cast<std::size_t>(top_n));
    for (std::size_t i = 0; i < take; ++i) ++h[table.features[idx[i]].layer];
    return h;
}

std::string layer_report_csv(const LayerReport& r) {
    std::string out = "layer,mse,rel_mse,reward_delta,reward_delta_rel,l0,samples\n";
    for (const auto& x : r.rows)
        out += fmt::format("{},{},{},{},{},{},{}\n", x.layer, x.mse, x.rel_mse, x.reward_delta, x.reward_delta_rel, x.l0,
                           x.samples);
    return out;
}

std::string layer_report_json(const LayerReport& r) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& x : r.rows)
        rows.push_back({{"layer", x.layer},
                        {"mse", x.mse},
                        {"rel_mse", x.rel_mse},
                        {"reward_delta", x.reward_delta},
                        {"reward_delta_rel", x.reward_delta_rel},
                        {"l0", x.l0},
                        {"samples", x.samples}});
    j["layers"] = rows;
    j["recommended"] = r.recommended;
    return j.dump(2) + "\n";
}

} // namespace steerkt
