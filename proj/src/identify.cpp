#include "steerkt/identify.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/core.h>
#include <json.hpp>

namespace steerkt {

std::size_t InterventionSpec::feature_count() const {
    std::size_t n = 0;
    for (const auto& [_, s] : features) n += s.size();
    return n;
}

Vec pool_latents(const Matrix& z, const Mask& mask) { return masked_mean(z, mask); }

Mask pool_mask(const TokenVocab& v, const Tokens& x, const Tokens& y, PoolScope scope) {
    Tokens seq = concat_seq(v, x, y);
    Mask m = token_mask(v, seq);
    if (scope == PoolScope::response)
        for (std::size_t i = 1; i <= x.size(); ++i) m[i] = 0;
    return m;
}

static void check_layers(const SaeMap& saes, const std::vector<int>& layers) {
    if (layers.empty()) throw std::invalid_argument("no layers requested");
    if (!std::is_sorted(layers.begin(), layers.end()) ||
        std::adjacent_find(layers.begin(), layers.end()) != layers.end())
        throw std::invalid_argument("layers must be strictly ascending");
    for (int l : layers)
        if (!saes.count(l)) throw std::invalid_argument(fmt::format("no SAE for layer {}", l));
}

PooledLatents pooled_latents(const ToyRewardModel& model, const SaeMap& saes, const std::vector<int>& layers,
                             const Tokens& x, const Tokens& y, PoolScope scope) {
    check_layers(saes, layers);
    Tokens seq = concat_seq(model.vocab, x, y);
    auto tr = forward(model, seq);
    Mask mask = pool_mask(model.vocab, x, y, scope);
    PooledLatents out;
    out.layers = layers;
    for (int l : layers) {
        if (l < 0 || l > model.depth) throw std::invalid_argument(fmt::format("layer {} outside the model", l));
        out.offsets.push_back(out.all.size());
        Vec p = pool_latents(encode(saes.at(l), tr.layers[static_cast<std::size_t>(l)]), mask);
        out.all.insert(out.all.end(), p.begin(), p.end());
    }
    return out;
}

std::size_t FeatureLayout::total() const { return std::accumulate(widths.begin(), widths.end(), std::size_t{0}); }

FeatureLayout layout_of(const SaeMap& saes, const std::vector<int>& layers) {
    check_layers(saes, layers);
    FeatureLayout f;
    for (int l : layers) {
        f.layers.push_back(l);
        f.widths.push_back(saes.at(l).m);
    }
    return f;
}

Matrix paired_diffs(const PairSet& pairs, const ToyRewardModel& model, const SaeMap& saes,
                    const std::vector<int>& layers, PoolScope scope) {
    if (pairs.pairs.empty()) throw std::invalid_argument("paired_diffs: no pairs");
    FeatureLayout lay = layout_of(saes, layers);
    for (int l : layers)
        if (l < 0 || l > model.depth) throw std::invalid_argument(fmt::format("layer {} outside the model", l));

    // Per-token latent tables: the toy has no cross-position mixing, so a
    // position's latents depend only on its token id. Pooling sums table rows in
    // sequence order, which reproduces the per-sequence computation exactly.
    TokenScorer base(model);
    std::vector<Matrix> tables;
    for (int l : layers) tables.push_back(encode(saes.at(l), base.layer_rows(l)));

    auto pooled = [&](const Tokens& x, const Tokens& y) {
        Tokens seq = concat_seq(model.vocab, x, y);
        for (Token t : seq)
            if (t < 0 || t >= model.vocab.size) throw std::invalid_argument(fmt::format("token id {} out of vocabulary", t));
        Mask mask = pool_mask(model.vocab, x, y, scope);
        Vec all;
        all.reserve(lay.total());
        for (const auto& tab : tables) {
            Vec s(tab.cols, 0.0);
            std::size_t n = 0;
            for (std::size_t i = 0; i < seq.size(); ++i) {
                if (!mask[i]) continue;
                auto r = tab.row(static_cast<std::size_t>(seq[i]));
                for (std::size_t j = 0; j < s.size(); ++j) s[j] += r[j];
                ++n;
            }
            if (n == 0) throw std::invalid_argument("no non-special positions to pool");
            for (auto& v : s) v /= static_cast<double>(n);
            all.insert(all.end(), s.begin(), s.end());
        }
        return all;
    };

    auto rows = parallel_map(pairs.size(), [&](std::size_t i) {
        const auto& p = pairs.pairs[i];
        Vec a = pooled(p.prompt, p.answer_md);
        Vec b = pooled(p.prompt, p.answer_plain);
        for (std::size_t j = 0; j < a.size(); ++j) a[j] -= b[j];
        return a;
    });
    Matrix D(pairs.size(), lay.total());
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), D.row(i).begin());
    return D;
}

namespace {

Vec minmax(const Vec& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    Vec out(v.size(), 0.0);
    if (*hi > *lo) {
        double range = *hi - *lo;
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
    }
    return out;
}

} // namespace

FeatureScoreTable score_features(const Matrix& diffs, double epsilon, const FeatureLayout& layout) {
    if (diffs.rows < 2) throw std::invalid_argument(fmt::format("score_features: need N >= 2 pairs, got {}", diffs.rows));
    if (!(epsilon > 0.0)) throw std::invalid_argument("score_features: epsilon must be > 0");
    if (layout.total() != diffs.cols)
        throw std::invalid_argument(fmt::format("score_features: layout covers {} features, diffs have {}",
                                                layout.total(), diffs.cols));
    if (!all_finite(diffs.data)) throw std::invalid_argument("score_features: diffs contain non-finite values");
    const std::size_t N = diffs.rows, M = diffs.cols;
    Vec mu(M, 0.0), var(M, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < M; ++j) mu[j] += diffs(i, j);
    for (auto& x : mu) x /= static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < M; ++j) {
            double e = diffs(i, j) - mu[j];
            var[j] += e * e;
        }
    for (auto& x : var) x /= static_cast<double>(N);
    Vec mn = minmax(mu), vn = minmax(var);

    FeatureScoreTable t;
    t.epsilon = epsilon;
    t.n_pairs = N;
    t.features.reserve(M);
    std::size_t j = 0;
    for (std::size_t b = 0; b < layout.layers.size(); ++b)
        for (int idx = 0; idx < layout.widths[b]; ++idx, ++j)
            t.features.push_back({layout.layers[b], idx, mu[j], var[j], mn[j], vn[j], mn[j] / (vn[j] + epsilon)});
    return t;
}

FeatureScoreTable score_features(const Matrix& diffs, double epsilon) {
    return score_features(diffs, epsilon, FeatureLayout{{0}, {static_cast<int>(diffs.cols)}});
}

std::vector<std::size_t> ranked_candidates(const FeatureScoreTable& table) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < table.features.size(); ++j)
        if (table.features[j].mu > 0.0) idx.push_back(j);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& fa = table.features[a];
        const auto& fb = table.features[b];
        if (fa.score != fb.score) return fa.score > fb.score;
        if (fa.layer != fb.layer) return fa.layer < fb.layer;
        return fa.index < fb.index;
    });
    return idx;
}

InterventionSpec select_top_k(const FeatureScoreTable& table, int k) {
    if (k < 1) throw std::invalid_argument(fmt::format("select_top_k: k must be >= 1, got {}", k));
    auto order = ranked_candidates(table);
    InterventionSpec s;
    s.mode = SpecMode::sae_ablate;
    s.k = k;
    s.provenance.k = k;
    s.provenance.n = table.n_pairs;
    std::size_t take = std::min(order.size(), static_cast<std::size_t>(k));
    s.short_of_k = take < static_cast<std::size_t>(k);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& f = table.features[order[i]];
        s.features[f.layer].push_back(f.index);
    }
    for (auto& [_, v] : s.features) std::sort(v.begin(), v.end());
    return s;
}

std::string table_to_csv(const FeatureScoreTable& t) {
    std::string out = "layer,index,mu,var,mu_norm,var_norm,score\n";
    for (const auto& f : t.features)
        out += fmt::format("{},{},{},{},{},{},{}\n", f.layer, f.index, f.mu, f.var, f.mu_norm, f.var_norm, f.score);
    return out;
}

std::string spec_to_json(const InterventionSpec& s) {
    nlohmann::ordered_json j;
    j["mode"] = s.mode == SpecMode::sae_ablate ? "sae-ablate" : "direct-suppress";
    j["k"] = s.k;
    nlohmann::ordered_json layers = nlohmann::ordered_json::object();
    if (s.mode == SpecMode::sae_ablate)
        for (const auto& [l, f] : s.features) layers[std::to_string(l)] = f;
    else
        for (const auto& [l, v] : s.directions) layers[std::to_string(l)] = v;
    j["layers"] = layers;
    j["provenance"] = {{"source_model", s.provenance.source_model},
                       {"k", s.provenance.k},
                       {"n", s.provenance.n},
                       {"seed", s.provenance.seed}};
    if (s.short_of_k) j["warning"] = "fewer than k features with positive mean difference";
    return j.dump(2) + "\n";
}

InterventionSpec spec_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(fmt::format("malformed spec JSON: {}", e.what()));
    }
    if (!j.is_object() || !j.contains("mode") || !j.contains("layers"))
        throw std::runtime_error("spec JSON needs mode and layers");
    InterventionSpec s;
    std::string mode = j["mode"].get<std::string>();
    if (mode == "sae-ablate")
        s.mode = SpecMode::sae_ablate;
    else if (mode == "direct-suppress")
        s.mode = SpecMode::direct_suppress;
    else
        throw std::runtime_error(fmt::format("unknown spec mode '{}'", mode));
    s.k = j.value("k", 0);
    for (const auto& [key, val] : j["layers"].items()) {
        int l;
        try {
            l = std::stoi(key);
        } catch (const std::exception&) {
            throw std::runtime_error(fmt::format("spec layer key '{}' is not an integer", key));
        }
        if (s.mode == SpecMode::sae_ablate)
            s.features[l] = val.get<std::vector<int>>();
        else
            s.directions[l] = val.get<Vec>();
    }
    if (j.contains("provenance")) {
        const auto& p = j["provenance"];
        s.provenance.source_model = p.value("source_model", "");
        s.provenance.k = p.value("k", 0);
        s.provenance.n = p.value("n", std::size_t{0});
        s.provenance.seed = p.value("seed", std::uint64_t{0});
    }
    s.short_of_k = j.contains("warning");
    return s;
}

void save_spec(const InterventionSpec& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path));
    out << spec_to_json(s);
}

InterventionSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return spec_from_json(ss.str());
}

} // namespace steerkt
