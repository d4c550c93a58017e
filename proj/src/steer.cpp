#include "steerkt/steer.hpp"

#include <stdexcept>

#include <fmt/core.h>

namespace steerkt {

Matrix ablate_latents(const Matrix& z, const std::vector<int>& s) {
    for (int j : s)
        if (j < 0 || static_cast<std::size_t>(j) >= z.cols)
            throw std::invalid_argument(fmt::format("ablate_latents: feature {} outside [0, {})", j, z.cols));
    Matrix out = z;
    for (std::size_t t = 0; t < out.rows; ++t)
        for (int j : s) out(t, static_cast<std::size_t>(j)) = 0.0;
    return out;
}

Matrix intervene_layer(const Matrix& h, const SaeModel& sae, const std::vector<int>& s, const Mask& mask) {
    if (h.cols != static_cast<std::size_t>(sae.d))
        throw std::invalid_argument(fmt::format("intervene_layer: activations have {} cols, SAE expects {}", h.cols, sae.d));
    if (mask.size() != h.rows)
        throw std::invalid_argument(fmt::format("intervene_layer: mask length {} != rows {}", mask.size(), h.rows));
    Matrix edited = decode(sae, ablate_latents(encode(sae, h), s));
    Matrix out = h;
    for (std::size_t t = 0; t < h.rows; ++t) {
        if (!mask[t]) continue;
        auto src = edited.row(t);
        std::copy(src.begin(), src.end(), out.row(t).begin());
    }
    return out;
}

SuppressionDirections build_suppression_directions(const PairSet& pairs, const ToyRewardModel& model,
                                                   const std::vector<int>& layers, PoolScope scope) {
    if (pairs.pairs.empty()) throw std::invalid_argument("build_suppression_directions: no pairs");
    for (int l : layers)
        if (l < 0 || l > model.depth) throw std::invalid_argument(fmt::format("layer {} outside the model", l));
    SuppressionDirections sd;
    sd.n_pairs = pairs.size();
    for (int l : layers) sd.dirs[l] = Vec(static_cast<std::size_t>(model.d), 0.0);
    auto diffs = parallel_map(pairs.size(), [&](std::size_t i) {
        const auto& p = pairs.pairs[i];
        auto a = forward(model, concat_seq(model.vocab, p.prompt, p.answer_md));
        auto b = forward(model, concat_seq(model.vocab, p.prompt, p.answer_plain));
        Mask ma = pool_mask(model.vocab, p.prompt, p.answer_md, scope);
        Mask mb = pool_mask(model.vocab, p.prompt, p.answer_plain, scope);
        std::vector<Vec> out;
        for (int l : layers) {
            Vec va = masked_mean(a.layers[static_cast<std::size_t>(l)], ma);
            Vec vb = masked_mean(b.layers[static_cast<std::size_t>(l)], mb);
            for (std::size_t k = 0; k < va.size(); ++k) va[k] -= vb[k];
            out.push_back(std::move(va));
        }
        return out;
    });
    for (const auto& row : diffs)
        for (std::size_t li = 0; li < layers.size(); ++li) {
            auto& dst = sd.dirs[layers[li]];
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += row[li][k];
        }
    for (auto& [_, v] : sd.dirs)
        for (auto& x : v) x /= static_cast<double>(pairs.size());
    return sd;
}

Matrix apply_suppression(const Matrix& h, const Vec& d_vec, const Mask& mask) {
    if (d_vec.size() != h.cols)
        throw std::invalid_argument(fmt::format("apply_suppression: direction length {} != {}", d_vec.size(), h.cols));
    if (mask.size() != h.rows)
        throw std::invalid_argument(fmt::format("apply_suppression: mask length {} != rows {}", mask.size(), h.rows));
    Matrix out = h;
    for (std::size_t t = 0; t < h.rows; ++t) {
        if (!mask[t]) continue;
        auto r = out.row(t);
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= d_vec[k];
    }
    return out;
}

InterventionSpec suppression_spec(const SuppressionDirections& sd) {
    InterventionSpec s;
    s.mode = SpecMode::direct_suppress;
    s.directions = sd.dirs;
    s.provenance.n = sd.n_pairs;
    return s;
}

HookSet make_hooks(const ToyRewardModel& model, const InterventionSpec& spec, const SaeMap& saes) {
    HookSet hs;
    if (spec.mode == SpecMode::sae_ablate) {
        for (const auto& [l, feats] : spec.features) {
            if (l < 0 || l > model.depth) throw std::invalid_argument(fmt::format("spec layer {} outside the model", l));
            auto it = saes.find(l);
            if (it == saes.end()) throw std::invalid_argument(fmt::format("spec needs an SAE for layer {}", l));
            if (it->second.d != model.d)
                throw std::invalid_argument(fmt::format("SAE for layer {} has d={}, model has d={}", l, it->second.d, model.d));
            for (int j : feats)
                if (j < 0 || j >= it->second.m)
                    throw std::invalid_argument(fmt::format("spec feature {} outside SAE width {}", j, it->second.m));
            const SaeModel* sae = &it->second;
            std::vector<int> s = feats;
            hs.hooks[l] = [sae, s](const Matrix& h, const Mask& mask) { return intervene_layer(h, *sae, s, mask); };
        }
    } else {
        for (const auto& [l, v] : spec.directions) {
            if (l < 0 || l > model.depth) throw std::invalid_argument(fmt::format("spec layer {} outside the model", l));
            if (v.size() != static_cast<std::size_t>(model.d))
                throw std::invalid_argument(fmt::format("direction for layer {} has length {}, model d={}", l, v.size(), model.d));
            Vec dv = v;
            hs.hooks[l] = [dv](const Matrix& h, const Mask& mask) { return apply_suppression(h, dv, mask); };
        }
    }
    return hs;
}

HookSet reconstruction_hooks(const SaeModel& sae, int layer) {
    HookSet hs;
    const SaeModel* p = &sae;
    hs.hooks[layer] = [p](const Matrix& h, const Mask& mask) { return intervene_layer(h, *p, {}, mask); };
    return hs;
}

double score_with_intervention(const ToyRewardModel& model, const InterventionSpec& spec, const SaeMap& saes,
                               const Tokens& x, const Tokens& y) {
    HookSet hs = make_hooks(model, spec, saes);
    return reward(model, concat_seq(model.vocab, x, y), &hs);
}

} // namespace steerkt
