#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "steerkt/identify.hpp"

// Independent straight-line scoring used to check the identify pipeline.
namespace oracle {

struct Scores {
    std::vector<double> mu, var, score;
    std::vector<std::pair<int, int>> top; // (layer, index), sorted
};

// md[i] / pl[i]: pooled latents of pair i, layers concatenated in ascending order.
inline Scores brute_force(const std::vector<std::vector<double>>& md, const std::vector<std::vector<double>>& pl, const std::vector<int>& layers,
                          const std::vector<int>& widths, double eps, int k) {
    std::size_t n = md.size();
    std::size_t f = 0;
    for (int w : widths) f += static_cast<std::size_t>(w);
    Scores s;
    s.mu.assign(f, 0);
    s.var.assign(f, 0);
    for (std::size_t j = 0; j < f; ++j) {
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += md[i][j] - pl[i][j];
        s.mu[j] = sum / static_cast<double>(n);
        double sq = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double e = md[i][j] - pl[i][j] - s.mu[j];
            sq += e * e;
        }
        s.var[j] = sq / static_cast<double>(n);
    }
    auto minmax = [](const std::vector<double>& v) {
        double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
        std::vector<double> out(v.size(), 0.0);
        if (hi > lo)
            for (std::size_t j = 0; j < v.size(); ++j) out[j] = (v[j] - lo) / (hi - lo);
        return out;
    };
    auto mn = minmax(s.mu), vn = minmax(s.var);
    s.score.resize(f);
    for (std::size_t j = 0; j < f; ++j) s.score[j] = mn[j] / (vn[j] + eps);
    std::vector<std::size_t> cand;
    for (std::size_t j = 0; j < f; ++j)
        if (s.mu[j] > 0) cand.push_back(j);
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return s.score[a] > s.score[b]; });
    cand.resize(std::min(cand.size(), static_cast<std::size_t>(k)));
    for (std::size_t j : cand) {
        std::size_t off = 0, b = 0;
        while (j >= off + static_cast<std::size_t>(widths[b])) off += static_cast<std::size_t>(widths[b++]);
        s.top.push_back({layers[b], static_cast<int>(j - off)});
    }
    std::sort(s.top.begin(), s.top.end());
    return s;
}

inline std::vector<std::pair<int, int>> spec_pairs(const steerkt::InterventionSpec& s) {
    std::vector<std::pair<int, int>> out;
    for (const auto& [l, f] : s.features)
        for (int j : f) out.push_back({l, j});
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace oracle
