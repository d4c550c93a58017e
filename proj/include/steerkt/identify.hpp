#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "steerkt/numkit.hpp"
#include "steerkt/pairgen.hpp"
#include "steerkt/saecore.hpp"
#include "steerkt/toymodel.hpp"

namespace steerkt {

using SaeMap = std::map<int, SaeModel>;

enum class PoolScope { full, response };

struct PooledLatents {
    std::vector<int> layers;          // ascending
    std::vector<std::size_t> offsets; // start of each layer block in `all`
    Vec all;
};

struct FeatureScore {
    int layer = 0;
    int index = 0;
    double mu = 0, var = 0, mu_norm = 0, var_norm = 0, score = 0;
};

struct FeatureScoreTable {
    std::vector<FeatureScore> features; // global order: ascending layer, then index
    double epsilon = 1e-6;
    std::size_t n_pairs = 0;
};

enum class SpecMode { sae_ablate, direct_suppress };

struct Provenance {
    std::string source_model;
    int k = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    bool operator==(const Provenance&) const = default;
};

struct InterventionSpec {
    SpecMode mode = SpecMode::sae_ablate;
    int k = 0;
    std::map<int, std::vector<int>> features; // sae mode: layer -> S_l (ascending)
    std::map<int, Vec> directions;            // suppress mode: layer -> d_l
    Provenance provenance;
    bool short_of_k = false;                  // fewer than k features qualified

    std::size_t feature_count() const;
    bool operator==(const InterventionSpec&) const = default;
};

Vec pool_latents(const Matrix& z, const Mask& mask);

// Pooling mask for BOS + x + y + EOS; `response` additionally drops prompt positions.
Mask pool_mask(const TokenVocab& v, const Tokens& x, const Tokens& y, PoolScope scope);

PooledLatents pooled_latents(const ToyRewardModel& model, const SaeMap& saes, const std::vector<int>& layers,
                             const Tokens& x, const Tokens& y, PoolScope scope = PoolScope::full);
Matrix paired_diffs(const PairSet& pairs, const ToyRewardModel& model, const SaeMap& saes,
                    const std::vector<int>& layers, PoolScope scope = PoolScope::full);

// Layer bookkeeping for a concatenated diff matrix.
struct FeatureLayout {
    std::vector<int> layers;
    std::vector<int> widths;
    std::size_t total() const;
};
FeatureLayout layout_of(const SaeMap& saes, const std::vector<int>& layers);

FeatureScoreTable score_features(const Matrix& diffs, double epsilon, const FeatureLayout& layout);
FeatureScoreTable score_features(const Matrix& diffs, double epsilon = 1e-6); // single block at layer 0

// Global ranking among features with mu > 0: score descending, then (layer, index).
std::vector<std::size_t> ranked_candidates(const FeatureScoreTable& table);
InterventionSpec select_top_k(const FeatureScoreTable& table, int k);

std::string table_to_csv(const FeatureScoreTable& t);
std::string spec_to_json(const InterventionSpec& s);
InterventionSpec spec_from_json(const std::string& text);
void save_spec(const InterventionSpec& s, const std::string& path);
InterventionSpec load_spec(const std::string& path);

} // namespace steerkt
