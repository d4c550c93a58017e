#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "steerkt/numkit.hpp"

namespace steerkt {

using Token = std::int32_t;
using Tokens = std::vector<Token>;
using Mask = std::vector<std::uint8_t>;

struct TokenVocab {
    int size = 64;
    Token pad = 0, bos = 1, eos = 2;
    // BOLD, HEADER, LIST, CODE, ITALIC
    std::array<Token, 5> markup{3, 4, 5, 6, 7};
    Token good = 8;
    Token first_filler = 9;

    bool is_special(Token t) const { return t == pad || t == bos || t == eos; }
    bool is_markup(Token t) const;
    int filler_count() const { return size - first_filler; }
    void validate() const;
    bool operator==(const TokenVocab&) const = default;
};

// Construction knobs for the toy reward model.
struct ToyConfig {
    TokenVocab vocab;
    int depth = 6;
    int d = 32;
    int hidden = 64;
    double embed_scale = 0.8;   // spread of generic token embeddings
    double base_scale = 2.0;    // shared offset carried by every token
    double good_scale = 4.0;    // content (GOOD) embedding strength
    double markup_scale = 4.0;  // format (markup) embedding strength
    double markup_noise = 0.05; // per-markup-id jitter, relative to markup_scale
    double overlap = 0.0;       // cosine between the markup direction and the content direction
    double w1_gain = 1.0;
    double w2_gain = 0.5;
    // Optional thresholded content detector in the last block: one hidden unit
    // fires when a token's content projection exceeds gate_threshold * good_scale
    // (measured against the shared offset) and writes gate_gain along a fresh
    // quality direction. Off when gate_gain = 0.
    double gate_gain = 0.0;
    double gate_threshold = 0.75;
    void validate() const;
};

struct ToyRewardModel {
    TokenVocab vocab;
    int depth = 0, d = 0, hidden = 0;
    Matrix embed;            // V x d
    std::vector<Matrix> w1;  // depth x (hidden x d)
    std::vector<Matrix> w2;  // depth x (d x hidden)
    Vec head;                // d
    double alpha = 0.0;
    Vec content_dir;         // unit content direction used at construction
    Vec format_dir;          // unit markup direction used at construction
    Vec v_format, v_content; // calibration means recorded by plant_bias (empty before)
    std::uint64_t seed = 0;

    bool operator==(const ToyRewardModel&) const = default;
};

// Hooks receive a layer's post-block activations and the token mask and return
// the activations that continue through the network.
using Hook = std::function<Matrix(const Matrix& h, const Mask& mask)>;

struct HookSet {
    std::map<int, Hook> hooks; // layer -> intervention, at most one per layer
    bool active = true;
    bool empty() const { return hooks.empty(); }
};

struct ForwardTrace {
    std::vector<Matrix> layers; // depth+1 entries: embedding output, then each block
    Mask mask;
    double reward = 0.0;
};

ToyRewardModel build_model(const ToyConfig& cfg, std::uint64_t seed);

Mask token_mask(const TokenVocab& v, const Tokens& toks);
ForwardTrace forward(const ToyRewardModel& m, const Tokens& toks, const HookSet* hooks = nullptr);
double reward(const ToyRewardModel& m, const Tokens& toks, const HookSet* hooks = nullptr);

// Masked mean of rows; throws when no row is selected.
Vec masked_mean(const Matrix& h, const Mask& mask);
// Reward head applied to pooled final activations.
double head_score(const ToyRewardModel& m, const Matrix& final_layer, const Mask& mask);

ToyRewardModel plant_bias(const ToyRewardModel& m, double alpha, const std::vector<Tokens>& calibration);
// Same as plant_bias but with precomputed calibration means.
ToyRewardModel plant_bias_with(const ToyRewardModel& m, double alpha, const Vec& v_content, const Vec& v_format);
// Calibration means (v_content, v_format) over final-layer GOOD / markup positions.
std::pair<Vec, Vec> calibration_means(const ToyRewardModel& m, const std::vector<Tokens>& calibration);

Tokens concat_seq(const TokenVocab& v, const Tokens& x, const Tokens& y);
double format_gap(const ToyRewardModel& m, const Tokens& x, const Tokens& y_md, const Tokens& y_pl,
                  const HookSet* hooks = nullptr);

// Per-token evaluation cache. The toy has no cross-position mixing, so when all
// hooks act row-by-row (as every built-in intervention does), a token's final
// activation depends only on its id. Scores match forward() bit for bit.
class TokenScorer {
public:
    TokenScorer(const ToyRewardModel& m, const HookSet* hooks = nullptr);
    double score(const Tokens& toks) const;
    double score(const Tokens& toks, const Vec& head) const;
    const TokenVocab& vocab() const { return vocab_; }
    const Matrix& final_rows() const { return final_; }
    const Matrix& layer_rows(int layer) const { return layers_.at(static_cast<std::size_t>(layer)); }

private:
    TokenVocab vocab_;
    Vec head_;
    std::vector<Matrix> layers_;
    Matrix final_;
};

// Model blob: one dumpio container (kind = model) carrying dims, vocab ids and weights.
void save_model(const ToyRewardModel& m, const std::string& path);
ToyRewardModel load_model(const std::string& path);
std::vector<double> model_to_payload(const ToyRewardModel& m);
ToyRewardModel model_from_payload(const std::vector<double>& p);

} // namespace steerkt
