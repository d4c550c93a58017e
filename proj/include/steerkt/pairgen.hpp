#pragma once

#include <optional>
#include <string>
#include <vector>

#include "steerkt/numkit.hpp"
#include "steerkt/toymodel.hpp"

namespace steerkt {

inline constexpr const char* kDomainBuckets[4] = {"chat", "reasoning", "math", "code"};

struct PairText {
    std::string prompt, answer_markdown, answer_plain;
    bool operator==(const PairText&) const = default;
};

struct PairedExample {
    Tokens prompt;
    Tokens answer_md;
    Tokens answer_plain;
    std::string domain = "chat";
    std::optional<PairText> meta;
    bool operator==(const PairedExample&) const = default;
};

struct PairSet {
    std::vector<PairedExample> pairs;
    std::size_t size() const { return pairs.size(); }
    bool operator==(const PairSet&) const = default;
};

struct PairConfig {
    int prompt_min = 4, prompt_max = 10;
    int answer_min = 8, answer_max = 16;
    int good_min = 0, good_max = 3;
    int markup_min = 2, markup_max = 8;
    double dedup_threshold = 0.95;
    void validate(const TokenVocab& v) const;
};

struct ValidationReport {
    bool has_markup = true;      // (a) answer_md carries at least one markup id
    bool plain_clean = true;     // (b) answer_plain carries none
    bool stripped_equal = true;  // (c) answer_md without markup equals answer_plain
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

// Random content of the given length holding exactly n_good GOOD tokens.
Tokens sample_content(SeededRng& rng, const TokenVocab& v, int length, int n_good);
// Inserts k markup tokens at uniformly drawn positions.
Tokens insert_markup(SeededRng& rng, const TokenVocab& v, const Tokens& resp, int k);
Tokens strip_markup(const TokenVocab& v, const Tokens& toks);

PairSet synth_pairs(SeededRng& rng, std::size_t n, const PairConfig& cfg = {}, const TokenVocab& vocab = {});
ValidationReport validate_pair(const PairedExample& p, const TokenVocab& vocab = {}, bool allow_zero_markup = false);
// Bag-of-token count vectors over the vocabulary.
Vec bag_of_tokens(const Tokens& toks, const TokenVocab& vocab);
// Greedy, order-preserving prompt deduplication.
PairSet dedup(const PairSet& ps, double threshold, const TokenVocab& vocab = {});

// Text mode. `**`, `##`, `-`, ``` and `_` map to markup ids (a `##` header
// swallows the rest of its line); words map to filler ids through a fixed
// lexicon, with unknown words hashed into the filler range; punctuation marks are
// separate tokens.
Tokens tokenize_text(const std::string& text, const TokenVocab& vocab = {});
std::string render_tokens(const Tokens& toks, const TokenVocab& vocab = {});
PairedExample pair_from_text(const PairText& t, const TokenVocab& vocab = {});

void save_pairs_json(const PairSet& ps, const std::string& path, const TokenVocab& vocab = {});
std::string pairs_to_json(const PairSet& ps, const TokenVocab& vocab = {});
// strict: pairs failing validation are rejected with an error
PairSet load_pairs_json(const std::string& path, const TokenVocab& vocab = {}, bool strict = true);
PairSet pairs_from_json(const std::string& text, const TokenVocab& vocab = {}, bool strict = true);

} // namespace steerkt
