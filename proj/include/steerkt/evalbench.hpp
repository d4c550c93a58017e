#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "steerkt/identify.hpp"
#include "steerkt/pairgen.hpp"
#include "steerkt/steer.hpp"
#include "steerkt/toymodel.hpp"

namespace steerkt {

enum class Split { easy = 0, normal = 1, hard = 2 };
const char* split_name(Split s);

struct EvalTriplet {
    Tokens prompt;
    Tokens chosen;
    Tokens rejected;
    Split split = Split::easy;
    bool chosen_formatted = false;
    bool rejected_formatted = false;
    int chosen_good = 0, rejected_good = 0;
    std::string domain = "chat";
};

struct TripletConfig {
    int prompt_min = 4, prompt_max = 10;
    int length_min = 8, length_max = 16; // chosen and rejected share one content length
    int rejected_good_min = 0, rejected_good_max = 2;
    int gap_min = 1, gap_max = 3;        // extra GOOD tokens in the chosen response
    int markup_min = 2, markup_max = 8;
    void validate() const;
};

struct EvalConfigEcho {
    int k = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string mode = "baseline";
};

struct EvalResult {
    std::map<std::string, double> accuracy;             // split -> fraction correct
    std::map<std::string, std::size_t> counts;          // split -> triplets
    double average = 0;                                 // mean of split accuracies
    std::map<std::string, std::map<std::string, double>> by_domain; // domain -> split -> accuracy
    EvalConfigEcho config;

    double acc(Split s) const { return accuracy.at(split_name(s)); }
    double spread() const; // max - min over split accuracies
};

std::vector<EvalTriplet> build_triplets(SeededRng& rng, std::size_t n_per_split, const TripletConfig& cfg = {},
                                        const TokenVocab& vocab = {},
                                        const std::vector<Split>& splits = {Split::easy, Split::normal, Split::hard});

// spec = nullopt gives the baseline. Strict ties count as incorrect.
EvalResult evaluate(const ToyRewardModel& model, const std::optional<InterventionSpec>& spec, const SaeMap& saes,
                    const std::vector<EvalTriplet>& triplets);
// Evaluation from a prepared scorer (hooks already folded in).
EvalResult evaluate_with(const TokenScorer& scorer, const std::vector<EvalTriplet>& triplets);

// Mean |f(x,y_md) - f(x,y_pl)| over pairs, optionally under a spec.
double mean_abs_gap(const ToyRewardModel& model, const std::optional<InterventionSpec>& spec, const SaeMap& saes,
                    const PairSet& pairs);

struct SweepKRow {
    int k = 0;
    InterventionSpec spec;
    EvalResult result;
};
std::vector<SweepKRow> sweep_k(const ToyRewardModel& model, const SaeMap& saes, const FeatureScoreTable& table,
                               const std::vector<EvalTriplet>& triplets,
                               const std::vector<int>& ks = {5, 10, 20, 30, 50});

struct SweepNRow {
    std::size_t n = 0;
    InterventionSpec spec;
    EvalResult result;
    double overlap = 0; // |topK(N) ∩ topK(N_ref)| / K
};
std::vector<SweepNRow> sweep_probe_size(const ToyRewardModel& model, const SaeMap& saes, const PairSet& full_pairs,
                                        const std::vector<EvalTriplet>& triplets, const std::vector<int>& layers,
                                        const std::vector<std::size_t>& ns = {50, 100, 500, 1000}, int k = 10,
                                        std::size_t n_ref = 500, double epsilon = 1e-6);
double spec_overlap(const InterventionSpec& a, const InterventionSpec& b, int k);

struct TransferResult {
    InterventionSpec spec;
    EvalResult baseline;
    EvalResult transferred;
};
TransferResult transfer_eval(const ToyRewardModel& source, const ToyRewardModel& target, const SaeMap& saes,
                             const PairSet& pairs, const std::vector<EvalTriplet>& triplets,
                             const std::vector<int>& layers, int k = 10, double epsilon = 1e-6);

std::string eval_result_json(const EvalResult& r);
std::string eval_result_csv(const EvalResult& r);

} // namespace steerkt
