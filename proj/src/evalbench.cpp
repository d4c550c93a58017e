#include "steerkt/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <fmt/core.h>
#include <json.hpp>

namespace steerkt {

const char* split_name(Split s) {
    switch (s) {
    case Split::easy: return "easy";
    case Split::normal: return "normal";
    case Split::hard: return "hard";
    }
    return "?";
}

void TripletConfig::validate() const {
    auto ok = [](int lo, int hi) { return lo >= 0 && lo <= hi; };
    if (!ok(prompt_min, prompt_max) || !ok(length_min, length_max) || !ok(rejected_good_min, rejected_good_max) ||
        !ok(gap_min, gap_max) || !ok(markup_min, markup_max))
        throw std::invalid_argument("triplet config: ranges must satisfy 0 <= min <= max");
    if (gap_min < 1) throw std::invalid_argument("triplet config: chosen must carry more GOOD tokens (gap >= 1)");
    if (rejected_good_max + gap_max > length_min)
        throw std::invalid_argument("triplet config: GOOD tokens do not fit in the shortest response");
    if (prompt_min < 1) throw std::invalid_argument("triplet config: prompts need at least one token");
}

double EvalResult::spread() const {
    if (accuracy.empty()) return 0.0;
    double lo = 1e300, hi = -1e300;
    for (const auto& [_, a] : accuracy) {
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    return hi - lo;
}

std::vector<EvalTriplet> build_triplets(SeededRng& rng, std::size_t n_per_split, const TripletConfig& cfg,
                                        const TokenVocab& vocab, const std::vector<Split>& splits) {
    if (n_per_split < 1) throw std::invalid_argument("build_triplets: n_per_split must be >= 1");
    cfg.validate();
    std::vector<EvalTriplet> out;
    for (Split sp : splits) {
        for (std::size_t i = 0; i < n_per_split; ++i) {
            EvalTriplet t;
            t.split = sp;
            t.domain = kDomainBuckets[i % 4];
            int plen = static_cast<int>(rng.range(cfg.prompt_min, cfg.prompt_max));
            t.prompt = sample_content(rng, vocab, plen, 0);
            t.rejected_good = static_cast<int>(rng.range(cfg.rejected_good_min, cfg.rejected_good_max));
            t.chosen_good = t.rejected_good + static_cast<int>(rng.range(cfg.gap_min, cfg.gap_max));
            int len = static_cast<int>(rng.range(cfg.length_min, cfg.length_max));
            t.chosen = sample_content(rng, vocab, len, t.chosen_good);
            t.rejected = sample_content(rng, vocab, len, t.rejected_good);
            if (sp == Split::easy) {
                t.chosen = insert_markup(rng, vocab, t.chosen, static_cast<int>(rng.range(cfg.markup_min, cfg.markup_max)));
                t.chosen_formatted = true;
            } else if (sp == Split::hard) {
                t.rejected =
                    insert_markup(rng, vocab, t.rejected, static_cast<int>(rng.range(cfg.markup_min, cfg.markup_max)));
                t.rejected_formatted = true;
            } else if (rng.below(2) == 1) {
                // both formatted, with the same amount of markup
                int k = static_cast<int>(rng.range(cfg.markup_min, cfg.markup_max));
                t.chosen = insert_markup(rng, vocab, t.chosen, k);
                t.rejected = insert_markup(rng, vocab, t.rejected, k);
                t.chosen_formatted = t.rejected_formatted = true;
            }
            out.push_back(std::move(t));
        }
    }
    return out;
}

EvalResult evaluate_with(const TokenScorer& scorer, const std::vector<EvalTriplet>& triplets) {
    if (triplets.empty()) throw std::invalid_argument("evaluate: no triplets");
    std::map<std::string, std::size_t> correct, total;
    std::map<std::string, std::map<std::string, std::pair<std::size_t, std::size_t>>> dom;
    const TokenVocab& v = scorer.vocab();
    for (const auto& t : triplets) {
        double c = scorer.score(concat_seq(v, t.prompt, t.chosen));
        double r = scorer.score(concat_seq(v, t.prompt, t.rejected));
        bool ok = c > r;
        std::string s = split_name(t.split);
        correct[s] += ok ? 1 : 0;
        total[s] += 1;
        auto& cell = dom[t.domain][s];
        cell.first += ok ? 1 : 0;
        cell.second += 1;
    }
    EvalResult res;
    double sum = 0;
    for (const auto& [s, n] : total) {
        res.accuracy[s] = static_cast<double>(correct[s]) / static_cast<double>(n);
        res.counts[s] = n;
        sum += res.accuracy[s];
    }
    res.average = sum / static_cast<double>(total.size());
    for (const auto& [d, m] : dom)
        for (const auto& [s, c] : m) res.by_domain[d][s] = static_cast<double>(c.first) / static_cast<double>(c.second);
    return res;
}

EvalResult evaluate(const ToyRewardModel& model, const std::optional<InterventionSpec>& spec, const SaeMap& saes,
                    const std::vector<EvalTriplet>& triplets) {
    EvalResult res;
    if (spec) {
        HookSet hs = make_hooks(model, *spec, saes);
        res = evaluate_with(TokenScorer(model, &hs), triplets);
        res.config.mode = spec->mode == SpecMode::sae_ablate ? "sae-ablate" : "direct-suppress";
        res.config.k = spec->k;
        res.config.n = spec->provenance.n;
        res.config.seed = spec->provenance.seed;
    } else {
        res = evaluate_with(TokenScorer(model), triplets);
    }
    return res;
}

double mean_abs_gap(const ToyRewardModel& model, const std::optional<InterventionSpec>& spec, const SaeMap& saes,
                    const PairSet& pairs) {
    if (pairs.pairs.empty()) throw std::invalid_argument("mean_abs_gap: no pairs");
    HookSet hs;
    if (spec) hs = make_hooks(model, *spec, saes);
    TokenScorer sc(model, &hs);
    double s = 0;
    for (const auto& p : pairs.pairs)
        s += std::fabs(sc.score(concat_seq(model.vocab, p.prompt, p.answer_md)) -
                       sc.score(concat_seq(model.vocab, p.prompt, p.answer_plain)));
    return s / static_cast<double>(pairs.size());
}

std::vector<SweepKRow> sweep_k(const ToyRewardModel& model, const SaeMap& saes, const FeatureScoreTable& table,
                               const std::vector<EvalTriplet>& triplets, const std::vector<int>& ks) {
    if (ks.empty()) throw std::invalid_argument("sweep_k: no K values");
    std::vector<SweepKRow> out;
    for (int k : ks) {
        if (k < 1) throw std::invalid_argument(fmt::format("sweep_k: K must be >= 1, got {}", k));
        SweepKRow row;
        row.k = k;
        row.spec = select_top_k(table, k);
        row.result = evaluate(model, row.spec, saes, triplets);
        out.push_back(std::move(row));
    }
    return out;
}

double spec_overlap(const InterventionSpec& a, const InterventionSpec& b, int k) {
    if (k < 1) throw std::invalid_argument("spec_overlap: k must be >= 1");
    std::set<std::pair<int, int>> sa;
    for (const auto& [l, f] : a.features)
        for (int j : f) sa.insert({l, j});
    std::size_t common = 0;
    for (const auto& [l, f] : b.features)
        for (int j : f) common += sa.count({l, j});
    return static_cast<double>(common) / static_cast<double>(k);
}

std::vector<SweepNRow> sweep_probe_size(const ToyRewardModel& model, const SaeMap& saes, const PairSet& full_pairs,
                                        const std::vector<EvalTriplet>& triplets, const std::vector<int>& layers,
                                        const std::vector<std::size_t>& ns, int k, std::size_t n_ref, double epsilon) {
    if (ns.empty()) throw std::invalid_argument("sweep_probe_size: no N values");
    std::size_t need = std::max(n_ref, *std::max_element(ns.begin(), ns.end()));
    if (need > full_pairs.size())
        throw std::invalid_argument(
            fmt::format("sweep_probe_size: need {} pairs, only {} available", need, full_pairs.size()));
    FeatureLayout lay = layout_of(saes, layers);
    Matrix all = paired_diffs(full_pairs, model, saes, layers);
    auto spec_for = [&](std::size_t n) {
        Matrix sub(n, all.cols, std::vector<double>(all.data.begin(), all.data.begin() + static_cast<long>(n * all.cols)));
        auto s = select_top_k(score_features(sub, epsilon, lay), k);
        return s;
    };
    InterventionSpec ref = spec_for(n_ref);
    std::vector<SweepNRow> out;
    for (std::size_t n : ns) {
        SweepNRow row;
        row.n = n;
        row.spec = spec_for(n);
        row.overlap = spec_overlap(row.spec, ref, k);
        row.result = evaluate(model, row.spec, saes, triplets);
        out.push_back(std::move(row));
    }
    return out;
}

TransferResult transfer_eval(const ToyRewardModel& source, const ToyRewardModel& target, const SaeMap& saes,
                             const PairSet& pairs, const std::vector<EvalTriplet>& triplets,
                             const std::vector<int>& layers, int k, double epsilon) {
    if (source.d != target.d || source.depth != target.depth || !(source.vocab == target.vocab))
        throw std::invalid_argument("transfer_eval: source and target dimensions differ");
    FeatureLayout lay = layout_of(saes, layers);
    TransferResult r;
    r.spec = select_top_k(score_features(paired_diffs(pairs, source, saes, layers), epsilon, lay), k);
    r.baseline = evaluate(target, std::nullopt, saes, triplets);
    r.transferred = evaluate(target, r.spec, saes, triplets);
    return r;
}

static nlohmann::ordered_json eval_json_obj(const EvalResult& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["counts"] = r.counts;
    j["average"] = r.average;
    j["by_domain"] = r.by_domain;
    j["config"] = {{"k", r.config.k}, {"n", r.config.n}, {"seed", r.config.seed}, {"mode", r.config.mode}};
    return j;
}

std::string eval_result_json(const EvalResult& r) { return eval_json_obj(r).dump(2) + "\n"; }

std::string eval_result_csv(const EvalResult& r) {
    std::string out = "split,accuracy,count\n";
    for (const auto& [s, a] : r.accuracy) out += fmt::format("{},{},{}\n", s, a, r.counts.at(s));
    out += fmt::format("average,{},\n", r.average);
    return out;
}

} // namespace steerkt
