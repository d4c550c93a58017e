#pragma once

#include <optional>
#include <string>
#include <vector>

#include "steerkt/diagnostics.hpp"
#include "steerkt/evalbench.hpp"
#include "steerkt/identify.hpp"
#include "steerkt/pairgen.hpp"
#include "steerkt/saecore.hpp"
#include "steerkt/steer.hpp"
#include "steerkt/toymodel.hpp"

namespace steerkt {

// SAE settings used by the end-to-end pipeline: a strong sparsity penalty
// trained to convergence, so weak incidental features die and the surviving
// dictionary is clean enough for the strength-stability ranking.
SaeTrainConfig pipeline_sae_config();

struct RunConfig {
    std::uint64_t seed = 7;
    std::optional<double> alpha;   // nullopt: calibrate against the hard split
    double alpha_target_hard = 0.50;
    double alpha_step = 0.05;
    double alpha_max = 5.0;
    std::size_t n_pairs = 500;     // probe pairs used for identification
    std::size_t n_pool = 1000;     // synthesized pool (probe pairs are its prefix)
    std::size_t n_heldout = 100;
    std::size_t n_calibration = 200;
    std::size_t n_calib_triplets = 200; // per split, for alpha calibration
    std::size_t n_eval_triplets = 350;  // per split
    int k = 10;
    double epsilon = 1e-6;
    std::optional<std::vector<int>> layers; // override the recommended range
    PoolScope scope = PoolScope::full;
    ToyConfig toy;
    SaeTrainConfig sae = pipeline_sae_config();
    bool suppression = true;
    void validate() const;
};

struct ToyData {
    PairSet pool, probe, heldout;
    std::vector<Tokens> calibration;
    std::vector<EvalTriplet> calib_triplets, eval_triplets;
};

struct SaeSummary {
    int layer = 0;
    double rel_mse = 0, l0 = 0, final_loss = 0;
    int dead = 0;
};

struct PipelineResult {
    RunConfig config;
    ToyRewardModel model;
    ToyData data;
    double alpha = 0;
    bool alpha_calibrated = false;
    bool alpha_reached_target = true;
    SaeMap saes;
    std::vector<SaeSummary> sae_summaries;
    LayerReport layers;
    std::vector<int> used_layers;
    FeatureScoreTable table;
    InterventionSpec spec;
    EvalResult baseline, steered;
    double gap_baseline = 0, gap_steered = 0;
    std::optional<InterventionSpec> suppression_spec;
    std::optional<EvalResult> suppressed;
    double gap_suppressed = 0;
    std::map<int, int> histogram;
};

ToyData make_toy_data(const RunConfig& cfg);
// Distinct non-special token rows present in the pairs, at one layer, ascending id.
Matrix sae_corpus(const ToyRewardModel& model, const PairSet& pairs, int layer);
SaeMap train_layer_saes(const ToyRewardModel& model, const PairSet& pairs, const std::vector<int>& layers,
                        const SaeTrainConfig& cfg, std::vector<SaeSummary>* summaries = nullptr);
// Smallest alpha on the grid whose baseline hard accuracy is <= target.
struct AlphaSearch {
    double alpha = 0;
    double hard = 0;
    bool reached = false;
};
AlphaSearch calibrate_alpha(const ToyRewardModel& body, const Vec& v_content, const Vec& v_format,
                            const std::vector<EvalTriplet>& triplets, double target, double step, double max_alpha);

// Builds the toy body for cfg.seed and plants the bias (given or calibrated alpha).
ToyRewardModel reference_model(const RunConfig& cfg, const ToyData& data, AlphaSearch* info = nullptr);

PipelineResult run_pipeline(const RunConfig& cfg);

// Second head on the same body: calibration means from an independent seed's
// data and alpha scaled by `alpha_factor` (or `alpha` when positive).
ToyRewardModel transfer_target(const ToyRewardModel& source, const RunConfig& cfg, double alpha_factor = 1.5,
                               double alpha = 0.0);

// Toy variant where the format direction overlaps genuine content and a gated
// content detector makes the reward depend nonlinearly on that overlap.
RunConfig entangled_run_config();

std::string pipeline_report_json(const PipelineResult& r);
// Writes report.json plus CSV mirrors, spec, model, SAEs and pairs into dir.
void write_pipeline_outputs(const PipelineResult& r, const std::string& dir, bool plots);

std::string svg_line_chart(const std::string& title, const std::vector<double>& xs,
                           const std::vector<std::pair<std::string, std::vector<double>>>& series);
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values);

} // namespace steerkt
