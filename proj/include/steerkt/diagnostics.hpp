#pragma once

#include <map>
#include <string>
#include <vector>

#include "steerkt/identify.hpp"
#include "steerkt/saecore.hpp"
#include "steerkt/toymodel.hpp"

namespace steerkt {

struct LayerRow {
    int layer = 0;
    double mse = 0;            // mean per-token squared reconstruction error
    double rel_mse = 0;        // summed squared error / summed squared norm
    double reward_delta = 0;   // mean |f(h) - f(h_hat)| over sequences
    double reward_delta_rel = 0; // reward_delta / std of raw rewards over the corpus
    double l0 = 0;
    std::size_t samples = 0;   // sequences evaluated
};

struct LayerReport {
    std::vector<LayerRow> rows; // ascending layer
    std::vector<int> recommended;
};

double recon_mse(const SaeModel& sae, const Matrix& acts);
double l0(const Matrix& z);
double reward_delta(const ToyRewardModel& model, const SaeModel& sae, int layer, const Tokens& tokens);

// Longest prefix of layers whose relative MSE is within `factor` of the minimum.
std::vector<int> recommended_layers(const std::vector<LayerRow>& rows, double factor = 5.0);
LayerReport layer_report(const ToyRewardModel& model, const SaeMap& saes, const std::vector<Tokens>& corpus);

// Counts of the top_n highest-scoring features per layer (every layer in the table is listed).
std::map<int, int> feature_layer_histogram(const FeatureScoreTable& table, int top_n = 100);

std::string layer_report_csv(const LayerReport& r);
std::string layer_report_json(const LayerReport& r);

} // namespace steerkt
