#pragma once

#include <string>
#include <vector>

#include "steerkt/numkit.hpp"

namespace steerkt {

struct SaeModel {
    int layer = 0;
    int d = 0;
    int m = 0;
    Matrix w_enc; // m x d
    Vec b_enc;    // m
    Matrix w_dec; // d x m
    Vec b_dec;    // d
    bool operator==(const SaeModel&) const = default;
};

struct SaeLoss {
    double total = 0, recon = 0, sparsity = 0;
};

struct SaeGrads {
    Matrix w_enc, w_dec;
    Vec b_enc, b_dec;
};

struct SaeTrainConfig {
    int m = 256;
    double lambda = 1e-3;
    double lr = 1e-2;
    int epochs = 500;
    std::uint64_t seed = 0;
    // Optional stabilizers (off by default): renormalize decoder columns to unit
    // norm after every step, and start the decoder bias at the data mean.
    bool unit_norm_decoder = false;
    bool center_decoder_bias = false;
};

struct SaeTrainReport {
    std::vector<SaeLoss> history; // epochs+1 rows: before each step, then the final state
    double final_rel_mse = 0;
    double final_l0 = 0;
    int dead_features = 0;
};

inline constexpr double kL0Threshold = 1e-8;

SaeModel init_sae(int d, int m, int layer, SeededRng& rng);

Matrix encode(const SaeModel& sae, const Matrix& h);
Matrix decode(const SaeModel& sae, const Matrix& z);
Matrix reconstruct(const SaeModel& sae, const Matrix& h);

SaeLoss sae_loss(const SaeModel& sae, const Matrix& h, double lambda);
// Analytic gradients of the mean loss. ReLU'(0) = 0.
SaeGrads sae_gradients(const SaeModel& sae, const Matrix& h, double lambda);

// Full-batch gradient descent. The result is rounded to 32-bit floats so it
// serializes losslessly.
std::pair<SaeModel, SaeTrainReport> train_sae(const Matrix& acts, int layer, const SaeTrainConfig& cfg);

double relative_mse(const SaeModel& sae, const Matrix& h);
double mean_l0(const Matrix& z);

void save_sae(const SaeModel& sae, const std::string& path);
SaeModel load_sae(const std::string& path);

} // namespace steerkt
