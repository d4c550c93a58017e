#pragma once

#include <map>
#include <vector>

#include "steerkt/identify.hpp"
#include "steerkt/numkit.hpp"
#include "steerkt/toymodel.hpp"

namespace steerkt {

struct SuppressionDirections {
    std::map<int, Vec> dirs; // layer -> d_l
    std::size_t n_pairs = 0;
};

Matrix ablate_latents(const Matrix& z, const std::vector<int>& s);
Matrix intervene_layer(const Matrix& h, const SaeModel& sae, const std::vector<int>& s, const Mask& mask);

SuppressionDirections build_suppression_directions(const PairSet& pairs, const ToyRewardModel& model,
                                                   const std::vector<int>& layers, PoolScope scope = PoolScope::full);
Matrix apply_suppression(const Matrix& h, const Vec& d_vec, const Mask& mask);
InterventionSpec suppression_spec(const SuppressionDirections& sd);

// Hook set realizing a spec (one hook per listed layer).
HookSet make_hooks(const ToyRewardModel& model, const InterventionSpec& spec, const SaeMap& saes);
// Hook that substitutes the plain SAE reconstruction at one layer (empty feature set).
HookSet reconstruction_hooks(const SaeModel& sae, int layer);

double score_with_intervention(const ToyRewardModel& model, const InterventionSpec& spec, const SaeMap& saes,
                               const Tokens& x, const Tokens& y);

} // namespace steerkt
