#pragma once

#include <optional>
#include <string>
#include <vector>

#include "steerkt/identify.hpp"

namespace steerkt {

// Exit codes
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

int dispatch(int argc, char** argv);
int dispatch(const std::vector<std::string>& args); // args exclude the program name

// Identification over external dumps listed in a manifest. Without `encoders`
// each dump holds SAE latents (tokens x m); with them, dumps hold raw
// activations and are encoded per layer first. Paths in the manifest are
// relative to the manifest's directory.
InterventionSpec identify_from_dumps(const std::string& manifest_path, int k, double epsilon,
                                     const SaeMap* encoders = nullptr, FeatureScoreTable* table_out = nullptr);

// "0-6", "1,3,5" or a mix such as "0-2,5".
std::vector<int> parse_layers(const std::string& text);
SaeMap load_saes(const std::string& dir);

} // namespace steerkt
