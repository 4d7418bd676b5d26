#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lofi/graph.hpp"
#include "lofi/lofi_layer.hpp"

namespace lofi {

/// Random graph with roughly `mean_degree` neighbours per node and one-hot
/// features over `feature_dim` labels.
Graph make_synthetic_graph(std::size_t nodes, double mean_degree, std::size_t feature_dim, std::uint64_t seed);

struct ScalingBase {
    std::size_t nodes = 2000;
    double mean_degree = 4.0;
    std::size_t feature_dim = 8;
    std::size_t masks = 8;
    std::size_t words = 8;
    int radius = 1;
    int repeats = 5;
    double min_seconds = 0.02;  // per timing sample
    std::uint64_t seed = 0;
};

enum class ScalingVariable { nodes, words, masks, feature_dim };

std::string to_string(ScalingVariable v);
ScalingVariable scaling_variable_from_string(const std::string& s);

struct ScalingPoint {
    std::size_t value = 0;
    double seconds = 0.0;            // one forward + backward pass
    std::size_t egonet_membership = 0;
    std::size_t edges = 0;
};

struct ScalingSeries {
    ScalingVariable variable = ScalingVariable::nodes;
    std::vector<ScalingPoint> points;
    double slope = 0.0;  // least-squares slope of log(seconds) vs log(value)
};

/// Seconds for one LoFI layer forward + backward, best of `repeats` samples.
double time_layer_pass(const Graph& g, const EgonetIndex& egonets, const LofiLayer& layer, int repeats,
                       double min_seconds);

/// Times a ladder of values for one variable with the others held at `base`.
/// Throws ConfigError for ladders shorter than 3 points.
ScalingSeries run_scaling(ScalingVariable variable, const std::vector<std::size_t>& ladder, const ScalingBase& base);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

void to_json(nlohmann::json& j, const ScalingSeries& s);

}  // namespace lofi
