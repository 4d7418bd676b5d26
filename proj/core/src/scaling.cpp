#include "lofi/scaling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

namespace lofi {

Graph make_synthetic_graph(std::size_t nodes, double mean_degree, std::size_t feature_dim, std::uint64_t seed) {
    if (nodes < 2) throw ConfigError("synthetic graph needs at least 2 nodes");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, nodes - 1);
    std::uniform_int_distribution<std::size_t> label(0, feature_dim - 1);
    const auto target_edges = static_cast<std::size_t>(std::llround(mean_degree * static_cast<double>(nodes) / 2.0));
    std::vector<Edge> edges;
    edges.reserve(target_edges);
    while (edges.size() < target_edges) {
        auto u = static_cast<NodeId>(pick(rng));
        auto v = static_cast<NodeId>(pick(rng));
        if (u != v) edges.emplace_back(u, v);
    }
    Matrix features(nodes, feature_dim);
    for (std::size_t i = 0; i < nodes; ++i) features(i, label(rng)) = 1.0;
    return Graph(nodes, std::move(edges), std::move(features), Target{0});
}

std::string to_string(ScalingVariable v) {
    switch (v) {
        case ScalingVariable::nodes: return "n";
        case ScalingVariable::words: return "W";
        case ScalingVariable::masks: return "M";
        case ScalingVariable::feature_dim: return "d";
    }
    return "?";
}

ScalingVariable scaling_variable_from_string(const std::string& s) {
    if (s == "n" || s == "nodes") return ScalingVariable::nodes;
    if (s == "W" || s == "words") return ScalingVariable::words;
    if (s == "M" || s == "masks") return ScalingVariable::masks;
    if (s == "d" || s == "dim") return ScalingVariable::feature_dim;
    throw ConfigError("unknown scaling variable '" + s + "' (expected n, W, M or d)");
}

double time_layer_pass(const Graph& g, const EgonetIndex& egonets, const LofiLayer& layer, int repeats,
                       double min_seconds) {
    using clock = std::chrono::steady_clock;
    Matrix upstream(g.node_count(), layer.num_masks(), 1.0);
    LayerGrad grad(layer);
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, repeats); ++r) {
        int iterations = 0;
        const auto start = clock::now();
        double elapsed = 0.0;
        do {
            auto out = layer_forward(g.features(), egonets, layer);
            auto gx = layer_backward(out.tape, upstream, grad);
            ++iterations;
            elapsed = std::chrono::duration<double>(clock::now() - start).count();
        } while (elapsed < min_seconds);
        best = std::min(best, elapsed / iterations);
    }
    return best;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("slope fit needs at least 2 matching points");
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ScalingSeries run_scaling(ScalingVariable variable, const std::vector<std::size_t>& ladder, const ScalingBase& base) {
    if (ladder.size() < 3) throw ConfigError("scaling ladder needs at least 3 points");
    for (auto v : ladder)
        if (v == 0) throw ConfigError("scaling ladder values must be positive");
    ScalingSeries series;
    series.variable = variable;
    std::vector<double> xs, ys;
    for (auto value : ladder) {
        ScalingBase p = base;
        switch (variable) {
            case ScalingVariable::nodes: p.nodes = value; break;
            case ScalingVariable::words: p.words = value; break;
            case ScalingVariable::masks: p.masks = value; break;
            case ScalingVariable::feature_dim: p.feature_dim = value; break;
        }
        const Graph g = make_synthetic_graph(p.nodes, p.mean_degree, p.feature_dim, p.seed);
        const EgonetIndex ego = extract_egonets(g, p.radius);
        LofiLayer layer(p.masks, p.words, p.feature_dim);
        std::mt19937_64 rng(p.seed + 1);
        layer.initialize(rng, p.mean_degree + 1.0);
        ScalingPoint pt;
        pt.value = value;
        pt.seconds = time_layer_pass(g, ego, layer, p.repeats, p.min_seconds);
        pt.egonet_membership = ego.total_membership();
        pt.edges = g.edges().size();
        series.points.push_back(pt);
        xs.push_back(static_cast<double>(value));
        ys.push_back(pt.seconds);
    }
    series.slope = loglog_slope(xs, ys);
    return series;
}

void to_json(nlohmann::json& j, const ScalingSeries& s) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points) {
        pts.push_back({{"value", p.value},
                       {"seconds", p.seconds},
                       {"egonet_membership", p.egonet_membership},
                       {"edges", p.edges}});
    }
    j = nlohmann::json{{"variable", to_string(s.variable)}, {"slope", s.slope}, {"points", std::move(pts)}};
}

}  // namespace lofi
