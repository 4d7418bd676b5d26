#include "lofi/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace lofi {

Graph::Graph(std::size_t node_count, std::vector<Edge> edges, Matrix features, Target target)
    : node_count_(node_count), features_(std::move(features)), target_(target) {
    if (node_count_ == 0) throw ShapeError("graph must have at least one node");
    if (features_.rows() != node_count_) {
        throw ShapeError("feature matrix has " + std::to_string(features_.rows()) +
                         " rows for " + std::to_string(node_count_) + " nodes");
    }
    for (auto& [u, v] : edges) {
        if (u >= node_count_ || v >= node_count_) {
            throw IntegrityError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                 ") references a node outside [0," +
                                 std::to_string(node_count_) + ")");
        }
        if (u > v) std::swap(u, v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);

    std::vector<std::size_t> deg(node_count_, 0);
    for (const auto& [u, v] : edges_) {
        ++deg[u];
        if (u != v) ++deg[v];
    }
    offsets_.assign(node_count_ + 1, 0);
    for (std::size_t i = 0; i < node_count_; ++i) offsets_[i + 1] = offsets_[i] + deg[i];
    adjacency_.resize(offsets_.back());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (const auto& [u, v] : edges_) {
        adjacency_[cursor[u]++] = v;
        if (u != v) adjacency_[cursor[v]++] = u;
    }
    for (std::size_t i = 0; i < node_count_; ++i) {
        std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
                  adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
    }
}

Graph Graph::relabeled(std::span<const NodeId> perm) const {
    if (perm.size() != node_count_) throw ShapeError("permutation length differs from node count");
    std::vector<Edge> edges;
    edges.reserve(edges_.size());
    for (const auto& [u, v] : edges_) edges.emplace_back(perm[u], perm[v]);
    Matrix features(node_count_, feature_dim());
    for (std::size_t i = 0; i < node_count_; ++i) {
        auto src = features_.row(i);
        std::copy(src.begin(), src.end(), features.row(perm[i]).begin());
    }
    return Graph(node_count_, std::move(edges), std::move(features), target_);
}

EgonetIndex extract_egonets(const Graph& g, int radius) {
    if (radius < 1) throw ConfigError("egonet radius must be >= 1, got " + std::to_string(radius));
    const std::size_t n = g.node_count();
    std::vector<std::size_t> offsets{0};
    offsets.reserve(n + 1);
    std::vector<NodeId> members;
    std::vector<int> dist(n, -1);
    std::vector<NodeId> frontier;
    std::vector<NodeId> ball;

    for (NodeId v = 0; v < n; ++v) {
        ball.clear();
        ball.push_back(v);
        dist[v] = 0;
        std::size_t head = 0;
        while (head < ball.size()) {
            NodeId u = ball[head++];
            if (dist[u] == radius) continue;
            for (NodeId w : g.neighbours(u)) {
                if (dist[w] < 0) {
                    dist[w] = dist[u] + 1;
                    ball.push_back(w);
                }
            }
        }
        for (NodeId u : ball) dist[u] = -1;
        std::sort(ball.begin(), ball.end());
        members.insert(members.end(), ball.begin(), ball.end());
        offsets.push_back(members.size());
    }
    return EgonetIndex(radius, std::move(offsets), std::move(members));
}

double Dataset::mean_node_count() const {
    if (graphs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& g : graphs) total += static_cast<double>(g.node_count());
    return total / static_cast<double>(graphs.size());
}

void validate(const Dataset& ds) {
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
        const auto& g = ds.graphs[i];
        if (g.feature_dim() != ds.feature_dim) {
            throw ShapeError("graph " + std::to_string(i) + " has feature width " +
                             std::to_string(g.feature_dim()) + ", dataset declares " +
                             std::to_string(ds.feature_dim));
        }
        if (ds.task.is_classification()) {
            const int* label = std::get_if<int>(&g.target());
            if (!label || *label < 0 || *label >= ds.task.num_classes) {
                throw IntegrityError("graph " + std::to_string(i) + " has a class target outside [0," +
                                     std::to_string(ds.task.num_classes) + ")");
            }
        } else if (!std::holds_alternative<double>(g.target())) {
            throw IntegrityError("graph " + std::to_string(i) + " lacks a regression target");
        }
    }
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

struct LineReader {
    std::filesystem::path path;
    std::ifstream in;
    std::size_t line_no = 0;

    explicit LineReader(std::filesystem::path p) : path(std::move(p)), in(path) {
        if (!in) throw FormatError("cannot open required file " + path.string());
    }

    // Next non-blank line, trimmed; false at EOF.
    bool next(std::string& line) {
        while (std::getline(in, line)) {
            ++line_no;
            auto t = trim(line);
            if (t.empty()) continue;
            line = std::string(t);
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(path.filename().string() + ":" + std::to_string(line_no) + ": " + what);
    }
};

long long parse_int(LineReader& r, std::string_view token) {
    token = trim(token);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        r.fail("expected an integer, got '" + std::string(token) + "'");
    }
    return value;
}

double parse_real(LineReader& r, std::string_view token) {
    token = trim(token);
    std::string buf(token);
    char* end = nullptr;
    double value = std::strtod(buf.c_str(), &end);
    if (buf.empty() || end != buf.c_str() + buf.size() || !std::isfinite(value)) {
        r.fail("expected a finite real, got '" + buf + "'");
    }
    return value;
}

std::vector<long long> read_int_column(const std::filesystem::path& path) {
    LineReader r(path);
    std::vector<long long> out;
    std::string line;
    while (r.next(line)) out.push_back(parse_int(r, line));
    return out;
}

std::filesystem::path file_for(const std::filesystem::path& root, const std::string& name,
                               const char* suffix) {
    return root / (name + suffix);
}

}  // namespace

Dataset load_tudataset(const std::filesystem::path& root, const std::string& name) {
    if (!std::filesystem::is_directory(root)) {
        throw FormatError("dataset directory not found: " + root.string());
    }
    const auto a_path = file_for(root, name, "_A.txt");
    const auto indicator_path = file_for(root, name, "_graph_indicator.txt");
    const auto labels_path = file_for(root, name, "_graph_labels.txt");
    const auto attributes_path = file_for(root, name, "_graph_attributes.txt");
    const auto node_labels_path = file_for(root, name, "_node_labels.txt");

    for (const auto& p : {a_path, indicator_path}) {
        if (!std::filesystem::exists(p)) throw FormatError("missing required file " + p.string());
    }
    const bool classification = std::filesystem::exists(labels_path);
    if (!classification && !std::filesystem::exists(attributes_path)) {
        throw FormatError("missing required file " + labels_path.string() + " (or " +
                          attributes_path.filename().string() + " for regression)");
    }

    // Node -> graph assignment. Graph ids are 1-indexed; local node order
    // follows file order within each graph.
    const auto indicator = read_int_column(indicator_path);
    if (indicator.empty()) throw IntegrityError(indicator_path.string() + " lists no nodes");
    long long max_graph = 0;
    for (std::size_t i = 0; i < indicator.size(); ++i) {
        if (indicator[i] < 1) {
            throw IntegrityError(indicator_path.filename().string() + ":" + std::to_string(i + 1) +
                                 ": graph id must be >= 1");
        }
        max_graph = std::max(max_graph, indicator[i]);
    }
    const auto num_graphs = static_cast<std::size_t>(max_graph);
    std::vector<std::size_t> graph_sizes(num_graphs, 0);
    std::vector<NodeId> local_index(indicator.size());
    for (std::size_t i = 0; i < indicator.size(); ++i) {
        auto gid = static_cast<std::size_t>(indicator[i] - 1);
        local_index[i] = static_cast<NodeId>(graph_sizes[gid]++);
    }
    for (std::size_t gi = 0; gi < num_graphs; ++gi) {
        if (graph_sizes[gi] == 0) {
            throw IntegrityError("graph id " + std::to_string(gi + 1) + " has no nodes in " +
                                 indicator_path.filename().string());
        }
    }

    // Edges.
    std::vector<std::vector<Edge>> edges(num_graphs);
    {
        LineReader r(a_path);
        std::string line;
        while (r.next(line)) {
            auto comma = line.find(',');
            if (comma == std::string::npos) r.fail("expected 'u, v'");
            long long u = parse_int(r, std::string_view(line).substr(0, comma));
            long long v = parse_int(r, std::string_view(line).substr(comma + 1));
            const auto n = static_cast<long long>(indicator.size());
            if (u < 1 || v < 1 || u > n || v > n) {
                throw IntegrityError(a_path.filename().string() + ":" + std::to_string(r.line_no) +
                                     ": node id outside [1," + std::to_string(n) + "]");
            }
            auto gu = indicator[static_cast<std::size_t>(u - 1)];
            auto gv = indicator[static_cast<std::size_t>(v - 1)];
            if (gu != gv) {
                throw IntegrityError(a_path.filename().string() + ":" + std::to_string(r.line_no) +
                                     ": edge joins nodes of different graphs");
            }
            edges[static_cast<std::size_t>(gu - 1)].emplace_back(
                local_index[static_cast<std::size_t>(u - 1)],
                local_index[static_cast<std::size_t>(v - 1)]);
        }
    }

    // Node features: one-hot of node labels, or the constant [1].
    Dataset ds;
    ds.name = name;
    std::vector<long long> node_labels;
    std::map<long long, std::size_t> node_label_index;
    if (std::filesystem::exists(node_labels_path)) {
        node_labels = read_int_column(node_labels_path);
        if (node_labels.size() != indicator.size()) {
            throw IntegrityError(node_labels_path.filename().string() + " has " +
                                 std::to_string(node_labels.size()) + " lines, " +
                                 indicator_path.filename().string() + " has " +
                                 std::to_string(indicator.size()));
        }
        for (auto l : node_labels) node_label_index.emplace(l, 0);
        std::size_t k = 0;
        for (auto& [label, idx] : node_label_index) idx = k++;
        ds.has_node_labels = true;
        ds.feature_dim = node_label_index.size();
    } else {
        ds.feature_dim = 1;
    }

    std::vector<Matrix> features;
    features.reserve(num_graphs);
    for (std::size_t gi = 0; gi < num_graphs; ++gi) {
        features.emplace_back(graph_sizes[gi], ds.feature_dim, ds.has_node_labels ? 0.0 : 1.0);
    }
    if (ds.has_node_labels) {
        for (std::size_t i = 0; i < indicator.size(); ++i) {
            auto gid = static_cast<std::size_t>(indicator[i] - 1);
            features[gid](local_index[i], node_label_index.at(node_labels[i])) = 1.0;
        }
    }

    // Targets.
    std::vector<Target> targets;
    targets.reserve(num_graphs);
    if (classification) {
        const auto raw = read_int_column(labels_path);
        if (raw.size() != num_graphs) {
            throw IntegrityError(labels_path.filename().string() + " has " + std::to_string(raw.size()) +
                                 " labels for " + std::to_string(num_graphs) + " graphs");
        }
        std::map<long long, int> remap;
        for (auto l : raw) remap.emplace(l, 0);
        int k = 0;
        for (auto& [label, idx] : remap) idx = k++;
        for (auto l : raw) targets.emplace_back(remap.at(l));
        ds.task = Task{TaskKind::classification, static_cast<int>(remap.size())};
    } else {
        LineReader r(attributes_path);
        std::string line;
        while (r.next(line)) targets.emplace_back(parse_real(r, line));
        if (targets.size() != num_graphs) {
            throw IntegrityError(attributes_path.filename().string() + " has " +
                                 std::to_string(targets.size()) + " values for " +
                                 std::to_string(num_graphs) + " graphs");
        }
        ds.task = Task{TaskKind::regression, 0};
    }

    ds.graphs.reserve(num_graphs);
    for (std::size_t gi = 0; gi < num_graphs; ++gi) {
        ds.graphs.emplace_back(graph_sizes[gi], std::move(edges[gi]), std::move(features[gi]),
                               targets[gi]);
    }
    validate(ds);
    return ds;
}

void write_tudataset(const Dataset& ds, const std::filesystem::path& root) {
    std::filesystem::create_directories(root);
    auto open = [&](const char* suffix) {
        auto p = file_for(root, ds.name, suffix);
        std::ofstream out(p);
        if (!out) throw IoError("cannot write " + p.string());
        return out;
    };
    auto a = open("_A.txt");
    auto indicator = open("_graph_indicator.txt");
    std::size_t base = 0;
    for (std::size_t gi = 0; gi < ds.graphs.size(); ++gi) {
        const auto& g = ds.graphs[gi];
        for (std::size_t i = 0; i < g.node_count(); ++i) indicator << gi + 1 << '\n';
        // Both directions, as the published files do.
        for (const auto& [u, v] : g.edges()) {
            a << base + u + 1 << ", " << base + v + 1 << '\n';
            if (u != v) a << base + v + 1 << ", " << base + u + 1 << '\n';
        }
        base += g.node_count();
    }
    if (ds.has_node_labels) {
        auto labels = open("_node_labels.txt");
        for (const auto& g : ds.graphs) {
            for (std::size_t i = 0; i < g.node_count(); ++i) {
                auto row = g.features().row(i);
                labels << std::distance(row.begin(), std::max_element(row.begin(), row.end())) << '\n';
            }
        }
    }
    if (ds.task.is_classification()) {
        auto labels = open("_graph_labels.txt");
        for (const auto& g : ds.graphs) labels << g.class_label() << '\n';
    } else {
        auto attrs = open("_graph_attributes.txt");
        char buf[32];
        for (const auto& g : ds.graphs) {
            std::snprintf(buf, sizeof buf, "%.17g", g.regression_value());
            attrs << buf << '\n';
        }
    }
}

const std::vector<EgonetIndex>& EgonetCache::at_radius(int radius) {
    std::lock_guard lock(mutex_);
    auto it = by_radius_.find(radius);
    if (it != by_radius_.end()) return it->second;
    std::vector<EgonetIndex> all;
    all.reserve(dataset_->graphs.size());
    for (const auto& g : dataset_->graphs) all.push_back(extract_egonets(g, radius));
    return by_radius_.emplace(radius, std::move(all)).first->second;
}

double EgonetCache::mean_egonet_size(int radius, std::span<const std::size_t> graph_indices) {
    const auto& all = at_radius(radius);
    double members = 0.0;
    double nodes = 0.0;
    auto add = [&](std::size_t i) {
        members += static_cast<double>(all[i].total_membership());
        nodes += static_cast<double>(all[i].node_count());
    };
    if (graph_indices.empty()) {
        for (std::size_t i = 0; i < all.size(); ++i) add(i);
    } else {
        for (auto i : graph_indices) add(i);
    }
    return nodes > 0 ? members / nodes : 1.0;
}

}  // namespace lofi
