#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lofi/matrix.hpp"

namespace lofi {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Graph-level target: a class index for classification or a real value for
/// regression.
using Target = std::variant<int, double>;

/// Immutable undirected graph with a node feature matrix and a graph target.
///
/// Edges are stored once per unordered pair with `first <= second`, sorted.
/// A compressed adjacency list is built at construction time.
class Graph {
public:
    Graph(std::size_t node_count, std::vector<Edge> edges, Matrix features, Target target);

    std::size_t node_count() const noexcept { return node_count_; }
    std::size_t feature_dim() const noexcept { return features_.cols(); }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const Matrix& features() const noexcept { return features_; }
    const Target& target() const noexcept { return target_; }

    /// Neighbours of v (excluding v itself unless a self-loop was given), sorted.
    std::span<const NodeId> neighbours(NodeId v) const noexcept {
        return {adjacency_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
    }
    std::size_t degree(NodeId v) const noexcept { return offsets_[v + 1] - offsets_[v]; }

    int class_label() const { return std::get<int>(target_); }
    double regression_value() const { return std::get<double>(target_); }

    /// Copy of this graph with node i renamed to perm[i].
    Graph relabeled(std::span<const NodeId> perm) const;

    bool operator==(const Graph& other) const {
        return node_count_ == other.node_count_ && edges_ == other.edges_ &&
               features_ == other.features_ && target_ == other.target_;
    }

private:
    std::size_t node_count_;
    std::vector<Edge> edges_;
    Matrix features_;
    Target target_;
    std::vector<std::size_t> offsets_;
    std::vector<NodeId> adjacency_;
};

/// Radius-r neighbourhoods (egonets) of every node in CSR layout. Each member
/// list is sorted and contains its centre.
class EgonetIndex {
public:
    EgonetIndex() = default;
    EgonetIndex(int radius, std::vector<std::size_t> offsets, std::vector<NodeId> members)
        : radius_(radius), offsets_(std::move(offsets)), members_(std::move(members)) {}

    int radius() const noexcept { return radius_; }
    std::size_t node_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::span<const NodeId> members(NodeId v) const noexcept {
        return {members_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
    }
    /// Sum of egonet sizes over all nodes.
    std::size_t total_membership() const noexcept { return members_.size(); }

private:
    int radius_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<NodeId> members_;
};

/// BFS ball of radius r (>= 1) around every node.
EgonetIndex extract_egonets(const Graph& g, int radius);

enum class TaskKind { classification, regression };

struct Task {
    TaskKind kind = TaskKind::classification;
    int num_classes = 0;  // 0 for regression

    bool is_classification() const noexcept { return kind == TaskKind::classification; }
    std::size_t output_width() const noexcept {
        return is_classification() ? static_cast<std::size_t>(num_classes) : 1;
    }
    bool operator==(const Task&) const = default;
};

struct Dataset {
    std::string name;
    Task task;
    std::size_t feature_dim = 0;
    bool has_node_labels = false;
    std::vector<Graph> graphs;

    std::size_t size() const noexcept { return graphs.size(); }
    double mean_node_count() const;
    bool operator==(const Dataset&) const = default;
};

/// Checks the cross-graph invariants (shared feature width, target ranges).
void validate(const Dataset& ds);

/// Reads `<root>/<name>_*.txt` in the TUDataset flat-file layout.
Dataset load_tudataset(const std::filesystem::path& root, const std::string& name);

/// Writes `ds` to `<root>/<ds.name>_*.txt`. Node labels are written as the
/// one-hot column index, class labels as the remapped index.
void write_tudataset(const Dataset& ds, const std::filesystem::path& root);

/// Egonet indices for a whole dataset, computed lazily once per radius.
class EgonetCache {
public:
    explicit EgonetCache(const Dataset& ds) : dataset_(&ds) {}

    const std::vector<EgonetIndex>& at_radius(int radius);

    /// Mean egonet size over the given graphs (all graphs when empty).
    double mean_egonet_size(int radius, std::span<const std::size_t> graph_indices = {});

private:
    const Dataset* dataset_;
    std::mutex mutex_;
    std::map<int, std::vector<EgonetIndex>> by_radius_;
};

}  // namespace lofi
