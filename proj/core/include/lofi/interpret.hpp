#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lofi/graph.hpp"
#include "lofi/model.hpp"

namespace lofi {

/// Effect on validation loss of zeroing one mask's kernel output.
struct MaskReport {
    std::size_t layer = 0;
    std::size_t mask = 0;
    double baseline_loss = 0.0;
    double ablated_loss = 0.0;
    double delta = 0.0;  // ablated - baseline
    Matrix dictionary;   // unit-normalized rows, as used in the forward pass
    std::vector<double> histogram;
};

/// One report per mask of `layer`, in mask order. Throws IndexError for an
/// out-of-range layer and ConfigError for an empty validation set.
std::vector<MaskReport> mask_importance(const Model& model, const Dataset& ds, const std::vector<EgonetIndex>& egonets,
                                        std::span<const std::size_t> validation, std::size_t layer);

/// Mask indices sorted by decreasing delta (largest loss increase first).
std::vector<std::size_t> rank_by_importance(const std::vector<MaskReport>& reports);

void to_json(nlohmann::json& j, const MaskReport& r);
nlohmann::json importance_summary(const std::vector<MaskReport>& reports);

/// Writes `<dir>/layer<l>_mask<j>.csv` for every mask and returns the paths.
std::vector<std::filesystem::path> export_masks(const Model& model, const std::filesystem::path& dir);

}  // namespace lofi
