#include "lofi/interpret.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "lofi/optim.hpp"

namespace lofi {

namespace {

Matrix unit_dictionary(const Matrix& dict) {
    Matrix out(dict.rows(), dict.cols());
    for (std::size_t i = 0; i < dict.rows(); ++i) normalize_into(dict.row(i), out.row(i));
    return out;
}

}  // namespace

std::vector<MaskReport> mask_importance(const Model& model, const Dataset& ds, const std::vector<EgonetIndex>& egonets,
                                        std::span<const std::size_t> validation, std::size_t layer) {
    if (layer >= model.layers.size()) {
        throw IndexError("layer " + std::to_string(layer) + " out of range (model has " +
                         std::to_string(model.layers.size()) + " layers)");
    }
    if (validation.empty()) throw ConfigError("mask importance needs a nonempty validation set");
    const double baseline = evaluate(model, ds, egonets, validation).loss;
    std::vector<MaskReport> reports;
    const auto& lofi_layer = model.layers[layer];
    for (std::size_t j = 0; j < lofi_layer.num_masks(); ++j) {
        const MaskRef ablate{layer, j};
        MaskReport r;
        r.layer = layer;
        r.mask = j;
        r.baseline_loss = baseline;
        r.ablated_loss = evaluate(model, ds, egonets, validation, std::span(&ablate, 1)).loss;
        r.delta = r.ablated_loss - r.baseline_loss;
        r.dictionary = unit_dictionary(lofi_layer.masks[j].dictionary);
        r.histogram = lofi_layer.masks[j].histogram;
        reports.push_back(std::move(r));
    }
    return reports;
}

std::vector<std::size_t> rank_by_importance(const std::vector<MaskReport>& reports) {
    std::vector<std::size_t> order(reports.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return reports[a].delta > reports[b].delta; });
    std::vector<std::size_t> out;
    for (auto i : order) out.push_back(reports[i].mask);
    return out;
}

void to_json(nlohmann::json& j, const MaskReport& r) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < r.dictionary.rows(); ++i) {
        auto row = r.dictionary.row(i);
        rows.emplace_back(row.begin(), row.end());
    }
    j = nlohmann::json{{"layer", r.layer},
                       {"mask", r.mask},
                       {"baseline_loss", r.baseline_loss},
                       {"ablated_loss", r.ablated_loss},
                       {"delta", r.delta},
                       {"dictionary", rows},
                       {"histogram", r.histogram}};
}

nlohmann::json importance_summary(const std::vector<MaskReport>& reports) {
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& r : reports) {
        masks.push_back({{"layer", r.layer},
                         {"mask", r.mask},
                         {"baseline", r.baseline_loss},
                         {"ablated", r.ablated_loss},
                         {"delta", r.delta}});
    }
    return {{"importance_measure", "validation_loss_delta"},
            {"ranking", rank_by_importance(reports)},
            {"masks", std::move(masks)}};
}

std::vector<std::filesystem::path> export_masks(const Model& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create export directory " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    char buf[40];
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        for (std::size_t j = 0; j < layer.num_masks(); ++j) {
            const auto& mask = layer.masks[j];
            const auto unit = unit_dictionary(mask.dictionary);
            auto path = dir / ("layer" + std::to_string(l) + "_mask" + std::to_string(j) + ".csv");
            std::ofstream out(path);
            if (!out) throw IoError("cannot write " + path.string());
            out << "# layer=" << l << ",mask=" << j << ",W=" << mask.words() << ",d=" << mask.dim()
                << ",temperature=";
            std::snprintf(buf, sizeof buf, "%.17g", layer.temperature);
            out << buf << '\n';
            out << "word,histogram";
            for (std::size_t k = 0; k < mask.dim(); ++k) out << ",dim" << k;
            out << '\n';
            for (std::size_t i = 0; i < mask.words(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g", mask.histogram[i]);
                out << i << ',' << buf;
                for (double x : unit.row(i)) {
                    std::snprintf(buf, sizeof buf, "%.17g", x);
                    out << ',' << buf;
                }
                out << '\n';
            }
            if (!out) throw IoError("failed writing " + path.string());
            written.push_back(path);
        }
    }
    return written;
}

}  // namespace lofi
