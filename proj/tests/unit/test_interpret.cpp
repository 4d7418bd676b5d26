#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "lofi/errors.hpp"
#include "lofi/interpret.hpp"
#include "lofi/optim.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace lofi;

namespace {

struct Trained {
    Dataset ds = test::separable_dataset(21, 40);
    EgonetCache cache{ds};
    Split split;
    Model model;

    Trained() {
        split = make_fold_plan(ds, 1, 5).splits[0];
        ModelConfig c;
        c.layers = 2;
        c.masks = 4;
        c.dict_size = 4;
        c.hidden = 8;
        TrainConfig t;
        t.epochs = 20;
        t.learning_rate = 0.01;
        t.batch_size = 8;
        model = train(init_model(c, ds, cache, split.train, 2), ds, cache.at_radius(1), split, t).best_model;
    }
};

Trained& trained() {
    static Trained t;
    return t;
}

}  // namespace

TEST(MaskImportance, BaselineIsUnmodifiedValidationLoss) {
    auto& t = trained();
    const auto& ego = t.cache.at_radius(1);
    const double val_loss = evaluate(t.model, t.ds, ego, t.split.val).loss;
    for (std::size_t layer = 0; layer < 2; ++layer) {
        const auto reports = mask_importance(t.model, t.ds, ego, t.split.val, layer);
        ASSERT_EQ(reports.size(), 4u);
        for (const auto& r : reports) {
            EXPECT_EQ(r.baseline_loss, val_loss);
            EXPECT_EQ(r.delta, r.ablated_loss - r.baseline_loss);
            EXPECT_EQ(r.layer, layer);
        }
    }
}

TEST(MaskImportance, AblatedLossMatchesDirectAblation) {
    auto& t = trained();
    const auto& ego = t.cache.at_radius(1);
    const auto reports = mask_importance(t.model, t.ds, ego, t.split.val, 1);
    for (const auto& r : reports) {
        const MaskRef ref{1, r.mask};
        EXPECT_EQ(r.ablated_loss, evaluate(t.model, t.ds, ego, t.split.val, std::span(&ref, 1)).loss);
        for (std::size_t i = 0; i < r.dictionary.rows(); ++i) {
            double norm = 0.0;
            for (double x : r.dictionary.row(i)) norm += x * x;
            EXPECT_NEAR(norm, 1.0, 1e-9);
        }
        EXPECT_EQ(r.histogram, t.model.layers[1].masks[r.mask].histogram);
    }
}

TEST(MaskImportance, AllFinalMasksAblatedGivesConstantOutputs) {
    auto& t = trained();
    std::vector<MaskRef> all;
    for (std::size_t j = 0; j < 4; ++j) all.push_back({1, j});
    const auto r = evaluate(t.model, t.ds, t.cache.at_radius(1), t.split.val, all);
    for (const auto& out : r.outputs) EXPECT_EQ(out, r.outputs.front());
}

TEST(MaskImportance, RankingAndErrors) {
    std::vector<MaskReport> reports(3);
    reports[0].mask = 0;
    reports[0].delta = 0.1;
    reports[1].mask = 1;
    reports[1].delta = 0.5;
    reports[2].mask = 2;
    reports[2].delta = -0.2;
    EXPECT_EQ(rank_by_importance(reports), (std::vector<std::size_t>{1, 0, 2}));
    const auto summary = importance_summary(reports);
    EXPECT_EQ(summary["importance_measure"], "validation_loss_delta");
    EXPECT_EQ(summary["ranking"], nlohmann::json({1, 0, 2}));

    auto& t = trained();
    EXPECT_THROW(mask_importance(t.model, t.ds, t.cache.at_radius(1), t.split.val, 2), IndexError);
    EXPECT_THROW(mask_importance(t.model, t.ds, t.cache.at_radius(1), {}, 0), ConfigError);
}

TEST(MaskExport, WritesOneCsvPerMask) {
    auto& t = trained();
    const auto dir = fs::temp_directory_path() / "lofi_test_masks";
    fs::remove_all(dir);
    const auto files = export_masks(t.model, dir);
    ASSERT_EQ(files.size(), 8u);
    EXPECT_EQ(files[5].filename(), "layer1_mask1.csv");
    std::ifstream in(files[0]);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# layer=0,mask=0,W=4,d=4,temperature=", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line, "word,histogram,dim0,dim1,dim2,dim3");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
        ASSERT_EQ(cells.size(), 6u);
        EXPECT_EQ(cells[1], t.model.layers[0].masks[0].histogram[rows]);
        double norm = 0.0;
        for (std::size_t k = 2; k < 6; ++k) norm += cells[k] * cells[k];
        EXPECT_NEAR(norm, 1.0, 1e-9);
        ++rows;
    }
    EXPECT_EQ(rows, 4u);
}
