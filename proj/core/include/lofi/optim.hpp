#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lofi/graph.hpp"
#include "lofi/model.hpp"

namespace lofi {

struct TrainConfig {
    int epochs = 2000;
    double learning_rate = 1e-3;
    int batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int patience = 250;
    std::uint64_t seed = 0;
    /// Threads evaluating graphs of one mini-batch. Results are identical for a
    /// fixed value; 1 gives the reference trajectory.
    int workers = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    long step = 0;
};

/// Bias-corrected Adam update of every block in place. Throws NumericError
/// naming the offending block, before touching any parameter, when a gradient
/// is not finite.
void adam_step(std::span<ParamBlock> blocks, AdamState& state, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Splits

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

void to_json(nlohmann::json& j, const Split& s);
void from_json(const nlohmann::json& j, Split& s);
Split load_split(const std::filesystem::path& path);

struct FoldPlan {
    std::vector<std::vector<std::size_t>> test_folds;
    std::vector<Split> splits;  // one per fold: train/val from the other folds
};

/// k folds (stratified by class for classification) and a 9:1 inner
/// train/validation split of each fold's training part. Deterministic in
/// (dataset, seed).
FoldPlan make_fold_plan(const Dataset& ds, std::uint64_t seed, int folds = 10, double val_fraction = 0.1);

// ---------------------------------------------------------------------------
// Evaluation and training

/// Accuracy for classification, MAE for regression.
std::string metric_name(const Task& task);
bool higher_is_better(const Task& task);

struct EvalResult {
    double loss = 0.0;
    double metric = 0.0;
    std::vector<std::vector<double>> outputs;
};

EvalResult evaluate(const Model& model, const Dataset& ds, const std::vector<EgonetIndex>& egonets,
                    std::span<const std::size_t> indices, std::span<const MaskRef> ablated = {});

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_metric = 0.0;
    double val_loss = 0.0;
    double val_metric = 0.0;
    double seconds = 0.0;
};

struct RunRecord {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    double best_val_metric = 0.0;
    bool stopped_early = false;
    std::optional<double> test_loss;
    std::optional<double> test_metric;
};

struct TrainResult {
    RunRecord record;
    Model best_model;
};

struct TrainHooks {
    /// Called with the dataset index of every graph whose loss is backpropagated.
    std::function<void(std::size_t)> on_backward;
    /// Called after each epoch.
    std::function<void(const EpochStats&)> on_epoch;
};

/// Mini-batch Adam training with early stopping on validation loss. The
/// returned model is the one with the lowest validation loss; when the split
/// has a test part it is evaluated with that model.
TrainResult train(Model model, const Dataset& ds, const std::vector<EgonetIndex>& egonets, const Split& split,
                  const TrainConfig& config, const TrainHooks& hooks = {});

/// Freshly initialized model for `ds` whose histogram scale is the mean
/// egonet size of the training graphs.
Model init_model(const ModelConfig& config, const Dataset& ds, EgonetCache& cache, std::span<const std::size_t> train,
                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldResult {
    int fold = 0;
    double test_metric = 0.0;
    double test_loss = 0.0;
    double val_metric = 0.0;
    double val_loss = 0.0;
    int best_epoch = 0;
    RunRecord record;
};

struct CvOptions {
    int folds = 10;
    /// Evaluate only the first `max_folds` folds (budget runs); 0 = all.
    int max_folds = 0;
    int workers = 1;
};

struct CvResult {
    std::string metric;
    std::vector<FoldResult> folds;
    double mean = 0.0;
    double std_error = 0.0;
    double mean_val_metric = 0.0;
};

struct MeanStdErr {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Mean and standard error of the mean (sample deviation / sqrt(k)).
MeanStdErr mean_and_stderr(std::span<const double> values);

CvResult cross_validate(const Dataset& ds, EgonetCache& cache, const ModelConfig& model_config,
                        const TrainConfig& train_config, const CvOptions& options = {});

void to_json(nlohmann::json& j, const CvResult& r);

/// CSV: one row per epoch per fold. Deterministic columns only.
void write_epoch_csv(std::ostream& out, const CvResult& r);
void write_epoch_csv(std::ostream& out, int fold, const RunRecord& r, bool header = true);
/// CSV of wall-clock seconds per epoch.
void write_timing_csv(std::ostream& out, int fold, const RunRecord& r, bool header = true);

// ---------------------------------------------------------------------------
// Grid search

struct GridSpec {
    std::vector<int> layers;
    std::vector<double> dropout;
    std::vector<int> radius;
    std::vector<int> masks;
    std::vector<int> dict_size;

    std::size_t size() const noexcept {
        return layers.size() * dropout.size() * radius.size() * masks.size() * dict_size.size();
    }
    /// Cartesian product over `base`, in lexicographic order of the fields above.
    std::vector<ModelConfig> expand(const ModelConfig& base) const;
};

/// Layers {1..13 odd}, dropout {0, 0.1}, radius {1,2,3}, masks {4,8,16,32},
/// dictionary size {6,8,16,32}.
GridSpec full_grid();

void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);

struct GridEntry {
    std::size_t index = 0;  // position in GridSpec::expand order
    ModelConfig config;
    std::optional<CvResult> result;
    std::string error;
};

struct GridResult {
    std::string metric;
    bool higher_is_better = true;
    std::vector<GridEntry> ranked;  // best first; failed configs last
};

GridResult grid_search(const Dataset& ds, EgonetCache& cache, const GridSpec& grid, const ModelConfig& base,
                       const TrainConfig& train_config, const CvOptions& options = {});

void to_json(nlohmann::json& j, const GridResult& r);

/// radius x layers table: for each cell and fold, average the test metric of
/// the `top_k` configurations of that cell with the best validation metric,
/// then average over folds. NaN marks cells without results.
struct AblationMatrix {
    std::vector<int> radii;
    std::vector<int> layers;
    std::vector<std::vector<double>> values;  // [radius][layers]
};

AblationMatrix ablation_matrix(const GridResult& result, int top_k = 3);
void write_ablation_csv(std::ostream& out, const AblationMatrix& m);

}  // namespace lofi
