#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lofi/graph.hpp"
#include "lofi/interpret.hpp"
#include "lofi/model.hpp"
#include "lofi/optim.hpp"
#include "lofi/random.hpp"
#include "lofi/scaling.hpp"

namespace lofi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Thrown for invalid flag combinations; mapped to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flags that override the config file. Unset optionals leave the file (or
// built-in default) value in place.
struct ModelFlags {
    std::optional<int> layers, radius, masks, dict_size, hidden;
    std::optional<double> dropout;
    std::optional<std::string> pooling;
};

struct TrainFlags {
    std::optional<int> epochs, batch_size, patience;
    std::optional<double> lr;
};

struct Common {
    std::string dataset;
    std::optional<std::string> data_root;
    std::string config_file;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    ModelFlags model;
    TrainFlags train;
};

void add_dataset_options(CLI::App* app, Common& c, bool required = true) {
    auto* opt = app->add_option("--dataset", c.dataset, "Dataset name (folder <data-root>/<name>)");
    if (required) opt->required();
    app->add_option("--data-root", c.data_root, "Directory containing dataset folders (default: $LOFI_DATA_DIR or ./data)");
}

void add_run_options(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_file, "JSON config file {\"model\":{...},\"train\":{...}}");
    app->add_option("--out", c.out_dir, "Output directory");
    app->add_option("--seed", c.seed, "Run seed");
    app->add_option("--workers", c.workers, "Concurrent folds/configurations");
}

void add_model_options(CLI::App* app, ModelFlags& m) {
    app->add_option("--layers", m.layers, "Number of LoFI layers");
    app->add_option("--radius", m.radius, "Egonet radius");
    app->add_option("--masks", m.masks, "Masks per layer");
    app->add_option("--dict-size", m.dict_size, "Words per dictionary");
    app->add_option("--hidden", m.hidden, "MLP hidden width");
    app->add_option("--dropout", m.dropout, "Dropout rate on LoFI outputs");
    app->add_option("--pooling", m.pooling, "Node pooling: sum or max");
}

void add_train_options(CLI::App* app, TrainFlags& t) {
    app->add_option("--epochs", t.epochs, "Maximum training epochs");
    app->add_option("--lr", t.lr, "Adam learning rate");
    app->add_option("--batch-size", t.batch_size, "Mini-batch size");
    app->add_option("--patience", t.patience, "Early-stopping patience in epochs");
}

struct Resolved {
    ModelConfig model;
    TrainConfig train;
    int workers = 1;
    fs::path data_root;
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

Resolved resolve(const Common& c) {
    Resolved r;
    json file;
    if (!c.config_file.empty()) {
        file = read_json_file(c.config_file);
        try {
            if (file.contains("model")) r.model = file.at("model").get<ModelConfig>();
            if (file.contains("train")) r.train = file.at("train").get<TrainConfig>();
        } catch (const json::exception& e) {
            throw ConfigError("bad config file " + c.config_file + ": " + e.what());
        }
        if (file.contains("workers")) r.workers = file.at("workers").get<int>();
    }
    const auto& m = c.model;
    if (m.layers) r.model.layers = *m.layers;
    if (m.radius) r.model.radius = *m.radius;
    if (m.masks) r.model.masks = *m.masks;
    if (m.dict_size) r.model.dict_size = *m.dict_size;
    if (m.hidden) r.model.hidden = *m.hidden;
    if (m.dropout) r.model.dropout = *m.dropout;
    if (m.pooling) r.model.pooling = pooling_from_string(*m.pooling);
    const auto& t = c.train;
    if (t.epochs) r.train.epochs = *t.epochs;
    if (t.lr) r.train.learning_rate = *t.lr;
    if (t.batch_size) r.train.batch_size = *t.batch_size;
    if (t.patience) r.train.patience = *t.patience;
    if (c.seed) r.train.seed = *c.seed;
    if (c.workers) r.workers = *c.workers;
    if (r.workers < 1) throw UsageError("--workers must be >= 1");

    if (c.data_root) {
        r.data_root = *c.data_root;
    } else if (file.contains("data_root")) {
        r.data_root = file.at("data_root").get<std::string>();
    } else if (const char* env = std::getenv("LOFI_DATA_DIR")) {
        r.data_root = env;
    } else {
        r.data_root = "data";
    }
    r.train.validate();
    return r;
}

Dataset load_dataset(const Resolved& r, const std::string& name) {
    return load_tudataset(r.data_root / name, name);
}

fs::path prepare_out(const std::string& out_dir, const std::string& fallback) {
    fs::path p = out_dir.empty() ? fs::path("runs") / fallback : fs::path(out_dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create output directory " + p.string() + ": " + ec.message());
    return p;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setw(2) << j << '\n';
}

json manifest(const std::string& command, const std::vector<std::string>& args, const Resolved& r,
              const std::string& dataset, const ModelConfig& model) {
    return {{"tool", "lofi"},
            {"version", kVersion},
            {"command", command},
            {"argv", args},
            {"dataset", dataset},
            {"data_root", r.data_root.string()},
            {"seed", r.train.seed},
            {"workers", r.workers},
            {"model_config", model},
            {"train_config", r.train}};
}

std::string fmt_metric(const std::string& metric, double v) {
    std::ostringstream s;
    if (metric == "accuracy") {
        s << std::fixed << std::setprecision(2) << 100.0 * v;
    } else {
        s << std::fixed << std::setprecision(4) << v;
    }
    return s.str();
}

// -------------------------------------------------------------------------

int cmd_train(const Common& c, std::optional<std::string> split_file, int fold, const std::vector<std::string>& args,
              std::ostream& out) {
    Resolved r = resolve(c);
    const Dataset ds = load_dataset(r, c.dataset);
    ModelConfig mc = r.model;
    mc.task = ds.task;
    mc.validate();

    Split split;
    if (split_file) {
        split = load_split(*split_file);
        for (const auto* part : {&split.train, &split.val, &split.test}) {
            for (auto i : *part) {
                if (i >= ds.size()) throw IndexError("split index " + std::to_string(i) + " outside dataset");
            }
        }
    } else {
        if (fold < 0 || fold >= 10) throw UsageError("--fold must lie in [0, 10)");
        split = make_fold_plan(ds, r.train.seed).splits[static_cast<std::size_t>(fold)];
    }

    const fs::path dir = prepare_out(c.out_dir, "train-" + c.dataset);
    json man = manifest("train", args, r, ds.name, mc);
    man["split"] = split_file ? json(*split_file) : json{{"fold", fold}, {"folds", 10}};
    write_json(dir / "manifest.json", man);
    write_json(dir / "split.json", split);

    EgonetCache cache(ds);
    TrainConfig tc = r.train;
    tc.workers = r.workers;
    Model model = init_model(mc, ds, cache, split.train, derive_seed(tc.seed, "init"));
    auto result = train(std::move(model), ds, cache.at_radius(mc.radius), split, tc);
    save_checkpoint(result.best_model, dir / "checkpoint.json");
    {
        std::ofstream csv(dir / "metrics.csv");
        write_epoch_csv(csv, 0, result.record);
        std::ofstream timing(dir / "timing.csv");
        write_timing_csv(timing, 0, result.record);
    }
    const auto metric = metric_name(ds.task);
    json summary{{"metric", metric},
                 {"best_epoch", result.record.best_epoch},
                 {"epochs_run", result.record.epochs.size()},
                 {"best_val_loss", result.record.best_val_loss},
                 {"best_val_metric", result.record.best_val_metric}};
    if (result.record.test_metric) {
        summary["test_metric"] = *result.record.test_metric;
        summary["test_loss"] = *result.record.test_loss;
    }
    write_json(dir / "summary.json", summary);
    out << "trained " << ds.name << ": best epoch " << result.record.best_epoch << ", val " << metric << ' '
        << fmt_metric(metric, result.record.best_val_metric);
    if (result.record.test_metric) out << ", test " << metric << ' ' << fmt_metric(metric, *result.record.test_metric);
    out << "\nwrote " << dir.string() << '\n';
    return 0;
}

int cmd_cv(const Common& c, int folds, int max_folds, const std::vector<std::string>& args, std::ostream& out) {
    Resolved r = resolve(c);
    const Dataset ds = load_dataset(r, c.dataset);
    ModelConfig mc = r.model;
    mc.task = ds.task;
    mc.validate();
    const fs::path dir = prepare_out(c.out_dir, "cv-" + c.dataset);
    json man = manifest("cv", args, r, ds.name, mc);
    man["folds"] = folds;
    man["max_folds"] = max_folds;
    write_json(dir / "manifest.json", man);

    EgonetCache cache(ds);
    CvOptions opts{folds, max_folds, r.workers};
    const auto result = cross_validate(ds, cache, mc, r.train, opts);
    {
        std::ofstream csv(dir / "folds.csv");
        write_epoch_csv(csv, result);
        std::ofstream timing(dir / "timing.csv");
        bool header = true;
        for (const auto& f : result.folds) {
            write_timing_csv(timing, f.fold, f.record, header);
            header = false;
        }
    }
    json summary = result;
    summary["dataset"] = ds.name;
    write_json(dir / "summary.json", summary);
    out << ds.name << " " << result.metric << ": " << fmt_metric(result.metric, result.mean) << " ± "
        << fmt_metric(result.metric, result.std_error) << " over " << result.folds.size() << " folds\n";
    out << "wrote " << dir.string() << '\n';
    return 0;
}

std::vector<int> or_single(const std::vector<int>& v, int fallback) { return v.empty() ? std::vector<int>{fallback} : v; }

int cmd_sweep(const Common& c, const std::string& grid_file, bool use_full_grid, GridSpec flags, int folds, int max_folds,
              int top_k, const std::vector<std::string>& args, std::ostream& out) {
    Resolved r = resolve(c);
    GridSpec grid;
    if (use_full_grid) {
        grid = full_grid();
    } else if (!grid_file.empty()) {
        try {
            grid = read_json_file(grid_file).get<GridSpec>();
        } catch (const json::exception& e) {
            throw UsageError("bad grid file " + grid_file + ": " + e.what());
        }
    } else {
        grid.layers = or_single(flags.layers, r.model.layers);
        grid.dropout = flags.dropout.empty() ? std::vector<double>{r.model.dropout} : flags.dropout;
        grid.radius = or_single(flags.radius, r.model.radius);
        grid.masks = or_single(flags.masks, r.model.masks);
        grid.dict_size = or_single(flags.dict_size, r.model.dict_size);
    }
    if (grid.size() == 0) throw UsageError("grid is empty");

    const Dataset ds = load_dataset(r, c.dataset);
    ModelConfig base = r.model;
    base.task = ds.task;
    const fs::path dir = prepare_out(c.out_dir, "sweep-" + c.dataset);
    json man = manifest("sweep", args, r, ds.name, base);
    man["grid"] = grid;
    man["folds"] = folds;
    man["max_folds"] = max_folds;
    man["top_k"] = top_k;
    write_json(dir / "manifest.json", man);

    EgonetCache cache(ds);
    const auto result = grid_search(ds, cache, grid, base, r.train, CvOptions{folds, max_folds, r.workers});
    json j = result;
    j["dataset"] = ds.name;
    write_json(dir / "sweep.json", j);
    const auto matrix = ablation_matrix(result, top_k);
    {
        std::ofstream csv(dir / "ablation.csv");
        write_ablation_csv(csv, matrix);
    }
    out << "evaluated " << result.ranked.size() << " configurations on " << ds.name << '\n';
    std::size_t shown = 0;
    for (const auto& e : result.ranked) {
        if (shown++ == 5) break;
        out << "  #" << shown << " layers=" << e.config.layers << " radius=" << e.config.radius
            << " masks=" << e.config.masks << " W=" << e.config.dict_size << " dropout=" << e.config.dropout;
        if (e.result) {
            out << "  val " << fmt_metric(result.metric, e.result->mean_val_metric) << "  test "
                << fmt_metric(result.metric, e.result->mean) << '\n';
        } else {
            out << "  failed: " << e.error << '\n';
        }
    }
    out << "wrote " << dir.string() << '\n';
    return 0;
}

int cmd_inspect(const Common& c, const std::string& checkpoint, int layer, std::optional<std::string> split_file, int fold,
                const std::vector<std::string>& args, std::ostream& out) {
    Resolved r = resolve(c);
    const Dataset ds = load_dataset(r, c.dataset);
    Model model = load_checkpoint(checkpoint);
    if (model.input_dim != ds.feature_dim) {
        throw CheckpointError("checkpoint expects feature width " + std::to_string(model.input_dim) + ", " + ds.name +
                              " has " + std::to_string(ds.feature_dim));
    }
    if (!(model.config.task == ds.task)) throw CheckpointError("checkpoint task differs from dataset task");
    if (layer < 0) throw UsageError("--layer must be >= 0");

    std::vector<std::size_t> validation;
    if (split_file) {
        validation = load_split(*split_file).val;
    } else {
        if (fold < 0 || fold >= 10) throw UsageError("--fold must lie in [0, 10)");
        validation = make_fold_plan(ds, r.train.seed).splits[static_cast<std::size_t>(fold)].val;
    }
    EgonetCache cache(ds);
    const auto reports =
        mask_importance(model, ds, cache.at_radius(model.config.radius), validation, static_cast<std::size_t>(layer));

    const fs::path dir = prepare_out(c.out_dir, "inspect-" + c.dataset);
    json man = manifest("inspect", args, r, ds.name, model.config);
    man["checkpoint"] = checkpoint;
    man["layer"] = layer;
    man["validation"] = split_file ? json(*split_file) : json{{"fold", fold}};
    write_json(dir / "manifest.json", man);
    json summary = importance_summary(reports);
    summary["dataset"] = ds.name;
    write_json(dir / "importance.json", summary);
    const auto files = export_masks(model, dir / "masks");

    out << "layer " << layer << " mask importance (validation loss delta):\n";
    for (auto j : rank_by_importance(reports)) {
        out << "  mask " << j << ": " << std::showpos << std::setprecision(6) << reports[j].delta << std::noshowpos
            << '\n';
    }
    out << "exported " << files.size() << " mask files to " << (dir / "masks").string() << '\n';
    return 0;
}

std::vector<std::size_t> to_sizes(const std::vector<int>& v, const char* flag) {
    std::vector<std::size_t> out;
    for (int x : v) {
        if (x < 1) throw UsageError(std::string(flag) + " values must be >= 1");
        out.push_back(static_cast<std::size_t>(x));
    }
    return out;
}

int cmd_bench(const std::vector<int>& nodes, const std::vector<int>& words, const std::vector<int>& masks_ladder,
              ScalingBase base, const std::string& out_dir, const std::vector<std::string>& args, std::ostream& out) {
    std::vector<std::pair<ScalingVariable, std::vector<std::size_t>>> runs;
    if (!nodes.empty()) runs.emplace_back(ScalingVariable::nodes, to_sizes(nodes, "--nodes"));
    if (!words.empty()) runs.emplace_back(ScalingVariable::words, to_sizes(words, "--words"));
    if (!masks_ladder.empty()) runs.emplace_back(ScalingVariable::masks, to_sizes(masks_ladder, "--masks-ladder"));
    if (runs.empty()) throw UsageError("bench needs at least one ladder (--nodes, --words or --masks-ladder)");
    for (const auto& [var, ladder] : runs) {
        if (ladder.size() < 3) throw UsageError("ladder for " + to_string(var) + " has fewer than 3 points");
    }

    const fs::path dir = prepare_out(out_dir, "bench");
    json report{{"tool", "lofi"},
                {"version", kVersion},
                {"command", "bench"},
                {"argv", args},
                {"base",
                 {{"nodes", base.nodes},
                  {"mean_degree", base.mean_degree},
                  {"feature_dim", base.feature_dim},
                  {"masks", base.masks},
                  {"words", base.words},
                  {"radius", base.radius},
                  {"repeats", base.repeats},
                  {"seed", base.seed}}},
                {"series", json::array()}};
    write_json(dir / "manifest.json", report);
    for (const auto& [var, ladder] : runs) {
        const auto series = run_scaling(var, ladder, base);
        report["series"].push_back(series);
        out << "slope wrt " << to_string(var) << ": " << std::fixed << std::setprecision(3) << series.slope << '\n';
        for (const auto& p : series.points) {
            out << "  " << to_string(var) << '=' << p.value << "  " << std::scientific << std::setprecision(3)
                << p.seconds << " s  egonet members=" << p.egonet_membership << std::defaultfloat << '\n';
        }
    }
    write_json(dir / "bench.json", report);
    out << "wrote " << dir.string() << '\n';
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"LoFI graph neural network: training, cross-validation, sweeps, inspection, benchmarks", "lofi"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Common common;

    auto* train_cmd = app.add_subcommand("train", "Train one model on a declared split");
    add_dataset_options(train_cmd, common);
    add_run_options(train_cmd, common);
    add_model_options(train_cmd, common.model);
    add_train_options(train_cmd, common.train);
    std::optional<std::string> split_file;
    int fold = 0;
    train_cmd->add_option("--split", split_file, "JSON split file {train,val,test}");
    train_cmd->add_option("--fold", fold, "Fold of the 10-fold plan to train on when no --split is given");

    auto* cv_cmd = app.add_subcommand("cv", "Stratified k-fold cross-validation");
    add_dataset_options(cv_cmd, common);
    add_run_options(cv_cmd, common);
    add_model_options(cv_cmd, common.model);
    add_train_options(cv_cmd, common.train);
    int folds = 10;
    int max_folds = 0;
    cv_cmd->add_option("--folds", folds, "Number of folds");
    cv_cmd->add_option("--max-folds", max_folds, "Only run the first N folds (0 = all)");

    auto* sweep_cmd = app.add_subcommand("sweep", "Grid search over model hyper-parameters");
    add_dataset_options(sweep_cmd, common);
    add_run_options(sweep_cmd, common);
    add_model_options(sweep_cmd, common.model);
    add_train_options(sweep_cmd, common.train);
    std::string grid_file;
    bool use_full_grid = false;
    GridSpec grid_flags;
    int top_k = 3;
    sweep_cmd->add_option("--grid", grid_file, "JSON grid {layers,dropout,radius,masks,dict_size}");
    sweep_cmd->add_flag("--full-grid", use_full_grid, "Use the full 672-configuration grid");
    sweep_cmd->add_option("--grid-layers", grid_flags.layers)->delimiter(',');
    sweep_cmd->add_option("--grid-dropout", grid_flags.dropout)->delimiter(',');
    sweep_cmd->add_option("--grid-radius", grid_flags.radius)->delimiter(',');
    sweep_cmd->add_option("--grid-masks", grid_flags.masks)->delimiter(',');
    sweep_cmd->add_option("--grid-dict-size", grid_flags.dict_size)->delimiter(',');
    sweep_cmd->add_option("--folds", folds, "Number of folds");
    sweep_cmd->add_option("--max-folds", max_folds, "Only run the first N folds per configuration (0 = all)");
    sweep_cmd->add_option("--top-k", top_k, "Configurations averaged per ablation cell");

    auto* inspect_cmd = app.add_subcommand("inspect", "Mask importance and dictionary/histogram export");
    add_dataset_options(inspect_cmd, common);
    add_run_options(inspect_cmd, common);
    std::string checkpoint;
    int layer = 0;
    inspect_cmd->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
    inspect_cmd->add_option("--layer", layer, "0-based LoFI layer to analyse");
    inspect_cmd->add_option("--split", split_file, "JSON split file; its val part is used");
    inspect_cmd->add_option("--fold", fold, "Fold whose validation set is used when no --split is given");

    auto* bench_cmd = app.add_subcommand("bench", "Runtime scaling of one LoFI layer (forward + backward)");
    std::vector<int> nodes_ladder, words_ladder, masks_ladder;
    ScalingBase base;
    std::string bench_out;
    bench_cmd->add_option("--nodes", nodes_ladder, "Node-count ladder, e.g. 2000,4000,8000")->delimiter(',');
    bench_cmd->add_option("--words", words_ladder, "Dictionary-size ladder")->delimiter(',');
    bench_cmd->add_option("--masks-ladder", masks_ladder, "Mask-count ladder")->delimiter(',');
    bench_cmd->add_option("--base-nodes", base.nodes, "Node count when another variable is swept");
    bench_cmd->add_option("--degree", base.mean_degree, "Mean degree of synthetic graphs");
    bench_cmd->add_option("--dim", base.feature_dim, "Feature width d");
    bench_cmd->add_option("--masks", base.masks, "Masks M");
    bench_cmd->add_option("--dict-size", base.words, "Words W");
    bench_cmd->add_option("--radius", base.radius, "Egonet radius");
    bench_cmd->add_option("--repeats", base.repeats, "Timing samples per point (best is kept)");
    bench_cmd->add_option("--seed", base.seed, "Generator seed");
    bench_cmd->add_option("--out", bench_out, "Output directory");

    std::vector<const char*> argv{"lofi"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(common, split_file, fold, args, out);
        if (*cv_cmd) return cmd_cv(common, folds, max_folds, args, out);
        if (*sweep_cmd) {
            return cmd_sweep(common, grid_file, use_full_grid, grid_flags, folds, max_folds, top_k, args, out);
        }
        if (*inspect_cmd) {
            return cmd_inspect(common, checkpoint, layer, split_file, fold, args, out);
        }
        if (*bench_cmd) return cmd_bench(nodes_ladder, words_ladder, masks_ladder, base, bench_out, args, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace lofi::cli
