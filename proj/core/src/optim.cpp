#include "lofi/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "lofi/parallel.hpp"
#include "lofi/random.hpp"

namespace lofi {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
void shuffle_with(std::vector<T>& v, std::mt19937_64& rng) {
    // Fisher-Yates with explicit draws; std::shuffle's draw pattern is
    // implementation-defined.
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (patience < 1) throw ConfigError("early-stopping patience must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},       {"learning_rate", c.learning_rate},
                       {"batch_size", c.batch_size}, {"beta1", c.beta1},
                       {"beta2", c.beta2},         {"epsilon", c.epsilon},
                       {"patience", c.patience},   {"seed", c.seed},
                       {"workers", c.workers}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
}

void adam_step(std::span<ParamBlock> blocks, AdamState& state, const TrainConfig& config) {
    for (const auto& b : blocks) {
        if (b.values.size() != b.grads.size()) throw ShapeError("parameter/gradient size mismatch in " + b.name);
        for (double g : b.grads) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter block " + b.name);
        }
    }
    if (state.first_moment.empty()) {
        for (const auto& b : blocks) {
            state.first_moment.emplace_back(b.values.size(), 0.0);
            state.second_moment.emplace_back(b.values.size(), 0.0);
        }
    }
    if (state.first_moment.size() != blocks.size()) throw ShapeError("Adam state does not match parameter blocks");
    ++state.step;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        auto& m = state.first_moment[bi];
        auto& v = state.second_moment[bi];
        auto& b = blocks[bi];
        if (m.size() != b.values.size()) throw ShapeError("Adam state shape mismatch in " + b.name);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = b.grads[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            b.values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

void to_json(nlohmann::json& j, const Split& s) {
    j = nlohmann::json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

void from_json(const nlohmann::json& j, Split& s) {
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.val = j.at("val").get<std::vector<std::size_t>>();
    s.test = j.value("test", std::vector<std::size_t>{});
}

Split load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read split file " + path.string());
    try {
        return nlohmann::json::parse(in).get<Split>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed split file " + path.string() + ": " + e.what());
    }
}

FoldPlan make_fold_plan(const Dataset& ds, std::uint64_t seed, int folds, double val_fraction) {
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    if (ds.size() < static_cast<std::size_t>(folds)) throw ConfigError("fewer graphs than folds");
    const auto k = static_cast<std::size_t>(folds);
    std::mt19937_64 rng(derive_seed(seed, "folds"));

    // Groups of indices to stratify over: one per class, or a single group.
    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::size_t> group_of(ds.size(), 0);
    if (ds.task.is_classification()) {
        groups.resize(static_cast<std::size_t>(ds.task.num_classes));
        for (std::size_t i = 0; i < ds.size(); ++i) {
            group_of[i] = static_cast<std::size_t>(ds.graphs[i].class_label());
            groups[group_of[i]].push_back(i);
        }
        for (std::size_t c = 0; c < groups.size(); ++c) {
            if (groups[c].size() < k) {
                throw StratificationError("class " + std::to_string(c) + " has " + std::to_string(groups[c].size()) +
                                          " graphs, fewer than the " + std::to_string(k) + " folds");
            }
        }
    } else {
        groups.resize(1);
        groups[0].resize(ds.size());
        std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
    }

    FoldPlan plan;
    plan.test_folds.resize(k);
    std::size_t counter = 0;
    for (auto& g : groups) {
        shuffle_with(g, rng);
        for (auto idx : g) plan.test_folds[counter++ % k].push_back(idx);
    }
    for (auto& f : plan.test_folds) std::sort(f.begin(), f.end());

    for (std::size_t f = 0; f < k; ++f) {
        std::vector<char> in_test(ds.size(), 0);
        for (auto i : plan.test_folds[f]) in_test[i] = 1;
        std::vector<std::vector<std::size_t>> pool(groups.size());
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (!in_test[i]) pool[group_of[i]].push_back(i);
        std::mt19937_64 inner(derive_seed(seed, "inner-split", f));
        Split s;
        s.test = plan.test_folds[f];
        for (auto& g : pool) {
            shuffle_with(g, inner);
            auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(g.size()) * val_fraction));
            if (g.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, g.size() - 1);
            s.val.insert(s.val.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_val));
            s.train.insert(s.train.end(), g.begin() + static_cast<std::ptrdiff_t>(n_val), g.end());
        }
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.val.begin(), s.val.end());
        plan.splits.push_back(std::move(s));
    }
    return plan;
}

std::string metric_name(const Task& task) { return task.is_classification() ? "accuracy" : "mae"; }
bool higher_is_better(const Task& task) { return task.is_classification(); }

EvalResult evaluate(const Model& model, const Dataset& ds, const std::vector<EgonetIndex>& egonets,
                    std::span<const std::size_t> indices, std::span<const MaskRef> ablated) {
    EvalResult r;
    if (indices.empty()) return r;
    ForwardOptions opts;
    opts.ablated = ablated;
    double loss_sum = 0.0;
    double metric_sum = 0.0;
    for (auto i : indices) {
        const auto& g = ds.graphs[i];
        auto fwd = model_forward(g, egonets[i], model, opts);
        loss_sum += loss(fwd.output, g.target(), ds.task);
        if (ds.task.is_classification()) {
            metric_sum += predicted_class(fwd.output) == g.class_label() ? 1.0 : 0.0;
        } else {
            metric_sum += std::abs(fwd.output[0] - g.regression_value());
        }
        r.outputs.push_back(std::move(fwd.output));
    }
    const auto n = static_cast<double>(indices.size());
    r.loss = loss_sum / n;
    r.metric = metric_sum / n;
    return r;
}

Model init_model(const ModelConfig& config, const Dataset& ds, EgonetCache& cache, std::span<const std::size_t> train,
                 std::uint64_t seed) {
    ModelConfig c = config;
    c.task = ds.task;
    const double scale = cache.mean_egonet_size(c.radius, train);
    return Model::create(c, ds.feature_dim, seed, scale);
}

TrainResult train(Model model, const Dataset& ds, const std::vector<EgonetIndex>& egonets, const Split& split,
                  const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    if (split.train.empty()) throw ConfigError("training split is empty");
    if (split.val.empty()) throw ConfigError("validation split is empty");
    if (egonets.size() != ds.size()) throw ShapeError("egonet cache does not cover the dataset");

    const auto workers = static_cast<std::size_t>(config.workers);
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, "shuffle"));
    const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");
    AdamState adam;
    auto blocks = parameter_blocks(model);
    std::vector<ModelGrad> buffers(workers, model.make_grad());

    TrainResult result{{}, model};
    RunRecord& rec = result.record;
    rec.best_val_loss = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order = split.train;
    std::vector<double> losses(order.size());
    std::vector<double> hits(order.size());

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        shuffle_with(order, shuffle_rng);
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(config.batch_size));
            const std::size_t count = b1 - b0;
            const std::size_t chunks = std::min(workers, count);
            for (std::size_t w = 0; w < chunks; ++w) buffers[w].zero();
            parallel_for(chunks, chunks, [&](std::size_t chunk, std::size_t) {
                const std::size_t lo = b0 + chunk * count / chunks;
                const std::size_t hi = b0 + (chunk + 1) * count / chunks;
                for (std::size_t pos = lo; pos < hi; ++pos) {
                    const std::size_t gi = order[pos];
                    const auto& g = ds.graphs[gi];
                    ForwardOptions opts;
                    opts.training = true;
                    opts.dropout_seed =
                        derive_seed(dropout_seed, "graph", static_cast<std::uint64_t>(epoch) * ds.size() + gi);
                    auto fwd = model_forward(g, egonets[gi], model, opts);
                    auto lv = evaluate_loss(fwd.output, g.target(), ds.task);
                    losses[pos] = lv.value;
                    hits[pos] = ds.task.is_classification()
                                    ? (predicted_class(fwd.output) == g.class_label() ? 1.0 : 0.0)
                                    : std::abs(fwd.output[0] - g.regression_value());
                    model_backward(model, fwd.tape, lv.grad, buffers[chunk]);
                    if (hooks.on_backward) hooks.on_backward(gi);
                }
            });
            model.grad.zero();
            for (std::size_t w = 0; w < chunks; ++w) model.grad += buffers[w];
            model.grad.scale(1.0 / static_cast<double>(count));
            adam_step(blocks, adam, config);
        }

        EpochStats stats;
        stats.epoch = epoch;
        const auto n = static_cast<double>(order.size());
        stats.train_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
        stats.train_metric = std::accumulate(hits.begin(), hits.end(), 0.0) / n;
        const auto val = evaluate(model, ds, egonets, split.val);
        stats.val_loss = val.loss;
        stats.val_metric = val.metric;
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rec.epochs.push_back(stats);
        if (hooks.on_epoch) hooks.on_epoch(stats);

        if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_loss)) {
            throw NumericError("loss became non-finite at epoch " + std::to_string(epoch));
        }
        if (stats.val_loss < rec.best_val_loss) {
            rec.best_val_loss = stats.val_loss;
            rec.best_val_metric = stats.val_metric;
            rec.best_epoch = epoch;
            result.best_model = model;
        } else if (epoch - rec.best_epoch >= config.patience) {
            rec.stopped_early = epoch < config.epochs;
            break;
        }
    }
    result.best_model.grad = result.best_model.make_grad();

    if (!split.test.empty()) {
        const auto test = evaluate(result.best_model, ds, egonets, split.test);
        rec.test_loss = test.loss;
        rec.test_metric = test.metric;
    }
    return result;
}

MeanStdErr mean_and_stderr(std::span<const double> values) {
    MeanStdErr r;
    if (values.empty()) return r;
    const auto k = static_cast<double>(values.size());
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) / k;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.std_error = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    }
    return r;
}

CvResult cross_validate(const Dataset& ds, EgonetCache& cache, const ModelConfig& model_config,
                        const TrainConfig& train_config, const CvOptions& options) {
    train_config.validate();
    ModelConfig mc = model_config;
    mc.task = ds.task;
    mc.validate();
    const auto plan = make_fold_plan(ds, train_config.seed, options.folds);
    std::size_t nfolds = plan.splits.size();
    if (options.max_folds > 0) nfolds = std::min(nfolds, static_cast<std::size_t>(options.max_folds));
    const auto& egonets = cache.at_radius(mc.radius);

    CvResult result;
    result.metric = metric_name(ds.task);
    result.folds.resize(nfolds);
    parallel_for(nfolds, static_cast<std::size_t>(std::max(1, options.workers)), [&](std::size_t f, std::size_t) {
        const auto& split = plan.splits[f];
        Model model = init_model(mc, ds, cache, split.train, derive_seed(train_config.seed, "init", f));
        TrainConfig tc = train_config;
        tc.seed = derive_seed(train_config.seed, "fold", f);
        auto run = train(std::move(model), ds, egonets, split, tc);
        FoldResult fr;
        fr.fold = static_cast<int>(f);
        fr.test_metric = run.record.test_metric.value_or(0.0);
        fr.test_loss = run.record.test_loss.value_or(0.0);
        fr.val_metric = run.record.best_val_metric;
        fr.val_loss = run.record.best_val_loss;
        fr.best_epoch = run.record.best_epoch;
        fr.record = std::move(run.record);
        result.folds[f] = std::move(fr);
    });

    std::vector<double> test, val;
    for (const auto& f : result.folds) {
        test.push_back(f.test_metric);
        val.push_back(f.val_metric);
    }
    const auto ms = mean_and_stderr(test);
    result.mean = ms.mean;
    result.std_error = ms.std_error;
    result.mean_val_metric = mean_and_stderr(val).mean;
    return result;
}

void to_json(nlohmann::json& j, const CvResult& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds) {
        folds.push_back({{"fold", f.fold},
                         {"test_metric", f.test_metric},
                         {"test_loss", f.test_loss},
                         {"val_metric", f.val_metric},
                         {"val_loss", f.val_loss},
                         {"best_epoch", f.best_epoch},
                         {"epochs_run", f.record.epochs.size()},
                         {"stopped_early", f.record.stopped_early}});
    }
    j = nlohmann::json{{"metric", r.metric},
                       {"mean", r.mean},
                       {"std_error", r.std_error},
                       {"mean_val_metric", r.mean_val_metric},
                       {"folds", std::move(folds)}};
}

void write_epoch_csv(std::ostream& out, int fold, const RunRecord& r, bool header) {
    if (header) out << "# schema: lofi-epochs/1\nfold,epoch,train_loss,train_metric,val_loss,val_metric\n";
    for (const auto& e : r.epochs) {
        out << fold << ',' << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.train_metric) << ','
            << fmt(e.val_loss) << ',' << fmt(e.val_metric) << '\n';
    }
}

void write_epoch_csv(std::ostream& out, const CvResult& r) {
    bool header = true;
    for (const auto& f : r.folds) {
        write_epoch_csv(out, f.fold, f.record, header);
        header = false;
    }
}

void write_timing_csv(std::ostream& out, int fold, const RunRecord& r, bool header) {
    if (header) out << "# schema: lofi-timing/1\nfold,epoch,seconds\n";
    for (const auto& e : r.epochs) out << fold << ',' << e.epoch << ',' << fmt(e.seconds) << '\n';
}

std::vector<ModelConfig> GridSpec::expand(const ModelConfig& base) const {
    std::vector<ModelConfig> out;
    out.reserve(size());
    for (int l : layers)
        for (double p : dropout)
            for (int r : radius)
                for (int m : masks)
                    for (int w : dict_size) {
                        ModelConfig c = base;
                        c.layers = l;
                        c.dropout = p;
                        c.radius = r;
                        c.masks = m;
                        c.dict_size = w;
                        out.push_back(c);
                    }
    return out;
}

GridSpec full_grid() {
    return GridSpec{{1, 3, 5, 7, 9, 11, 13}, {0.0, 0.1}, {1, 2, 3}, {4, 8, 16, 32}, {6, 8, 16, 32}};
}

void to_json(nlohmann::json& j, const GridSpec& g) {
    j = nlohmann::json{{"layers", g.layers},
                       {"dropout", g.dropout},
                       {"radius", g.radius},
                       {"masks", g.masks},
                       {"dict_size", g.dict_size}};
}

void from_json(const nlohmann::json& j, GridSpec& g) {
    g.layers = j.at("layers").get<std::vector<int>>();
    g.dropout = j.at("dropout").get<std::vector<double>>();
    g.radius = j.at("radius").get<std::vector<int>>();
    g.masks = j.at("masks").get<std::vector<int>>();
    g.dict_size = j.at("dict_size").get<std::vector<int>>();
}

namespace {

// True when metric a ranks strictly ahead of b.
bool better(double a, double b, bool higher) { return higher ? a > b : a < b; }

}  // namespace

GridResult grid_search(const Dataset& ds, EgonetCache& cache, const GridSpec& grid, const ModelConfig& base,
                       const TrainConfig& train_config, const CvOptions& options) {
    if (grid.size() == 0) throw ConfigError("grid is empty");
    const auto configs = grid.expand(base);
    for (const auto& c : configs) cache.at_radius(c.radius);

    GridResult result;
    result.metric = metric_name(ds.task);
    result.higher_is_better = higher_is_better(ds.task);
    std::vector<GridEntry> entries(configs.size());
    CvOptions inner = options;
    inner.workers = 1;
    parallel_for(configs.size(), static_cast<std::size_t>(std::max(1, options.workers)),
                 [&](std::size_t i, std::size_t) {
                     auto& e = entries[i];
                     e.index = i;
                     e.config = configs[i];
                     e.config.task = ds.task;
                     try {
                         e.result = cross_validate(ds, cache, e.config, train_config, inner);
                     } catch (const Error& err) {
                         e.error = err.what();
                     }
                 });

    const bool higher = result.higher_is_better;
    std::stable_sort(entries.begin(), entries.end(), [&](const GridEntry& a, const GridEntry& b) {
        if (a.result.has_value() != b.result.has_value()) return a.result.has_value();
        if (!a.result) return a.index < b.index;
        if (a.result->mean_val_metric != b.result->mean_val_metric)
            return better(a.result->mean_val_metric, b.result->mean_val_metric, higher);
        return a.index < b.index;
    });
    result.ranked = std::move(entries);
    return result;
}

void to_json(nlohmann::json& j, const GridResult& r) {
    nlohmann::json entries = nlohmann::json::array();
    std::size_t rank = 1;
    for (const auto& e : r.ranked) {
        nlohmann::json item{{"rank", rank++}, {"grid_index", e.index}, {"config", e.config}};
        if (e.result) {
            item["result"] = *e.result;
        } else {
            item["error"] = e.error;
        }
        entries.push_back(std::move(item));
    }
    j = nlohmann::json{{"metric", r.metric}, {"higher_is_better", r.higher_is_better}, {"ranked", std::move(entries)}};
}

AblationMatrix ablation_matrix(const GridResult& result, int top_k) {
    AblationMatrix m;
    std::map<std::pair<int, int>, std::vector<const GridEntry*>> cells;
    for (const auto& e : result.ranked) {
        m.radii.push_back(e.config.radius);
        m.layers.push_back(e.config.layers);
        if (e.result) cells[{e.config.radius, e.config.layers}].push_back(&e);
    }
    auto uniq = [](std::vector<int>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    uniq(m.radii);
    uniq(m.layers);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.values.assign(m.radii.size(), std::vector<double>(m.layers.size(), nan));
    for (std::size_t ri = 0; ri < m.radii.size(); ++ri) {
        for (std::size_t li = 0; li < m.layers.size(); ++li) {
            auto it = cells.find({m.radii[ri], m.layers[li]});
            if (it == cells.end()) continue;
            auto& members = it->second;
            std::size_t nfolds = members.front()->result->folds.size();
            for (auto* e : members) nfolds = std::min(nfolds, e->result->folds.size());
            std::vector<double> per_fold;
            for (std::size_t f = 0; f < nfolds; ++f) {
                auto sorted = members;
                std::stable_sort(sorted.begin(), sorted.end(), [&](const GridEntry* a, const GridEntry* b) {
                    const auto& fa = a->result->folds[f];
                    const auto& fb = b->result->folds[f];
                    if (fa.val_metric != fb.val_metric) return better(fa.val_metric, fb.val_metric, result.higher_is_better);
                    if (fa.val_loss != fb.val_loss) return fa.val_loss < fb.val_loss;
                    return a->index < b->index;
                });
                const std::size_t take = std::min<std::size_t>(sorted.size(), static_cast<std::size_t>(top_k));
                double sum = 0.0;
                for (std::size_t t = 0; t < take; ++t) sum += sorted[t]->result->folds[f].test_metric;
                per_fold.push_back(sum / static_cast<double>(take));
            }
            if (!per_fold.empty()) m.values[ri][li] = mean_and_stderr(per_fold).mean;
        }
    }
    return m;
}

void write_ablation_csv(std::ostream& out, const AblationMatrix& m) {
    out << "# schema: lofi-ablation/1\nradius";
    for (int l : m.layers) out << ",layers_" << l;
    out << '\n';
    for (std::size_t ri = 0; ri < m.radii.size(); ++ri) {
        out << m.radii[ri];
        for (double v : m.values[ri]) out << ',' << (std::isnan(v) ? std::string("nan") : fmt(v));
        out << '\n';
    }
}

}  // namespace lofi
