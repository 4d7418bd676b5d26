#include "lofi/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "lofi/random.hpp"

namespace lofi {

std::string to_string(Pooling p) { return p == Pooling::sum ? "sum" : "max"; }

Pooling pooling_from_string(const std::string& s) {
    if (s == "sum") return Pooling::sum;
    if (s == "max") return Pooling::max;
    throw ConfigError("unknown pooling '" + s + "' (expected sum or max)");
}

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + std::to_string(v));
    };
    positive(layers, "layers");
    positive(radius, "radius");
    positive(masks, "masks");
    positive(dict_size, "dict_size");
    positive(hidden, "hidden");
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ConfigError("dropout must lie in [0, 1), got " + std::to_string(dropout));
    }
    if (task.is_classification() && task.num_classes < 2) {
        throw ConfigError("classification needs at least 2 classes");
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"layers", c.layers},
                       {"radius", c.radius},
                       {"masks", c.masks},
                       {"dict_size", c.dict_size},
                       {"hidden", c.hidden},
                       {"dropout", c.dropout},
                       {"pooling", to_string(c.pooling)},
                       {"task", c.task.is_classification() ? "classification" : "regression"},
                       {"num_classes", c.task.num_classes}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.layers = j.value("layers", c.layers);
    c.radius = j.value("radius", c.radius);
    c.masks = j.value("masks", c.masks);
    c.dict_size = j.value("dict_size", c.dict_size);
    c.hidden = j.value("hidden", c.hidden);
    c.dropout = j.value("dropout", c.dropout);
    if (j.contains("pooling")) c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
    if (j.contains("task")) {
        const auto kind = j.at("task").get<std::string>();
        if (kind == "classification") {
            c.task.kind = TaskKind::classification;
        } else if (kind == "regression") {
            c.task.kind = TaskKind::regression;
        } else {
            throw ConfigError("unknown task '" + kind + "'");
        }
    }
    c.task.num_classes = j.value("num_classes", c.task.num_classes);
}

void ModelGrad::zero() {
    for (auto& l : layers) l.zero();
    hidden.weight.fill(0.0);
    std::fill(hidden.bias.begin(), hidden.bias.end(), 0.0);
    output.weight.fill(0.0);
    std::fill(output.bias.begin(), output.bias.end(), 0.0);
}

void ModelGrad::scale(double factor) {
    for (auto& l : layers) {
        for (auto& d : l.dictionaries)
            for (auto& x : d.values()) x *= factor;
        for (auto& h : l.histograms)
            for (auto& x : h) x *= factor;
        l.temperature *= factor;
    }
    for (Dense* d : {&hidden, &output}) {
        for (auto& x : d->weight.values()) x *= factor;
        for (auto& x : d->bias) x *= factor;
    }
}

ModelGrad& ModelGrad::operator+=(const ModelGrad& other) {
    if (other.layers.size() != layers.size()) throw ShapeError("model gradient layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l] += other.layers[l];
    hidden.weight += other.hidden.weight;
    output.weight += other.output.weight;
    for (std::size_t i = 0; i < hidden.bias.size(); ++i) hidden.bias[i] += other.hidden.bias[i];
    for (std::size_t i = 0; i < output.bias.size(); ++i) output.bias[i] += other.output.bias[i];
    return *this;
}

Model Model::shaped(const ModelConfig& config, std::size_t input_dim) {
    config.validate();
    if (input_dim == 0) throw ConfigError("input feature width must be >= 1");
    Model m;
    m.config = config;
    m.input_dim = input_dim;
    const auto masks = static_cast<std::size_t>(config.masks);
    const auto words = static_cast<std::size_t>(config.dict_size);
    for (int l = 0; l < config.layers; ++l) {
        m.layers.emplace_back(masks, words, l == 0 ? input_dim : masks);
    }
    m.hidden = Dense(masks, static_cast<std::size_t>(config.hidden));
    m.output = Dense(static_cast<std::size_t>(config.hidden), config.task.output_width());
    m.grad = m.make_grad();
    return m;
}

Model Model::create(const ModelConfig& config, std::size_t input_dim, std::uint64_t seed,
                    double histogram_scale) {
    Model m = shaped(config, input_dim);
    std::mt19937_64 rng(seed);
    for (auto& layer : m.layers) layer.initialize(rng, histogram_scale);
    for (Dense* d : {&m.hidden, &m.output}) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(d->in()));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        for (auto& x : d->weight.values()) x = uniform(rng);
        for (auto& x : d->bias) x = uniform(rng);
    }
    return m;
}

ModelGrad Model::make_grad() const {
    ModelGrad g;
    for (const auto& l : layers) g.layers.emplace_back(l);
    g.hidden = Dense(hidden.in(), hidden.out());
    g.output = Dense(output.in(), output.out());
    return g;
}

std::size_t Model::parameter_count() const {
    std::size_t total = hidden.weight.size() + hidden.bias.size() + output.weight.size() + output.bias.size();
    for (const auto& l : layers) {
        total += 1;
        for (const auto& m : l.masks) total += m.dictionary.size() + m.histogram.size();
    }
    return total;
}

std::vector<ParamBlock> parameter_blocks(Model& model, ModelGrad& grad) {
    if (grad.layers.size() != model.layers.size()) throw ShapeError("gradient buffers do not match model");
    std::vector<ParamBlock> out;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        auto& lg = grad.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        for (std::size_t j = 0; j < layer.masks.size(); ++j) {
            auto& m = layer.masks[j];
            const std::string mp = prefix + "mask" + std::to_string(j) + ".";
            out.push_back({mp + "dictionary", {m.dictionary.rows(), m.dictionary.cols()}, m.dictionary.values(),
                           lg.dictionaries[j].values()});
            out.push_back({mp + "histogram", {m.histogram.size()}, m.histogram, lg.histograms[j]});
        }
        out.push_back({prefix + "temperature", {1}, std::span<double>(&layer.temperature, 1),
                       std::span<double>(&lg.temperature, 1)});
    }
    out.push_back({"head.hidden.weight", {model.hidden.out(), model.hidden.in()}, model.hidden.weight.values(),
                   grad.hidden.weight.values()});
    out.push_back({"head.hidden.bias", {model.hidden.bias.size()}, model.hidden.bias, grad.hidden.bias});
    out.push_back({"head.output.weight", {model.output.out(), model.output.in()}, model.output.weight.values(),
                   grad.output.weight.values()});
    out.push_back({"head.output.bias", {model.output.bias.size()}, model.output.bias, grad.output.bias});
    return out;
}

std::vector<signed char> ModelTape::kink_signature() const {
    std::vector<signed char> sig;
    for (const auto& t : layers) {
        auto s = t.kink_signature();
        sig.insert(sig.end(), s.begin(), s.end());
    }
    for (double x : hidden_pre) sig.push_back(static_cast<signed char>(x > 0.0 ? 1 : (x < 0.0 ? -1 : 0)));
    for (auto a : argmax) sig.push_back(static_cast<signed char>(a % 127));
    return sig;
}

ForwardResult model_forward(const Graph& g, const EgonetIndex& egonets, const Model& model,
                            const ForwardOptions& options) {
    if (g.feature_dim() != model.input_dim) {
        throw ShapeError("graph feature width " + std::to_string(g.feature_dim()) + " differs from model input width " +
                         std::to_string(model.input_dim));
    }
    if (egonets.radius() != model.config.radius) {
        throw ShapeError("egonets built with radius " + std::to_string(egonets.radius()) + ", model uses " +
                         std::to_string(model.config.radius));
    }
    ForwardResult result;
    ModelTape& tape = result.tape;
    const std::size_t n = g.node_count();
    const double p = model.config.dropout;
    const bool dropout = options.training && p > 0.0;
    SplitMix64 rng(options.dropout_seed);

    Matrix x = g.features();
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto out = layer_forward(x, egonets, model.layers[l]);
        std::vector<char> ablated(model.layers[l].num_masks(), 0);
        for (const auto& ref : options.ablated) {
            if (ref.layer == l) {
                if (ref.mask >= ablated.size()) throw IndexError("ablated mask index out of range");
                ablated[ref.mask] = 1;
            }
        }
        for (std::size_t j = 0; j < ablated.size(); ++j) {
            if (!ablated[j]) continue;
            for (std::size_t v = 0; v < n; ++v) out.output(v, j) = 0.0;
        }
        Matrix scale;
        if (dropout) {
            scale = Matrix(n, out.output.cols());
            const double keep = 1.0 / (1.0 - p);
            for (auto& s : scale.values()) s = rng.uniform() < p ? 0.0 : keep;
            auto vals = out.output.values();
            auto sv = scale.values();
            for (std::size_t i = 0; i < vals.size(); ++i) vals[i] *= sv[i];
        }
        tape.layers.push_back(std::move(out.tape));
        tape.dropout_scale.push_back(std::move(scale));
        tape.ablated.push_back(std::move(ablated));
        x = std::move(out.output);
    }

    const std::size_t width = x.cols();
    tape.pooled.assign(width, 0.0);
    if (model.config.pooling == Pooling::sum) {
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t j = 0; j < width; ++j) tape.pooled[j] += x(v, j);
    } else {
        tape.argmax.assign(width, 0);
        for (std::size_t j = 0; j < width; ++j) {
            double best = x(0, j);
            for (std::size_t v = 1; v < n; ++v) {
                if (x(v, j) > best) {
                    best = x(v, j);
                    tape.argmax[j] = v;
                }
            }
            tape.pooled[j] = best;
        }
    }
    tape.final_features = std::move(x);

    const auto& h = model.hidden;
    tape.hidden_pre.assign(h.out(), 0.0);
    tape.hidden_act.assign(h.out(), 0.0);
    for (std::size_t o = 0; o < h.out(); ++o) {
        tape.hidden_pre[o] = h.bias[o] + dot(h.weight.row(o), tape.pooled);
        tape.hidden_act[o] = std::max(0.0, tape.hidden_pre[o]);
    }
    const auto& out = model.output;
    tape.output.assign(out.out(), 0.0);
    for (std::size_t o = 0; o < out.out(); ++o) {
        tape.output[o] = out.bias[o] + dot(out.weight.row(o), tape.hidden_act);
    }
    result.output = tape.output;
    return result;
}

Matrix model_backward(const Model& model, const ModelTape& tape, std::span<const double> output_grad,
                      ModelGrad& accum) {
    if (output_grad.size() != model.output.out()) throw ShapeError("output gradient width mismatch");
    if (tape.layers.size() != model.layers.size() || accum.layers.size() != model.layers.size()) {
        throw ShapeError("tape or gradient buffer layer count differs from model");
    }
    const auto& out = model.output;
    std::vector<double> g_act(out.in(), 0.0);
    for (std::size_t o = 0; o < out.out(); ++o) {
        const double g = output_grad[o];
        accum.output.bias[o] += g;
        auto gw = accum.output.weight.row(o);
        auto w = out.weight.row(o);
        for (std::size_t k = 0; k < out.in(); ++k) {
            gw[k] += g * tape.hidden_act[k];
            g_act[k] += g * w[k];
        }
    }
    const auto& h = model.hidden;
    std::vector<double> g_pooled(h.in(), 0.0);
    for (std::size_t o = 0; o < h.out(); ++o) {
        const double g = tape.hidden_pre[o] > 0.0 ? g_act[o] : 0.0;
        accum.hidden.bias[o] += g;
        auto gw = accum.hidden.weight.row(o);
        auto w = h.weight.row(o);
        for (std::size_t k = 0; k < h.in(); ++k) {
            gw[k] += g * tape.pooled[k];
            g_pooled[k] += g * w[k];
        }
    }

    const std::size_t n = tape.final_features.rows();
    Matrix upstream(n, g_pooled.size());
    if (model.config.pooling == Pooling::sum) {
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t j = 0; j < g_pooled.size(); ++j) upstream(v, j) = g_pooled[j];
    } else {
        for (std::size_t j = 0; j < g_pooled.size(); ++j) upstream(tape.argmax[j], j) = g_pooled[j];
    }

    for (std::size_t l = model.layers.size(); l-- > 0;) {
        const auto& scale = tape.dropout_scale[l];
        if (!scale.empty()) {
            auto u = upstream.values();
            auto s = scale.values();
            for (std::size_t i = 0; i < u.size(); ++i) u[i] *= s[i];
        }
        const auto& ablated = tape.ablated[l];
        for (std::size_t j = 0; j < ablated.size(); ++j) {
            if (!ablated[j]) continue;
            for (std::size_t v = 0; v < n; ++v) upstream(v, j) = 0.0;
        }
        upstream = layer_backward(tape.layers[l], upstream, accum.layers[l]);
    }
    return upstream;
}

ModelGrad model_backward(const Model& model, const ModelTape& tape, std::span<const double> output_grad) {
    ModelGrad g = model.make_grad();
    model_backward(model, tape, output_grad, g);
    return g;
}

LossValue evaluate_loss(std::span<const double> output, const Target& target, const Task& task) {
    LossValue lv;
    lv.grad.assign(output.size(), 0.0);
    if (task.is_classification()) {
        if (output.size() != static_cast<std::size_t>(task.num_classes)) {
            throw ShapeError("expected " + std::to_string(task.num_classes) + " logits, got " +
                             std::to_string(output.size()));
        }
        const int* label = std::get_if<int>(&target);
        if (!label || *label < 0 || *label >= task.num_classes) {
            throw IndexError("class target outside [0, " + std::to_string(task.num_classes) + ")");
        }
        const double top = *std::max_element(output.begin(), output.end());
        double total = 0.0;
        for (double o : output) total += std::exp(o - top);
        const double log_z = top + std::log(total);
        lv.value = log_z - output[static_cast<std::size_t>(*label)];
        for (std::size_t k = 0; k < output.size(); ++k) lv.grad[k] = std::exp(output[k] - log_z);
        lv.grad[static_cast<std::size_t>(*label)] -= 1.0;
    } else {
        if (output.size() != 1) throw ShapeError("regression output must be a scalar");
        const double* y = std::get_if<double>(&target);
        if (!y) throw IndexError("regression target missing");
        const double r = output[0] - *y;
        lv.value = std::abs(r);
        lv.grad[0] = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    }
    return lv;
}

int predicted_class(std::span<const double> output) {
    return static_cast<int>(std::distance(output.begin(), std::max_element(output.begin(), output.end())));
}

nlohmann::json checkpoint_json(const Model& model) {
    // parameter_blocks needs mutable spans; values are only read here.
    Model& m = const_cast<Model&>(model);
    nlohmann::json params = nlohmann::json::array();
    for (const auto& b : parameter_blocks(m, m.grad)) {
        params.push_back({{"name", b.name},
                          {"shape", b.shape},
                          {"values", std::vector<double>(b.values.begin(), b.values.end())}});
    }
    return {{"format", "lofi-checkpoint"},
            {"format_version", kCheckpointVersion},
            {"config", model.config},
            {"input_dim", model.input_dim},
            {"parameters", std::move(params)}};
}

Model model_from_checkpoint_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string{}) != "lofi-checkpoint") throw CheckpointError("not a LoFI checkpoint");
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointVersion) {
            throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
        }
        const auto config = j.at("config").get<ModelConfig>();
        const auto input_dim = j.at("input_dim").get<std::size_t>();
        Model model = Model::shaped(config, input_dim);
        auto blocks = parameter_blocks(model, model.grad);
        const auto& params = j.at("parameters");
        if (params.size() != blocks.size()) {
            throw CheckpointError("checkpoint holds " + std::to_string(params.size()) + " tensors, config implies " +
                                  std::to_string(blocks.size()));
        }
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& p = params[i];
            const auto name = p.at("name").get<std::string>();
            const auto shape = p.at("shape").get<std::vector<std::size_t>>();
            if (name != blocks[i].name || shape != blocks[i].shape) {
                throw CheckpointError("tensor '" + name + "' does not match expected '" + blocks[i].name +
                                      "' with declared input width " + std::to_string(input_dim));
            }
            const auto values = p.at("values").get<std::vector<double>>();
            if (values.size() != blocks[i].values.size()) {
                throw CheckpointError("tensor '" + name + "' has " + std::to_string(values.size()) + " values");
            }
            std::copy(values.begin(), values.end(), blocks[i].values.begin());
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("invalid checkpoint config: ") + e.what());
    }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << checkpoint_json(model).dump() << '\n';
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    return model_from_checkpoint_json(j);
}

}  // namespace lofi
