#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lofi/graph.hpp"
#include "lofi/lofi_layer.hpp"

namespace lofi {

enum class Pooling { sum, max };

std::string to_string(Pooling p);
Pooling pooling_from_string(const std::string& s);

struct ModelConfig {
    int layers = 3;
    int radius = 1;
    int masks = 16;
    int dict_size = 8;
    int hidden = 64;
    double dropout = 0.0;
    Pooling pooling = Pooling::sum;
    Task task;

    /// Throws ConfigError when any field is outside its domain.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// y = W x + b with W stored out x in.
struct Dense {
    Matrix weight;
    std::vector<double> bias;

    Dense() = default;
    Dense(std::size_t in, std::size_t out) : weight(out, in), bias(out, 0.0) {}
    std::size_t in() const noexcept { return weight.cols(); }
    std::size_t out() const noexcept { return weight.rows(); }
    bool operator==(const Dense&) const = default;
};

/// Gradient buffers mirroring every trainable tensor of a Model.
struct ModelGrad {
    std::vector<LayerGrad> layers;
    Dense hidden;
    Dense output;

    void zero();
    void scale(double factor);
    ModelGrad& operator+=(const ModelGrad& other);
};

/// L LoFI layers, node pooling, and a two-layer MLP head.
struct Model {
    ModelConfig config;
    std::size_t input_dim = 0;
    std::vector<LofiLayer> layers;
    Dense hidden;
    Dense output;
    ModelGrad grad;

    /// Randomly initialized model. `histogram_scale` multiplies the U[0,1]
    /// draws for the learned histograms; pass the expected egonet size.
    static Model create(const ModelConfig& config, std::size_t input_dim, std::uint64_t seed,
                        double histogram_scale);

    /// Zero-filled model with the right shapes.
    static Model shaped(const ModelConfig& config, std::size_t input_dim);

    ModelGrad make_grad() const;
    std::size_t output_width() const noexcept { return output.out(); }
    std::size_t parameter_count() const;

    /// Parameters equal; gradient buffers are ignored.
    bool same_parameters(const Model& other) const {
        return config == other.config && input_dim == other.input_dim && layers == other.layers &&
               hidden == other.hidden && output == other.output;
    }
};

/// A named parameter tensor paired with its gradient buffer.
struct ParamBlock {
    std::string name;
    std::vector<std::size_t> shape;
    std::span<double> values;
    std::span<double> grads;
};

/// All parameter tensors in a fixed order.
std::vector<ParamBlock> parameter_blocks(Model& model, ModelGrad& grad);
inline std::vector<ParamBlock> parameter_blocks(Model& model) { return parameter_blocks(model, model.grad); }

struct MaskRef {
    std::size_t layer = 0;
    std::size_t mask = 0;
    bool operator==(const MaskRef&) const = default;
};

struct ForwardOptions {
    bool training = false;
    std::uint64_t dropout_seed = 0;
    /// Masks whose kernel output is forced to zero.
    std::span<const MaskRef> ablated = {};
};

struct ModelTape {
    std::vector<LayerTape> layers;
    std::vector<Matrix> dropout_scale;            // per layer; empty when inactive
    std::vector<std::vector<char>> ablated;       // per layer, per mask
    Matrix final_features;                        // n x M, pooled input
    std::vector<std::size_t> argmax;              // max pooling winners
    std::vector<double> pooled;
    std::vector<double> hidden_pre;
    std::vector<double> hidden_act;
    std::vector<double> output;

    /// Signs of every non-smooth branch taken (kernel kinks, ReLU, max pool).
    std::vector<signed char> kink_signature() const;
};

struct ForwardResult {
    std::vector<double> output;
    ModelTape tape;
};

ForwardResult model_forward(const Graph& g, const EgonetIndex& egonets, const Model& model,
                            const ForwardOptions& options = {});

/// Adds the gradient of the loss into `accum` and returns the gradient with
/// respect to the graph's input features.
Matrix model_backward(const Model& model, const ModelTape& tape, std::span<const double> output_grad,
                      ModelGrad& accum);

ModelGrad model_backward(const Model& model, const ModelTape& tape, std::span<const double> output_grad);

struct LossValue {
    double value = 0.0;
    std::vector<double> grad;  // d loss / d output
};

/// Softmax cross-entropy (classification) or absolute error (regression).
LossValue evaluate_loss(std::span<const double> output, const Target& target, const Task& task);

inline double loss(std::span<const double> output, const Target& target, const Task& task) {
    return evaluate_loss(output, target, task).value;
}

/// Index of the largest logit (first on ties).
int predicted_class(std::span<const double> output);

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
nlohmann::json checkpoint_json(const Model& model);
Model model_from_checkpoint_json(const nlohmann::json& j);

}  // namespace lofi
