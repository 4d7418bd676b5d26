#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "lofi/graph.hpp"
#include "lofi/matrix.hpp"

namespace lofi {

/// Guard added to vector norms before dividing, so zero rows stay finite.
inline constexpr double kNormEpsilon = 1e-12;

/// A learned (dictionary, histogram) pair. Dictionary rows are the words;
/// they are stored unconstrained and unit-normalized on every forward pass.
struct Mask {
    Matrix dictionary;               // W x d
    std::vector<double> histogram;   // W

    std::size_t words() const noexcept { return dictionary.rows(); }
    std::size_t dim() const noexcept { return dictionary.cols(); }
    bool operator==(const Mask&) const = default;
};

/// M masks sharing (W, d) plus one learnable softmax temperature.
struct LofiLayer {
    std::vector<Mask> masks;
    double temperature = 1.0;

    LofiLayer() = default;
    LofiLayer(std::size_t num_masks, std::size_t words, std::size_t dim);

    std::size_t num_masks() const noexcept { return masks.size(); }
    std::size_t words() const noexcept { return masks.empty() ? 0 : masks.front().words(); }
    std::size_t input_dim() const noexcept { return masks.empty() ? 0 : masks.front().dim(); }

    /// Dictionary entries ~ N(0, 1); histogram entries ~ U[0, 1] * histogram_scale.
    template <class Rng>
    void initialize(Rng& rng, double histogram_scale) {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        for (auto& m : masks) {
            for (auto& x : m.dictionary.values()) x = normal(rng);
            for (auto& f : m.histogram) f = uniform(rng) * histogram_scale;
        }
        temperature = 1.0;
    }

    /// Throws ShapeError if masks disagree on (W, d) or the layer is empty.
    void check() const;
    bool operator==(const LofiLayer&) const = default;
};

/// Gradient buffers with the same shapes as a LofiLayer.
struct LayerGrad {
    std::vector<Matrix> dictionaries;
    std::vector<std::vector<double>> histograms;
    double temperature = 0.0;

    LayerGrad() = default;
    explicit LayerGrad(const LofiLayer& layer);

    void zero();
    LayerGrad& operator+=(const LayerGrad& other);
};

/// Scales `v` to unit Euclidean norm (with kNormEpsilon guard); returns the norm.
double normalize_into(std::span<const double> v, std::span<double> out);

/// Softmax over t * cos(x, w_i) for each word w_i of `dictionary`.
std::vector<double> normalized_similarity(std::span<const double> x, const Matrix& dictionary,
                                          double temperature);

/// Sum of normalized similarities over the rows of `egonet_features`.
std::vector<double> soft_histogram(const Matrix& egonet_features, const Matrix& dictionary,
                                   double temperature);

/// 1/2 (|h|_1 + |f|_1 - |h - f|_1).
double histogram_intersection(std::span<const double> h, std::span<const double> f);

/// Everything layer_backward needs to replay a forward call.
struct LayerTape {
    struct MaskCache {
        Matrix unit_dictionary;            // W x d
        std::vector<double> word_norms;    // W
        Matrix cosine;                     // n x W
        Matrix similarity;                 // n x W, rows sum to 1
        Matrix histogram;                  // n x W, soft histograms h_{v,j}
        std::vector<double> target;        // f_j at forward time
    };

    const EgonetIndex* egonets = nullptr;
    Matrix unit_input;                     // n x d
    std::vector<double> input_norms;       // n
    double temperature = 1.0;
    std::vector<MaskCache> masks;

    std::size_t node_count() const noexcept { return unit_input.rows(); }
    std::size_t input_dim() const noexcept { return unit_input.cols(); }
    std::size_t num_masks() const noexcept { return masks.size(); }
    std::size_t words() const noexcept {
        return masks.empty() ? 0 : masks.front().unit_dictionary.rows();
    }

    /// Sign of (h - f) per node/mask/word, flattened; used to detect when a
    /// perturbation crosses a kink of the intersection kernel.
    std::vector<signed char> kink_signature() const;
    /// Smallest |h - f| over the whole tape.
    double kink_distance() const;
};

struct LayerOutput {
    Matrix output;  // n x M
    LayerTape tape;
};

/// z[v, j] = K(h_{v,j}, f_j) for every node v and mask j.
LayerOutput layer_forward(const Matrix& features, const EgonetIndex& egonets, const LofiLayer& layer);

/// Reverse-mode pass. Parameter gradients are added into `accum`; the gradient
/// with respect to the input features is returned.
Matrix layer_backward(const LayerTape& tape, const Matrix& upstream, LayerGrad& accum);

struct LayerGradients {
    Matrix features;
    LayerGrad params;
};

/// Convenience form returning freshly allocated gradients.
LayerGradients layer_backward(const LayerTape& tape, const Matrix& upstream);

}  // namespace lofi
