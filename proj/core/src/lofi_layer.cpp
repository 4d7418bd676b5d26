#include "lofi/lofi_layer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lofi {

namespace {

double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
    }
}

// In-place softmax of `logits` with max subtraction.
void softmax_inplace(std::span<double> logits) {
    double top = -std::numeric_limits<double>::infinity();
    for (double a : logits) top = std::max(top, a);
    double total = 0.0;
    for (double& a : logits) {
        a = std::exp(a - top);
        total += a;
    }
    for (double& a : logits) a /= total;
}

// Backpropagates through y = x / (|x| + eps): adds dL/dx into `grad_x`.
void normalize_backward(std::span<const double> unit, double norm, std::span<const double> grad_unit,
                        std::span<double> grad_x) {
    const double inv = 1.0 / (norm + kNormEpsilon);
    const double proj = norm > 0.0 ? dot(unit, grad_unit) / norm : 0.0;
    for (std::size_t k = 0; k < grad_x.size(); ++k) grad_x[k] += grad_unit[k] * inv - unit[k] * proj;
}

Matrix unit_rows(const Matrix& m, std::vector<double>& norms) {
    Matrix out(m.rows(), m.cols());
    norms.resize(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) norms[r] = normalize_into(m.row(r), out.row(r));
    return out;
}

}  // namespace

LofiLayer::LofiLayer(std::size_t num_masks, std::size_t words, std::size_t dim) {
    if (num_masks == 0 || words == 0 || dim == 0) {
        throw ShapeError("LoFI layer needs M >= 1, W >= 1, d >= 1");
    }
    masks.resize(num_masks);
    for (auto& m : masks) {
        m.dictionary = Matrix(words, dim);
        m.histogram.assign(words, 0.0);
    }
}

void LofiLayer::check() const {
    if (masks.empty()) throw ShapeError("LoFI layer has no masks");
    const auto w = words();
    const auto d = input_dim();
    if (w == 0 || d == 0) throw ShapeError("LoFI layer masks must have W >= 1 and d >= 1");
    for (std::size_t j = 0; j < masks.size(); ++j) {
        const auto& m = masks[j];
        if (m.words() != w || m.dim() != d || m.histogram.size() != w) {
            throw ShapeError("mask " + std::to_string(j) + " shape differs from mask 0");
        }
    }
    if (!std::isfinite(temperature)) throw NumericError("layer temperature is not finite");
}

LayerGrad::LayerGrad(const LofiLayer& layer) {
    for (const auto& m : layer.masks) {
        dictionaries.emplace_back(m.dictionary.rows(), m.dictionary.cols());
        histograms.emplace_back(m.histogram.size(), 0.0);
    }
}

void LayerGrad::zero() {
    for (auto& d : dictionaries) d.fill(0.0);
    for (auto& h : histograms) std::fill(h.begin(), h.end(), 0.0);
    temperature = 0.0;
}

LayerGrad& LayerGrad::operator+=(const LayerGrad& other) {
    if (other.dictionaries.size() != dictionaries.size()) throw ShapeError("layer gradient mask count mismatch");
    for (std::size_t j = 0; j < dictionaries.size(); ++j) {
        dictionaries[j] += other.dictionaries[j];
        if (histograms[j].size() != other.histograms[j].size()) throw ShapeError("histogram gradient mismatch");
        for (std::size_t i = 0; i < histograms[j].size(); ++i) histograms[j][i] += other.histograms[j][i];
    }
    temperature += other.temperature;
    return *this;
}

double normalize_into(std::span<const double> v, std::span<double> out) {
    const double norm = std::sqrt(dot(v, v));
    const double inv = 1.0 / (norm + kNormEpsilon);
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] * inv;
    return norm;
}

std::vector<double> normalized_similarity(std::span<const double> x, const Matrix& dictionary,
                                          double temperature) {
    if (x.size() != dictionary.cols()) throw ShapeError("feature width differs from dictionary width");
    require_finite(x, "feature vector");
    require_finite(dictionary.values(), "dictionary");
    if (!std::isfinite(temperature)) throw NumericError("non-finite temperature");
    std::vector<double> unit_x(x.size());
    normalize_into(x, unit_x);
    std::vector<double> unit_w(dictionary.cols());
    std::vector<double> out(dictionary.rows());
    for (std::size_t i = 0; i < dictionary.rows(); ++i) {
        normalize_into(dictionary.row(i), unit_w);
        out[i] = temperature * dot(unit_x, unit_w);
    }
    softmax_inplace(out);
    return out;
}

std::vector<double> soft_histogram(const Matrix& egonet_features, const Matrix& dictionary,
                                   double temperature) {
    if (egonet_features.rows() == 0) throw ShapeError("soft histogram of an empty egonet");
    std::vector<double> h(dictionary.rows(), 0.0);
    for (std::size_t u = 0; u < egonet_features.rows(); ++u) {
        auto s = normalized_similarity(egonet_features.row(u), dictionary, temperature);
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += s[i];
    }
    return h;
}

double histogram_intersection(std::span<const double> h, std::span<const double> f) {
    if (h.size() != f.size()) {
        throw ShapeError("histogram lengths differ: " + std::to_string(h.size()) + " vs " +
                         std::to_string(f.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        acc += std::abs(h[i]) + std::abs(f[i]) - std::abs(h[i] - f[i]);
    }
    return 0.5 * acc;
}

std::vector<signed char> LayerTape::kink_signature() const {
    std::vector<signed char> out;
    for (const auto& m : masks) {
        for (std::size_t v = 0; v < m.histogram.rows(); ++v) {
            for (std::size_t i = 0; i < m.histogram.cols(); ++i) {
                out.push_back(static_cast<signed char>(sign(m.histogram(v, i) - m.target[i])));
            }
        }
        for (double f : m.target) out.push_back(static_cast<signed char>(sign(f)));
    }
    return out;
}

double LayerTape::kink_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : masks) {
        for (std::size_t v = 0; v < m.histogram.rows(); ++v) {
            for (std::size_t i = 0; i < m.histogram.cols(); ++i) {
                best = std::min(best, std::abs(m.histogram(v, i) - m.target[i]));
            }
        }
        for (double f : m.target) best = std::min(best, std::abs(f));
    }
    return best;
}

LayerOutput layer_forward(const Matrix& features, const EgonetIndex& egonets, const LofiLayer& layer) {
    layer.check();
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    if (d != layer.input_dim()) {
        throw ShapeError("layer expects feature width " + std::to_string(layer.input_dim()) + ", got " +
                         std::to_string(d));
    }
    if (egonets.node_count() != n) {
        throw ShapeError("egonet index covers " + std::to_string(egonets.node_count()) + " nodes, features have " +
                         std::to_string(n));
    }
    require_finite(features.values(), "layer input");

    const std::size_t w = layer.words();
    const double t = layer.temperature;
    LayerOutput result{Matrix(n, layer.num_masks()), {}};
    LayerTape& tape = result.tape;
    tape.egonets = &egonets;
    tape.temperature = t;
    tape.unit_input = unit_rows(features, tape.input_norms);
    tape.masks.resize(layer.num_masks());

    for (std::size_t j = 0; j < layer.num_masks(); ++j) {
        const Mask& mask = layer.masks[j];
        require_finite(mask.dictionary.values(), "dictionary");
        require_finite(mask.histogram, "histogram");
        auto& c = tape.masks[j];
        c.unit_dictionary = unit_rows(mask.dictionary, c.word_norms);
        c.cosine = Matrix(n, w);
        c.similarity = Matrix(n, w);
        c.histogram = Matrix(n, w);
        c.target = mask.histogram;

        for (std::size_t u = 0; u < n; ++u) {
            auto xu = tape.unit_input.row(u);
            auto cos_row = c.cosine.row(u);
            auto sim_row = c.similarity.row(u);
            for (std::size_t i = 0; i < w; ++i) {
                cos_row[i] = dot(xu, c.unit_dictionary.row(i));
                sim_row[i] = t * cos_row[i];
            }
            softmax_inplace(sim_row);
        }
        for (std::size_t v = 0; v < n; ++v) {
            auto h = c.histogram.row(v);
            for (NodeId u : egonets.members(static_cast<NodeId>(v))) {
                auto s = c.similarity.row(u);
                for (std::size_t i = 0; i < w; ++i) h[i] += s[i];
            }
            result.output(v, j) = histogram_intersection(h, mask.histogram);
        }
    }
    return result;
}

Matrix layer_backward(const LayerTape& tape, const Matrix& upstream, LayerGrad& accum) {
    const std::size_t n = tape.node_count();
    const std::size_t d = tape.input_dim();
    const std::size_t w = tape.words();
    if (upstream.rows() != n || upstream.cols() != tape.num_masks()) {
        throw ShapeError("upstream gradient is " + std::to_string(upstream.rows()) + "x" +
                         std::to_string(upstream.cols()) + ", tape expects " + std::to_string(n) + "x" +
                         std::to_string(tape.num_masks()));
    }
    if (accum.dictionaries.size() != tape.num_masks()) throw ShapeError("gradient buffer mask count mismatch");
    if (tape.egonets == nullptr) throw ShapeError("tape has no egonet index");

    const double t = tape.temperature;
    Matrix grad_unit_input(n, d);
    Matrix grad_hist(n, w);
    Matrix grad_sim(n, w);
    Matrix grad_unit_dict(w, d);

    for (std::size_t j = 0; j < tape.num_masks(); ++j) {
        const auto& c = tape.masks[j];
        auto& gdict = accum.dictionaries[j];
        auto& gf = accum.histograms[j];
        if (gdict.rows() != w || gdict.cols() != d || gf.size() != w) {
            throw ShapeError("gradient buffer shape differs from tape for mask " + std::to_string(j));
        }

        // Intersection kernel: dK/dh_i = (sign(h_i) - sign(h_i - f_i)) / 2,
        //                      dK/df_i = (sign(f_i) + sign(h_i - f_i)) / 2.
        for (std::size_t v = 0; v < n; ++v) {
            const double g = upstream(v, j);
            auto h = c.histogram.row(v);
            auto gh = grad_hist.row(v);
            for (std::size_t i = 0; i < w; ++i) {
                const double diff = sign(h[i] - c.target[i]);
                gh[i] = 0.5 * g * (sign(h[i]) - diff);
                gf[i] += 0.5 * g * (sign(c.target[i]) + diff);
            }
        }

        // Histogram sums s_u over v's egonet; membership is symmetric, so the
        // nodes receiving from u are exactly u's own egonet.
        grad_sim.fill(0.0);
        for (std::size_t u = 0; u < n; ++u) {
            auto gs = grad_sim.row(u);
            for (NodeId v : tape.egonets->members(static_cast<NodeId>(u))) {
                auto gh = grad_hist.row(v);
                for (std::size_t i = 0; i < w; ++i) gs[i] += gh[i];
            }
        }

        grad_unit_dict.fill(0.0);
        for (std::size_t u = 0; u < n; ++u) {
            auto s = c.similarity.row(u);
            auto gs = grad_sim.row(u);
            const double inner = dot(s, gs);
            auto xu = tape.unit_input.row(u);
            auto gxu = grad_unit_input.row(u);
            for (std::size_t i = 0; i < w; ++i) {
                const double g_logit = s[i] * (gs[i] - inner);
                accum.temperature += g_logit * c.cosine(u, i);
                const double g_cos = t * g_logit;
                auto wi = c.unit_dictionary.row(i);
                auto gwi = grad_unit_dict.row(i);
                for (std::size_t k = 0; k < d; ++k) {
                    gxu[k] += g_cos * wi[k];
                    gwi[k] += g_cos * xu[k];
                }
            }
        }
        for (std::size_t i = 0; i < w; ++i) {
            normalize_backward(c.unit_dictionary.row(i), c.word_norms[i], grad_unit_dict.row(i), gdict.row(i));
        }
    }

    Matrix grad_features(n, d);
    for (std::size_t u = 0; u < n; ++u) {
        normalize_backward(tape.unit_input.row(u), tape.input_norms[u], grad_unit_input.row(u),
                           grad_features.row(u));
    }
    return grad_features;
}

LayerGradients layer_backward(const LayerTape& tape, const Matrix& upstream) {
    LayerGradients out;
    for (std::size_t j = 0; j < tape.num_masks(); ++j) {
        out.params.dictionaries.emplace_back(tape.words(), tape.input_dim());
        out.params.histograms.emplace_back(tape.words(), 0.0);
    }
    out.features = layer_backward(tape, upstream, out.params);
    return out;
}

}  // namespace lofi
