#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msid/graph.hpp"
#include "msid/rng.hpp"
#include "msid/tensor.hpp"

namespace msid {

// Transition family: residual fully connected f(x) = x + mlp(x), or residual
// locally linear f(x) = x + sum_k beta_k(x) A_k x with simplex weights beta(x).
enum class TransitionKind : std::uint8_t { kFullyConnected, kLocallyLinear };

struct TransitionSpec {
    TransitionKind kind = TransitionKind::kLocallyLinear;
    std::size_t state_dim = 3;
    std::vector<std::size_t> hidden = {512, 512, 512};  // fully connected branch
    std::size_t mixtures = 32;                          // locally linear: K
    std::size_t beta_hidden = 1024;                     // locally linear: width of the beta network

    void validate() const {
        if (state_dim == 0) throw std::invalid_argument("TransitionSpec: state_dim must be positive");
        if (kind == TransitionKind::kLocallyLinear) {
            if (mixtures == 0) throw std::invalid_argument("TransitionSpec: mixtures must be positive");
            if (beta_hidden == 0) throw std::invalid_argument("TransitionSpec: beta_hidden must be positive");
        }
        for (std::size_t w : hidden)
            if (w == 0) throw std::invalid_argument("TransitionSpec: zero hidden width");
    }
};

// Observation family: coordinate projection, or an MLP decoder whose final
// sigmoid keeps pixel outputs inside (0, 1).
enum class ObservationKind : std::uint8_t { kProjection, kMlpDecoder };

struct ObservationSpec {
    ObservationKind kind = ObservationKind::kProjection;
    std::vector<std::size_t> projection = {0};  // observed state coordinates
    std::vector<std::size_t> hidden = {128};    // decoder widths
    std::size_t output_dim = 576;               // decoder output (flattened pixels)
    bool final_sigmoid = true;

    std::size_t measurement_dim() const {
        return kind == ObservationKind::kProjection ? projection.size() : output_dim;
    }

    void validate(std::size_t state_dim) const {
        if (kind == ObservationKind::kProjection) {
            if (projection.empty()) throw std::invalid_argument("ObservationSpec: empty projection");
            std::vector<bool> seen(state_dim, false);
            for (std::size_t c : projection) {
                if (c >= state_dim) throw std::invalid_argument("ObservationSpec: projection index out of range");
                if (seen[c]) throw std::invalid_argument("ObservationSpec: duplicate projection index");
                seen[c] = true;
            }
        } else {
            if (output_dim == 0) throw std::invalid_argument("ObservationSpec: output_dim must be positive");
            for (std::size_t w : hidden)
                if (w == 0) throw std::invalid_argument("ObservationSpec: zero hidden width");
        }
    }
};

// All trainable weights of the transition and observation networks, in a fixed
// order so that checkpoints and optimizer state line up deterministically.
struct ModelParameters {
    TransitionSpec transition;
    ObservationSpec observation;
    std::vector<Variable> tensors;

    Variable* find(const std::string& name) {
        for (auto& v : tensors)
            if (v.name == name) return &v;
        return nullptr;
    }

    void zero_grad() {
        for (auto& v : tensors) v.zero_grad();
    }
};

namespace detail {

inline Tensor uniform_tensor(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(-bound, bound);
    return t;
}

inline void push_mlp_params(std::vector<Variable>& out, Rng& rng, const std::string& prefix,
                            std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim) {
    std::vector<std::size_t> dims;
    dims.push_back(in_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out_dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        out.emplace_back(uniform_tensor(rng, dims[l], dims[l + 1], bound), true,
                         prefix + ".w" + std::to_string(l));
        // Biases share the fan-in scale. Zero biases would leave every relu
        // preactivation exactly zero at the all-zero state, and with
        // zero-initialized shooting nodes the (x > 0) gradient mask then cuts
        // all gradient flow to the nodes and first layers permanently.
        out.emplace_back(uniform_tensor(rng, 1, dims[l + 1], bound), true,
                         prefix + ".b" + std::to_string(l));
    }
}

}  // namespace detail

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero. The A_k
// of the locally linear family are drawn with scale 0.01 so the freshly
// initialized map is close to the identity.
inline ModelParameters init_params(const TransitionSpec& tspec, const ObservationSpec& ospec,
                                   std::uint64_t seed) {
    tspec.validate();
    ospec.validate(tspec.state_dim);
    ModelParameters p;
    p.transition = tspec;
    p.observation = ospec;
    Rng rng = Rng::stream(seed, /*purpose=*/0x1717);
    const std::size_t d = tspec.state_dim;
    if (tspec.kind == TransitionKind::kFullyConnected) {
        detail::push_mlp_params(p.tensors, rng, "f", d, tspec.hidden, d);
    } else {
        detail::push_mlp_params(p.tensors, rng, "f.beta", d, {tspec.beta_hidden}, tspec.mixtures);
        for (std::size_t k = 0; k < tspec.mixtures; ++k)
            p.tensors.emplace_back(detail::uniform_tensor(rng, d, d, 0.01), true,
                                   "f.A." + std::to_string(k));
    }
    if (ospec.kind == ObservationKind::kMlpDecoder)
        detail::push_mlp_params(p.tensors, rng, "g", d, ospec.hidden, ospec.output_dim);
    return p;
}

// Binds the model parameters as leaves of one computation record and exposes
// the forward maps on row-stacked states: every op below treats its input as
// [s, d] with one state per row, so independent segments advance together.
class ModelBinding {
public:
    ModelBinding(Graph& graph, const TransitionSpec& tspec, const ObservationSpec& ospec,
                 std::span<Variable> tensors)
        : g_(&graph), tspec_(tspec), ospec_(ospec) {
        leaves_.reserve(tensors.size());
        for (auto& v : tensors) leaves_.push_back(graph.leaf(v));
        if (tspec_.kind == TransitionKind::kLocallyLinear) {
            // x_row * A_k^T for all k at once: concat the transposed A_k into
            // one [d, K*d] matrix reused across every rollout step.
            std::vector<Value> blocks;
            const std::size_t a_begin = 4;  // after the two beta-net layers
            for (std::size_t k = 0; k < tspec_.mixtures; ++k)
                blocks.push_back(graph.transpose(leaves_[a_begin + k]));
            a_concat_ = graph.concat_cols(blocks);
        }
    }

    ModelBinding(Graph& graph, ModelParameters& params)
        : ModelBinding(graph, params.transition, params.observation, params.tensors) {}

    // One transition step: rows of x advance one time step.
    Value transition(Value x) {
        const TransitionSpec& spec = tspec_;
        if (g_->value(x).cols() != spec.state_dim)
            throw std::invalid_argument("transition: state dimension mismatch");
        if (spec.kind == TransitionKind::kFullyConnected) {
            Value delta = mlp(x, 0, spec.hidden.size(), /*relu_last=*/false);
            return g_->add(x, delta);
        }
        Value logits = mlp(x, 0, 1, /*relu_last=*/false);  // beta net: one hidden layer
        Value weights = g_->softmax_rows(logits);
        Value mapped = g_->matmul(x, a_concat_);
        Value delta = g_->block_mix(mapped, weights, spec.state_dim);
        return g_->add(x, delta);
    }

    // Observation map applied to every row.
    Value observe(Value x) {
        const ObservationSpec& spec = ospec_;
        if (g_->value(x).cols() != tspec_.state_dim)
            throw std::invalid_argument("observe: state dimension mismatch");
        if (spec.kind == ObservationKind::kProjection) return g_->select_cols(x, spec.projection);
        Value y = mlp(x, decoder_offset(), spec.hidden.size(), /*relu_last=*/false);
        return spec.final_sigmoid ? g_->sigmoid(y) : y;
    }

    // [x, f(x), f^2(x), ..., f^k(x)]; intermediate states stay recorded for the
    // reverse pass. A non-finite state aborts with the offending step index.
    std::vector<Value> iterate(Value x, std::size_t k) {
        std::vector<Value> states;
        states.reserve(k + 1);
        states.push_back(x);
        for (std::size_t step = 1; step <= k; ++step) {
            try {
                states.push_back(transition(states.back()));
            } catch (const numeric_error& e) {
                throw numeric_error("iterate: non-finite state at step " + std::to_string(step) + ": " +
                                    e.what());
            }
        }
        return states;
    }

    Graph& graph() { return *g_; }

private:
    // Applies layers [first, first+layer_count] of the parameter list starting
    // at leaf offset `offset` (pairs of weight, bias), ReLU between layers.
    Value mlp(Value x, std::size_t offset, std::size_t hidden_count, bool relu_last) {
        Value h = x;
        const std::size_t layers = hidden_count + 1;
        for (std::size_t l = 0; l < layers; ++l) {
            h = g_->add_rowvec(g_->matmul(h, leaves_[offset + 2 * l]), leaves_[offset + 2 * l + 1]);
            if (l + 1 < layers || relu_last) h = g_->relu(h);
        }
        return h;
    }

    std::size_t decoder_offset() const {
        if (tspec_.kind == TransitionKind::kFullyConnected) return 2 * (tspec_.hidden.size() + 1);
        return 4 + tspec_.mixtures;  // beta net (2 layers) + K mixing matrices
    }

    Graph* g_;
    TransitionSpec tspec_;
    ObservationSpec ospec_;
    std::vector<Value> leaves_;
    Value a_concat_{};
};

// Plain forward evaluation (no gradients kept): owns a scratch record that is
// rebuilt per call. Used by the filter, rollouts and metrics.
class ModelEvaluator {
public:
    explicit ModelEvaluator(ModelParameters& params) : p_(&params) {}

    // [s, d] -> [s, d]
    Tensor transition(const Tensor& states) {
        g_.clear();
        ModelBinding bind(g_, *p_);
        return g_.value(bind.transition(g_.input(states)));
    }

    // [s, d] -> [s, measurement_dim]
    Tensor observe(const Tensor& states) {
        g_.clear();
        ModelBinding bind(g_, *p_);
        return g_.value(bind.observe(g_.input(states)));
    }

    Tensor transition_n(Tensor states, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                states = transition(states);
            } catch (const numeric_error& e) {
                throw numeric_error("rollout: non-finite state at step " + std::to_string(i + 1) + ": " +
                                    e.what());
            }
        }
        return states;
    }

private:
    Graph g_;
    ModelParameters* p_;
};

}  // namespace msid
