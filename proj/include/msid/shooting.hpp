#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msid/dataset.hpp"
#include "msid/graph.hpp"
#include "msid/models.hpp"
#include "msid/tensor.hpp"

namespace msid {

// A length-T trajectory split into m sub-trajectories of n steps each.
// n must divide T exactly; ragged segmentations are rejected.
struct Segmentation {
    std::size_t length = 0;       // T
    std::size_t segment_len = 0;  // n
    std::size_t segments = 0;     // m = T / n
};

inline Segmentation segment(std::size_t length, std::size_t segment_len) {
    if (length == 0 || segment_len == 0)
        throw std::invalid_argument("segment: T and n must be positive");
    if (segment_len > length || length % segment_len != 0)
        throw std::invalid_argument("segment: n must divide T (T=" + std::to_string(length) +
                                    ", n=" + std::to_string(segment_len) + ")");
    return Segmentation{length, segment_len, length / segment_len};
}

enum class NodeInit : std::uint8_t { kZeros, kMeasurementPrefix };

// Trainable initial states, m per trajectory. Node (j, i) seeds sub-trajectory
// i of trajectory j and is only ever updated by batches containing j.
struct ShootingNodeStore {
    std::size_t state_dim = 0;
    std::size_t segments = 0;
    std::vector<std::vector<Variable>> nodes;  // [trajectory][segment], each [1, d]

    std::size_t trajectory_count() const { return nodes.size(); }

    Variable& node(std::size_t trajectory, std::size_t segment_idx) {
        return nodes.at(trajectory).at(segment_idx);
    }
    const Variable& node(std::size_t trajectory, std::size_t segment_idx) const {
        return nodes.at(trajectory).at(segment_idx);
    }

    std::vector<NamedTensor> to_named_tensors() const {
        std::vector<NamedTensor> out;
        out.reserve(nodes.size() * segments);
        for (const auto& per_traj : nodes)
            for (const auto& v : per_traj) out.push_back({v.name, v.value});
        return out;
    }
};

// Zero nodes, or the paper's measurement-prefix scheme: observed coordinates
// start at the (noisy, normalized) measurement of the segment's first step and
// the unobserved coordinates start at zero. The prefix scheme only makes sense
// when the observation is a projection.
inline ShootingNodeStore init_nodes(const TrajectoryDataset& data, const Segmentation& seg,
                                    NodeInit strategy, std::size_t state_dim,
                                    const ObservationSpec& ospec) {
    if (data.length != seg.length)
        throw std::invalid_argument("init_nodes: segmentation does not match dataset length");
    if (strategy == NodeInit::kMeasurementPrefix) {
        if (ospec.kind != ObservationKind::kProjection)
            throw std::invalid_argument("init_nodes: measurement_prefix requires a projection observation");
        if (!data.normalized)
            throw std::invalid_argument("init_nodes: measurement_prefix requires normalized data");
    }
    ShootingNodeStore store;
    store.state_dim = state_dim;
    store.segments = seg.segments;
    store.nodes.resize(data.trajectory_count());
    for (std::size_t j = 0; j < data.trajectory_count(); ++j) {
        store.nodes[j].reserve(seg.segments);
        for (std::size_t i = 0; i < seg.segments; ++i) {
            Tensor value({1, state_dim});
            if (strategy == NodeInit::kMeasurementPrefix) {
                const std::size_t t0 = i * seg.segment_len;
                for (std::size_t c = 0; c < ospec.projection.size(); ++c)
                    value(0, ospec.projection[c]) = data.measurements[j](t0, c);
            }
            store.nodes[j].emplace_back(std::move(value), true,
                                        "node." + std::to_string(j) + "." + std::to_string(i));
        }
    }
    return store;
}

struct LossTerms {
    double fit = 0.0;
    double defect = 0.0;
    double total = 0.0;
};

struct TrajectoryLossValues {
    Value fit{};
    Value defect{};
    Value total{};
    bool has_defect = false;

    LossTerms terms(const Graph& g) const {
        return {g.value(fit).item(), has_defect ? g.value(defect).item() : 0.0, g.value(total).item()};
    }
};

// Recorded penalty loss of one trajectory. All m segments advance together as
// the rows of one [m, d] state matrix:
//   fit    = 1/(mn) sum_{i,k} |g(f^(k-1)(s_i)) - y_{(i-1)n+k}|^2
//   defect = 1/(m-1) sum_{i<m} |s_{i+1} - f^(n)(s_i)|^2   (0 when m = 1)
//   total  = fit + alpha * defect
// The n-step images used by the defect come from the same rollout as the fit
// term; nothing is integrated twice.
inline TrajectoryLossValues trajectory_loss(Graph& g, ModelBinding& model, std::span<Variable> nodes,
                                            const Tensor& measurements, const Segmentation& seg,
                                            double alpha) {
    if (nodes.size() != seg.segments)
        throw std::invalid_argument("trajectory_loss: node count does not match segmentation");
    if (measurements.rows() != seg.length)
        throw std::invalid_argument("trajectory_loss: measurement count does not match segmentation");
    const std::size_t m = seg.segments;
    const std::size_t n = seg.segment_len;
    const std::size_t p = measurements.cols();

    std::vector<Value> node_rows;
    node_rows.reserve(m);
    for (auto& v : nodes) node_rows.push_back(g.leaf(v));
    Value states = m == 1 ? node_rows[0] : g.concat_rows(node_rows);
    Value start = states;

    Value fit_acc{};
    bool first = true;
    for (std::size_t k = 1; k <= n; ++k) {
        // Measurement rows y_{(i-1)n + k} stacked over segments i.
        Tensor targets({m, p});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t c = 0; c < p; ++c) targets(i, c) = measurements((i * n) + (k - 1), c);
        Value residual = g.sub(model.observe(states), g.input(std::move(targets)));
        Value term = g.sum_sq(residual);
        fit_acc = first ? term : g.add(fit_acc, term);
        first = false;
        states = model.transition(states);  // also yields f^(n)(s_i) for the defect
    }
    TrajectoryLossValues out;
    out.fit = g.scale(fit_acc, 1.0 / static_cast<double>(m * n));
    if (m >= 2) {
        Value next_nodes = g.select_rows(start, 1, m);
        Value rolled = g.select_rows(states, 0, m - 1);
        out.defect = g.scale(g.sum_sq(g.sub(next_nodes, rolled)), 1.0 / static_cast<double>(m - 1));
        out.total = g.add(out.fit, g.scale(out.defect, alpha));
        out.has_defect = true;
    } else {
        out.total = out.fit;
    }
    return out;
}

// Forward-only convenience: evaluates the three loss terms without keeping
// gradients around.
inline LossTerms trajectory_loss(ModelParameters& params, std::span<Variable> nodes,
                                 const Tensor& measurements, const Segmentation& seg, double alpha) {
    Graph g;
    ModelBinding model(g, params);
    return trajectory_loss(g, model, nodes, measurements, seg, alpha).terms(g);
}

// The original single-trajectory objective: mean squared residual of the full
// rollout from one initial state. Shares the multiple-shooting code path with
// m = 1, which is exactly the equivalence stated for the two formulations.
inline double ivp_loss(ModelParameters& params, const Tensor& initial_state,
                       const Tensor& measurements) {
    if (initial_state.rank() != 2 || initial_state.rows() != 1 ||
        initial_state.cols() != params.transition.state_dim)
        throw std::invalid_argument("ivp_loss: initial state must be [1, d]");
    Segmentation seg = segment(measurements.rows(), measurements.rows());
    std::vector<Variable> x1;
    x1.emplace_back(initial_state, true, "x1");
    return trajectory_loss(params, x1, measurements, seg, 0.0).total;
}

// Mean of per-trajectory totals over a batch; 1/|batch| keeps gradient scale
// independent of the batch size.
inline double batch_loss(ModelParameters& params, ShootingNodeStore& store,
                         const TrajectoryDataset& data, const std::vector<std::size_t>& batch,
                         const Segmentation& seg, double alpha) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    std::vector<bool> seen(store.trajectory_count(), false);
    double acc = 0.0;
    for (std::size_t j : batch) {
        if (j >= store.trajectory_count()) throw std::invalid_argument("batch_loss: unknown trajectory id");
        if (seen[j]) throw std::invalid_argument("batch_loss: duplicate trajectory id");
        seen[j] = true;
        acc += trajectory_loss(params, store.nodes[j], data.measurements[j], seg, alpha).total;
    }
    return acc / static_cast<double>(batch.size());
}

}  // namespace msid
