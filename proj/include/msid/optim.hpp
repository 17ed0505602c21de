#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "msid/common.hpp"
#include "msid/dataset.hpp"
#include "msid/graph.hpp"
#include "msid/models.hpp"
#include "msid/rng.hpp"
#include "msid/shooting.hpp"

namespace msid {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;

    AdamState() = default;
    explicit AdamState(const Tensor& like) : m(like.shape()), v(like.shape()) {}

    void reset() {
        std::fill(m.data(), m.data() + m.size(), 0.0);
        std::fill(v.data(), v.data() + v.size(), 0.0);
        t = 0;
    }
};

// One bias-corrected Adam update: p -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(AdamState& state, Variable& var, double lr, const AdamConfig& cfg = {}) {
    if (!state.m.same_shape(var.value) || !var.grad.same_shape(var.value))
        throw std::invalid_argument("adam_step: shape mismatch for " + var.name);
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < var.value.size(); ++i) {
        const double g = var.grad.at(i);
        state.m.at(i) = cfg.beta1 * state.m.at(i) + (1.0 - cfg.beta1) * g;
        state.v.at(i) = cfg.beta2 * state.v.at(i) + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m.at(i) / bc1;
        const double v_hat = state.v.at(i) / bc2;
        var.value.at(i) -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

// Three-phase schedule: alpha jumps once from 1 to alpha_tilde at the bump
// epoch (with an optimizer reset and a learning-rate decay), and the learning
// rate decays once more at the second decay epoch.
struct TrainSchedule {
    std::size_t epochs = 1000;
    std::size_t penalty_bump_epoch = 200;
    std::size_t second_decay_epoch = 600;
    double initial_alpha = 1.0;
    double alpha_tilde = 1e3;
    double initial_lr = 1e-3;
    double decay_factor = 10.0;
    std::size_t batch_size = 40;

    void validate() const {
        if (epochs == 0) throw std::invalid_argument("TrainSchedule: epochs must be positive");
        if (!(penalty_bump_epoch > 0 && penalty_bump_epoch < second_decay_epoch &&
              second_decay_epoch <= epochs))
            throw std::invalid_argument("TrainSchedule: need 0 < bump < second decay <= epochs");
        if (batch_size == 0) throw std::invalid_argument("TrainSchedule: batch size must be positive");
        if (initial_lr <= 0.0 || decay_factor <= 1.0 || alpha_tilde < initial_alpha)
            throw std::invalid_argument("TrainSchedule: bad learning-rate or penalty settings");
    }
};

enum class ScheduleAction : std::uint8_t { kSetAlpha, kResetOptimizer, kScaleLr };

inline std::vector<ScheduleAction> schedule_event(const TrainSchedule& schedule, std::size_t epoch) {
    if (epoch == 0 || epoch > schedule.epochs)
        throw std::invalid_argument("schedule_event: epoch out of range");
    if (epoch == schedule.penalty_bump_epoch)
        return {ScheduleAction::kSetAlpha, ScheduleAction::kResetOptimizer, ScheduleAction::kScaleLr};
    if (epoch == schedule.second_decay_epoch) return {ScheduleAction::kScaleLr};
    return {};
}

struct EpochRecord {
    std::size_t epoch = 0;
    double fit = 0.0;
    double defect = 0.0;
    double alpha = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;

    void write_csv(std::ostream& os) const {
        os << "epoch,fit,defect,alpha,lr,seconds\n";
        os.precision(17);
        for (const auto& r : epochs)
            os << r.epoch << ',' << r.fit << ',' << r.defect << ',' << r.alpha << ',' << r.lr << ','
               << r.seconds << '\n';
    }

    void write_csv(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw io_error("cannot open for writing: " + path);
        write_csv(os);
        if (!os) throw io_error("write failed: " + path);
    }

    static TrainHistory parse_csv(std::istream& is) {
        TrainHistory h;
        std::string line;
        if (!std::getline(is, line) || line != "epoch,fit,defect,alpha,lr,seconds")
            throw io_error("history csv: bad header");
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            EpochRecord r;
            char comma;
            std::istringstream ls(line);
            ls >> r.epoch >> comma >> r.fit >> comma >> r.defect >> comma >> r.alpha >> comma >> r.lr >>
                comma >> r.seconds;
            if (!ls) throw io_error("history csv: bad row: " + line);
            h.epochs.push_back(r);
        }
        return h;
    }

    static TrainHistory parse_csv_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw io_error("cannot open: " + path);
        return parse_csv(is);
    }
};

struct TrainOptions {
    int threads = 1;
    std::function<void(const EpochRecord&)> on_epoch;  // progress hook
};

struct TrainResult {
    ModelParameters params;
    ShootingNodeStore nodes;
    TrainHistory history;
    // Instrumentation: per-trajectory node update totals, plus the min/max
    // number of updates any node saw within a single epoch.
    std::vector<std::uint64_t> node_update_counts;
    std::uint64_t epoch_updates_min = 0;
    std::uint64_t epoch_updates_max = 0;
};

// Minimizes the multiple-shooting penalty loss jointly over the network
// weights and the shooting nodes with shuffled mini-batches. One Adam step per
// batch on theta and on exactly the nodes of the batch trajectories; schedule
// events apply at the start of their epoch; everything is deterministic given
// the seed (shuffling included), independent of the thread count.
inline TrainResult train(const TrajectoryDataset& data, const TransitionSpec& tspec,
                         const ObservationSpec& ospec, const Segmentation& seg, NodeInit node_init,
                         const TrainSchedule& schedule, std::uint64_t seed,
                         const TrainOptions& options = {}) {
    schedule.validate();
    if (!data.normalized) throw std::invalid_argument("train: dataset must be normalized");
    if (data.length != seg.length)
        throw std::invalid_argument("train: segmentation does not match dataset length");
    if (ospec.measurement_dim() != data.measurement_dim)
        throw std::invalid_argument("train: observation output does not match measurement dim");
    const std::size_t n_traj = data.trajectory_count();
    if (schedule.batch_size > n_traj)
        throw std::invalid_argument("train: batch size exceeds trajectory count");

    TrainResult result;
    result.params = init_params(tspec, ospec, seed);
    result.nodes = init_nodes(data, seg, node_init, tspec.state_dim, ospec);
    result.node_update_counts.assign(n_traj, 0);
    result.epoch_updates_min = std::numeric_limits<std::uint64_t>::max();

    ModelParameters& params = result.params;
    ShootingNodeStore& store = result.nodes;
    const std::size_t theta_count = params.tensors.size();

    std::vector<AdamState> theta_adam;
    theta_adam.reserve(theta_count);
    for (const auto& v : params.tensors) theta_adam.emplace_back(v.value);
    std::vector<std::vector<AdamState>> node_adam(n_traj);
    for (std::size_t j = 0; j < n_traj; ++j)
        for (const auto& v : store.nodes[j]) node_adam[j].emplace_back(v.value);

    double alpha = schedule.initial_alpha;
    double lr = schedule.initial_lr;
    Rng shuffle_rng = Rng::stream(seed, /*purpose=*/0x50FF);

    std::vector<std::size_t> order(n_traj);
    for (std::size_t j = 0; j < n_traj; ++j) order[j] = j;

    // Per-batch-position gradient buffers for theta, reduced in batch order so
    // the result does not depend on which thread ran which trajectory.
    std::vector<std::vector<Tensor>> theta_buffers(schedule.batch_size);
    for (auto& buf : theta_buffers) {
        buf.reserve(theta_count);
        for (const auto& v : params.tensors) buf.emplace_back(v.value.shape());
    }
    std::unordered_map<const Variable*, std::size_t> theta_slot;
    for (std::size_t i = 0; i < theta_count; ++i) theta_slot.emplace(&params.tensors[i], i);

    struct ItemResult {
        double fit = 0.0;
        double defect = 0.0;
    };
    std::vector<ItemResult> item_results(schedule.batch_size);
    std::vector<std::uint64_t> epoch_counts(n_traj, 0);

    for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        for (ScheduleAction action : schedule_event(schedule, epoch)) {
            switch (action) {
                case ScheduleAction::kSetAlpha: alpha = schedule.alpha_tilde; break;
                case ScheduleAction::kResetOptimizer:
                    for (auto& s : theta_adam) s.reset();
                    for (auto& per_traj : node_adam)
                        for (auto& s : per_traj) s.reset();
                    break;
                case ScheduleAction::kScaleLr: lr /= schedule.decay_factor; break;
            }
        }

        // Fisher-Yates shuffle, one batch order per epoch.
        for (std::size_t j = n_traj; j > 1; --j)
            std::swap(order[j - 1], order[shuffle_rng.below(j)]);

        std::fill(epoch_counts.begin(), epoch_counts.end(), 0);
        double epoch_fit = 0.0, epoch_defect = 0.0;

        for (std::size_t batch_begin = 0; batch_begin < n_traj; batch_begin += schedule.batch_size) {
            const std::size_t batch_len = std::min(schedule.batch_size, n_traj - batch_begin);
            const std::size_t batch_index = batch_begin / schedule.batch_size;

            params.zero_grad();
            for (std::size_t b = 0; b < batch_len; ++b)
                for (auto& node : store.nodes[order[batch_begin + b]]) node.zero_grad();
            for (std::size_t b = 0; b < batch_len; ++b)
                for (auto& t : theta_buffers[b]) std::fill(t.data(), t.data() + t.size(), 0.0);

            const double inv_batch = 1.0 / static_cast<double>(batch_len);
            parallel_for(batch_len, options.threads, [&](std::size_t b) {
                const std::size_t j = order[batch_begin + b];
                try {
                    Graph g;
                    ModelBinding model(g, params);
                    auto loss = trajectory_loss(g, model, store.nodes[j], data.measurements[j], seg, alpha);
                    LossTerms terms = loss.terms(g);
                    item_results[b] = {terms.fit, terms.defect};
                    Value scaled = g.scale(loss.total, inv_batch);
                    auto& buffer = theta_buffers[b];
                    g.backward(scaled, [&](const Variable& var) -> Tensor* {
                        auto it = theta_slot.find(&var);
                        return it == theta_slot.end() ? nullptr : &buffer[it->second];
                    });
                } catch (const numeric_error& e) {
                    throw numeric_error("train: epoch " + std::to_string(epoch) + " batch " +
                                        std::to_string(batch_index) + " trajectory " + std::to_string(j) +
                                        ": " + e.what());
                }
            });

            // Deterministic reduction: batch order, then tensor order.
            for (std::size_t b = 0; b < batch_len; ++b) {
                epoch_fit += item_results[b].fit;
                epoch_defect += item_results[b].defect;
                for (std::size_t i = 0; i < theta_count; ++i) {
                    Tensor& dst = params.tensors[i].grad;
                    const Tensor& src = theta_buffers[b][i];
                    for (std::size_t e = 0; e < dst.size(); ++e) dst.at(e) += src.at(e);
                }
            }

            for (std::size_t i = 0; i < theta_count; ++i) {
                adam_step(theta_adam[i], params.tensors[i], lr);
                if (!params.tensors[i].value.all_finite())
                    throw numeric_error("train: non-finite parameter " + params.tensors[i].name +
                                        " after epoch " + std::to_string(epoch));
            }
            for (std::size_t b = 0; b < batch_len; ++b) {
                const std::size_t j = order[batch_begin + b];
                for (std::size_t i = 0; i < store.segments; ++i) {
                    adam_step(node_adam[j][i], store.nodes[j][i], lr);
                    if (!store.nodes[j][i].value.all_finite())
                        throw numeric_error("train: non-finite shooting node " + store.nodes[j][i].name +
                                            " after epoch " + std::to_string(epoch));
                }
                result.node_update_counts[j] += 1;
                epoch_counts[j] += 1;
            }
        }

        for (std::size_t j = 0; j < n_traj; ++j) {
            result.epoch_updates_min = std::min(result.epoch_updates_min, epoch_counts[j]);
            result.epoch_updates_max = std::max(result.epoch_updates_max, epoch_counts[j]);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.fit = epoch_fit / static_cast<double>(n_traj);
        rec.defect = epoch_defect / static_cast<double>(n_traj);
        rec.alpha = alpha;
        rec.lr = lr;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
        result.history.epochs.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec);
    }
    return result;
}

}  // namespace msid
