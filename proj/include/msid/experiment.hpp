#pragma once

// Checkpoint composition: network weights, shooting nodes, and the training
// normalization statistics travel together in one SSMP file. Stats tensors use
// the reserved "norm." prefix; node tensors are "node.<trajectory>.<segment>".

#include <cstdint>
#include <string>
#include <vector>

#include "msid/checkpoint.hpp"
#include "msid/dataset.hpp"
#include "msid/models.hpp"
#include "msid/shooting.hpp"

namespace msid {

inline void save_checkpoint(const std::string& path, const ModelParameters& params,
                            const ShootingNodeStore& store, const NormalizationStats& stats) {
    std::vector<NamedTensor> tensors;
    tensors.reserve(params.tensors.size() + store.trajectory_count() * store.segments + 3);
    for (const auto& v : params.tensors) tensors.push_back({v.name, v.value});
    for (const auto& nt : store.to_named_tensors()) tensors.push_back(nt);
    const std::size_t p = stats.mean.size();
    Tensor mean({1, std::max<std::size_t>(p, 1)});
    Tensor std_dev({1, std::max<std::size_t>(p, 1)});
    for (std::size_t c = 0; c < p; ++c) {
        mean(0, c) = stats.mean[c];
        std_dev(0, c) = stats.std_dev[c];
    }
    tensors.push_back({"norm.mean", mean});
    tensors.push_back({"norm.std", std_dev});
    tensors.push_back({"norm.identity", Tensor::scalar(stats.identity ? 1.0 : 0.0)});
    save_ssmp(path, tensors);
}

struct LoadedCheckpoint {
    ModelParameters params;
    ShootingNodeStore nodes;
    NormalizationStats stats;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path, const TransitionSpec& tspec,
                                        const ObservationSpec& ospec) {
    auto tensors = load_ssmp(path);
    LoadedCheckpoint out;
    out.params = init_params(tspec, ospec, /*seed=*/0);

    std::size_t loaded = 0;
    std::size_t max_traj = 0, max_seg = 0;
    for (const auto& [name, tensor] : tensors) {
        if (name.rfind("node.", 0) == 0) {
            const auto dot = name.find('.', 5);
            if (dot == std::string::npos) throw io_error("checkpoint: malformed node name " + name);
            max_traj = std::max(max_traj, static_cast<std::size_t>(std::stoull(name.substr(5, dot - 5))) + 1);
            max_seg = std::max(max_seg, static_cast<std::size_t>(std::stoull(name.substr(dot + 1))) + 1);
        }
    }
    out.nodes.state_dim = tspec.state_dim;
    out.nodes.segments = max_seg;
    out.nodes.nodes.resize(max_traj);
    for (auto& per_traj : out.nodes.nodes) {
        per_traj.reserve(max_seg);
        for (std::size_t i = 0; i < max_seg; ++i) per_traj.emplace_back(Tensor({1, tspec.state_dim}));
    }

    for (auto& [name, tensor] : tensors) {
        if (name == "norm.mean") {
            out.stats.mean.assign(tensor.data(), tensor.data() + tensor.size());
        } else if (name == "norm.std") {
            out.stats.std_dev.assign(tensor.data(), tensor.data() + tensor.size());
        } else if (name == "norm.identity") {
            out.stats.identity = tensor.item() != 0.0;
        } else if (name.rfind("node.", 0) == 0) {
            const auto dot = name.find('.', 5);
            const std::size_t j = static_cast<std::size_t>(std::stoull(name.substr(5, dot - 5)));
            const std::size_t i = static_cast<std::size_t>(std::stoull(name.substr(dot + 1)));
            if (tensor.size() != tspec.state_dim)
                throw io_error("checkpoint: node " + name + " has wrong dimension");
            Variable& v = out.nodes.nodes[j][i];
            v.value = std::move(tensor);
            v.grad = Tensor(v.value.shape());
            v.name = name;
            ++loaded;
        } else {
            Variable* dst = out.params.find(name);
            if (dst == nullptr) throw io_error("checkpoint: unknown tensor " + name);
            if (!dst->value.same_shape(tensor))
                throw io_error("checkpoint: shape mismatch for " + name + " (file " + tensor.shape_str() +
                               ", spec " + dst->value.shape_str() + ")");
            dst->value = std::move(tensor);
            dst->zero_grad();
            ++loaded;
        }
    }
    if (loaded < out.params.tensors.size())
        throw io_error("checkpoint: missing model tensors in " + path);
    return out;
}

}  // namespace msid
