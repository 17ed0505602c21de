#pragma once

// Trajectory dataset container and the SSMT file format, little-endian:
//   magic "SSMT" | version u32 | N u64 | T u64 | dim u64 | flags u32
//   noise_std f64 | channel mean f64[dim] | channel std f64[dim]
//   measurements f32[N*T*dim]   trajectory-major, time-major
//   [ground truth f32[N*T*dim]] same layout, present when flag bit 0 is set
// flags: bit 0 = has ground truth, bit 1 = image data.
// Files always hold raw (unnormalized) measurements; the stored channel stats
// are the ones computed at generation time and are reused verbatim for
// normalization so that every consumer of a file sees identical inputs.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "msid/checkpoint.hpp"
#include "msid/common.hpp"
#include "msid/tensor.hpp"

namespace msid {

inline constexpr std::uint32_t kSsmtVersion = 1;

struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std_dev;
    bool identity = false;  // image data: pixels stay in [0, 1]

    bool empty() const { return mean.empty() && !identity; }
};

struct TrajectoryDataset {
    std::size_t length = 0;           // T
    std::size_t measurement_dim = 0;  // per-step measurement size
    bool is_image = false;
    bool normalized = false;
    double noise_std = 0.0;
    NormalizationStats stats;

    std::vector<Tensor> measurements;  // N tensors of shape [T, dim]
    std::vector<Tensor> ground_truth;  // optional noiseless copies, same layout
    std::vector<Tensor> true_states;   // optional, in-memory only, never serialized

    std::size_t trajectory_count() const { return measurements.size(); }
    bool has_ground_truth() const { return !ground_truth.empty(); }

    void validate() const {
        for (const auto& m : measurements)
            if (m.rows() != length || m.cols() != measurement_dim)
                throw std::invalid_argument("TrajectoryDataset: inconsistent sequence shape");
        if (has_ground_truth() && ground_truth.size() != measurements.size())
            throw std::invalid_argument("TrajectoryDataset: ground truth count mismatch");
    }
};

namespace detail {

inline NormalizationStats compute_stats(const TrajectoryDataset& data) {
    NormalizationStats stats;
    if (data.is_image) {
        stats.identity = true;
        stats.mean.assign(data.measurement_dim, 0.0);
        stats.std_dev.assign(data.measurement_dim, 1.0);
        return stats;
    }
    const std::size_t dim = data.measurement_dim;
    std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
    std::size_t count = 0;
    for (const auto& m : data.measurements) {
        for (std::size_t t = 0; t < m.rows(); ++t)
            for (std::size_t c = 0; c < dim; ++c) {
                sum[c] += m(t, c);
                sum_sq[c] += m(t, c) * m(t, c);
            }
        count += m.rows();
    }
    stats.mean.resize(dim);
    stats.std_dev.resize(dim);
    for (std::size_t c = 0; c < dim; ++c) {
        stats.mean[c] = sum[c] / static_cast<double>(count);
        const double var = sum_sq[c] / static_cast<double>(count) - stats.mean[c] * stats.mean[c];
        stats.std_dev[c] = std::sqrt(std::max(var, 0.0));
        if (stats.std_dev[c] <= 0.0)
            throw std::invalid_argument("normalize: zero-variance channel " + std::to_string(c));
    }
    return stats;
}

inline void apply_stats(Tensor& m, const NormalizationStats& stats, bool forward) {
    for (std::size_t t = 0; t < m.rows(); ++t)
        for (std::size_t c = 0; c < m.cols(); ++c)
            m(t, c) = forward ? (m(t, c) - stats.mean[c]) / stats.std_dev[c]
                              : m(t, c) * stats.std_dev[c] + stats.mean[c];
}

}  // namespace detail

// Centered, unit-variance channels for generic measurements; images are left
// in [0, 1]. Uses the dataset's attached stats when present (the generation
// run computed them) and derives them otherwise. Ground-truth channels are
// transformed with the same statistics.
inline std::pair<TrajectoryDataset, NormalizationStats> normalize(const TrajectoryDataset& data) {
    if (data.normalized) return {data, data.stats};
    TrajectoryDataset out = data;
    out.stats = data.stats.empty() ? detail::compute_stats(data) : data.stats;
    if (!out.stats.identity) {
        for (auto& m : out.measurements) detail::apply_stats(m, out.stats, true);
        for (auto& m : out.ground_truth) detail::apply_stats(m, out.stats, true);
    }
    out.normalized = true;
    return {out, out.stats};
}

inline TrajectoryDataset denormalize(const TrajectoryDataset& data) {
    if (!data.normalized) return data;
    TrajectoryDataset out = data;
    if (!out.stats.identity) {
        for (auto& m : out.measurements) detail::apply_stats(m, out.stats, false);
        for (auto& m : out.ground_truth) detail::apply_stats(m, out.stats, false);
    }
    out.normalized = false;
    return out;
}

inline Tensor denormalize_rows(const Tensor& rows, const NormalizationStats& stats) {
    Tensor out = rows;
    if (!stats.identity) detail::apply_stats(out, stats, false);
    return out;
}

inline Tensor normalize_rows(const Tensor& rows, const NormalizationStats& stats) {
    Tensor out = rows;
    if (!stats.identity) detail::apply_stats(out, stats, true);
    return out;
}

inline void save_ssmt(const std::string& path, const TrajectoryDataset& data) {
    if (data.normalized)
        throw std::invalid_argument("save_ssmt: datasets are stored raw; denormalize first");
    data.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open for writing: " + path);
    os.write("SSMT", 4);
    detail::write_pod<std::uint32_t>(os, kSsmtVersion);
    detail::write_pod<std::uint64_t>(os, data.trajectory_count());
    detail::write_pod<std::uint64_t>(os, data.length);
    detail::write_pod<std::uint64_t>(os, data.measurement_dim);
    std::uint32_t flags = 0;
    if (data.has_ground_truth()) flags |= 1u;
    if (data.is_image) flags |= 2u;
    detail::write_pod<std::uint32_t>(os, flags);
    detail::write_pod<double>(os, data.noise_std);
    NormalizationStats stats = data.stats.empty() ? detail::compute_stats(data) : data.stats;
    for (std::size_t c = 0; c < data.measurement_dim; ++c) detail::write_pod<double>(os, stats.mean[c]);
    for (std::size_t c = 0; c < data.measurement_dim; ++c) detail::write_pod<double>(os, stats.std_dev[c]);
    auto write_block = [&](const std::vector<Tensor>& block) {
        std::vector<float> row(data.measurement_dim);
        for (const auto& m : block)
            for (std::size_t t = 0; t < m.rows(); ++t) {
                for (std::size_t c = 0; c < m.cols(); ++c) row[c] = static_cast<float>(m(t, c));
                os.write(reinterpret_cast<const char*>(row.data()),
                         static_cast<std::streamsize>(row.size() * sizeof(float)));
            }
    };
    write_block(data.measurements);
    if (data.has_ground_truth()) write_block(data.ground_truth);
    if (!os) throw io_error("write failed: " + path);
}

inline TrajectoryDataset load_ssmt(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SSMT", 4) != 0) throw io_error("not an SSMT file: " + path);
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != kSsmtVersion) throw io_error("unsupported SSMT version " + std::to_string(version));
    TrajectoryDataset data;
    const auto n = detail::read_pod<std::uint64_t>(is);
    data.length = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));
    data.measurement_dim = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));
    const auto flags = detail::read_pod<std::uint32_t>(is);
    data.is_image = (flags & 2u) != 0;
    data.noise_std = detail::read_pod<double>(is);
    data.stats.identity = data.is_image;
    data.stats.mean.resize(data.measurement_dim);
    data.stats.std_dev.resize(data.measurement_dim);
    for (auto& v : data.stats.mean) v = detail::read_pod<double>(is);
    for (auto& v : data.stats.std_dev) v = detail::read_pod<double>(is);
    auto read_block = [&](std::vector<Tensor>& block) {
        block.reserve(n);
        std::vector<float> row(data.measurement_dim);
        for (std::uint64_t j = 0; j < n; ++j) {
            Tensor m({data.length, data.measurement_dim});
            for (std::size_t t = 0; t < data.length; ++t) {
                is.read(reinterpret_cast<char*>(row.data()),
                        static_cast<std::streamsize>(row.size() * sizeof(float)));
                for (std::size_t c = 0; c < data.measurement_dim; ++c) m(t, c) = row[c];
            }
            block.push_back(std::move(m));
        }
    };
    read_block(data.measurements);
    if (flags & 1u) read_block(data.ground_truth);
    if (!is) throw io_error("truncated SSMT file: " + path);
    return data;
}

}  // namespace msid
