#pragma once

// Prediction rollouts, MSE/BCE metrics against noiseless ground truth, the
// filter-then-predict test protocol, and long free-rollout diagnostics.
// Metrics are always computed in de-normalized measurement units.

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "msid/common.hpp"
#include "msid/dataset.hpp"
#include "msid/models.hpp"
#include "msid/ukf.hpp"

namespace msid {

struct PredictionReport {
    double mse = 0.0;
    double mse_std = 0.0;  // spread across trajectories
    double bce = 0.0;
    double bce_std = 0.0;
    bool has_bce = false;
    bool per_pixel_bce = true;  // false: summed over pixels per frame
    double baseline_mse = std::numeric_limits<double>::quiet_NaN();  // last-measurement-hold
    std::size_t horizon = 0;
    std::size_t filter_len = 0;
    bool denormalized = true;
    std::vector<double> per_trajectory_mse;
    std::vector<double> per_trajectory_bce;

    void write_csv(std::ostream& os) const {
        os << "trajectory,mse" << (has_bce ? ",bce" : "") << '\n';
        os.precision(17);
        os << "aggregate," << mse;
        if (has_bce) os << ',' << bce;
        os << '\n';
        for (std::size_t j = 0; j < per_trajectory_mse.size(); ++j) {
            os << j << ',' << per_trajectory_mse[j];
            if (has_bce) os << ',' << per_trajectory_bce[j];
            os << '\n';
        }
    }

    void write_csv(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw io_error("cannot open for writing: " + path);
        write_csv(os);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["mse"] = mse;
        j["mse_std"] = mse_std;
        if (has_bce) {
            j["bce"] = bce;
            j["bce_std"] = bce_std;
            j["bce_per_pixel"] = per_pixel_bce;
        }
        if (std::isfinite(baseline_mse)) j["baseline_mse"] = baseline_mse;
        j["trajectories"] = per_trajectory_mse.size();
        j["horizon"] = horizon;
        j["filter_len"] = filter_len;
        j["denormalized"] = denormalized;
        return j;
    }
};

// [g(f(x)), g(f^2(x)), ..., g(f^k(x))] as a [k, p] matrix.
inline Tensor rollout_predict(ModelEvaluator& model, const Tensor& state, std::size_t k) {
    if (k == 0) throw std::invalid_argument("rollout_predict: horizon must be at least 1");
    Tensor x = state;
    Tensor out;
    for (std::size_t step = 1; step <= k; ++step) {
        try {
            x = model.transition(x);
        } catch (const numeric_error& e) {
            throw numeric_error("rollout_predict: non-finite state at step " + std::to_string(step) +
                                ": " + e.what());
        }
        Tensor y = model.observe(x);
        if (out.empty()) out = Tensor({k, y.cols()});
        for (std::size_t c = 0; c < y.cols(); ++c) out(step - 1, c) = y(0, c);
    }
    return out;
}

// Average MSE (and, for data in [0,1], BCE) over the total number of elements
// and frames, per trajectory plus the aggregate mean across trajectories.
inline PredictionReport prediction_error(const std::vector<Tensor>& predictions,
                                         const std::vector<Tensor>& ground_truth, bool with_bce,
                                         bool per_pixel_bce = true, double bce_clamp = 1e-7) {
    if (predictions.size() != ground_truth.size() || predictions.empty())
        throw std::invalid_argument("prediction_error: trajectory count mismatch");
    PredictionReport report;
    report.has_bce = with_bce;
    report.per_pixel_bce = per_pixel_bce;
    report.horizon = predictions[0].rows();
    for (std::size_t j = 0; j < predictions.size(); ++j) {
        const Tensor& pred = predictions[j];
        const Tensor& truth = ground_truth[j];
        if (!pred.same_shape(truth))
            throw std::invalid_argument("prediction_error: shape mismatch on trajectory " +
                                        std::to_string(j));
        double se = 0.0, ce = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred.at(i) - truth.at(i);
            se += d * d;
            if (with_bce) {
                const double p = std::min(std::max(pred.at(i), bce_clamp), 1.0 - bce_clamp);
                ce += -(truth.at(i) * std::log(p) + (1.0 - truth.at(i)) * std::log(1.0 - p));
            }
        }
        report.per_trajectory_mse.push_back(se / static_cast<double>(pred.size()));
        if (with_bce) {
            const double denom = per_pixel_bce ? static_cast<double>(pred.size())
                                               : static_cast<double>(pred.rows());
            report.per_trajectory_bce.push_back(ce / denom);
        }
    }
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        sd = 0.0;
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
    };
    mean_std(report.per_trajectory_mse, report.mse, report.mse_std);
    if (with_bce) mean_std(report.per_trajectory_bce, report.bce, report.bce_std);
    return report;
}

// Filter the first filter_len measurements of each test trajectory with the
// UKF, then predict `horizon` further measurements from the final belief mean
// and score them against the noiseless ground truth. The trivial predictor
// that holds the last seen measurement is scored alongside as baseline_mse.
inline PredictionReport evaluate_testset(ModelParameters& params, const TrajectoryDataset& testset,
                                         const NormalizationStats& train_stats, const UkfConfig& ukf_cfg,
                                         std::size_t filter_len, std::size_t horizon, int threads = 1,
                                         std::vector<Tensor>* keep_predictions = nullptr,
                                         std::vector<Tensor>* keep_truths = nullptr) {
    if (!testset.has_ground_truth())
        throw std::invalid_argument(
            "evaluate_testset: dataset has no noiseless ground-truth block; metrics would be "
            "computed against noise");
    if (testset.normalized)
        throw std::invalid_argument("evaluate_testset: pass the raw test set; it is normalized "
                                    "internally with the training statistics");
    if (filter_len == 0 || horizon == 0 || filter_len + horizon > testset.length)
        throw std::invalid_argument("evaluate_testset: filter_len + horizon must fit in the sequence");

    const std::size_t n = testset.trajectory_count();
    const std::size_t p = testset.measurement_dim;
    std::vector<Tensor> predictions(n);
    std::vector<Tensor> truths(n);
    double baseline_acc = 0.0;
    std::vector<double> baselines(n, 0.0);

    parallel_for(n, threads, [&](std::size_t j) {
        ModelEvaluator model(params);
        Tensor window({filter_len, p});
        for (std::size_t t = 0; t < filter_len; ++t)
            for (std::size_t c = 0; c < p; ++c) window(t, c) = testset.measurements[j](t, c);
        Tensor normalized = normalize_rows(window, train_stats);
        auto beliefs = filter_sequence(model, params.observation, params.transition.state_dim,
                                       normalized, ukf_cfg);
        Tensor predicted = rollout_predict(model, beliefs.back().mean, horizon);
        predictions[j] = denormalize_rows(predicted, train_stats);

        Tensor truth({horizon, p});
        for (std::size_t h = 0; h < horizon; ++h)
            for (std::size_t c = 0; c < p; ++c) truth(h, c) = testset.ground_truth[j](filter_len + h, c);
        truths[j] = std::move(truth);

        double base_se = 0.0;
        for (std::size_t h = 0; h < horizon; ++h)
            for (std::size_t c = 0; c < p; ++c) {
                const double d = testset.measurements[j](filter_len - 1, c) - truths[j](h, c);
                base_se += d * d;
            }
        baselines[j] = base_se / static_cast<double>(horizon * p);
    });
    for (std::size_t j = 0; j < n; ++j) baseline_acc += baselines[j];

    PredictionReport report = prediction_error(predictions, truths, testset.is_image);
    report.baseline_mse = baseline_acc / static_cast<double>(n);
    report.filter_len = filter_len;
    if (keep_predictions) *keep_predictions = std::move(predictions);
    if (keep_truths) *keep_truths = std::move(truths);
    return report;
}

struct RolloutStats {
    Tensor states;  // [steps+1, d] including the start node
    std::vector<double> coord_min, coord_max, coord_mean;
    bool diverged = false;
    std::size_t steps_completed = 0;
};

// Free rollout of the transition map. Divergence (a coordinate beyond
// divergence_limit, or a non-finite state) is reported, never thrown.
inline RolloutStats attractor_rollout(ModelEvaluator& model, const Tensor& node, std::size_t steps,
                                      double divergence_limit = std::numeric_limits<double>::infinity()) {
    if (node.rank() != 2 || node.rows() != 1)
        throw std::invalid_argument("attractor_rollout: node must be [1, d]");
    const std::size_t d = node.cols();
    RolloutStats stats;
    stats.states = Tensor({steps + 1, d});
    stats.coord_min.assign(d, std::numeric_limits<double>::infinity());
    stats.coord_max.assign(d, -std::numeric_limits<double>::infinity());
    stats.coord_mean.assign(d, 0.0);

    Tensor x = node;
    std::size_t recorded = 0;
    for (std::size_t t = 0; t <= steps; ++t) {
        for (std::size_t c = 0; c < d; ++c) {
            const double v = x(0, c);
            stats.states(t, c) = v;
            stats.coord_min[c] = std::min(stats.coord_min[c], v);
            stats.coord_max[c] = std::max(stats.coord_max[c], v);
            stats.coord_mean[c] += v;
            if (std::fabs(v) > divergence_limit) stats.diverged = true;
        }
        ++recorded;
        if (t == steps) break;
        try {
            x = model.transition(x);
        } catch (const numeric_error&) {
            stats.diverged = true;
            break;
        }
    }
    stats.steps_completed = recorded - 1;
    for (std::size_t c = 0; c < d; ++c) stats.coord_mean[c] /= static_cast<double>(recorded);
    if (recorded <= steps) {  // truncated: shrink the state matrix
        Tensor trimmed({recorded, d});
        for (std::size_t t = 0; t < recorded; ++t)
            for (std::size_t c = 0; c < d; ++c) trimmed(t, c) = stats.states(t, c);
        stats.states = std::move(trimmed);
    }
    return stats;
}

// Trajectory CSV: t,c0,c1,... one row per step.
inline void write_trajectory_csv(const std::string& path, const Tensor& rows,
                                 const std::string& prefix = "c") {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("cannot open for writing: " + path);
    os << "t";
    for (std::size_t c = 0; c < rows.cols(); ++c) os << ',' << prefix << c;
    os << '\n';
    os.precision(17);
    for (std::size_t t = 0; t < rows.rows(); ++t) {
        os << t;
        for (std::size_t c = 0; c < rows.cols(); ++c) os << ',' << rows(t, c);
        os << '\n';
    }
}

}  // namespace msid
