// msid: learn deterministic state-space models from noisy partial measurement
// sequences with multiple shooting, then filter and forecast with a UKF
// running on the learned networks.
//
// Subcommands: generate | train | eval | rollout | inspect
// Exit codes: 0 success, 2 usage/config error, 3 numerical abort.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "msid/msid.hpp"

namespace fs = std::filesystem;
using namespace msid;

namespace {

int resolve_threads(int flag_value) {
    if (const char* env = std::getenv("SSM_THREADS")) {
        const int parsed = std::atoi(env);
        if (parsed > 0) return parsed;
    }
    return flag_value > 0 ? flag_value : default_thread_count();
}

TrajectoryDataset generate_from_config(const ExperimentConfig& cfg, int threads) {
    if (cfg.system == "lorenz") return generate_dataset(cfg.lorenz_config(), cfg.trajectories, cfg.seed, threads);
    if (cfg.system == "pendulum")
        return generate_dataset(cfg.pendulum_config(), cfg.trajectories, cfg.seed, threads);
    throw std::invalid_argument("generate: system '" + cfg.system + "' cannot be generated");
}

int cmd_generate(const std::string& config_path, const std::string& out_path, int threads) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    cfg.validate();
    if (!out_path.empty() && fs::path(out_path).has_parent_path() &&
        !fs::exists(fs::path(out_path).parent_path()))
        throw std::invalid_argument("generate: output directory does not exist: " +
                                    fs::path(out_path).parent_path().string());
    TrajectoryDataset data = generate_from_config(cfg, threads);
    save_ssmt(out_path, data);
    std::cout << "wrote " << out_path << ": " << data.trajectory_count() << " trajectories, length "
              << data.length << ", measurement dim " << data.measurement_dim << ", noise std "
              << data.noise_std << (data.is_image ? ", image data" : "") << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out_dir,
              int threads) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    cfg.validate();
    fs::create_directories(out_dir);

    TrajectoryDataset raw = load_ssmt(data_path);
    auto [data, stats] = normalize(raw);
    Segmentation seg = segment(data.length, cfg.segment_len);

    TrainOptions options;
    options.threads = threads;
    const std::size_t stride = std::max<std::size_t>(1, cfg.schedule.epochs / 50);
    options.on_epoch = [&](const EpochRecord& r) {
        if (r.epoch % stride == 0 || r.epoch == 1 || r.epoch == cfg.schedule.epochs)
            std::printf("epoch %zu/%zu  fit %.6g  defect %.6g  alpha %g  lr %g\n", r.epoch,
                        cfg.schedule.epochs, r.fit, r.defect, r.alpha, r.lr);
    };

    TrainResult result = train(data, cfg.transition, cfg.observation, seg, cfg.node_init, cfg.schedule,
                               cfg.seed, options);

    const fs::path out(out_dir);
    save_checkpoint((out / "checkpoint.ssmp").string(), result.params, result.nodes, stats);
    result.history.write_csv((out / "history.csv").string());
    cfg.save((out / "config.json").string());
    std::cout << "wrote " << (out / "checkpoint.ssmp").string() << " and history.csv ("
              << result.history.epochs.size() << " epochs)\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& testset_path, const std::string& out_dir, long filter_len_flag,
             long horizon_flag, long dump_predictions, int threads) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    cfg.validate();
    fs::create_directories(out_dir);

    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path, cfg.transition, cfg.observation);
    TrajectoryDataset testset = load_ssmt(testset_path);
    if (testset.measurement_dim != cfg.observation.measurement_dim())
        throw std::invalid_argument("eval: checkpoint and test set measurement dims differ");
    const std::size_t filter_len = filter_len_flag > 0 ? static_cast<std::size_t>(filter_len_flag)
                                                       : cfg.filter_len;
    const std::size_t horizon = horizon_flag > 0 ? static_cast<std::size_t>(horizon_flag) : cfg.horizon;

    std::vector<Tensor> predictions, truths;
    PredictionReport report =
        evaluate_testset(ckpt.params, testset, ckpt.stats, cfg.ukf, filter_len, horizon, threads,
                         &predictions, &truths);

    const fs::path out(out_dir);
    report.write_csv((out / "report.csv").string());
    for (long j = 0; j < dump_predictions && j < static_cast<long>(predictions.size()); ++j) {
        write_trajectory_csv((out / ("predicted_" + std::to_string(j) + ".csv")).string(),
                             predictions[j], "y");
        write_trajectory_csv((out / ("true_" + std::to_string(j) + ".csv")).string(), truths[j], "y");
    }
    {
        std::ofstream os(out / "report.json");
        os << report.to_json().dump(2) << '\n';
    }
    std::cout << "mse " << report.mse;
    if (report.has_bce) std::cout << "  bce " << report.bce;
    std::cout << "  baseline_mse " << report.baseline_mse << "  (" << report.per_trajectory_mse.size()
              << " trajectories, filter " << filter_len << ", horizon " << horizon << ")\n";
    return 0;
}

int cmd_rollout(const std::string& config_path, const std::string& checkpoint_path, long node_index,
                long steps, const std::string& out_path) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    cfg.validate();
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path, cfg.transition, cfg.observation);
    const std::size_t total_nodes = ckpt.nodes.trajectory_count() * ckpt.nodes.segments;
    if (node_index < 0 || static_cast<std::size_t>(node_index) >= total_nodes)
        throw std::invalid_argument("rollout: node index out of range (have " +
                                    std::to_string(total_nodes) + " nodes)");
    const std::size_t j = static_cast<std::size_t>(node_index) / ckpt.nodes.segments;
    const std::size_t i = static_cast<std::size_t>(node_index) % ckpt.nodes.segments;

    // Divergence limit: ten times the largest node coordinate magnitude.
    double node_range = 0.0;
    for (const auto& per_traj : ckpt.nodes.nodes)
        for (const auto& node : per_traj)
            for (std::size_t c = 0; c < node.value.size(); ++c)
                node_range = std::max(node_range, std::fabs(node.value.at(c)));
    const double limit = 10.0 * std::max(node_range, 1e-9);

    ModelEvaluator model(ckpt.params);
    RolloutStats stats = attractor_rollout(model, ckpt.nodes.node(j, i).value,
                                           static_cast<std::size_t>(steps), limit);
    if (!out_path.empty()) write_trajectory_csv(out_path, stats.states, "x");

    std::cout << "rollout from node " << node_index << " (trajectory " << j << ", segment " << i
              << "), " << stats.steps_completed << " steps\n";
    for (std::size_t c = 0; c < stats.coord_min.size(); ++c)
        std::printf("coord %zu  min %.6g  max %.6g  mean %.6g\n", c, stats.coord_min[c],
                    stats.coord_max[c], stats.coord_mean[c]);
    if (stats.diverged) std::cout << "warning: rollout diverged (limit " << limit << ")\n";
    std::cout << "divergence " << (stats.diverged ? 1 : 0) << "\n";
    return 0;
}

int cmd_inspect(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw io_error("cannot open: " + path);
    char magic[4] = {};
    probe.read(magic, 4);
    probe.close();
    if (std::string(magic, 4) == "SSMT") {
        TrajectoryDataset d = load_ssmt(path);
        std::cout << "SSMT dataset: " << d.trajectory_count() << " trajectories, length " << d.length
                  << ", measurement dim " << d.measurement_dim << "\n"
                  << "ground truth: " << (d.has_ground_truth() ? "yes" : "no")
                  << ", image data: " << (d.is_image ? "yes" : "no") << ", noise std " << d.noise_std
                  << "\n";
        if (!d.stats.mean.empty() && d.measurement_dim <= 8) {
            std::cout << "channel stats (mean/std):";
            for (std::size_t c = 0; c < d.measurement_dim; ++c)
                std::printf(" %.4g/%.4g", d.stats.mean[c], d.stats.std_dev[c]);
            std::cout << "\n";
        }
        return 0;
    }
    if (std::string(magic, 4) == "SSMP") {
        auto tensors = load_ssmp(path);
        std::size_t node_count = 0, total = 0;
        for (const auto& [name, t] : tensors) {
            total += t.size();
            if (name.rfind("node.", 0) == 0) {
                ++node_count;
                continue;
            }
            std::cout << name << "  " << t.shape_str() << "\n";
        }
        std::cout << node_count << " shooting nodes, " << tensors.size() << " tensors, " << total
                  << " values total\n";
        return 0;
    }
    throw io_error("unrecognized file format: " + path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiple-shooting state-space model learning"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: hardware, SSM_THREADS overrides)");

    std::string config_path, data_path, out_path, checkpoint_path, testset_path;
    long node_index = 0, steps = 10000, filter_len = 0, horizon = 0;

    auto* generate = app.add_subcommand("generate", "simulate a dataset and write an SSMT file");
    generate->add_option("--config", config_path, "experiment config JSON")->required();
    generate->add_option("--out", out_path, "output SSMT path")->required();

    auto* train_cmd = app.add_subcommand("train", "train a model on an SSMT dataset");
    train_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    train_cmd->add_option("--data", data_path, "training SSMT file")->required();
    train_cmd->add_option("--out", out_path, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "filter + predict on a test set, write reports");
    eval_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    eval_cmd->add_option("--checkpoint", checkpoint_path, "SSMP checkpoint")->required();
    eval_cmd->add_option("--testset", testset_path, "test SSMT file")->required();
    eval_cmd->add_option("--out", out_path, "output directory")->required();
    eval_cmd->add_option("--filter-len", filter_len, "measurements consumed by the filter");
    eval_cmd->add_option("--horizon", horizon, "prediction steps scored after filtering");
    long dump_predictions = 0;
    eval_cmd->add_option("--dump-predictions", dump_predictions,
                         "write predicted/true CSVs for the first N test trajectories");

    auto* rollout_cmd = app.add_subcommand("rollout", "iterate the learned transition from a node");
    rollout_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    rollout_cmd->add_option("--checkpoint", checkpoint_path, "SSMP checkpoint")->required();
    rollout_cmd->add_option("--node", node_index, "flat node index (trajectory-major)");
    rollout_cmd->add_option("--steps", steps, "rollout length");
    rollout_cmd->add_option("--out", out_path, "trajectory CSV path");

    auto* inspect_cmd = app.add_subcommand("inspect", "print the header of an SSMT/SSMP file");
    std::string inspect_path;
    inspect_cmd->add_option("file", inspect_path, "file to inspect")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        const int n_threads = resolve_threads(threads);
        if (generate->parsed()) return cmd_generate(config_path, out_path, n_threads);
        if (train_cmd->parsed()) return cmd_train(config_path, data_path, out_path, n_threads);
        if (eval_cmd->parsed())
            return cmd_eval(config_path, checkpoint_path, testset_path, out_path, filter_len, horizon,
                            dump_predictions, n_threads);
        if (rollout_cmd->parsed())
            return cmd_rollout(config_path, checkpoint_path, node_index, steps, out_path);
        if (inspect_cmd->parsed()) return cmd_inspect(inspect_path);
    } catch (const numeric_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
