#pragma once

// Flat JSON experiment configuration. Every key is optional with a documented
// default; unknown keys are hard errors so hyperparameter typos cannot pass
// silently. The resolved configuration (defaults applied) serializes back to
// the same schema and reloads identically.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "msid/common.hpp"
#include "msid/models.hpp"
#include "msid/optim.hpp"
#include "msid/shooting.hpp"
#include "msid/systems.hpp"
#include "msid/ukf.hpp"

namespace msid {

struct ExperimentConfig {
    std::string system = "lorenz";  // lorenz | pendulum | external-file
    std::uint64_t seed = 0;

    // dataset generation
    std::size_t trajectories = 100;
    std::size_t length = 1000;
    double noise_std = -1.0;  // -1: system default (lorenz 2.5, pendulum 0.2)
    double dt = -1.0;         // -1: system default (lorenz 0.005, pendulum 0.1)
    std::size_t image_size = 24;
    double gravity_over_length = 9.81;

    TransitionSpec transition;
    ObservationSpec observation;

    std::size_t segment_len = 50;
    NodeInit node_init = NodeInit::kMeasurementPrefix;

    TrainSchedule schedule;
    UkfConfig ukf;

    std::size_t filter_len = 1990;
    std::size_t horizon = 10;

    double resolved_noise_std() const {
        if (noise_std >= 0.0) return noise_std;
        return system == "pendulum" ? 0.2 : 2.5;
    }
    double resolved_dt() const {
        if (dt > 0.0) return dt;
        return system == "pendulum" ? 0.1 : 0.005;
    }

    LorenzConfig lorenz_config() const {
        LorenzConfig cfg;
        cfg.dt = resolved_dt();
        cfg.horizon = length;
        cfg.noise_std = resolved_noise_std();
        return cfg;
    }

    PendulumConfig pendulum_config() const {
        PendulumConfig cfg;
        cfg.dt = resolved_dt();
        cfg.horizon = length;
        cfg.image_size = image_size;
        cfg.noise_std = resolved_noise_std();
        cfg.gravity_over_length = gravity_over_length;
        return cfg;
    }

    void validate() const {
        if (system != "lorenz" && system != "pendulum" && system != "external-file")
            throw std::invalid_argument("config: unknown system '" + system + "'");
        transition.validate();
        observation.validate(transition.state_dim);
        schedule.validate();
        if (length % segment_len != 0)
            throw std::invalid_argument("config: segment_len must divide length");
    }

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    static ExperimentConfig load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw io_error("cannot open config: " + path);
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config: invalid JSON in " + path + ": " + e.what());
        }
        return from_json(j);
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw io_error("cannot open for writing: " + path);
        os << to_json().dump(2) << '\n';
    }
};

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "system",        "seed",          "trajectories",    "length",
        "noise_std",     "dt",            "image_size",      "gravity_over_length",
        "transition",    "state_dim",     "hidden",          "mixtures",
        "beta_hidden",   "observation",   "projection",      "decoder_hidden",
        "decoder_output_dim",             "segment_len",     "node_init",
        "epochs",        "bump_epoch",    "second_decay_epoch",
        "alpha0",        "alpha_tilde",   "lr",              "lr_decay",
        "batch_size",    "ukf_alpha",     "ukf_beta",        "ukf_kappa",
        "ukf_init_cov",  "ukf_meas_var",  "ukf_process_var", "filter_len",
        "horizon",
    };
    for (const auto& [key, value] : j.items())
        if (known.find(key) == known.end())
            throw std::invalid_argument("config: unknown key '" + key + "'");

    ExperimentConfig c;
    auto get = [&](const char* key, auto& dst) {
        if (j.contains(key)) dst = j.at(key).template get<std::decay_t<decltype(dst)>>();
    };
    get("system", c.system);
    get("seed", c.seed);
    get("trajectories", c.trajectories);
    get("length", c.length);
    get("noise_std", c.noise_std);
    get("dt", c.dt);
    get("image_size", c.image_size);
    get("gravity_over_length", c.gravity_over_length);

    // system-dependent defaults before explicit keys override them
    if (c.system == "pendulum") {
        c.transition.state_dim = 3;
        c.observation.kind = ObservationKind::kMlpDecoder;
        c.observation.output_dim = c.image_size * c.image_size;
        c.node_init = NodeInit::kZeros;
        c.filter_len = 50;
        c.horizon = 50;
    } else {
        c.observation.kind = ObservationKind::kProjection;
        c.observation.projection = {0};
    }

    if (j.contains("transition")) {
        const std::string t = j.at("transition").get<std::string>();
        if (t == "locally_linear")
            c.transition.kind = TransitionKind::kLocallyLinear;
        else if (t == "fully_connected")
            c.transition.kind = TransitionKind::kFullyConnected;
        else
            throw std::invalid_argument("config: unknown transition '" + t + "'");
    }
    get("state_dim", c.transition.state_dim);
    if (j.contains("hidden")) c.transition.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    get("mixtures", c.transition.mixtures);
    get("beta_hidden", c.transition.beta_hidden);

    if (j.contains("observation")) {
        const std::string o = j.at("observation").get<std::string>();
        if (o == "projection")
            c.observation.kind = ObservationKind::kProjection;
        else if (o == "mlp_decoder")
            c.observation.kind = ObservationKind::kMlpDecoder;
        else
            throw std::invalid_argument("config: unknown observation '" + o + "'");
    }
    if (j.contains("projection"))
        c.observation.projection = j.at("projection").get<std::vector<std::size_t>>();
    if (j.contains("decoder_hidden"))
        c.observation.hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
    get("decoder_output_dim", c.observation.output_dim);

    get("segment_len", c.segment_len);
    if (j.contains("node_init")) {
        const std::string n = j.at("node_init").get<std::string>();
        if (n == "zeros")
            c.node_init = NodeInit::kZeros;
        else if (n == "measurement_prefix")
            c.node_init = NodeInit::kMeasurementPrefix;
        else
            throw std::invalid_argument("config: unknown node_init '" + n + "'");
    }

    get("epochs", c.schedule.epochs);
    get("bump_epoch", c.schedule.penalty_bump_epoch);
    get("second_decay_epoch", c.schedule.second_decay_epoch);
    get("alpha0", c.schedule.initial_alpha);
    get("alpha_tilde", c.schedule.alpha_tilde);
    get("lr", c.schedule.initial_lr);
    get("lr_decay", c.schedule.decay_factor);
    get("batch_size", c.schedule.batch_size);

    get("ukf_alpha", c.ukf.alpha);
    get("ukf_beta", c.ukf.beta);
    get("ukf_kappa", c.ukf.kappa);
    get("ukf_init_cov", c.ukf.init_cov);
    get("ukf_meas_var", c.ukf.meas_var);
    get("ukf_process_var", c.ukf.process_var);
    get("filter_len", c.filter_len);
    get("horizon", c.horizon);
    return c;
}

inline nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["system"] = system;
    j["seed"] = seed;
    j["trajectories"] = trajectories;
    j["length"] = length;
    j["noise_std"] = resolved_noise_std();
    j["dt"] = resolved_dt();
    j["image_size"] = image_size;
    j["gravity_over_length"] = gravity_over_length;
    j["transition"] = transition.kind == TransitionKind::kLocallyLinear ? "locally_linear"
                                                                        : "fully_connected";
    j["state_dim"] = transition.state_dim;
    j["hidden"] = transition.hidden;
    j["mixtures"] = transition.mixtures;
    j["beta_hidden"] = transition.beta_hidden;
    j["observation"] =
        observation.kind == ObservationKind::kProjection ? "projection" : "mlp_decoder";
    j["projection"] = observation.projection;
    j["decoder_hidden"] = observation.hidden;
    j["decoder_output_dim"] = observation.output_dim;
    j["segment_len"] = segment_len;
    j["node_init"] = node_init == NodeInit::kZeros ? "zeros" : "measurement_prefix";
    j["epochs"] = schedule.epochs;
    j["bump_epoch"] = schedule.penalty_bump_epoch;
    j["second_decay_epoch"] = schedule.second_decay_epoch;
    j["alpha0"] = schedule.initial_alpha;
    j["alpha_tilde"] = schedule.alpha_tilde;
    j["lr"] = schedule.initial_lr;
    j["lr_decay"] = schedule.decay_factor;
    j["batch_size"] = schedule.batch_size;
    j["ukf_alpha"] = ukf.alpha;
    j["ukf_beta"] = ukf.beta;
    j["ukf_kappa"] = ukf.kappa;
    j["ukf_init_cov"] = ukf.init_cov;
    j["ukf_meas_var"] = ukf.meas_var;
    j["ukf_process_var"] = ukf.process_var;
    j["filter_len"] = filter_len;
    j["horizon"] = horizon;
    return j;
}

}  // namespace msid
