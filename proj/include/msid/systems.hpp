#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "msid/common.hpp"
#include "msid/dataset.hpp"
#include "msid/rng.hpp"
#include "msid/tensor.hpp"

namespace msid {

// Classical fourth-order Runge-Kutta step for a fixed-size autonomous system.
template <std::size_t N, typename Rhs>
std::array<double, N> rk4_step(const Rhs& rhs, const std::array<double, N>& state, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be positive");
    std::array<double, N> k1 = rhs(state);
    std::array<double, N> mid;
    for (std::size_t i = 0; i < N; ++i) mid[i] = state[i] + 0.5 * dt * k1[i];
    std::array<double, N> k2 = rhs(mid);
    for (std::size_t i = 0; i < N; ++i) mid[i] = state[i] + 0.5 * dt * k2[i];
    std::array<double, N> k3 = rhs(mid);
    for (std::size_t i = 0; i < N; ++i) mid[i] = state[i] + dt * k3[i];
    std::array<double, N> k4 = rhs(mid);
    std::array<double, N> out;
    for (std::size_t i = 0; i < N; ++i)
        out[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Lorenz system
// ---------------------------------------------------------------------------

struct LorenzConfig {
    double sigma = 10.0;
    double beta = 8.0 / 3.0;
    double rho = 28.0;
    double dt = 0.005;
    std::size_t horizon = 10000;  // measurements per trajectory
    double init_lo = -10.0;
    double init_hi = 10.0;    // initial state uniform per coordinate
    double noise_std = 2.5;   // measurement noise on the x coordinate
};

inline std::array<double, 3> lorenz_rhs(const std::array<double, 3>& s, const LorenzConfig& cfg = {}) {
    return {cfg.sigma * (s[1] - s[0]), s[0] * (cfg.rho - s[2]) - s[1], s[0] * s[1] - cfg.beta * s[2]};
}

// The scalar measurement is the x coordinate; ground truth keeps the noiseless
// channel and true_states keeps the full simulated state for diagnostics.
inline TrajectoryDataset generate_dataset(const LorenzConfig& cfg, std::size_t n_traj, std::uint64_t seed,
                                          int threads = 1) {
    if (n_traj == 0) throw std::invalid_argument("generate_dataset: need at least one trajectory");
    TrajectoryDataset data;
    data.length = cfg.horizon;
    data.measurement_dim = 1;
    data.noise_std = cfg.noise_std;
    data.measurements.assign(n_traj, Tensor());
    data.ground_truth.assign(n_traj, Tensor());
    data.true_states.assign(n_traj, Tensor());
    auto rhs = [&cfg](const std::array<double, 3>& s) { return lorenz_rhs(s, cfg); };
    parallel_for(n_traj, threads, [&](std::size_t j) {
        Rng rng = Rng::stream(seed, /*purpose=*/0x10E2, j);
        std::array<double, 3> s;
        for (auto& v : s) v = rng.uniform(cfg.init_lo, cfg.init_hi);
        Tensor noisy({cfg.horizon, 1});
        Tensor clean({cfg.horizon, 1});
        Tensor states({cfg.horizon, 3});
        for (std::size_t t = 0; t < cfg.horizon; ++t) {
            clean(t, 0) = s[0];
            noisy(t, 0) = s[0] + rng.normal(0.0, cfg.noise_std);
            for (std::size_t c = 0; c < 3; ++c) states(t, c) = s[c];
            s = rk4_step(rhs, s, cfg.dt);
        }
        data.measurements[j] = std::move(noisy);
        data.ground_truth[j] = std::move(clean);
        data.true_states[j] = std::move(states);
    });
    data.stats = detail::compute_stats(data);
    return data;
}

// ---------------------------------------------------------------------------
// Simple pendulum observed through rendered images
// ---------------------------------------------------------------------------

struct PendulumConfig {
    double dt = 0.1;
    std::size_t horizon = 100;
    double gravity_over_length = 9.81;
    std::size_t image_size = 24;
    double noise_std = 0.2;  // pixel noise, pixels in [0, 1]
    double theta_lo = -3.14159265358979323846;
    double theta_hi = 3.14159265358979323846;
    double omega_lo = -1.0;
    double omega_hi = 1.0;
};

// One output step of theta'' = -(g/l) sin(theta). Ten RK4 substeps per output
// step keep the energy drift over a 100-step trajectory below 1e-6 even for
// near-separatrix initial conditions; the angle is never wrapped here.
inline std::array<double, 2> pendulum_step(const std::array<double, 2>& state, double dt,
                                           double gravity_over_length = 9.81) {
    if (dt <= 0.0) throw std::invalid_argument("pendulum_step: dt must be positive");
    auto rhs = [gravity_over_length](const std::array<double, 2>& s) -> std::array<double, 2> {
        return {s[1], -gravity_over_length * std::sin(s[0])};
    };
    std::array<double, 2> s = state;
    const int substeps = 10;
    for (int i = 0; i < substeps; ++i) s = rk4_step(rhs, s, dt / substeps);
    return s;
}

inline double pendulum_energy(const std::array<double, 2>& state, double gravity_over_length = 9.81) {
    return 0.5 * state[1] * state[1] - gravity_over_length * std::cos(state[0]);
}

// Anti-aliased disc on a black background. The bob sits at
//   center + 0.8 * (size/2 - radius) * (sin t, cos t)
// with +y pointing down, radius size/6, one-pixel linear edge falloff, and
// pixels sampled at their centers. theta = 0 renders at the bottom.
inline Tensor render_pendulum(double theta, std::size_t size) {
    if (size < 8) throw std::invalid_argument("render_pendulum: size must be at least 8");
    const double radius = static_cast<double>(size) / 6.0;
    const double half = static_cast<double>(size) / 2.0;
    const double arm = 0.8 * (half - radius);
    const double cx = half + arm * std::sin(theta);
    const double cy = half + arm * std::cos(theta);
    Tensor img({size, size});
    for (std::size_t r = 0; r < size; ++r) {
        const double py = static_cast<double>(r) + 0.5;
        for (std::size_t c = 0; c < size; ++c) {
            const double px = static_cast<double>(c) + 0.5;
            const double dist = std::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy));
            img(r, c) = std::min(1.0, std::max(0.0, radius + 0.5 - dist));
        }
    }
    return img;
}

inline TrajectoryDataset generate_dataset(const PendulumConfig& cfg, std::size_t n_traj, std::uint64_t seed,
                                          int threads = 1) {
    if (n_traj == 0) throw std::invalid_argument("generate_dataset: need at least one trajectory");
    const std::size_t pixels = cfg.image_size * cfg.image_size;
    TrajectoryDataset data;
    data.length = cfg.horizon;
    data.measurement_dim = pixels;
    data.is_image = true;
    data.noise_std = cfg.noise_std;
    data.measurements.assign(n_traj, Tensor());
    data.ground_truth.assign(n_traj, Tensor());
    data.true_states.assign(n_traj, Tensor());
    parallel_for(n_traj, threads, [&](std::size_t j) {
        Rng rng = Rng::stream(seed, /*purpose=*/0x93D0, j);
        std::array<double, 2> s = {rng.uniform(cfg.theta_lo, cfg.theta_hi),
                                   rng.uniform(cfg.omega_lo, cfg.omega_hi)};
        Tensor noisy({cfg.horizon, pixels});
        Tensor clean({cfg.horizon, pixels});
        Tensor states({cfg.horizon, 2});
        for (std::size_t t = 0; t < cfg.horizon; ++t) {
            Tensor frame = render_pendulum(s[0], cfg.image_size);
            for (std::size_t i = 0; i < pixels; ++i) {
                clean(t, i) = frame.at(i);
                noisy(t, i) = frame.at(i) + rng.normal(0.0, cfg.noise_std);
            }
            states(t, 0) = s[0];
            states(t, 1) = s[1];
            s = pendulum_step(s, cfg.dt, cfg.gravity_over_length);
        }
        data.measurements[j] = std::move(noisy);
        data.ground_truth[j] = std::move(clean);
        data.true_states[j] = std::move(states);
    });
    data.stats = detail::compute_stats(data);
    return data;
}

}  // namespace msid
