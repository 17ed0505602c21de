#pragma once

// Unscented Kalman filter in the additive-noise form, running latent-state
// inference directly through the learned transition and observation maps.
// Everything operates on normalized measurements.

#include <cmath>
#include <functional>
#include <vector>

#include "msid/linalg.hpp"
#include "msid/models.hpp"
#include "msid/tensor.hpp"

namespace msid {

struct GaussianBelief {
    Tensor mean;        // [1, d]
    Tensor covariance;  // [d, d], kept symmetric PSD
};

struct UkfConfig {
    double alpha = 1e-3;  // sigma point spread
    double beta = 2.0;    // prior distribution weighting (Gaussian: 2)
    double kappa = 0.0;
    double init_cov = 0.1;      // initial covariance scale (0.1 I)
    double meas_var = 0.5;      // R = meas_var I
    double process_var = 1e-6;  // Q = process_var I
    double eig_floor = 1e-12;
};

struct SigmaPoints {
    Tensor points;  // [2d+1, d], one point per row; row 0 is the mean
    std::vector<double> mean_weights;
    std::vector<double> cov_weights;
};

namespace detail {

// Covariance conditioning before a Cholesky: symmetrize, and for the small
// matrices of the filter also floor the eigenvalues. Large innovation
// covariances (image observations) skip the eigen floor -- the additive R
// already regularizes them -- and fall back to escalating diagonal jitter.
inline Tensor spd_sqrt(const Tensor& cov, double eig_floor) {
    Tensor prepared = cov.rows() <= 32 ? floor_spd(cov, eig_floor) : symmetrize(cov);
    double trace = 0.0;
    for (std::size_t i = 0; i < prepared.rows(); ++i) trace += prepared(i, i);
    double jitter = std::max(trace / static_cast<double>(prepared.rows()), 1.0) * 1e-14;
    for (int attempt = 0; attempt < 4; ++attempt) {
        try {
            return cholesky(prepared);
        } catch (const numeric_error&) {
            for (std::size_t i = 0; i < prepared.rows(); ++i) prepared(i, i) += jitter;
            jitter *= 100.0;
        }
    }
    return cholesky(prepared);  // let the failure propagate
}

}  // namespace detail

// Scaled unscented transform: lambda = alpha^2 (d + kappa) - d, point 0 at the
// mean, points +-i at mean +- sqrt(d + lambda) * column i of chol(cov).
inline SigmaPoints sigma_points(const GaussianBelief& belief, const UkfConfig& cfg) {
    const std::size_t d = belief.mean.cols();
    if (belief.covariance.rows() != d || belief.covariance.cols() != d)
        throw std::invalid_argument("sigma_points: covariance shape mismatch");
    const double lambda = cfg.alpha * cfg.alpha * (static_cast<double>(d) + cfg.kappa) -
                          static_cast<double>(d);
    const double scale = std::sqrt(static_cast<double>(d) + lambda);
    Tensor l = detail::spd_sqrt(belief.covariance, cfg.eig_floor);

    SigmaPoints sp;
    sp.points = Tensor({2 * d + 1, d});
    for (std::size_t c = 0; c < d; ++c) sp.points(0, c) = belief.mean(0, c);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t c = 0; c < d; ++c) {
            const double offset = scale * l(c, i);  // column i of L
            sp.points(1 + i, c) = belief.mean(0, c) + offset;
            sp.points(1 + d + i, c) = belief.mean(0, c) - offset;
        }
    sp.mean_weights.assign(2 * d + 1, 1.0 / (2.0 * (static_cast<double>(d) + lambda)));
    sp.cov_weights = sp.mean_weights;
    sp.mean_weights[0] = lambda / (static_cast<double>(d) + lambda);
    sp.cov_weights[0] = sp.mean_weights[0] + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    return sp;
}

namespace detail {

inline Tensor weighted_mean(const Tensor& rows, const std::vector<double>& w) {
    Tensor mean({1, rows.cols()});
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t c = 0; c < rows.cols(); ++c) mean(0, c) += w[i] * rows(i, c);
    return mean;
}

inline Tensor weighted_outer(const Tensor& a, const Tensor& mean_a, const Tensor& b,
                             const Tensor& mean_b, const std::vector<double>& w) {
    Tensor out({a.cols(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double wi = w[i];
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double da = wi * (a(i, p) - mean_a(0, p));
            for (std::size_t q = 0; q < b.cols(); ++q) out(p, q) += da * (b(i, q) - mean_b(0, q));
        }
    }
    return out;
}

}  // namespace detail

// Propagates the belief through the transition map (applied to all sigma
// points stacked as rows) and adds the process noise Q.
template <typename TransitionFn>
GaussianBelief ukf_predict(const GaussianBelief& belief, TransitionFn&& f, const UkfConfig& cfg) {
    SigmaPoints sp = sigma_points(belief, cfg);
    Tensor propagated = f(sp.points);
    if (!propagated.all_finite()) throw numeric_error("ukf_predict: non-finite propagated sigma point");
    GaussianBelief out;
    out.mean = detail::weighted_mean(propagated, sp.mean_weights);
    out.covariance = detail::weighted_outer(propagated, out.mean, propagated, out.mean, sp.cov_weights);
    for (std::size_t i = 0; i < out.covariance.rows(); ++i) out.covariance(i, i) += cfg.process_var;
    out.covariance = symmetrize(out.covariance);
    return out;
}

// Standard unscented measurement update with additive R, redrawing sigma
// points from the predicted belief.
template <typename ObservationFn>
GaussianBelief ukf_update(const GaussianBelief& belief, ObservationFn&& g, const Tensor& y,
                          const UkfConfig& cfg) {
    SigmaPoints sp = sigma_points(belief, cfg);
    Tensor observed = g(sp.points);
    if (!observed.all_finite()) throw numeric_error("ukf_update: non-finite observed sigma point");
    if (y.rank() != 2 || y.rows() != 1 || y.cols() != observed.cols())
        throw std::invalid_argument("ukf_update: measurement shape mismatch");

    Tensor z_mean = detail::weighted_mean(observed, sp.mean_weights);
    Tensor s = detail::weighted_outer(observed, z_mean, observed, z_mean, sp.cov_weights);
    for (std::size_t i = 0; i < s.rows(); ++i) s(i, i) += cfg.meas_var;
    Tensor cross = detail::weighted_outer(sp.points, belief.mean, observed, z_mean, sp.cov_weights);

    Tensor l;
    try {
        l = cholesky(symmetrize(s));
    } catch (const numeric_error&) {
        throw numeric_error("ukf_update: innovation covariance not invertible");
    }
    // Kalman gain K = C S^-1 via S K^T = C^T.
    Tensor gain_t = cholesky_solve(l, mat_transpose(cross));  // [p, d]

    GaussianBelief out;
    out.mean = belief.mean;
    for (std::size_t c = 0; c < out.mean.cols(); ++c) {
        double acc = 0.0;
        for (std::size_t q = 0; q < y.cols(); ++q) acc += (y(0, q) - z_mean(0, q)) * gain_t(q, c);
        out.mean(0, c) += acc;
    }
    // P - K S K^T, with K S = (S K^T)^T reusing the solved system: S K^T = C^T
    // so K S K^T = K (S K^T) = K C^T.
    Tensor k_ct({out.mean.cols(), out.mean.cols()});
    for (std::size_t i = 0; i < k_ct.rows(); ++i)
        for (std::size_t j = 0; j < k_ct.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t q = 0; q < y.cols(); ++q) acc += gain_t(q, i) * cross(j, q);
            k_ct(i, j) = acc;
        }
    out.covariance = belief.covariance;
    for (std::size_t i = 0; i < k_ct.rows(); ++i)
        for (std::size_t j = 0; j < k_ct.cols(); ++j) out.covariance(i, j) -= k_ct(i, j);
    out.covariance = symmetrize(out.covariance);
    return out;
}

// Runs the filter over a normalized measurement sequence. The initial mean
// embeds the first measurement through the projection pattern (or is zero for
// decoder observations), the initial covariance is init_cov * I, and the
// remaining measurements are consumed by alternating predict/update steps.
template <typename TransitionFn, typename ObservationFn>
std::vector<GaussianBelief> filter_sequence(TransitionFn&& f, ObservationFn&& g,
                                            const ObservationSpec& ospec, std::size_t state_dim,
                                            const Tensor& measurements, const UkfConfig& cfg) {
    if (measurements.rank() != 2 || measurements.rows() == 0)
        throw std::invalid_argument("filter_sequence: empty measurement sequence");
    GaussianBelief belief;
    belief.mean = Tensor({1, state_dim});
    if (ospec.kind == ObservationKind::kProjection)
        for (std::size_t c = 0; c < ospec.projection.size(); ++c)
            belief.mean(0, ospec.projection[c]) = measurements(0, c);
    belief.covariance = Tensor({state_dim, state_dim});
    for (std::size_t i = 0; i < state_dim; ++i) belief.covariance(i, i) = cfg.init_cov;

    std::vector<GaussianBelief> beliefs;
    beliefs.reserve(measurements.rows());
    beliefs.push_back(belief);
    for (std::size_t t = 1; t < measurements.rows(); ++t) {
        belief = ukf_predict(belief, f, cfg);
        Tensor y({1, measurements.cols()});
        for (std::size_t c = 0; c < measurements.cols(); ++c) y(0, c) = measurements(t, c);
        belief = ukf_update(belief, g, y, cfg);
        beliefs.push_back(belief);
    }
    return beliefs;
}

inline std::vector<GaussianBelief> filter_sequence(ModelEvaluator& model, const ObservationSpec& ospec,
                                                   std::size_t state_dim, const Tensor& measurements,
                                                   const UkfConfig& cfg) {
    return filter_sequence([&](const Tensor& x) { return model.transition(x); },
                           [&](const Tensor& x) { return model.observe(x); }, ospec, state_dim,
                           measurements, cfg);
}

}  // namespace msid
