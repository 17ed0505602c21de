#pragma once

// Plain dense helpers for the filtering path (no gradients involved):
// Cholesky, SPD solves, and a cyclic Jacobi eigensolver used to floor the
// eigenvalues of small covariance matrices.

#include <cmath>
#include <utility>
#include <vector>

#include "msid/common.hpp"
#include "msid/tensor.hpp"

namespace msid {

inline Tensor mat_mul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("mat_mul: dimension mismatch");
    Tensor c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Tensor mat_transpose(const Tensor& a) {
    Tensor t({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Tensor symmetrize(const Tensor& a) {
    Tensor s({a.rows(), a.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
    return s;
}

// Lower-triangular L with L L^T = A. Throws numeric_error when A is not
// positive definite.
inline Tensor cholesky(const Tensor& a) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("cholesky: square matrix required");
    Tensor l({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
            if (i == j) {
                if (acc <= 0.0 || !std::isfinite(acc))
                    throw numeric_error("cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(acc);
            } else {
                l(i, j) = acc / l(j, j);
            }
        }
    }
    return l;
}

// Solves (L L^T) X = B given the Cholesky factor L.
inline Tensor cholesky_solve(const Tensor& l, const Tensor& b) {
    const std::size_t n = l.rows();
    if (b.rows() != n) throw std::invalid_argument("cholesky_solve: dimension mismatch");
    Tensor x = b;
    for (std::size_t j = 0; j < b.cols(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {  // forward: L y = b
            double acc = x(i, j);
            for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * x(k, j);
            x(i, j) = acc / l(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {  // backward: L^T x = y
            double acc = x(i, j);
            for (std::size_t k = i + 1; k < n; ++k) acc -= l(k, i) * x(k, j);
            x(i, j) = acc / l(i, i);
        }
    }
    return x;
}

// Cyclic Jacobi for symmetric matrices; returns eigenvalues and the matrix of
// column eigenvectors. Meant for the small covariances of the filter.
inline std::pair<std::vector<double>, Tensor> jacobi_eigen(const Tensor& a_in) {
    const std::size_t n = a_in.rows();
    Tensor a = symmetrize(a_in);
    Tensor v = Tensor::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    return {eig, v};
}

// Symmetrize and floor the eigenvalues at `floor`: V max(D, floor) V^T.
inline Tensor floor_spd(const Tensor& a, double floor) {
    auto [eig, v] = jacobi_eigen(a);
    const std::size_t n = a.rows();
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += v(i, k) * std::max(eig[k], floor) * v(j, k);
            out(i, j) = acc;
        }
    return symmetrize(out);
}

// Largest singular value; used for operator-norm error bounds on small maps.
inline double operator_norm(const Tensor& a) {
    Tensor gram = mat_mul(mat_transpose(a), a);
    auto [eig, v] = jacobi_eigen(gram);
    double top = 0.0;
    for (double e : eig) top = std::max(top, e);
    return std::sqrt(std::max(top, 0.0));
}

}  // namespace msid
