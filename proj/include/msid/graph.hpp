#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "msid/common.hpp"
#include "msid/tensor.hpp"

namespace msid {

// A trainable tensor. grad always has the shape of value and is zero right
// after zero_grad(); backward() accumulates into it with +=.
struct Variable {
    Tensor value;
    Tensor grad;
    bool requires_grad = true;
    std::string name;

    Variable() = default;
    explicit Variable(Tensor v, bool rg = true, std::string n = "")
        : value(std::move(v)), grad(value.shape()), requires_grad(rg), name(std::move(n)) {}

    void zero_grad() { std::fill(grad.data(), grad.data() + grad.size(), 0.0); }
};

enum class OpKind : std::uint8_t {
    kLeaf,
    kInput,
    kMatMul,
    kAdd,
    kSub,
    kAddRowVec,
    kRelu,
    kSigmoid,
    kSoftmaxRows,
    kSelectCols,
    kSelectRows,
    kTranspose,
    kConcatRows,
    kConcatCols,
    kBlockMix,
    kScale,
    kSum,
    kSumSq,
    kMse,
    kBce,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::kLeaf: return "leaf";
        case OpKind::kInput: return "input";
        case OpKind::kMatMul: return "matmul";
        case OpKind::kAdd: return "add";
        case OpKind::kSub: return "sub";
        case OpKind::kAddRowVec: return "add_rowvec";
        case OpKind::kRelu: return "relu";
        case OpKind::kSigmoid: return "sigmoid";
        case OpKind::kSoftmaxRows: return "softmax_rows";
        case OpKind::kSelectCols: return "select_cols";
        case OpKind::kSelectRows: return "select_rows";
        case OpKind::kTranspose: return "transpose";
        case OpKind::kConcatRows: return "concat_rows";
        case OpKind::kConcatCols: return "concat_cols";
        case OpKind::kBlockMix: return "block_mix";
        case OpKind::kScale: return "scale";
        case OpKind::kSum: return "sum";
        case OpKind::kSumSq: return "sum_sq";
        case OpKind::kMse: return "mse";
        case OpKind::kBce: return "bce";
    }
    return "?";
}

// Handle into a Graph. Only valid for the graph that produced it and only
// until that graph is cleared.
struct Value {
    std::uint32_t id = 0;
};

// Define-by-run computation record. Every op evaluates immediately, appends a
// node, and verifies the result is finite. backward() walks the record in
// reverse and accumulates exact derivatives into every requires_grad leaf.
// A Graph is confined to one unit of work; it is not thread-safe and is meant
// to be cleared and reused between steps.
class Graph {
public:
    double bce_clamp = 1e-7;  // probability clamp for the bce loss

    Value leaf(Variable& var) {
        Node n;
        n.kind = OpKind::kLeaf;
        n.var = &var;
        return push(std::move(n));
    }

    Value input(Tensor t) {
        if (!t.all_finite()) throw numeric_error("graph: non-finite input tensor");
        Node n;
        n.kind = OpKind::kInput;
        n.out = std::move(t);
        return push_unchecked(std::move(n));
    }

    Value matmul(Value a, Value b) {
        const Tensor& A = out(a);
        const Tensor& B = out(b);
        if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
            throw std::invalid_argument("matmul: dimension mismatch " + A.shape_str() + " x " + B.shape_str());
        Node n;
        n.kind = OpKind::kMatMul;
        n.a = a.id;
        n.b = b.id;
        n.out = Tensor::zeros(A.rows(), B.cols());
        matmul_accum(A, B, n.out);
        return push(std::move(n));
    }

    Value add(Value a, Value b) { return binary_same_shape(OpKind::kAdd, a, b); }
    Value sub(Value a, Value b) { return binary_same_shape(OpKind::kSub, a, b); }

    // a: [m,n], bias: [1,n]; adds the bias row to every row of a.
    Value add_rowvec(Value a, Value bias) {
        const Tensor& A = out(a);
        const Tensor& B = out(bias);
        if (A.rank() != 2 || B.rank() != 2 || B.rows() != 1 || B.cols() != A.cols())
            throw std::invalid_argument("add_rowvec: shape mismatch " + A.shape_str() + " + " + B.shape_str());
        Node n;
        n.kind = OpKind::kAddRowVec;
        n.a = a.id;
        n.b = bias.id;
        n.out = A;
        for (std::size_t i = 0; i < A.rows(); ++i)
            for (std::size_t j = 0; j < A.cols(); ++j) n.out(i, j) += B(0, j);
        return push(std::move(n));
    }

    Value relu(Value x) {
        Node n = unary(OpKind::kRelu, x);
        for (std::size_t i = 0; i < n.out.size(); ++i) n.out.at(i) = std::max(n.out.at(i), 0.0);
        return push(std::move(n));
    }

    Value sigmoid(Value x) {
        Node n = unary(OpKind::kSigmoid, x);
        for (std::size_t i = 0; i < n.out.size(); ++i) n.out.at(i) = sigmoid_scalar(n.out.at(i));
        return push(std::move(n));
    }

    // Row-wise softmax with max subtraction.
    Value softmax_rows(Value x) {
        Node n = unary(OpKind::kSoftmaxRows, x);
        Tensor& y = n.out;
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double mx = y(i, 0);
            for (std::size_t j = 1; j < y.cols(); ++j) mx = std::max(mx, y(i, j));
            double total = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) {
                y(i, j) = std::exp(y(i, j) - mx);
                total += y(i, j);
            }
            for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) /= total;
        }
        return push(std::move(n));
    }

    Value select_cols(Value x, const std::vector<std::size_t>& cols) {
        const Tensor& X = out(x);
        if (X.rank() != 2) throw std::invalid_argument("select_cols: rank-2 tensor required");
        for (std::size_t c : cols)
            if (c >= X.cols()) throw std::invalid_argument("select_cols: column index out of range");
        Node n;
        n.kind = OpKind::kSelectCols;
        n.a = x.id;
        n.ext_begin = static_cast<std::uint32_t>(pool_.size());
        n.ext_len = static_cast<std::uint32_t>(cols.size());
        for (std::size_t c : cols) pool_.push_back(static_cast<std::uint32_t>(c));
        n.out = Tensor::zeros(X.rows(), cols.size());
        for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j) n.out(i, j) = X(i, cols[j]);
        return push(std::move(n));
    }

    // Contiguous row slice [begin, end).
    Value select_rows(Value x, std::size_t begin, std::size_t end) {
        const Tensor& X = out(x);
        if (X.rank() != 2 || begin >= end || end > X.rows())
            throw std::invalid_argument("select_rows: bad slice");
        Node n;
        n.kind = OpKind::kSelectRows;
        n.a = x.id;
        n.ext_begin = static_cast<std::uint32_t>(pool_.size());
        n.ext_len = 2;
        pool_.push_back(static_cast<std::uint32_t>(begin));
        pool_.push_back(static_cast<std::uint32_t>(end));
        n.out = Tensor::zeros(end - begin, X.cols());
        for (std::size_t i = begin; i < end; ++i)
            for (std::size_t j = 0; j < X.cols(); ++j) n.out(i - begin, j) = X(i, j);
        return push(std::move(n));
    }

    Value transpose(Value x) {
        const Tensor& X = out(x);
        if (X.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
        Node n;
        n.kind = OpKind::kTranspose;
        n.a = x.id;
        n.out = Tensor::zeros(X.cols(), X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < X.cols(); ++j) n.out(j, i) = X(i, j);
        return push(std::move(n));
    }

    Value concat_rows(const std::vector<Value>& xs) { return concat(OpKind::kConcatRows, xs); }
    Value concat_cols(const std::vector<Value>& xs) { return concat(OpKind::kConcatCols, xs); }

    // blocks: [m, K*block_dim] seen as K row-blocks of width block_dim,
    // weights: [m, K]. out[i,j] = sum_k weights[i,k] * blocks[i, k*block_dim + j].
    Value block_mix(Value blocks, Value weights, std::size_t block_dim) {
        const Tensor& B = out(blocks);
        const Tensor& W = out(weights);
        if (B.rank() != 2 || W.rank() != 2 || B.rows() != W.rows() || block_dim == 0 ||
            B.cols() != W.cols() * block_dim)
            throw std::invalid_argument("block_mix: shape mismatch " + B.shape_str() + " vs " + W.shape_str());
        Node n;
        n.kind = OpKind::kBlockMix;
        n.a = blocks.id;
        n.b = weights.id;
        n.block_dim = block_dim;
        n.out = Tensor::zeros(B.rows(), block_dim);
        const std::size_t K = W.cols();
        for (std::size_t i = 0; i < B.rows(); ++i)
            for (std::size_t k = 0; k < K; ++k) {
                const double w = W(i, k);
                for (std::size_t j = 0; j < block_dim; ++j) n.out(i, j) += w * B(i, k * block_dim + j);
            }
        return push(std::move(n));
    }

    Value scale(Value x, double c) {
        Node n = unary(OpKind::kScale, x);
        n.c = c;
        for (std::size_t i = 0; i < n.out.size(); ++i) n.out.at(i) *= c;
        return push(std::move(n));
    }

    Value sum(Value x) {
        const Tensor& X = out(x);
        double total = 0.0;
        for (std::size_t i = 0; i < X.size(); ++i) total += X.at(i);
        Node n;
        n.kind = OpKind::kSum;
        n.a = x.id;
        n.out = Tensor::scalar(total);
        return push(std::move(n));
    }

    Value sum_sq(Value x) {
        const Tensor& X = out(x);
        double total = 0.0;
        for (std::size_t i = 0; i < X.size(); ++i) total += X.at(i) * X.at(i);
        Node n;
        n.kind = OpKind::kSumSq;
        n.a = x.id;
        n.out = Tensor::scalar(total);
        return push(std::move(n));
    }

    // Mean of squared differences over all elements.
    Value mse(Value pred, Value target) {
        const Tensor& P = out(pred);
        const Tensor& T = out(target);
        if (!P.same_shape(T))
            throw std::invalid_argument("mse: shape mismatch " + P.shape_str() + " vs " + T.shape_str());
        double total = 0.0;
        for (std::size_t i = 0; i < P.size(); ++i) {
            const double d = P.at(i) - T.at(i);
            total += d * d;
        }
        Node n;
        n.kind = OpKind::kMse;
        n.a = pred.id;
        n.b = target.id;
        n.out = Tensor::scalar(total / static_cast<double>(P.size()));
        return push(std::move(n));
    }

    // Mean binary cross entropy; probabilities clamped to [bce_clamp, 1-bce_clamp].
    Value bce(Value pred, Value target) {
        const Tensor& P = out(pred);
        const Tensor& T = out(target);
        if (!P.same_shape(T))
            throw std::invalid_argument("bce: shape mismatch " + P.shape_str() + " vs " + T.shape_str());
        double total = 0.0;
        for (std::size_t i = 0; i < P.size(); ++i) {
            const double p = clamp_prob(P.at(i));
            const double t = T.at(i);
            total += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
        }
        Node n;
        n.kind = OpKind::kBce;
        n.a = pred.id;
        n.b = target.id;
        n.out = Tensor::scalar(total / static_cast<double>(P.size()));
        return push(std::move(n));
    }

    const Tensor& value(Value v) const { return out(v); }
    std::size_t node_count() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    void clear() {
        nodes_.clear();
        pool_.clear();
        grads_.clear();
    }

    // Reverse pass from a scalar loss. Gradients accumulate (+=) into the grad
    // slot of every requires_grad leaf reachable from the loss. A redirect may
    // route a leaf's gradient into an external buffer instead (returning
    // nullptr keeps the default slot); the training loop uses this to reduce
    // per-trajectory contributions in a fixed order.
    using GradRedirect = std::function<Tensor*(const Variable&)>;

    void backward(Value loss, const GradRedirect& redirect = {}) {
        if (nodes_.empty()) throw std::invalid_argument("backward: empty record");
        const Tensor& L = out(loss);
        if (L.size() != 1) throw std::invalid_argument("backward: loss must be a scalar, got " + L.shape_str());
        redirect_ = &redirect;
        grads_.assign(nodes_.size(), Tensor());
        grad_at(loss.id) = Tensor::scalar(1.0);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            if (grads_[i].empty()) continue;  // node does not influence the loss
            backprop_node(static_cast<std::uint32_t>(i));
        }
        grads_.clear();
        redirect_ = nullptr;
    }

private:
    static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();

    struct Node {
        OpKind kind{};
        std::uint32_t a = npos;
        std::uint32_t b = npos;
        std::uint32_t ext_begin = 0;
        std::uint32_t ext_len = 0;
        std::size_t block_dim = 0;
        double c = 0.0;
        Tensor out;             // owned output; unused for leaves
        Variable* var = nullptr;  // leaves only
    };

    const Tensor& out(Value v) const { return out(v.id); }
    const Tensor& out(std::uint32_t id) const {
        const Node& n = nodes_[id];
        return n.kind == OpKind::kLeaf ? n.var->value : n.out;
    }

    Value push(Node n) {
        if (n.kind != OpKind::kLeaf && !n.out.all_finite())
            throw numeric_error(std::string("graph: non-finite result in ") + op_name(n.kind));
        return push_unchecked(std::move(n));
    }

    Value push_unchecked(Node n) {
        nodes_.push_back(std::move(n));
        return Value{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Node unary(OpKind kind, Value x) {
        Node n;
        n.kind = kind;
        n.a = x.id;
        n.out = out(x);
        return n;
    }

    Value binary_same_shape(OpKind kind, Value a, Value b) {
        const Tensor& A = out(a);
        const Tensor& B = out(b);
        if (!A.same_shape(B))
            throw std::invalid_argument(std::string(op_name(kind)) + ": shape mismatch " + A.shape_str() +
                                        " vs " + B.shape_str());
        Node n;
        n.kind = kind;
        n.a = a.id;
        n.b = b.id;
        n.out = A;
        if (kind == OpKind::kAdd) {
            for (std::size_t i = 0; i < n.out.size(); ++i) n.out.at(i) += B.at(i);
        } else {
            for (std::size_t i = 0; i < n.out.size(); ++i) n.out.at(i) -= B.at(i);
        }
        return push(std::move(n));
    }

    Value concat(OpKind kind, const std::vector<Value>& xs) {
        if (xs.empty()) throw std::invalid_argument("concat: no inputs");
        const bool by_rows = kind == OpKind::kConcatRows;
        const Tensor& first = out(xs[0]);
        if (first.rank() != 2) throw std::invalid_argument("concat: rank-2 tensors required");
        std::size_t rows = first.rows(), cols = first.cols();
        for (std::size_t i = 1; i < xs.size(); ++i) {
            const Tensor& t = out(xs[i]);
            if (by_rows) {
                if (t.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
                rows += t.rows();
            } else {
                if (t.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
                cols += t.cols();
            }
        }
        Node n;
        n.kind = kind;
        n.ext_begin = static_cast<std::uint32_t>(pool_.size());
        n.ext_len = static_cast<std::uint32_t>(xs.size());
        for (Value v : xs) pool_.push_back(v.id);
        n.out = Tensor::zeros(rows, cols);
        std::size_t offset = 0;
        for (Value v : xs) {
            const Tensor& t = out(v);
            if (by_rows) {
                for (std::size_t i = 0; i < t.rows(); ++i)
                    for (std::size_t j = 0; j < t.cols(); ++j) n.out(offset + i, j) = t(i, j);
                offset += t.rows();
            } else {
                for (std::size_t i = 0; i < t.rows(); ++i)
                    for (std::size_t j = 0; j < t.cols(); ++j) n.out(i, offset + j) = t(i, j);
                offset += t.cols();
            }
        }
        return push(std::move(n));
    }

    Tensor& grad_at(std::uint32_t id) {
        if (grads_[id].empty()) grads_[id] = Tensor(out(id).shape());
        return grads_[id];
    }

    void backprop_node(std::uint32_t id) {
        Node& n = nodes_[id];
        const Tensor& g = grads_[id];
        switch (n.kind) {
            case OpKind::kLeaf:
                if (n.var->requires_grad) {
                    Tensor* dst = &n.var->grad;
                    if (redirect_ && *redirect_) {
                        if (Tensor* redirected = (*redirect_)(*n.var)) dst = redirected;
                    }
                    for (std::size_t i = 0; i < dst->size(); ++i) dst->at(i) += g.at(i);
                }
                break;
            case OpKind::kInput:
                break;
            case OpKind::kMatMul: {
                const Tensor& A = out(n.a);
                const Tensor& B = out(n.b);
                const std::size_t m = A.rows(), q = A.cols(), r = B.cols();
                const double* gp = g.data();
                const double* bp = B.data();
                const double* ap = A.data();
                // dA += g * B^T
                {
                    double* da = grad_at(n.a).data();
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = gp + i * r;
                        for (std::size_t k = 0; k < q; ++k) {
                            const double* brow = bp + k * r;
                            double acc = 0.0;
                            for (std::size_t j = 0; j < r; ++j) acc += grow[j] * brow[j];
                            da[i * q + k] += acc;
                        }
                    }
                }
                // dB += A^T * g
                {
                    double* db = grad_at(n.b).data();
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* grow = gp + i * r;
                        const double* arow = ap + i * q;
                        for (std::size_t k = 0; k < q; ++k) {
                            const double a = arow[k];
                            double* drow = db + k * r;
                            for (std::size_t j = 0; j < r; ++j) drow[j] += a * grow[j];
                        }
                    }
                }
                break;
            }
            case OpKind::kAdd: {
                accumulate(n.a, g, +1.0);
                accumulate(n.b, g, +1.0);
                break;
            }
            case OpKind::kSub: {
                accumulate(n.a, g, +1.0);
                accumulate(n.b, g, -1.0);
                break;
            }
            case OpKind::kAddRowVec: {
                accumulate(n.a, g, +1.0);
                Tensor& db = grad_at(n.b);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
                break;
            }
            case OpKind::kRelu: {
                const Tensor& x = out(n.a);
                Tensor& dx = grad_at(n.a);
                for (std::size_t i = 0; i < x.size(); ++i)
                    if (x.at(i) > 0.0) dx.at(i) += g.at(i);
                break;
            }
            case OpKind::kSigmoid: {
                const Tensor& y = n.out;
                Tensor& dx = grad_at(n.a);
                for (std::size_t i = 0; i < y.size(); ++i) dx.at(i) += g.at(i) * y.at(i) * (1.0 - y.at(i));
                break;
            }
            case OpKind::kSoftmaxRows: {
                const Tensor& y = n.out;
                Tensor& dx = grad_at(n.a);
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                    for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) += y(i, j) * (g(i, j) - dot);
                }
                break;
            }
            case OpKind::kSelectCols: {
                Tensor& dx = grad_at(n.a);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < n.ext_len; ++j) dx(i, pool_[n.ext_begin + j]) += g(i, j);
                break;
            }
            case OpKind::kSelectRows: {
                Tensor& dx = grad_at(n.a);
                const std::size_t begin = pool_[n.ext_begin];
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) dx(begin + i, j) += g(i, j);
                break;
            }
            case OpKind::kTranspose: {
                Tensor& dx = grad_at(n.a);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) dx(j, i) += g(i, j);
                break;
            }
            case OpKind::kConcatRows:
            case OpKind::kConcatCols: {
                const bool by_rows = n.kind == OpKind::kConcatRows;
                std::size_t offset = 0;
                for (std::uint32_t s = 0; s < n.ext_len; ++s) {
                    const std::uint32_t src = pool_[n.ext_begin + s];
                    const Tensor& t = out(src);
                    Tensor& dx = grad_at(src);
                    if (by_rows) {
                        for (std::size_t i = 0; i < t.rows(); ++i)
                            for (std::size_t j = 0; j < t.cols(); ++j) dx(i, j) += g(offset + i, j);
                        offset += t.rows();
                    } else {
                        for (std::size_t i = 0; i < t.rows(); ++i)
                            for (std::size_t j = 0; j < t.cols(); ++j) dx(i, j) += g(i, offset + j);
                        offset += t.cols();
                    }
                }
                break;
            }
            case OpKind::kBlockMix: {
                const Tensor& B = out(n.a);
                const Tensor& W = out(n.b);
                Tensor& dB = grad_at(n.a);
                Tensor& dW = grad_at(n.b);
                const std::size_t d = n.block_dim;
                for (std::size_t i = 0; i < B.rows(); ++i)
                    for (std::size_t k = 0; k < W.cols(); ++k) {
                        const double w = W(i, k);
                        double acc = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                            dB(i, k * d + j) += w * g(i, j);
                            acc += B(i, k * d + j) * g(i, j);
                        }
                        dW(i, k) += acc;
                    }
                break;
            }
            case OpKind::kScale: {
                accumulate(n.a, g, n.c);
                break;
            }
            case OpKind::kSum: {
                Tensor& dx = grad_at(n.a);
                const double s = g.at(0);
                for (std::size_t i = 0; i < dx.size(); ++i) dx.at(i) += s;
                break;
            }
            case OpKind::kSumSq: {
                const Tensor& x = out(n.a);
                Tensor& dx = grad_at(n.a);
                const double s = 2.0 * g.at(0);
                for (std::size_t i = 0; i < x.size(); ++i) dx.at(i) += s * x.at(i);
                break;
            }
            case OpKind::kMse: {
                const Tensor& P = out(n.a);
                const Tensor& T = out(n.b);
                Tensor& dp = grad_at(n.a);
                const double s = 2.0 * g.at(0) / static_cast<double>(P.size());
                for (std::size_t i = 0; i < P.size(); ++i) dp.at(i) += s * (P.at(i) - T.at(i));
                break;
            }
            case OpKind::kBce: {
                const Tensor& P = out(n.a);
                const Tensor& T = out(n.b);
                Tensor& dp = grad_at(n.a);
                const double s = g.at(0) / static_cast<double>(P.size());
                for (std::size_t i = 0; i < P.size(); ++i) {
                    const double p = P.at(i);
                    if (p <= bce_clamp || p >= 1.0 - bce_clamp) continue;  // clamped: flat
                    dp.at(i) += s * (p - T.at(i)) / (p * (1.0 - p));
                }
                break;
            }
        }
    }

    void accumulate(std::uint32_t id, const Tensor& g, double factor) {
        Tensor& dst = grad_at(id);
        if (factor == 1.0) {
            for (std::size_t i = 0; i < dst.size(); ++i) dst.at(i) += g.at(i);
        } else {
            for (std::size_t i = 0; i < dst.size(); ++i) dst.at(i) += factor * g.at(i);
        }
    }

    static void matmul_accum(const Tensor& A, const Tensor& B, Tensor& C) {
        const std::size_t m = A.rows(), q = A.cols(), r = B.cols();
        const double* a = A.data();
        const double* b = B.data();
        double* c = C.data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < q; ++k) {
                const double aik = a[i * q + k];
                const double* brow = b + k * r;
                double* crow = c + i * r;
                for (std::size_t j = 0; j < r; ++j) crow[j] += aik * brow[j];
            }
    }

    static double sigmoid_scalar(double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }

    double clamp_prob(double p) const { return std::min(std::max(p, bce_clamp), 1.0 - bce_clamp); }

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> pool_;
    std::vector<Tensor> grads_;
    const GradRedirect* redirect_ = nullptr;
};

}  // namespace msid
