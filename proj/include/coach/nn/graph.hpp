#pragma once
/**
 * @file  graph.hpp
 * @brief Tape-based reverse-mode differentiation over dense matrices.
 *
 * A Graph records every operation as a node holding its value and a
 * backward closure. Parameters are leaves that alias a ParamStore: their
 * gradients accumulate straight into the store's gradient slots, so several
 * graphs (one per sample) can contribute to one optimizer step.
 *
 * Every operation treats tensors as matrices (rows x last dimension). The
 * only broadcasting is a [1 x C] row added to every row.
 */

#include "coach/nn/params.hpp"
#include "coach/nn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace coach::nn {

struct Var {
    int id = -1;
    [[nodiscard]] bool valid() const { return id >= 0; }
};

template <typename T>
class Graph {
  public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapM = Eigen::Map<Mat>;
    using MapC = Eigen::Map<const Mat>;

    /// With `record = false` no backward closures are kept (inference).
    explicit Graph(bool record = true) : record_(record) { nodes_.reserve(512); }

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // ------------------------------------------------------------ leaves

    Var constant(Tensor<T> t) {
        Node n;
        n.own = std::move(t);
        return push(std::move(n));
    }

    /// Leaf aliasing parameter `idx` of `store`; the store must outlive the graph.
    Var param(ParamStore<T>& store, std::size_t idx) {
        Node n;
        n.ext = &store.value(idx);
        n.ext_grad = &store.grad(idx);
        n.needs_grad = record_;
        return push(std::move(n));
    }

    /// Read-only parameter leaf (no gradient).
    Var param(const ParamStore<T>& store, std::size_t idx) {
        Node n;
        n.ext = &store.value(idx);
        return push(std::move(n));
    }

    [[nodiscard]] const Tensor<T>& value(Var v) const { return val(v.id); }

    /// When on, every branch decision (ReLU sign, max-pool winner, loss
    /// selection or clamp) is folded into pattern(). Two evaluations with
    /// equal patterns lie on the same smooth piece of the function.
    void track_pattern(bool on) { track_ = on; }
    [[nodiscard]] bool tracking_pattern() const { return track_; }
    [[nodiscard]] std::uint64_t pattern() const { return pattern_; }
    void mix_pattern(std::uint64_t v) { pattern_ = (pattern_ ^ (v + 0x9e3779b97f4a7c15ull)) * 0x100000001b3ull; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Seeds d(out)/d(out) = 1 for a 1-element `out` (scaled by `scale`) and
    /// runs every recorded backward closure in reverse order.
    void backward(Var out, T scale = T(1)) {
        if (val(out.id).size() != 1)
            throw ContractViolation("backward needs a scalar, got " + shape_str(val(out.id).shape));
        grad(out.id).data[0] += scale;
        for (int i = out.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back && n.has_grad) n.back();
        }
    }

    // --------------------------------------------------------- algebra

    /// a [n x k] * b [k x m]
    Var matmul(Var a, Var b) {
        const auto& A = val(a.id);
        const auto& B = val(b.id);
        if (A.cols() != B.rows())
            throw ContractViolation("matmul shape mismatch: " + shape_str(A.shape) + " * " + shape_str(B.shape));
        Tensor<T> out({A.rows(), B.cols()});
        mapm(out) = mapc(A) * mapc(B);
        return record(std::move(out), {a, b}, [this, a, b](int self) {
            const auto& G = grad(self);
            if (needs(a)) mapm(grad(a.id)).noalias() += mapc(G) * mapc(val(b.id)).transpose();
            if (needs(b)) mapm(grad(b.id)).noalias() += mapc(val(a.id)).transpose() * mapc(G);
        });
    }

    /// x [n x in] * W [in x out] + b [out]
    Var linear(Var x, Var w, Var b) {
        const auto& X = val(x.id);
        const auto& W = val(w.id);
        const auto& Bv = val(b.id);
        if (X.cols() != W.rows() || Bv.size() != W.cols())
            throw ContractViolation("linear shape mismatch: x " + shape_str(X.shape) + ", W " + shape_str(W.shape) +
                                    ", b " + shape_str(Bv.shape));
        Tensor<T> out({X.rows(), W.cols()});
        auto O = mapm(out);
        O.noalias() = mapc(X) * mapc(W);
        const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> brow(Bv.data.data(), 1,
                                                                          static_cast<Eigen::Index>(Bv.size()));
        O.rowwise() += brow;
        return record(std::move(out), {x, w, b}, [this, x, w, b](int self) {
            const auto& G = grad(self);
            if (needs(x)) mapm(grad(x.id)).noalias() += mapc(G) * mapc(val(w.id)).transpose();
            if (needs(w)) mapm(grad(w.id)).noalias() += mapc(val(x.id)).transpose() * mapc(G);
            if (needs(b)) {
                auto& gb = grad(b.id);
                for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < G.cols(); ++c) gb.data[c] += G(r, c);
            }
        });
    }

    Var add(Var a, Var b) {
        const auto& A = val(a.id);
        const auto& B = val(b.id);
        if (A.shape != B.shape)
            throw ContractViolation("add shape mismatch: " + shape_str(A.shape) + " + " + shape_str(B.shape));
        Tensor<T> out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
        return record(std::move(out), {a, b}, [this, a, b](int self) {
            const auto& G = grad(self);
            if (needs(a)) axpy(grad(a.id), G, T(1));
            if (needs(b)) axpy(grad(b.id), G, T(1));
        });
    }

    /// a [n x c] + row [1 x c] (or [c]) broadcast over rows.
    Var add_row(Var a, Var row) {
        const auto& A = val(a.id);
        const auto& R = val(row.id);
        if (R.size() != A.cols())
            throw ContractViolation("add_row shape mismatch: " + shape_str(A.shape) + " + " + shape_str(R.shape));
        Tensor<T> out = A;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += R.data[c];
        return record(std::move(out), {a, row}, [this, a, row](int self) {
            const auto& G = grad(self);
            if (needs(a)) axpy(grad(a.id), G, T(1));
            if (needs(row)) {
                auto& gr = grad(row.id);
                for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < G.cols(); ++c) gr.data[c] += G(r, c);
            }
        });
    }

    Var scale(Var a, T k) {
        Tensor<T> out = val(a.id);
        for (auto& x : out.data) x *= k;
        return record(std::move(out), {a}, [this, a, k](int self) { axpy(grad(a.id), grad(self), k); });
    }

    Var relu(Var a) {
        Tensor<T> out = val(a.id);
        for (auto& x : out.data) x = x > T(0) ? x : T(0);
        if (track_)
            for (T x : val(a.id).data) mix_pattern(x > T(0));
        return record(std::move(out), {a}, [this, a](int self) {
            const auto& G = grad(self);
            const auto& X = val(a.id);
            auto& ga = grad(a.id);
            for (std::size_t i = 0; i < G.size(); ++i)
                if (X.data[i] > T(0)) ga.data[i] += G.data[i];
        });
    }

    Var sigmoid(Var a) {
        Tensor<T> out = val(a.id);
        for (auto& x : out.data) x = T(1) / (T(1) + std::exp(-x));
        return record(std::move(out), {a}, [this, a](int self) {
            const auto& G = grad(self);
            const auto& Y = val(self);
            auto& ga = grad(a.id);
            for (std::size_t i = 0; i < G.size(); ++i) ga.data[i] += G.data[i] * Y.data[i] * (T(1) - Y.data[i]);
        });
    }

    /// Row-wise softmax.
    Var softmax(Var a) {
        Tensor<T> out = val(a.id);
        const std::size_t C = out.cols();
        for (std::size_t r = 0; r < out.rows(); ++r) softmax_row(out.row(r), C, nullptr);
        return record(std::move(out), {a}, [this, a](int self) {
            const auto& G = grad(self);
            const auto& Y = val(self);
            auto& ga = grad(a.id);
            const std::size_t Cc = Y.cols();
            for (std::size_t r = 0; r < Y.rows(); ++r) {
                T dotp = 0;
                for (std::size_t c = 0; c < Cc; ++c) dotp += G(r, c) * Y(r, c);
                for (std::size_t c = 0; c < Cc; ++c) ga(r, c) += Y(r, c) * (G(r, c) - dotp);
            }
        });
    }

    /// Per-row layer normalization with learned gain and bias.
    Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
        const auto& X = val(x.id);
        const std::size_t C = X.cols();
        if (val(gain.id).size() != C || val(bias.id).size() != C)
            throw ContractViolation("layer_norm width mismatch: x " + shape_str(X.shape) + ", gain " +
                                    shape_str(val(gain.id).shape));
        Tensor<T> out(X.shape);
        auto xhat = std::make_shared<Tensor<T>>(X.shape);
        auto inv_std = std::make_shared<std::vector<T>>(X.rows());
        const auto& g = val(gain.id).data;
        const auto& bb = val(bias.id).data;
        for (std::size_t r = 0; r < X.rows(); ++r) {
            T mean = 0;
            for (std::size_t c = 0; c < C; ++c) mean += X(r, c);
            mean /= static_cast<T>(C);
            T var = 0;
            for (std::size_t c = 0; c < C; ++c) var += (X(r, c) - mean) * (X(r, c) - mean);
            var /= static_cast<T>(C);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_std)[r] = is;
            for (std::size_t c = 0; c < C; ++c) {
                const T h = (X(r, c) - mean) * is;
                (*xhat)(r, c) = h;
                out(r, c) = h * g[c] + bb[c];
            }
        }
        return record(std::move(out), {x, gain, bias}, [this, x, gain, bias, xhat, inv_std](int self) {
            const auto& G = grad(self);
            const std::size_t Cc = G.cols();
            const auto& gv = val(gain.id).data;
            if (needs(gain) || needs(bias)) {
                for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < Cc; ++c) {
                        if (needs(gain)) grad(gain.id).data[c] += G(r, c) * (*xhat)(r, c);
                        if (needs(bias)) grad(bias.id).data[c] += G(r, c);
                    }
            }
            if (!needs(x)) return;
            auto& gx = grad(x.id);
            std::vector<T> dxhat(Cc);
            for (std::size_t r = 0; r < G.rows(); ++r) {
                T sum1 = 0, sum2 = 0;
                for (std::size_t c = 0; c < Cc; ++c) {
                    dxhat[c] = G(r, c) * gv[c];
                    sum1 += dxhat[c];
                    sum2 += dxhat[c] * (*xhat)(r, c);
                }
                const T invC = T(1) / static_cast<T>(Cc);
                for (std::size_t c = 0; c < Cc; ++c)
                    gx(r, c) += (*inv_std)[r] * (dxhat[c] - invC * sum1 - (*xhat)(r, c) * invC * sum2);
            }
        });
    }

    /// Scaled dot-product attention with `heads` heads over already
    /// projected q [nq x d], k [nk x d], v [nk x d]. Keys with
    /// key_mask[j] == 0 get exactly zero weight; a row with no visible key
    /// outputs zeros.
    Var attention(Var q, Var k, Var v, std::size_t heads, std::optional<std::vector<std::uint8_t>> key_mask = {}) {
        const auto& Q = val(q.id);
        const auto& K = val(k.id);
        const auto& V = val(v.id);
        const std::size_t d = Q.cols();
        if (K.cols() != d || V.cols() != d || K.rows() != V.rows() || heads == 0 || d % heads != 0)
            throw ContractViolation("attention shape mismatch: q " + shape_str(Q.shape) + ", k " + shape_str(K.shape) +
                                    ", v " + shape_str(V.shape) + ", heads " + std::to_string(heads));
        if (key_mask && key_mask->size() != K.rows())
            throw ContractViolation("attention mask length " + std::to_string(key_mask->size()) + " != keys " +
                                    std::to_string(K.rows()));
        const std::size_t nq = Q.rows(), nk = K.rows(), dh = d / heads;
        const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
        // probabilities per head, [heads][nq x nk]
        auto probs = std::make_shared<std::vector<Mat>>(heads);
        Tensor<T> out({nq, d});
        for (std::size_t h = 0; h < heads; ++h) {
            const auto Qh = mapc(Q).middleCols(static_cast<Eigen::Index>(h * dh), static_cast<Eigen::Index>(dh));
            const auto Kh = mapc(K).middleCols(static_cast<Eigen::Index>(h * dh), static_cast<Eigen::Index>(dh));
            const auto Vh = mapc(V).middleCols(static_cast<Eigen::Index>(h * dh), static_cast<Eigen::Index>(dh));
            Mat& P = (*probs)[h];
            P.noalias() = (Qh * Kh.transpose()) * inv_sqrt;
            for (Eigen::Index r = 0; r < P.rows(); ++r)
                softmax_row(P.row(r).data(), nk, key_mask ? key_mask->data() : nullptr);
            mapm(out).middleCols(static_cast<Eigen::Index>(h * dh), static_cast<Eigen::Index>(dh)).noalias() = P * Vh;
        }
        return record(std::move(out), {q, k, v}, [this, q, k, v, heads, dh, inv_sqrt, probs](int self) {
            const auto& G = grad(self);
            for (std::size_t h = 0; h < heads; ++h) {
                const auto off = static_cast<Eigen::Index>(h * dh);
                const auto w = static_cast<Eigen::Index>(dh);
                const Mat& P = (*probs)[h];
                const auto Gh = mapc(G).middleCols(off, w);
                const auto Qh = mapc(val(q.id)).middleCols(off, w);
                const auto Kh = mapc(val(k.id)).middleCols(off, w);
                const auto Vh = mapc(val(v.id)).middleCols(off, w);
                if (needs(v)) mapm(grad(v.id)).middleCols(off, w).noalias() += P.transpose() * Gh;
                if (!needs(q) && !needs(k)) continue;
                Mat dP = Gh * Vh.transpose();
                // dS = P o (dP - rowsum(dP o P))
                for (Eigen::Index r = 0; r < dP.rows(); ++r) {
                    const T s = (dP.row(r).array() * P.row(r).array()).sum();
                    dP.row(r) = (P.row(r).array() * (dP.row(r).array() - s)).matrix();
                }
                dP *= inv_sqrt;
                if (needs(q)) mapm(grad(q.id)).middleCols(off, w).noalias() += dP * Kh;
                if (needs(k)) mapm(grad(k.id)).middleCols(off, w).noalias() += dP.transpose() * Qh;
            }
        });
    }

    // ---------------------------------------------------------- pooling

    /// Max over consecutive blocks of `block` rows: [g*block x c] -> [g x c].
    /// Ties resolve to the first row.
    Var max_pool_rows(Var a, std::size_t block) {
        const auto& A = val(a.id);
        if (block == 0 || A.rows() % block != 0)
            throw ContractViolation("max_pool_rows: " + std::to_string(A.rows()) + " rows not divisible by " +
                                    std::to_string(block));
        const std::size_t groups = A.rows() / block, C = A.cols();
        Tensor<T> out({groups, C});
        auto arg = std::make_shared<std::vector<std::size_t>>(groups * C);
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t c = 0; c < C; ++c) {
                std::size_t best = g * block;
                for (std::size_t r = g * block + 1; r < (g + 1) * block; ++r)
                    if (A(r, c) > A(best, c)) best = r;
                out(g, c) = A(best, c);
                (*arg)[g * C + c] = best;
                if (track_) mix_pattern(best);
            }
        return record(std::move(out), {a}, [this, a, arg](int self) {
            const auto& G = grad(self);
            auto& ga = grad(a.id);
            const std::size_t Cc = G.cols();
            for (std::size_t g = 0; g < G.rows(); ++g)
                for (std::size_t c = 0; c < Cc; ++c) ga((*arg)[g * Cc + c], c) += G(g, c);
        });
    }

    /// Max over rows spaced `stride` apart: row r of the output is the max of
    /// rows r, r + stride, r + 2*stride, ... (pooling across an outer axis).
    Var max_pool_strided(Var a, std::size_t stride) {
        const auto& A = val(a.id);
        if (stride == 0 || A.rows() % stride != 0)
            throw ContractViolation("max_pool_strided: " + std::to_string(A.rows()) + " rows not divisible by " +
                                    std::to_string(stride));
        const std::size_t C = A.cols(), outer = A.rows() / stride;
        Tensor<T> out({stride, C});
        auto arg = std::make_shared<std::vector<std::size_t>>(stride * C);
        for (std::size_t r = 0; r < stride; ++r)
            for (std::size_t c = 0; c < C; ++c) {
                std::size_t best = r;
                for (std::size_t o = 1; o < outer; ++o)
                    if (A(o * stride + r, c) > A(best, c)) best = o * stride + r;
                out(r, c) = A(best, c);
                (*arg)[r * C + c] = best;
                if (track_) mix_pattern(best);
            }
        return record(std::move(out), {a}, [this, a, arg](int self) {
            const auto& G = grad(self);
            auto& ga = grad(a.id);
            const std::size_t Cc = G.cols();
            for (std::size_t r = 0; r < G.rows(); ++r)
                for (std::size_t c = 0; c < Cc; ++c) ga((*arg)[r * Cc + c], c) += G(r, c);
        });
    }

    // ------------------------------------------------------- reshaping

    Var reshape(Var a, Shape shape) {
        Tensor<T> out = val(a.id);
        if (shape_numel(shape) != out.size())
            throw ContractViolation("reshape " + shape_str(out.shape) + " -> " + shape_str(shape));
        out.shape = std::move(shape);
        return record(std::move(out), {a}, [this, a](int self) { axpy(grad(a.id), grad(self), T(1)); });
    }

    Var concat_rows(std::span<const Var> parts) {
        if (parts.empty()) throw ContractViolation("concat_rows of nothing");
        const std::size_t C = val(parts[0].id).cols();
        std::size_t R = 0;
        for (Var p : parts) {
            if (val(p.id).cols() != C)
                throw ContractViolation("concat_rows width mismatch: " + shape_str(val(parts[0].id).shape) + " vs " +
                                        shape_str(val(p.id).shape));
            R += val(p.id).rows();
        }
        Tensor<T> out({R, C});
        std::size_t off = 0;
        for (Var p : parts) {
            const auto& P = val(p.id);
            std::copy(P.data.begin(), P.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
            off += P.size();
        }
        std::vector<Var> ins(parts.begin(), parts.end());
        return record(std::move(out), ins, [this, ins](int self) {
            const auto& G = grad(self);
            std::size_t o = 0;
            for (Var p : ins) {
                const std::size_t n = val(p.id).size();
                if (needs(p)) {
                    auto& gp = grad(p.id);
                    for (std::size_t i = 0; i < n; ++i) gp.data[i] += G.data[o + i];
                }
                o += n;
            }
        });
    }

    Var concat_cols(std::span<const Var> parts) {
        if (parts.empty()) throw ContractViolation("concat_cols of nothing");
        const std::size_t R = val(parts[0].id).rows();
        std::size_t C = 0;
        for (Var p : parts) {
            if (val(p.id).rows() != R)
                throw ContractViolation("concat_cols height mismatch: " + shape_str(val(parts[0].id).shape) + " vs " +
                                        shape_str(val(p.id).shape));
            C += val(p.id).cols();
        }
        Tensor<T> out({R, C});
        std::size_t off = 0;
        for (Var p : parts) {
            const auto& P = val(p.id);
            for (std::size_t r = 0; r < R; ++r)
                std::copy(P.row(r), P.row(r) + P.cols(), out.row(r) + off);
            off += P.cols();
        }
        std::vector<Var> ins(parts.begin(), parts.end());
        return record(std::move(out), ins, [this, ins](int self) {
            const auto& G = grad(self);
            std::size_t o = 0;
            for (Var p : ins) {
                const std::size_t pc = val(p.id).cols();
                if (needs(p)) {
                    auto& gp = grad(p.id);
                    for (std::size_t r = 0; r < G.rows(); ++r)
                        for (std::size_t c = 0; c < pc; ++c) gp(r, c) += G(r, o + c);
                }
                o += pc;
            }
        });
    }

    Var slice_rows(Var a, std::size_t start, std::size_t count) {
        const auto& A = val(a.id);
        if (start + count > A.rows())
            throw ContractViolation("slice_rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                    ") out of " + shape_str(A.shape));
        const std::size_t C = A.cols();
        Tensor<T> out({count, C});
        std::copy(A.row(start), A.row(start) + count * C, out.data.begin());
        return record(std::move(out), {a}, [this, a, start](int self) {
            const auto& G = grad(self);
            auto& ga = grad(a.id);
            const std::size_t off = start * G.cols();
            for (std::size_t i = 0; i < G.size(); ++i) ga.data[off + i] += G.data[i];
        });
    }

    /// Rows of `table` selected by `indices`.
    Var embedding_lookup(Var table, std::vector<std::size_t> indices) {
        const auto& Tb = val(table.id);
        const std::size_t C = Tb.cols();
        Tensor<T> out({indices.size(), C});
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] >= Tb.rows())
                throw ContractViolation("embedding index " + std::to_string(indices[i]) + " out of " +
                                        shape_str(Tb.shape));
            std::copy(Tb.row(indices[i]), Tb.row(indices[i]) + C, out.row(i));
        }
        return record(std::move(out), {table}, [this, table, indices = std::move(indices)](int self) {
            const auto& G = grad(self);
            auto& gt = grad(table.id);
            const std::size_t Cc = G.cols();
            for (std::size_t i = 0; i < indices.size(); ++i)
                for (std::size_t c = 0; c < Cc; ++c) gt(indices[i], c) += G(i, c);
        });
    }

    Var sum(Var a) {
        T s = 0;
        for (T x : val(a.id).data) s += x;
        return record(Tensor<T>({1}, {s}), {a}, [this, a](int self) {
            const T g = grad(self).data[0];
            for (auto& x : grad(a.id).data) x += g;
        });
    }

    /// Escape hatch for fused operations (losses): `back(out_grad, self)`
    /// must accumulate into the input gradients obtained from grad_of().
    Var custom(Tensor<T> value, std::vector<Var> inputs, std::function<void(int self)> back) {
        return record(std::move(value), inputs, std::move(back));
    }

    /// Gradient buffer of `v` (allocated on first use). For custom ops.
    Tensor<T>& grad_of(Var v) { return grad(v.id); }
    [[nodiscard]] bool needs_grad(Var v) const { return needs(v); }

  private:
    struct Node {
        Tensor<T> own;
        const Tensor<T>* ext = nullptr;
        Tensor<T> own_grad;
        Tensor<T>* ext_grad = nullptr;
        bool has_grad = false;
        bool needs_grad = false;
        std::function<void()> back;
    };

    const Tensor<T>& val(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.ext ? *n.ext : n.own;
    }

    Tensor<T>& grad(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        n.has_grad = true;
        if (n.ext_grad) return *n.ext_grad;
        if (n.own_grad.size() != val(id).size() || n.own_grad.shape != val(id).shape)
            n.own_grad = Tensor<T>(val(id).shape);
        return n.own_grad;
    }

    [[nodiscard]] bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    template <typename F>
    Var record(Tensor<T> value, std::initializer_list<Var> inputs, F&& back) {
        return record(std::move(value), std::vector<Var>(inputs), std::forward<F>(back));
    }

    template <typename F>
    Var record(Tensor<T> value, const std::vector<Var>& inputs, F&& back) {
        Node n;
        n.own = std::move(value);
        bool any = false;
        for (Var v : inputs) any = any || needs(v);
        n.needs_grad = record_ && any;
        const int self = static_cast<int>(nodes_.size());
        if (n.needs_grad) n.back = [fn = std::forward<F>(back), self]() { fn(self); };
        nodes_.push_back(std::move(n));
        return Var{self};
    }

    static MapM mapm(Tensor<T>& t) {
        return MapM(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
    }
    static MapC mapc(const Tensor<T>& t) {
        return MapC(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
    }

    static void axpy(Tensor<T>& y, const Tensor<T>& x, T k) {
        for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += k * x.data[i];
    }

    static void softmax_row(T* row, std::size_t n, const std::uint8_t* mask) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (!mask || mask[j]) mx = std::max(mx, row[j]);
        if (mx == -std::numeric_limits<T>::infinity()) {
            std::fill(row, row + n, T(0));
            return;
        }
        T s = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask && !mask[j]) {
                row[j] = T(0);
                continue;
            }
            row[j] = std::exp(row[j] - mx);
            s += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= s;
    }

    bool record_;
    bool track_ = false;
    std::uint64_t pattern_ = 0xcbf29ce484222325ull;
    std::vector<Node> nodes_;
};

}  // namespace coach::nn
