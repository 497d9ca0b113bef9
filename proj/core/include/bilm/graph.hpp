#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bilm/rng.hpp"
#include "bilm/tensor.hpp"

namespace bilm {

// Reverse-mode autodiff over a tape of dense tensor ops.
//
// Nodes are appended strictly after their inputs, so the tape order is a
// topological order by construction and backward() walks it once in reverse.
// Each node records its op kind, input ids and whatever activations its
// backward closure needs. All kernels accumulate in a fixed serial order,
// which is what makes whole-run bitwise determinism possible.
template <typename T>
class Graph {
public:
    using Id = std::int32_t;

    struct Node {
        std::string op;
        std::vector<Id> inputs;
        Tensor<T> value;
        Tensor<T> grad;  // allocated on first accumulation
        std::function<void(Graph&, Id)> backward;
        bool requires_grad = false;
    };

    explicit Graph(bool check_finite = true) : check_finite_(check_finite) {}

    const Tensor<T>& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Tensor<T>& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }
    bool has_grad(Id id) const { return !nodes_[static_cast<size_t>(id)].grad.data.empty(); }
    size_t size() const { return nodes_.size(); }

    Id leaf(Tensor<T> v, bool requires_grad, std::string name = "leaf") {
        Node n;
        n.op = std::move(name);
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }

    Id constant(Tensor<T> v) { return leaf(std::move(v), false, "const"); }

    // ---- arithmetic ----

    Id add(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require(ta.same_shape(tb), "add: shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
        Tensor<T> out = ta;
        for (std::int64_t i = 0; i < out.numel(); ++i) out.data[static_cast<size_t>(i)] += tb.data[static_cast<size_t>(i)];
        return make("add", {a, b}, std::move(out), [](Graph& g, Id self) {
            const auto& go = g.node(self).grad;
            g.accum(g.node(self).inputs[0], go);
            g.accum(g.node(self).inputs[1], go);
        });
    }

    // x[..., N] + bias[N], broadcasting over leading dims.
    Id add_bias(Id a, Id bias) {
        const auto& ta = value(a);
        const auto& tb = value(bias);
        require(tb.ndim() == 1 && ta.shape.back() == tb.dim(0), "add_bias: bias shape mismatch");
        Tensor<T> out = ta;
        std::int64_t n = tb.dim(0);
        std::int64_t rows = out.numel() / n;
        for (std::int64_t r = 0; r < rows; ++r) {
            T* o = out.data.data() + r * n;
            for (std::int64_t j = 0; j < n; ++j) o[j] += tb.data[static_cast<size_t>(j)];
        }
        return make("add_bias", {a, bias}, std::move(out), [n, rows](Graph& g, Id self) {
            const auto& go = g.node(self).grad;
            g.accum(g.node(self).inputs[0], go);
            Id b = g.node(self).inputs[1];
            if (g.node(b).requires_grad) {
                Tensor<T> gb({n});
                for (std::int64_t r = 0; r < rows; ++r) {
                    const T* p = go.data.data() + r * n;
                    for (std::int64_t j = 0; j < n; ++j) gb.data[static_cast<size_t>(j)] += p[j];
                }
                g.accum(b, gb);
            }
        });
    }

    Id mul(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require(ta.same_shape(tb), "mul: shape mismatch");
        Tensor<T> out = ta;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
        return make("mul", {a, b}, std::move(out), [](Graph& g, Id self) {
            const auto& go = g.node(self).grad;
            Id a = g.node(self).inputs[0];
            Id b = g.node(self).inputs[1];
            if (g.node(a).requires_grad) {
                Tensor<T> ga = go;
                for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= g.node(b).value.data[i];
                g.accum(a, ga);
            }
            if (g.node(b).requires_grad) {
                Tensor<T> gb = go;
                for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] *= g.node(a).value.data[i];
                g.accum(b, gb);
            }
        });
    }

    Id scale(Id a, T s) {
        Tensor<T> out = value(a);
        for (auto& v : out.data) v *= s;
        return make("scale", {a}, std::move(out), [s](Graph& g, Id self) {
            Tensor<T> ga = g.node(self).grad;
            for (auto& v : ga.data) v *= s;
            g.accum(g.node(self).inputs[0], ga);
        });
    }

    // ---- shape ops ----

    Id reshape(Id a, std::vector<std::int64_t> shape) {
        const auto& ta = value(a);
        require(Tensor<T>::count(shape) == ta.numel(), "reshape: element count mismatch");
        Tensor<T> out(shape, ta.data);
        std::vector<std::int64_t> old_shape = ta.shape;
        return make("reshape", {a}, std::move(out), [old_shape](Graph& g, Id self) {
            Tensor<T> ga(old_shape, g.node(self).grad.data);
            g.accum(g.node(self).inputs[0], ga);
        });
    }

    // Permutation of a 4-D tensor's axes (materialized).
    Id permute4(Id a, std::array<int, 4> perm) {
        const auto& ta = value(a);
        require(ta.ndim() == 4, "permute4: tensor must be 4-D");
        Tensor<T> out = permute4_impl(ta, perm);
        std::array<int, 4> inv{};
        for (int i = 0; i < 4; ++i) inv[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
        return make("permute4", {a}, std::move(out), [inv](Graph& g, Id self) {
            g.accum(g.node(self).inputs[0], permute4_impl(g.node(self).grad, inv));
        });
    }

    // [G, M, N] -> [G, N, M]
    Id transpose_last2(Id a) {
        const auto& ta = value(a);
        require(ta.ndim() == 3, "transpose_last2: tensor must be 3-D");
        Tensor<T> out = transpose_impl(ta);
        return make("transpose", {a}, std::move(out), [](Graph& g, Id self) {
            g.accum(g.node(self).inputs[0], transpose_impl(g.node(self).grad));
        });
    }

    // ---- linear algebra ----

    Id matmul(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require(ta.ndim() == 2 && tb.ndim() == 2 && ta.dim(1) == tb.dim(0),
                "matmul: incompatible shapes " + shape_str(ta) + " x " + shape_str(tb));
        std::int64_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
        Tensor<T> out({m, n});
        gemm(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
        return make("matmul", {a, b}, std::move(out), [m, k, n](Graph& g, Id self) {
            const auto& go = g.node(self).grad;
            Id a = g.node(self).inputs[0];
            Id b = g.node(self).inputs[1];
            if (g.node(a).requires_grad) {
                Tensor<T> ga({m, k});
                gemm_nt(go.data.data(), g.node(b).value.data.data(), ga.data.data(), m, n, k);
                g.accum(a, ga);
            }
            if (g.node(b).requires_grad) {
                Tensor<T> gb({k, n});
                gemm_tn(g.node(a).value.data.data(), go.data.data(), gb.data.data(), m, k, n);
                g.accum(b, gb);
            }
        });
    }

    // A [M,K] x B[N,K]^T -> [M,N]; lets the tied output head reuse the
    // [vocab, emb] embedding table without materializing its transpose.
    Id matmul_nt(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require(ta.ndim() == 2 && tb.ndim() == 2 && ta.dim(1) == tb.dim(1),
                "matmul_nt: incompatible shapes " + shape_str(ta) + " x " + shape_str(tb));
        std::int64_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(0);
        Tensor<T> out({m, n});
        gemm_nt(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
        return make("matmul_nt", {a, b}, std::move(out), [m, k, n](Graph& g, Id self) {
            const auto& go = g.node(self).grad;
            Id a = g.node(self).inputs[0];
            Id b = g.node(self).inputs[1];
            if (g.node(a).requires_grad) {
                Tensor<T> ga({m, k});
                gemm(go.data.data(), g.node(b).value.data.data(), ga.data.data(), m, n, k);
                g.accum(a, ga);
            }
            if (g.node(b).requires_grad) {
                Tensor<T> gb({n, k});
                gemm_tn(go.data.data(), g.node(a).value.data.data(), gb.data.data(), m, n, k);
                g.accum(b, gb);
            }
        });
    }

    // Batched matmul [G,M,K] x [G,K,N] -> [G,M,N].
    Id bmm(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require(ta.ndim() == 3 && tb.ndim() == 3 && ta.dim(0) == tb.dim(0) && ta.dim(2) == tb.dim(1),
                "bmm: incompatible shapes " + shape_str(ta) + " x " + shape_str(tb));
        std::int64_t gdim = ta.dim(0), m = ta.dim(1), k = ta.dim(2), n = tb.dim(2);
        Tensor<T> out({gdim, m, n});
        for (std::int64_t gi = 0; gi < gdim; ++gi) {
            gemm(ta.data.data() + gi * m * k, tb.data.data() + gi * k * n, out.data.data() + gi * m * n, m, k, n);
        }
        return make("bmm", {a, b}, std::move(out), [gdim, m, k, n](Graph& g, Id self) {
            const auto& go = g.node(self).grad;
            Id a = g.node(self).inputs[0];
            Id b = g.node(self).inputs[1];
            if (g.node(a).requires_grad) {
                Tensor<T> ga({gdim, m, k});
                for (std::int64_t gi = 0; gi < gdim; ++gi) {
                    gemm_nt(go.data.data() + gi * m * n, g.node(b).value.data.data() + gi * k * n,
                            ga.data.data() + gi * m * k, m, n, k);
                }
                g.accum(a, ga);
            }
            if (g.node(b).requires_grad) {
                Tensor<T> gb({gdim, k, n});
                for (std::int64_t gi = 0; gi < gdim; ++gi) {
                    gemm_tn(g.node(a).value.data.data() + gi * m * k, go.data.data() + gi * m * n,
                            gb.data.data() + gi * k * n, m, k, n);
                }
                g.accum(b, gb);
            }
        });
    }

    // ---- nonlinearities ----

    Id gelu(Id a) {
        const auto& ta = value(a);
        Tensor<T> out = ta;
        for (auto& v : out.data) {
            v = static_cast<T>(0.5 * static_cast<double>(v) * (1.0 + std::erf(static_cast<double>(v) * M_SQRT1_2)));
        }
        return make("gelu", {a}, std::move(out), [](Graph& g, Id self) {
            Id a = g.node(self).inputs[0];
            const auto& x = g.node(a).value;
            Tensor<T> ga = g.node(self).grad;
            constexpr double inv_sqrt_2pi = 0.3989422804014327;
            for (size_t i = 0; i < ga.data.size(); ++i) {
                double xv = static_cast<double>(x.data[i]);
                double d = 0.5 * (1.0 + std::erf(xv * M_SQRT1_2)) + xv * inv_sqrt_2pi * std::exp(-0.5 * xv * xv);
                ga.data[i] *= static_cast<T>(d);
            }
            g.accum(a, ga);
        });
    }

    Id layer_norm(Id x, Id gain, Id bias, T eps) {
        const auto& tx = value(x);
        const auto& tg = value(gain);
        const auto& tb = value(bias);
        std::int64_t n = tx.shape.back();
        require(tg.ndim() == 1 && tg.dim(0) == n && tb.ndim() == 1 && tb.dim(0) == n,
                "layer_norm: gain/bias must match feature dim");
        std::int64_t rows = tx.numel() / n;
        Tensor<T> out = tx;
        auto xhat = std::make_shared<Tensor<T>>(tx.shape);
        auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* p = tx.data.data() + r * n;
            T* o = out.data.data() + r * n;
            T* xh = xhat->data.data() + r * n;
            double mean = 0;
            for (std::int64_t j = 0; j < n; ++j) mean += static_cast<double>(p[j]);
            mean /= static_cast<double>(n);
            double var = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                double d = static_cast<double>(p[j]) - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            (*invstd)[static_cast<size_t>(r)] = is;
            for (std::int64_t j = 0; j < n; ++j) {
                xh[j] = (p[j] - static_cast<T>(mean)) * is;
                o[j] = xh[j] * tg.data[static_cast<size_t>(j)] + tb.data[static_cast<size_t>(j)];
            }
        }
        return make("layer_norm", {x, gain, bias}, std::move(out),
                    [n, rows, xhat, invstd](Graph& g, Id self) {
            const auto& go = g.node(self).grad;
            Id x = g.node(self).inputs[0];
            Id gain = g.node(self).inputs[1];
            Id bias = g.node(self).inputs[2];
            const auto& tg = g.node(gain).value;
            if (g.node(gain).requires_grad) {
                Tensor<T> gg({n});
                for (std::int64_t r = 0; r < rows; ++r) {
                    const T* d = go.data.data() + r * n;
                    const T* xh = xhat->data.data() + r * n;
                    for (std::int64_t j = 0; j < n; ++j) gg.data[static_cast<size_t>(j)] += d[j] * xh[j];
                }
                g.accum(gain, gg);
            }
            if (g.node(bias).requires_grad) {
                Tensor<T> gb({n});
                for (std::int64_t r = 0; r < rows; ++r) {
                    const T* d = go.data.data() + r * n;
                    for (std::int64_t j = 0; j < n; ++j) gb.data[static_cast<size_t>(j)] += d[j];
                }
                g.accum(bias, gb);
            }
            if (g.node(x).requires_grad) {
                Tensor<T> gx(g.node(x).value.shape);
                for (std::int64_t r = 0; r < rows; ++r) {
                    const T* d = go.data.data() + r * n;
                    const T* xh = xhat->data.data() + r * n;
                    T* o = gx.data.data() + r * n;
                    double sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (std::int64_t j = 0; j < n; ++j) {
                        double dx = static_cast<double>(d[j]) * static_cast<double>(tg.data[static_cast<size_t>(j)]);
                        sum_dxhat += dx;
                        sum_dxhat_xhat += dx * static_cast<double>(xh[j]);
                    }
                    double m1 = sum_dxhat / static_cast<double>(n);
                    double m2 = sum_dxhat_xhat / static_cast<double>(n);
                    T is = (*invstd)[static_cast<size_t>(r)];
                    for (std::int64_t j = 0; j < n; ++j) {
                        double dx = static_cast<double>(d[j]) * static_cast<double>(tg.data[static_cast<size_t>(j)]);
                        o[j] = static_cast<T>((dx - m1 - static_cast<double>(xh[j]) * m2) * static_cast<double>(is));
                    }
                }
                g.accum(x, gx);
            }
        });
    }

    // Row softmax over the last dim.
    Id softmax(Id a) {
        const auto& ta = value(a);
        std::int64_t n = ta.shape.back();
        std::int64_t rows = ta.numel() / n;
        Tensor<T> out = ta;
        for (std::int64_t r = 0; r < rows; ++r) softmax_row(out.data.data() + r * n, n);
        return make("softmax", {a}, std::move(out), [n, rows](Graph& g, Id self) {
            softmax_backward(g, self, n, rows);
        });
    }

    // Softmax over attention scores [B*H, Tq, Tk] where key positions with
    // allow[b*Tk + k] == 0 receive exactly zero probability. No -inf tensor is
    // ever materialized, so finiteness checks hold on every node.
    Id masked_softmax(Id scores, std::vector<std::uint8_t> key_allow, std::int64_t heads) {
        const auto& ts = value(scores);
        require(ts.ndim() == 3, "masked_softmax: scores must be [G,Tq,Tk]");
        std::int64_t gdim = ts.dim(0), tq = ts.dim(1), tk = ts.dim(2);
        require(gdim % heads == 0, "masked_softmax: G not divisible by heads");
        std::int64_t batch = gdim / heads;
        require(static_cast<std::int64_t>(key_allow.size()) == batch * tk, "masked_softmax: mask size mismatch");
        Tensor<T> out = ts;
        for (std::int64_t g = 0; g < gdim; ++g) {
            const std::uint8_t* allow = key_allow.data() + (g / heads) * tk;
            for (std::int64_t q = 0; q < tq; ++q) {
                T* p = out.data.data() + (g * tq + q) * tk;
                double m = -HUGE_VAL;
                for (std::int64_t k = 0; k < tk; ++k) {
                    if (allow[k] && static_cast<double>(p[k]) > m) m = static_cast<double>(p[k]);
                }
                require(m != -HUGE_VAL, "masked_softmax: row with no allowed keys");
                double sum = 0;
                for (std::int64_t k = 0; k < tk; ++k) {
                    double e = allow[k] ? std::exp(static_cast<double>(p[k]) - m) : 0.0;
                    p[k] = static_cast<T>(e);
                    sum += e;
                }
                T inv = static_cast<T>(1.0 / sum);
                for (std::int64_t k = 0; k < tk; ++k) p[k] *= inv;
            }
        }
        return make("masked_softmax", {scores}, std::move(out), [tk](Graph& g, Id self) {
            std::int64_t rows = g.node(self).value.numel() / tk;
            softmax_backward(g, self, tk, rows);
        });
    }

    Id dropout(Id a, double p, RngKey key, bool train) {
        if (!train || p <= 0.0) return a;  // identity in eval mode
        require(p < 1.0, "dropout: p must be < 1");
        const auto& ta = value(a);
        auto keep = std::make_shared<std::vector<std::uint8_t>>(ta.data.size());
        T scale = static_cast<T>(1.0 / (1.0 - p));
        Tensor<T> out = ta;
        for (size_t i = 0; i < out.data.size(); ++i) {
            bool k = rng_uniform(key, i) >= p;
            (*keep)[i] = k;
            out.data[i] = k ? out.data[i] * scale : T(0);
        }
        return make("dropout", {a}, std::move(out), [keep, scale](Graph& g, Id self) {
            Tensor<T> ga = g.node(self).grad;
            for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] = (*keep)[i] ? ga.data[i] * scale : T(0);
            g.accum(g.node(self).inputs[0], ga);
        });
    }

    // Gather rows of a 2-D table: out[i,:] = table[ids[i],:]. Used both for
    // embedding lookup and for selecting masked positions from hidden states.
    Id gather_rows(Id table, std::vector<std::int32_t> ids) {
        const auto& tt = value(table);
        require(tt.ndim() == 2, "gather_rows: table must be 2-D");
        std::int64_t n = static_cast<std::int64_t>(ids.size());
        std::int64_t e = tt.dim(1);
        for (auto id : ids) {
            require(id >= 0 && id < tt.dim(0), "gather_rows: index out of range");
        }
        Tensor<T> out({n, e});
        for (std::int64_t i = 0; i < n; ++i) {
            const T* src = tt.row(ids[static_cast<size_t>(i)]);
            std::copy(src, src + e, out.row(i));
        }
        auto ids_ptr = std::make_shared<std::vector<std::int32_t>>(std::move(ids));
        return make("gather_rows", {table}, std::move(out), [ids_ptr, e](Graph& g, Id self) {
            Id table = g.node(self).inputs[0];
            if (!g.node(table).requires_grad) return;
            Tensor<T> gt(g.node(table).value.shape);
            const auto& go = g.node(self).grad;
            for (size_t i = 0; i < ids_ptr->size(); ++i) {
                const T* src = go.data.data() + static_cast<std::int64_t>(i) * e;
                T* dst = gt.row((*ids_ptr)[i]);
                for (std::int64_t j = 0; j < e; ++j) dst[j] += src[j];
            }
            g.accum(table, gt);
        });
    }

    // Mean cross-entropy from logits [M,V] against one target id per row.
    Id cross_entropy_mean(Id logits, std::vector<std::int32_t> targets) {
        const auto& tl = value(logits);
        require(tl.ndim() == 2, "cross_entropy: logits must be [M,V]");
        std::int64_t m = tl.dim(0), v = tl.dim(1);
        require(static_cast<std::int64_t>(targets.size()) == m && m > 0, "cross_entropy: one target per row required");
        for (auto t : targets) require(t >= 0 && t < v, "cross_entropy: target id out of range");
        double total = 0;
        for (std::int64_t r = 0; r < m; ++r) {
            const T* p = tl.row(r);
            double mx = static_cast<double>(p[0]);
            for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(p[j]));
            double sum = 0;
            for (std::int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(p[j]) - mx);
            total += mx + std::log(sum) - static_cast<double>(p[targets[static_cast<size_t>(r)]]);
        }
        Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(m)));
        auto tgt = std::make_shared<std::vector<std::int32_t>>(std::move(targets));
        return make("cross_entropy", {logits}, std::move(out), [tgt, m, v](Graph& g, Id self) {
            Id logits = g.node(self).inputs[0];
            if (!g.node(logits).requires_grad) return;
            T up = g.node(self).grad.data[0];
            const auto& tl = g.node(logits).value;
            Tensor<T> gl(tl.shape);
            T inv_m = static_cast<T>(1.0 / static_cast<double>(m)) * up;
            for (std::int64_t r = 0; r < m; ++r) {
                const T* p = tl.row(r);
                T* o = gl.row(r);
                double mx = static_cast<double>(p[0]);
                for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(p[j]));
                double sum = 0;
                for (std::int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(p[j]) - mx);
                for (std::int64_t j = 0; j < v; ++j) {
                    o[j] = static_cast<T>(std::exp(static_cast<double>(p[j]) - mx) / sum) * inv_m;
                }
                o[(*tgt)[static_cast<size_t>(r)]] -= inv_m;
            }
            g.accum(logits, gl);
        });
    }

    Id sum(Id a) {
        const auto& ta = value(a);
        double s = 0;
        for (T v : ta.data) s += static_cast<double>(v);
        return make("sum", {a}, Tensor<T>::scalar(static_cast<T>(s)), [](Graph& g, Id self) {
            Id a = g.node(self).inputs[0];
            T up = g.node(self).grad.data[0];
            g.accum(a, Tensor<T>::full(g.node(a).value.shape, up));
        });
    }

    Id mean(Id a) {
        std::int64_t n = value(a).numel();
        return scale(sum(a), static_cast<T>(1.0 / static_cast<double>(n)));
    }

    // ---- backward ----

    void backward(Id loss) {
        auto& ln = node(loss);
        if (ln.value.numel() != 1) throw InputError("backward: loss must be scalar");
        accum(loss, Tensor<T>::scalar(T(1)));
        for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!n.backward || n.grad.data.empty() || !n.requires_grad) continue;
            n.backward(*this, id);
        }
    }

    void set_check_finite(bool on) { check_finite_ = on; }

    Node& node(Id id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(Id id) const { return nodes_[static_cast<size_t>(id)]; }

    void accum(Id id, const Tensor<T>& g) {
        Node& n = node(id);
        if (!n.requires_grad) return;
        if (n.grad.data.empty()) {
            n.grad = g;
        } else {
            for (size_t i = 0; i < n.grad.data.size(); ++i) n.grad.data[i] += g.data[i];
        }
    }

private:
    std::vector<Node> nodes_;
    bool check_finite_;

    static void require(bool cond, const std::string& msg) {
        if (!cond) throw InputError(msg);
    }

    Id push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Id make(std::string op, std::vector<Id> inputs, Tensor<T> value,
            std::function<void(Graph&, Id)> bw) {
        Node n;
        n.op = std::move(op);
        n.inputs = std::move(inputs);
        for (Id i : n.inputs) n.requires_grad = n.requires_grad || node(i).requires_grad;
        if (check_finite_ && !value.all_finite()) {
            throw DivergenceError("non-finite value in op '" + n.op + "'");
        }
        n.value = std::move(value);
        if (n.requires_grad) n.backward = std::move(bw);
        return push(std::move(n));
    }

    static void softmax_row(T* p, std::int64_t n) {
        double m = static_cast<double>(p[0]);
        for (std::int64_t j = 1; j < n; ++j) m = std::max(m, static_cast<double>(p[j]));
        double sum = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            double e = std::exp(static_cast<double>(p[j]) - m);
            p[j] = static_cast<T>(e);
            sum += e;
        }
        T inv = static_cast<T>(1.0 / sum);
        for (std::int64_t j = 0; j < n; ++j) p[j] *= inv;
    }

    // dL/ds = p * (dL/dp - sum_k dL/dp_k * p_k), shared by softmax and masked_softmax.
    static void softmax_backward(Graph& g, Id self, std::int64_t n, std::int64_t rows) {
        Id a = g.node(self).inputs[0];
        if (!g.node(a).requires_grad) return;
        const auto& p = g.node(self).value;
        const auto& go = g.node(self).grad;
        Tensor<T> ga(p.shape);
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* pr = p.data.data() + r * n;
            const T* dr = go.data.data() + r * n;
            T* o = ga.data.data() + r * n;
            double dot = 0;
            for (std::int64_t j = 0; j < n; ++j) dot += static_cast<double>(dr[j]) * static_cast<double>(pr[j]);
            for (std::int64_t j = 0; j < n; ++j) {
                o[j] = static_cast<T>(pr[j] * (static_cast<double>(dr[j]) - dot));
            }
        }
        g.accum(a, ga);
    }

    // C[m,n] += ... plain kernels, fixed accumulation order.
    static void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
        for (std::int64_t i = 0; i < m; ++i) {
            T* ci = c + i * n;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                T av = a[i * k + kk];
                const T* bk = b + kk * n;
                for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
            }
        }
    }

    // C[m,k] = A[m,n] * B[k,n]^T
    static void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t n, std::int64_t k) {
        for (std::int64_t i = 0; i < m; ++i) {
            const T* ai = a + i * n;
            T* ci = c + i * k;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const T* bk = b + kk * n;
                T acc = 0;
                for (std::int64_t j = 0; j < n; ++j) acc += ai[j] * bk[j];
                ci[kk] = acc;
            }
        }
    }

    // C[k,n] = A[m,k]^T * B[m,n]
    static void gemm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
        for (std::int64_t i = 0; i < m; ++i) {
            const T* bi = b + i * n;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                T av = a[i * k + kk];
                T* ck = c + kk * n;
                for (std::int64_t j = 0; j < n; ++j) ck[j] += av * bi[j];
            }
        }
    }

    static Tensor<T> permute4_impl(const Tensor<T>& t, std::array<int, 4> perm) {
        std::array<std::int64_t, 4> od{};
        for (int i = 0; i < 4; ++i) od[static_cast<size_t>(i)] = t.dim(perm[static_cast<size_t>(i)]);
        Tensor<T> out({od[0], od[1], od[2], od[3]});
        std::array<std::int64_t, 4> is{};  // input strides
        is[3] = 1;
        for (int i = 2; i >= 0; --i) is[static_cast<size_t>(i)] = is[static_cast<size_t>(i) + 1] * t.dim(i + 1);
        std::int64_t idx = 0;
        std::array<std::int64_t, 4> c{};
        for (c[0] = 0; c[0] < od[0]; ++c[0])
            for (c[1] = 0; c[1] < od[1]; ++c[1])
                for (c[2] = 0; c[2] < od[2]; ++c[2])
                    for (c[3] = 0; c[3] < od[3]; ++c[3]) {
                        std::int64_t src = 0;
                        for (int i = 0; i < 4; ++i) src += c[static_cast<size_t>(i)] * is[static_cast<size_t>(perm[static_cast<size_t>(i)])];
                        out.data[static_cast<size_t>(idx++)] = t.data[static_cast<size_t>(src)];
                    }
        return out;
    }

    static Tensor<T> transpose_impl(const Tensor<T>& t) {
        std::int64_t g = t.dim(0), m = t.dim(1), n = t.dim(2);
        Tensor<T> out({g, n, m});
        for (std::int64_t gi = 0; gi < g; ++gi) {
            const T* src = t.data.data() + gi * m * n;
            T* dst = out.data.data() + gi * m * n;
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
        }
        return out;
    }
};

}  // namespace bilm
