#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "bilm/graph.hpp"
#include "bilm/optim.hpp"
#include "bilm/rng.hpp"

using namespace bilm;

namespace {

using G = Graph<double>;
using Id = G::Id;
using Builder = std::function<Id(G&, const std::vector<Id>&)>;

// Fills a tensor with reproducible smooth values in roughly [-1, 1].
Tensor<double> fill(std::vector<std::int64_t> shape, std::uint64_t salt) {
    Tensor<double> t(shape);
    RngKey k = rng_derive(rng_seed(99), salt);
    for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = 2.0 * rng_uniform(k, i) - 1.0;
    return t;
}

double eval_loss(const std::vector<Tensor<double>>& leaves, const Builder& build) {
    G g;
    std::vector<Id> ids;
    for (const auto& t : leaves) ids.push_back(g.leaf(t, true));
    return g.value(build(g, ids)).data[0];
}

// Central-difference gradient oracle: perturbs every element of every leaf and
// compares against the analytic gradients from one backward pass.
void check_grads(std::vector<Tensor<double>> leaves, const Builder& build,
                 double h = 1e-5, double tol = 1e-5) {
    G g;
    std::vector<Id> ids;
    for (const auto& t : leaves) ids.push_back(g.leaf(t, true));
    Id loss = build(g, ids);
    g.backward(loss);
    std::vector<Tensor<double>> analytic;
    for (Id id : ids) {
        REQUIRE(g.has_grad(id));
        analytic.push_back(g.grad(id));
    }
    for (size_t li = 0; li < leaves.size(); ++li) {
        for (size_t i = 0; i < leaves[li].data.size(); ++i) {
            double orig = leaves[li].data[i];
            leaves[li].data[i] = orig + h;
            double fp = eval_loss(leaves, build);
            leaves[li].data[i] = orig - h;
            double fm = eval_loss(leaves, build);
            leaves[li].data[i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            double an = analytic[li].data[i];
            double denom = std::max(std::abs(an) + std::abs(fd), 1e-6);
            CAPTURE(li);
            CAPTURE(i);
            CHECK(std::abs(an - fd) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("rng: counter-based streams are pure functions of key and counter") {
    RngKey k = rng_derive(rng_seed(7), "stream");
    CHECK(rng_bits(k, 0) == rng_bits(k, 0));
    CHECK(rng_bits(k, 0) != rng_bits(k, 1));
    RngKey k2 = rng_derive(rng_seed(7), "stream");
    CHECK(rng_bits(k, 12345) == rng_bits(k2, 12345));
    RngKey other = rng_derive(rng_seed(8), "stream");
    CHECK(rng_bits(k, 0) != rng_bits(other, 0));
}

TEST_CASE("rng: uniform lies in [0,1) and normal has sane moments") {
    RngKey k = rng_derive(rng_seed(3), "moments");
    const int n = 20000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        double u = rng_uniform(k, static_cast<std::uint64_t>(i));
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sq += u * u;
    }
    double mean = sum / n;
    CHECK(std::abs(mean - 0.5) < 0.01);
    CHECK(std::abs(sq / n - mean * mean - 1.0 / 12.0) < 0.01);

    RngKey kn = rng_derive(rng_seed(3), "gauss");
    sum = 0;
    sq = 0;
    for (int i = 0; i < n; ++i) {
        double z = rng_normal(kn, static_cast<std::uint64_t>(i));
        CHECK(std::isfinite(z));
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("rng: bounded draws respect the bound and shuffles are permutations") {
    RngKey k = rng_derive(rng_seed(11), "bounds");
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) {
        std::uint64_t v = rng_below(k, static_cast<std::uint64_t>(i), 7);
        REQUIRE(v < 7);
        hits[static_cast<size_t>(v)] += 1;
    }
    for (int h : hits) CHECK(h > 800);  // roughly uniform

    std::vector<std::int32_t> xs(100);
    for (int i = 0; i < 100; ++i) xs[static_cast<size_t>(i)] = i;
    auto orig = xs;
    rng_shuffle(std::span<std::int32_t>(xs), rng_derive(rng_seed(5), "shuf"));
    CHECK(xs != orig);
    auto sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == orig);

    auto xs2 = orig;
    rng_shuffle(std::span<std::int32_t>(xs2), rng_derive(rng_seed(5), "shuf"));
    CHECK(xs2 == xs);  // same key, same permutation
}

TEST_CASE("graph: add, mul, scale, bias gradients match central differences") {
    check_grads({fill({3, 4}, 1), fill({3, 4}, 2)},
                [](G& g, const std::vector<Id>& in) { return g.sum(g.add(in[0], in[1])); });
    check_grads({fill({3, 4}, 3), fill({3, 4}, 4)},
                [](G& g, const std::vector<Id>& in) { return g.sum(g.mul(in[0], in[1])); });
    check_grads({fill({2, 5}, 5)},
                [](G& g, const std::vector<Id>& in) { return g.sum(g.scale(in[0], -1.7)); });
    check_grads({fill({2, 3, 4}, 6), fill({4}, 7)},
                [](G& g, const std::vector<Id>& in) { return g.sum(g.add_bias(in[0], in[1])); });
}

TEST_CASE("graph: reused input accumulates gradient across both uses") {
    // loss = sum(x*x + x); d/dx = 2x + 1
    Tensor<double> x = fill({4}, 8);
    G g;
    Id xi = g.leaf(x, true);
    Id loss = g.sum(g.add(g.mul(xi, xi), xi));
    g.backward(loss);
    for (size_t i = 0; i < x.data.size(); ++i) {
        CHECK(g.grad(xi).data[i] == doctest::Approx(2.0 * x.data[i] + 1.0).epsilon(1e-12));
    }
}

TEST_CASE("graph: matmul forward oracle and gradients") {
    Tensor<double> a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> b({3, 2}, {7, 8, 9, 10, 11, 12});
    G g;
    Id c = g.matmul(g.leaf(a, false), g.leaf(b, false));
    CHECK(g.value(c).data == std::vector<double>{58, 64, 139, 154});

    check_grads({fill({3, 4}, 9), fill({4, 5}, 10)},
                [](G& g, const std::vector<Id>& in) { return g.sum(g.matmul(in[0], in[1])); });
    check_grads({fill({2, 3, 4}, 11), fill({2, 4, 2}, 12)},
                [](G& g, const std::vector<Id>& in) { return g.sum(g.bmm(in[0], in[1])); });

    // matmul_nt(a, b) == matmul(a, b^T)
    Tensor<double> x = fill({2, 3}, 40);
    Tensor<double> w = fill({4, 3}, 41);
    G g2;
    Id nt = g2.matmul_nt(g2.leaf(x, false), g2.leaf(w, false));
    CHECK(g2.value(nt).shape == std::vector<std::int64_t>{2, 4});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) {
            double want = 0;
            for (int kk = 0; kk < 3; ++kk) want += x.data[static_cast<size_t>(i * 3 + kk)] * w.data[static_cast<size_t>(j * 3 + kk)];
            CHECK(g2.value(nt).data[static_cast<size_t>(i * 4 + j)] == doctest::Approx(want).epsilon(1e-14));
        }
    check_grads({fill({3, 4}, 42), fill({5, 4}, 43)},
                [](G& g, const std::vector<Id>& in) { return g.sum(g.matmul_nt(in[0], in[1])); });
}

TEST_CASE("graph: reshape, permute4 and transpose round-trip and differentiate") {
    Tensor<double> x = fill({2, 3, 2, 2}, 13);
    G g;
    Id xi = g.leaf(x, false);
    Id p = g.permute4(xi, {0, 2, 1, 3});
    CHECK(g.value(p).shape == std::vector<std::int64_t>{2, 2, 3, 2});
    Id back = g.permute4(p, {0, 2, 1, 3});
    CHECK(g.value(back).data == x.data);

    check_grads({fill({2, 2, 2, 3}, 14)}, [](G& g, const std::vector<Id>& in) {
        Id p = g.permute4(in[0], {0, 2, 1, 3});
        Id r = g.reshape(p, {4, 6});
        return g.sum(g.mul(r, r));
    });
    check_grads({fill({2, 3, 4}, 15)}, [](G& g, const std::vector<Id>& in) {
        Id t = g.transpose_last2(in[0]);
        return g.sum(g.mul(t, t));
    });
}

TEST_CASE("graph: gelu matches the erf closed form and differentiates") {
    Tensor<double> x({5}, {-2.0, -0.5, 0.0, 0.5, 2.0});
    G g;
    Id y = g.gelu(g.leaf(x, false));
    for (size_t i = 0; i < x.data.size(); ++i) {
        double v = x.data[i];
        double want = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
        CHECK(g.value(y).data[i] == doctest::Approx(want).epsilon(1e-14));
    }
    CHECK(g.value(y).data[2] == 0.0);
    check_grads({fill({3, 3}, 16)},
                [](G& g, const std::vector<Id>& in) { return g.sum(g.gelu(in[0])); });
}

TEST_CASE("graph: layer_norm normalizes rows and differentiates") {
    Tensor<double> x = fill({4, 6}, 17);
    Tensor<double> gain = Tensor<double>::full({6}, 1.0);
    Tensor<double> bias({6});
    G g;
    Id y = g.layer_norm(g.leaf(x, false), g.leaf(gain, false), g.leaf(bias, false), 0.0);
    for (std::int64_t r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (std::int64_t j = 0; j < 6; ++j) mean += g.value(y).data[static_cast<size_t>(r * 6 + j)];
        mean /= 6;
        for (std::int64_t j = 0; j < 6; ++j) {
            double d = g.value(y).data[static_cast<size_t>(r * 6 + j)] - mean;
            var += d * d;
        }
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var / 6 == doctest::Approx(1.0).epsilon(1e-10));
    }
    check_grads({fill({3, 5}, 18), fill({5}, 19), fill({5}, 20)},
                [](G& g, const std::vector<Id>& in) {
                    Id y = g.layer_norm(in[0], in[1], in[2], 1e-12);
                    return g.sum(g.mul(y, y));
                },
                1e-5, 1e-4);
}

TEST_CASE("graph: softmax of equal logits is uniform") {
    Tensor<double> x({1, 2}, {0.0, 0.0});
    G g;
    Id y = g.softmax(g.leaf(x, false));
    CHECK(g.value(y).data[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.value(y).data[1] == doctest::Approx(0.5).epsilon(1e-15));
    check_grads({fill({4, 6}, 21)}, [](G& g, const std::vector<Id>& in) {
        Id y = g.softmax(in[0]);
        return g.sum(g.mul(y, y));
    });
}

TEST_CASE("graph: masked_softmax zeroes disallowed keys exactly and stays finite") {
    // batch 2, heads 2, Tq = Tk = 3; batch row 1 has key 2 disallowed (PAD).
    std::int64_t B = 2, H = 2, Tq = 3, Tk = 3;
    Tensor<double> scores = fill({B * H, Tq, Tk}, 22);
    std::vector<std::uint8_t> allow = {1, 1, 1, 1, 1, 0};
    G g;
    Id p = g.masked_softmax(g.leaf(scores, false), allow, H);
    const auto& v = g.value(p);
    CHECK(v.all_finite());
    for (std::int64_t gi = 0; gi < B * H; ++gi) {
        for (std::int64_t q = 0; q < Tq; ++q) {
            double row_sum = 0;
            for (std::int64_t k = 0; k < Tk; ++k) {
                double pv = v.data[static_cast<size_t>((gi * Tq + q) * Tk + k)];
                row_sum += pv;
                if (gi >= H && k == 2) CHECK(pv == 0.0);  // exactly zero, not tiny
            }
            CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    // Gradients flow through allowed keys only.
    check_grads({fill({4, 3, 3}, 23)}, [allow, H](G& g, const std::vector<Id>& in) {
        Id p = g.masked_softmax(in[0], allow, H);
        return g.sum(g.mul(p, p));
    });
    G g2;
    Id si = g2.leaf(scores, true);
    Id p2 = g2.masked_softmax(si, allow, H);
    g2.backward(g2.sum(g2.mul(p2, p2)));
    for (std::int64_t gi = H; gi < B * H; ++gi) {
        for (std::int64_t q = 0; q < Tq; ++q) {
            CHECK(g2.grad(si).data[static_cast<size_t>((gi * Tq + q) * Tk + 2)] == 0.0);
        }
    }
}

TEST_CASE("graph: masked_softmax rejects rows with no allowed key") {
    Tensor<double> scores({1, 2, 2});
    std::vector<std::uint8_t> allow = {0, 0};
    G g;
    Id s = g.leaf(scores, false);
    CHECK_THROWS_AS(g.masked_softmax(s, allow, 1), InputError);
}

TEST_CASE("graph: dropout is keyed, scaled and differentiable") {
    Tensor<double> x = Tensor<double>::full({1000}, 1.0);
    RngKey k = rng_derive(rng_seed(42), "drop");
    G g;
    Id xi = g.leaf(x, true);
    Id y = g.dropout(xi, 0.25, k, true);
    const auto& v = g.value(y);
    int kept = 0;
    for (double d : v.data) {
        CHECK((d == 0.0 || d == doctest::Approx(1.0 / 0.75).epsilon(1e-12)));
        if (d != 0.0) ++kept;
    }
    CHECK(kept > 650);
    CHECK(kept < 850);

    G g2;
    Id y2 = g2.dropout(g2.leaf(x, true), 0.25, k, true);
    CHECK(g2.value(y2).data == v.data);  // same key, same mask

    G g3;
    Id x3 = g3.leaf(x, true);
    CHECK(g3.dropout(x3, 0.25, k, false) == x3);  // eval mode: identity node

    check_grads({fill({40}, 24)}, [k](G& g, const std::vector<Id>& in) {
        return g.sum(g.mul(g.dropout(in[0], 0.3, k, true), in[0]));
    });
}

TEST_CASE("graph: gather_rows gathers and scatter-adds repeated ids") {
    Tensor<double> table({3, 2}, {1, 2, 3, 4, 5, 6});
    G g;
    Id ti = g.leaf(table, true);
    Id out = g.gather_rows(ti, {2, 0, 2});
    CHECK(g.value(out).data == std::vector<double>{5, 6, 1, 2, 5, 6});
    g.backward(g.sum(out));
    CHECK(g.grad(ti).data == std::vector<double>{1, 1, 0, 0, 2, 2});

    check_grads({fill({5, 3}, 25)}, [](G& g, const std::vector<Id>& in) {
        Id r = g.gather_rows(in[0], {4, 1, 1, 0});
        return g.sum(g.mul(r, r));
    });

    Id bad = g.leaf(table, false);
    CHECK_THROWS_AS(g.gather_rows(bad, {3}), InputError);
}

TEST_CASE("graph: cross entropy matches a log-sum-exp oracle") {
    Tensor<double> logits = fill({3, 7}, 26);
    std::vector<std::int32_t> targets = {2, 0, 6};
    G g;
    Id loss = g.cross_entropy_mean(g.leaf(logits, false), targets);
    double want = 0;
    for (int r = 0; r < 3; ++r) {
        double denom = 0;
        for (int j = 0; j < 7; ++j) denom += std::exp(logits.data[static_cast<size_t>(r * 7 + j)]);
        want -= std::log(std::exp(logits.data[static_cast<size_t>(r * 7 + targets[static_cast<size_t>(r)])]) / denom);
    }
    want /= 3;
    CHECK(g.value(loss).data[0] == doctest::Approx(want).epsilon(1e-12));

    // Uniform logits over V classes cost exactly log V.
    Tensor<double> flat({2, 16});
    G g2;
    Id l2 = g2.cross_entropy_mean(g2.leaf(flat, false), {3, 9});
    CHECK(g2.value(l2).data[0] == doctest::Approx(std::log(16.0)).epsilon(1e-14));

    check_grads({fill({4, 5}, 27)}, [](G& g, const std::vector<Id>& in) {
        return g.cross_entropy_mean(in[0], {1, 4, 0, 2});
    });
}

TEST_CASE("graph: non-finite op output raises a divergence error") {
    Tensor<double> big = Tensor<double>::full({2, 2}, 1e308);
    G g;
    Id b = g.leaf(big, true);
    CHECK_THROWS_AS(g.mul(b, b), DivergenceError);

    G g2;
    g2.set_check_finite(false);
    Id b2 = g2.leaf(big, true);
    CHECK_NOTHROW(g2.mul(b2, b2));
}

TEST_CASE("graph: backward requires a scalar loss") {
    G g;
    Id x = g.leaf(fill({2, 2}, 28), true);
    CHECK_THROWS_AS(g.backward(x), InputError);
}

TEST_CASE("optim: inverse-sqrt schedule ramps linearly then decays") {
    OptimConfig cfg;
    cfg.base_lr = 2e-4;
    cfg.warmup_steps = 30000;
    CHECK(lr_at(cfg, 1) == doctest::Approx(2e-4 / 30000.0).epsilon(1e-15));
    CHECK(lr_at(cfg, 15000) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(lr_at(cfg, 30000) == doctest::Approx(2e-4).epsilon(1e-15));
    CHECK(lr_at(cfg, 120000) == doctest::Approx(1e-4).epsilon(1e-12));  // sqrt(1/4)
    CHECK(lr_at(cfg, 29999) < lr_at(cfg, 30000));
    CHECK(lr_at(cfg, 30001) < lr_at(cfg, 30000));
}

TEST_CASE("optim: global norm clip caps the norm and preserves direction") {
    std::vector<Tensor<double>> grads;
    grads.push_back(Tensor<double>({2}, {3.0, 0.0}));
    grads.push_back(Tensor<double>({1}, {4.0}));
    double norm = clip_global_norm(grads, 1.0);
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(grads[0].data[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(grads[1].data[0] == doctest::Approx(0.8).epsilon(1e-12));

    std::vector<Tensor<double>> small;
    small.push_back(Tensor<double>({2}, {0.3, 0.4}));
    double n2 = clip_global_norm(small, 1.0);
    CHECK(n2 == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(small[0].data[0] == 0.3);
    CHECK(small[0].data[1] == 0.4);
}

TEST_CASE("optim: first AdamW step matches the closed form") {
    // p = 1, g = 1: mhat = 1, vhat = 1, so p' = p - lr*(1/(1+eps) + wd*p).
    OptimConfig cfg;
    cfg.eps = 1e-6;
    cfg.weight_decay = 0.01;
    Tensor<double> p = Tensor<double>::full({1}, 1.0);
    std::vector<Tensor<double>*> params = {&p};
    std::vector<Tensor<double>> grads = {Tensor<double>::full({1}, 1.0)};
    AdamState<double> st;
    st.init({p});
    double lr = 1e-3;
    adam_step(params, grads, st, cfg, lr, {false});
    double want = 1.0 - lr * (1.0 / (1.0 + 1e-6) + 0.01 * 1.0);
    CHECK(p.data[0] == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("optim: AdamW trajectory matches an independent scalar recurrence") {
    OptimConfig cfg;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    cfg.eps = 1e-6;
    cfg.weight_decay = 0.01;
    Tensor<double> p = Tensor<double>::full({1}, 0.7);
    std::vector<Tensor<double>*> params = {&p};
    AdamState<double> st;
    st.init({p});

    double rp = 0.7, rm = 0, rv = 0;
    std::vector<double> gs = {0.5, -1.25, 0.0, 2.0, 0.3};
    double lr = 0.01;
    for (size_t t = 0; t < gs.size(); ++t) {
        std::vector<Tensor<double>> grads = {Tensor<double>::full({1}, gs[t])};
        adam_step(params, grads, st, cfg, lr, {false});
        rm = 0.9 * rm + 0.1 * gs[t];
        rv = 0.999 * rv + 0.001 * gs[t] * gs[t];
        double mh = rm / (1.0 - std::pow(0.9, static_cast<double>(t + 1)));
        double vh = rv / (1.0 - std::pow(0.999, static_cast<double>(t + 1)));
        rp -= lr * (mh / (std::sqrt(vh) + 1e-6) + 0.01 * rp);
        CHECK(p.data[0] == doctest::Approx(rp).epsilon(1e-12));
    }
}

TEST_CASE("optim: no_decay tensors skip weight decay") {
    OptimConfig cfg;
    cfg.weight_decay = 0.5;
    Tensor<double> p = Tensor<double>::full({1}, 2.0);
    std::vector<Tensor<double>*> params = {&p};
    std::vector<Tensor<double>> grads = {Tensor<double>({1})};  // zero grad
    AdamState<double> st;
    st.init({p});
    adam_step(params, grads, st, cfg, 0.1, {true});
    CHECK(p.data[0] == 2.0);  // zero grad + no decay: unchanged
    adam_step(params, grads, st, cfg, 0.1, {false});
    CHECK(p.data[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-15));
}

TEST_CASE("graph: attention-shaped composite pipeline differentiates end to end") {
    // Mimics one attention head: q,k,v projections, masked softmax, context.
    std::int64_t B = 1, H = 2, Tt = 3, E = 4;
    std::vector<std::uint8_t> allow = {1, 1, 0};
    check_grads(
        {fill({B * Tt, E}, 30), fill({E, E}, 31), fill({E, E}, 32), fill({E, E}, 33)},
        [=](G& g, const std::vector<Id>& in) {
            Id q = g.matmul(in[0], in[1]);
            Id k = g.matmul(in[0], in[2]);
            Id v = g.matmul(in[0], in[3]);
            std::int64_t hd = E / H;
            auto split = [&](Id x) {
                Id r = g.reshape(x, {B, Tt, H, hd});
                Id p = g.permute4(r, {0, 2, 1, 3});
                return g.reshape(p, {B * H, Tt, hd});
            };
            Id qs = split(q), ks = split(k), vs = split(v);
            Id scores = g.scale(g.bmm(qs, g.transpose_last2(ks)), 1.0 / std::sqrt(static_cast<double>(hd)));
            Id probs = g.masked_softmax(scores, allow, H);
            Id ctx = g.bmm(probs, vs);
            return g.sum(g.mul(ctx, ctx));
        },
        1e-5, 1e-4);
}
