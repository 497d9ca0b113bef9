// Microbenchmarks for the hot paths: graph matmul, the full masked forward
// (and its backward), BPE segmentation and pseudo-perplexity scoring.

#include <cstdint>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "bilm/graph.hpp"
#include "bilm/masking.hpp"
#include "bilm/model.hpp"
#include "bilm/rng.hpp"
#include "bilm/score.hpp"
#include "bilm/tokenizer.hpp"

namespace {

using namespace bilm;

Tensor<float> random_tensor(std::vector<std::int64_t> shape, std::uint64_t salt) {
    Tensor<float> t(std::move(shape));
    RngKey key = rng_derive(rng_seed(42), salt);
    for (size_t i = 0; i < t.data.size(); ++i) {
        t.data[i] = static_cast<float>(2.0 * rng_uniform(key, static_cast<std::uint64_t>(i)) - 1.0);
    }
    return t;
}

void BM_graph_matmul(benchmark::State& state) {
    std::int64_t n = state.range(0);
    Tensor<float> a = random_tensor({n, n}, 1);
    Tensor<float> b = random_tensor({n, n}, 2);
    for (auto _ : state) {
        Graph<float> g;
        auto ia = g.leaf(a, false);
        auto ib = g.leaf(b, false);
        benchmark::DoNotOptimize(g.value(g.matmul(ia, ib)).data.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_graph_matmul)->Arg(64)->Arg(128)->Arg(256);

ModelConfig bench_model_config() {
    ModelConfig cfg;
    cfg.emb_dim = 64;
    cfg.ffn_dim = 256;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.dropout = 0.1;
    cfg.attention_dropout = 0.1;
    cfg.max_positions = 64;
    cfg.vocab_size = 64;
    return cfg;
}

Batch bench_batch(const ModelConfig& cfg, std::int64_t bsz, std::int64_t len) {
    std::vector<Example> examples;
    RngKey key = rng_seed(7);
    for (std::int64_t i = 0; i < bsz; ++i) {
        Example ex;
        for (std::int64_t t = 0; t < len; ++t) {
            ex.tokens.push_back(static_cast<std::int32_t>(
                5 + rng_below(key, static_cast<std::uint64_t>(i * len + t),
                              static_cast<std::uint64_t>(cfg.vocab_size - 5))));
            ex.positions.push_back(static_cast<std::int32_t>(t));
            ex.langs.push_back(0);
        }
        examples.push_back(std::move(ex));
    }
    MaskingConfig mc;
    return mask_batch(examples, mc, cfg.vocab_size, rng_seed(11));
}

void BM_forward_mlm(benchmark::State& state) {
    ModelConfig cfg = bench_model_config();
    ModelParams<float> params = init_params<float>(cfg, 3);
    Batch batch = bench_batch(cfg, 8, 32);
    RngKey key = rng_seed(5);
    for (auto _ : state) {
        Graph<float> g;
        auto bp = bind_params(g, params, false);
        auto logits = forward_mlm(g, bp, cfg, batch, Mode::kEval, key);
        benchmark::DoNotOptimize(g.value(logits).data.data());
    }
    state.SetItemsProcessed(state.iterations() * batch.batch_size * batch.seq_len);
}
BENCHMARK(BM_forward_mlm);

void BM_forward_backward_mlm(benchmark::State& state) {
    ModelConfig cfg = bench_model_config();
    ModelParams<float> params = init_params<float>(cfg, 3);
    Batch batch = bench_batch(cfg, 8, 32);
    RngKey key = rng_seed(5);
    for (auto _ : state) {
        Graph<float> g;
        auto bp = bind_params(g, params, true);
        auto logits = forward_mlm(g, bp, cfg, batch, Mode::kTrain, key);
        auto loss = g.cross_entropy_mean(logits, batch.targets);
        g.backward(loss);
        benchmark::DoNotOptimize(g.grad(bp.ordered[0]).data.data());
    }
    state.SetItemsProcessed(state.iterations() * batch.batch_size * batch.seq_len);
}
BENCHMARK(BM_forward_backward_mlm);

std::vector<std::string> bench_corpus() {
    std::vector<std::string> lines;
    RngKey key = rng_seed(13);
    const char* stems[] = {"mib", "vad", "sef", "log", "nuk", "pal"};
    const char* sfx[] = {"ta", "ku"};
    for (int i = 0; i < 400; ++i) {
        std::string line;
        for (int w = 0; w < 5; ++w) {
            if (w) line += ' ';
            line += stems[rng_below(key, static_cast<std::uint64_t>(i * 8 + w), 6)];
            line += sfx[rng_below(key, static_cast<std::uint64_t>(i * 8 + w + 4), 2)];
        }
        lines.push_back(std::move(line));
    }
    return lines;
}

void BM_tokenizer_segment(benchmark::State& state) {
    auto lines = bench_corpus();
    Tokenizer tok = train_tokenizer(lines, 40, 256);
    std::int64_t toks = 0;
    for (auto _ : state) {
        for (const auto& line : lines) {
            auto pieces = tok.segment_line(line);
            toks += static_cast<std::int64_t>(pieces.size());
            benchmark::DoNotOptimize(pieces.data());
        }
    }
    state.SetItemsProcessed(toks);
}
BENCHMARK(BM_tokenizer_segment);

void BM_pppl(benchmark::State& state) {
    ModelConfig cfg = bench_model_config();
    ModelParams<double> params = init_params<float>(cfg, 3).cast<double>();
    std::vector<std::int32_t> ids;
    for (int t = 0; t < 8; ++t) ids.push_back(5 + t % (cfg.vocab_size - 5));
    ScoreConfig sc;
    for (auto _ : state) {
        benchmark::DoNotOptimize(pppl(params, ids, sc));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ids.size()));
}
BENCHMARK(BM_pppl);

}  // namespace

BENCHMARK_MAIN();
