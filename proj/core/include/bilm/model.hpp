#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/graph.hpp"
#include "bilm/rng.hpp"
#include "bilm/tensor.hpp"

namespace bilm {

struct ModelConfig {
    std::int32_t emb_dim = 256;
    std::int32_t ffn_dim = 1024;
    std::int32_t n_layers = 12;
    std::int32_t n_heads = 8;
    double dropout = 0.1;
    double attention_dropout = 0.1;
    std::int32_t max_positions = 256;
    std::int32_t n_languages = 2;
    std::int32_t vocab_size = 0;
    bool tied_output = true;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kLayerNormEps = 1e-12;

// One token batch, row-major [B,T] buffers flattened. attend marks real
// (non-PAD) positions; pred_pos indexes flattened positions to predict.
struct Batch {
    std::int64_t batch_size = 0;
    std::int64_t seq_len = 0;
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> positions;
    std::vector<std::int32_t> langs;
    std::vector<std::uint8_t> attend;
    std::vector<std::int32_t> pred_pos;
    std::vector<std::int32_t> targets;

    void validate(const ModelConfig& cfg) const;
};

template <typename T>
struct ModelParams {
    struct Layer {
        Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor<T> ln1_g, ln1_b;
        Tensor<T> w1, b1, w2, b2;
        Tensor<T> ln2_g, ln2_b;
    };

    ModelConfig config;
    Tensor<T> tok_emb;   // [V, E]
    Tensor<T> pos_emb;   // [P, E]
    Tensor<T> lang_emb;  // [n_languages, E]
    Tensor<T> emb_ln_g, emb_ln_b;
    std::vector<Layer> layers;
    Tensor<T> out_bias;  // [V]
    Tensor<T> out_proj;  // [V, E], only when untied

    // Fixed flat registry; checkpoint blob names, optimizer slots and gradient
    // vectors all share this order.
    std::vector<std::pair<std::string, Tensor<T>*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor<T>*>> named_tensors() const;
    std::int64_t param_count() const;
    bool all_finite() const;

    template <typename U>
    ModelParams<U> cast() const;
};

// Embedding-table init scale. Small enough that tied-output logits start
// near-uniform (initial loss within a few percent of ln vocab) while leaving
// rows distinguishable.
inline constexpr double kEmbedInitStd = 0.02;

// Deterministic init: normal(0, 1/sqrt(fan_in)) for matrices, kEmbedInitStd for
// embedding tables, zeros for biases, ones for LN gains.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

// Output-bias value given to vocabulary entries added by extend_for_l2. Keeps
// the softmax mass of unseen tokens negligible, so distributions over the old
// vocabulary (and any L1 loss) are preserved to ~1e-9 while staying finite and
// trainable; embeddings pull new tokens up within the first L2 epochs.
inline constexpr double kExtendedBiasInit = -25.0;

// Grows token-indexed tables (token embeddings, output bias/projection) for a
// larger vocabulary. Existing rows are preserved bitwise; new embedding rows
// use the init scheme under a key derived from `seed`; new bias entries start
// at kExtendedBiasInit.
template <typename T>
void extend_for_l2(ModelParams<T>& p, std::int32_t new_vocab_size, std::uint64_t seed);

enum class Mode { kTrain, kEval };

// Parameter leaves bound into a graph; `ordered` follows named_tensors().
template <typename T>
struct BoundParams {
    using Id = typename Graph<T>::Id;
    struct Layer {
        Id wq, bq, wk, bk, wv, bv, wo, bo;
        Id ln1_g, ln1_b;
        Id w1, b1, w2, b2;
        Id ln2_g, ln2_b;
    };
    Id tok_emb, pos_emb, lang_emb, emb_ln_g, emb_ln_b;
    std::vector<Layer> layers;
    Id out_bias, out_proj;
    std::vector<Id> ordered;
};

template <typename T>
BoundParams<T> bind_params(Graph<T>& g, const ModelParams<T>& p, bool requires_grad);

// Returns logits [num_masked, vocab] for the masked positions of the batch.
template <typename T>
typename Graph<T>::Id forward_mlm(Graph<T>& g, const BoundParams<T>& bp, const ModelConfig& cfg,
                                  const Batch& batch, Mode mode, RngKey dropout_key);

// Tensors that skip weight decay (biases, LN parameters): exactly the 1-D ones.
template <typename T>
std::vector<bool> no_decay_flags(ModelParams<T>& p);

// ---- implementation ----

inline void ModelConfig::validate() const {
    if (emb_dim <= 0 || ffn_dim <= 0 || n_layers <= 0 || n_heads <= 0) {
        throw ConfigError("model dims must be positive", {"emb_dim", "ffn_dim", "n_layers", "n_heads"});
    }
    if (emb_dim % n_heads != 0) throw ConfigError("emb_dim must be divisible by n_heads", {"emb_dim", "n_heads"});
    if (vocab_size < 5) throw ConfigError("vocab_size must be >= 5", {"vocab_size"});
    if (max_positions <= 0) throw ConfigError("max_positions must be positive", {"max_positions"});
    if (n_languages <= 0) throw ConfigError("n_languages must be positive", {"n_languages"});
    if (dropout < 0 || dropout >= 1 || attention_dropout < 0 || attention_dropout >= 1) {
        throw ConfigError("dropout must lie in [0,1)", {"dropout", "attention_dropout"});
    }
}

inline void Batch::validate(const ModelConfig& cfg) const {
    std::int64_t n = batch_size * seq_len;
    if (batch_size <= 0 || seq_len <= 0) throw InputError("batch: empty shape");
    if (seq_len > cfg.max_positions) throw InputError("batch: seq_len exceeds max_positions");
    if (static_cast<std::int64_t>(tokens.size()) != n || static_cast<std::int64_t>(positions.size()) != n ||
        static_cast<std::int64_t>(langs.size()) != n || static_cast<std::int64_t>(attend.size()) != n) {
        throw InputError("batch: buffer sizes disagree with batch_size*seq_len");
    }
    for (std::int64_t i = 0; i < n; ++i) {
        if (tokens[static_cast<size_t>(i)] < 0 || tokens[static_cast<size_t>(i)] >= cfg.vocab_size) {
            throw InputError("batch: token id out of range");
        }
        if (positions[static_cast<size_t>(i)] < 0 || positions[static_cast<size_t>(i)] >= cfg.max_positions) {
            throw InputError("batch: position id out of range");
        }
        if (langs[static_cast<size_t>(i)] < 0 || langs[static_cast<size_t>(i)] >= cfg.n_languages) {
            throw InputError("batch: language id out of range");
        }
    }
    for (std::int64_t b = 0; b < batch_size; ++b) {
        bool any = false;
        for (std::int64_t t = 0; t < seq_len && !any; ++t) any = attend[static_cast<size_t>(b * seq_len + t)] != 0;
        if (!any) throw InputError("batch: row with no attendable position");
    }
    if (pred_pos.size() != targets.size()) throw InputError("batch: one target per predicted position required");
    for (size_t i = 0; i < pred_pos.size(); ++i) {
        std::int32_t p = pred_pos[i];
        if (p < 0 || p >= n) throw InputError("batch: pred position out of range");
        if (!attend[static_cast<size_t>(p)]) throw InputError("batch: prediction at PAD position");
        if (i > 0 && pred_pos[i] <= pred_pos[i - 1]) throw InputError("batch: pred positions must be strictly increasing");
        if (targets[i] < 0 || targets[i] >= cfg.vocab_size) throw InputError("batch: target id out of range");
    }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelParams<T>::named_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    out.push_back({"tok_emb", &tok_emb});
    out.push_back({"pos_emb", &pos_emb});
    out.push_back({"lang_emb", &lang_emb});
    out.push_back({"emb_ln_g", &emb_ln_g});
    out.push_back({"emb_ln_b", &emb_ln_b});
    for (size_t l = 0; l < layers.size(); ++l) {
        auto& ly = layers[l];
        std::string p = "layers." + std::to_string(l) + ".";
        out.push_back({p + "wq", &ly.wq});
        out.push_back({p + "bq", &ly.bq});
        out.push_back({p + "wk", &ly.wk});
        out.push_back({p + "bk", &ly.bk});
        out.push_back({p + "wv", &ly.wv});
        out.push_back({p + "bv", &ly.bv});
        out.push_back({p + "wo", &ly.wo});
        out.push_back({p + "bo", &ly.bo});
        out.push_back({p + "ln1_g", &ly.ln1_g});
        out.push_back({p + "ln1_b", &ly.ln1_b});
        out.push_back({p + "w1", &ly.w1});
        out.push_back({p + "b1", &ly.b1});
        out.push_back({p + "w2", &ly.w2});
        out.push_back({p + "b2", &ly.b2});
        out.push_back({p + "ln2_g", &ly.ln2_g});
        out.push_back({p + "ln2_b", &ly.ln2_b});
    }
    out.push_back({"out_bias", &out_bias});
    if (!config.tied_output) out.push_back({"out_proj", &out_proj});
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> ModelParams<T>::named_tensors() const {
    auto mut = const_cast<ModelParams<T>*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    out.reserve(mut.size());
    for (auto& [n, t] : mut) out.push_back({std::move(n), t});
    return out;
}

template <typename T>
std::int64_t ModelParams<T>::param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : named_tensors()) n += t->numel();
    return n;
}

template <typename T>
bool ModelParams<T>::all_finite() const {
    for (const auto& [name, t] : named_tensors()) {
        if (!t->all_finite()) return false;
    }
    return true;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    ModelParams<U> out;
    out.config = config;
    out.layers.resize(layers.size());
    auto src = named_tensors();
    auto dst = out.named_tensors();
    for (size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
    return out;
}

namespace detail {

template <typename T>
void fill_normal(Tensor<T>& t, RngKey key, double std, std::uint64_t counter_base = 0) {
    for (size_t i = 0; i < t.data.size(); ++i) {
        t.data[i] = static_cast<T>(std * rng_normal(key, counter_base + i));
    }
}

inline RngKey init_key(std::uint64_t seed, const std::string& tensor_name) {
    return rng_derive(rng_derive(rng_seed(seed), "init"), tensor_name);
}

}  // namespace detail

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams<T> p;
    p.config = cfg;
    std::int64_t E = cfg.emb_dim, F = cfg.ffn_dim, V = cfg.vocab_size;
    std::int64_t P = cfg.max_positions, NL = cfg.n_languages;
    p.tok_emb = Tensor<T>({V, E});
    p.pos_emb = Tensor<T>({P, E});
    p.lang_emb = Tensor<T>({NL, E});
    p.emb_ln_g = Tensor<T>::full({E}, T(1));
    p.emb_ln_b = Tensor<T>({E});
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& ly : p.layers) {
        ly.wq = Tensor<T>({E, E});
        ly.bq = Tensor<T>({E});
        ly.wk = Tensor<T>({E, E});
        ly.bk = Tensor<T>({E});
        ly.wv = Tensor<T>({E, E});
        ly.bv = Tensor<T>({E});
        ly.wo = Tensor<T>({E, E});
        ly.bo = Tensor<T>({E});
        ly.ln1_g = Tensor<T>::full({E}, T(1));
        ly.ln1_b = Tensor<T>({E});
        ly.w1 = Tensor<T>({E, F});
        ly.b1 = Tensor<T>({F});
        ly.w2 = Tensor<T>({F, E});
        ly.b2 = Tensor<T>({E});
        ly.ln2_g = Tensor<T>::full({E}, T(1));
        ly.ln2_b = Tensor<T>({E});
    }
    p.out_bias = Tensor<T>({V});
    if (!cfg.tied_output) p.out_proj = Tensor<T>({V, E});

    for (auto& [name, t] : p.named_tensors()) {
        if (t->ndim() != 2) continue;  // biases stay zero, LN gains stay one
        double fan_in = static_cast<double>(t->dim(0));
        bool is_embedding = name == "tok_emb" || name == "pos_emb" || name == "lang_emb" || name == "out_proj";
        double std = is_embedding ? kEmbedInitStd : 1.0 / std::sqrt(fan_in);
        detail::fill_normal(*t, detail::init_key(seed, name), std);
    }
    return p;
}

template <typename T>
void extend_for_l2(ModelParams<T>& p, std::int32_t new_vocab_size, std::uint64_t seed) {
    std::int32_t old_v = p.config.vocab_size;
    if (new_vocab_size < old_v) throw InputError("extend_for_l2: vocabulary cannot shrink");
    if (new_vocab_size == old_v) return;
    std::int64_t E = p.config.emb_dim;
    double std = kEmbedInitStd;
    RngKey base = rng_derive(rng_seed(seed), "extend");

    auto grow_table = [&](Tensor<T>& t, const std::string& name) {
        Tensor<T> bigger(std::vector<std::int64_t>{new_vocab_size, E});
        std::copy(t.data.begin(), t.data.end(), bigger.data.begin());
        RngKey key = rng_derive(base, name);
        std::int64_t start = static_cast<std::int64_t>(old_v) * E;
        for (std::int64_t i = start; i < bigger.numel(); ++i) {
            bigger.data[static_cast<size_t>(i)] = static_cast<T>(std * rng_normal(key, static_cast<std::uint64_t>(i - start)));
        }
        t = std::move(bigger);
    };
    grow_table(p.tok_emb, "tok_emb");
    if (!p.config.tied_output) grow_table(p.out_proj, "out_proj");
    Tensor<T> bias = Tensor<T>::full({new_vocab_size}, static_cast<T>(kExtendedBiasInit));
    std::copy(p.out_bias.data.begin(), p.out_bias.data.end(), bias.data.begin());
    p.out_bias = std::move(bias);
    p.config.vocab_size = new_vocab_size;
}

template <typename T>
BoundParams<T> bind_params(Graph<T>& g, const ModelParams<T>& p, bool requires_grad) {
    BoundParams<T> bp;
    auto named = p.named_tensors();
    std::vector<typename Graph<T>::Id> ids;
    ids.reserve(named.size());
    for (const auto& [name, t] : named) ids.push_back(g.leaf(*t, requires_grad, name));
    bp.ordered = ids;
    size_t i = 0;
    bp.tok_emb = ids[i++];
    bp.pos_emb = ids[i++];
    bp.lang_emb = ids[i++];
    bp.emb_ln_g = ids[i++];
    bp.emb_ln_b = ids[i++];
    bp.layers.resize(p.layers.size());
    for (auto& ly : bp.layers) {
        ly.wq = ids[i++];
        ly.bq = ids[i++];
        ly.wk = ids[i++];
        ly.bk = ids[i++];
        ly.wv = ids[i++];
        ly.bv = ids[i++];
        ly.wo = ids[i++];
        ly.bo = ids[i++];
        ly.ln1_g = ids[i++];
        ly.ln1_b = ids[i++];
        ly.w1 = ids[i++];
        ly.b1 = ids[i++];
        ly.w2 = ids[i++];
        ly.b2 = ids[i++];
        ly.ln2_g = ids[i++];
        ly.ln2_b = ids[i++];
    }
    bp.out_bias = ids[i++];
    bp.out_proj = p.config.tied_output ? bp.tok_emb : ids[i++];
    return bp;
}

template <typename T>
typename Graph<T>::Id forward_mlm(Graph<T>& g, const BoundParams<T>& bp, const ModelConfig& cfg,
                                  const Batch& batch, Mode mode, RngKey dropout_key) {
    batch.validate(cfg);
    if (batch.pred_pos.empty()) throw InputError("forward_mlm: batch has no predicted positions");
    using Id = typename Graph<T>::Id;
    const bool train = mode == Mode::kTrain;
    const std::int64_t B = batch.batch_size, S = batch.seq_len;
    const std::int64_t E = cfg.emb_dim, H = cfg.n_heads, hd = E / H;
    const T eps = static_cast<T>(kLayerNormEps);

    Id x = g.add(g.add(g.gather_rows(bp.tok_emb, batch.tokens), g.gather_rows(bp.pos_emb, batch.positions)),
                 g.gather_rows(bp.lang_emb, batch.langs));
    x = g.layer_norm(x, bp.emb_ln_g, bp.emb_ln_b, eps);
    x = g.dropout(x, cfg.dropout, rng_derive(dropout_key, "emb"), train);

    auto split_heads = [&](Id h) {
        return g.reshape(g.permute4(g.reshape(h, {B, S, H, hd}), {0, 2, 1, 3}), {B * H, S, hd});
    };
    for (size_t l = 0; l < bp.layers.size(); ++l) {
        const auto& ly = bp.layers[l];
        RngKey lk = rng_derive(dropout_key, "layer" + std::to_string(l));
        Id q = split_heads(g.add_bias(g.matmul(x, ly.wq), ly.bq));
        Id k = split_heads(g.add_bias(g.matmul(x, ly.wk), ly.bk));
        Id v = split_heads(g.add_bias(g.matmul(x, ly.wv), ly.bv));
        Id scores = g.scale(g.bmm(q, g.transpose_last2(k)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
        Id probs = g.masked_softmax(scores, batch.attend, H);
        probs = g.dropout(probs, cfg.attention_dropout, rng_derive(lk, "attn_probs"), train);
        Id ctx = g.reshape(g.permute4(g.reshape(g.bmm(probs, v), {B, H, S, hd}), {0, 2, 1, 3}), {B * S, E});
        Id att = g.add_bias(g.matmul(ctx, ly.wo), ly.bo);
        att = g.dropout(att, cfg.dropout, rng_derive(lk, "attn_out"), train);
        x = g.layer_norm(g.add(x, att), ly.ln1_g, ly.ln1_b, eps);
        Id h = g.gelu(g.add_bias(g.matmul(x, ly.w1), ly.b1));
        Id f = g.add_bias(g.matmul(h, ly.w2), ly.b2);
        f = g.dropout(f, cfg.dropout, rng_derive(lk, "ffn_out"), train);
        x = g.layer_norm(g.add(x, f), ly.ln2_g, ly.ln2_b, eps);
    }
    Id sel = g.gather_rows(x, batch.pred_pos);
    return g.add_bias(g.matmul_nt(sel, bp.out_proj), bp.out_bias);
}

template <typename T>
std::vector<bool> no_decay_flags(ModelParams<T>& p) {
    std::vector<bool> flags;
    for (const auto& [name, t] : p.named_tensors()) flags.push_back(t->ndim() != 2);
    return flags;
}

}  // namespace bilm
