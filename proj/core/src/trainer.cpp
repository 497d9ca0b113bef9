#include "bilm/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bilm/common.hpp"
#include "bilm/vocab.hpp"

namespace bilm {

namespace {

// Subwords that came from the corpus line: everything except the BOS/EOS
// frame (2 per segment). UNKs count; masking replacements do not apply here
// because this runs on the unmasked examples.
std::int64_t content_tokens(const std::vector<Example>& exs) {
    std::int64_t n = 0;
    for (const auto& ex : exs) {
        std::int64_t bos = 0;
        for (std::int32_t id : ex.tokens) {
            if (id == Vocab::kBos) ++bos;
        }
        n += ex.size() - 2 * bos;
    }
    return n;
}

std::string csv_row(const MetricsRow& r) {
    return strfmt("%lld,%lld,%s,%.17g,%.17g,%lld\n", static_cast<long long>(r.epoch),
                  static_cast<long long>(r.step), r.split.c_str(), r.loss, r.lr,
                  static_cast<long long>(r.tokens));
}

EpochStream build_train_stream(const TrainPlan& plan, const TrainData& data, std::int64_t epoch) {
    switch (plan.phase) {
        case Phase::kL1:
            return make_mono_stream(data.train_sents, plan.stream.l1_lang, plan.stream, epoch, plan.seed);
        case Phase::kL1Only:
            return make_mono_stream(data.train_pairs.l1, plan.stream.l1_lang, plan.stream, epoch, plan.seed);
        case Phase::kL2:
            return make_l2_stream(data.train_pairs, plan.regime, plan.stream, epoch, plan.seed);
    }
    throw ConfigError("invalid phase", {"phase"});
}

// Held-out stream with a fixed composition: epoch index 0 never occurs in
// training (epochs are 1-based), so dev order and masking stay constant and
// dev losses are comparable across epochs. L2 dev always uses aligned pairs.
std::vector<std::vector<Example>> build_dev_batches(const TrainPlan& plan, const TrainData& data) {
    EpochStream s;
    switch (plan.phase) {
        case Phase::kL1:
            if (data.dev_sents.empty()) return {};
            s = make_mono_stream(data.dev_sents, plan.stream.l1_lang, plan.stream, 0, plan.seed);
            break;
        case Phase::kL1Only:
            if (data.dev_pairs.size() == 0) return {};
            s = make_mono_stream(data.dev_pairs.l1, plan.stream.l1_lang, plan.stream, 0, plan.seed);
            break;
        case Phase::kL2:
            if (data.dev_pairs.size() == 0) return {};
            s = make_l2_stream(data.dev_pairs, Regime::kPara, plan.stream, 0, plan.seed);
            break;
    }
    return pack_batches(s.examples, plan.stream.token_budget);
}

struct MicroLoss {
    double loss_sum = 0;  // sum over predictions of -log p
    std::int64_t preds = 0;
};

}  // namespace

Phase phase_from_string(const std::string& s) {
    if (s == "l1") return Phase::kL1;
    if (s == "l2") return Phase::kL2;
    if (s == "l1-only") return Phase::kL1Only;
    throw InputError("unknown phase '" + s + "' (expected l1|l2|l1-only)");
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::kL1: return "l1";
        case Phase::kL2: return "l2";
        case Phase::kL1Only: return "l1-only";
    }
    throw InputError("invalid phase value");
}

void TrainPlan::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0", {"epochs"});
    for (std::int64_t e : checkpoint_epochs) {
        if (e < 1 || e > epochs) {
            throw ConfigError(strfmt("checkpoint epoch %lld outside 1..%lld", static_cast<long long>(e),
                                     static_cast<long long>(epochs)),
                              {"checkpoint_epochs", "epochs"});
        }
    }
    if (phase == Phase::kL2) {
        if (regime == Regime::kMono) throw ConfigError("L2 phase requires a bilingual regime", {"phase", "regime"});
    } else if (regime != Regime::kMono) {
        throw ConfigError("mono regime is the only choice for L1 phases", {"phase", "regime"});
    }
    masking.validate();
    if (stream.token_budget <= 0) throw ConfigError("token_budget must be positive", {"token_budget"});
    if (stream.max_positions < 8) throw ConfigError("max_positions must be >= 8", {"max_positions"});
    if (optim.accumulate_gradients < 1) {
        throw ConfigError("accumulate_gradients must be >= 1", {"accumulate_gradients"});
    }
    if (optim.base_lr <= 0 || optim.warmup_steps < 1 || optim.clip_norm <= 0) {
        throw ConfigError("optimizer settings out of range", {"base_lr", "warmup_steps", "clip_norm"});
    }
}

std::string TrainPlan::phase_label() const {
    if (phase == Phase::kL2) return "l2-" + to_string(regime);
    return to_string(phase);
}

void save_metrics(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::string out = "epoch,step,split,loss,lr,tokens\n";
    for (const auto& r : rows) out += csv_row(r);
    write_file(path, out);
}

std::vector<MetricsRow> load_metrics(const std::string& path) {
    std::vector<MetricsRow> rows;
    auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "epoch,step,split,loss,lr,tokens") {
        throw InputError(path + ": not a metrics file");
    }
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        MetricsRow r;
        char split[32] = {0};
        long long epoch = 0, step = 0, tokens = 0;
        if (std::sscanf(lines[i].c_str(), "%lld,%lld,%31[^,],%lg,%lg,%lld", &epoch, &step, split,
                        &r.loss, &r.lr, &tokens) != 6) {
            throw InputError(strfmt("%s:%zu: bad metrics row", path.c_str(), i + 1));
        }
        r.epoch = epoch;
        r.step = step;
        r.tokens = tokens;
        r.split = split;
        rows.push_back(std::move(r));
    }
    return rows;
}

TrainerState make_trainer(const ModelConfig& cfg, std::uint64_t seed) {
    TrainerState st;
    st.params = init_params<float>(cfg, seed);
    for (auto& [name, t] : st.params.named_tensors()) {
        st.opt.slots.push_back({Tensor<float>(t->shape), Tensor<float>(t->shape)});
    }
    return st;
}

TrainerState trainer_from_checkpoint(const Checkpoint& ckpt) {
    TrainerState st;
    st.params = ckpt.params;
    st.epoch = ckpt.epoch;
    auto named = st.params.named_tensors();
    if (ckpt.has_optimizer) {
        if (ckpt.opt_m.size() != named.size() || ckpt.opt_v.size() != named.size()) {
            throw InputError("checkpoint optimizer state does not match parameters");
        }
        for (size_t i = 0; i < named.size(); ++i) st.opt.slots.push_back({ckpt.opt_m[i], ckpt.opt_v[i]});
        st.opt.step = ckpt.opt_step;
    } else {
        for (auto& [name, t] : named) st.opt.slots.push_back({Tensor<float>(t->shape), Tensor<float>(t->shape)});
    }
    return st;
}

TrainResult train(TrainerState& state, const TrainPlan& plan, const TrainData& data,
                  const std::string& out_dir) {
    plan.validate();
    const ModelConfig& cfg = state.params.config;
    cfg.validate();
    if (plan.stream.max_positions > cfg.max_positions) {
        throw ConfigError("stream max_positions exceeds the model's position table",
                          {"max_positions"});
    }

    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    bool fresh = state.epoch == 0 || !fs::exists(metrics_path);
    std::ofstream mf(metrics_path, fresh ? std::ios::trunc : std::ios::app);
    if (!mf) throw IoError("cannot open " + metrics_path);
    if (fresh) mf << "epoch,step,split,loss,lr,tokens\n" << std::flush;

    TrainResult res;
    res.opt_steps = state.opt.step;
    auto emit = [&](const MetricsRow& r) {
        mf << csv_row(r) << std::flush;
        res.metrics.push_back(r);
    };

    std::vector<Tensor<float>*> param_ptrs;
    for (auto& [name, t] : state.params.named_tensors()) param_ptrs.push_back(t);
    auto decay_skip = no_decay_flags(state.params);

    auto dev_batches = build_dev_batches(plan, data);
    RngKey root = rng_seed(plan.seed);
    RngKey dev_key = rng_derive(root, "dev");

    // Mean dev loss per prediction under eval mode and the fixed dev key.
    auto eval_dev = [&]() -> std::pair<double, std::int64_t> {
        double loss_sum = 0;
        std::int64_t preds = 0, toks = 0;
        for (size_t b = 0; b < dev_batches.size(); ++b) {
            Batch batch = mask_batch(dev_batches[b], plan.masking, cfg.vocab_size,
                                     rng_derive(dev_key, static_cast<std::uint64_t>(b)));
            toks += content_tokens(dev_batches[b]);
            if (batch.pred_pos.empty()) continue;
            Graph<float> g;
            auto bp = bind_params(g, state.params, false);
            auto logits = forward_mlm(g, bp, cfg, batch, Mode::kEval, dev_key);
            auto loss = g.cross_entropy_mean(logits, batch.targets);
            auto n = static_cast<std::int64_t>(batch.pred_pos.size());
            loss_sum += static_cast<double>(g.value(loss).data[0]) * static_cast<double>(n);
            preds += n;
        }
        return {preds > 0 ? loss_sum / static_cast<double>(preds) : 0.0, toks};
    };

    std::vector<Tensor<float>> grads;
    for (auto* t : param_ptrs) grads.emplace_back(t->shape);

    try {
        for (std::int64_t epoch = state.epoch + 1; epoch <= plan.epochs; ++epoch) {
            EpochStream stream = build_train_stream(plan, data, epoch);
            res.truncated += stream.truncated;
            auto batches = pack_batches(stream.examples, plan.stream.token_budget);
            RngKey mask_key = rng_derive(rng_derive(root, "mask"), static_cast<std::uint64_t>(epoch));
            RngKey drop_key = rng_derive(rng_derive(root, "dropout"), static_cast<std::uint64_t>(epoch));

            double epoch_loss_sum = 0;
            std::int64_t epoch_preds = 0, epoch_tokens = 0;
            double last_lr = lr_at(plan.optim, std::max<std::int64_t>(state.opt.step, 1));

            size_t acc = static_cast<size_t>(plan.optim.accumulate_gradients);
            for (size_t b0 = 0; b0 < batches.size(); b0 += acc) {
                size_t b1 = std::min(b0 + acc, batches.size());
                for (auto& gt : grads) std::fill(gt.data.begin(), gt.data.end(), 0.0f);
                MicroLoss group;
                std::int64_t group_tokens = 0;

                for (size_t b = b0; b < b1; ++b) {
                    group_tokens += content_tokens(batches[b]);
                    Batch batch = mask_batch(batches[b], plan.masking, cfg.vocab_size,
                                             rng_derive(mask_key, static_cast<std::uint64_t>(b)));
                    if (batch.pred_pos.empty()) {
                        res.skipped_batches += 1;
                        continue;
                    }
                    Graph<float> g;
                    auto bp = bind_params(g, state.params, true);
                    auto logits = forward_mlm(g, bp, cfg, batch, Mode::kTrain,
                                              rng_derive(drop_key, static_cast<std::uint64_t>(b)));
                    auto loss = g.cross_entropy_mean(logits, batch.targets);
                    g.backward(loss);
                    auto n = static_cast<std::int64_t>(batch.pred_pos.size());
                    group.loss_sum += static_cast<double>(g.value(loss).data[0]) * static_cast<double>(n);
                    group.preds += n;
                    for (size_t i = 0; i < param_ptrs.size(); ++i) {
                        if (!g.has_grad(bp.ordered[i])) continue;
                        const auto& src = g.grad(bp.ordered[i]).data;
                        auto& dst = grads[i].data;
                        for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                    }
                }

                epoch_tokens += group_tokens;
                if (group.preds == 0) continue;
                clip_global_norm(grads, plan.optim.clip_norm);
                double lr = lr_at(plan.optim, state.opt.step + 1);
                adam_step(param_ptrs, grads, state.opt, plan.optim, lr, decay_skip);
                last_lr = lr;
                epoch_loss_sum += group.loss_sum;
                epoch_preds += group.preds;
                emit({epoch, state.opt.step, "train", group.loss_sum / static_cast<double>(group.preds),
                      lr, group_tokens});
            }

            if (epoch_preds > 0) {
                emit({epoch, state.opt.step, "train_epoch",
                      epoch_loss_sum / static_cast<double>(epoch_preds), last_lr, epoch_tokens});
            }
            if (!dev_batches.empty()) {
                auto [dl, dt] = eval_dev();
                emit({epoch, state.opt.step, "dev", dl, last_lr, dt});
            }

            state.epoch = epoch;
            res.opt_steps = state.opt.step;

            if (std::find(plan.checkpoint_epochs.begin(), plan.checkpoint_epochs.end(), epoch) !=
                plan.checkpoint_epochs.end()) {
                Checkpoint c;
                c.config = cfg;
                c.phase = plan.phase_label();
                c.epoch = epoch;
                c.seed = plan.seed;
                c.vocab_hash = data.vocab_hash;
                c.opt_step = state.opt.step;
                c.params = state.params;
                c.has_optimizer = true;
                for (const auto& s : state.opt.slots) {
                    c.opt_m.push_back(s.m);
                    c.opt_v.push_back(s.v);
                }
                std::string name = strfmt("epoch_%04lld.ckpt", static_cast<long long>(epoch));
                save_checkpoint((fs::path(out_dir) / "checkpoints" / name).string(), c);
                res.checkpoints.push_back(epoch);
            }
        }
    } catch (const DivergenceError&) {
        mf.flush();
        throw;
    }

    if (res.skipped_batches > 0) {
        std::fprintf(stderr, "warning: %lld micro-batches had no masked positions and were skipped\n",
                     static_cast<long long>(res.skipped_batches));
    }
    return res;
}

}  // namespace bilm
