#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/checkpoint.hpp"
#include "bilm/masking.hpp"
#include "bilm/model.hpp"
#include "bilm/optim.hpp"
#include "bilm/stream.hpp"

namespace bilm {

enum class Phase { kL1, kL2, kL1Only };

Phase phase_from_string(const std::string& s);
std::string to_string(Phase p);

struct TrainPlan {
    Phase phase = Phase::kL1;
    Regime regime = Regime::kMono;
    std::int64_t epochs = 100;
    std::vector<std::int64_t> checkpoint_epochs = {1, 2, 3, 4, 5, 10, 20, 30, 40, 50, 100};
    std::uint64_t seed = 1;
    MaskingConfig masking;
    StreamConfig stream;
    OptimConfig optim;

    void validate() const;
    std::string phase_label() const;  // "l1", "l2-para", ..., "l1-only"
};

// One metrics line. split is "train" (per optimizer step), "train_epoch"
// (epoch mean) or "dev" (held-out loss under a fixed masking key).
struct MetricsRow {
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    std::string split;
    double loss = 0.0;
    double lr = 0.0;
    std::int64_t tokens = 0;  // corpus subwords consumed (frames excluded)
};

void save_metrics(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> load_metrics(const std::string& path);

// Tokenized inputs for one run. Mono phases (L1) read train/dev_sents; the L2
// regimes read train/dev_pairs; the L1-only baseline reads the L1 side of
// train/dev_pairs. Dev sets may be empty (dev rows are then omitted).
struct TrainData {
    std::vector<std::vector<std::int32_t>> train_sents, dev_sents;
    TokenizedPairs train_pairs, dev_pairs;
    std::uint64_t vocab_hash = 0;
};

// Mutable model + optimizer bundle; epoch is the last completed epoch of the
// current phase (0 for a fresh phase).
struct TrainerState {
    ModelParams<float> params;
    AdamState<float> opt;
    std::int64_t epoch = 0;
};

TrainerState make_trainer(const ModelConfig& cfg, std::uint64_t seed);
// Restores parameters, optimizer moments and the epoch counter bit-exactly.
TrainerState trainer_from_checkpoint(const Checkpoint& ckpt);

struct TrainResult {
    std::vector<MetricsRow> metrics;        // rows written by this call
    std::vector<std::int64_t> checkpoints;  // epochs checkpointed by this call
    std::int64_t opt_steps = 0;             // optimizer step counter at exit
    std::int64_t skipped_batches = 0;       // micro-batches with nothing to predict
    std::int64_t truncated = 0;             // examples clipped to max_positions
};

// Runs epochs state.epoch+1 .. plan.epochs, mutating `state` in place.
// Writes out_dir/metrics.csv (appending when resuming) and
// out_dir/checkpoints/epoch_NNNN.ckpt at each scheduled epoch, optimizer
// state included. Every random draw is a pure function of
// (plan.seed, epoch, batch index), so a resumed run reproduces the serial
// run bitwise. A non-finite loss raises DivergenceError after flushing
// metrics; checkpoints already written are left intact.
TrainResult train(TrainerState& state, const TrainPlan& plan, const TrainData& data,
                  const std::string& out_dir);

}  // namespace bilm
