#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bilm/trainer.hpp"

namespace bilm {

// Versioned JSON run configuration. One file fully describes one training
// run, so a run directory is replayable from its config snapshot alone.
struct RunConfig {
    int version = 1;
    std::string phase = "l1";     // l1 | l2 | l1-only
    std::string regime = "mono";  // mono (non-L2 phases) | para | nopara | drop
    std::uint64_t seed = 1;
    std::int64_t epochs = 5;
    std::vector<std::int64_t> checkpoint_epochs = {1, 2, 3, 4, 5};
    ModelConfig model;  // vocab_size 0 = sized from the tokenizer
    OptimConfig optim;
    MaskingConfig masking;
    StreamConfig stream;

    std::string tokenizer_dir;
    std::string corpus;                    // l1 phase: monolingual text, split 8:1:1
    std::string parallel_l1, parallel_l2;  // l2 / l1-only phases: aligned files
    std::string init_checkpoint;           // l2 / l1-only warm start
    bool from_scratch = false;             // explicit no-pretraining ablation
    std::string out_dir;
    std::string run_id;  // manifest identity; empty = "<phase_label>-seed<seed>"

    TrainPlan plan() const;  // converts and validates the schedule part
    std::string resolved_run_id() const;
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);  // unknown keys are config errors
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

// Structural checks (required fields per phase). Throws ConfigError naming
// the offending keys.
void validate_run_config(const RunConfig& cfg);
// Existence checks for every referenced input path, keyed by field name.
void check_run_inputs(const RunConfig& cfg);

// Final output directory: relative out_dir lands under $BILM_OUT_ROOT when
// that is set; absolute paths are taken as-is.
std::string resolve_out_dir(const RunConfig& cfg);

// Exclusive ownership of a run directory via an O_EXCL .lock file that lives
// for the lifetime of this object. A second owner is an IoError.
class RunLock {
public:
    explicit RunLock(const std::string& dir);
    ~RunLock();
    RunLock(RunLock&& other) noexcept;
    RunLock& operator=(RunLock&&) = delete;
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::string path_;
    int fd_ = -1;
};

// Deterministic summary of a finished run: no timestamps or absolute paths,
// so identical config + seed reproduce identical manifests.
struct Manifest {
    int version = 1;
    std::string run_id, phase, regime;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;  // fnv1a64 of the canonical config JSON
    std::uint64_t vocab_hash = 0;
    std::int64_t opt_steps = 0;
    std::int64_t skipped_batches = 0;
    std::int64_t truncated = 0;
    std::int64_t metrics_rows = 0;
    std::vector<std::pair<std::string, std::string>> checkpoints;  // file name -> content hash
    bool finished = false;
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);
void save_manifest(const std::string& path, const Manifest& m);
Manifest load_manifest(const std::string& path);

// Scans run_dir/checkpoints and metrics.csv into a manifest for this run.
Manifest make_manifest(const RunConfig& cfg, const TrainResult& result, std::uint64_t vocab_hash,
                       const std::string& run_dir);

std::uint64_t file_hash(const std::string& path);

}  // namespace bilm
