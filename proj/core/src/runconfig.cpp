#include "bilm/runconfig.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "bilm/checkpoint.hpp"
#include "bilm/common.hpp"

namespace bilm {

using nlohmann::json;

namespace {

namespace fs = std::filesystem;

void expect_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    std::vector<std::string> bad;
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = std::any_of(allowed.begin(), allowed.end(),
                                 [&](const char* k) { return it.key() == k; });
        if (!known) bad.push_back(where.empty() ? it.key() : where + "." + it.key());
    }
    if (!bad.empty()) throw ConfigError("unknown run config keys", bad);
}

template <typename T>
T get_or(const json& j, const char* key, T def) {
    auto it = j.find(key);
    return it == j.end() ? def : it->get<T>();
}

}  // namespace

std::string RunConfig::resolved_run_id() const {
    if (!run_id.empty()) return run_id;
    const std::string label = phase == "l2" ? "l2-" + regime : phase;
    return strfmt("%s-seed%llu", label.c_str(), static_cast<unsigned long long>(seed));
}

TrainPlan RunConfig::plan() const {
    TrainPlan p;
    try {
        p.phase = phase_from_string(phase);
    } catch (const Error&) {
        throw ConfigError("unknown phase '" + phase + "'", {"phase"});
    }
    try {
        p.regime = regime_from_string(regime);
    } catch (const Error&) {
        throw ConfigError("unknown regime '" + regime + "'", {"regime"});
    }
    p.epochs = epochs;
    p.checkpoint_epochs = checkpoint_epochs;
    p.seed = seed;
    p.masking = masking;
    p.stream = stream;
    p.optim = optim;
    p.validate();
    return p;
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["version"] = cfg.version;
    j["phase"] = cfg.phase;
    j["regime"] = cfg.regime;
    j["seed"] = cfg.seed;
    j["epochs"] = cfg.epochs;
    j["checkpoint_epochs"] = cfg.checkpoint_epochs;
    j["model"] = json::parse(model_config_to_json(cfg.model));
    j["optim"] = {{"base_lr", cfg.optim.base_lr},
                  {"warmup_steps", cfg.optim.warmup_steps},
                  {"beta1", cfg.optim.beta1},
                  {"beta2", cfg.optim.beta2},
                  {"eps", cfg.optim.eps},
                  {"weight_decay", cfg.optim.weight_decay},
                  {"clip_norm", cfg.optim.clip_norm},
                  {"accumulate_gradients", cfg.optim.accumulate_gradients}};
    j["masking"] = {{"mask_rate", cfg.masking.mask_rate},
                    {"p_mask", cfg.masking.p_mask},
                    {"p_random", cfg.masking.p_random},
                    {"p_keep", cfg.masking.p_keep}};
    j["stream"] = {{"l1_lang", cfg.stream.l1_lang},
                   {"l2_lang", cfg.stream.l2_lang},
                   {"token_budget", cfg.stream.token_budget},
                   {"max_positions", cfg.stream.max_positions},
                   {"drop_bilingual_odd", cfg.stream.drop_bilingual_odd}};
    j["inputs"] = {{"tokenizer_dir", cfg.tokenizer_dir},
                   {"corpus", cfg.corpus},
                   {"parallel_l1", cfg.parallel_l1},
                   {"parallel_l2", cfg.parallel_l2},
                   {"init_checkpoint", cfg.init_checkpoint},
                   {"from_scratch", cfg.from_scratch}};
    j["out_dir"] = cfg.out_dir;
    j["run_id"] = cfg.run_id;
    return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
    }
    try {
        expect_keys(j, "", {"version", "phase", "regime", "seed", "epochs", "checkpoint_epochs",
                            "model", "optim", "masking", "stream", "inputs", "out_dir", "run_id"});
        RunConfig cfg;
        cfg.version = get_or(j, "version", 1);
        if (cfg.version != 1) throw ConfigError("unsupported run config version", {"version"});
        cfg.phase = get_or<std::string>(j, "phase", cfg.phase);
        cfg.regime = get_or<std::string>(j, "regime", cfg.regime);
        cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
        cfg.epochs = get_or<std::int64_t>(j, "epochs", cfg.epochs);
        cfg.checkpoint_epochs =
            get_or<std::vector<std::int64_t>>(j, "checkpoint_epochs", cfg.checkpoint_epochs);
        if (j.contains("model")) {
            const json& m = j["model"];
            expect_keys(m, "model",
                        {"emb_dim", "ffn_dim", "n_layers", "n_heads", "dropout",
                         "attention_dropout", "max_positions", "n_languages", "vocab_size",
                         "tied_output"});
            cfg.model.emb_dim = get_or(m, "emb_dim", cfg.model.emb_dim);
            cfg.model.ffn_dim = get_or(m, "ffn_dim", cfg.model.ffn_dim);
            cfg.model.n_layers = get_or(m, "n_layers", cfg.model.n_layers);
            cfg.model.n_heads = get_or(m, "n_heads", cfg.model.n_heads);
            cfg.model.dropout = get_or(m, "dropout", cfg.model.dropout);
            cfg.model.attention_dropout =
                get_or(m, "attention_dropout", cfg.model.attention_dropout);
            cfg.model.max_positions = get_or(m, "max_positions", cfg.model.max_positions);
            cfg.model.n_languages = get_or(m, "n_languages", cfg.model.n_languages);
            cfg.model.vocab_size = get_or(m, "vocab_size", cfg.model.vocab_size);
            cfg.model.tied_output = get_or(m, "tied_output", cfg.model.tied_output);
        }
        if (j.contains("optim")) {
            const json& o = j["optim"];
            expect_keys(o, "optim", {"base_lr", "warmup_steps", "beta1", "beta2", "eps",
                                     "weight_decay", "clip_norm", "accumulate_gradients"});
            cfg.optim.base_lr = get_or(o, "base_lr", cfg.optim.base_lr);
            cfg.optim.warmup_steps = get_or(o, "warmup_steps", cfg.optim.warmup_steps);
            cfg.optim.beta1 = get_or(o, "beta1", cfg.optim.beta1);
            cfg.optim.beta2 = get_or(o, "beta2", cfg.optim.beta2);
            cfg.optim.eps = get_or(o, "eps", cfg.optim.eps);
            cfg.optim.weight_decay = get_or(o, "weight_decay", cfg.optim.weight_decay);
            cfg.optim.clip_norm = get_or(o, "clip_norm", cfg.optim.clip_norm);
            cfg.optim.accumulate_gradients =
                get_or(o, "accumulate_gradients", cfg.optim.accumulate_gradients);
        }
        if (j.contains("masking")) {
            const json& m = j["masking"];
            expect_keys(m, "masking", {"mask_rate", "p_mask", "p_random", "p_keep"});
            cfg.masking.mask_rate = get_or(m, "mask_rate", cfg.masking.mask_rate);
            cfg.masking.p_mask = get_or(m, "p_mask", cfg.masking.p_mask);
            cfg.masking.p_random = get_or(m, "p_random", cfg.masking.p_random);
            cfg.masking.p_keep = get_or(m, "p_keep", cfg.masking.p_keep);
        }
        if (j.contains("stream")) {
            const json& s = j["stream"];
            expect_keys(s, "stream",
                        {"l1_lang", "l2_lang", "token_budget", "max_positions", "drop_bilingual_odd"});
            cfg.stream.l1_lang = get_or(s, "l1_lang", cfg.stream.l1_lang);
            cfg.stream.l2_lang = get_or(s, "l2_lang", cfg.stream.l2_lang);
            cfg.stream.token_budget = get_or(s, "token_budget", cfg.stream.token_budget);
            cfg.stream.max_positions = get_or(s, "max_positions", cfg.stream.max_positions);
            cfg.stream.drop_bilingual_odd =
                get_or(s, "drop_bilingual_odd", cfg.stream.drop_bilingual_odd);
        }
        if (j.contains("inputs")) {
            const json& i = j["inputs"];
            expect_keys(i, "inputs", {"tokenizer_dir", "corpus", "parallel_l1", "parallel_l2",
                                      "init_checkpoint", "from_scratch"});
            cfg.tokenizer_dir = get_or<std::string>(i, "tokenizer_dir", "");
            cfg.corpus = get_or<std::string>(i, "corpus", "");
            cfg.parallel_l1 = get_or<std::string>(i, "parallel_l1", "");
            cfg.parallel_l2 = get_or<std::string>(i, "parallel_l2", "");
            cfg.init_checkpoint = get_or<std::string>(i, "init_checkpoint", "");
            cfg.from_scratch = get_or(i, "from_scratch", false);
        }
        cfg.out_dir = get_or<std::string>(j, "out_dir", "");
        cfg.run_id = get_or<std::string>(j, "run_id", "");
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config field has wrong type: ") + e.what());
    }
}

RunConfig load_run_config(const std::string& path) {
    try {
        return run_config_from_json(read_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what(), e.keys);
    }
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
    write_file(path, run_config_to_json(cfg));
}

void validate_run_config(const RunConfig& cfg) {
    std::vector<std::string> missing;
    if (cfg.tokenizer_dir.empty()) missing.push_back("inputs.tokenizer_dir");
    if (cfg.out_dir.empty()) missing.push_back("out_dir");
    if (cfg.phase == "l1") {
        if (cfg.corpus.empty()) missing.push_back("inputs.corpus");
    } else {
        if (cfg.parallel_l1.empty()) missing.push_back("inputs.parallel_l1");
        if (cfg.parallel_l2.empty()) missing.push_back("inputs.parallel_l2");
        if (cfg.init_checkpoint.empty() && !cfg.from_scratch) {
            missing.push_back("inputs.init_checkpoint");
        }
    }
    if (!missing.empty()) throw ConfigError("missing required run config values", missing);
    cfg.plan();
}

void check_run_inputs(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> paths;
    paths.emplace_back("inputs.tokenizer_dir", cfg.tokenizer_dir);
    if (cfg.phase == "l1") {
        paths.emplace_back("inputs.corpus", cfg.corpus);
    } else {
        paths.emplace_back("inputs.parallel_l1", cfg.parallel_l1);
        paths.emplace_back("inputs.parallel_l2", cfg.parallel_l2);
    }
    if (!cfg.init_checkpoint.empty()) paths.emplace_back("inputs.init_checkpoint", cfg.init_checkpoint);
    std::vector<std::string> bad;
    std::string detail;
    for (const auto& [key, path] : paths) {
        if (!fs::exists(path)) {
            bad.push_back(key);
            detail += strfmt("%s%s=%s", detail.empty() ? "" : ", ", key.c_str(), path.c_str());
        }
    }
    if (!bad.empty()) throw ConfigError("missing input path(s): " + detail, bad);
}

std::string resolve_out_dir(const RunConfig& cfg) {
    const char* root = std::getenv("BILM_OUT_ROOT");
    if (root != nullptr && *root != '\0' && !cfg.out_dir.empty() && cfg.out_dir[0] != '/') {
        return std::string(root) + "/" + cfg.out_dir;
    }
    return cfg.out_dir;
}

RunLock::RunLock(const std::string& dir) {
    fs::create_directories(dir);
    path_ = dir + "/.lock";
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
        if (errno == EEXIST) {
            throw IoError("run directory is owned by another process (remove stale " + path_ +
                          " if no run is active)");
        }
        throw IoError("cannot create lock file " + path_ + ": " + std::strerror(errno));
    }
    const std::string pid = strfmt("%lld\n", static_cast<long long>(::getpid()));
    if (::write(fd_, pid.data(), pid.size()) < 0) {
        // Ownership is established by O_EXCL; the pid note is best-effort.
    }
}

RunLock::~RunLock() {
    if (fd_ >= 0) {
        ::close(fd_);
        ::unlink(path_.c_str());
    }
}

RunLock::RunLock(RunLock&& other) noexcept : path_(std::move(other.path_)), fd_(other.fd_) {
    other.fd_ = -1;
}

std::string manifest_to_json(const Manifest& m) {
    json j;
    j["version"] = m.version;
    j["run_id"] = m.run_id;
    j["phase"] = m.phase;
    j["regime"] = m.regime;
    j["seed"] = m.seed;
    j["config_hash"] = to_hex(m.config_hash);
    j["vocab_hash"] = to_hex(m.vocab_hash);
    j["opt_steps"] = m.opt_steps;
    j["skipped_batches"] = m.skipped_batches;
    j["truncated"] = m.truncated;
    j["metrics_rows"] = m.metrics_rows;
    json cks = json::object();
    for (const auto& [name, hash] : m.checkpoints) cks[name] = hash;
    j["checkpoints"] = cks;
    j["finished"] = m.finished;
    return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        Manifest m;
        m.version = j.at("version").get<int>();
        m.run_id = j.at("run_id").get<std::string>();
        m.phase = j.at("phase").get<std::string>();
        m.regime = j.at("regime").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
        m.vocab_hash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
        m.opt_steps = j.at("opt_steps").get<std::int64_t>();
        m.skipped_batches = j.at("skipped_batches").get<std::int64_t>();
        m.truncated = j.at("truncated").get<std::int64_t>();
        m.metrics_rows = j.at("metrics_rows").get<std::int64_t>();
        for (const auto& [name, hash] : j.at("checkpoints").items()) {
            m.checkpoints.emplace_back(name, hash.get<std::string>());
        }
        m.finished = j.at("finished").get<bool>();
        return m;
    } catch (const json::exception& e) {
        throw InputError(std::string("bad manifest: ") + e.what());
    }
}

void save_manifest(const std::string& path, const Manifest& m) {
    write_file(path, manifest_to_json(m));
}

Manifest load_manifest(const std::string& path) {
    try {
        return manifest_from_json(read_file(path));
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::uint64_t file_hash(const std::string& path) { return fnv1a64(read_file(path)); }

Manifest make_manifest(const RunConfig& cfg, const TrainResult& result, std::uint64_t vocab_hash,
                       const std::string& run_dir) {
    Manifest m;
    m.run_id = cfg.resolved_run_id();
    m.phase = cfg.phase;
    m.regime = cfg.regime;
    m.seed = cfg.seed;
    m.config_hash = fnv1a64(run_config_to_json(cfg));
    m.vocab_hash = vocab_hash;
    m.opt_steps = result.opt_steps;
    m.skipped_batches = result.skipped_batches;
    m.truncated = result.truncated;
    const std::string metrics = run_dir + "/metrics.csv";
    if (fs::exists(metrics)) {
        m.metrics_rows = static_cast<std::int64_t>(read_lines(metrics).size()) - 1;
    }
    const std::string ckpt_dir = run_dir + "/checkpoints";
    if (fs::is_directory(ckpt_dir)) {
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(ckpt_dir)) {
            if (e.path().extension() == ".ckpt") names.push_back(e.path().filename().string());
        }
        std::sort(names.begin(), names.end());
        for (const auto& n : names) {
            m.checkpoints.emplace_back(n, to_hex(file_hash(ckpt_dir + "/" + n)));
        }
    }
    m.finished = true;
    return m;
}

}  // namespace bilm
