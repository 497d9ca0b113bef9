#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "bilm/common.hpp"
#include "bilm/runconfig.hpp"

using namespace bilm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / (tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

RunConfig valid_l1_config(const TempDir& dir) {
    RunConfig cfg;
    cfg.phase = "l1";
    cfg.regime = "mono";
    cfg.epochs = 3;
    cfg.checkpoint_epochs = {1, 3};
    cfg.tokenizer_dir = dir.str() + "/tok";
    cfg.corpus = dir.str() + "/corpus.txt";
    cfg.out_dir = dir.str() + "/run";
    cfg.model.vocab_size = 32;
    return cfg;
}

bool has_key(const ConfigError& e, const std::string& key) {
    return std::find(e.keys.begin(), e.keys.end(), key) != e.keys.end();
}

}  // namespace

TEST_CASE("run config JSON round-trips every field") {
    RunConfig cfg;
    cfg.phase = "l2";
    cfg.regime = "drop";
    cfg.seed = 77;
    cfg.epochs = 42;
    cfg.checkpoint_epochs = {1, 2, 42};
    cfg.model.emb_dim = 48;
    cfg.model.vocab_size = 99;
    cfg.optim.base_lr = 3e-4;
    cfg.optim.warmup_steps = 111;
    cfg.optim.accumulate_gradients = 2;
    cfg.masking.mask_rate = 0.25;
    cfg.stream.token_budget = 512;
    cfg.stream.max_positions = 64;
    cfg.stream.drop_bilingual_odd = false;
    cfg.tokenizer_dir = "tok";
    cfg.parallel_l1 = "a.txt";
    cfg.parallel_l2 = "b.txt";
    cfg.init_checkpoint = "l1.ckpt";
    cfg.out_dir = "out/run7";
    cfg.run_id = "my-run";

    RunConfig back = run_config_from_json(run_config_to_json(cfg));
    CHECK(back.phase == "l2");
    CHECK(back.regime == "drop");
    CHECK(back.seed == 77);
    CHECK(back.epochs == 42);
    CHECK(back.checkpoint_epochs == cfg.checkpoint_epochs);
    CHECK(back.model.emb_dim == 48);
    CHECK(back.model.vocab_size == 99);
    CHECK(back.optim.base_lr == doctest::Approx(3e-4));
    CHECK(back.optim.warmup_steps == 111);
    CHECK(back.optim.accumulate_gradients == 2);
    CHECK(back.masking.mask_rate == doctest::Approx(0.25));
    CHECK(back.stream.token_budget == 512);
    CHECK(back.stream.max_positions == 64);
    CHECK(back.stream.drop_bilingual_odd == false);
    CHECK(back.parallel_l1 == "a.txt");
    CHECK(back.init_checkpoint == "l1.ckpt");
    CHECK(back.out_dir == "out/run7");
    CHECK(back.run_id == "my-run");
    CHECK(run_config_to_json(back) == run_config_to_json(cfg));
}

TEST_CASE("unknown keys are config errors naming the key") {
    try {
        (void)run_config_from_json(R"({"version":1,"bogus":2})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(has_key(e, "bogus"));
    }
    try {
        (void)run_config_from_json(R"({"version":1,"optim":{"lr":0.1}})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(has_key(e, "optim.lr"));
    }
}

TEST_CASE("malformed JSON and wrong types are config errors") {
    CHECK_THROWS_AS((void)run_config_from_json("{nope"), ConfigError);
    CHECK_THROWS_AS((void)run_config_from_json(R"({"version":1,"epochs":"five"})"), ConfigError);
    CHECK_THROWS_AS((void)run_config_from_json(R"({"version":3})"), ConfigError);
}

TEST_CASE("structural validation lists every missing field") {
    RunConfig cfg;  // everything empty
    cfg.phase = "l2";
    try {
        validate_run_config(cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(has_key(e, "inputs.tokenizer_dir"));
        CHECK(has_key(e, "inputs.parallel_l1"));
        CHECK(has_key(e, "inputs.parallel_l2"));
        CHECK(has_key(e, "inputs.init_checkpoint"));
        CHECK(has_key(e, "out_dir"));
    }
}

TEST_CASE("from_scratch waives the init checkpoint requirement") {
    RunConfig cfg;
    cfg.phase = "l2";
    cfg.regime = "drop";
    cfg.from_scratch = true;
    cfg.tokenizer_dir = "tok";
    cfg.parallel_l1 = "a";
    cfg.parallel_l2 = "b";
    cfg.out_dir = "o";
    cfg.model.vocab_size = 32;
    CHECK_NOTHROW(validate_run_config(cfg));
}

TEST_CASE("phase and regime strings are validated") {
    RunConfig cfg;
    cfg.phase = "l3";
    try {
        (void)cfg.plan();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(has_key(e, "phase"));
    }
    cfg.phase = "l1";
    cfg.regime = "para";  // mono phases must use the mono regime
    CHECK_THROWS_AS((void)cfg.plan(), ConfigError);
}

TEST_CASE("input existence check names the missing key") {
    TempDir dir("bilm_rc_inputs");
    RunConfig cfg = valid_l1_config(dir);
    fs::create_directories(cfg.tokenizer_dir);
    try {
        check_run_inputs(cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(has_key(e, "inputs.corpus"));
        CHECK(std::string(e.what()).find("inputs.corpus") != std::string::npos);
    }
    write_file(cfg.corpus, "hello world\n");
    CHECK_NOTHROW(check_run_inputs(cfg));
}

TEST_CASE("output root env var applies to relative out dirs only") {
    RunConfig cfg;
    cfg.out_dir = "runs/x";
    ::setenv("BILM_OUT_ROOT", "/tmp/bilm_root", 1);
    CHECK(resolve_out_dir(cfg) == "/tmp/bilm_root/runs/x");
    cfg.out_dir = "/abs/runs/x";
    CHECK(resolve_out_dir(cfg) == "/abs/runs/x");
    ::unsetenv("BILM_OUT_ROOT");
    cfg.out_dir = "runs/x";
    CHECK(resolve_out_dir(cfg) == "runs/x");
}

TEST_CASE("run lock is exclusive and released on destruction") {
    TempDir dir("bilm_rc_lock");
    const std::string run = dir.str() + "/run";
    auto take = [&] { RunLock inner(run); };
    {
        RunLock lock(run);
        CHECK(fs::exists(run + "/.lock"));
        CHECK_THROWS_AS(take(), IoError);
    }
    CHECK(!fs::exists(run + "/.lock"));
    CHECK_NOTHROW(take());
}

TEST_CASE("manifest JSON round-trips") {
    Manifest m;
    m.run_id = "l2-drop-seed7";
    m.phase = "l2";
    m.regime = "drop";
    m.seed = 7;
    m.config_hash = 0xdeadbeefull;
    m.vocab_hash = 42;
    m.opt_steps = 100;
    m.skipped_batches = 1;
    m.truncated = 2;
    m.metrics_rows = 33;
    m.checkpoints = {{"epoch_0001.ckpt", "aa"}, {"epoch_0002.ckpt", "bb"}};
    m.finished = true;
    Manifest back = manifest_from_json(manifest_to_json(m));
    CHECK(back.run_id == m.run_id);
    CHECK(back.config_hash == m.config_hash);
    CHECK(back.checkpoints == m.checkpoints);
    CHECK(back.metrics_rows == 33);
    CHECK(manifest_to_json(back) == manifest_to_json(m));
    CHECK_THROWS_AS((void)manifest_from_json("{}"), InputError);
}

TEST_CASE("make_manifest scans the run directory deterministically") {
    TempDir dir("bilm_rc_manifest");
    RunConfig cfg = valid_l1_config(dir);
    const std::string run = dir.str() + "/run";
    fs::create_directories(run + "/checkpoints");
    write_file(run + "/metrics.csv", "epoch,step,split,loss,lr,tokens\n1,1,train,2,0.1,8\n");
    write_file(run + "/checkpoints/epoch_0002.ckpt", "fake2");
    write_file(run + "/checkpoints/epoch_0001.ckpt", "fake1");
    TrainResult res;
    res.opt_steps = 9;
    res.skipped_batches = 0;
    res.truncated = 3;

    Manifest m = make_manifest(cfg, res, 0x1234, run);
    CHECK(m.run_id == "l1-seed1");
    CHECK(m.metrics_rows == 1);
    REQUIRE(m.checkpoints.size() == 2);
    CHECK(m.checkpoints[0].first == "epoch_0001.ckpt");
    CHECK(m.checkpoints[1].first == "epoch_0002.ckpt");
    CHECK(m.checkpoints[0].second == to_hex(fnv1a64("fake1")));
    Manifest again = make_manifest(cfg, res, 0x1234, run);
    CHECK(manifest_to_json(again) == manifest_to_json(m));

    save_manifest(run + "/manifest.json", m);
    Manifest loaded = load_manifest(run + "/manifest.json");
    CHECK(manifest_to_json(loaded) == manifest_to_json(m));
}
