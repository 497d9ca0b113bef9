#include <doctest.h>

#include <filesystem>
#include <string>

#include "bilm/checkpoint.hpp"
#include "bilm/common.hpp"

using namespace bilm;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.emb_dim = 8;
    c.ffn_dim = 12;
    c.n_layers = 2;
    c.n_heads = 2;
    c.max_positions = 6;
    c.n_languages = 2;
    c.vocab_size = 17;
    return c;
}

Checkpoint make_checkpoint(bool with_optimizer) {
    Checkpoint c;
    c.config = small_config();
    c.phase = "l2-para";
    c.epoch = 7;
    c.seed = 12345;
    c.vocab_hash = 0xdeadbeefcafef00dull;
    c.opt_step = 4242;
    c.params = init_params<float>(c.config, 77);
    if (with_optimizer) {
        c.has_optimizer = true;
        for (auto& [name, t] : c.params.named_tensors()) {
            Tensor<float> m(t->shape), v(t->shape);
            for (size_t i = 0; i < m.data.size(); ++i) {
                m.data[i] = static_cast<float>(i % 13) * 0.01f;
                v.data[i] = static_cast<float>(i % 7) * 0.001f;
            }
            c.opt_m.push_back(std::move(m));
            c.opt_v.push_back(std::move(v));
        }
    }
    return c;
}

std::string tmp_path(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "bilm_test_ckpt";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_CASE("checkpoint: parameters round-trip bitwise") {
    auto path = tmp_path("plain.ckpt");
    Checkpoint c = make_checkpoint(false);
    save_checkpoint(path, c);
    Checkpoint back = load_checkpoint(path);

    CHECK(back.config == c.config);
    CHECK(back.phase == c.phase);
    CHECK(back.epoch == c.epoch);
    CHECK(back.seed == c.seed);
    CHECK(back.vocab_hash == c.vocab_hash);
    CHECK(back.opt_step == c.opt_step);
    CHECK(back.has_optimizer == false);

    auto a = c.params.named_tensors();
    auto b = back.params.named_tensors();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second->shape == b[i].second->shape);
        CHECK(a[i].second->data == b[i].second->data);  // bitwise: same floats
    }
}

TEST_CASE("checkpoint: optimizer moments ride along for exact resume") {
    auto path = tmp_path("opt.ckpt");
    Checkpoint c = make_checkpoint(true);
    save_checkpoint(path, c);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.has_optimizer);
    REQUIRE(back.opt_m.size() == c.opt_m.size());
    for (size_t i = 0; i < c.opt_m.size(); ++i) {
        CHECK(back.opt_m[i].data == c.opt_m[i].data);
        CHECK(back.opt_v[i].data == c.opt_v[i].data);
    }
}

TEST_CASE("checkpoint: saving twice yields identical bytes") {
    auto p1 = tmp_path("det1.ckpt"), p2 = tmp_path("det2.ckpt");
    Checkpoint c = make_checkpoint(true);
    save_checkpoint(p1, c);
    save_checkpoint(p2, c);
    CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("checkpoint: corrupt inputs are rejected with input errors") {
    auto path = tmp_path("good.ckpt");
    Checkpoint c = make_checkpoint(false);
    save_checkpoint(path, c);
    std::string bytes = read_file(path);

    auto bad = tmp_path("bad.ckpt");

    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    write_file(bad, wrong_magic);
    CHECK_THROWS_AS(load_checkpoint(bad), InputError);

    std::string wrong_version = bytes;
    wrong_version[8] = 9;
    write_file(bad, wrong_version);
    CHECK_THROWS_AS(load_checkpoint(bad), InputError);

    write_file(bad, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(bad), InputError);

    write_file(bad, bytes + "garbage");
    CHECK_THROWS_AS(load_checkpoint(bad), InputError);

    CHECK_THROWS_AS(load_checkpoint(tmp_path("missing.ckpt")), Error);
}

TEST_CASE("checkpoint: refuses to serialize non-finite parameters") {
    Checkpoint c = make_checkpoint(false);
    c.params.tok_emb.data[3] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(save_checkpoint(tmp_path("nan.ckpt"), c), DivergenceError);
}

TEST_CASE("checkpoint: model config JSON round-trips") {
    ModelConfig cfg = small_config();
    cfg.tied_output = false;
    cfg.dropout = 0.25;
    ModelConfig back = model_config_from_json(model_config_to_json(cfg));
    CHECK(back == cfg);
    CHECK_THROWS_AS(model_config_from_json("{not json"), InputError);
    CHECK_THROWS_AS(model_config_from_json("{\"emb_dim\": 4}"), InputError);
}
