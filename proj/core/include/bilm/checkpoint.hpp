#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilm/model.hpp"
#include "bilm/tensor.hpp"

namespace bilm {

// On-disk model snapshot. Header: versioned magic, then a JSON text block
// (config, phase, epoch, seed, vocab hash, optimizer step). Body: named,
// length-prefixed little-endian float32 tensor blobs; optimizer moments ride
// along as "adam.m.*" / "adam.v.*" so resumption is bit-exact.
struct Checkpoint {
    ModelConfig config;
    std::string phase;  // "l1", "l2-para", ...
    std::int64_t epoch = 0;
    std::uint64_t seed = 0;
    std::uint64_t vocab_hash = 0;
    std::int64_t opt_step = 0;
    ModelParams<float> params;
    bool has_optimizer = false;
    std::vector<Tensor<float>> opt_m;  // aligned with params.named_tensors()
    std::vector<Tensor<float>> opt_v;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// Shared JSON (de)serialization of the model config, reused by run configs.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace bilm
