#include "bilm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include <json.hpp>

#include "bilm/common.hpp"

namespace bilm {

namespace {

constexpr char kMagic[8] = {'B', 'I', 'L', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

using nlohmann::json;

json config_json(const ModelConfig& c) {
    return json{
        {"emb_dim", c.emb_dim},
        {"ffn_dim", c.ffn_dim},
        {"n_layers", c.n_layers},
        {"n_heads", c.n_heads},
        {"dropout", c.dropout},
        {"attention_dropout", c.attention_dropout},
        {"max_positions", c.max_positions},
        {"n_languages", c.n_languages},
        {"vocab_size", c.vocab_size},
        {"tied_output", c.tied_output},
    };
}

ModelConfig config_from(const json& j) {
    ModelConfig c;
    try {
        c.emb_dim = j.at("emb_dim").get<std::int32_t>();
        c.ffn_dim = j.at("ffn_dim").get<std::int32_t>();
        c.n_layers = j.at("n_layers").get<std::int32_t>();
        c.n_heads = j.at("n_heads").get<std::int32_t>();
        c.dropout = j.at("dropout").get<double>();
        c.attention_dropout = j.at("attention_dropout").get<double>();
        c.max_positions = j.at("max_positions").get<std::int32_t>();
        c.n_languages = j.at("n_languages").get<std::int32_t>();
        c.vocab_size = j.at("vocab_size").get<std::int32_t>();
        c.tied_output = j.at("tied_output").get<bool>();
    } catch (const json::exception& e) {
        throw InputError(std::string("model config JSON: ") + e.what());
    }
    return c;
}

class Reader {
public:
    Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

    const unsigned char* take(size_t n) {
        if (off_ + n > buf_.size()) throw InputError("checkpoint truncated: " + path_);
        const unsigned char* p = reinterpret_cast<const unsigned char*>(buf_.data()) + off_;
        off_ += n;
        return p;
    }
    std::uint32_t u32() { return get_u32le(take(4)); }
    std::uint64_t u64() { return get_u64le(take(8)); }
    std::string bytes(size_t n) {
        const unsigned char* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    bool done() const { return off_ == buf_.size(); }

private:
    const std::string& buf_;
    std::string path_;
    size_t off_ = 0;
};

void put_blob(std::string& out, const std::string& name, const Tensor<float>& t) {
    put_u32le(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32le(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::int64_t d : t.shape) put_u64le(out, static_cast<std::uint64_t>(d));
    put_u64le(out, static_cast<std::uint64_t>(t.numel()));
    size_t base = out.size();
    out.resize(base + t.data.size() * 4);
    // Direct copy is the little-endian fast path; element-wise otherwise.
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data() + base, t.data.data(), t.data.size() * 4);
    } else {
        out.resize(base);
        for (float v : t.data) put_f32le(out, v);
    }
}

std::pair<std::string, Tensor<float>> get_blob(Reader& r) {
    std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    std::uint32_t ndim = r.u32();
    if (ndim > 8) throw InputError("checkpoint blob '" + name + "': implausible rank");
    std::vector<std::int64_t> shape;
    std::int64_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        shape.push_back(static_cast<std::int64_t>(r.u64()));
        count *= shape.back();
    }
    std::uint64_t n = r.u64();
    if (static_cast<std::int64_t>(n) != count) throw InputError("checkpoint blob '" + name + "': length/shape mismatch");
    Tensor<float> t(shape);
    const unsigned char* p = r.take(n * 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(t.data.data(), p, n * 4);
    } else {
        for (std::uint64_t i = 0; i < n; ++i) t.data[i] = get_f32le(p + i * 4);
    }
    return {std::move(name), std::move(t)};
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw InputError("model config: invalid JSON");
    return config_from(j);
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    if (!c.params.all_finite()) throw DivergenceError("refusing to checkpoint non-finite parameters");
    json header = {
        {"config", config_json(c.config)},
        {"phase", c.phase},
        {"epoch", c.epoch},
        {"seed", c.seed},
        {"vocab_hash", to_hex(c.vocab_hash)},
        {"opt_step", c.opt_step},
        {"has_optimizer", c.has_optimizer},
    };
    std::string head = header.dump();

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32le(out, kVersion);
    put_u64le(out, head.size());
    out += head;

    auto named = c.params.named_tensors();
    std::uint32_t blob_count = static_cast<std::uint32_t>(named.size());
    if (c.has_optimizer) {
        if (c.opt_m.size() != named.size() || c.opt_v.size() != named.size()) {
            throw InputError("checkpoint: optimizer slots misaligned with parameters");
        }
        blob_count *= 3;
    }
    put_u32le(out, blob_count);
    for (const auto& [name, t] : named) put_blob(out, name, *t);
    if (c.has_optimizer) {
        for (size_t i = 0; i < named.size(); ++i) put_blob(out, "adam.m." + named[i].first, c.opt_m[i]);
        for (size_t i = 0; i < named.size(); ++i) put_blob(out, "adam.v." + named[i].first, c.opt_v[i]);
    }
    write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::string buf = read_file(path);
    Reader r(buf, path);
    if (std::memcmp(r.take(8), kMagic, 8) != 0) throw InputError("not a checkpoint file: " + path);
    std::uint32_t version = r.u32();
    if (version != kVersion) throw InputError(strfmt("unsupported checkpoint version %u in %s", version, path.c_str()));
    std::uint64_t head_len = r.u64();
    json header = json::parse(r.bytes(head_len), nullptr, false);
    if (header.is_discarded()) throw InputError("checkpoint header is not valid JSON: " + path);

    Checkpoint c;
    try {
        c.config = config_from(header.at("config"));
        c.phase = header.at("phase").get<std::string>();
        c.epoch = header.at("epoch").get<std::int64_t>();
        c.seed = header.at("seed").get<std::uint64_t>();
        c.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
        c.opt_step = header.at("opt_step").get<std::int64_t>();
        c.has_optimizer = header.at("has_optimizer").get<bool>();
    } catch (const json::exception& e) {
        throw InputError(std::string("checkpoint header: ") + e.what());
    }

    std::uint32_t blob_count = r.u32();
    std::map<std::string, Tensor<float>> blobs;
    for (std::uint32_t i = 0; i < blob_count; ++i) {
        auto [name, t] = get_blob(r);
        if (!blobs.emplace(std::move(name), std::move(t)).second) {
            throw InputError("checkpoint: duplicate blob in " + path);
        }
    }
    if (!r.done()) throw InputError("checkpoint: trailing bytes in " + path);

    c.params = init_params<float>(c.config, 0);  // shapes only; data overwritten below
    auto take_blob = [&](const std::string& name) {
        auto it = blobs.find(name);
        if (it == blobs.end()) throw InputError("checkpoint: missing blob '" + name + "' in " + path);
        Tensor<float> t = std::move(it->second);
        blobs.erase(it);
        return t;
    };
    for (auto& [name, t] : c.params.named_tensors()) {
        Tensor<float> loaded = take_blob(name);
        if (loaded.shape != t->shape) throw InputError("checkpoint: blob '" + name + "' has wrong shape");
        *t = std::move(loaded);
    }
    if (c.has_optimizer) {
        auto named = c.params.named_tensors();
        for (const auto& [name, t] : named) {
            Tensor<float> m = take_blob("adam.m." + name);
            if (m.shape != t->shape) throw InputError("checkpoint: optimizer blob shape mismatch for " + name);
            c.opt_m.push_back(std::move(m));
        }
        for (const auto& [name, t] : named) {
            Tensor<float> v = take_blob("adam.v." + name);
            if (v.shape != t->shape) throw InputError("checkpoint: optimizer blob shape mismatch for " + name);
            c.opt_v.push_back(std::move(v));
        }
    }
    if (!blobs.empty()) throw InputError("checkpoint: unexpected blob '" + blobs.begin()->first + "' in " + path);
    return c;
}

}  // namespace bilm
