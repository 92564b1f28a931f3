#include "modlens/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as little-endian binary32");

namespace modlens::gpt {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'L', 'N', 'S'};

void write_u32(std::ostream& out, uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.write(buf, 4);
}

uint32_t read_u32(std::istream& in) {
    char buf[4];
    in.read(buf, 4);
    if (!in) throw CheckpointError(CheckpointFault::truncated, "checkpoint: truncated header");
    uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
}

} // namespace

json model_config_to_json(const ModelConfig& cfg) {
    return json{
        {"num_layers", cfg.num_layers},     {"num_heads", cfg.num_heads},
        {"d_model", cfg.d_model},           {"vocab_size", cfg.vocab_size},
        {"context_window", cfg.context_window}, {"dropout_prob", cfg.dropout_prob},
    };
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.num_layers = j.at("num_layers").get<int>();
    cfg.num_heads = j.at("num_heads").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.context_window = j.at("context_window").get<int>();
    cfg.dropout_prob = j.at("dropout_prob").get<double>();
    cfg.validate();
    return cfg;
}

void save_checkpoint(const ParamSet<float>& params, const ModelConfig& config,
                     const CheckpointMeta& meta, const std::filesystem::path& path) {
    if (!(params.config == config))
        throw CheckpointError(CheckpointFault::shape_mismatch,
                              "save_checkpoint: params were built for a different config");

    json dir = json::array();
    uint64_t offset = 0;
    params.for_each([&](const ParamInfo& info, const Tensor<float>& t) {
        dir.push_back(json{{"name", info.name},
                           {"shape", t.shape},
                           {"offset", offset},
                           {"dtype", "f32"}});
        offset += static_cast<uint64_t>(t.size()) * sizeof(float);
    });

    json header{
        {"config", model_config_to_json(config)},
        {"iteration", meta.iteration},
        {"rng_seed", meta.rng_seed},
        {"metrics", meta.metrics},
        {"tensors", dir},
    };
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointFault::io, "save_checkpoint: cannot open " +
                                                             path.string());
    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<uint32_t>(header_str.size()));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    params.for_each([&](const ParamInfo&, const Tensor<float>& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(float)));
    });
    if (!out) throw CheckpointError(CheckpointFault::io, "save_checkpoint: write failed for " +
                                                             path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointFault::io, "load_checkpoint: cannot open " +
                                                            path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError(CheckpointFault::bad_magic,
                              "load_checkpoint: not a MLNS checkpoint");
    const uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointFault::bad_version,
                              "load_checkpoint: unsupported format version " +
                                  std::to_string(version));
    const uint32_t header_len = read_u32(in);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    if (!in) throw CheckpointError(CheckpointFault::truncated, "load_checkpoint: truncated header");

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw CheckpointError(CheckpointFault::bad_header,
                              std::string("load_checkpoint: header parse error: ") + e.what());
    }

    LoadedCheckpoint out;
    try {
        out.config = model_config_from_json(header.at("config"));
        out.meta.iteration = header.at("iteration").get<int64_t>();
        out.meta.rng_seed = header.at("rng_seed").get<uint64_t>();
        out.meta.metrics = header.value("metrics", json::object());
    } catch (const json::exception& e) {
        throw CheckpointError(CheckpointFault::bad_header,
                              std::string("load_checkpoint: bad header fields: ") + e.what());
    }

    out.params = ParamSet<float>::shaped(out.config);

    // Index the directory by name, then walk the expected tensors.
    std::unordered_map<std::string, json> dir;
    for (const auto& e : header.at("tensors")) dir[e.at("name").get<std::string>()] = e;

    const std::streamoff payload_base = in.tellg();
    out.params.for_each([&](const ParamInfo& info, Tensor<float>& t) {
        auto it = dir.find(info.name);
        if (it == dir.end())
            throw CheckpointError(CheckpointFault::bad_header,
                                  "load_checkpoint: missing tensor " + info.name);
        const auto shape = it->second.at("shape").get<std::vector<int64_t>>();
        if (shape != t.shape)
            throw CheckpointError(CheckpointFault::shape_mismatch,
                                  "load_checkpoint: shape mismatch for tensor " + info.name);
        const uint64_t offset = it->second.at("offset").get<uint64_t>();
        in.seekg(payload_base + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in)
            throw CheckpointError(CheckpointFault::truncated,
                                  "load_checkpoint: truncated payload for tensor " + info.name);
    });
    return out;
}

} // namespace modlens::gpt
