#pragma once

#include "modlens/errors.hpp"
#include "modlens/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>

namespace modlens::gpt {

enum class CheckpointFault {
    io,
    bad_magic,
    bad_version,
    bad_header,
    shape_mismatch,
    truncated,
};

struct CheckpointError : DataError {
    CheckpointFault fault;
    CheckpointError(CheckpointFault f, const std::string& msg) : DataError(msg), fault(f) {}
};

struct CheckpointMeta {
    int64_t iteration = 0;
    uint64_t rng_seed = 0;
    nlohmann::json metrics = nlohmann::json::object();
};

// File layout: magic "MLNS", u32 LE format version, u32 LE header length,
// UTF-8 JSON header, then tensor payloads as little-endian binary32 in
// row-major order. Directory offsets are relative to the payload base (the
// byte right after the header).
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamSet<float>& params, const ModelConfig& config,
                     const CheckpointMeta& meta, const std::filesystem::path& path);

struct LoadedCheckpoint {
    ParamSet<float> params;
    ModelConfig config;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

} // namespace modlens::gpt
