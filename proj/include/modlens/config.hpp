#pragma once

#include "modlens/arith.hpp"
#include "modlens/model.hpp"
#include "modlens/trainer.hpp"

#include <filesystem>
#include <string>

namespace modlens::cli {

struct ProbeConfig {
    uint64_t stride = 37;
    uint64_t sample_count = 100000;
    uint64_t perturb_pairs = 1000;
    int digit_place = 3;
    int pca_k = 4;
    uint64_t pca_pairs = 10000;
    bool exhaustive = false;

    bool operator==(const ProbeConfig&) const = default;
};

// Everything a pipeline run needs, resolvable from a preset plus overrides.
// Round-trips losslessly through its file form.
struct RunConfig {
    std::string preset = "add3"; // add3 | mul3
    uint64_t seed = 1;
    std::string out_dir = "runs/add3";

    arith::CorpusSpec corpus;
    gpt::ModelConfig model;
    train::TrainConfig train;
    ProbeConfig probe;

    static RunConfig from_preset(const std::string& name, uint64_t seed = 1);
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

// Flat `key = value` text with [section] headers; '#' starts a comment.
// Unknown sections or keys are configuration errors. See README for the
// grammar and the full key list.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);

} // namespace modlens::cli
