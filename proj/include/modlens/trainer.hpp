#pragma once

#include "modlens/arith.hpp"
#include "modlens/checkpoint.hpp"
#include "modlens/model.hpp"
#include "modlens/oracle.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace modlens::train {

struct TrainConfig {
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    double weight_decay = 0.1;
    double grad_norm_clip = 1.0;
    int batch_size = 64;
    int64_t max_iterations = 50000;
    int64_t eval_interval = 250;
    int64_t eval_subset_size = 1000;
    std::vector<double> milestones{0.14, 0.51, 1.0};
    uint64_t rng_seed = 1;
    gpt::MaskPolicy mask_policy = gpt::MaskPolicy::full;
    bool warmup = false;       // optional linear warmup of the learning rate
    int64_t warmup_steps = 100;

    void validate() const; // throws ConfigError
    bool operator==(const TrainConfig&) const = default;
};

// Per-tensor Adam moments mirroring the parameter shapes.
struct OptimState {
    gpt::ParamSet<float> m;
    gpt::ParamSet<float> v;
    int64_t step = 0;

    static OptimState zeros_like(const gpt::ParamSet<float>& params);
};

struct MetricsRow {
    int64_t iter = 0;
    double train_loss = 0;
    double train_acc = 0;
    double id_acc = 0;
    double ood_acc = 0;
    double oracle_match_rate = 0;
    double seconds = 0;
};

// Decoupled weight decay on weight matrices only (biases, normalization
// parameters, and embeddings are excluded); bias-corrected moments.
void adamw_step(gpt::ParamSet<float>& params, const gpt::ParamSet<float>& grads,
                OptimState& state, const TrainConfig& config,
                std::optional<double> lr_override = std::nullopt);

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm. Returns the pre-clip norm.
double clip_grad_norm(gpt::ParamSet<float>& grads, double max_norm);

struct EvalOutcome {
    double exact_match = 0;
    double oracle_match = 0;
    size_t count = 0;
};

// Greedy-decodes result_width tokens from each operand prefix and scores
// exact match of all answer digits; oracle agreement alongside when a spec is
// given.
EvalOutcome evaluate(const gpt::ParamSet<float>& params,
                     std::span<const arith::ArithSample> samples,
                     const arith::FormatSpec& format,
                     const oracle::OracleSpec* oracle_spec = nullptr);

double evaluate_exact_match(const gpt::ParamSet<float>& params,
                            std::span<const arith::ArithSample> samples,
                            const arith::FormatSpec& format);

struct TrainResult {
    std::vector<MetricsRow> metrics;
    std::filesystem::path final_checkpoint;
    std::filesystem::path initial_checkpoint;
    std::map<double, std::filesystem::path> milestone_checkpoints;
    int64_t iterations_run = 0;
    bool early_stopped = false;
};

// AdamW loop over minibatches of d1 with periodic exact-match evaluation on
// fixed subsets of d1/d2/d3, milestone checkpoints the first time ID accuracy
// crosses each threshold, and early stop on two consecutive full-D2 perfect
// evaluations. Checkpoints and metrics.csv land in out_dir.
TrainResult train(gpt::ParamSet<float>& params, const arith::SplitSet& splits,
                  const TrainConfig& config, const std::filesystem::path& out_dir,
                  bool verbose = false);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

} // namespace modlens::train
