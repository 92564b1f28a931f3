#pragma once

#include "modlens/config.hpp"
#include "modlens/probes.hpp"
#include "modlens/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace modlens::cli {

// On-disk layout of one pipeline run rooted at RunConfig::out_dir.
struct RunPaths {
    std::filesystem::path root, data, train_dir, probes, figures;
    static RunPaths from(const RunConfig& config);
    std::filesystem::path final_checkpoint() const { return train_dir / "final.ckpt"; }
    std::filesystem::path metrics_csv() const { return train_dir / "metrics.csv"; }
};

// Generates and writes the dataset unless an identical-spec one is already on
// disk.
arith::SplitSet ensure_dataset(const RunConfig& config);
arith::SplitSet require_dataset(const RunConfig& config);

// Trains from scratch into <out>/train; `reuse` returns the existing run when
// a final checkpoint is already present.
train::TrainResult run_train(const RunConfig& config, bool verbose, bool reuse = false);

gpt::ParamSet<float> load_final_model(const RunConfig& config);

struct LatticeOutcome {
    probe::SweepResult::Rates rates;
    std::filesystem::path csv;
    std::vector<std::filesystem::path> figures;
};
LatticeOutcome run_probe_lattice(const RunConfig& config);

struct PerturbOutcome {
    double fraction_argmax_equal = 0;
    bool worked_examples_match = false; // both families: variants equal base, base correct
    std::filesystem::path report_json;
    std::vector<std::filesystem::path> figures;
};
PerturbOutcome run_probe_perturb(const RunConfig& config);

struct PcaOutcome {
    double ratio_sum = 0;
    std::vector<double> ratios;
    std::filesystem::path report_json;
    std::vector<std::filesystem::path> figures;
};
PcaOutcome run_probe_pca(const RunConfig& config);

struct PhasesOutcome {
    std::vector<double> purity;    // one per phase checkpoint, training order
    double final_purity = 0;
    bool monotone = false;
    std::filesystem::path report_json;
    std::vector<std::filesystem::path> figures;
};
PhasesOutcome run_probe_phases(const RunConfig& config);

struct EvalReport {
    train::EvalOutcome d1, d2, d3;
};
EvalReport run_eval(const RunConfig& config, const std::filesystem::path& checkpoint = {});

// Table of model outputs vs correct and mod-p oracle results for the worked
// operand pairs.
struct TableRow {
    std::string expression;
    uint64_t model_output = 0;
    uint64_t correct = 0;
    uint64_t oracle = 0;
};
std::vector<TableRow> worked_examples_table(const RunConfig& config);

// Runs the end-to-end pipeline behind one paper exhibit. Returns 0 on
// success, 5 when a reproduction threshold fails.
int run_reproduce(const std::string& figure_id, const RunConfig& config, bool verbose);

std::vector<std::string> reproduce_targets();

} // namespace modlens::cli
