#pragma once

#include "modlens/arith.hpp"
#include "modlens/model.hpp"
#include "modlens/oracle.hpp"
#include "modlens/pca.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace modlens::probe {

// Which operand pairs a sweep visits: a strided grid, exhaustively sampled
// square sub-blocks, and extra uniform random pairs. Strides coprime with 10
// keep digit structure visible in the grid.
struct LatticeSpec {
    uint64_t a_begin = 0, a_end = 10000;
    uint64_t b_begin = 0, b_end = 10000;
    uint64_t stride = 37;
    struct Block {
        uint64_t a0 = 0, b0 = 0, edge = 0;
    };
    std::vector<Block> dense_blocks;
    uint64_t sample_count = 100000;
    uint64_t rng_seed = 1;

    static LatticeSpec default_4digit(uint64_t seed = 1);
    static LatticeSpec exhaustive_4digit();

    void validate() const;
    std::vector<std::pair<uint64_t, uint64_t>> enumerate_pairs() const;
};

struct SweepRecord {
    uint64_t a = 0, b = 0;
    uint64_t model_c = 0, truth_c = 0, oracle_c = 0;
    bool exact_hit = false;
    bool oracle_hit = false;
    bool is_ood = false;
};

struct SweepResult {
    std::vector<SweepRecord> records;

    struct Rates {
        size_t total = 0, ood = 0;
        double exact_all = 0, oracle_all = 0;
        double exact_id = 0, oracle_ood = 0;
    };
    Rates rates() const;
};

SweepResult lattice_sweep(const gpt::ParamSet<float>& params, const arith::FormatSpec& format,
                          const LatticeSpec& spec, const oracle::OracleSpec& oracle_spec);

// Oracle/truth panels without a model, for the reference contour figures.
struct GridValues {
    std::vector<uint64_t> a_values, b_values;
    Matrix values; // [len(b), len(a)]
};
GridValues oracle_grid(const oracle::OracleSpec& spec, const LatticeSpec& lattice);
GridValues truth_grid(OpKind op, const LatticeSpec& lattice);

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);

// One perturbation family: a base ID pair plus the digit values written into
// a padded zero digit of a, of b, and of both.
struct PerturbSpec {
    uint64_t a = 0, b = 0;
    int digit_place = 3; // power of ten, must be >= trained digits
    int value_a = 1;     // in [1,9]
    int value_b = 2;
};

struct PerturbCase {
    uint64_t base_a = 0, base_b = 0;
    uint64_t pert_a = 0, pert_b = 0;
    std::string which;                   // "a", "b" or "both"
    std::vector<double> tv_per_position; // [context_window]
    bool argmax_equal = false;           // answer digits match the base's
    std::string base_answer, pert_answer;
};

struct PerturbReport {
    std::vector<PerturbCase> cases;
    double fraction_argmax_equal = 0;
    std::vector<double> median_tv; // per position over cases
    std::vector<double> max_tv;
};

// 0.5 * sum |p_v - q_v| between two probability rows.
double total_variation(std::span<const float> p, std::span<const float> q);

PerturbReport perturb_probe(const gpt::ParamSet<float>& params, const arith::FormatSpec& format,
                            std::span<const PerturbSpec> specs);

std::vector<PerturbSpec> make_perturb_specs(std::span<const std::pair<uint64_t, uint64_t>> pairs,
                                            int digit_place, std::span<const int> digit_values,
                                            uint64_t seed);

nlohmann::json perturb_report_json(const PerturbReport& report);

// Representations: X[:, position] per pair with the true result labels.
struct RepMatrix {
    Matrix data;                  // [n, d_model]
    std::vector<uint64_t> a, b, c;
    std::vector<int> units_digit;
};

RepMatrix collect_representations(const gpt::ParamSet<float>& params,
                                  const arith::FormatSpec& format,
                                  std::span<const std::pair<uint64_t, uint64_t>> pairs,
                                  int64_t position = -1); // -1: last operand token

double centroid_purity(const Matrix& projected, std::span<const int> labels, int dims = 3);

struct PhaseResult {
    std::string checkpoint;
    int64_t iteration = 0;
    PcaResult pca;
    double purity = 0;
    double ratio_sum = 0;
};

std::vector<PhaseResult> phase_analysis(const std::vector<std::filesystem::path>& checkpoints,
                                        const arith::FormatSpec& format,
                                        std::span<const std::pair<uint64_t, uint64_t>> pairs,
                                        int k);

nlohmann::json pca_report_json(const PcaResult& result);
nlohmann::json phase_report_json(const std::vector<PhaseResult>& phases);

void write_projection_csv(const std::filesystem::path& path, const RepMatrix& reps,
                          const PcaResult& result);

std::vector<std::pair<uint64_t, uint64_t>> random_pairs(uint64_t count, uint64_t a_limit,
                                                        uint64_t b_limit, uint64_t seed);

} // namespace modlens::probe
