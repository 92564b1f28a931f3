#include "modlens/probes.hpp"

#include "modlens/checkpoint.hpp"
#include "modlens/rng.hpp"
#include "modlens/threading.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>

namespace modlens::probe {

using nlohmann::json;

constexpr const char* kProbeVersion = "modlens-probe/1";

LatticeSpec LatticeSpec::default_4digit(uint64_t seed) {
    LatticeSpec s;
    s.a_begin = 0;
    s.a_end = 10000;
    s.b_begin = 0;
    s.b_end = 10000;
    s.stride = 37;
    // One exhaustively sampled block per ID/OOD quadrant combination.
    s.dense_blocks = {{450, 450, 100}, {4450, 450, 100}, {450, 4450, 100}, {4450, 4450, 100}};
    s.sample_count = 100000;
    s.rng_seed = seed;
    return s;
}

LatticeSpec LatticeSpec::exhaustive_4digit() {
    LatticeSpec s;
    s.stride = 1;
    s.dense_blocks.clear();
    s.sample_count = 0;
    return s;
}

void LatticeSpec::validate() const {
    if (a_end <= a_begin || b_end <= b_begin)
        throw ConfigError("LatticeSpec: empty operand ranges");
    if (stride == 0) throw ConfigError("LatticeSpec: stride must be positive");
    for (const auto& blk : dense_blocks) {
        if (blk.edge == 0) throw ConfigError("LatticeSpec: dense block with zero edge");
        if (blk.a0 < a_begin || blk.a0 + blk.edge > a_end || blk.b0 < b_begin ||
            blk.b0 + blk.edge > b_end)
            throw ConfigError("LatticeSpec: dense block outside the sweep ranges");
    }
}

std::vector<std::pair<uint64_t, uint64_t>> LatticeSpec::enumerate_pairs() const {
    validate();
    std::vector<std::pair<uint64_t, uint64_t>> pairs;
    for (uint64_t b = b_begin; b < b_end; b += stride)
        for (uint64_t a = a_begin; a < a_end; a += stride) pairs.emplace_back(a, b);
    for (const auto& blk : dense_blocks)
        for (uint64_t b = blk.b0; b < blk.b0 + blk.edge; ++b)
            for (uint64_t a = blk.a0; a < blk.a0 + blk.edge; ++a) pairs.emplace_back(a, b);
    if (sample_count > 0) {
        Rng rng(rng_seed);
        for (uint64_t i = 0; i < sample_count; ++i) {
            const uint64_t a = a_begin + rng.next_below(a_end - a_begin);
            const uint64_t b = b_begin + rng.next_below(b_end - b_begin);
            pairs.emplace_back(a, b);
        }
    }
    return pairs;
}

SweepResult::Rates SweepResult::rates() const {
    Rates r;
    r.total = records.size();
    size_t exact_all = 0, oracle_all = 0, exact_id = 0, oracle_ood = 0, id_count = 0;
    for (const auto& rec : records) {
        exact_all += rec.exact_hit;
        oracle_all += rec.oracle_hit;
        if (rec.is_ood) {
            r.ood += 1;
            oracle_ood += rec.oracle_hit;
        } else {
            id_count += 1;
            exact_id += rec.exact_hit;
        }
    }
    auto rate = [](size_t hits, size_t total) {
        return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
    };
    r.exact_all = rate(exact_all, r.total);
    r.oracle_all = rate(oracle_all, r.total);
    r.exact_id = rate(exact_id, id_count);
    r.oracle_ood = rate(oracle_ood, r.ood);
    return r;
}

SweepResult lattice_sweep(const gpt::ParamSet<float>& params, const arith::FormatSpec& format,
                          const LatticeSpec& spec, const oracle::OracleSpec& oracle_spec) {
    const auto pairs = spec.enumerate_pairs();
    SweepResult sweep;
    sweep.records.resize(pairs.size());

    const int64_t prefix_len = 2 * format.operand_width;
    const int64_t steps = format.result_width;
    const int64_t stride = prefix_len + steps;
    constexpr int64_t kChunk = 256;

    parallel_chunks(static_cast<int64_t>(pairs.size()), kChunk, [&](int64_t lo, int64_t hi) {
        gpt::Workspace<float> ws;
        std::vector<uint8_t> rows;
        for (int64_t base = lo; base < hi; base += kChunk) {
            const int64_t n = std::min(kChunk, hi - base);
            rows.assign(static_cast<size_t>(n * stride), 0);
            for (int64_t r = 0; r < n; ++r) {
                const auto [a, b] = pairs[static_cast<size_t>(base + r)];
                const auto sample = arith::encode_sample(a, b, format);
                std::copy_n(sample.tokens.data(), prefix_len, rows.data() + r * stride);
            }
            gpt::greedy_generate_batch(params, rows.data(), n, prefix_len, steps, ws);
            for (int64_t r = 0; r < n; ++r) {
                const auto [a, b] = pairs[static_cast<size_t>(base + r)];
                SweepRecord& rec = sweep.records[static_cast<size_t>(base + r)];
                rec.a = a;
                rec.b = b;
                rec.model_c = arith::decode_result(
                    {rows.data() + r * stride + prefix_len, static_cast<size_t>(steps)}, format);
                rec.truth_c = oracle::ground_truth_u64(format.op, a, b);
                rec.oracle_c = oracle::oracle_eval_u64(oracle_spec, a, b);
                rec.exact_hit = rec.model_c == rec.truth_c;
                rec.oracle_hit = rec.model_c == rec.oracle_c;
                rec.is_ood = arith::is_ood(a, b, format.n_train_digits);
            }
        }
    });
    return sweep;
}

namespace {

GridValues evaluate_grid(const LatticeSpec& lattice,
                         const std::function<uint64_t(uint64_t, uint64_t)>& f) {
    lattice.validate();
    GridValues g;
    for (uint64_t a = lattice.a_begin; a < lattice.a_end; a += lattice.stride)
        g.a_values.push_back(a);
    for (uint64_t b = lattice.b_begin; b < lattice.b_end; b += lattice.stride)
        g.b_values.push_back(b);
    g.values = Matrix(static_cast<int64_t>(g.b_values.size()),
                      static_cast<int64_t>(g.a_values.size()));
    for (size_t bi = 0; bi < g.b_values.size(); ++bi)
        for (size_t ai = 0; ai < g.a_values.size(); ++ai)
            g.values.at(static_cast<int64_t>(bi), static_cast<int64_t>(ai)) =
                static_cast<double>(f(g.a_values[ai], g.b_values[bi]));
    return g;
}

} // namespace

GridValues oracle_grid(const oracle::OracleSpec& spec, const LatticeSpec& lattice) {
    return evaluate_grid(lattice,
                         [&](uint64_t a, uint64_t b) { return oracle::oracle_eval_u64(spec, a, b); });
}

GridValues truth_grid(OpKind op, const LatticeSpec& lattice) {
    return evaluate_grid(lattice,
                         [&](uint64_t a, uint64_t b) { return oracle::ground_truth_u64(op, a, b); });
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_sweep_csv: cannot open " + path.string());
    out << "a,b,model_c,truth_c,oracle_c,exact_hit,oracle_hit,is_ood\n";
    char buf[192];
    for (const auto& r : sweep.records) {
        std::snprintf(buf, sizeof(buf), "%llu,%llu,%llu,%llu,%llu,%d,%d,%d\n",
                      static_cast<unsigned long long>(r.a), static_cast<unsigned long long>(r.b),
                      static_cast<unsigned long long>(r.model_c),
                      static_cast<unsigned long long>(r.truth_c),
                      static_cast<unsigned long long>(r.oracle_c), r.exact_hit ? 1 : 0,
                      r.oracle_hit ? 1 : 0, r.is_ood ? 1 : 0);
        out << buf;
    }
}

namespace {

// Distributions for the greedy trajectory of (a,b): generate the answer from
// the operand prefix, then take next-token rows over the first
// context_window tokens of the completed sequence.
struct Trajectory {
    std::vector<uint8_t> sequence; // operand prefix + generated answer
    gpt::Tensor<float> rows;       // [context_window, vocab]
    std::string answer;
};

Trajectory trajectory(const gpt::ParamSet<float>& params, const arith::FormatSpec& format,
                      uint64_t a, uint64_t b) {
    const auto sample = arith::encode_sample(a, b, format);
    const int64_t prefix_len = 2 * format.operand_width;
    Trajectory t;
    t.sequence = gpt::greedy_generate(
        params, std::span<const uint8_t>(sample.tokens.data(), static_cast<size_t>(prefix_len)),
        format.result_width);
    t.answer = arith::tokens_to_string(
        {t.sequence.data() + prefix_len, static_cast<size_t>(format.result_width)});
    t.rows = gpt::next_token_distribution(
        params, std::span<const uint8_t>(t.sequence.data(),
                                         static_cast<size_t>(format.context_window)));
    return t;
}

} // namespace

double total_variation(std::span<const float> p, std::span<const float> q) {
    if (p.size() != q.size()) throw DataError("total_variation: row lengths differ");
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += std::abs(static_cast<double>(p[i]) - q[i]);
    return 0.5 * s;
}

PerturbReport perturb_probe(const gpt::ParamSet<float>& params, const arith::FormatSpec& format,
                            std::span<const PerturbSpec> specs) {
    PerturbReport report;
    const int64_t ctx = format.context_window;
    const int64_t V = params.config.vocab_size;
    report.cases.resize(specs.size() * 3);

    parallel_chunks(static_cast<int64_t>(specs.size()), 8, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const PerturbSpec& ps = specs[static_cast<size_t>(i)];
            if (ps.digit_place < format.n_train_digits || ps.digit_place >= format.operand_width)
                throw DataError("perturb_probe: digit_place outside the padded region");
            if (ps.value_a < 1 || ps.value_a > 9 || ps.value_b < 1 || ps.value_b > 9)
                throw DataError("perturb_probe: digit values must lie in [1,9]");
            const uint64_t shift = arith::pow10_u64(ps.digit_place);
            const uint64_t pa = ps.a + static_cast<uint64_t>(ps.value_a) * shift;
            const uint64_t pb = ps.b + static_cast<uint64_t>(ps.value_b) * shift;
            if (pa >= arith::pow10_u64(format.operand_width) ||
                pb >= arith::pow10_u64(format.operand_width))
                throw DataError("perturb_probe: perturbation overflows the operand field");

            const Trajectory base = trajectory(params, format, ps.a, ps.b);
            const std::pair<uint64_t, uint64_t> variants[3] = {{pa, ps.b}, {ps.a, pb}, {pa, pb}};
            const char* names[3] = {"a", "b", "both"};
            for (int k = 0; k < 3; ++k) {
                const Trajectory pert =
                    trajectory(params, format, variants[k].first, variants[k].second);
                PerturbCase c;
                c.base_a = ps.a;
                c.base_b = ps.b;
                c.pert_a = variants[k].first;
                c.pert_b = variants[k].second;
                c.which = names[k];
                c.base_answer = base.answer;
                c.pert_answer = pert.answer;
                c.argmax_equal = base.answer == pert.answer;
                c.tv_per_position.resize(static_cast<size_t>(ctx));
                for (int64_t t = 0; t < ctx; ++t)
                    c.tv_per_position[static_cast<size_t>(t)] = total_variation(
                        {base.rows.data() + t * V, static_cast<size_t>(V)},
                        {pert.rows.data() + t * V, static_cast<size_t>(V)});
                report.cases[static_cast<size_t>(i * 3 + k)] = std::move(c);
            }
        }
    });

    size_t equal = 0;
    for (const auto& c : report.cases) equal += c.argmax_equal;
    report.fraction_argmax_equal =
        report.cases.empty() ? 0.0
                             : static_cast<double>(equal) / static_cast<double>(report.cases.size());

    report.median_tv.assign(static_cast<size_t>(ctx), 0.0);
    report.max_tv.assign(static_cast<size_t>(ctx), 0.0);
    std::vector<double> col(report.cases.size());
    for (int64_t t = 0; t < ctx; ++t) {
        for (size_t i = 0; i < report.cases.size(); ++i)
            col[i] = report.cases[i].tv_per_position[static_cast<size_t>(t)];
        if (col.empty()) continue;
        std::sort(col.begin(), col.end());
        const size_t n = col.size();
        report.median_tv[static_cast<size_t>(t)] =
            n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
        report.max_tv[static_cast<size_t>(t)] = col.back();
    }
    return report;
}

std::vector<PerturbSpec> make_perturb_specs(std::span<const std::pair<uint64_t, uint64_t>> pairs,
                                            int digit_place, std::span<const int> digit_values,
                                            uint64_t seed) {
    if (digit_values.empty()) throw ConfigError("make_perturb_specs: no digit values");
    Rng rng(seed);
    std::vector<PerturbSpec> specs;
    specs.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
        PerturbSpec s;
        s.a = a;
        s.b = b;
        s.digit_place = digit_place;
        s.value_a = digit_values[static_cast<size_t>(rng.next_below(digit_values.size()))];
        s.value_b = digit_values[static_cast<size_t>(rng.next_below(digit_values.size()))];
        specs.push_back(s);
    }
    return specs;
}

json perturb_report_json(const PerturbReport& report) {
    json cases = json::array();
    for (const auto& c : report.cases) {
        cases.push_back(json{{"base_a", c.base_a},
                             {"base_b", c.base_b},
                             {"pert_a", c.pert_a},
                             {"pert_b", c.pert_b},
                             {"which", c.which},
                             {"base_answer", c.base_answer},
                             {"pert_answer", c.pert_answer},
                             {"argmax_equal", c.argmax_equal},
                             {"tv_per_position", c.tv_per_position}});
    }
    return json{{"version", kProbeVersion},
                {"kind", "perturb"},
                {"fraction_argmax_equal", report.fraction_argmax_equal},
                {"median_tv", report.median_tv},
                {"max_tv", report.max_tv},
                {"cases", cases}};
}

RepMatrix collect_representations(const gpt::ParamSet<float>& params,
                                  const arith::FormatSpec& format,
                                  std::span<const std::pair<uint64_t, uint64_t>> pairs,
                                  int64_t position) {
    const int64_t prefix_len = 2 * format.operand_width;
    if (position < 0) position = prefix_len - 1;
    if (position >= prefix_len)
        throw DataError("collect_representations: position beyond the operand prefix");

    const int64_t C = params.config.d_model;
    const int64_t n = static_cast<int64_t>(pairs.size());
    RepMatrix reps;
    reps.data = Matrix(n, C);
    reps.a.resize(pairs.size());
    reps.b.resize(pairs.size());
    reps.c.resize(pairs.size());
    reps.units_digit.resize(pairs.size());

    constexpr int64_t kChunk = 256;
    parallel_chunks(n, kChunk, [&](int64_t lo, int64_t hi) {
        gpt::Workspace<float> ws;
        std::vector<uint8_t> rows;
        for (int64_t base = lo; base < hi; base += kChunk) {
            const int64_t cnt = std::min(kChunk, hi - base);
            rows.assign(static_cast<size_t>(cnt * prefix_len), 0);
            for (int64_t r = 0; r < cnt; ++r) {
                const auto [a, b] = pairs[static_cast<size_t>(base + r)];
                const auto sample = arith::encode_sample(a, b, format);
                std::copy_n(sample.tokens.data(), prefix_len, rows.data() + r * prefix_len);
                reps.a[static_cast<size_t>(base + r)] = a;
                reps.b[static_cast<size_t>(base + r)] = b;
                reps.c[static_cast<size_t>(base + r)] = sample.c;
                reps.units_digit[static_cast<size_t>(base + r)] = static_cast<int>(sample.c % 10);
            }
            gpt::forward_batch(params, rows.data(), cnt, prefix_len, gpt::Mode::eval, nullptr, ws);
            for (int64_t r = 0; r < cnt; ++r) {
                const float* h = ws.lnf_out.data() + (r * prefix_len + position) * C;
                double* dst = reps.data.row(base + r);
                for (int64_t c = 0; c < C; ++c) dst[c] = h[c];
            }
        }
    });
    return reps;
}

double centroid_purity(const Matrix& projected, std::span<const int> labels, int dims) {
    if (projected.rows != static_cast<int64_t>(labels.size()))
        throw DataError("centroid_purity: label count mismatch");
    const int64_t d = std::min<int64_t>(dims, projected.cols);
    constexpr int kClasses = 10;
    std::vector<double> centroid(static_cast<size_t>(kClasses * d), 0.0);
    std::vector<int64_t> count(kClasses, 0);
    for (int64_t r = 0; r < projected.rows; ++r) {
        const int lab = labels[static_cast<size_t>(r)];
        count[static_cast<size_t>(lab)] += 1;
        for (int64_t j = 0; j < d; ++j)
            centroid[static_cast<size_t>(lab * d + j)] += projected.at(r, j);
    }
    for (int k = 0; k < kClasses; ++k)
        if (count[static_cast<size_t>(k)] > 0)
            for (int64_t j = 0; j < d; ++j)
                centroid[static_cast<size_t>(k * d + j)] /=
                    static_cast<double>(count[static_cast<size_t>(k)]);

    int64_t hits = 0;
    for (int64_t r = 0; r < projected.rows; ++r) {
        int best = -1;
        double best_dist = 0;
        for (int k = 0; k < kClasses; ++k) {
            if (count[static_cast<size_t>(k)] == 0) continue;
            double dist = 0;
            for (int64_t j = 0; j < d; ++j) {
                const double diff = projected.at(r, j) - centroid[static_cast<size_t>(k * d + j)];
                dist += diff * diff;
            }
            if (best < 0 || dist < best_dist) {
                best = k;
                best_dist = dist;
            }
        }
        hits += best == labels[static_cast<size_t>(r)];
    }
    return projected.rows == 0 ? 0.0
                               : static_cast<double>(hits) / static_cast<double>(projected.rows);
}

std::vector<PhaseResult> phase_analysis(const std::vector<std::filesystem::path>& checkpoints,
                                        const arith::FormatSpec& format,
                                        std::span<const std::pair<uint64_t, uint64_t>> pairs,
                                        int k) {
    if (checkpoints.empty()) throw DataError("phase_analysis: no checkpoints");
    std::vector<PhaseResult> out;
    std::optional<gpt::ModelConfig> cfg;
    for (const auto& path : checkpoints) {
        const auto loaded = gpt::load_checkpoint(path);
        if (cfg && !(*cfg == loaded.config))
            throw DataError("phase_analysis: checkpoints use different model configs");
        cfg = loaded.config;

        PhaseResult phase;
        phase.checkpoint = path.filename().string();
        phase.iteration = loaded.meta.iteration;
        const RepMatrix reps = collect_representations(loaded.params, format, pairs);
        phase.pca = pca(reps.data, k);
        phase.purity = centroid_purity(phase.pca.projected, reps.units_digit);
        for (double r : phase.pca.explained_variance_ratio) phase.ratio_sum += r;
        out.push_back(std::move(phase));
    }
    return out;
}

json pca_report_json(const PcaResult& result) {
    double sum = 0;
    for (double r : result.explained_variance_ratio) sum += r;
    return json{{"version", kProbeVersion},
                {"kind", "pca"},
                {"explained_variance_ratio", result.explained_variance_ratio},
                {"ratio_sum", sum},
                {"eigenvalues", result.eigenvalues},
                {"degenerate", result.degenerate},
                {"mean", result.mean}};
}

json phase_report_json(const std::vector<PhaseResult>& phases) {
    json arr = json::array();
    for (const auto& p : phases) {
        double sum = 0;
        for (double r : p.pca.explained_variance_ratio) sum += r;
        arr.push_back(json{{"checkpoint", p.checkpoint},
                           {"iteration", p.iteration},
                           {"purity", p.purity},
                           {"ratio_sum", sum},
                           {"explained_variance_ratio", p.pca.explained_variance_ratio}});
    }
    return json{{"version", kProbeVersion}, {"kind", "phases"}, {"phases", arr}};
}

void write_projection_csv(const std::filesystem::path& path, const RepMatrix& reps,
                          const PcaResult& result) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_projection_csv: cannot open " + path.string());
    const int64_t k = result.projected.cols;
    out << "a,b";
    for (int64_t i = 0; i < k; ++i) out << ",pc" << (i + 1);
    out << ",c,units_digit\n";
    char buf[64];
    for (int64_t r = 0; r < result.projected.rows; ++r) {
        out << reps.a[static_cast<size_t>(r)] << ',' << reps.b[static_cast<size_t>(r)];
        for (int64_t i = 0; i < k; ++i) {
            std::snprintf(buf, sizeof(buf), ",%.6f", result.projected.at(r, i));
            out << buf;
        }
        out << ',' << reps.c[static_cast<size_t>(r)] << ','
            << reps.units_digit[static_cast<size_t>(r)] << '\n';
    }
}

std::vector<std::pair<uint64_t, uint64_t>> random_pairs(uint64_t count, uint64_t a_limit,
                                                        uint64_t b_limit, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<uint64_t, uint64_t>> pairs;
    pairs.reserve(count);
    for (uint64_t i = 0; i < count; ++i)
        pairs.emplace_back(rng.next_below(a_limit), rng.next_below(b_limit));
    return pairs;
}

} // namespace modlens::probe
