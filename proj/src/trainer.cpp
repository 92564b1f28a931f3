#include "modlens/trainer.hpp"

#include "modlens/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace modlens::train {

using gpt::ParamInfo;
using gpt::ParamKind;
using gpt::ParamSet;
using gpt::Tensor;

void TrainConfig::validate() const {
    if (learning_rate <= 0) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw ConfigError("TrainConfig: betas must be in [0,1)");
    if (weight_decay < 0) throw ConfigError("TrainConfig: weight_decay must be non-negative");
    if (grad_norm_clip <= 0) throw ConfigError("TrainConfig: grad_norm_clip must be positive");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be positive");
    if (max_iterations < 0) throw ConfigError("TrainConfig: max_iterations must be >= 0");
    if (eval_interval < 1) throw ConfigError("TrainConfig: eval_interval must be positive");
    if (eval_subset_size < 1) throw ConfigError("TrainConfig: eval_subset_size must be positive");
    if (!std::is_sorted(milestones.begin(), milestones.end()))
        throw ConfigError("TrainConfig: milestones must be sorted ascending");
    for (double m : milestones)
        if (m < 0 || m > 1) throw ConfigError("TrainConfig: milestones must lie in [0,1]");
}

OptimState OptimState::zeros_like(const ParamSet<float>& params) {
    OptimState s;
    s.m = ParamSet<float>::shaped(params.config);
    s.v = ParamSet<float>::shaped(params.config);
    s.step = 0;
    return s;
}

void adamw_step(ParamSet<float>& params, const ParamSet<float>& grads, OptimState& state,
                const TrainConfig& config, std::optional<double> lr_override) {
    auto ps = named_tensors(params);
    auto gs = named_tensors(grads);
    auto ms = named_tensors(state.m);
    auto vs = named_tensors(state.v);

    state.step += 1;
    const double lr = lr_override.value_or(config.learning_rate);
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));

    for (size_t i = 0; i < ps.size(); ++i) {
        const ParamInfo& info = ps[i].first;
        // Decoupled decay applies to weight matrices only.
        const bool decay = info.kind == ParamKind::Weight;
        float* p = ps[i].second->data();
        const float* g = gs[i].second->data();
        float* m = ms[i].second->data();
        float* v = vs[i].second->data();
        const int64_t n = ps[i].second->size();
        for (int64_t j = 0; j < n; ++j) {
            m[j] = static_cast<float>(config.beta1 * m[j] + (1.0 - config.beta1) * g[j]);
            v[j] = static_cast<float>(config.beta2 * v[j] +
                                      (1.0 - config.beta2) * (static_cast<double>(g[j]) * g[j]));
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            double update = lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
            if (decay) update += lr * config.weight_decay * p[j];
            const double next = p[j] - update;
            if (!std::isfinite(next))
                throw NumericError("adamw_step: non-finite update in tensor " + info.name);
            p[j] = static_cast<float>(next);
        }
    }
}

double clip_grad_norm(ParamSet<float>& grads, double max_norm) {
    if (max_norm <= 0) throw ConfigError("clip_grad_norm: max_norm must be positive");
    double sq = 0;
    grads.for_each([&](const ParamInfo&, const Tensor<float>& t) {
        for (const float g : t.v) sq += static_cast<double>(g) * g;
    });
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const float scale = static_cast<float>(max_norm / norm);
        grads.for_each([&](const ParamInfo&, Tensor<float>& t) {
            for (float& g : t.v) g *= scale;
        });
    }
    return norm;
}

EvalOutcome evaluate(const ParamSet<float>& params,
                     std::span<const arith::ArithSample> samples,
                     const arith::FormatSpec& format, const oracle::OracleSpec* oracle_spec) {
    EvalOutcome out;
    out.count = samples.size();
    if (samples.empty()) return out;

    const int64_t prefix_len = 2 * format.operand_width;
    const int64_t steps = format.result_width;
    const int64_t stride = prefix_len + steps;
    constexpr int64_t kChunk = 256;

    gpt::Workspace<float> ws;
    std::vector<uint8_t> rows;
    size_t exact = 0, oracle_hits = 0;
    for (size_t base = 0; base < samples.size(); base += kChunk) {
        const int64_t n = static_cast<int64_t>(std::min<size_t>(kChunk, samples.size() - base));
        rows.assign(static_cast<size_t>(n * stride), 0);
        for (int64_t r = 0; r < n; ++r)
            std::copy_n(samples[base + static_cast<size_t>(r)].tokens.data(), prefix_len,
                        rows.data() + r * stride);
        gpt::greedy_generate_batch(params, rows.data(), n, prefix_len, steps, ws);
        for (int64_t r = 0; r < n; ++r) {
            const auto& s = samples[base + static_cast<size_t>(r)];
            const uint8_t* gen = rows.data() + r * stride + prefix_len;
            const bool hit = std::equal(gen, gen + steps, s.tokens.data() + prefix_len);
            exact += hit;
            if (oracle_spec) {
                const uint64_t decoded =
                    arith::decode_result({gen, static_cast<size_t>(steps)}, format);
                oracle_hits += oracle::oracle_match(decoded, *oracle_spec, s.a, s.b);
            }
        }
    }
    out.exact_match = static_cast<double>(exact) / static_cast<double>(samples.size());
    out.oracle_match = static_cast<double>(oracle_hits) / static_cast<double>(samples.size());
    return out;
}

double evaluate_exact_match(const ParamSet<float>& params,
                            std::span<const arith::ArithSample> samples,
                            const arith::FormatSpec& format) {
    return evaluate(params, samples, format).exact_match;
}

namespace {

std::string format_threshold(double thr) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", thr);
    return buf;
}

std::span<const arith::ArithSample> subset(const std::vector<arith::ArithSample>& v,
                                           int64_t limit) {
    return {v.data(), std::min<size_t>(v.size(), static_cast<size_t>(limit))};
}

} // namespace

TrainResult train(ParamSet<float>& params, const arith::SplitSet& splits,
                  const TrainConfig& config, const std::filesystem::path& out_dir,
                  bool verbose) {
    config.validate();
    const arith::FormatSpec& format = splits.spec.format;
    if (params.config.context_window != format.context_window)
        throw ConfigError("train: model context window disagrees with the data format");
    if (splits.d1.empty()) throw DataError("train: empty training split");

    std::filesystem::create_directories(out_dir);

    TrainResult result;
    const auto oracle_spec = oracle::OracleSpec::mod_pow10(format.op, splits.spec.n);
    const int64_t L = format.sequence_length(); // context_window + 1
    const int B = config.batch_size;

    Rng rng(config.rng_seed);
    gpt::Workspace<float> ws;
    ParamSet<float> grads = ParamSet<float>::shaped(params.config);
    OptimState opt = OptimState::zeros_like(params);
    ParamSet<float> last_good = params;

    const auto d1_eval = subset(splits.d1, config.eval_subset_size);
    const auto d2_eval = subset(splits.d2, config.eval_subset_size);
    const auto d3_eval = subset(splits.d3, config.eval_subset_size);

    const gpt::MaskSpec mask{config.mask_policy, format.answer_offset(), format.result_width};

    auto save = [&](const std::filesystem::path& p, int64_t iter, const MetricsRow* row) {
        gpt::CheckpointMeta meta;
        meta.iteration = iter;
        meta.rng_seed = config.rng_seed;
        if (row) {
            meta.metrics = {{"train_loss", row->train_loss}, {"train_acc", row->train_acc},
                            {"id_acc", row->id_acc},         {"ood_acc", row->ood_acc},
                            {"oracle_match_rate", row->oracle_match_rate}};
        }
        gpt::save_checkpoint(params, params.config, meta, p);
    };

    result.initial_checkpoint = out_dir / "phase_init.ckpt";
    save(result.initial_checkpoint, 0, nullptr);

    std::vector<uint8_t> batch(static_cast<size_t>(B) * static_cast<size_t>(L));
    std::vector<double> pending_milestones = config.milestones;
    int consecutive_perfect = 0;
    double loss_accum = 0;
    int64_t loss_count = 0;
    const auto t_start = std::chrono::steady_clock::now();

    int64_t iter = 0;
    bool done = config.max_iterations == 0;
    while (!done) {
        for (int b = 0; b < B; ++b) {
            const auto& s = splits.d1[rng.next_below(splits.d1.size())];
            std::copy(s.tokens.begin(), s.tokens.end(),
                      batch.begin() + static_cast<size_t>(b) * static_cast<size_t>(L));
        }

        grads.zero();
        double loss;
        try {
            loss = gpt::loss_and_grads(params, batch.data(), B, mask, &rng, grads, ws);
        } catch (const NumericError&) {
            params = last_good;
            save(out_dir / "final.ckpt", iter, nullptr);
            throw;
        }
        last_good = params;
        clip_grad_norm(grads, config.grad_norm_clip);
        std::optional<double> lr;
        if (config.warmup && opt.step < config.warmup_steps)
            lr = config.learning_rate * static_cast<double>(opt.step + 1) /
                 static_cast<double>(config.warmup_steps);
        adamw_step(params, grads, opt, config, lr);

        loss_accum += loss;
        loss_count += 1;
        iter += 1;

        const bool at_eval = iter % config.eval_interval == 0 || iter == config.max_iterations;
        if (at_eval) {
            MetricsRow row;
            row.iter = iter;
            row.train_loss = loss_accum / static_cast<double>(loss_count);
            loss_accum = 0;
            loss_count = 0;
            row.train_acc = evaluate(params, d1_eval, format).exact_match;
            row.id_acc = evaluate(params, d2_eval, format).exact_match;
            const auto ood = evaluate(params, d3_eval, format, &oracle_spec);
            row.ood_acc = ood.exact_match;
            row.oracle_match_rate = ood.oracle_match;
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                        t_start)
                              .count();
            result.metrics.push_back(row);
            if (verbose) {
                std::cout << "iter " << iter << " loss " << row.train_loss << " train "
                          << row.train_acc << " id " << row.id_acc << " ood " << row.ood_acc
                          << " oracle " << row.oracle_match_rate << "\n";
            }

            while (!pending_milestones.empty() && row.id_acc >= pending_milestones.front() - 1e-12) {
                const double thr = pending_milestones.front();
                pending_milestones.erase(pending_milestones.begin());
                const auto p = out_dir / ("phase_" + format_threshold(thr) + ".ckpt");
                save(p, iter, &row);
                result.milestone_checkpoints[thr] = p;
            }

            // Early stop: perfect subset accuracy escalates to the full D2
            // split; two consecutive perfect full evaluations end training.
            if (row.id_acc >= 1.0 - 1e-12) {
                const double full = evaluate(params, splits.d2, format).exact_match;
                consecutive_perfect = full >= 1.0 - 1e-12 ? consecutive_perfect + 1 : 0;
                if (consecutive_perfect >= 2) {
                    result.early_stopped = true;
                    done = true;
                }
            } else {
                consecutive_perfect = 0;
            }
            write_metrics_csv(out_dir / "metrics.csv", result.metrics);
        }
        if (iter >= config.max_iterations) done = true;
    }

    result.iterations_run = iter;
    const MetricsRow* last = result.metrics.empty() ? nullptr : &result.metrics.back();
    result.final_checkpoint = out_dir / "final.ckpt";
    save(result.final_checkpoint, iter, last);
    write_metrics_csv(out_dir / "metrics.csv", result.metrics);
    return result;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_metrics_csv: cannot open " + path.string());
    out << "iter,train_loss,train_acc,id_acc,ood_acc,oracle_match_rate,seconds\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f\n",
                      static_cast<long long>(r.iter), r.train_loss, r.train_acc, r.id_acc,
                      r.ood_acc, r.oracle_match_rate, r.seconds);
        out << buf;
    }
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_metrics_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("read_metrics_csv: empty file");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricsRow r;
        long long iter = 0;
        if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf,%lf", &iter, &r.train_loss,
                        &r.train_acc, &r.id_acc, &r.ood_acc, &r.oracle_match_rate,
                        &r.seconds) != 7)
            throw DataError("read_metrics_csv: malformed row '" + line + "'");
        r.iter = iter;
        rows.push_back(r);
    }
    return rows;
}

} // namespace modlens::train
