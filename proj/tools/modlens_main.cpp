// modlens: train character-level micro-GPT models on n-digit arithmetic and
// probe the learned modular structure (output sweeps, probability
// perturbations, representation PCA).

#include "modlens/config.hpp"
#include "modlens/report.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace modlens;

struct CommonOpts {
    std::string config_path;
    std::string preset = "add3";
    uint64_t seed = 1;
    std::string out_dir;
    bool exhaustive = false;
    bool have_seed = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "run configuration file");
    cmd->add_option("--preset", o.preset, "built-in preset (add3|mul3)");
    cmd->add_option("--seed", o.seed, "global rng seed")->each([&](const std::string&) {
        o.have_seed = true;
    });
    cmd->add_option("--out", o.out_dir, "output directory for this run");
    cmd->add_flag("--exhaustive", o.exhaustive, "sweep every lattice point (slow)");
}

cli::RunConfig resolve(const CommonOpts& o) {
    cli::RunConfig cfg;
    if (!o.config_path.empty()) {
        cfg = cli::load_config(o.config_path);
        if (o.have_seed) {
            cfg.seed = o.seed;
            cfg.corpus.rng_seed = o.seed;
            cfg.train.rng_seed = o.seed;
        }
    } else {
        cfg = cli::RunConfig::from_preset(o.preset, o.have_seed ? o.seed : 1);
    }
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (o.exhaustive) cfg.probe.exhaustive = true;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"micro-GPT arithmetic generalization lab"};
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, eval_o, probe_o, repro_o;
    int64_t max_iterations = -1;
    std::string eval_ckpt;
    std::string probe_kind;
    std::string figure_id;
    bool quiet = false;

    auto* gen = app.add_subcommand("gen-data", "generate the D1/D2/D3 dataset files");
    add_common(gen, gen_o);

    auto* tr = app.add_subcommand("train", "train a model on an existing dataset");
    add_common(tr, train_o);
    tr->add_option("--max-iterations", max_iterations, "override the iteration budget");
    tr->add_flag("--quiet", quiet, "suppress per-eval progress lines");

    auto* ev = app.add_subcommand("eval", "exact-match evaluation of a checkpoint on D1/D2/D3");
    add_common(ev, eval_o);
    ev->add_option("--ckpt", eval_ckpt, "checkpoint path (default: the run's final.ckpt)");

    auto* pr = app.add_subcommand("probe", "mechanistic probes against a trained checkpoint");
    add_common(pr, probe_o);
    pr->add_option("kind", probe_kind, "lattice|perturb|pca|phases")->required();

    auto* rp = app.add_subcommand("reproduce", "end-to-end pipeline for one paper exhibit");
    add_common(rp, repro_o);
    rp->add_option("figure", figure_id, "fig1|fig2|fig3|fig4|fig5|table2")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = resolve(gen_o);
            const auto splits = cli::ensure_dataset(cfg);
            const auto paths = cli::RunPaths::from(cfg);
            std::cout << "wrote " << splits.d1.size() << "/" << splits.d2.size() << "/"
                      << splits.d3.size() << " samples to " << paths.data.string() << "\n";
            return 0;
        }
        if (tr->parsed()) {
            auto cfg = resolve(train_o);
            if (max_iterations >= 0) cfg.train.max_iterations = max_iterations;
            cli::require_dataset(cfg);
            const auto result = cli::run_train(cfg, !quiet);
            std::cout << "trained " << result.iterations_run << " iterations"
                      << (result.early_stopped ? " (early stop)" : "") << "; final checkpoint "
                      << result.final_checkpoint.string() << "\n";
            if (!result.metrics.empty()) {
                const auto& last = result.metrics.back();
                std::cout << "final id_acc=" << last.id_acc << " ood_acc=" << last.ood_acc
                          << " oracle_match=" << last.oracle_match_rate << "\n";
            }
            return 0;
        }
        if (ev->parsed()) {
            const auto cfg = resolve(eval_o);
            const auto report = cli::run_eval(cfg, eval_ckpt);
            std::printf("d1 exact %.4f\nd2 exact %.4f\nd3 exact %.4f oracle %.4f\n",
                        report.d1.exact_match, report.d2.exact_match, report.d3.exact_match,
                        report.d3.oracle_match);
            return 0;
        }
        if (pr->parsed()) {
            const auto cfg = resolve(probe_o);
            if (probe_kind == "lattice") {
                const auto out = cli::run_probe_lattice(cfg);
                std::printf("sweep: %zu points (%zu OOD) exact_id %.4f oracle_ood %.4f -> %s\n",
                            out.rates.total, out.rates.ood, out.rates.exact_id,
                            out.rates.oracle_ood, out.csv.string().c_str());
            } else if (probe_kind == "perturb") {
                const auto out = cli::run_probe_perturb(cfg);
                std::printf("perturb: argmax-equal %.4f worked-examples %s -> %s\n",
                            out.fraction_argmax_equal,
                            out.worked_examples_match ? "match" : "MISMATCH",
                            out.report_json.string().c_str());
            } else if (probe_kind == "pca") {
                const auto out = cli::run_probe_pca(cfg);
                std::printf("pca: k=%d ratio sum %.4f (", cfg.probe.pca_k, out.ratio_sum);
                for (size_t i = 0; i < out.ratios.size(); ++i)
                    std::printf("%s%.4f", i ? ", " : "", out.ratios[i]);
                std::printf(") -> %s\n", out.report_json.string().c_str());
            } else if (probe_kind == "phases") {
                const auto out = cli::run_probe_phases(cfg);
                std::printf("phases: purity");
                for (double p : out.purity) std::printf(" %.4f", p);
                std::printf(" (%s) -> %s\n", out.monotone ? "non-decreasing" : "not monotone",
                            out.report_json.string().c_str());
            } else {
                throw ConfigError("unknown probe kind '" + probe_kind +
                                  "' (valid: lattice, perturb, pca, phases)");
            }
            return 0;
        }
        if (rp->parsed()) {
            const auto cfg = resolve(repro_o);
            return cli::run_reproduce(figure_id, cfg, !quiet);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric fault: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
