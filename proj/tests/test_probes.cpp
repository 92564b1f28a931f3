#include "modlens/checkpoint.hpp"
#include "modlens/probes.hpp"
#include "modlens/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace modlens;
using namespace modlens::probe;
namespace fs = std::filesystem;

namespace {

Matrix random_matrix(int64_t rows, int64_t cols, uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (auto& v : m.v) v = rng.normal(0.0, 1.0);
    return m;
}

} // namespace

TEST_CASE("pca invariants on a random matrix") {
    const Matrix data = random_matrix(100, 48, 11);
    const PcaResult r = pca(data, 8);

    // Orthonormal components.
    for (int i = 0; i < 8; ++i) {
        for (int j = i; j < 8; ++j) {
            double dot = 0;
            for (int64_t c = 0; c < 48; ++c) dot += r.components.at(i, c) * r.components.at(j, c);
            CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-6);
        }
    }

    // Ratios non-negative, non-increasing, summing below one.
    double sum = 0;
    for (size_t i = 0; i < r.explained_variance_ratio.size(); ++i) {
        CHECK(r.explained_variance_ratio[i] >= 0.0);
        if (i > 0) CHECK(r.explained_variance_ratio[i] <= r.explained_variance_ratio[i - 1]);
        sum += r.explained_variance_ratio[i];
    }
    CHECK(sum <= 1.0 + 1e-9);

    // Sign convention: the largest-magnitude entry of each component is
    // positive.
    for (int i = 0; i < 8; ++i) {
        int64_t arg = 0;
        for (int64_t c = 1; c < 48; ++c)
            if (std::abs(r.components.at(i, c)) > std::abs(r.components.at(i, arg))) arg = c;
        CHECK(r.components.at(i, arg) > 0.0);
    }

    // Independent oracle: the empirical variance of each projected column
    // equals the eigenvalue.
    for (int i = 0; i < 8; ++i) {
        double mean = 0;
        for (int64_t n = 0; n < r.projected.rows; ++n) mean += r.projected.at(n, i);
        mean /= static_cast<double>(r.projected.rows);
        double var = 0;
        for (int64_t n = 0; n < r.projected.rows; ++n) {
            const double d = r.projected.at(n, i) - mean;
            var += d * d;
        }
        var /= static_cast<double>(r.projected.rows - 1);
        CHECK(std::abs(var - r.eigenvalues[static_cast<size_t>(i)]) < 1e-9);
    }
}

TEST_CASE("pca on exactly planar data concentrates all variance in two components") {
    Rng rng(4);
    Matrix data(400, 48);
    std::vector<double> u(48), w(48);
    for (auto& x : u) x = rng.normal(0, 1);
    for (auto& x : w) x = rng.normal(0, 1);
    for (int64_t r = 0; r < data.rows; ++r) {
        const double s = rng.normal(0, 2), t = rng.normal(0, 0.5);
        for (int64_t c = 0; c < 48; ++c)
            data.at(r, c) = 3.0 + s * u[static_cast<size_t>(c)] + t * w[static_cast<size_t>(c)];
    }
    const PcaResult r2 = pca(data, 2);
    CHECK(r2.explained_variance_ratio[0] + r2.explained_variance_ratio[1] ==
          doctest::Approx(1.0).epsilon(1e-9));

    // Rank 2 with k = 4: the extra ratios are ~0 and components stay
    // orthonormal.
    const PcaResult r4 = pca(data, 4);
    CHECK(r4.explained_variance_ratio[2] < 1e-9);
    CHECK(r4.explained_variance_ratio[3] < 1e-9);
    double dot23 = 0, n2 = 0;
    for (int64_t c = 0; c < 48; ++c) {
        dot23 += r4.components.at(2, c) * r4.components.at(3, c);
        n2 += r4.components.at(2, c) * r4.components.at(2, c);
    }
    CHECK(std::abs(dot23) < 1e-6);
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("pca degenerate and error cases") {
    Matrix same(10, 8);
    for (auto& v : same.v) v = 2.5;
    const PcaResult r = pca(same, 3);
    CHECK(r.degenerate);
    for (double ratio : r.explained_variance_ratio) CHECK(ratio == 0.0);

    Matrix one(1, 8);
    CHECK_THROWS_AS(pca(one, 2), DataError);
    Matrix ok(10, 8);
    CHECK_THROWS_AS(pca(ok, 0), DataError);
    CHECK_THROWS_AS(pca(ok, 9), DataError);
}

TEST_CASE("total variation axioms") {
    const std::vector<float> p = {0.1f, 0.2f, 0.3f, 0.4f};
    const std::vector<float> q = {0.4f, 0.3f, 0.2f, 0.1f};
    const std::vector<float> point_a = {1.0f, 0.0f, 0.0f, 0.0f};
    const std::vector<float> point_b = {0.0f, 0.0f, 0.0f, 1.0f};
    CHECK(total_variation(p, p) == 0.0);
    CHECK(total_variation(p, q) == doctest::Approx(total_variation(q, p)));
    CHECK(total_variation(p, q) <= 1.0);
    CHECK(total_variation(point_a, point_b) == doctest::Approx(1.0));
    CHECK_THROWS_AS(total_variation(p, point_a.data() ? std::span<const float>(point_a.data(), 3)
                                                      : std::span<const float>{}),
                    DataError);
}

TEST_CASE("oracle grid is periodic in the modulus") {
    LatticeSpec lattice;
    lattice.a_end = lattice.b_end = 4000;
    lattice.stride = 100;
    lattice.dense_blocks.clear();
    lattice.sample_count = 0;
    const auto spec = oracle::OracleSpec::mod_pow10(OpKind::Add, 3);
    const GridValues g = oracle_grid(spec, lattice);
    REQUIRE(g.a_values.size() == 40);
    // g(a + 1000, b) = g(a, b): shift by ten stride steps.
    for (int64_t bi = 0; bi < g.values.rows; ++bi)
        for (int64_t ai = 0; ai + 10 < g.values.cols; ++ai)
            CHECK(g.values.at(bi, ai) == g.values.at(bi, ai + 10));

    const GridValues truth = truth_grid(OpKind::Add, lattice);
    // Oracle equals truth on the ID sub-block.
    for (int64_t bi = 0; bi < 10; ++bi)
        for (int64_t ai = 0; ai < 10; ++ai)
            CHECK(g.values.at(bi, ai) == truth.values.at(bi, ai));
}

TEST_CASE("lattice sweep on an untrained model is structurally sound") {
    const auto format = arith::FormatSpec::addition();
    const auto params = gpt::init_params<float>(gpt::ModelConfig::addition_preset(), 0);
    LatticeSpec spec;
    spec.a_end = spec.b_end = 2000;
    spec.stride = 401;
    spec.dense_blocks = {{0, 0, 8}};
    spec.sample_count = 40;
    spec.rng_seed = 9;
    const auto oracle_spec = oracle::OracleSpec::mod_pow10(OpKind::Add, 3);

    const SweepResult sweep = lattice_sweep(params, format, spec, oracle_spec);
    const size_t grid_points = 5 * 5;
    CHECK(sweep.records.size() == grid_points + 64 + 40);

    for (const auto& rec : sweep.records) {
        CHECK(rec.truth_c == rec.a + rec.b);
        CHECK(rec.oracle_c == (rec.a % 1000) + (rec.b % 1000));
        CHECK(rec.is_ood == arith::is_ood(rec.a, rec.b, 3));
        if (!rec.is_ood) CHECK(rec.truth_c == rec.oracle_c);
        if (rec.oracle_hit) CHECK(rec.model_c == rec.oracle_c);
        if (rec.exact_hit) CHECK(rec.model_c == rec.truth_c);
    }

    // Determinism across runs (and worker counts are slice-owned).
    const SweepResult again = lattice_sweep(params, format, spec, oracle_spec);
    REQUIRE(again.records.size() == sweep.records.size());
    for (size_t i = 0; i < sweep.records.size(); ++i)
        CHECK(again.records[i].model_c == sweep.records[i].model_c);

    const auto csv = fs::temp_directory_path() / "modlens_sweep.csv";
    write_sweep_csv(csv, sweep);
    CHECK(fs::file_size(csv) > 0);
    fs::remove(csv);
}

TEST_CASE("perturb probe on an untrained model is well-formed") {
    const auto format = arith::FormatSpec::addition();
    const auto params = gpt::init_params<float>(gpt::ModelConfig::addition_preset(), 0);

    const std::vector<PerturbSpec> specs = {{349, 705, 3, 1, 2}, {128, 256, 3, 3, 4}};
    const PerturbReport report = perturb_probe(params, format, specs);
    REQUIRE(report.cases.size() == 6);
    for (const auto& c : report.cases) {
        CHECK(c.tv_per_position.size() == 15);
        for (double tv : c.tv_per_position) {
            CHECK(tv >= 0.0);
            CHECK(tv <= 1.0);
        }
        CHECK(c.base_answer.size() == 6);
        CHECK(c.pert_answer.size() == 6);
    }
    CHECK(report.cases[0].which == "a");
    CHECK(report.cases[1].which == "b");
    CHECK(report.cases[2].which == "both");
    CHECK(report.cases[2].pert_a == 1349);
    CHECK(report.cases[2].pert_b == 2705);
    CHECK(report.median_tv.size() == 15);
    CHECK(report.max_tv.size() == 15);

    const auto j = perturb_report_json(report);
    CHECK(j.at("version") == "modlens-probe/1");
    CHECK(j.at("cases").size() == 6);
}

TEST_CASE("perturb probe rejects bad placements") {
    const auto format = arith::FormatSpec::addition();
    const auto params = gpt::init_params<float>(gpt::ModelConfig::addition_preset(), 0);

    // Place below the trained width.
    CHECK_THROWS_AS(perturb_probe(params, format, std::vector<PerturbSpec>{{349, 705, 2, 1, 1}}),
                    DataError);
    // Digit value outside [1,9].
    CHECK_THROWS_AS(perturb_probe(params, format, std::vector<PerturbSpec>{{349, 705, 3, 0, 1}}),
                    DataError);
    // Overflowing the operand field.
    CHECK_THROWS_AS(
        perturb_probe(params, format, std::vector<PerturbSpec>{{99999, 705, 4, 9, 1}}),
        DataError);
}

TEST_CASE("representation collection shapes and labels") {
    const auto format = arith::FormatSpec::addition();
    const auto params = gpt::init_params<float>(gpt::ModelConfig::addition_preset(), 0);
    const std::vector<std::pair<uint64_t, uint64_t>> pairs = {
        {349, 705}, {349, 705}, {1, 2}, {999, 999}};
    const RepMatrix reps = collect_representations(params, format, pairs);
    CHECK(reps.data.rows == 4);
    CHECK(reps.data.cols == 48);
    CHECK(reps.c[0] == 1054);
    CHECK(reps.units_digit[0] == 4);
    CHECK(reps.c[3] == 1998);
    CHECK(reps.units_digit[3] == 8);
    for (int64_t c = 0; c < 48; ++c) CHECK(reps.data.at(0, c) == reps.data.at(1, c));
}

TEST_CASE("centroid purity separates synthetic clusters") {
    Rng rng(8);
    Matrix projected(500, 3);
    std::vector<int> labels(500);
    for (int64_t i = 0; i < 500; ++i) {
        const int k = static_cast<int>(i % 10);
        labels[static_cast<size_t>(i)] = k;
        projected.at(i, 0) = k * 10.0 + rng.normal(0, 0.1);
        projected.at(i, 1) = (k % 3) * 5.0 + rng.normal(0, 0.1);
        projected.at(i, 2) = rng.normal(0, 0.1);
    }
    CHECK(centroid_purity(projected, labels) == doctest::Approx(1.0));

    // Random labels: close to chance.
    std::vector<int> noise(500);
    for (auto& l : noise) l = static_cast<int>(rng.next_below(10));
    CHECK(centroid_purity(projected, noise) < 0.3);
}

TEST_CASE("phase analysis over saved checkpoints") {
    const auto format = arith::FormatSpec::addition();
    const auto cfg = gpt::ModelConfig::addition_preset();
    const auto dir = fs::temp_directory_path() / "modlens_phases";
    fs::create_directories(dir);

    for (int i = 0; i < 2; ++i) {
        const auto params = gpt::init_params<float>(cfg, static_cast<uint64_t>(i));
        gpt::CheckpointMeta meta;
        meta.iteration = i * 100;
        gpt::save_checkpoint(params, cfg, meta, dir / ("p" + std::to_string(i) + ".ckpt"));
    }

    const auto pairs = random_pairs(300, 10000, 10000, 5);
    const auto phases =
        phase_analysis({dir / "p0.ckpt", dir / "p1.ckpt"}, format, pairs, 3);
    REQUIRE(phases.size() == 2);
    for (const auto& p : phases) {
        CHECK(p.purity >= 0.0);
        CHECK(p.purity <= 1.0);
        CHECK(p.pca.projected.rows == 300);
        // An untrained model should sit near chance purity.
        CHECK(p.purity < 0.3);
    }

    // Mixed configs are refused.
    const auto mul_params = gpt::init_params<float>(gpt::ModelConfig::multiplication_preset(), 0);
    gpt::save_checkpoint(mul_params, gpt::ModelConfig::multiplication_preset(), {},
                         dir / "mul.ckpt");
    CHECK_THROWS_AS(phase_analysis({dir / "p0.ckpt", dir / "mul.ckpt"}, format, pairs, 3),
                    DataError);
    fs::remove_all(dir);
}

TEST_CASE("random pair generation is deterministic and bounded") {
    const auto a = random_pairs(100, 500, 700, 3);
    const auto b = random_pairs(100, 500, 700, 3);
    CHECK(a == b);
    for (const auto& [x, y] : a) {
        CHECK(x < 500);
        CHECK(y < 700);
    }
}
