#include "modlens/arith.hpp"
#include "modlens/errors.hpp"
#include "modlens/oracle.hpp"
#include "modlens/rng.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace modlens;
using namespace modlens::arith;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("format presets match the hyperparameter table") {
    const FormatSpec add = FormatSpec::addition();
    CHECK(add.operand_width == 5);
    CHECK(add.result_width == 6);
    CHECK(add.context_window == 15);
    CHECK(add.sequence_length() == 16);

    const FormatSpec mul = FormatSpec::multiplication();
    CHECK(mul.operand_width == 5);
    CHECK(mul.result_width == 10);
    CHECK(mul.context_window == 19);
    CHECK(mul.sequence_length() == 20);
}

TEST_CASE("format invariants are enforced") {
    FormatSpec f = FormatSpec::addition();
    f.context_window = 14;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f = FormatSpec::addition();
    f.result_width = 7;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    CHECK_THROWS_AS(FormatSpec::addition(6, 5), ConfigError); // n beyond the field width
}

TEST_CASE("encoding the paper example") {
    const FormatSpec fmt = FormatSpec::addition();
    const ArithSample s = encode_sample(349, 705, fmt);
    CHECK(tokens_to_string(s.tokens) == "0034900705450100");
    CHECK(s.c == 1054);

    const ArithSample zero = encode_sample(0, 0, fmt);
    CHECK(tokens_to_string(zero.tokens) == "0000000000000000");

    const FormatSpec mul = FormatSpec::multiplication();
    const ArithSample m = encode_sample(128, 256, mul);
    CHECK(tokens_to_string(m.tokens) == "00128002568672300000");
    CHECK(m.c == 32768);
}

TEST_CASE("decoding answer tokens") {
    const FormatSpec fmt = FormatSpec::addition();
    CHECK(decode_result(tokens_from_string("450100"), fmt) == 1054);
    CHECK(decode_result(tokens_from_string("000000"), fmt) == 0);
    CHECK(decode_result(tokens_from_string("899991"), fmt) == 199998);
    CHECK_THROWS_AS(decode_result(tokens_from_string("45010"), fmt), DataError);
}

TEST_CASE("encode rejects operands that overflow the field") {
    const FormatSpec fmt = FormatSpec::addition();
    CHECK_THROWS_AS(encode_sample(100000, 0, fmt), DataError);
    CHECK_THROWS_AS(encode_sample(0, 100000, fmt), DataError);
    CHECK_NOTHROW(encode_sample(99999, 99999, fmt));
}

TEST_CASE("roundtrip property over random and boundary pairs") {
    for (const FormatSpec fmt : {FormatSpec::addition(), FormatSpec::multiplication()}) {
        std::vector<uint64_t> interesting = {0};
        for (int k = 1; k <= fmt.operand_width; ++k) {
            interesting.push_back(pow10_u64(k) - 1);
            if (k < fmt.operand_width) interesting.push_back(pow10_u64(k));
        }
        for (uint64_t a : interesting) {
            for (uint64_t b : interesting) {
                const ArithSample s = encode_sample(a, b, fmt);
                const auto [da, db, dc] = decode_sample(s.tokens, fmt);
                REQUIRE(da == a);
                REQUIRE(db == b);
                REQUIRE(dc == oracle::ground_truth_u64(fmt.op, a, b));
            }
        }

        Rng rng(42);
        const uint64_t limit = pow10_u64(fmt.operand_width);
        for (int i = 0; i < 100000; ++i) {
            const uint64_t a = rng.next_below(limit);
            const uint64_t b = rng.next_below(limit);
            const ArithSample s = encode_sample(a, b, fmt);
            for (const uint8_t t : s.tokens) REQUIRE(t <= 9);
            const auto [da, db, dc] = decode_sample(s.tokens, fmt);
            REQUIRE(da == a);
            REQUIRE(db == b);
            REQUIRE(dc == s.c);
            REQUIRE(decode_result(s.answer_tokens(fmt), fmt) == s.c);
        }
    }
}

TEST_CASE("ood predicate") {
    CHECK(is_ood(1349, 2705, 3));
    CHECK_FALSE(is_ood(349, 705, 3));
    CHECK(is_ood(999, 1000, 3));
    CHECK(is_ood(1000, 999, 3));
    CHECK_FALSE(is_ood(999, 999, 3));
}

TEST_CASE("split generation obeys the membership invariants") {
    CorpusSpec spec;
    spec.format = FormatSpec::addition();
    spec.n = 3;
    spec.m = 5;
    spec.d1_size = 2000;
    spec.d2_size = 2000;
    spec.d3_size = 2000;
    spec.rng_seed = 1;

    const SplitSet splits = generate_splits(spec);
    CHECK(splits.d1.size() == 2000);
    CHECK(splits.d2.size() == 2000);
    CHECK(splits.d3.size() == 2000);

    std::set<std::pair<uint64_t, uint64_t>> d1_pairs;
    for (const auto& s : splits.d1) {
        CHECK(s.a < 1000);
        CHECK(s.b < 1000);
        d1_pairs.insert({s.a, s.b});
    }
    CHECK(d1_pairs.size() == splits.d1.size()); // no duplicates inside d1
    for (const auto& s : splits.d2) {
        CHECK(s.a < 1000);
        CHECK(s.b < 1000);
        CHECK(d1_pairs.count({s.a, s.b}) == 0);
    }
    for (const auto& s : splits.d3) {
        CHECK(is_ood(s.a, s.b, spec.n));
        CHECK(std::max(s.a, s.b) < 100000);
    }
}

TEST_CASE("strict ood membership requires both operands out of range") {
    CorpusSpec spec;
    spec.format = FormatSpec::addition();
    spec.d1_size = spec.d2_size = 10;
    spec.d3_size = 500;
    spec.rng_seed = 9;
    spec.ood_both_operands = true;
    const SplitSet splits = generate_splits(spec);
    for (const auto& s : splits.d3) {
        CHECK(s.a >= 1000);
        CHECK(s.b >= 1000);
    }
}

TEST_CASE("split generation is deterministic per seed") {
    CorpusSpec spec;
    spec.format = FormatSpec::addition();
    spec.d1_size = spec.d2_size = spec.d3_size = 500;
    spec.rng_seed = 77;
    const SplitSet x = generate_splits(spec);
    const SplitSet y = generate_splits(spec);
    REQUIRE(x.d1.size() == y.d1.size());
    for (size_t i = 0; i < x.d1.size(); ++i) CHECK(x.d1[i].tokens == y.d1[i].tokens);
    for (size_t i = 0; i < x.d3.size(); ++i) CHECK(x.d3[i].tokens == y.d3[i].tokens);

    spec.rng_seed = 78;
    const SplitSet z = generate_splits(spec);
    bool any_diff = false;
    for (size_t i = 0; i < x.d1.size(); ++i) any_diff |= x.d1[i].tokens != z.d1[i].tokens;
    CHECK(any_diff);
}

TEST_CASE("exhausting the pair lattice and capacity errors") {
    CorpusSpec spec;
    spec.format = FormatSpec::addition(1, 5);
    spec.n = 1;
    spec.m = 5;
    spec.d1_size = 80;
    spec.d2_size = 20;
    spec.d3_size = 10;
    spec.rng_seed = 5;
    const SplitSet splits = generate_splits(spec);
    std::set<std::pair<uint64_t, uint64_t>> all;
    for (const auto& s : splits.d1) all.insert({s.a, s.b});
    for (const auto& s : splits.d2) all.insert({s.a, s.b});
    CHECK(all.size() == 100); // the whole 1-digit pair lattice

    spec.d2_size = 21; // 80 + 21 > 100
    CHECK_THROWS_AS(generate_splits(spec), DataError);
}

TEST_CASE("dataset files round-trip and are byte-deterministic") {
    CorpusSpec spec;
    spec.format = FormatSpec::addition();
    spec.d1_size = spec.d2_size = spec.d3_size = 200;
    spec.rng_seed = 13;
    const SplitSet splits = generate_splits(spec);

    const auto dir = std::filesystem::temp_directory_path() / "modlens_test_corpus";
    std::filesystem::remove_all(dir);
    write_dataset(splits, dir);

    const SplitSet back = read_dataset(dir);
    CHECK(back.spec == spec);
    REQUIRE(back.d1.size() == splits.d1.size());
    for (size_t i = 0; i < splits.d1.size(); ++i) {
        CHECK(back.d1[i].a == splits.d1[i].a);
        CHECK(back.d1[i].tokens == splits.d1[i].tokens);
    }

    const std::string first = slurp(dir / "d1.txt") + slurp(dir / "corpus.json");
    write_dataset(splits, dir);
    const std::string second = slurp(dir / "d1.txt") + slurp(dir / "corpus.json");
    CHECK(first == second);

    // A corrupt line is refused.
    {
        std::ofstream out(dir / "d1.txt", std::ios::binary | std::ios::app);
        out << "0034900705450101\n"; // wrong result digits
    }
    CHECK_THROWS_AS(read_dataset(dir), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("sample line width matches the interface") {
    CorpusSpec spec;
    spec.format = FormatSpec::addition();
    spec.d1_size = spec.d2_size = spec.d3_size = 50;
    spec.rng_seed = 2;
    const SplitSet splits = generate_splits(spec);
    for (const auto& s : splits.d1) CHECK(s.tokens.size() == 16);

    CorpusSpec mspec;
    mspec.format = FormatSpec::multiplication();
    mspec.d1_size = mspec.d2_size = mspec.d3_size = 50;
    mspec.rng_seed = 2;
    const SplitSet msplits = generate_splits(mspec);
    for (const auto& s : msplits.d1) CHECK(s.tokens.size() == 20);
}
