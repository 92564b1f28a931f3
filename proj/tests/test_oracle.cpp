#include "modlens/bigint.hpp"
#include "modlens/errors.hpp"
#include "modlens/oracle.hpp"
#include "modlens/rng.hpp"

#include <doctest.h>

using namespace modlens;
using oracle::EquivClass;
using oracle::OracleSpec;

TEST_CASE("BigUint string and u64 round trips") {
    CHECK(BigUint{0}.to_string() == "0");
    CHECK(BigUint{1054}.to_string() == "1054");
    CHECK(BigUint::from_string("0000032768").to_string() == "32768");
    CHECK(BigUint::from_string("13312768").to_u64() == 13312768ull);
    CHECK(BigUint{UINT64_MAX}.to_string() == "18446744073709551615");
    CHECK(BigUint{UINT64_MAX}.fits_u64());
    CHECK_FALSE(BigUint::from_string("18446744073709551616").fits_u64());
    CHECK_THROWS_AS(BigUint::from_string("12x4"), DataError);
    CHECK_THROWS_AS(BigUint::from_string(""), DataError);
}

TEST_CASE("BigUint arithmetic agrees with native integers") {
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const uint64_t a = rng.next_below(1u << 31);
        const uint64_t b = rng.next_below(1u << 31);
        CHECK((BigUint{a} + BigUint{b}).to_u64() == a + b);
        CHECK((BigUint{a} * BigUint{b}).to_u64() == a * b);
        CHECK((BigUint{a} < BigUint{b}) == (a < b));
    }
}

TEST_CASE("BigUint handles values beyond 64 bits") {
    const BigUint big = BigUint::from_string("99999999999999999999");
    CHECK((big * big).to_string() == "9999999999999999999800000000000000000001");
    CHECK((big + BigUint{1}).to_string() == "100000000000000000000");
    CHECK(big.mod_pow10(5).to_u64() == 99999);
    CHECK(big.mod_u64(7) == BigUint::from_string("99999999999999999999").mod_u64(7));
}

TEST_CASE("BigUint modular reductions") {
    const BigUint v{1349};
    CHECK(v.mod_pow10(3).to_u64() == 349);
    CHECK(v.mod_pow10(0).to_u64() == 0);
    CHECK(v.mod_u64(1000) == 349);
    CHECK(v.mod_u64(1) == 0);
    CHECK_THROWS_AS(v.mod_u64(0), DataError);
}

TEST_CASE("ground truth matches the worked examples") {
    CHECK(oracle::ground_truth_u64(OpKind::Add, 349, 705) == 1054);
    CHECK(oracle::ground_truth_u64(OpKind::Mul, 128, 256) == 32768);
    CHECK(oracle::ground_truth_u64(OpKind::Mul, 0, 99999) == 0);
    CHECK(oracle::ground_truth_u64(OpKind::Add, 1349, 2705) == 4054);
    CHECK(oracle::ground_truth_u64(OpKind::Mul, 3128, 4256) == 13312768);
}

TEST_CASE("canonical representative") {
    CHECK(oracle::canonical_rep(1349, 2705, 1000) == EquivClass{349, 705, 1000});
    CHECK(oracle::canonical_rep(349, 705, 1000) == EquivClass{349, 705, 1000});
    CHECK(oracle::canonical_rep(1000, 1000, 1000) == EquivClass{0, 0, 1000});

    // Idempotence and image in [0,p)^2.
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const uint64_t a = rng.next_below(100000);
        const uint64_t b = rng.next_below(100000);
        const uint64_t p = 1 + rng.next_below(5000);
        const EquivClass c = oracle::canonical_rep(a, b, p);
        CHECK(c.rep_a < p);
        CHECK(c.rep_b < p);
        CHECK(oracle::canonical_rep(c.rep_a, c.rep_b, p) == c);
    }
    CHECK_THROWS_AS(oracle::canonical_rep(1, 1, 0), DataError);
}

TEST_CASE("oracle evaluation reproduces the learned-function values") {
    const auto add_spec = OracleSpec::mod_pow10(OpKind::Add, 3);
    const auto mul_spec = OracleSpec::mod_pow10(OpKind::Mul, 3);
    CHECK(oracle::oracle_eval_u64(add_spec, 1349, 2705) == 1054);
    CHECK(oracle::oracle_eval_u64(mul_spec, 1349, 2705) == 246045);
    CHECK(oracle::oracle_eval_u64(mul_spec, 3128, 4256) == 32768);

    CHECK(oracle::oracle_match(1054, add_spec, 1349, 2705));
    CHECK_FALSE(oracle::oracle_match(4054, add_spec, 1349, 2705));
}

TEST_CASE("oracle equals ground truth on the ID lattice") {
    const auto spec = OracleSpec::mod_pow10(OpKind::Mul, 2);
    for (uint64_t a = 0; a < 100; ++a)
        for (uint64_t b = 0; b < 100; ++b)
            CHECK(oracle::oracle_eval_u64(spec, a, b) ==
                  oracle::ground_truth_u64(OpKind::Mul, a, b));
}

TEST_CASE("class consistency, exhaustive against brute force") {
    // All a,b < 100 with modulus 10 and shifts k,j < 5, both operations.
    for (const OpKind op : {OpKind::Add, OpKind::Mul}) {
        const OracleSpec spec{op, 10, 10};
        for (uint64_t a = 0; a < 100; ++a) {
            for (uint64_t b = 0; b < 100; ++b) {
                const uint64_t ra = a % 10, rb = b % 10;
                const uint64_t expect = op == OpKind::Add ? ra + rb : ra * rb;
                for (uint64_t k = 0; k < 5; ++k)
                    for (uint64_t j = 0; j < 5; ++j)
                        REQUIRE(oracle::oracle_eval_u64(spec, a + 10 * k, b + 10 * j) == expect);
            }
        }
    }
}

TEST_CASE("mixed moduli and commutativity transfer") {
    const OracleSpec spec{OpKind::Mul, 100, 1000};
    CHECK(oracle::oracle_eval_u64(spec, 1234, 56789) == 34 * 789);

    const OracleSpec swapped{OpKind::Mul, 1000, 100};
    Rng rng(11);
    for (int i = 0; i < 300; ++i) {
        const uint64_t a = rng.next_below(100000);
        const uint64_t b = rng.next_below(100000);
        CHECK(oracle::oracle_eval_u64(spec, a, b) == oracle::oracle_eval_u64(swapped, b, a));
    }
}

TEST_CASE("oracle handles results past 64-bit via BigUint") {
    const OracleSpec spec{OpKind::Mul, 100000000000ull, 100000000000ull};
    const BigUint a = BigUint::from_string("99999999999");
    const BigUint r = oracle::oracle_eval(spec, a, a);
    CHECK(r.to_string() == "9999999999800000000001");
}
