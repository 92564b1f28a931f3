#pragma once

#include "modlens/bigint.hpp"
#include "modlens/opkind.hpp"

#include <cstdint>

namespace modlens::oracle {

// Componentwise congruence class [(a,b)]_p with its canonical representative
// in [0,p)^2.
struct EquivClass {
    uint64_t rep_a = 0;
    uint64_t rep_b = 0;
    uint64_t modulus = 1;

    bool operator==(const EquivClass&) const = default;
};

// The learned operation the trained models implement: reduce each operand by
// its modulus, then apply the exact operation. The symmetric case
// p_a == p_b == 10^n is the shipped experiment setting; mixed moduli cover
// the asymmetric training scenarios.
struct OracleSpec {
    OpKind op = OpKind::Add;
    uint64_t p_a = 1000;
    uint64_t p_b = 1000;

    static OracleSpec mod_pow10(OpKind op, int n);
};

// Exact a+b or a*b, no overflow at any width.
BigUint ground_truth(OpKind op, const BigUint& a, const BigUint& b);
BigUint ground_truth(OpKind op, uint64_t a, uint64_t b);
// Convenience for callers on the u64 lattice; throws DataError if the exact
// result does not fit.
uint64_t ground_truth_u64(OpKind op, uint64_t a, uint64_t b);

EquivClass canonical_rep(uint64_t a, uint64_t b, uint64_t p);
EquivClass canonical_rep(const BigUint& a, const BigUint& b, uint64_t p);

BigUint oracle_eval(const OracleSpec& spec, const BigUint& a, const BigUint& b);
uint64_t oracle_eval_u64(const OracleSpec& spec, uint64_t a, uint64_t b);

bool oracle_match(uint64_t model_output, const OracleSpec& spec, uint64_t a, uint64_t b);

} // namespace modlens::oracle
