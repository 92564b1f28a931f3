#include "modlens/oracle.hpp"

#include "modlens/errors.hpp"

namespace modlens::oracle {

OracleSpec OracleSpec::mod_pow10(OpKind op, int n) {
    if (n < 0 || n > 18) throw ConfigError("OracleSpec: modulus exponent out of range");
    uint64_t p = 1;
    for (int i = 0; i < n; ++i) p *= 10;
    return OracleSpec{op, p, p};
}

BigUint ground_truth(OpKind op, const BigUint& a, const BigUint& b) {
    return op == OpKind::Add ? a + b : a * b;
}

BigUint ground_truth(OpKind op, uint64_t a, uint64_t b) {
    return ground_truth(op, BigUint{a}, BigUint{b});
}

uint64_t ground_truth_u64(OpKind op, uint64_t a, uint64_t b) {
    return ground_truth(op, BigUint{a}, BigUint{b}).to_u64();
}

EquivClass canonical_rep(uint64_t a, uint64_t b, uint64_t p) {
    if (p == 0) throw DataError("canonical_rep: modulus must be >= 1");
    return EquivClass{a % p, b % p, p};
}

EquivClass canonical_rep(const BigUint& a, const BigUint& b, uint64_t p) {
    if (p == 0) throw DataError("canonical_rep: modulus must be >= 1");
    return EquivClass{a.mod_u64(p), b.mod_u64(p), p};
}

BigUint oracle_eval(const OracleSpec& spec, const BigUint& a, const BigUint& b) {
    return ground_truth(spec.op, BigUint{a.mod_u64(spec.p_a)}, BigUint{b.mod_u64(spec.p_b)});
}

uint64_t oracle_eval_u64(const OracleSpec& spec, uint64_t a, uint64_t b) {
    if (spec.p_a == 0 || spec.p_b == 0) throw DataError("oracle_eval: moduli must be >= 1");
    return ground_truth(spec.op, a % spec.p_a, b % spec.p_b).to_u64();
}

bool oracle_match(uint64_t model_output, const OracleSpec& spec, uint64_t a, uint64_t b) {
    return model_output == oracle_eval_u64(spec, a, b);
}

} // namespace modlens::oracle
