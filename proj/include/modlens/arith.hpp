#pragma once

#include "modlens/opkind.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace modlens::arith {

// Fixed-width character layout of one sample: zero-padded operands in natural
// order followed by the result digits reversed (least-significant first).
struct FormatSpec {
    OpKind op = OpKind::Add;
    int n_train_digits = 3;  // digits covered by the training distribution
    int operand_width = 5;   // padded digit count per operand
    int result_width = 6;    // padded digit count of the reversed result
    int context_window = 15; // 2*operand_width + result_width - 1

    static FormatSpec addition(int n_train_digits = 3, int operand_width = 5);
    static FormatSpec multiplication(int n_train_digits = 3, int operand_width = 5);

    int sequence_length() const { return 2 * operand_width + result_width; }
    int answer_offset() const { return 2 * operand_width; }

    void validate() const; // throws ConfigError
    bool operator==(const FormatSpec&) const = default;
};

struct ArithSample {
    uint64_t a = 0;
    uint64_t b = 0;
    uint64_t c = 0;                     // exact a op b
    std::vector<uint8_t> tokens;        // digit ids, length 2*ow + rw

    std::span<const uint8_t> answer_tokens(const FormatSpec& f) const {
        return {tokens.data() + f.answer_offset(), static_cast<size_t>(f.result_width)};
    }
};

struct CorpusSpec {
    FormatSpec format;
    int n = 3;                 // training digit count
    int m = 5;                 // OOD digit count, m > n
    uint64_t d1_size = 10000;
    uint64_t d2_size = 10000;
    uint64_t d3_size = 10000;
    uint64_t rng_seed = 1;
    // When true, D3 requires both operands >= 10^n instead of at least one.
    bool ood_both_operands = false;

    void validate() const; // throws ConfigError
    bool operator==(const CorpusSpec&) const = default;
};

struct SplitSet {
    std::vector<ArithSample> d1; // train
    std::vector<ArithSample> d2; // ID test
    std::vector<ArithSample> d3; // OOD test
    CorpusSpec spec;
};

uint64_t pow10_u64(int k);

ArithSample encode_sample(uint64_t a, uint64_t b, const FormatSpec& format);
uint64_t decode_result(std::span<const uint8_t> answer_tokens, const FormatSpec& format);
// Inverse of encode_sample over the full token string.
std::tuple<uint64_t, uint64_t, uint64_t> decode_sample(std::span<const uint8_t> tokens,
                                                       const FormatSpec& format);

bool is_ood(uint64_t a, uint64_t b, int n);

SplitSet generate_splits(const CorpusSpec& spec);

// One raw digit line per sample; sidecar corpus.json carries the CorpusSpec
// and the format-version string "modlens-corpus/1".
void write_dataset(const SplitSet& splits, const std::filesystem::path& dir);
SplitSet read_dataset(const std::filesystem::path& dir);

std::string tokens_to_string(std::span<const uint8_t> tokens);
std::vector<uint8_t> tokens_from_string(std::string_view line);

} // namespace modlens::arith
