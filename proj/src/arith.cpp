#include "modlens/arith.hpp"

#include "modlens/errors.hpp"
#include "modlens/rng.hpp"

#include <json.hpp>

#include <fstream>
#include <unordered_set>

namespace modlens::arith {

using nlohmann::json;

namespace {

constexpr const char* kCorpusVersion = "modlens-corpus/1";

uint64_t checked_mul_capacity(int n) {
    // Number of (a,b) pairs with a,b < 10^n, saturating at u64 max.
    if (n > 9) return UINT64_MAX;
    const uint64_t side = pow10_u64(n);
    return side * side;
}

} // namespace

uint64_t pow10_u64(int k) {
    if (k < 0 || k > 19) throw ConfigError("pow10_u64: exponent out of range");
    uint64_t p = 1;
    for (int i = 0; i < k; ++i) p *= 10;
    return p;
}

FormatSpec FormatSpec::addition(int n_train_digits, int operand_width) {
    FormatSpec f;
    f.op = OpKind::Add;
    f.n_train_digits = n_train_digits;
    f.operand_width = operand_width;
    f.result_width = operand_width + 1;
    f.context_window = 2 * operand_width + f.result_width - 1;
    f.validate();
    return f;
}

FormatSpec FormatSpec::multiplication(int n_train_digits, int operand_width) {
    FormatSpec f;
    f.op = OpKind::Mul;
    f.n_train_digits = n_train_digits;
    f.operand_width = operand_width;
    f.result_width = 2 * operand_width;
    f.context_window = 2 * operand_width + f.result_width - 1;
    f.validate();
    return f;
}

void FormatSpec::validate() const {
    if (n_train_digits < 1) throw ConfigError("FormatSpec: n_train_digits must be positive");
    if (operand_width < 1) throw ConfigError("FormatSpec: operand_width must be positive");
    if (operand_width > 9)
        throw ConfigError("FormatSpec: operand_width above 9 digits is not supported");
    if (result_width < 1) throw ConfigError("FormatSpec: result_width must be positive");
    if (n_train_digits > operand_width)
        throw ConfigError("FormatSpec: n_train_digits exceeds operand_width");
    const int required = op == OpKind::Add ? operand_width + 1 : 2 * operand_width;
    if (result_width != required)
        throw ConfigError("FormatSpec: result_width inconsistent with operation");
    if (context_window != 2 * operand_width + result_width - 1)
        throw ConfigError("FormatSpec: context_window must be 2*operand_width + result_width - 1");
}

void CorpusSpec::validate() const {
    format.validate();
    if (n < 1 || m <= n) throw ConfigError("CorpusSpec: need m > n >= 1");
    if (m > format.operand_width)
        throw ConfigError("CorpusSpec: m exceeds the operand field width");
    if (n != format.n_train_digits)
        throw ConfigError("CorpusSpec: n disagrees with format.n_train_digits");
    if (d1_size < 1 || d2_size < 1 || d3_size < 1)
        throw ConfigError("CorpusSpec: all split sizes must be >= 1");
    const uint64_t capacity = checked_mul_capacity(n);
    if (d1_size > capacity || d2_size > capacity - d1_size)
        throw DataError("CorpusSpec: d1_size + d2_size exceeds the 10^(2n) pair population");
}

ArithSample encode_sample(uint64_t a, uint64_t b, const FormatSpec& format) {
    const uint64_t operand_limit = pow10_u64(format.operand_width);
    if (a >= operand_limit || b >= operand_limit)
        throw DataError("encode_sample: operand overflows its field width");

    const uint64_t c = format.op == OpKind::Add ? a + b : a * b;
    if (format.result_width < 19 && c >= pow10_u64(format.result_width))
        throw DataError("encode_sample: result overflows its field width");

    ArithSample s;
    s.a = a;
    s.b = b;
    s.c = c;
    s.tokens.resize(static_cast<size_t>(format.sequence_length()));

    auto put_natural = [&](uint64_t v, int offset, int width) {
        for (int i = width - 1; i >= 0; --i) {
            s.tokens[static_cast<size_t>(offset + i)] = static_cast<uint8_t>(v % 10);
            v /= 10;
        }
    };
    put_natural(a, 0, format.operand_width);
    put_natural(b, format.operand_width, format.operand_width);

    // Result digits least-significant first.
    uint64_t v = c;
    for (int i = 0; i < format.result_width; ++i) {
        s.tokens[static_cast<size_t>(format.answer_offset() + i)] = static_cast<uint8_t>(v % 10);
        v /= 10;
    }
    return s;
}

uint64_t decode_result(std::span<const uint8_t> answer_tokens, const FormatSpec& format) {
    if (answer_tokens.size() != static_cast<size_t>(format.result_width))
        throw DataError("decode_result: answer length does not match result_width");
    uint64_t v = 0;
    for (size_t i = answer_tokens.size(); i-- > 0;) {
        if (answer_tokens[i] > 9) throw DataError("decode_result: token outside digit range");
        v = v * 10 + answer_tokens[i];
    }
    return v;
}

std::tuple<uint64_t, uint64_t, uint64_t> decode_sample(std::span<const uint8_t> tokens,
                                                       const FormatSpec& format) {
    if (tokens.size() != static_cast<size_t>(format.sequence_length()))
        throw DataError("decode_sample: token length does not match format");
    auto read_natural = [&](int offset, int width) {
        uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            const uint8_t t = tokens[static_cast<size_t>(offset + i)];
            if (t > 9) throw DataError("decode_sample: token outside digit range");
            v = v * 10 + t;
        }
        return v;
    };
    const uint64_t a = read_natural(0, format.operand_width);
    const uint64_t b = read_natural(format.operand_width, format.operand_width);
    const uint64_t c = decode_result(tokens.subspan(static_cast<size_t>(format.answer_offset())),
                                     format);
    return {a, b, c};
}

bool is_ood(uint64_t a, uint64_t b, int n) {
    const uint64_t limit = pow10_u64(n);
    return a >= limit || b >= limit;
}

SplitSet generate_splits(const CorpusSpec& spec) {
    spec.validate();
    Rng rng(spec.rng_seed);

    SplitSet out;
    out.spec = spec;
    out.d1.reserve(spec.d1_size);
    out.d2.reserve(spec.d2_size);
    out.d3.reserve(spec.d3_size);

    const uint64_t id_side = pow10_u64(spec.n);
    const uint64_t id_pairs = id_side * id_side;
    const uint64_t want_id = spec.d1_size + spec.d2_size;

    // D1 and D2: distinct pairs from [0,10^n)^2. Materialize the index pool
    // when it is small, otherwise rejection-sample against a seen-set.
    std::vector<uint64_t> picked;
    picked.reserve(want_id);
    if (id_pairs <= (1ull << 25)) {
        std::vector<uint64_t> pool(id_pairs);
        for (uint64_t i = 0; i < id_pairs; ++i) pool[i] = i;
        rng.partial_shuffle(pool, want_id);
        picked.assign(pool.begin(), pool.begin() + static_cast<ptrdiff_t>(want_id));
    } else {
        std::unordered_set<uint64_t> seen;
        seen.reserve(want_id * 2);
        while (picked.size() < want_id) {
            const uint64_t idx = rng.next_below(id_pairs);
            if (seen.insert(idx).second) picked.push_back(idx);
        }
    }
    for (uint64_t i = 0; i < want_id; ++i) {
        const uint64_t a = picked[i] / id_side;
        const uint64_t b = picked[i] % id_side;
        auto& dst = i < spec.d1_size ? out.d1 : out.d2;
        dst.push_back(encode_sample(a, b, spec.format));
    }

    // D3: uniform over the OOD region of [0,10^m)^2, with replacement.
    const uint64_t ood_side = pow10_u64(spec.m);
    while (out.d3.size() < spec.d3_size) {
        const uint64_t a = rng.next_below(ood_side);
        const uint64_t b = rng.next_below(ood_side);
        const bool ok = spec.ood_both_operands ? (a >= id_side && b >= id_side)
                                               : (a >= id_side || b >= id_side);
        if (ok) out.d3.push_back(encode_sample(a, b, spec.format));
    }
    return out;
}

std::string tokens_to_string(std::span<const uint8_t> tokens) {
    std::string s(tokens.size(), '0');
    for (size_t i = 0; i < tokens.size(); ++i) s[i] = static_cast<char>('0' + tokens[i]);
    return s;
}

std::vector<uint8_t> tokens_from_string(std::string_view line) {
    std::vector<uint8_t> tokens(line.size());
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] < '0' || line[i] > '9')
            throw DataError("tokens_from_string: non-digit character");
        tokens[i] = static_cast<uint8_t>(line[i] - '0');
    }
    return tokens;
}

namespace {

void write_split_file(const std::filesystem::path& path, const std::vector<ArithSample>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_dataset: cannot open " + path.string());
    for (const auto& s : samples) out << tokens_to_string(s.tokens) << '\n';
    if (!out) throw DataError("write_dataset: write failed for " + path.string());
}

std::vector<ArithSample> read_split_file(const std::filesystem::path& path,
                                         const FormatSpec& format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_dataset: cannot open " + path.string());
    std::vector<ArithSample> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ArithSample s;
        s.tokens = tokens_from_string(line);
        std::tie(s.a, s.b, s.c) = decode_sample(s.tokens, format);
        const uint64_t expect = format.op == OpKind::Add ? s.a + s.b : s.a * s.b;
        if (s.c != expect)
            throw DataError("read_dataset: corrupt sample line '" + line + "'");
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace

void write_dataset(const SplitSet& splits, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_split_file(dir / "d1.txt", splits.d1);
    write_split_file(dir / "d2.txt", splits.d2);
    write_split_file(dir / "d3.txt", splits.d3);

    const auto& spec = splits.spec;
    json meta{
        {"version", kCorpusVersion},
        {"op", to_string(spec.format.op)},
        {"n_train_digits", spec.format.n_train_digits},
        {"operand_width", spec.format.operand_width},
        {"result_width", spec.format.result_width},
        {"context_window", spec.format.context_window},
        {"n", spec.n},
        {"m", spec.m},
        {"d1_size", spec.d1_size},
        {"d2_size", spec.d2_size},
        {"d3_size", spec.d3_size},
        {"rng_seed", spec.rng_seed},
        {"ood_both_operands", spec.ood_both_operands},
        {"files", {"d1.txt", "d2.txt", "d3.txt"}},
    };
    std::ofstream out(dir / "corpus.json", std::ios::binary);
    if (!out) throw DataError("write_dataset: cannot open corpus.json");
    out << meta.dump(2) << '\n';
}

SplitSet read_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "corpus.json", std::ios::binary);
    if (!in) throw DataError("read_dataset: missing corpus.json in " + dir.string());
    json meta;
    try {
        in >> meta;
    } catch (const json::exception& e) {
        throw DataError(std::string("read_dataset: corpus.json parse error: ") + e.what());
    }
    if (meta.value("version", "") != kCorpusVersion)
        throw DataError("read_dataset: unsupported corpus version");

    SplitSet out;
    auto& spec = out.spec;
    spec.format.op = op_kind_from_string(meta.at("op").get<std::string>());
    spec.format.n_train_digits = meta.at("n_train_digits").get<int>();
    spec.format.operand_width = meta.at("operand_width").get<int>();
    spec.format.result_width = meta.at("result_width").get<int>();
    spec.format.context_window = meta.at("context_window").get<int>();
    spec.n = meta.at("n").get<int>();
    spec.m = meta.at("m").get<int>();
    spec.d1_size = meta.at("d1_size").get<uint64_t>();
    spec.d2_size = meta.at("d2_size").get<uint64_t>();
    spec.d3_size = meta.at("d3_size").get<uint64_t>();
    spec.rng_seed = meta.at("rng_seed").get<uint64_t>();
    spec.ood_both_operands = meta.at("ood_both_operands").get<bool>();
    spec.validate();

    out.d1 = read_split_file(dir / "d1.txt", spec.format);
    out.d2 = read_split_file(dir / "d2.txt", spec.format);
    out.d3 = read_split_file(dir / "d3.txt", spec.format);
    if (out.d1.size() != spec.d1_size || out.d2.size() != spec.d2_size ||
        out.d3.size() != spec.d3_size)
        throw DataError("read_dataset: split sizes disagree with corpus.json");
    return out;
}

} // namespace modlens::arith
