#include "modlens/config.hpp"

#include "modlens/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace modlens::cli {

RunConfig RunConfig::from_preset(const std::string& name, uint64_t seed) {
    RunConfig c;
    c.preset = name;
    c.seed = seed;
    c.out_dir = "runs/" + name;
    if (name == "add3") {
        c.corpus.format = arith::FormatSpec::addition();
        c.corpus.n = 3;
        c.corpus.m = 5;
        c.corpus.d1_size = 10000;
        c.corpus.d2_size = 10000;
        c.corpus.d3_size = 10000;
        c.model = gpt::ModelConfig::addition_preset();
    } else if (name == "mul3") {
        c.corpus.format = arith::FormatSpec::multiplication();
        c.corpus.n = 3;
        c.corpus.m = 5;
        c.corpus.d1_size = 50000;
        c.corpus.d2_size = 10000;
        c.corpus.d3_size = 10000;
        c.model = gpt::ModelConfig::multiplication_preset();
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected add3 or mul3)");
    }
    c.corpus.rng_seed = seed;
    c.train.rng_seed = seed;
    c.validate();
    return c;
}

void RunConfig::validate() const {
    corpus.validate();
    model.validate();
    train.validate();
    if (model.context_window != corpus.format.context_window)
        throw ConfigError("RunConfig: model context_window disagrees with the data format");
    if (model.vocab_size != 10) throw ConfigError("RunConfig: vocab_size must be 10");
    if (probe.stride == 0) throw ConfigError("RunConfig: probe stride must be positive");
    if (probe.pca_k < 1 || probe.pca_k > model.d_model)
        throw ConfigError("RunConfig: pca_k out of range");
    if (probe.digit_place < corpus.n || probe.digit_place >= corpus.format.operand_width)
        throw ConfigError("RunConfig: digit_place must address a padded operand digit");
    if (out_dir.empty()) throw ConfigError("RunConfig: out_dir must not be empty");
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("config: bad unsigned integer for " + key + ": '" + v + "'");
    return out;
}

int64_t parse_i64(const std::string& key, const std::string& v) {
    int64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    return static_cast<int>(parse_i64(key, v));
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "' (use true/false)");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_double(key, item));
    }
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // Trim to the shortest representation that round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        if (std::stod(probe) == v) return probe;
    }
    return buf;
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    // Resolve the preset first so later keys act as overrides.
    std::istringstream scan(text);
    std::string line;
    std::string preset = "add3";
    uint64_t seed = 1;
    bool saw_seed = false;
    {
        std::string section;
        while (std::getline(scan, line)) {
            if (const size_t hash = line.find('#'); hash != std::string::npos)
                line.resize(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') continue;
            const size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key == "preset") preset = value;
            if (key == "seed") {
                seed = parse_u64(key, value);
                saw_seed = true;
            }
        }
    }
    RunConfig c = RunConfig::from_preset(preset, seed);
    (void)saw_seed;

    std::istringstream in(text);
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config: malformed section header on line " +
                                  std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            if (section != "corpus" && section != "model" && section != "train" &&
                section != "probe")
                throw ConfigError("config: unknown section [" + section + "]");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected key = value on line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (section.empty()) {
            if (key == "preset" || key == "seed") continue; // already applied
            if (key == "out_dir") c.out_dir = value;
            else throw ConfigError("config: unknown global key '" + key + "'");
        } else if (section == "corpus") {
            if (key == "op") {
                const OpKind op = op_kind_from_string(value);
                c.corpus.format = op == OpKind::Add
                                      ? arith::FormatSpec::addition(c.corpus.n,
                                                                    c.corpus.format.operand_width)
                                      : arith::FormatSpec::multiplication(
                                            c.corpus.n, c.corpus.format.operand_width);
                c.model.context_window = c.corpus.format.context_window;
            } else if (key == "n") {
                c.corpus.n = parse_int(key, value);
                c.corpus.format.n_train_digits = c.corpus.n;
            } else if (key == "m") c.corpus.m = parse_int(key, value);
            else if (key == "operand_width") {
                const int w = parse_int(key, value);
                c.corpus.format = c.corpus.format.op == OpKind::Add
                                      ? arith::FormatSpec::addition(c.corpus.n, w)
                                      : arith::FormatSpec::multiplication(c.corpus.n, w);
                c.model.context_window = c.corpus.format.context_window;
            } else if (key == "d1_size") c.corpus.d1_size = parse_u64(key, value);
            else if (key == "d2_size") c.corpus.d2_size = parse_u64(key, value);
            else if (key == "d3_size") c.corpus.d3_size = parse_u64(key, value);
            else if (key == "ood_both_operands") c.corpus.ood_both_operands = parse_bool(key, value);
            else throw ConfigError("config: unknown corpus key '" + key + "'");
        } else if (section == "model") {
            if (key == "num_layers") c.model.num_layers = parse_int(key, value);
            else if (key == "num_heads") c.model.num_heads = parse_int(key, value);
            else if (key == "d_model") c.model.d_model = parse_int(key, value);
            else if (key == "dropout_prob") c.model.dropout_prob = parse_double(key, value);
            else throw ConfigError("config: unknown model key '" + key + "'");
        } else if (section == "train") {
            if (key == "learning_rate") c.train.learning_rate = parse_double(key, value);
            else if (key == "beta1") c.train.beta1 = parse_double(key, value);
            else if (key == "beta2") c.train.beta2 = parse_double(key, value);
            else if (key == "weight_decay") c.train.weight_decay = parse_double(key, value);
            else if (key == "grad_norm_clip") c.train.grad_norm_clip = parse_double(key, value);
            else if (key == "batch_size") c.train.batch_size = parse_int(key, value);
            else if (key == "max_iterations") c.train.max_iterations = parse_i64(key, value);
            else if (key == "eval_interval") c.train.eval_interval = parse_i64(key, value);
            else if (key == "eval_subset_size") c.train.eval_subset_size = parse_i64(key, value);
            else if (key == "milestones") c.train.milestones = parse_double_list(key, value);
            else if (key == "mask_policy") {
                if (value == "full") c.train.mask_policy = gpt::MaskPolicy::full;
                else if (value == "answer_only") c.train.mask_policy = gpt::MaskPolicy::answer_only;
                else throw ConfigError("config: mask_policy must be full or answer_only");
            } else if (key == "warmup") c.train.warmup = parse_bool(key, value);
            else if (key == "warmup_steps") c.train.warmup_steps = parse_i64(key, value);
            else throw ConfigError("config: unknown train key '" + key + "'");
        } else if (section == "probe") {
            if (key == "stride") c.probe.stride = parse_u64(key, value);
            else if (key == "sample_count") c.probe.sample_count = parse_u64(key, value);
            else if (key == "perturb_pairs") c.probe.perturb_pairs = parse_u64(key, value);
            else if (key == "digit_place") c.probe.digit_place = parse_int(key, value);
            else if (key == "pca_k") c.probe.pca_k = parse_int(key, value);
            else if (key == "pca_pairs") c.probe.pca_pairs = parse_u64(key, value);
            else if (key == "exhaustive") c.probe.exhaustive = parse_bool(key, value);
            else throw ConfigError("config: unknown probe key '" + key + "'");
        }
    }
    // Seeds follow the global seed.
    c.corpus.rng_seed = c.seed;
    c.train.rng_seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "preset = " << c.preset << "\n";
    out << "seed = " << c.seed << "\n";
    out << "out_dir = " << c.out_dir << "\n";
    out << "\n[corpus]\n";
    out << "op = " << to_string(c.corpus.format.op) << "\n";
    out << "n = " << c.corpus.n << "\n";
    out << "m = " << c.corpus.m << "\n";
    out << "operand_width = " << c.corpus.format.operand_width << "\n";
    out << "d1_size = " << c.corpus.d1_size << "\n";
    out << "d2_size = " << c.corpus.d2_size << "\n";
    out << "d3_size = " << c.corpus.d3_size << "\n";
    out << "ood_both_operands = " << (c.corpus.ood_both_operands ? "true" : "false") << "\n";
    out << "\n[model]\n";
    out << "num_layers = " << c.model.num_layers << "\n";
    out << "num_heads = " << c.model.num_heads << "\n";
    out << "d_model = " << c.model.d_model << "\n";
    out << "dropout_prob = " << format_double(c.model.dropout_prob) << "\n";
    out << "\n[train]\n";
    out << "learning_rate = " << format_double(c.train.learning_rate) << "\n";
    out << "beta1 = " << format_double(c.train.beta1) << "\n";
    out << "beta2 = " << format_double(c.train.beta2) << "\n";
    out << "weight_decay = " << format_double(c.train.weight_decay) << "\n";
    out << "grad_norm_clip = " << format_double(c.train.grad_norm_clip) << "\n";
    out << "batch_size = " << c.train.batch_size << "\n";
    out << "max_iterations = " << c.train.max_iterations << "\n";
    out << "eval_interval = " << c.train.eval_interval << "\n";
    out << "eval_subset_size = " << c.train.eval_subset_size << "\n";
    out << "milestones = ";
    for (size_t i = 0; i < c.train.milestones.size(); ++i) {
        if (i) out << ",";
        out << format_double(c.train.milestones[i]);
    }
    out << "\n";
    out << "mask_policy = "
        << (c.train.mask_policy == gpt::MaskPolicy::full ? "full" : "answer_only") << "\n";
    out << "warmup = " << (c.train.warmup ? "true" : "false") << "\n";
    out << "warmup_steps = " << c.train.warmup_steps << "\n";
    out << "\n[probe]\n";
    out << "stride = " << c.probe.stride << "\n";
    out << "sample_count = " << c.probe.sample_count << "\n";
    out << "perturb_pairs = " << c.probe.perturb_pairs << "\n";
    out << "digit_place = " << c.probe.digit_place << "\n";
    out << "pca_k = " << c.probe.pca_k << "\n";
    out << "pca_pairs = " << c.probe.pca_pairs << "\n";
    out << "exhaustive = " << (c.probe.exhaustive ? "true" : "false") << "\n";
    return out.str();
}

} // namespace modlens::cli
