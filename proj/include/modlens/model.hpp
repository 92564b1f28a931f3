#pragma once

#include "modlens/errors.hpp"
#include "modlens/kernels.hpp"
#include "modlens/rng.hpp"
#include "modlens/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace modlens::gpt {

struct ModelConfig {
    int num_layers = 3;
    int num_heads = 3;
    int d_model = 48;
    int vocab_size = 10;
    int context_window = 15;
    double dropout_prob = 0.1;

    static ModelConfig addition_preset() { return {3, 3, 48, 10, 15, 0.1}; }
    static ModelConfig multiplication_preset() { return {6, 6, 192, 10, 19, 0.1}; }

    int head_dim() const { return d_model / num_heads; }
    void validate() const {
        if (num_layers < 1 || num_heads < 1 || d_model < 1 || vocab_size < 2 ||
            context_window < 1)
            throw ConfigError("ModelConfig: dimensions must be positive");
        if (d_model % num_heads != 0)
            throw ConfigError("ModelConfig: d_model must be divisible by num_heads");
        if (dropout_prob < 0.0 || dropout_prob >= 1.0)
            throw ConfigError("ModelConfig: dropout_prob must be in [0,1)");
    }
    bool operator==(const ModelConfig&) const = default;
};

enum class ParamKind { Embedding, Norm, Bias, Weight };

struct ParamInfo {
    std::string name;
    ParamKind kind;
    bool residual_proj; // output projections feeding a residual stream
};

// Named parameter tensors of the transformer; also the shape of gradient and
// optimizer-moment sets.
template <typename F>
struct ParamSet {
    ModelConfig config;

    Tensor<F> wte;   // [V, C]
    Tensor<F> wpe;   // [ctx, C]
    struct Layer {
        Tensor<F> ln1_g, ln1_b;      // [C]
        Tensor<F> wq, wk, wv, wo;    // [C, C]
        Tensor<F> bq, bk, bv, bo;    // [C]
        Tensor<F> ln2_g, ln2_b;      // [C]
        Tensor<F> fc_w;              // [4C, C]
        Tensor<F> fc_b;              // [4C]
        Tensor<F> proj_w;            // [C, 4C]
        Tensor<F> proj_b;            // [C]
    };
    std::vector<Layer> layers;
    Tensor<F> lnf_g, lnf_b;          // [C]
    Tensor<F> head_w;                // [V, C]; the W of P = softmax(W X), untied

    static ParamSet shaped(const ModelConfig& cfg) {
        cfg.validate();
        const int64_t C = cfg.d_model;
        const int64_t V = cfg.vocab_size;
        ParamSet p;
        p.config = cfg;
        p.wte = Tensor<F>::zeros({V, C});
        p.wpe = Tensor<F>::zeros({cfg.context_window, C});
        p.layers.resize(static_cast<size_t>(cfg.num_layers));
        for (auto& l : p.layers) {
            l.ln1_g = Tensor<F>::zeros({C});
            l.ln1_b = Tensor<F>::zeros({C});
            l.wq = Tensor<F>::zeros({C, C});
            l.wk = Tensor<F>::zeros({C, C});
            l.wv = Tensor<F>::zeros({C, C});
            l.wo = Tensor<F>::zeros({C, C});
            l.bq = Tensor<F>::zeros({C});
            l.bk = Tensor<F>::zeros({C});
            l.bv = Tensor<F>::zeros({C});
            l.bo = Tensor<F>::zeros({C});
            l.ln2_g = Tensor<F>::zeros({C});
            l.ln2_b = Tensor<F>::zeros({C});
            l.fc_w = Tensor<F>::zeros({4 * C, C});
            l.fc_b = Tensor<F>::zeros({4 * C});
            l.proj_w = Tensor<F>::zeros({C, 4 * C});
            l.proj_b = Tensor<F>::zeros({C});
        }
        p.lnf_g = Tensor<F>::zeros({C});
        p.lnf_b = Tensor<F>::zeros({C});
        p.head_w = Tensor<F>::zeros({V, C});
        return p;
    }

    // Enumerates tensors in a fixed order; the checkpoint directory, the
    // initializer draw order, and the optimizer all share it.
    template <typename Self, typename Fn>
    static void visit(Self& self, Fn&& fn) {
        fn(ParamInfo{"wte", ParamKind::Embedding, false}, self.wte);
        fn(ParamInfo{"wpe", ParamKind::Embedding, false}, self.wpe);
        for (size_t i = 0; i < self.layers.size(); ++i) {
            auto& l = self.layers[i];
            const std::string base = "layer" + std::to_string(i) + ".";
            fn(ParamInfo{base + "ln1.scale", ParamKind::Norm, false}, l.ln1_g);
            fn(ParamInfo{base + "ln1.offset", ParamKind::Norm, false}, l.ln1_b);
            fn(ParamInfo{base + "attn.wq", ParamKind::Weight, false}, l.wq);
            fn(ParamInfo{base + "attn.bq", ParamKind::Bias, false}, l.bq);
            fn(ParamInfo{base + "attn.wk", ParamKind::Weight, false}, l.wk);
            fn(ParamInfo{base + "attn.bk", ParamKind::Bias, false}, l.bk);
            fn(ParamInfo{base + "attn.wv", ParamKind::Weight, false}, l.wv);
            fn(ParamInfo{base + "attn.bv", ParamKind::Bias, false}, l.bv);
            fn(ParamInfo{base + "attn.wo", ParamKind::Weight, true}, l.wo);
            fn(ParamInfo{base + "attn.bo", ParamKind::Bias, false}, l.bo);
            fn(ParamInfo{base + "ln2.scale", ParamKind::Norm, false}, l.ln2_g);
            fn(ParamInfo{base + "ln2.offset", ParamKind::Norm, false}, l.ln2_b);
            fn(ParamInfo{base + "mlp.fc_w", ParamKind::Weight, false}, l.fc_w);
            fn(ParamInfo{base + "mlp.fc_b", ParamKind::Bias, false}, l.fc_b);
            fn(ParamInfo{base + "mlp.proj_w", ParamKind::Weight, true}, l.proj_w);
            fn(ParamInfo{base + "mlp.proj_b", ParamKind::Bias, false}, l.proj_b);
        }
        fn(ParamInfo{"lnf.scale", ParamKind::Norm, false}, self.lnf_g);
        fn(ParamInfo{"lnf.offset", ParamKind::Norm, false}, self.lnf_b);
        fn(ParamInfo{"head.w", ParamKind::Weight, false}, self.head_w);
    }

    template <typename Fn>
    void for_each(Fn&& fn) {
        visit(*this, fn);
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
        visit(*this, fn);
    }

    int64_t param_count() const {
        int64_t n = 0;
        for_each([&](const ParamInfo&, const Tensor<F>& t) { n += t.size(); });
        return n;
    }

    void zero() {
        for_each([](const ParamInfo&, Tensor<F>& t) { t.fill(F(0)); });
    }
};

// Flat view over the named tensors; the out-of-line optimizer and checkpoint
// code zips several ParamSets through this.
template <typename F>
std::vector<std::pair<ParamInfo, Tensor<F>*>> named_tensors(ParamSet<F>& p) {
    std::vector<std::pair<ParamInfo, Tensor<F>*>> out;
    p.for_each([&](const ParamInfo& info, Tensor<F>& t) { out.emplace_back(info, &t); });
    return out;
}

template <typename F>
std::vector<std::pair<ParamInfo, const Tensor<F>*>> named_tensors(const ParamSet<F>& p) {
    std::vector<std::pair<ParamInfo, const Tensor<F>*>> out;
    p.for_each([&](const ParamInfo& info, const Tensor<F>& t) { out.emplace_back(info, &t); });
    return out;
}

// Normal(0, 0.02) weights with residual-stream output projections narrowed by
// 1/sqrt(2*num_layers); normalization scales start at one, everything else at
// zero. Draw order is the visit order, so a seed pins every tensor.
template <typename F>
ParamSet<F> init_params(const ModelConfig& cfg, uint64_t seed) {
    ParamSet<F> p = ParamSet<F>::shaped(cfg);
    Rng rng(seed);
    const double base_std = 0.02;
    const double resid_std = base_std / std::sqrt(2.0 * cfg.num_layers);
    p.for_each([&](const ParamInfo& info, Tensor<F>& t) {
        switch (info.kind) {
        case ParamKind::Norm:
            t.fill(info.name.ends_with(".scale") ? F(1) : F(0));
            break;
        case ParamKind::Bias:
            t.fill(F(0));
            break;
        case ParamKind::Embedding:
        case ParamKind::Weight: {
            const double std = info.residual_proj ? resid_std : base_std;
            for (auto& x : t.v) x = static_cast<F>(rng.normal(0.0, std));
            break;
        }
        }
    });
    return p;
}

enum class Mode { train, eval };
enum class MaskPolicy { full, answer_only };

// Where the answer digits sit inside a training sequence; used by the
// answer_only loss mask.
struct MaskSpec {
    MaskPolicy policy = MaskPolicy::full;
    int answer_offset = 0;
    int result_width = 0;
};

// Activation and gradient scratch for batched passes; sized on demand and
// reused across iterations.
template <typename F>
struct Workspace {
    int64_t B = 0, T = 0;
    bool train_buffers = false;

    struct LayerActs {
        Tensor<F> ln1_out, ln1_mean, ln1_rstd;
        Tensor<F> q, k, v;
        Tensor<F> att_probs;  // [B,H,T,T]
        Tensor<F> att_mask;   // dropout on attention weights
        Tensor<F> att_out;    // heads concatenated, pre-projection
        Tensor<F> proj_out;   // post projection (+dropout)
        Tensor<F> proj_mask;
        Tensor<F> x_mid;      // residual after attention
        Tensor<F> ln2_out, ln2_mean, ln2_rstd;
        Tensor<F> fc1;        // pre-GELU [B,T,4C]
        Tensor<F> act;        // post-GELU [B,T,4C]
        Tensor<F> mlp_out;    // post projection (+dropout)
        Tensor<F> mlp_mask;
        Tensor<F> x_out;      // residual after MLP
    };

    Tensor<F> x0;        // embeddings (+dropout)
    Tensor<F> emb_mask;
    std::vector<LayerActs> layer;
    Tensor<F> lnf_out, lnf_mean, lnf_rstd;
    Tensor<F> logits;    // [B,T,V]
    Tensor<F> probs;     // [B,T,V]

    // gradient scratch
    Tensor<F> d_x, d_branch, d_ln, d_q, d_k, d_v, d_fc1, d_act, d_logits;
    std::vector<uint8_t> targets, target_mask;

    void resize(const ModelConfig& cfg, int64_t batch, int64_t seq, bool for_train) {
        if (B == batch && T == seq && train_buffers == for_train &&
            layer.size() == static_cast<size_t>(cfg.num_layers) &&
            x0.size() == batch * seq * cfg.d_model)
            return;
        B = batch;
        T = seq;
        train_buffers = for_train;
        const int64_t C = cfg.d_model;
        const int64_t V = cfg.vocab_size;
        const int64_t H = cfg.num_heads;

        x0 = Tensor<F>::zeros({B, T, C});
        if (for_train) emb_mask = Tensor<F>::zeros({B, T, C});
        layer.assign(static_cast<size_t>(cfg.num_layers), {});
        for (auto& l : layer) {
            l.ln1_out = Tensor<F>::zeros({B, T, C});
            l.ln1_mean = Tensor<F>::zeros({B, T});
            l.ln1_rstd = Tensor<F>::zeros({B, T});
            l.q = Tensor<F>::zeros({B, T, C});
            l.k = Tensor<F>::zeros({B, T, C});
            l.v = Tensor<F>::zeros({B, T, C});
            l.att_probs = Tensor<F>::zeros({B, H, T, T});
            if (for_train) l.att_mask = Tensor<F>::zeros({B, H, T, T});
            l.att_out = Tensor<F>::zeros({B, T, C});
            l.proj_out = Tensor<F>::zeros({B, T, C});
            if (for_train) l.proj_mask = Tensor<F>::zeros({B, T, C});
            l.x_mid = Tensor<F>::zeros({B, T, C});
            l.ln2_out = Tensor<F>::zeros({B, T, C});
            l.ln2_mean = Tensor<F>::zeros({B, T});
            l.ln2_rstd = Tensor<F>::zeros({B, T});
            l.fc1 = Tensor<F>::zeros({B, T, 4 * C});
            l.act = Tensor<F>::zeros({B, T, 4 * C});
            l.mlp_out = Tensor<F>::zeros({B, T, C});
            if (for_train) l.mlp_mask = Tensor<F>::zeros({B, T, C});
            l.x_out = Tensor<F>::zeros({B, T, C});
        }
        lnf_out = Tensor<F>::zeros({B, T, C});
        lnf_mean = Tensor<F>::zeros({B, T});
        lnf_rstd = Tensor<F>::zeros({B, T});
        logits = Tensor<F>::zeros({B, T, V});
        probs = Tensor<F>::zeros({B, T, V});

        if (for_train) {
            d_x = Tensor<F>::zeros({B, T, C});
            d_branch = Tensor<F>::zeros({B, T, C});
            d_ln = Tensor<F>::zeros({B, T, C});
            d_q = Tensor<F>::zeros({B, T, C});
            d_k = Tensor<F>::zeros({B, T, C});
            d_v = Tensor<F>::zeros({B, T, C});
            d_fc1 = Tensor<F>::zeros({B, T, 4 * C});
            d_act = Tensor<F>::zeros({B, T, 4 * C});
            d_logits = Tensor<F>::zeros({B, T, V});
            targets.assign(static_cast<size_t>(B * T), 0);
            target_mask.assign(static_cast<size_t>(B * T), 0);
        }
    }
};

// Runs the full network over a flat [B,T] token buffer, leaving activations
// (through logits) in the workspace. rng is consumed only in train mode with
// dropout_prob > 0.
template <typename F>
void forward_batch(const ParamSet<F>& p, const uint8_t* tokens, int64_t B, int64_t T,
                   Mode mode, Rng* rng, Workspace<F>& ws) {
    const ModelConfig& cfg = p.config;
    if (T < 1 || T > cfg.context_window)
        throw DataError("forward: sequence length exceeds the context window");
    for (int64_t i = 0; i < B * T; ++i)
        if (tokens[i] >= cfg.vocab_size) throw DataError("forward: token id out of vocabulary");

    const bool drop = mode == Mode::train && cfg.dropout_prob > 0.0;
    if (drop && rng == nullptr)
        throw ConfigError("forward: train mode with dropout requires an rng");
    ws.resize(cfg, B, T, mode == Mode::train);

    const int64_t C = cfg.d_model;
    const int64_t V = cfg.vocab_size;
    const int64_t H = cfg.num_heads;
    const int64_t NT = B * T;
    const F pdrop = static_cast<F>(cfg.dropout_prob);

    kernels::encoder_forward(ws.x0.data(), tokens, p.wte.data(), p.wpe.data(), B, T, C);
    if (drop) kernels::dropout_forward(ws.x0.data(), ws.emb_mask.data(), pdrop, *rng, NT * C);

    const F* x = ws.x0.data();
    for (int li = 0; li < cfg.num_layers; ++li) {
        auto& l = ws.layer[static_cast<size_t>(li)];
        const auto& lp = p.layers[static_cast<size_t>(li)];

        kernels::layernorm_forward(l.ln1_out.data(), l.ln1_mean.data(), l.ln1_rstd.data(), x,
                                   lp.ln1_g.data(), lp.ln1_b.data(), NT, C);
        kernels::matmul_forward(l.q.data(), l.ln1_out.data(), lp.wq.data(), lp.bq.data(), NT, C, C);
        kernels::matmul_forward(l.k.data(), l.ln1_out.data(), lp.wk.data(), lp.bk.data(), NT, C, C);
        kernels::matmul_forward(l.v.data(), l.ln1_out.data(), lp.wv.data(), lp.bv.data(), NT, C, C);

        const F* att_mask = nullptr;
        if (drop) {
            const int64_t n = B * H * T * T;
            F* m = l.att_mask.data();
            const F keep_scale = F(1) / (F(1) - pdrop);
            for (int64_t i = 0; i < n; ++i)
                m[i] = rng->uniform() < cfg.dropout_prob ? F(0) : keep_scale;
            att_mask = m;
        }
        kernels::attention_forward(l.att_out.data(), l.att_probs.data(), l.q.data(), l.k.data(),
                                   l.v.data(), att_mask, B, T, C, H);
        kernels::matmul_forward(l.proj_out.data(), l.att_out.data(), lp.wo.data(), lp.bo.data(),
                                NT, C, C);
        if (drop)
            kernels::dropout_forward(l.proj_out.data(), l.proj_mask.data(), pdrop, *rng, NT * C);
        kernels::residual_forward(l.x_mid.data(), x, l.proj_out.data(), NT * C);

        kernels::layernorm_forward(l.ln2_out.data(), l.ln2_mean.data(), l.ln2_rstd.data(),
                                   l.x_mid.data(), lp.ln2_g.data(), lp.ln2_b.data(), NT, C);
        kernels::matmul_forward(l.fc1.data(), l.ln2_out.data(), lp.fc_w.data(), lp.fc_b.data(),
                                NT, C, 4 * C);
        kernels::gelu_forward(l.act.data(), l.fc1.data(), NT * 4 * C);
        kernels::matmul_forward(l.mlp_out.data(), l.act.data(), lp.proj_w.data(), lp.proj_b.data(),
                                NT, 4 * C, C);
        if (drop)
            kernels::dropout_forward(l.mlp_out.data(), l.mlp_mask.data(), pdrop, *rng, NT * C);
        kernels::residual_forward(l.x_out.data(), l.x_mid.data(), l.mlp_out.data(), NT * C);

        x = l.x_out.data();
    }

    kernels::layernorm_forward(ws.lnf_out.data(), ws.lnf_mean.data(), ws.lnf_rstd.data(), x,
                               p.lnf_g.data(), p.lnf_b.data(), NT, C);
    kernels::matmul_forward(ws.logits.data(), ws.lnf_out.data(), p.head_w.data(),
                            static_cast<const F*>(nullptr), NT, C, V);
}

// Mean cross-entropy and exact reverse-mode gradients for a batch of
// sequences of length context_window + 1. Gradients accumulate into `grads`
// (callers zero it per step).
template <typename F>
double loss_and_grads(const ParamSet<F>& p, const uint8_t* sequences, int64_t B,
                      const MaskSpec& mask_spec, Rng* rng, ParamSet<F>& grads,
                      Workspace<F>& ws, Mode mode = Mode::train) {
    const ModelConfig& cfg = p.config;
    const int64_t T = cfg.context_window;
    const int64_t L = T + 1;
    const int64_t C = cfg.d_model;
    const int64_t V = cfg.vocab_size;
    const int64_t H = cfg.num_heads;
    const int64_t NT = B * T;
    if (B < 1) throw DataError("loss_and_grads: empty batch");

    // Split each row into inputs [0..T) and targets [1..T].
    std::vector<uint8_t> inputs(static_cast<size_t>(NT));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) inputs[static_cast<size_t>(b * T + t)] =
            sequences[b * L + t];

    forward_batch(p, inputs.data(), B, T, mode, rng, ws);

    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < T; ++t) {
            ws.targets[static_cast<size_t>(b * T + t)] = sequences[b * L + t + 1];
            bool on = true;
            if (mask_spec.policy == MaskPolicy::answer_only) {
                const int64_t tgt_pos = t + 1;
                on = tgt_pos >= mask_spec.answer_offset &&
                     tgt_pos < mask_spec.answer_offset + mask_spec.result_width;
            }
            ws.target_mask[static_cast<size_t>(b * T + t)] = on ? 1 : 0;
        }
    }

    kernels::softmax_rows(ws.probs.data(), ws.logits.data(), NT, V);
    ws.d_logits.fill(F(0));
    const double loss = kernels::crossentropy_forward_backward(
        ws.d_logits.data(), ws.probs.data(), ws.targets.data(), ws.target_mask.data(), NT, V);

    if (!std::isfinite(loss)) {
        // Surface which row went bad to make divergence reports actionable.
        for (int64_t b = 0; b < B; ++b) {
            double row = 0;
            for (int64_t t = 0; t < T; ++t) {
                const size_t r = static_cast<size_t>(b * T + t);
                if (!ws.target_mask[r]) continue;
                row -= std::log(static_cast<double>(ws.probs.data()[r * V + ws.targets[r]]));
            }
            if (!std::isfinite(row))
                throw NumericError("loss_and_grads: non-finite loss at batch index " +
                                   std::to_string(b));
        }
        throw NumericError("loss_and_grads: non-finite loss");
    }

    // Backward.
    const bool drop = mode == Mode::train && cfg.dropout_prob > 0.0;
    ws.d_x.fill(F(0));
    ws.d_ln.fill(F(0));
    kernels::matmul_backward(ws.d_ln.data(), grads.head_w.data(), static_cast<F*>(nullptr),
                             ws.d_logits.data(), ws.lnf_out.data(), p.head_w.data(), NT, C, V);
    {
        const F* x_last = cfg.num_layers > 0
                              ? ws.layer[static_cast<size_t>(cfg.num_layers - 1)].x_out.data()
                              : ws.x0.data();
        kernels::layernorm_backward(ws.d_x.data(), grads.lnf_g.data(), grads.lnf_b.data(),
                                    ws.d_ln.data(), x_last, ws.lnf_mean.data(),
                                    ws.lnf_rstd.data(), p.lnf_g.data(), NT, C);
    }

    for (int li = cfg.num_layers - 1; li >= 0; --li) {
        auto& l = ws.layer[static_cast<size_t>(li)];
        const auto& lp = p.layers[static_cast<size_t>(li)];
        auto& lg = grads.layers[static_cast<size_t>(li)];
        const F* x_in = li == 0 ? ws.x0.data() : ws.layer[static_cast<size_t>(li - 1)].x_out.data();

        // MLP branch: d_x holds grad wrt x_out = x_mid + mlp_out.
        if (drop) {
            ws.d_branch.fill(F(0));
            kernels::apply_mask_backward(ws.d_branch.data(), ws.d_x.data(), l.mlp_mask.data(),
                                         NT * C);
        } else {
            ws.d_branch.v = ws.d_x.v;
        }
        ws.d_act.fill(F(0));
        kernels::matmul_backward(ws.d_act.data(), lg.proj_w.data(), lg.proj_b.data(),
                                 ws.d_branch.data(), l.act.data(), lp.proj_w.data(),
                                 NT, 4 * C, C);
        ws.d_fc1.fill(F(0));
        kernels::gelu_backward(ws.d_fc1.data(), ws.d_act.data(), l.fc1.data(), NT * 4 * C);
        ws.d_ln.fill(F(0));
        kernels::matmul_backward(ws.d_ln.data(), lg.fc_w.data(), lg.fc_b.data(), ws.d_fc1.data(),
                                 l.ln2_out.data(), lp.fc_w.data(), NT, C, 4 * C);
        // d_x becomes grad wrt x_mid: residual passthrough + layernorm path.
        kernels::layernorm_backward(ws.d_x.data(), lg.ln2_g.data(), lg.ln2_b.data(),
                                    ws.d_ln.data(), l.x_mid.data(), l.ln2_mean.data(),
                                    l.ln2_rstd.data(), lp.ln2_g.data(), NT, C);

        // Attention branch: x_mid = x_in + proj_out.
        if (drop) {
            ws.d_branch.fill(F(0));
            kernels::apply_mask_backward(ws.d_branch.data(), ws.d_x.data(), l.proj_mask.data(),
                                         NT * C);
        } else {
            ws.d_branch.v = ws.d_x.v;
        }
        ws.d_ln.fill(F(0)); // reuse as grad wrt att_out
        kernels::matmul_backward(ws.d_ln.data(), lg.wo.data(), lg.bo.data(), ws.d_branch.data(),
                                 l.att_out.data(), lp.wo.data(), NT, C, C);
        ws.d_q.fill(F(0));
        ws.d_k.fill(F(0));
        ws.d_v.fill(F(0));
        kernels::attention_backward(ws.d_q.data(), ws.d_k.data(), ws.d_v.data(), ws.d_ln.data(),
                                    l.q.data(), l.k.data(), l.v.data(), l.att_probs.data(),
                                    drop ? l.att_mask.data() : nullptr, B, T, C, H);
        ws.d_ln.fill(F(0)); // now grad wrt ln1_out
        kernels::matmul_backward(ws.d_ln.data(), lg.wq.data(), lg.bq.data(), ws.d_q.data(),
                                 l.ln1_out.data(), lp.wq.data(), NT, C, C);
        kernels::matmul_backward(ws.d_ln.data(), lg.wk.data(), lg.bk.data(), ws.d_k.data(),
                                 l.ln1_out.data(), lp.wk.data(), NT, C, C);
        kernels::matmul_backward(ws.d_ln.data(), lg.wv.data(), lg.bv.data(), ws.d_v.data(),
                                 l.ln1_out.data(), lp.wv.data(), NT, C, C);
        // d_x becomes grad wrt x_in.
        kernels::layernorm_backward(ws.d_x.data(), lg.ln1_g.data(), lg.ln1_b.data(),
                                    ws.d_ln.data(), x_in, l.ln1_mean.data(), l.ln1_rstd.data(),
                                    lp.ln1_g.data(), NT, C);
    }

    if (drop) {
        ws.d_branch.fill(F(0));
        kernels::apply_mask_backward(ws.d_branch.data(), ws.d_x.data(), ws.emb_mask.data(),
                                     NT * C);
        kernels::encoder_backward(grads.wte.data(), grads.wpe.data(), ws.d_branch.data(),
                                  inputs.data(), B, T, C);
    } else {
        kernels::encoder_backward(grads.wte.data(), grads.wpe.data(), ws.d_x.data(),
                                  inputs.data(), B, T, C);
    }
    return loss;
}

// --- public single-sequence surface ---

template <typename F>
struct ForwardTrace {
    int64_t seq_len = 0;
    Tensor<F> logits;                      // [T, V]
    Tensor<F> hidden;                      // [T, C] post-final-norm, pre-head
    std::vector<Tensor<F>> layer_hidden;   // optional per-layer residual outputs
};

template <typename F>
ForwardTrace<F> forward(const ParamSet<F>& p, std::span<const uint8_t> tokens, Mode mode,
                        Rng* rng = nullptr, bool keep_layer_hidden = false) {
    const int64_t T = static_cast<int64_t>(tokens.size());
    Workspace<F> ws;
    forward_batch(p, tokens.data(), 1, T, mode, rng, ws);
    ForwardTrace<F> tr;
    tr.seq_len = T;
    tr.logits = Tensor<F>::zeros({T, p.config.vocab_size});
    tr.logits.v = ws.logits.v;
    tr.hidden = Tensor<F>::zeros({T, p.config.d_model});
    tr.hidden.v = ws.lnf_out.v;
    if (keep_layer_hidden) {
        for (const auto& l : ws.layer) {
            Tensor<F> h = Tensor<F>::zeros({T, p.config.d_model});
            h.v = l.x_out.v;
            tr.layer_hidden.push_back(std::move(h));
        }
    }
    return tr;
}

// Greedy decoding for a batch of equal-length prefixes laid out in `rows`
// with stride prefix_len + steps; generated tokens are written in place.
// Argmax ties resolve to the lowest token id.
template <typename F>
void greedy_generate_batch(const ParamSet<F>& p, uint8_t* rows, int64_t num_rows,
                           int64_t prefix_len, int64_t steps, Workspace<F>& ws) {
    const ModelConfig& cfg = p.config;
    const int64_t stride = prefix_len + steps;
    if (prefix_len < 1 || prefix_len + steps > cfg.context_window + 1)
        throw DataError("greedy_generate: prefix plus steps exceeds context window + 1");
    if (steps == 0 || num_rows == 0) return;

    const int64_t V = cfg.vocab_size;
    std::vector<uint8_t> buf;
    for (int64_t s = 0; s < steps; ++s) {
        const int64_t T = prefix_len + s;
        buf.resize(static_cast<size_t>(num_rows * T));
        for (int64_t r = 0; r < num_rows; ++r)
            for (int64_t t = 0; t < T; ++t)
                buf[static_cast<size_t>(r * T + t)] = rows[r * stride + t];
        forward_batch(p, buf.data(), num_rows, T, Mode::eval, nullptr, ws);
        for (int64_t r = 0; r < num_rows; ++r) {
            const F* l = ws.logits.data() + (r * T + (T - 1)) * V;
            int best = 0;
            for (int i = 1; i < V; ++i)
                if (l[i] > l[best]) best = i;
            rows[r * stride + T] = static_cast<uint8_t>(best);
        }
    }
}

template <typename F>
std::vector<uint8_t> greedy_generate(const ParamSet<F>& p, std::span<const uint8_t> prefix,
                                     int64_t steps) {
    std::vector<uint8_t> row(prefix.begin(), prefix.end());
    row.resize(prefix.size() + static_cast<size_t>(steps));
    Workspace<F> ws;
    greedy_generate_batch(p, row.data(), 1, static_cast<int64_t>(prefix.size()), steps, ws);
    return row;
}

// Row t = softmax(head_w * X[:,t]) over an eval-mode pass.
template <typename F>
Tensor<F> next_token_distribution(const ParamSet<F>& p, std::span<const uint8_t> tokens) {
    const int64_t T = static_cast<int64_t>(tokens.size());
    Workspace<F> ws;
    forward_batch(p, tokens.data(), 1, T, Mode::eval, nullptr, ws);
    Tensor<F> rows = Tensor<F>::zeros({T, p.config.vocab_size});
    kernels::softmax_rows(rows.data(), ws.logits.data(), T, p.config.vocab_size);
    return rows;
}

// X[:, position] of the eval-mode trace (post final normalization).
template <typename F>
std::vector<F> hidden_representation(const ParamSet<F>& p, std::span<const uint8_t> tokens,
                                     int64_t position) {
    const int64_t T = static_cast<int64_t>(tokens.size());
    if (position < 0 || position >= T)
        throw DataError("hidden_representation: position out of range");
    Workspace<F> ws;
    forward_batch(p, tokens.data(), 1, T, Mode::eval, nullptr, ws);
    const int64_t C = p.config.d_model;
    const F* h = ws.lnf_out.data() + position * C;
    return std::vector<F>(h, h + C);
}

} // namespace modlens::gpt
