#pragma once

#include "modlens/rng.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

// Batched transformer kernels over flat row-major buffers. Forward kernels
// assign their outputs; backward kernels accumulate into their gradient
// arguments, so callers zero gradient buffers once per pass. Loops are
// arranged so each output element is owned by one iteration, keeping results
// independent of vectorization width.

namespace modlens::gpt::kernels {

// out[n, t, :] = wte[tok[n,t], :] + wpe[t, :]
template <typename F>
void encoder_forward(F* out, const uint8_t* tokens, const F* wte, const F* wpe,
                     int64_t B, int64_t T, int64_t C) {
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < T; ++t) {
            F* o = out + (b * T + t) * C;
            const F* te = wte + tokens[b * T + t] * C;
            const F* pe = wpe + t * C;
            for (int64_t c = 0; c < C; ++c) o[c] = te[c] + pe[c];
        }
    }
}

template <typename F>
void encoder_backward(F* dwte, F* dwpe, const F* dout, const uint8_t* tokens,
                      int64_t B, int64_t T, int64_t C) {
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < T; ++t) {
            const F* d = dout + (b * T + t) * C;
            F* dte = dwte + tokens[b * T + t] * C;
            F* dpe = dwpe + t * C;
            for (int64_t c = 0; c < C; ++c) {
                dte[c] += d[c];
                dpe[c] += d[c];
            }
        }
    }
}

// Row-wise normalization with learned scale/offset; caches mean and
// reciprocal stddev for the backward pass.
template <typename F>
void layernorm_forward(F* out, F* mean, F* rstd, const F* in, const F* scale,
                       const F* offset, int64_t N, int64_t C, F eps = F(1e-5)) {
    for (int64_t n = 0; n < N; ++n) {
        const F* x = in + n * C;
        F m = 0;
#pragma omp simd reduction(+ : m)
        for (int64_t c = 0; c < C; ++c) m += x[c];
        m /= F(C);
        F var = 0;
#pragma omp simd reduction(+ : var)
        for (int64_t c = 0; c < C; ++c) var += (x[c] - m) * (x[c] - m);
        var /= F(C);
        const F rs = F(1) / std::sqrt(var + eps);
        mean[n] = m;
        rstd[n] = rs;
        F* o = out + n * C;
        for (int64_t c = 0; c < C; ++c) o[c] = (x[c] - m) * rs * scale[c] + offset[c];
    }
}

template <typename F>
void layernorm_backward(F* din, F* dscale, F* doffset, const F* dout, const F* in,
                        const F* mean, const F* rstd, const F* scale,
                        int64_t N, int64_t C) {
    for (int64_t n = 0; n < N; ++n) {
        const F* x = in + n * C;
        const F* d = dout + n * C;
        const F m = mean[n];
        const F rs = rstd[n];

        F sum_dxhat = 0;
        F sum_dxhat_xhat = 0;
        for (int64_t c = 0; c < C; ++c) {
            const F xhat = (x[c] - m) * rs;
            const F dxhat = d[c] * scale[c];
            dscale[c] += d[c] * xhat;
            doffset[c] += d[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        sum_dxhat /= F(C);
        sum_dxhat_xhat /= F(C);

        F* dn = din + n * C;
        for (int64_t c = 0; c < C; ++c) {
            const F xhat = (x[c] - m) * rs;
            const F dxhat = d[c] * scale[c];
            dn[c] += rs * (dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
        }
    }
}

// out[M,N] = in[M,K] * w[N,K]^T (+ bias). Weights live as [out_features,
// in_features], the same layout the checkpoint stores.
template <typename F>
void matmul_forward(F* out, const F* in, const F* w, const F* bias,
                    int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        const F* a = in + m * K;
        F* o = out + m * N;
        for (int64_t n = 0; n < N; ++n) {
            const F* wr = w + n * K;
            F acc = bias ? bias[n] : F(0);
#pragma omp simd reduction(+ : acc)
            for (int64_t k = 0; k < K; ++k) acc += a[k] * wr[k];
            o[n] = acc;
        }
    }
}

template <typename F>
void matmul_backward(F* din, F* dw, F* db, const F* dout, const F* in, const F* w,
                     int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        const F* d = dout + m * N;
        F* di = din + m * K;
        for (int64_t n = 0; n < N; ++n) {
            const F g = d[n];
            if (g == F(0)) continue;
            const F* wr = w + n * K;
            for (int64_t k = 0; k < K; ++k) di[k] += g * wr[k];
        }
    }
    for (int64_t m = 0; m < M; ++m) {
        const F* d = dout + m * N;
        const F* a = in + m * K;
        for (int64_t n = 0; n < N; ++n) {
            const F g = d[n];
            if (g == F(0)) continue;
            F* dwr = dw + n * K;
            for (int64_t k = 0; k < K; ++k) dwr[k] += g * a[k];
        }
    }
    if (db) {
        for (int64_t m = 0; m < M; ++m) {
            const F* d = dout + m * N;
            for (int64_t n = 0; n < N; ++n) db[n] += d[n];
        }
    }
}

// Causal multi-head attention. q,k,v are [B,T,C] with head h in columns
// [h*hd,(h+1)*hd). probs holds the post-softmax weights (pre-dropout);
// drop_mask, when non-null, is applied multiplicatively on the weights.
template <typename F>
void attention_forward(F* out, F* probs, const F* q, const F* k, const F* v,
                       const F* drop_mask, int64_t B, int64_t T, int64_t C, int64_t H) {
    const int64_t hd = C / H;
    const F scale = F(1) / std::sqrt(F(hd));
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < H; ++h) {
            const int64_t hoff = h * hd;
            for (int64_t t = 0; t < T; ++t) {
                const F* qr = q + (b * T + t) * C + hoff;
                F* p = probs + ((b * H + h) * T + t) * T;

                F maxv = -1e30F;
                for (int64_t j = 0; j <= t; ++j) {
                    const F* kr = k + (b * T + j) * C + hoff;
                    F acc = 0;
#pragma omp simd reduction(+ : acc)
                    for (int64_t d = 0; d < hd; ++d) acc += qr[d] * kr[d];
                    acc *= scale;
                    p[j] = acc;
                    if (acc > maxv) maxv = acc;
                }
                F sum = 0;
                for (int64_t j = 0; j <= t; ++j) {
                    const F e = std::exp(p[j] - maxv);
                    p[j] = e;
                    sum += e;
                }
                const F inv = F(1) / sum;
                for (int64_t j = 0; j <= t; ++j) p[j] *= inv;
                for (int64_t j = t + 1; j < T; ++j) p[j] = 0;

                const F* dm = drop_mask ? drop_mask + ((b * H + h) * T + t) * T : nullptr;
                F* o = out + (b * T + t) * C + hoff;
                for (int64_t d = 0; d < hd; ++d) o[d] = 0;
                for (int64_t j = 0; j <= t; ++j) {
                    const F w = dm ? p[j] * dm[j] : p[j];
                    if (w == F(0)) continue;
                    const F* vr = v + (b * T + j) * C + hoff;
                    for (int64_t d = 0; d < hd; ++d) o[d] += w * vr[d];
                }
            }
        }
    }
}

template <typename F>
void attention_backward(F* dq, F* dk, F* dv, const F* dout, const F* q, const F* k,
                        const F* v, const F* probs, const F* drop_mask,
                        int64_t B, int64_t T, int64_t C, int64_t H) {
    const int64_t hd = C / H;
    const F scale = F(1) / std::sqrt(F(hd));
    std::vector<F> dp(static_cast<size_t>(T));
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < H; ++h) {
            const int64_t hoff = h * hd;
            for (int64_t t = 0; t < T; ++t) {
                const F* d = dout + (b * T + t) * C + hoff;
                const F* p = probs + ((b * H + h) * T + t) * T;
                const F* dm = drop_mask ? drop_mask + ((b * H + h) * T + t) * T : nullptr;

                // Through the weighted sum of values.
                for (int64_t j = 0; j <= t; ++j) {
                    const F* vr = v + (b * T + j) * C + hoff;
                    F* dvr = dv + (b * T + j) * C + hoff;
                    F acc = 0;
#pragma omp simd reduction(+ : acc)
                    for (int64_t dd = 0; dd < hd; ++dd) acc += d[dd] * vr[dd];
                    const F w = dm ? p[j] * dm[j] : p[j];
                    for (int64_t dd = 0; dd < hd; ++dd) dvr[dd] += w * d[dd];
                    dp[static_cast<size_t>(j)] = dm ? acc * dm[j] : acc;
                }

                // Through the softmax.
                F dot = 0;
                for (int64_t j = 0; j <= t; ++j) dot += dp[static_cast<size_t>(j)] * p[j];

                const F* qr = q + (b * T + t) * C + hoff;
                F* dqr = dq + (b * T + t) * C + hoff;
                for (int64_t j = 0; j <= t; ++j) {
                    const F ds = p[j] * (dp[static_cast<size_t>(j)] - dot) * scale;
                    if (ds == F(0)) continue;
                    const F* kr = k + (b * T + j) * C + hoff;
                    F* dkr = dk + (b * T + j) * C + hoff;
                    for (int64_t dd = 0; dd < hd; ++dd) {
                        dqr[dd] += ds * kr[dd];
                        dkr[dd] += ds * qr[dd];
                    }
                }
            }
        }
    }
}

// tanh-approximation GELU.
template <typename F>
void gelu_forward(F* out, const F* in, int64_t n) {
    const F c = std::sqrt(F(2) / F(std::numbers::pi));
    for (int64_t i = 0; i < n; ++i) {
        const F x = in[i];
        const F u = c * (x + F(0.044715) * x * x * x);
        out[i] = F(0.5) * x * (F(1) + std::tanh(u));
    }
}

template <typename F>
void gelu_backward(F* din, const F* dout, const F* in, int64_t n) {
    const F c = std::sqrt(F(2) / F(std::numbers::pi));
    for (int64_t i = 0; i < n; ++i) {
        const F x = in[i];
        const F u = c * (x + F(0.044715) * x * x * x);
        const F th = std::tanh(u);
        const F du = c * (F(1) + F(3) * F(0.044715) * x * x);
        din[i] += dout[i] * (F(0.5) * (F(1) + th) + F(0.5) * x * (F(1) - th * th) * du);
    }
}

template <typename F>
void residual_forward(F* out, const F* a, const F* b, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

// Inverted dropout: mask entries are 0 or 1/(1-p). Applied in place.
template <typename F>
void dropout_forward(F* x, F* mask, F p, Rng& rng, int64_t n) {
    const F keep_scale = F(1) / (F(1) - p);
    for (int64_t i = 0; i < n; ++i) {
        const F m = rng.uniform() < static_cast<double>(p) ? F(0) : keep_scale;
        mask[i] = m;
        x[i] *= m;
    }
}

template <typename F>
void apply_mask_backward(F* din, const F* dout, const F* mask, int64_t n) {
    for (int64_t i = 0; i < n; ++i) din[i] += dout[i] * mask[i];
}

// Stable row softmax.
template <typename F>
void softmax_rows(F* probs, const F* logits, int64_t rows, int64_t V) {
    for (int64_t r = 0; r < rows; ++r) {
        const F* l = logits + r * V;
        F* p = probs + r * V;
        F maxv = l[0];
        for (int64_t i = 1; i < V; ++i)
            if (l[i] > maxv) maxv = l[i];
        F sum = 0;
        for (int64_t i = 0; i < V; ++i) {
            p[i] = std::exp(l[i] - maxv);
            sum += p[i];
        }
        const F inv = F(1) / sum;
        for (int64_t i = 0; i < V; ++i) p[i] *= inv;
    }
}

// Mean cross-entropy over masked rows plus its gradient on the logits.
// mask[r] selects rows that contribute; dlogits rows for excluded positions
// stay zero.
template <typename F>
double crossentropy_forward_backward(F* dlogits, const F* probs, const uint8_t* targets,
                                     const uint8_t* mask, int64_t rows, int64_t V) {
    int64_t count = 0;
    for (int64_t r = 0; r < rows; ++r) count += mask[r];
    if (count == 0) return 0.0;
    const F inv_count = F(1) / F(count);
    double loss = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        const F* p = probs + r * V;
        F* dl = dlogits + r * V;
        const uint8_t tgt = targets[r];
        const F pt = p[tgt] > F(1e-30) ? p[tgt] : F(1e-30);
        loss -= std::log(static_cast<double>(pt));
        for (int64_t i = 0; i < V; ++i) dl[i] = p[i] * inv_count;
        dl[tgt] -= inv_count;
    }
    return loss / static_cast<double>(count);
}

} // namespace modlens::gpt::kernels
