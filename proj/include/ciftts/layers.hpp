#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ciftts/tensor.hpp"

namespace ciftts {

using Rng = std::mt19937_64;

// Named parameter registry. Layers register their tensors here so the
// optimizer and checkpoint code can walk them in a stable order.
class ParamStore {
public:
    Tensor add(const std::string& name, std::vector<int64_t> shape, std::vector<double> init);
    Tensor& get(const std::string& name);
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    int64_t total_size() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::map<std::string, size_t> index_;
};

std::vector<double> xavier_uniform(int64_t count, int64_t fan_in, int64_t fan_out, Rng& rng);

// Per-forward context: dropout only fires when training with an rng.
struct FwdCtx {
    bool training = false;
    Rng* rng = nullptr;
};

struct Linear {
    Tensor w;  // in×out
    Tensor b;  // out
    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, Rng& rng);
    // Zero weights, chosen bias. Used by SALN heads (identity modulation at init).
    static Linear zero_init(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                            double bias_value);
    Tensor forward(const Tensor& x) const;  // x: T×in
};

struct Conv1dLayer {
    Tensor kernel;  // C_out×C_in×K
    Tensor bias;    // C_out
    int64_t stride = 1;
    int64_t pad_left = 0, pad_right = 0;
    Conv1dLayer() = default;
    Conv1dLayer(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout, int64_t k,
                int64_t stride, int64_t pad_left, int64_t pad_right, Rng& rng);
    static Conv1dLayer same(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout,
                            int64_t k, Rng& rng);
    Tensor forward(const Tensor& x) const;  // x: C_in×W
};

struct LayerNorm {
    Tensor gain, bias;  // H each
    double eps = 1e-5;
    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& prefix, int64_t h);
    Tensor forward(const Tensor& x) const;  // x: T×H, normalized per row
};

// Style-adaptive layer norm: gain/bias are affine functions of the
// speaker embedding. Head biases start at the identity modulation
// (g=1, b=0); head weights start small but nonzero so the speaker
// path receives gradient from the first step.
struct Saln {
    Linear gain_head, bias_head;
    double eps = 1e-5;
    Saln() = default;
    Saln(ParamStore& ps, const std::string& prefix, int64_t h, int64_t s_dim, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& s) const;  // x: T×H, s: 1×s_dim
};

struct Embedding {
    Tensor table;  // V×H
    Embedding() = default;
    Embedding(ParamStore& ps, const std::string& prefix, int64_t vocab, int64_t h, Rng& rng);
    Tensor forward(const std::vector<int64_t>& ids) const;
};

// Constant (non-trainable) sinusoidal position encodings, T×H.
Tensor sinusoidal_pe(int64_t t, int64_t h);

struct MultiHeadSelfAttention {
    Linear wq, wk, wv, wo;
    int64_t heads = 2;
    int64_t h = 0;
    MultiHeadSelfAttention() = default;
    MultiHeadSelfAttention(ParamStore& ps, const std::string& prefix, int64_t h, int64_t heads,
                           Rng& rng);
    Tensor forward(const Tensor& x) const;  // x: T×H
};

// FastSpeech-style FFT block: self-attention + 2-layer conv1d
// feed-forward (kernels 9 and 1), residuals, and either plain layer
// norm or SALN depending on the injection configuration.
struct FftBlock {
    MultiHeadSelfAttention attn;
    Conv1dLayer ff1, ff2;
    LayerNorm ln1, ln2;
    Saln saln1, saln2;
    bool use_saln = false;
    double dropout_p = 0.1;
    FftBlock() = default;
    FftBlock(ParamStore& ps, const std::string& prefix, int64_t h, int64_t ff, int64_t heads,
             bool use_saln, int64_t s_dim, Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& s, const FwdCtx& ctx) const;
};

// Standard Transformer encoder block (position-wise linear FFN).
struct TransformerBlock {
    MultiHeadSelfAttention attn;
    Linear ff1, ff2;
    LayerNorm ln1, ln2;
    double dropout_p = 0.1;
    TransformerBlock() = default;
    TransformerBlock(ParamStore& ps, const std::string& prefix, int64_t h, int64_t ff,
                     int64_t heads, Rng& rng);
    Tensor forward(const Tensor& x, const FwdCtx& ctx) const;
};

}  // namespace ciftts
