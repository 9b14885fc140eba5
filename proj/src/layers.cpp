#include "ciftts/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ciftts {

Tensor ParamStore::add(const std::string& name, std::vector<int64_t> shape,
                       std::vector<double> init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor t = Tensor::from(std::move(shape), std::move(init), /*requires_grad=*/true);
    index_[name] = items_.size();
    items_.emplace_back(name, t);
    return t;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return items_[it->second].second;
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
}

std::vector<double> xavier_uniform(int64_t count, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-bound, bound);
    std::vector<double> v(static_cast<size_t>(count));
    for (auto& x : v) x = uni(rng);
    return v;
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, Rng& rng) {
    w = ps.add(prefix + ".w", {in, out}, xavier_uniform(in * out, in, out, rng));
    b = ps.add(prefix + ".b", {out}, std::vector<double>(static_cast<size_t>(out), 0.0));
}

Linear Linear::zero_init(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                         double bias_value) {
    Linear l;
    l.w = ps.add(prefix + ".w", {in, out}, std::vector<double>(static_cast<size_t>(in * out), 0.0));
    l.b = ps.add(prefix + ".b", {out}, std::vector<double>(static_cast<size_t>(out), bias_value));
    return l;
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, w), b); }

Conv1dLayer::Conv1dLayer(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout,
                         int64_t k, int64_t stride_, int64_t pl, int64_t pr, Rng& rng)
    : stride(stride_), pad_left(pl), pad_right(pr) {
    // fan counts follow the conv receptive field
    kernel = ps.add(prefix + ".kernel", {cout, cin, k},
                    xavier_uniform(cout * cin * k, cin * k, cout * k, rng));
    bias = ps.add(prefix + ".bias", {cout}, std::vector<double>(static_cast<size_t>(cout), 0.0));
}

Conv1dLayer Conv1dLayer::same(ParamStore& ps, const std::string& prefix, int64_t cin, int64_t cout,
                              int64_t k, Rng& rng) {
    return Conv1dLayer(ps, prefix, cin, cout, k, 1, (k - 1) / 2, (k - 1) - (k - 1) / 2, rng);
}

Tensor Conv1dLayer::forward(const Tensor& x) const {
    return conv1d(x, kernel, bias, stride, pad_left, pad_right);
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, int64_t h) {
    gain = ps.add(prefix + ".gain", {h}, std::vector<double>(static_cast<size_t>(h), 1.0));
    bias = ps.add(prefix + ".bias", {h}, std::vector<double>(static_cast<size_t>(h), 0.0));
}

Tensor LayerNorm::forward(const Tensor& x) const {
    return add(mul(normalize(x, 1, eps), gain), bias);
}

Saln::Saln(ParamStore& ps, const std::string& prefix, int64_t h, int64_t s_dim, Rng& rng) {
    // Small random head weights: modulation stays near identity at init,
    // but d(loss)/d(s) is nonzero so the speaker encoder trains from step 0.
    auto head = [&](const std::string& name, double bias_value) {
        std::vector<double> w = xavier_uniform(s_dim * h, s_dim, h, rng);
        for (auto& v : w) v *= 0.1;
        Linear l;
        l.w = ps.add(name + ".w", {s_dim, h}, std::move(w));
        l.b = ps.add(name + ".b", {h}, std::vector<double>(static_cast<size_t>(h), bias_value));
        return l;
    };
    gain_head = head(prefix + ".gain", 1.0);
    bias_head = head(prefix + ".bias", 0.0);
}

Tensor Saln::forward(const Tensor& x, const Tensor& s) const {
    Tensor g = gain_head.forward(s);  // 1×H
    Tensor b = bias_head.forward(s);
    return add(mul(normalize(x, 1, eps), g), b);
}

Embedding::Embedding(ParamStore& ps, const std::string& prefix, int64_t vocab, int64_t h,
                     Rng& rng) {
    table = ps.add(prefix + ".table", {vocab, h}, xavier_uniform(vocab * h, vocab, h, rng));
}

Tensor Embedding::forward(const std::vector<int64_t>& ids) const {
    for (int64_t id : ids)
        if (id < 0 || id >= table.dim(0))
            throw std::invalid_argument("phoneme id " + std::to_string(id) +
                                        " outside vocabulary of size " + std::to_string(table.dim(0)));
    return gather_rows(table, ids);
}

Tensor sinusoidal_pe(int64_t t, int64_t h) {
    std::vector<double> v(static_cast<size_t>(t * h));
    for (int64_t pos = 0; pos < t; ++pos)
        for (int64_t i = 0; i < h; i += 2) {
            const double angle = static_cast<double>(pos) /
                                 std::pow(10000.0, static_cast<double>(i) / static_cast<double>(h));
            v[pos * h + i] = std::sin(angle);
            if (i + 1 < h) v[pos * h + i + 1] = std::cos(angle);
        }
    return Tensor::from({t, h}, std::move(v));
}

MultiHeadSelfAttention::MultiHeadSelfAttention(ParamStore& ps, const std::string& prefix,
                                               int64_t h_, int64_t heads_, Rng& rng)
    : heads(heads_), h(h_) {
    if (h % heads != 0)
        throw std::invalid_argument("hidden width " + std::to_string(h) +
                                    " not divisible by head count " + std::to_string(heads));
    wq = Linear(ps, prefix + ".wq", h, h, rng);
    wk = Linear(ps, prefix + ".wk", h, h, rng);
    wv = Linear(ps, prefix + ".wv", h, h, rng);
    wo = Linear(ps, prefix + ".wo", h, h, rng);
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x) const {
    const int64_t dh = h / heads;
    Tensor q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(heads));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int64_t hd = 0; hd < heads; ++hd) {
        Tensor qh = slice_cols(q, hd * dh, dh);
        Tensor kh = slice_cols(k, hd * dh, dh);
        Tensor vh = slice_cols(v, hd * dh, dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);  // T×T
        Tensor attn = softmax(scores, 1);
        outs.push_back(matmul(attn, vh));
    }
    Tensor merged = heads == 1 ? outs[0] : concat(outs, 1);
    return wo.forward(merged);
}

FftBlock::FftBlock(ParamStore& ps, const std::string& prefix, int64_t h, int64_t ff, int64_t heads,
                   bool use_saln_, int64_t s_dim, Rng& rng)
    : use_saln(use_saln_) {
    attn = MultiHeadSelfAttention(ps, prefix + ".attn", h, heads, rng);
    ff1 = Conv1dLayer::same(ps, prefix + ".ff1", h, ff, 9, rng);
    ff2 = Conv1dLayer::same(ps, prefix + ".ff2", ff, h, 1, rng);
    if (use_saln) {
        saln1 = Saln(ps, prefix + ".saln1", h, s_dim, rng);
        saln2 = Saln(ps, prefix + ".saln2", h, s_dim, rng);
    } else {
        ln1 = LayerNorm(ps, prefix + ".ln1", h);
        ln2 = LayerNorm(ps, prefix + ".ln2", h);
    }
}

Tensor FftBlock::forward(const Tensor& x, const Tensor& s, const FwdCtx& ctx) const {
    Tensor a = attn.forward(x);
    if (ctx.training) a = dropout(a, dropout_p, *ctx.rng, true);
    Tensor y = add(x, a);
    y = use_saln ? saln1.forward(y, s) : ln1.forward(y);
    Tensor f = transpose(ff2.forward(relu(ff1.forward(transpose(y)))));
    if (ctx.training) f = dropout(f, dropout_p, *ctx.rng, true);
    Tensor z = add(y, f);
    return use_saln ? saln2.forward(z, s) : ln2.forward(z);
}

TransformerBlock::TransformerBlock(ParamStore& ps, const std::string& prefix, int64_t h,
                                   int64_t ff, int64_t heads, Rng& rng) {
    attn = MultiHeadSelfAttention(ps, prefix + ".attn", h, heads, rng);
    ff1 = Linear(ps, prefix + ".ff1", h, ff, rng);
    ff2 = Linear(ps, prefix + ".ff2", ff, h, rng);
    ln1 = LayerNorm(ps, prefix + ".ln1", h);
    ln2 = LayerNorm(ps, prefix + ".ln2", h);
}

Tensor TransformerBlock::forward(const Tensor& x, const FwdCtx& ctx) const {
    Tensor a = attn.forward(x);
    if (ctx.training) a = dropout(a, dropout_p, *ctx.rng, true);
    Tensor y = ln1.forward(add(x, a));
    Tensor f = ff2.forward(relu(ff1.forward(y)));
    if (ctx.training) f = dropout(f, dropout_p, *ctx.rng, true);
    return ln2.forward(add(y, f));
}

}  // namespace ciftts
