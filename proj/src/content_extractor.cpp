#include "ciftts/content_extractor.hpp"

#include <cmath>
#include <stdexcept>

#include "ciftts/dsp.hpp"

namespace ciftts {

std::pair<Tensor, InStats> instance_norm(const Tensor& f, double eps) {
    if (f.ndim() != 2) throw std::invalid_argument("instance_norm expects a C×W feature map");
    if (!(eps > 0.0)) throw std::invalid_argument("instance_norm: epsilon must be > 0");
    InStats stats;
    stats.epsilon = eps;
    const int64_t c = f.dim(0), w = f.dim(1);
    stats.mu.resize(static_cast<size_t>(c));
    stats.sigma.resize(static_cast<size_t>(c));
    for (int64_t ci = 0; ci < c; ++ci) {
        double m = 0.0;
        for (int64_t wi = 0; wi < w; ++wi) m += f.values()[ci * w + wi];
        m /= static_cast<double>(w);
        double q = 0.0;
        for (int64_t wi = 0; wi < w; ++wi) {
            const double d = f.values()[ci * w + wi] - m;
            q += d * d;
        }
        stats.mu[ci] = m;
        stats.sigma[ci] = std::sqrt(q / static_cast<double>(w) + eps);
    }
    return {normalize(f, 1, eps), stats};
}

ContentExtractor::ContentExtractor(ParamStore& ps, const std::string& prefix, Rng& rng) {
    for (int k = 1; k <= 8; ++k)
        bank_.push_back(Conv1dLayer::same(ps, prefix + ".bank" + std::to_string(k),
                                          dsp::kNumMels, 32, k, rng));
    b1c1_ = Conv1dLayer::same(ps, prefix + ".b1c1", 256, 128, 3, rng);
    b1c2_ = Conv1dLayer::same(ps, prefix + ".b1c2", 128, 128, 3, rng);
    b2c1_ = Conv1dLayer::same(ps, prefix + ".b2c1", 128, 128, 3, rng);
    b2c2_ = Conv1dLayer::same(ps, prefix + ".b2c2", 128, 128, 3, rng);
    proj_ = Linear(ps, prefix + ".proj", 128, kContentDim, rng);
}

Tensor ContentExtractor::conv_bank(const Tensor& x) const {
    if (x.ndim() != 2 || x.dim(0) != dsp::kNumMels)
        throw std::invalid_argument("conv_bank expects an 80×T map, got " + shape_str(x.shape()));
    std::vector<Tensor> outs;
    outs.reserve(bank_.size());
    for (const auto& conv : bank_) outs.push_back(conv.forward(x));
    return relu(concat(outs, 0));  // 256×T
}

Tensor ContentExtractor::forward(const Tensor& mel, double eps) const {
    if (mel.ndim() != 2 || mel.dim(1) != dsp::kNumMels)
        throw std::invalid_argument("content extractor expects T×80 mel, got " + shape_str(mel.shape()));
    if (mel.dim(0) < 2)
        throw std::invalid_argument("content extractor needs at least 2 mel frames for pooling");
    Tensor x = conv_bank(transpose(mel));
    x = relu(instance_norm(b1c1_.forward(x), eps).first);
    x = relu(instance_norm(b1c2_.forward(x), eps).first);
    x = avg_pool1d(x, 2, 2);
    x = relu(instance_norm(b2c1_.forward(x), eps).first);
    x = relu(instance_norm(b2c2_.forward(x), eps).first);
    return proj_.forward(transpose(x));  // floor(T/2)×128
}

}  // namespace ciftts
