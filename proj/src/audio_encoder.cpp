#include "ciftts/audio_encoder.hpp"

#include <stdexcept>

namespace ciftts {

namespace {
constexpr int64_t kStrides[4] = {2, 4, 5, 8};
constexpr int64_t kChannels[5] = {32, 64, 128, 256, 512};
}  // namespace

AudioEncoder::AudioEncoder(ParamStore& ps, const std::string& prefix, Rng& rng) {
    pre_ = Conv1dLayer::same(ps, prefix + ".pre", 1, kChannels[0], 7, rng);
    for (int i = 0; i < 4; ++i) {
        const int64_t s = kStrides[i];
        const int64_t k = 2 * s;
        blocks_.push_back(Conv1dLayer(ps, prefix + ".block" + std::to_string(i),
                                      kChannels[i], kChannels[i + 1], k, s,
                                      /*pad_left=*/k - s, /*pad_right=*/0, rng));
    }
    proj_ = Linear(ps, prefix + ".proj", kChannels[4], kSpeakerDim, rng);
    out_ln_ = LayerNorm(ps, prefix + ".ln", kSpeakerDim);
}

Tensor AudioEncoder::forward(const Tensor& wave) const {
    if (wave.ndim() != 2 || wave.dim(0) != 1)
        throw std::invalid_argument("audio encoder expects a 1×N waveform, got " + shape_str(wave.shape()));
    const int64_t n = wave.dim(1);
    if (n < kEncoderDownsample)
        throw std::invalid_argument("audio encoder needs at least " +
                                    std::to_string(kEncoderDownsample) + " samples, got " +
                                    std::to_string(n));
    Tensor x = wave;
    const int64_t pad = (kEncoderDownsample - n % kEncoderDownsample) % kEncoderDownsample;
    if (pad > 0) x = concat({x, Tensor::zeros({1, pad})}, 1);
    x = pre_.forward(x);
    for (const auto& block : blocks_) x = block.forward(elu(x));
    return out_ln_.forward(proj_.forward(transpose(elu(x))));  // T_e×128
}

}  // namespace ciftts
