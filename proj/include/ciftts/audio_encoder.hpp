#pragma once

#include "ciftts/layers.hpp"
#include "ciftts/tensor.hpp"

namespace ciftts {

inline constexpr int64_t kEncoderDownsample = 320;  // 2*4*5*8
inline constexpr int64_t kSpeakerDim = 128;

// Codec-style strided convolutional encoder producing the full audio
// representation at one frame per 320 samples. Input is right-padded
// with zeros to a multiple of 320; each strided conv uses left-aligned
// zero padding of (kernel - stride) so the length contract is exact.
class AudioEncoder {
public:
    AudioEncoder() = default;
    AudioEncoder(ParamStore& ps, const std::string& prefix, Rng& rng);

    // wave: 1×N tensor of samples, N >= 320. Output ceil(N/320)×128.
    Tensor forward(const Tensor& wave) const;

    static int64_t out_frames(int64_t n_samples) {
        return (n_samples + kEncoderDownsample - 1) / kEncoderDownsample;
    }

private:
    Conv1dLayer pre_;                  // 1 -> 32, kernel 7, same padding
    std::vector<Conv1dLayer> blocks_;  // strides 2,4,5,8; channels 64,128,256,512
    Linear proj_;                      // 512 -> 128
    LayerNorm out_ln_;                 // per-frame; keeps the audio features
                                       // at unit scale so they are not
                                       // swamped by the content term
};

}  // namespace ciftts
