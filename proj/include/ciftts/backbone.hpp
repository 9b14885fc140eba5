#pragma once

#include <optional>
#include <vector>

#include "ciftts/config.hpp"
#include "ciftts/layers.hpp"
#include "ciftts/speaker_pipeline.hpp"

namespace ciftts {

inline constexpr int64_t kHidden = 128;
inline constexpr int64_t kMelBands = 80;
// Conv feed-forward width inside FFT blocks, kept narrow so the full
// toy-overfit run fits a desk-scale time budget.
inline constexpr int64_t kFfWidth = 128;

// Ground-truth per-phoneme variance information. Durations are frame
// counts and must sum to the mel frame count.
struct VarianceTargets {
    std::vector<double> pitch;       // log-Hz per phoneme
    std::vector<double> energy;      // per phoneme
    std::vector<int64_t> duration;   // frames per phoneme, each >= 1
};

// 2-layer conv predictor: conv -> ReLU -> LN -> dropout -> conv ->
// ReLU -> LN -> dropout -> linear to one scalar per position.
struct VariancePredictor {
    Conv1dLayer c1, c2;
    LayerNorm ln1, ln2;
    Linear out;
    double dropout_p = 0.5;
    VariancePredictor() = default;
    VariancePredictor(ParamStore& ps, const std::string& prefix, int64_t h, Rng& rng);
    Tensor forward(const Tensor& x, const FwdCtx& ctx) const;  // T×H -> T×1
};

// Repeat phoneme l's hidden vector duration[l] times.
std::vector<int64_t> length_regulator_indices(const std::vector<int64_t>& durations);

// L1 mel + L2 pitch + L2 energy + L2 log-duration, each mean-reduced.
Tensor reconstruction_loss(const Tensor& mel_target, const Tensor& mel_pred,
                           const Tensor& pitch_target, const Tensor& pitch_pred,
                           const Tensor& energy_target, const Tensor& energy_pred,
                           const Tensor& log_dur_target, const Tensor& log_dur_pred);

class TtsModel {
public:
    TtsModel(const Config& cfg);

    struct Output {
        Tensor mel;        // T×80
        Tensor pitch;      // L×1 predictions
        Tensor energy;     // L×1
        Tensor log_dur;    // L×1
        Tensor speaker;    // 1×128
        std::vector<int64_t> durations;  // the durations used for expansion
    };

    // Teacher-forced when targets are provided, free-running otherwise.
    // ref_wave: 1×N, ref_mel: T_ref×80 (both from the reference audio).
    Output forward(const std::vector<int64_t>& phonemes, const Tensor& ref_wave,
                   const Tensor& ref_mel, const VarianceTargets* targets, const FwdCtx& ctx) const;

    // Full Eq-style composite loss against ground truth.
    Tensor loss(const Output& out, const Tensor& mel_target, const VarianceTargets& targets) const;
    Tensor mel_l1(const Output& out, const Tensor& mel_target) const;

    Tensor speaker_embedding(const Tensor& ref_wave, const Tensor& ref_mel, const FwdCtx& ctx) const;

    Tensor text_encode(const std::vector<int64_t>& phonemes, const FwdCtx& ctx) const;
    Tensor fusion_encode(const Tensor& h, const Tensor& s, const FwdCtx& ctx) const;
    Tensor mel_decode(const Tensor& expanded, const Tensor& s, const FwdCtx& ctx) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Config& config() const { return cfg_; }
    const SpeakerPipeline& speaker_pipeline() const { return speaker_; }
    int64_t vocab_size() const { return embed_.table.dim(0); }

    static constexpr int64_t kVocabSize = 64;

private:
    Config cfg_;
    ParamStore params_;
    SpeakerPipeline speaker_;
    Embedding embed_;
    std::vector<FftBlock> text_blocks_;     // 4, plain layer norm
    std::vector<FftBlock> fusion_blocks_;   // 2, SALN when encoder injection
    VariancePredictor pitch_pred_, energy_pred_, dur_pred_;
    Linear pitch_embed_, energy_embed_;     // 1 -> H
    std::vector<FftBlock> decoder_blocks_;  // 4, SALN when decoder injection
    Linear mel_out_;                        // H -> 80
};

}  // namespace ciftts
