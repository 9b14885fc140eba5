#include "ciftts/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace ciftts {

VariancePredictor::VariancePredictor(ParamStore& ps, const std::string& prefix, int64_t h,
                                     Rng& rng) {
    c1 = Conv1dLayer::same(ps, prefix + ".c1", h, h, 3, rng);
    c2 = Conv1dLayer::same(ps, prefix + ".c2", h, h, 3, rng);
    ln1 = LayerNorm(ps, prefix + ".ln1", h);
    ln2 = LayerNorm(ps, prefix + ".ln2", h);
    out = Linear(ps, prefix + ".out", h, 1, rng);
}

Tensor VariancePredictor::forward(const Tensor& x, const FwdCtx& ctx) const {
    Tensor y = ln1.forward(transpose(relu(c1.forward(transpose(x)))));
    if (ctx.training) y = dropout(y, dropout_p, *ctx.rng, true);
    y = ln2.forward(transpose(relu(c2.forward(transpose(y)))));
    if (ctx.training) y = dropout(y, dropout_p, *ctx.rng, true);
    return out.forward(y);
}

std::vector<int64_t> length_regulator_indices(const std::vector<int64_t>& durations) {
    std::vector<int64_t> idx;
    for (size_t l = 0; l < durations.size(); ++l) {
        if (durations[l] < 1)
            throw std::invalid_argument("duration must be >= 1 at phoneme " + std::to_string(l));
        for (int64_t r = 0; r < durations[l]; ++r) idx.push_back(static_cast<int64_t>(l));
    }
    return idx;
}

Tensor reconstruction_loss(const Tensor& mel_target, const Tensor& mel_pred,
                           const Tensor& pitch_target, const Tensor& pitch_pred,
                           const Tensor& energy_target, const Tensor& energy_pred,
                           const Tensor& log_dur_target, const Tensor& log_dur_pred) {
    if (mel_target.shape() != mel_pred.shape())
        throw std::invalid_argument("mel shape mismatch: " + shape_str(mel_target.shape()) +
                                    " vs " + shape_str(mel_pred.shape()));
    if (pitch_target.size() != pitch_pred.size() || energy_target.size() != energy_pred.size() ||
        log_dur_target.size() != log_dur_pred.size())
        throw std::invalid_argument("variance target length mismatch");
    Tensor l_mel = mean(abs(sub(mel_target, mel_pred)));
    Tensor l_pitch = mean(square(sub(pitch_target, pitch_pred)));
    Tensor l_energy = mean(square(sub(energy_target, energy_pred)));
    Tensor l_dur = mean(square(sub(log_dur_target, log_dur_pred)));
    return add(add(l_mel, l_pitch), add(l_energy, l_dur));
}

TtsModel::TtsModel(const Config& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.seed);
    speaker_ = SpeakerPipeline(params_, "speaker", SpeakerPipeline::Options::from_config(cfg), rng);
    embed_ = Embedding(params_, "text.embed", kVocabSize, kHidden, rng);
    const bool enc_saln = cfg.injection_site == InjectionSite::kEncoder ||
                          cfg.injection_site == InjectionSite::kBoth;
    const bool dec_saln = cfg.injection_site == InjectionSite::kDecoder ||
                          cfg.injection_site == InjectionSite::kBoth;
    for (int i = 0; i < 4; ++i)
        text_blocks_.push_back(FftBlock(params_, "text.block" + std::to_string(i), kHidden, kFfWidth, 2,
                                        /*use_saln=*/false, kSpeakerDim, rng));
    for (int i = 0; i < 2; ++i)
        fusion_blocks_.push_back(FftBlock(params_, "fusion.block" + std::to_string(i), kHidden, kFfWidth,
                                          2, enc_saln, kSpeakerDim, rng));
    pitch_pred_ = VariancePredictor(params_, "var.pitch", kHidden, rng);
    energy_pred_ = VariancePredictor(params_, "var.energy", kHidden, rng);
    dur_pred_ = VariancePredictor(params_, "var.duration", kHidden, rng);
    pitch_embed_ = Linear(params_, "var.pitch_embed", 1, kHidden, rng);
    energy_embed_ = Linear(params_, "var.energy_embed", 1, kHidden, rng);
    for (int i = 0; i < 4; ++i)
        decoder_blocks_.push_back(FftBlock(params_, "decoder.block" + std::to_string(i), kHidden,
                                           kFfWidth, 2, dec_saln, kSpeakerDim, rng));
    mel_out_ = Linear(params_, "decoder.mel_out", kHidden, kMelBands, rng);
}

Tensor TtsModel::speaker_embedding(const Tensor& ref_wave, const Tensor& ref_mel,
                                   const FwdCtx& ctx) const {
    return speaker_.forward(ref_wave, ref_mel, ctx);
}

Tensor TtsModel::text_encode(const std::vector<int64_t>& phonemes, const FwdCtx& ctx) const {
    if (phonemes.empty()) throw std::invalid_argument("empty phoneme sequence");
    Tensor h = embed_.forward(phonemes);
    h = add(h, sinusoidal_pe(h.dim(0), kHidden));
    for (const auto& block : text_blocks_) h = block.forward(h, Tensor(), ctx);
    return h;
}

Tensor TtsModel::fusion_encode(const Tensor& h, const Tensor& s, const FwdCtx& ctx) const {
    Tensor y = h;
    for (const auto& block : fusion_blocks_) y = block.forward(y, s, ctx);
    return y;
}

Tensor TtsModel::mel_decode(const Tensor& expanded, const Tensor& s, const FwdCtx& ctx) const {
    Tensor y = add(expanded, sinusoidal_pe(expanded.dim(0), kHidden));
    for (const auto& block : decoder_blocks_) y = block.forward(y, s, ctx);
    return mel_out_.forward(y);
}

TtsModel::Output TtsModel::forward(const std::vector<int64_t>& phonemes, const Tensor& ref_wave,
                                   const Tensor& ref_mel, const VarianceTargets* targets,
                                   const FwdCtx& ctx) const {
    const int64_t l = static_cast<int64_t>(phonemes.size());
    if (targets && (static_cast<int64_t>(targets->pitch.size()) != l ||
                    static_cast<int64_t>(targets->energy.size()) != l ||
                    static_cast<int64_t>(targets->duration.size()) != l))
        throw std::invalid_argument("variance targets length does not match phoneme count " +
                                    std::to_string(l));
    Output out;
    out.speaker = speaker_.forward(ref_wave, ref_mel, ctx);
    Tensor h = fusion_encode(text_encode(phonemes, ctx), out.speaker, ctx);

    out.pitch = pitch_pred_.forward(h, ctx);
    out.energy = energy_pred_.forward(h, ctx);
    out.log_dur = dur_pred_.forward(h, ctx);

    Tensor pitch_in, energy_in;
    if (targets) {
        pitch_in = Tensor::from({l, 1}, targets->pitch);
        energy_in = Tensor::from({l, 1}, targets->energy);
        out.durations = targets->duration;
    } else {
        pitch_in = out.pitch;
        energy_in = out.energy;
        out.durations.resize(static_cast<size_t>(l));
        for (int64_t i = 0; i < l; ++i) {
            const double d = std::exp(out.log_dur.values()[i]);
            out.durations[i] = std::max<int64_t>(1, std::llround(d));
        }
    }
    h = add(h, add(pitch_embed_.forward(pitch_in), energy_embed_.forward(energy_in)));
    Tensor expanded = gather_rows(h, length_regulator_indices(out.durations));
    out.mel = mel_decode(expanded, out.speaker, ctx);
    return out;
}

Tensor TtsModel::loss(const Output& out, const Tensor& mel_target,
                      const VarianceTargets& targets) const {
    const int64_t l = static_cast<int64_t>(targets.pitch.size());
    std::vector<double> log_d(static_cast<size_t>(l));
    for (int64_t i = 0; i < l; ++i) log_d[i] = std::log(static_cast<double>(targets.duration[i]));
    return reconstruction_loss(mel_target, out.mel,
                               Tensor::from({l, 1}, targets.pitch), out.pitch,
                               Tensor::from({l, 1}, targets.energy), out.energy,
                               Tensor::from({l, 1}, std::move(log_d)), out.log_dur);
}

Tensor TtsModel::mel_l1(const Output& out, const Tensor& mel_target) const {
    return mean(abs(sub(mel_target, out.mel)));
}

}  // namespace ciftts
