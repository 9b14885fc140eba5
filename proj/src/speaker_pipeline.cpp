#include "ciftts/speaker_pipeline.hpp"

#include <cmath>
#include <stdexcept>

namespace ciftts {

Tensor align_content(const Tensor& content, int64_t target_len) {
    if (content.ndim() != 2) throw std::invalid_argument("align_content expects T_c×D");
    const int64_t tc = content.dim(0);
    if (target_len < 1) throw std::invalid_argument("align_content: target length must be >= 1");
    if (tc == target_len) return content;
    // Constant interpolation matrix; gradients flow through matmul.
    std::vector<double> interp(static_cast<size_t>(target_len * tc), 0.0);
    for (int64_t i = 0; i < target_len; ++i) {
        const double pos = target_len == 1
                               ? 0.0
                               : static_cast<double>(i) * static_cast<double>(tc - 1) /
                                     static_cast<double>(target_len - 1);
        const int64_t lo = static_cast<int64_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        if (lo + 1 < tc) {
            interp[i * tc + lo] = 1.0 - frac;
            interp[i * tc + lo + 1] = frac;
        } else {
            interp[i * tc + lo] = 1.0;
        }
    }
    return matmul(Tensor::from({target_len, tc}, std::move(interp)), content);
}

Tensor negate_content(const Tensor& full, const Tensor& content_aligned) {
    if (full.shape() != content_aligned.shape())
        throw std::invalid_argument("negate: shape mismatch " + shape_str(full.shape()) + " vs " +
                                    shape_str(content_aligned.shape()));
    return sub(full, content_aligned);
}

SpeakerPipeline::SpeakerPipeline(ParamStore& ps, const std::string& prefix, const Options& opt,
                                 Rng& rng)
    : opt_(opt) {
    if (opt.n_streams < 1) throw std::invalid_argument("n_streams must be >= 1");
    if (opt.depth < 1) throw std::invalid_argument("depth must be >= 1");
    encoder_ = AudioEncoder(ps, prefix + ".encoder", rng);
    if (opt.negation_enabled) content_ = ContentExtractor(ps, prefix + ".content", rng);
    pre_ = TransformerBlock(ps, prefix + ".pre", kSpeakerDim, 512, 2, rng);
    // The speaker embedding must be a stable function of the reference:
    // dropout here would make it vary between passes over the same audio,
    // which penalizes any use of the embedding downstream.
    pre_.dropout_p = 0.0;
    for (int s = 0; s < opt.n_streams; ++s) {
        std::vector<TransformerBlock> stack;
        for (int d = 0; d < opt.depth; ++d) {
            stack.push_back(TransformerBlock(ps, prefix + ".stream" + std::to_string(s) + ".block" +
                                                 std::to_string(d),
                                             kSpeakerDim, 512, opt.n_heads, rng));
            stack.back().dropout_p = 0.0;
        }
        streams_.push_back(std::move(stack));
    }
    if (opt.fusion == StreamFusion::kAttention) {
        pool_proj_ = Linear(ps, prefix + ".pool.proj", kSpeakerDim, kSpeakerDim, rng);
        pool_query_ = ps.add(prefix + ".pool.query", {kSpeakerDim, 1},
                             xavier_uniform(kSpeakerDim, kSpeakerDim, 1, rng));
    } else {
        concat_proj_ = Linear(ps, prefix + ".pool.concat",
                              kSpeakerDim * opt.n_streams, kSpeakerDim, rng);
    }
    if (opt.temporal_pool == TemporalPool::kAttention) {
        tpool_proj_ = Linear(ps, prefix + ".tpool.proj", kSpeakerDim, kSpeakerDim, rng);
        tpool_query_ = ps.add(prefix + ".tpool.query", {kSpeakerDim, 1},
                              xavier_uniform(kSpeakerDim, kSpeakerDim, 1, rng));
    }
}

Tensor SpeakerPipeline::pre_transformer(const Tensor& cif, const FwdCtx& ctx) const {
    Tensor x = cif;
    if (opt_.use_position_encoding) x = add(x, sinusoidal_pe(x.dim(0), x.dim(1)));
    return pre_.forward(x, ctx);
}

std::vector<Tensor> SpeakerPipeline::multi_stream(const Tensor& cif, const FwdCtx& ctx) const {
    std::vector<Tensor> outs;
    outs.reserve(streams_.size());
    for (const auto& stack : streams_) {
        Tensor x = cif;
        for (const auto& block : stack) x = block.forward(x, ctx);
        outs.push_back(x);
    }
    return outs;
}

Tensor SpeakerPipeline::attention_pool_streams(const std::vector<Tensor>& streams) const {
    if (streams.empty()) throw std::invalid_argument("attention pooling needs >= 1 stream");
    for (const auto& s : streams)
        if (s.shape() != streams[0].shape())
            throw std::invalid_argument("attention pooling: stream shape mismatch");
    if (streams.size() == 1) return streams[0];
    std::vector<Tensor> scores;
    scores.reserve(streams.size());
    for (const auto& s : streams)
        scores.push_back(matmul(tanh(pool_proj_.forward(s)), pool_query_));  // T×1
    Tensor weights = softmax(concat(scores, 1), 1);  // T×S, rows sum to 1
    Tensor out;
    for (size_t j = 0; j < streams.size(); ++j) {
        Tensor term = scale_rows(streams[j], slice_cols(weights, static_cast<int64_t>(j), 1));
        out = j == 0 ? term : add(out, term);
    }
    return out;
}

Tensor SpeakerPipeline::concat_pool_streams(const std::vector<Tensor>& streams) const {
    if (streams.empty()) throw std::invalid_argument("concat pooling needs >= 1 stream");
    Tensor merged = streams.size() == 1 ? streams[0] : concat(streams, 1);
    return concat_proj_.forward(merged);
}

Tensor SpeakerPipeline::pool_streams(const std::vector<Tensor>& streams) const {
    return opt_.fusion == StreamFusion::kAttention ? attention_pool_streams(streams)
                                                   : concat_pool_streams(streams);
}

Tensor SpeakerPipeline::temporal_pool(const Tensor& seq) const {
    const int64_t t = seq.dim(0);
    if (opt_.temporal_pool == TemporalPool::kMean)
        return matmul(Tensor::full({1, t}, 1.0 / static_cast<double>(t)), seq);
    Tensor scores = matmul(tanh(tpool_proj_.forward(seq)), tpool_query_);  // T×1
    Tensor weights = softmax(scores, 0);
    return matmul(transpose(weights), seq);  // 1×128
}

Tensor SpeakerPipeline::forward(const Tensor& wave, const Tensor& mel, const FwdCtx& ctx) const {
    Tensor full = encoder_.forward(wave);  // T_e×128
    Tensor cif;
    if (opt_.negation_enabled) {
        Tensor content = content_.forward(mel);  // floor(T/2)×128
        cif = negate_content(full, align_content(content, full.dim(0)));
    } else {
        cif = full;
    }
    Tensor refined = pre_transformer(cif, ctx);
    Tensor pooled = pool_streams(multi_stream(refined, ctx));
    // Parameter-free residual from the raw features: keeps the embedding
    // tied to the reference audio even while the refinement stack is still
    // learning, so the speaker path cannot silently go constant.
    const int64_t t = cif.dim(0);
    Tensor cif_mean = matmul(Tensor::full({1, t}, 1.0 / static_cast<double>(t)), cif);
    return add(temporal_pool(pooled), cif_mean);
}

}  // namespace ciftts
