#pragma once

#include <vector>

#include "ciftts/audio_encoder.hpp"
#include "ciftts/config.hpp"
#include "ciftts/content_extractor.hpp"
#include "ciftts/layers.hpp"

namespace ciftts {

// Resample a T_c×D sequence onto target_len uniformly spaced time
// positions by linear interpolation (endpoints map to endpoints).
Tensor align_content(const Tensor& content, int64_t target_len);

// Elementwise full - content; the content-information-free residual.
Tensor negate_content(const Tensor& full, const Tensor& content_aligned);

// Reference-audio branch: full representation minus aligned content,
// refined by a standard Transformer block and parallel encoder
// streams, pooled across streams and time down to one 128-dim vector.
class SpeakerPipeline {
public:
    struct Options {
        bool negation_enabled = true;
        int n_streams = 2;
        int n_heads = 2;
        int depth = 1;
        StreamFusion fusion = StreamFusion::kAttention;
        TemporalPool temporal_pool = TemporalPool::kAttention;
        // Off by default: the reference sequence is short and unordered
        // evidence of timbre; a full-scale position anchor would dominate
        // the (smaller) input features and push the pooled embedding
        // toward an input-independent constant.
        bool use_position_encoding = false;
        static Options from_config(const Config& c) {
            return {c.negation_enabled, c.n_streams, c.n_heads, c.depth,
                    c.stream_fusion,    c.temporal_pool, false};
        }
    };

    SpeakerPipeline() = default;
    SpeakerPipeline(ParamStore& ps, const std::string& prefix, const Options& opt, Rng& rng);

    const Options& options() const { return opt_; }
    const AudioEncoder& encoder() const { return encoder_; }
    const ContentExtractor& content() const { return content_; }

    // One standard Transformer encoder block with sinusoidal PE at entry.
    Tensor pre_transformer(const Tensor& cif, const FwdCtx& ctx) const;

    // Independent per-stream encoder stacks over the full CIF sequence.
    std::vector<Tensor> multi_stream(const Tensor& cif, const FwdCtx& ctx) const;

    // Per-position softmax-weighted convex combination across streams.
    Tensor attention_pool_streams(const std::vector<Tensor>& streams) const;
    // Channel-wise concatenation + learned projection back to 128.
    Tensor concat_pool_streams(const std::vector<Tensor>& streams) const;
    Tensor pool_streams(const std::vector<Tensor>& streams) const;

    // Learned-query attention over time (or mean, per options).
    Tensor temporal_pool(const Tensor& seq) const;

    // wave: 1×N, mel: T×80 of the same reference. Output 1×128.
    Tensor forward(const Tensor& wave, const Tensor& mel, const FwdCtx& ctx) const;

private:
    Options opt_;
    AudioEncoder encoder_;
    ContentExtractor content_;
    TransformerBlock pre_;
    std::vector<std::vector<TransformerBlock>> streams_;
    Linear pool_proj_;
    Tensor pool_query_;  // 128×1
    Linear concat_proj_;
    Linear tpool_proj_;
    Tensor tpool_query_;
};

}  // namespace ciftts
