#pragma once

#include <cstdint>
#include <string>

namespace ciftts {

enum class StreamFusion { kAttention, kConcat };
enum class InjectionSite { kEncoder, kDecoder, kBoth };
enum class TemporalPool { kAttention, kMean };

// Flat key=value configuration (# starts a comment). Defaults are the
// desk-scale setup; every field that affects computation feeds the
// config hash (output/data paths do not).
struct Config {
    bool negation_enabled = true;
    int n_streams = 2;
    int n_heads = 2;
    int depth = 1;
    StreamFusion stream_fusion = StreamFusion::kAttention;
    InjectionSite injection_site = InjectionSite::kBoth;
    TemporalPool temporal_pool = TemporalPool::kAttention;

    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-9;
    double lr_scale = 1.0;
    int warmup_steps = 400;
    int batch_size = 4;
    int max_steps = 2000;
    int checkpoint_every = 500;
    uint64_t seed = 1234;
    // Reference audio is cropped to this many samples for the speaker
    // pipeline during training/inference; 0 keeps the full waveform.
    int64_t ref_crop_samples = 3200;

    std::string data_dir;
    std::string out_dir = ".";

    static Config load(const std::string& path);
    static Config parse(const std::string& text);
    std::string serialize() const;
    void save(const std::string& path) const;

    void validate() const;        // throws std::invalid_argument
    uint64_t hash() const;        // FNV-1a over computation-affecting fields
};

std::string to_string(StreamFusion f);
std::string to_string(InjectionSite s);
std::string to_string(TemporalPool p);

}  // namespace ciftts
