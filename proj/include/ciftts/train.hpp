#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ciftts/backbone.hpp"
#include "ciftts/config.hpp"
#include "ciftts/dataset.hpp"

namespace ciftts {

// Raised when training hits a non-finite loss; exit code 4 at the CLI.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamState {
    std::vector<std::vector<double>> m, v;  // one entry per parameter tensor
    int64_t step = 0;
};

double noam_lr(const Config& cfg, int64_t step);

// Checkpoint: magic+version, config hash, step, data-order rng state,
// named float64 parameter table, Adam moments. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const TtsModel& model, const AdamState& adam,
                     int64_t step, const std::string& rng_state);
struct CheckpointInfo {
    int64_t step = 0;
    uint64_t config_hash = 0;
    std::string rng_state;
};
CheckpointInfo load_checkpoint(const std::string& path, TtsModel& model, AdamState* adam,
                               bool check_hash = true);
uint64_t peek_checkpoint_hash(const std::string& path);

struct StepMetrics {
    int64_t step = 0;
    double total = 0, mel = 0, pitch = 0, energy = 0, duration = 0, lr = 0;
};

class Trainer {
public:
    Trainer(TtsModel& model, const Config& cfg, const data::Manifest& manifest);

    // Resume from a checkpoint written by this trainer.
    void restore(const std::string& checkpoint_path);

    StepMetrics train_step();
    // Runs until cfg.max_steps, appending one CSV row per step to
    // metrics_path and checkpointing every cfg.checkpoint_every steps.
    void run(const std::string& metrics_path);

    int64_t step() const { return step_; }
    const std::string& last_checkpoint() const { return last_checkpoint_; }

    // Cached per-utterance tensors (targets, reference crop, mels).
    struct Sample {
        std::vector<int64_t> phonemes;
        VarianceTargets targets;
        Tensor mel_target;  // T×80
        Tensor ref_wave;    // 1×N (cropped per config)
        Tensor ref_mel;     // mel of the cropped reference
    };
    const Sample& sample(size_t i) const { return samples_[i]; }
    size_t num_samples() const { return samples_.size(); }

    static Sample make_sample(const data::Utterance& utt, const Config& cfg);

private:
    TtsModel& model_;
    Config cfg_;
    std::vector<Sample> samples_;  // training split only
    Rng data_rng_;
    AdamState adam_;
    int64_t step_ = 0;
    std::string last_checkpoint_;

    void adam_update(double lr);
};

}  // namespace ciftts
