#pragma once

#include <string>
#include <vector>

#include "ciftts/config.hpp"
#include "ciftts/dataset.hpp"
#include "ciftts/eval.hpp"
#include "ciftts/train.hpp"

namespace ciftts::expt {

// Held-out metrics: teacher-forced mel L1, free-running MCD-DTW against
// ground truth, and speaker-similarity margin over reference embeddings.
struct EvalReport {
    double mel_l1 = 0.0;
    double mcd_dtw = 0.0;
    eval::SimilarityReport similarity;
    int n_utterances = 0;
};

EvalReport evaluate_held_out(const TtsModel& model, const Config& cfg,
                             const data::Manifest& manifest);

// MFCCs of a predicted T×80 log-mel tensor, for MCD against references.
dsp::MfccMatrix mfcc_of_mel_tensor(const Tensor& mel);

struct AblationRow {
    std::string name;
    Config cfg;
    double final_train_loss = 0.0;
    EvalReport report;
};

// Trains each variant for `steps` from scratch on the manifest's train
// split and evaluates on the held-out split.
std::vector<AblationRow> run_ablation(const Config& base, const data::Manifest& manifest,
                                      int steps);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace ciftts::expt
