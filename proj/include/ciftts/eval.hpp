#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ciftts/dsp.hpp"

namespace ciftts::eval {

inline const double kMcdConstant = 10.0 * std::sqrt(2.0) / std::log(10.0);

struct McdResult {
    double value = 0.0;        // >= 0
    int64_t path_length = 0;   // DTW alignment length (frame count when plain)
    bool aligned = false;
};

// Equal-length MCD: per-frame Euclidean distance over the retained
// cepstral coefficients, averaged over frames.
McdResult mcd_plain(const dsp::MfccMatrix& s, const dsp::MfccMatrix& s_hat);

// DTW variant (steps: diagonal, up, right); value is path cost divided
// by path length, times the MCD constant.
McdResult mcd_dtw(const dsp::MfccMatrix& s, const dsp::MfccMatrix& s_hat);

struct SimilarityReport {
    double intra_mean = 0.0;   // mean pairwise cosine within speakers
    double inter_mean = 0.0;   // mean pairwise cosine across speakers
    double margin = 0.0;       // intra - inter
    int excluded_zero_vectors = 0;
};

struct LabeledEmbedding {
    std::string speaker_id;
    std::vector<double> vec;
};

SimilarityReport similarity_report(const std::vector<LabeledEmbedding>& embeddings);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace ciftts::eval
