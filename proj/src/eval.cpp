#include "ciftts/eval.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace ciftts::eval {

namespace {

double frame_distance(const dsp::MfccMatrix& a, int64_t i, const dsp::MfccMatrix& b, int64_t j) {
    double acc = 0.0;
    for (int k = 0; k < a.k; ++k) {
        const double d = a.at(i, k) - b.at(j, k);
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

McdResult mcd_plain(const dsp::MfccMatrix& s, const dsp::MfccMatrix& s_hat) {
    if (s.k != s_hat.k) throw std::invalid_argument("mcd: coefficient counts differ");
    if (s.t != s_hat.t)
        throw std::invalid_argument("mcd_plain: frame counts differ (" + std::to_string(s.t) +
                                    " vs " + std::to_string(s_hat.t) + "); use mcd_dtw");
    if (s.t == 0) throw std::invalid_argument("mcd: empty matrix");
    double acc = 0.0;
    for (int64_t t = 0; t < s.t; ++t) acc += frame_distance(s, t, s_hat, t);
    return {kMcdConstant * acc / static_cast<double>(s.t), s.t, false};
}

McdResult mcd_dtw(const dsp::MfccMatrix& s, const dsp::MfccMatrix& s_hat) {
    if (s.k != s_hat.k) throw std::invalid_argument("mcd: coefficient counts differ");
    if (s.t == 0 || s_hat.t == 0) throw std::invalid_argument("mcd_dtw: empty matrix");
    const int64_t n = s.t, m = s_hat.t;
    const double inf = std::numeric_limits<double>::infinity();
    // cost[i][j]: best cumulative cost ending at (i,j); len the matching path length
    std::vector<double> cost(static_cast<size_t>(n * m), inf);
    std::vector<int64_t> len(static_cast<size_t>(n * m), 0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) {
            const double d = frame_distance(s, i, s_hat, j);
            if (i == 0 && j == 0) {
                cost[0] = d;
                len[0] = 1;
                continue;
            }
            double best = inf;
            int64_t best_len = 0;
            if (i > 0 && j > 0 && cost[(i - 1) * m + (j - 1)] < best) {
                best = cost[(i - 1) * m + (j - 1)];
                best_len = len[(i - 1) * m + (j - 1)];
            }
            if (i > 0 && cost[(i - 1) * m + j] < best) {
                best = cost[(i - 1) * m + j];
                best_len = len[(i - 1) * m + j];
            }
            if (j > 0 && cost[i * m + (j - 1)] < best) {
                best = cost[i * m + (j - 1)];
                best_len = len[i * m + (j - 1)];
            }
            cost[i * m + j] = best + d;
            len[i * m + j] = best_len + 1;
        }
    const double total = cost[(n - 1) * m + (m - 1)];
    const int64_t path_len = len[(n - 1) * m + (m - 1)];
    return {kMcdConstant * total / static_cast<double>(path_len), path_len, true};
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

SimilarityReport similarity_report(const std::vector<LabeledEmbedding>& embeddings) {
    SimilarityReport report;
    std::vector<const LabeledEmbedding*> kept;
    for (const auto& e : embeddings) {
        double norm = 0.0;
        for (double v : e.vec) norm += v * v;
        if (norm == 0.0) {
            ++report.excluded_zero_vectors;
            continue;
        }
        kept.push_back(&e);
    }
    std::map<std::string, int> per_speaker;
    for (const auto* e : kept) ++per_speaker[e->speaker_id];
    if (per_speaker.size() < 2)
        throw std::invalid_argument("similarity report needs >= 2 speakers");
    for (const auto& [id, count] : per_speaker)
        if (count < 2)
            throw std::invalid_argument("similarity report needs >= 2 utterances for speaker " + id);
    double intra = 0.0, inter = 0.0;
    int64_t n_intra = 0, n_inter = 0;
    for (size_t i = 0; i < kept.size(); ++i)
        for (size_t j = i + 1; j < kept.size(); ++j) {
            const double c = cosine(kept[i]->vec, kept[j]->vec);
            if (kept[i]->speaker_id == kept[j]->speaker_id) {
                intra += c;
                ++n_intra;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    report.intra_mean = intra / static_cast<double>(n_intra);
    report.inter_mean = inter / static_cast<double>(n_inter);
    report.margin = report.intra_mean - report.inter_mean;
    return report;
}

}  // namespace ciftts::eval
