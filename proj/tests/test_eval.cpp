#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "ciftts/eval.hpp"
#include "doctest.h"

using namespace ciftts::eval;
using ciftts::dsp::MfccMatrix;

namespace {

MfccMatrix random_mfcc(int64_t t, int k, std::mt19937_64& rng, double amp = 3.0) {
    std::uniform_real_distribution<double> u(-amp, amp);
    MfccMatrix m;
    m.t = t;
    m.k = k;
    m.frames.resize(static_cast<size_t>(t * k));
    for (auto& v : m.frames) v = u(rng);
    return m;
}

MfccMatrix scaled(const MfccMatrix& m, double alpha) {
    MfccMatrix out = m;
    for (auto& v : out.frames) v *= alpha;
    return out;
}

}  // namespace

TEST_CASE("mcd_plain oracle values") {
    std::mt19937_64 rng(61);
    MfccMatrix s = random_mfcc(12, 13, rng);
    McdResult same = mcd_plain(s, s);
    CHECK(same.value == 0.0);
    CHECK(same.path_length == 12);
    CHECK_FALSE(same.aligned);

    // single frame, single coefficient: value = 10*sqrt(2)/ln(10) * |d|
    MfccMatrix a, b;
    a.t = b.t = 1;
    a.k = b.k = 1;
    a.frames = {2.0};
    b.frames = {2.0 - 0.73};
    CHECK(mcd_plain(a, b).value ==
          doctest::Approx(6.141851463713754 * 0.73).epsilon(1e-9));
}

TEST_CASE("mcd_plain homogeneity, symmetry, triangle bound") {
    std::mt19937_64 rng(62);
    MfccMatrix s = random_mfcc(9, 13, rng), t = random_mfcc(9, 13, rng), u = random_mfcc(9, 13, rng);
    const double base = mcd_plain(s, t).value;
    CHECK(mcd_plain(scaled(s, -2.5), scaled(t, -2.5)).value == doctest::Approx(2.5 * base));
    CHECK(mcd_plain(t, s).value == base);  // exact symmetry
    CHECK(mcd_plain(s, u).value <= mcd_plain(s, t).value + mcd_plain(t, u).value + 1e-12);
}

TEST_CASE("mcd_plain rejects unequal frame counts, pointing at the DTW variant") {
    std::mt19937_64 rng(63);
    MfccMatrix s = random_mfcc(5, 13, rng), t = random_mfcc(7, 13, rng);
    try {
        mcd_plain(s, t);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("mcd_dtw") != std::string::npos);
    }
    MfccMatrix wrong_k = random_mfcc(5, 12, rng);
    CHECK_THROWS_AS(mcd_plain(s, wrong_k), std::invalid_argument);
}

TEST_CASE("mcd_dtw absorbs duration changes") {
    std::mt19937_64 rng(64);
    MfccMatrix s = random_mfcc(6, 13, rng);
    McdResult same = mcd_dtw(s, s);
    CHECK(same.value == doctest::Approx(0.0));
    CHECK(same.aligned);
    CHECK(same.path_length == 6);  // diagonal

    MfccMatrix dup;
    dup.t = 12;
    dup.k = 13;
    for (int64_t t = 0; t < 6; ++t)
        for (int rep = 0; rep < 2; ++rep)
            dup.frames.insert(dup.frames.end(), s.frames.begin() + t * 13,
                              s.frames.begin() + (t + 1) * 13);
    McdResult warped = mcd_dtw(s, dup);
    CHECK(std::fabs(warped.value) < 1e-9);
    CHECK(warped.path_length >= 12);  // >= max(T_s, T_s_hat)
}

TEST_CASE("mcd_dtw never exceeds mcd_plain on equal lengths") {
    std::mt19937_64 rng(65);
    for (int rep = 0; rep < 50; ++rep) {
        MfccMatrix s = random_mfcc(8, 13, rng), t = random_mfcc(8, 13, rng);
        CHECK(mcd_dtw(s, t).value <= mcd_plain(s, t).value + 1e-12);
    }
}

TEST_CASE("similarity report degenerate geometries") {
    std::vector<double> ex(8, 0.0), ey(8, 0.0);
    ex[0] = 1.0;
    ey[1] = 1.0;
    std::vector<LabeledEmbedding> orth = {{"a", ex}, {"a", ex}, {"b", ey}, {"b", ey}};
    SimilarityReport r = similarity_report(orth);
    CHECK(r.intra_mean == doctest::Approx(1.0));
    CHECK(r.inter_mean == doctest::Approx(0.0));
    CHECK(r.margin == doctest::Approx(1.0));
    CHECK(r.excluded_zero_vectors == 0);

    std::vector<LabeledEmbedding> same = {{"a", ex}, {"a", ex}, {"b", ex}, {"b", ex}};
    CHECK(similarity_report(same).margin == doctest::Approx(0.0));
}

TEST_CASE("similarity report on random unit vectors has near-zero margin") {
    std::mt19937_64 rng(66);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<LabeledEmbedding> embs;
    for (int spk = 0; spk < 2; ++spk)
        for (int utt = 0; utt < 8; ++utt) {
            std::vector<double> v(64);
            for (auto& x : v) x = g(rng);
            embs.push_back({spk == 0 ? "a" : "b", v});
        }
    SimilarityReport r = similarity_report(embs);
    CHECK(std::fabs(r.margin) < 0.3);  // sampling noise only
    CHECK(r.intra_mean >= -1.0);
    CHECK(r.intra_mean <= 1.0);
}

TEST_CASE("similarity report excludes zero vectors and validates inputs") {
    std::vector<double> ex(4, 0.0);
    ex[0] = 1.0;
    std::vector<LabeledEmbedding> embs = {
        {"a", ex}, {"a", ex}, {"b", ex}, {"b", ex}, {"b", std::vector<double>(4, 0.0)}};
    SimilarityReport r = similarity_report(embs);
    CHECK(r.excluded_zero_vectors == 1);

    std::vector<LabeledEmbedding> one_speaker = {{"a", ex}, {"a", ex}};
    CHECK_THROWS_AS(similarity_report(one_speaker), std::invalid_argument);
    std::vector<LabeledEmbedding> one_utt = {{"a", ex}, {"a", ex}, {"b", ex}};
    CHECK_THROWS_AS(similarity_report(one_utt), std::invalid_argument);
}

TEST_CASE("cosine basics") {
    std::vector<double> a = {1, 0}, b = {0, 2}, c = {3, 0};
    CHECK(cosine(a, b) == doctest::Approx(0.0));
    CHECK(cosine(a, c) == doctest::Approx(1.0));
    CHECK(cosine(a, {-2, 0}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine(a, {1, 2, 3}), std::invalid_argument);
}
