#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "ciftts/audio_encoder.hpp"
#include "ciftts/content_extractor.hpp"
#include "doctest.h"

using namespace ciftts;

namespace {

Tensor random_map(int64_t c, int64_t w, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(static_cast<size_t>(c * w));
    for (auto& x : v) x = u(rng);
    return Tensor::from({c, w}, std::move(v));
}

}  // namespace

TEST_CASE("instance_norm hand examples") {
    auto [out, stats] = instance_norm(Tensor::from({1, 3}, {5, 5, 5}), 1e-5);
    for (double v : out.values()) CHECK(v == 0.0);
    CHECK(stats.mu[0] == doctest::Approx(5.0));
    CHECK(stats.sigma[0] >= std::sqrt(1e-5));

    auto [out2, stats2] = instance_norm(Tensor::from({1, 2}, {0, 2}), 1e-12);
    CHECK(out2.values()[0] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(out2.values()[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(stats2.mu[0] == doctest::Approx(1.0));
    CHECK(stats2.sigma[0] == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(instance_norm(Tensor::from({1, 2}, {0, 2}), 0.0), std::invalid_argument);
}

TEST_CASE("instance_norm normalizes random maps") {
    Rng rng(41);
    const double eps = 1e-10;
    for (int rep = 0; rep < 20; ++rep) {
        Tensor f = random_map(6, 32, rng);
        auto [out, stats] = instance_norm(f, eps);
        for (int64_t c = 0; c < 6; ++c) {
            double m = 0.0, q = 0.0;
            for (int64_t w = 0; w < 32; ++w) m += out.at(c, w);
            m /= 32.0;
            for (int64_t w = 0; w < 32; ++w) {
                const double d = out.at(c, w) - m;
                q += d * d;
            }
            CHECK(std::fabs(m) < 1e-9);
            CHECK(std::fabs(std::sqrt(q / 32.0) - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("instance_norm is shift and gain invariant") {
    Rng rng(42);
    Tensor f = random_map(4, 16, rng);
    auto base = instance_norm(f, 1e-10).first;

    auto shifted = instance_norm(add(f, Tensor::full(f.shape(), 3.25)), 1e-10).first;
    for (int64_t i = 0; i < f.size(); ++i)
        CHECK(std::fabs(shifted.values()[i] - base.values()[i]) < 1e-12);

    auto scaled = instance_norm(scale(f, 7.5), 1e-10).first;
    for (int64_t i = 0; i < f.size(); ++i)
        CHECK(std::fabs(scaled.values()[i] - base.values()[i]) < 1e-9);
}

TEST_CASE("conv_bank shape and time invariance on constant input") {
    Rng rng(7);
    ParamStore ps;
    ContentExtractor ce(ps, "content", rng);

    Tensor zero = Tensor::zeros({80, 12});
    Tensor out = ce.conv_bank(zero);
    REQUIRE(out.shape() == std::vector<int64_t>{256, 12});
    for (double v : out.values()) CHECK(v >= 0.0);  // ReLU
    for (int64_t c = 0; c < 256; ++c)
        for (int64_t t = 1; t < 12; ++t) CHECK(out.at(c, t) == doctest::Approx(out.at(c, 0)));

    Tensor r = random_map(80, 17, rng);
    CHECK(ce.conv_bank(r).shape() == std::vector<int64_t>{256, 17});  // same padding

    CHECK_THROWS_AS(ce.conv_bank(Tensor::zeros({40, 5})), std::invalid_argument);
}

TEST_CASE("content forward length contract") {
    Rng rng(8);
    ParamStore ps;
    ContentExtractor ce(ps, "content", rng);
    for (int64_t t : {2, 3, 8, 15}) {
        Tensor mel = random_map(t, 80, rng);
        Tensor out = ce.forward(mel);
        CHECK(out.shape() == std::vector<int64_t>{t / 2, 128});
    }
    CHECK_THROWS_AS(ce.forward(random_map(1, 80, rng)), std::invalid_argument);
}

TEST_CASE("content forward is deterministic and shift-equivariant") {
    Rng rng(9);
    ParamStore ps;
    ContentExtractor ce(ps, "content", rng);

    Tensor mel = random_map(10, 80, rng);
    Tensor a = ce.forward(mel);
    Tensor b = ce.forward(mel);
    CHECK(a.values() == b.values());  // bit-identical

    // Two windows over the same zero-padded content, offset by the
    // pooling stride (2 mel frames): outputs shift by one frame. Margins
    // of at least 17 frames keep the content transition out of conv reach
    // of the zero-padding boundary band in both windows, so every channel
    // sees identical value multisets and the IN statistics match exactly.
    // Only the three boundary-contaminated rows at each end are excluded.
    Tensor content = random_map(12, 80, rng);
    auto window = [&](int64_t lead, int64_t tail) {
        return concat({Tensor::zeros({lead, 80}), content, Tensor::zeros({tail, 80})}, 0);
    };
    Tensor out1 = ce.forward(window(19, 19));  // content at rows 19..30
    Tensor out2 = ce.forward(window(21, 17));  // content at rows 21..32
    REQUIRE(out1.dim(0) == 25);
    for (int64_t i = 4; i < 22; ++i)
        for (int64_t d = 0; d < 128; ++d)
            CHECK(std::fabs(out2.at(i, d) - out1.at(i - 1, d)) < 1e-12);
}

TEST_CASE("audio encoder length contract") {
    Rng rng(10);
    ParamStore ps;
    AudioEncoder enc(ps, "enc", rng);

    CHECK(AudioEncoder::out_frames(32000) == 100);
    CHECK(enc.forward(random_map(1, 32000, rng, -0.5, 0.5)).dim(0) == 100);

    std::uniform_real_distribution<double> ulog(std::log(320.0), std::log(65536.0));
    for (int rep = 0; rep < 50; ++rep) {
        const int64_t n = static_cast<int64_t>(std::exp(ulog(rng)));
        Tensor out = enc.forward(random_map(1, n, rng, -0.5, 0.5));
        CHECK(out.dim(0) == (n + 319) / 320);
        CHECK(out.dim(1) == 128);
    }

    try {
        enc.forward(Tensor::zeros({1, 100}));
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("320") != std::string::npos);
    }
}

TEST_CASE("audio encoder on zero waveform is frame-constant in the interior") {
    Rng rng(11);
    ParamStore ps;
    AudioEncoder enc(ps, "enc", rng);
    Tensor out = enc.forward(Tensor::zeros({1, 3200}));
    REQUIRE(out.dim(0) == 10);
    for (int64_t f = 4; f < 10; ++f)
        for (int64_t d = 0; d < 128; ++d)
            CHECK(std::fabs(out.at(f, d) - out.at(3, d)) < 1e-9);
}

TEST_CASE("audio encoder interior translation equivariance") {
    Rng rng(12);
    ParamStore ps;
    AudioEncoder enc(ps, "enc", rng);
    Tensor base = random_map(1, 3520, rng, -0.5, 0.5);
    std::vector<double> w1(base.values().begin(), base.values().begin() + 3200);
    std::vector<double> w2(base.values().begin() + 320, base.values().end());
    Tensor out1 = enc.forward(Tensor::from({1, 3200}, std::move(w1)));
    Tensor out2 = enc.forward(Tensor::from({1, 3200}, std::move(w2)));
    // out2 frame f sees the samples out1 frame f+1 saw
    for (int64_t f = 4; f < 7; ++f)
        for (int64_t d = 0; d < 128; ++d)
            CHECK(std::fabs(out2.at(f, d) - out1.at(f + 1, d)) < 1e-6);
}
