#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "ciftts/speaker_pipeline.hpp"
#include "doctest.h"

using namespace ciftts;

namespace {

Tensor random_seq(int64_t t, int64_t d, Rng& rng, double amp = 1.0) {
    std::uniform_real_distribution<double> u(-amp, amp);
    std::vector<double> v(static_cast<size_t>(t * d));
    for (auto& x : v) x = u(rng);
    return Tensor::from({t, d}, std::move(v));
}

SpeakerPipeline::Options default_opts() { return {}; }

}  // namespace

TEST_CASE("align_content identity, constant, and ramp") {
    Rng rng(1);
    Tensor c = random_seq(5, 3, rng);
    Tensor same = align_content(c, 5);
    CHECK(same.values() == c.values());

    Tensor constant = Tensor::full({4, 2}, 3.5);
    Tensor stretched = align_content(constant, 9);
    REQUIRE(stretched.shape() == std::vector<int64_t>{9, 2});
    for (double v : stretched.values()) CHECK(v == doctest::Approx(3.5));

    Tensor ramp = Tensor::from({4, 1}, {0, 1, 2, 3});
    Tensor out = align_content(ramp, 7);
    for (int64_t i = 0; i < 7; ++i) CHECK(out.values()[i] == doctest::Approx(0.5 * i));
}

TEST_CASE("negation identities") {
    Rng rng(2);
    Tensor full = random_seq(6, 4, rng);
    Tensor zero_cif = negate_content(full, full);
    for (double v : zero_cif.values()) CHECK(v == 0.0);

    Tensor identity = negate_content(full, Tensor::zeros({6, 4}));
    CHECK(identity.values() == full.values());

    Tensor cif = negate_content(Tensor::from({1, 2}, {1, 2}), Tensor::from({1, 2}, {0.5, 1}));
    CHECK(cif.values() == std::vector<double>{0.5, 1.0});

    // full == cif + content within 1 ulp
    Tensor content = random_seq(6, 4, rng);
    Tensor back = add(negate_content(full, content), content);
    for (int64_t i = 0; i < full.size(); ++i) {
        const double a = full.values()[i], b = back.values()[i];
        CHECK(std::fabs(a - b) <= 2.3e-16 * std::max(std::fabs(a), std::fabs(content.values()[i])));
    }

    CHECK_THROWS_AS(negate_content(full, Tensor::zeros({4, 6})), std::invalid_argument);
}

TEST_CASE("pre_transformer preserves shape and is permutation-equivariant without PE") {
    Rng rng(3);
    ParamStore ps;
    auto opt = default_opts();
    opt.use_position_encoding = false;
    SpeakerPipeline sp(ps, "spk", opt, rng);
    FwdCtx ctx;

    Tensor cif = random_seq(5, 128, rng);
    Tensor out = sp.pre_transformer(cif, ctx);
    REQUIRE(out.shape() == cif.shape());

    const std::vector<int64_t> perm = {3, 0, 4, 1, 2};
    Tensor permuted_in = gather_rows(cif, perm);
    Tensor out_perm = sp.pre_transformer(permuted_in, ctx);
    Tensor expected = gather_rows(out, perm);
    for (int64_t i = 0; i < out.size(); ++i)
        CHECK(std::fabs(out_perm.values()[i] - expected.values()[i]) < 1e-10);
}

TEST_CASE("multi_stream count and identical-weight determinism") {
    Rng rng(4);
    ParamStore ps;
    SpeakerPipeline sp(ps, "spk", default_opts(), rng);
    FwdCtx ctx;
    Tensor cif = random_seq(4, 128, rng);

    auto streams = sp.multi_stream(cif, ctx);
    REQUIRE(streams.size() == 2);

    // copy stream 0's weights into stream 1: outputs must coincide
    const std::string tag = "spk.stream1.";
    for (const auto& [name, t] : ps.items())
        if (name.rfind(tag, 0) == 0)
            ps.get(name).values() = ps.get("spk.stream0." + name.substr(tag.size())).values();
    streams = sp.multi_stream(cif, ctx);
    CHECK(streams[0].values() == streams[1].values());

    // identical streams: attention pooling returns the common value
    Tensor pooled = sp.attention_pool_streams(streams);
    for (int64_t i = 0; i < pooled.size(); ++i)
        CHECK(std::fabs(pooled.values()[i] - streams[0].values()[i]) < 1e-12);
}

TEST_CASE("single stream pooling is the identity") {
    Rng rng(5);
    ParamStore ps;
    auto opt = default_opts();
    opt.n_streams = 1;
    SpeakerPipeline sp(ps, "spk", opt, rng);
    Tensor s0 = random_seq(6, 128, rng);
    Tensor pooled = sp.attention_pool_streams({s0});
    CHECK(pooled.values() == s0.values());
}

TEST_CASE("concat pooling shape and zero-stream bias") {
    Rng rng(6);
    ParamStore ps;
    auto opt = default_opts();
    opt.fusion = StreamFusion::kConcat;
    SpeakerPipeline sp(ps, "spk", opt, rng);

    Tensor a = random_seq(5, 128, rng), b = random_seq(5, 128, rng);
    Tensor pooled = sp.concat_pool_streams({a, b});
    CHECK(pooled.shape() == std::vector<int64_t>{5, 128});

    Tensor z = Tensor::zeros({5, 128});
    Tensor bias_only = sp.concat_pool_streams({z, z});
    for (int64_t t = 1; t < 5; ++t)
        for (int64_t d = 0; d < 128; ++d)
            CHECK(bias_only.at(t, d) == doctest::Approx(bias_only.at(0, d)));
}

TEST_CASE("temporal pooling identities") {
    Rng rng(7);
    ParamStore ps;
    SpeakerPipeline sp(ps, "spk", default_opts(), rng);

    Tensor one = random_seq(1, 128, rng);
    Tensor pooled = sp.temporal_pool(one);
    REQUIRE(pooled.shape() == std::vector<int64_t>{1, 128});
    for (int64_t i = 0; i < 128; ++i)
        CHECK(pooled.values()[i] == doctest::Approx(one.values()[i]).epsilon(1e-12));

    std::vector<double> row(128);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : row) v = u(rng);
    std::vector<double> rep;
    for (int t = 0; t < 6; ++t) rep.insert(rep.end(), row.begin(), row.end());
    Tensor constant = Tensor::from({6, 128}, std::move(rep));
    Tensor pooled_c = sp.temporal_pool(constant);
    for (int64_t i = 0; i < 128; ++i)
        CHECK(pooled_c.values()[i] == doctest::Approx(row[i]).epsilon(1e-12));
}

TEST_CASE("mean temporal pooling option") {
    Rng rng(8);
    ParamStore ps;
    auto opt = default_opts();
    opt.temporal_pool = TemporalPool::kMean;
    SpeakerPipeline sp(ps, "spk", opt, rng);
    Tensor seq = Tensor::from({2, 128}, std::vector<double>(256, 0.0));
    seq.values()[0] = 4.0;    // row 0, dim 0
    seq.values()[128] = 2.0;  // row 1, dim 0
    Tensor pooled = sp.temporal_pool(seq);
    CHECK(pooled.values()[0] == doctest::Approx(3.0));
}

TEST_CASE("speaker forward emits a 128-dim vector for any length") {
    Rng rng(9);
    ParamStore ps;
    SpeakerPipeline sp(ps, "spk", default_opts(), rng);
    FwdCtx ctx;
    for (int64_t n : {640, 1600, 3200}) {
        Tensor wave = random_seq(1, n, rng, 0.5);
        Tensor mel = random_seq(1 + n / 256, 80, rng, 2.0);
        Tensor s = sp.forward(wave, mel, ctx);
        CHECK(s.shape() == std::vector<int64_t>{1, 128});
        for (double v : s.values()) CHECK(std::isfinite(v));
    }
}

TEST_CASE("speaker forward is deterministic per seed") {
    FwdCtx ctx;
    Rng data_rng(99);
    Tensor wave = random_seq(1, 1600, data_rng, 0.5);
    Tensor mel = random_seq(7, 80, data_rng, 2.0);

    std::vector<double> first;
    for (int rep = 0; rep < 2; ++rep) {
        Rng rng(77);
        ParamStore ps;
        SpeakerPipeline sp(ps, "spk", default_opts(), rng);
        Tensor s = sp.forward(wave, mel, ctx);
        if (rep == 0) first = s.values();
        else CHECK(s.values() == first);
    }
}

TEST_CASE("negation off skips the content branch") {
    Rng rng(10);
    ParamStore ps_on, ps_off;
    auto opt = default_opts();
    SpeakerPipeline on(ps_on, "spk", opt, rng);
    opt.negation_enabled = false;
    SpeakerPipeline off(ps_off, "spk", opt, rng);
    CHECK(ps_off.items().size() < ps_on.items().size());
    for (const auto& [name, t] : ps_off.items())
        CHECK(name.find(".content.") == std::string::npos);

    FwdCtx ctx;
    Tensor wave = random_seq(1, 960, rng, 0.5);
    Tensor mel = random_seq(4, 80, rng, 2.0);
    CHECK(off.forward(wave, mel, ctx).shape() == std::vector<int64_t>{1, 128});
}

TEST_CASE("head/depth grid constructs and runs") {
    FwdCtx ctx;
    for (int heads : {2, 4, 8})
        for (int depth : {1, 2, 4}) {
            Rng rng(20);
            ParamStore ps;
            auto opt = default_opts();
            opt.n_heads = heads;
            opt.depth = depth;
            SpeakerPipeline sp(ps, "spk", opt, rng);
            Tensor wave = random_seq(1, 640, rng, 0.5);
            Tensor mel = random_seq(3, 80, rng, 2.0);
            CHECK(sp.forward(wave, mel, ctx).shape() == std::vector<int64_t>{1, 128});
        }
}
