#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ciftts/config.hpp"
#include "ciftts/dataset.hpp"
#include "ciftts/train.hpp"
#include "doctest.h"

using namespace ciftts;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    explicit TmpDir(const std::string& name) : path(fs::path("/tmp") / ("ciftts_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

Config tiny_train_config(const std::string& data_dir, const std::string& out_dir) {
    Config cfg;
    cfg.seed = 5;
    cfg.data_dir = data_dir;
    cfg.out_dir = out_dir;
    cfg.batch_size = 2;
    cfg.max_steps = 4;
    cfg.checkpoint_every = 2;
    cfg.ref_crop_samples = 640;
    return cfg;
}

}  // namespace

TEST_CASE("config parse, serialize, and validation") {
    Config base;
    base.n_streams = 3;
    base.n_heads = 4;
    base.stream_fusion = StreamFusion::kConcat;
    base.injection_site = InjectionSite::kEncoder;
    base.temporal_pool = TemporalPool::kMean;
    base.seed = 99;
    base.data_dir = "/data/x";
    Config back = Config::parse(base.serialize());
    CHECK(back.serialize() == base.serialize());

    Config c = Config::parse("# comment\n  n_heads = 8  # trailing\n\nseed=42\n");
    CHECK(c.n_heads == 8);
    CHECK(c.seed == 42);

    CHECK_THROWS_AS(Config::parse("stream_fusion=maxpool\n"), std::invalid_argument);
    CHECK_THROWS_AS(Config::parse("no_such_key=1\n"), std::invalid_argument);
    CHECK_THROWS_AS(Config::parse("just a line\n"), std::invalid_argument);
    CHECK_THROWS_AS(Config::parse("n_heads=3\n"), std::invalid_argument);       // 3 ∤ 128
    CHECK_THROWS_AS(Config::parse("ref_crop_samples=100\n"), std::invalid_argument);
    CHECK_THROWS_AS(Config::parse("batch_size=0\n"), std::invalid_argument);
    CHECK_THROWS_AS(Config::parse("negation_enabled=maybe\n"), std::invalid_argument);
}

TEST_CASE("config hash covers computation-affecting fields only") {
    const Config base;
    const uint64_t h0 = base.hash();
    auto changed = [&](auto&& mutate) {
        Config c = base;
        mutate(c);
        return c.hash();
    };
    CHECK(changed([](Config& c) { c.negation_enabled = false; }) != h0);
    CHECK(changed([](Config& c) { c.n_streams = 1; }) != h0);
    CHECK(changed([](Config& c) { c.n_heads = 4; }) != h0);
    CHECK(changed([](Config& c) { c.depth = 2; }) != h0);
    CHECK(changed([](Config& c) { c.stream_fusion = StreamFusion::kConcat; }) != h0);
    CHECK(changed([](Config& c) { c.injection_site = InjectionSite::kEncoder; }) != h0);
    CHECK(changed([](Config& c) { c.temporal_pool = TemporalPool::kMean; }) != h0);
    CHECK(changed([](Config& c) { c.beta1 = 0.95; }) != h0);
    CHECK(changed([](Config& c) { c.beta2 = 0.99; }) != h0);
    CHECK(changed([](Config& c) { c.adam_eps = 1e-8; }) != h0);
    CHECK(changed([](Config& c) { c.lr_scale = 0.5; }) != h0);
    CHECK(changed([](Config& c) { c.warmup_steps = 100; }) != h0);
    CHECK(changed([](Config& c) { c.batch_size = 8; }) != h0);
    CHECK(changed([](Config& c) { c.max_steps = 10; }) != h0);
    CHECK(changed([](Config& c) { c.seed = 7; }) != h0);
    CHECK(changed([](Config& c) { c.ref_crop_samples = 1600; }) != h0);
    // paths and checkpoint cadence do not affect the computed model
    CHECK(changed([](Config& c) { c.data_dir = "/elsewhere"; }) == h0);
    CHECK(changed([](Config& c) { c.out_dir = "/elsewhere"; }) == h0);
    CHECK(changed([](Config& c) { c.checkpoint_every = 7; }) == h0);
}

TEST_CASE("noam schedule: linear warmup then inverse-sqrt decay") {
    Config cfg;  // warmup 400
    CHECK(noam_lr(cfg, 100) == doctest::Approx(0.5 * noam_lr(cfg, 200)).epsilon(1e-12));
    CHECK(noam_lr(cfg, 1600) == doctest::Approx(0.5 * noam_lr(cfg, 400)).epsilon(1e-12));
    CHECK(noam_lr(cfg, 400) >= noam_lr(cfg, 399));
    CHECK(noam_lr(cfg, 400) >= noam_lr(cfg, 401));
    CHECK(noam_lr(cfg, 0) > 0.0);
    Config half = cfg;
    half.lr_scale = 0.5;
    CHECK(noam_lr(half, 1000) == doctest::Approx(0.5 * noam_lr(cfg, 1000)));
}

TEST_CASE("dataset generation: counts, duration sums, determinism") {
    TmpDir a("corpus_a"), b("corpus_b");
    data::GenOptions opt;
    opt.n_speakers = 2;
    opt.n_utterances = 2;
    opt.n_eval_utterances = 1;
    opt.seed = 7;
    opt.out_dir = a.path.string();
    data::Manifest m = data::generate_dataset(opt);

    CHECK(m.utterances.size() == 6);
    int held = 0;
    for (const auto& u : m.utterances) {
        if (u.held_out) ++held;
        CHECK(fs::exists(u.wav_path));
        CHECK(fs::exists(u.mel_path));
        int64_t total = 0;
        for (int64_t d : u.targets.duration) {
            CHECK(d >= 1);
            total += d;
        }
        dsp::MelSpectrogram mel = dsp::load_mel0(u.mel_path);
        CHECK(mel.t == total);  // durations sum to the mel frame count
        for (int64_t id : u.phonemes) {
            CHECK(id >= 0);
            CHECK(id < static_cast<int64_t>(data::default_vocab().size()));
        }
    }
    CHECK(held == 2);
    CHECK(fs::exists(a.path / "vocab.txt"));
    CHECK(fs::exists(a.path / "manifest.csv"));

    data::Manifest loaded = data::load_manifest(a.path.string());
    REQUIRE(loaded.utterances.size() == m.utterances.size());
    for (size_t i = 0; i < m.utterances.size(); ++i) {
        CHECK(loaded.utterances[i].phonemes == m.utterances[i].phonemes);
        CHECK(loaded.utterances[i].targets.duration == m.utterances[i].targets.duration);
        CHECK(loaded.utterances[i].held_out == m.utterances[i].held_out);
    }

    opt.out_dir = b.path.string();
    data::generate_dataset(opt);
    CHECK(slurp(a.path / "manifest.csv") == slurp(b.path / "manifest.csv"));
    CHECK(slurp(a.path / "spk0_utt0.wav") == slurp(b.path / "spk0_utt0.wav"));
    CHECK(slurp(a.path / "spk1_utt2.mel0") == slurp(b.path / "spk1_utt2.mel0"));
}

TEST_CASE("phoneme parsing accepts ids and symbols") {
    const auto vocab = data::default_vocab();
    CHECK(data::parse_phonemes("0 3 5", vocab) == std::vector<int64_t>{0, 3, 5});
    CHECK(data::parse_phonemes("pau aa 5", vocab) == std::vector<int64_t>{0, 1, 5});
    CHECK_THROWS_AS(data::parse_phonemes("zz", vocab), std::invalid_argument);
    CHECK_THROWS_AS(data::parse_phonemes("   ", vocab), std::invalid_argument);
}

TEST_CASE("vocab file round trip") {
    TmpDir d("vocab");
    const auto vocab = data::default_vocab();
    data::save_vocab((d.path / "vocab.txt").string(), vocab);
    CHECK(data::load_vocab((d.path / "vocab.txt").string()) == vocab);
}

TEST_CASE("CIF_TTS_THREADS caps file parallelism") {
    setenv("CIF_TTS_THREADS", "2", 1);
    CHECK(data::file_parallelism() == 2);
    setenv("CIF_TTS_THREADS", "bogus", 1);
    CHECK(data::file_parallelism() >= 1);
    unsetenv("CIF_TTS_THREADS");
    CHECK(data::file_parallelism() >= 1);
}

TEST_CASE("training, checkpoint round trip, and bit-exact resume") {
    TmpDir corpus("train_corpus"), run_a("run_a"), run_b("run_b");
    data::GenOptions gen;
    gen.n_speakers = 2;
    gen.n_utterances = 2;
    gen.n_eval_utterances = 0;
    gen.seed = 11;
    gen.out_dir = corpus.path.string();
    data::Manifest manifest = data::generate_dataset(gen);

    Config cfg = tiny_train_config(corpus.path.string(), run_a.path.string());
    TtsModel model_a(cfg);
    Trainer trainer_a(model_a, cfg, manifest);
    const std::string metrics_a = (run_a.path / "metrics.csv").string();
    trainer_a.run(metrics_a);

    auto rows_a = lines_of(slurp(metrics_a));
    REQUIRE(rows_a.size() == 5);  // header + 4 steps
    CHECK(rows_a[0] == "step,total,mel,pitch,energy,duration,lr");
    for (size_t i = 1; i < rows_a.size(); ++i) {
        std::istringstream in(rows_a[i]);
        std::string field;
        std::getline(in, field, ',');  // step
        for (int j = 0; j < 5; ++j) {
            std::getline(in, field, ',');
            CHECK(std::stod(field) >= 0.0);  // total + each term + (lr next)
        }
    }

    // checkpoint round trip: load -> save reproduces the bytes
    const fs::path ckpt2 = run_a.path / "checkpoint_2.ckpt";
    REQUIRE(fs::exists(ckpt2));
    CHECK(peek_checkpoint_hash(ckpt2.string()) == cfg.hash());
    {
        TtsModel reloaded(cfg);
        AdamState adam;
        CheckpointInfo info = load_checkpoint(ckpt2.string(), reloaded, &adam);
        CHECK(info.step == 2);
        const fs::path resaved = run_a.path / "resaved.ckpt";
        save_checkpoint(resaved.string(), reloaded, adam, info.step, info.rng_state);
        CHECK(slurp(resaved) == slurp(ckpt2));
    }

    // hash mismatch is refused
    {
        Config other = cfg;
        other.seed = 6;
        TtsModel wrong(other);
        AdamState adam;
        CHECK_THROWS_AS(load_checkpoint(ckpt2.string(), wrong, &adam), std::invalid_argument);
    }

    // resume from step 2 reproduces steps 2..3 bit-exactly
    Config cfg_b = cfg;
    cfg_b.out_dir = run_b.path.string();
    TtsModel model_b(cfg_b);
    Trainer trainer_b(model_b, cfg_b, manifest);
    trainer_b.restore(ckpt2.string());
    CHECK(trainer_b.step() == 2);
    const std::string metrics_b = (run_b.path / "metrics.csv").string();
    trainer_b.run(metrics_b);
    auto rows_b = lines_of(slurp(metrics_b));
    REQUIRE(rows_b.size() == 2);  // steps 2 and 3, no header on resume
    CHECK(rows_b[0] == rows_a[3]);
    CHECK(rows_b[1] == rows_a[4]);
}
