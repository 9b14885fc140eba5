#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ciftts/config.hpp"
#include "ciftts/dataset.hpp"
#include "ciftts/dsp.hpp"
#include "ciftts/eval.hpp"
#include "ciftts/experiment.hpp"
#include "ciftts/gradsuite.hpp"
#include "ciftts/train.hpp"

namespace fs = std::filesystem;
using namespace ciftts;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct CommonOpts {
    std::string config_path;
    std::string out;
    std::string checkpoint;
    uint64_t seed = 0;
    bool seed_set = false;
    int steps = 0;
    bool steps_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required) {
    auto* c = cmd->add_option("--config", o.config_path, "configuration file (key=value)");
    if (config_required) c->required();
    cmd->add_option("--seed", o.seed, "override the config seed")->each([&](const std::string&) {
        o.seed_set = true;
    });
    cmd->add_option("--out", o.out, "output directory or path prefix");
    cmd->add_option("--steps", o.steps, "override max training steps")->each(
        [&](const std::string&) { o.steps_set = true; });
    cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file");
}

Config resolve_config(const CommonOpts& o) {
    Config cfg = o.config_path.empty() ? Config{} : Config::load(o.config_path);
    if (o.seed_set) cfg.seed = o.seed;
    if (o.steps_set) cfg.max_steps = o.steps;
    if (!o.out.empty()) cfg.out_dir = o.out;
    cfg.validate();
    return cfg;
}

std::vector<std::string> vocab_for(const Config& cfg) {
    const fs::path p = fs::path(cfg.data_dir) / "vocab.txt";
    if (!cfg.data_dir.empty() && fs::exists(p)) return data::load_vocab(p.string());
    return data::default_vocab();
}

// Reference conditioning inputs: waveform cropped per config, plus its mel.
std::pair<Tensor, Tensor> load_reference(const std::string& wav_path, const Config& cfg) {
    dsp::AudioBuffer wav = dsp::load_wav(wav_path);
    if (cfg.ref_crop_samples > 0 &&
        static_cast<int64_t>(wav.samples.size()) > cfg.ref_crop_samples)
        wav.samples.resize(static_cast<size_t>(cfg.ref_crop_samples));
    dsp::MelSpectrogram mel = dsp::mel_spectrogram(wav);
    Tensor ref_mel = Tensor::from({mel.t, dsp::kNumMels}, std::move(mel.frames));
    const int64_t n = static_cast<int64_t>(wav.samples.size());
    Tensor ref_wave = Tensor::from({1, n}, std::move(wav.samples));
    return {ref_wave, ref_mel};
}

dsp::MfccMatrix mfcc_of_file(const std::string& path) {
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".mel0")
        return dsp::mfcc(dsp::load_mel0(path));
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".wav")
        return dsp::mfcc(dsp::mel_spectrogram(dsp::load_wav(path)));
    throw dsp::FormatError("unsupported file type (expected .wav or .mel0): " + path, 0);
}

int cmd_gen_data(const CommonOpts& o, int speakers, int utts, int eval_utts) {
    Config cfg = resolve_config(o);
    data::GenOptions gen;
    gen.n_speakers = speakers;
    gen.n_utterances = utts;
    gen.n_eval_utterances = eval_utts;
    gen.seed = cfg.seed;
    gen.out_dir = o.out.empty() ? cfg.data_dir : o.out;
    if (gen.out_dir.empty()) {
        std::cerr << "gen-data: --out or config data_dir is required\n";
        return kExitUsage;
    }
    data::Manifest m = data::generate_dataset(gen);
    std::cout << "wrote " << m.utterances.size() << " utterances to " << gen.out_dir << "\n";
    return kExitOk;
}

int cmd_train(const CommonOpts& o) {
    Config cfg = resolve_config(o);
    if (cfg.data_dir.empty()) {
        std::cerr << "train: config data_dir is required\n";
        return kExitUsage;
    }
    data::Manifest manifest = data::load_manifest(cfg.data_dir);
    TtsModel model(cfg);
    Trainer trainer(model, cfg, manifest);
    fs::create_directories(cfg.out_dir);
    if (!o.checkpoint.empty()) trainer.restore(o.checkpoint);
    const std::string metrics = (fs::path(cfg.out_dir) / "metrics.csv").string();
    trainer.run(metrics);
    std::cout << "trained to step " << trainer.step() << "; metrics: " << metrics
              << "; last checkpoint: " << trainer.last_checkpoint() << "\n";
    return kExitOk;
}

int cmd_synth(const CommonOpts& o, const std::string& phoneme_file, const std::string& ref_wav) {
    Config cfg = resolve_config(o);
    const uint64_t ckpt_hash = peek_checkpoint_hash(o.checkpoint);
    if (ckpt_hash != cfg.hash()) {
        std::cerr << "synth: checkpoint config hash " << std::hex << ckpt_hash
                  << " does not match current config hash " << cfg.hash() << std::dec << "\n";
        return kExitUsage;
    }
    TtsModel model(cfg);
    load_checkpoint(o.checkpoint, model, nullptr);

    std::ifstream pf(phoneme_file);
    if (!pf) throw dsp::FormatError("cannot open phoneme file: " + phoneme_file, 0);
    std::stringstream buf;
    buf << pf.rdbuf();
    const std::vector<int64_t> phonemes = data::parse_phonemes(buf.str(), vocab_for(cfg));

    auto [ref_wave, ref_mel] = load_reference(ref_wav, cfg);
    const FwdCtx ctx{};
    TtsModel::Output out = model.forward(phonemes, ref_wave, ref_mel, nullptr, ctx);

    dsp::MelSpectrogram mel;
    mel.t = out.mel.dim(0);
    mel.frames = out.mel.values();
    const std::string prefix = o.out.empty() ? "synth" : o.out;
    if (!fs::path(prefix).parent_path().empty())
        fs::create_directories(fs::path(prefix).parent_path());
    dsp::save_mel0(prefix + ".mel0", mel);
    dsp::save_mel_csv(prefix + ".csv", mel);
    std::cout << "synthesized " << mel.t << " frames -> " << prefix << ".mel0\n";
    return kExitOk;
}

int cmd_speaker_embed(const CommonOpts& o, const std::vector<std::string>& wavs) {
    Config cfg = resolve_config(o);
    TtsModel model(cfg);
    if (!o.checkpoint.empty()) load_checkpoint(o.checkpoint, model, nullptr);
    const FwdCtx ctx{};

    struct Row {
        std::string utt, spk;
        std::vector<double> vec;
    };
    std::vector<Row> rows;
    if (!wavs.empty()) {
        for (const auto& w : wavs) {
            auto [ref_wave, ref_mel] = load_reference(w, cfg);
            Tensor e = model.speaker_embedding(ref_wave, ref_mel, ctx);
            rows.push_back({fs::path(w).stem().string(), "unknown", e.values()});
        }
    } else {
        if (cfg.data_dir.empty()) {
            std::cerr << "speaker-embed: give wav paths or a config with data_dir\n";
            return kExitUsage;
        }
        data::Manifest manifest = data::load_manifest(cfg.data_dir);
        for (const auto& utt : manifest.utterances) {
            auto [ref_wave, ref_mel] = load_reference(utt.wav_path, cfg);
            Tensor e = model.speaker_embedding(ref_wave, ref_mel, ctx);
            rows.push_back({utt.id, utt.speaker_id, e.values()});
        }
    }

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out);
        if (!file) throw std::runtime_error("cannot write " + o.out);
        os = &file;
    }
    os->precision(17);
    for (const auto& r : rows) {
        *os << r.utt << ',' << r.spk;
        for (double v : r.vec) *os << ',' << v;
        *os << "\n";
    }
    return kExitOk;
}

int cmd_eval_mcd(const CommonOpts& o, const std::vector<std::string>& files) {
    if (files.empty() || files.size() % 2 != 0) {
        std::cerr << "eval-mcd: provide ref/syn file pairs\n";
        return kExitUsage;
    }
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out);
        if (!file) throw std::runtime_error("cannot write " + o.out);
        os = &file;
    }
    os->precision(12);
    *os << "ref_path,syn_path,mcd_dtw,mcd_plain,path_length\n";
    for (size_t i = 0; i < files.size(); i += 2) {
        dsp::MfccMatrix a = mfcc_of_file(files[i]);
        dsp::MfccMatrix b = mfcc_of_file(files[i + 1]);
        eval::McdResult dtw = eval::mcd_dtw(a, b);
        *os << files[i] << ',' << files[i + 1] << ',' << dtw.value << ',';
        if (a.t == b.t) *os << eval::mcd_plain(a, b).value;
        *os << ',' << dtw.path_length << "\n";
    }
    return kExitOk;
}

int cmd_grad_check(uint64_t seed) {
    auto results = run_grad_suite(seed);
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << std::left << std::setw(24) << r.name << std::scientific
                  << std::setprecision(3) << r.max_rel_error << (r.pass ? "  PASS" : "  FAIL")
                  << "\n";
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "grad-check: all checks passed" : "grad-check: FAILURES above")
              << "\n";
    return all_pass ? kExitOk : kExitNumerical;
}

int cmd_ablate(const CommonOpts& o) {
    Config cfg = resolve_config(o);
    if (cfg.data_dir.empty()) {
        std::cerr << "ablate: config data_dir is required\n";
        return kExitUsage;
    }
    const int steps = o.steps_set ? o.steps : 200;
    data::Manifest manifest = data::load_manifest(cfg.data_dir);
    auto rows = expt::run_ablation(cfg, manifest, steps);
    std::cout << expt::format_ablation_table(rows);
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        const std::string path = (fs::path(o.out) / "ablation.csv").string();
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write " + path);
        f.precision(12);
        f << "variant,train_loss,mel_l1,mcd_dtw,similarity_margin,intra_mean,inter_mean\n";
        for (const auto& r : rows)
            f << r.name << ',' << r.final_train_loss << ',' << r.report.mel_l1 << ','
              << r.report.mcd_dtw << ',' << r.report.similarity.margin << ','
              << r.report.similarity.intra_mean << ',' << r.report.similarity.inter_mean << "\n";
        std::cout << "report: " << path << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cif-tts: zero-shot multi-speaker TTS acoustic model (desk scale)"};
    app.require_subcommand(1);

    CommonOpts gen_o;
    int gen_speakers = 4, gen_utts = 8, gen_eval = 4;
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic speaker corpus");
    add_common(gen, gen_o, false);
    gen->add_option("--speakers", gen_speakers, "number of speakers");
    gen->add_option("--utterances", gen_utts, "training utterances per speaker");
    gen->add_option("--eval-utterances", gen_eval, "held-out utterances per speaker");

    CommonOpts train_o;
    auto* train = app.add_subcommand("train", "train the acoustic model");
    add_common(train, train_o, true);

    CommonOpts synth_o;
    std::string phoneme_file, ref_wav;
    auto* synth = app.add_subcommand("synth", "zero-shot synthesis to a mel file");
    add_common(synth, synth_o, true);
    synth->get_option("--checkpoint")->required();
    synth->add_option("--phonemes", phoneme_file, "phoneme id/symbol file")->required();
    synth->add_option("--ref", ref_wav, "reference WAV for the target voice")->required();

    CommonOpts emb_o;
    std::vector<std::string> emb_wavs;
    auto* emb = app.add_subcommand("speaker-embed", "export speaker embeddings as CSV");
    add_common(emb, emb_o, true);
    emb->add_option("wavs", emb_wavs, "reference WAV files (default: manifest utterances)");

    CommonOpts mcd_o;
    std::vector<std::string> mcd_files;
    auto* mcd = app.add_subcommand("eval-mcd", "mel-cepstral distortion over file pairs");
    add_common(mcd, mcd_o, false);
    mcd->add_option("files", mcd_files, "ref syn [ref syn ...] (.wav or .mel0)");

    uint64_t gc_seed = 1234;
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
    gc->add_option("--seed", gc_seed, "rng seed for the check suite");

    CommonOpts abl_o;
    auto* abl = app.add_subcommand("ablate", "train and evaluate configuration variants");
    add_common(abl, abl_o, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_o, gen_speakers, gen_utts, gen_eval);
        if (train->parsed()) return cmd_train(train_o);
        if (synth->parsed()) return cmd_synth(synth_o, phoneme_file, ref_wav);
        if (emb->parsed()) return cmd_speaker_embed(emb_o, emb_wavs);
        if (mcd->parsed()) return cmd_eval_mcd(mcd_o, mcd_files);
        if (gc->parsed()) return cmd_grad_check(gc_seed);
        if (abl->parsed()) return cmd_ablate(abl_o);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const dsp::FormatError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
