#include "ciftts/train.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ciftts {

namespace fs = std::filesystem;

double noam_lr(const Config& cfg, int64_t step) {
    const double d = static_cast<double>(kHidden);
    const double s = static_cast<double>(std::max<int64_t>(step, 1));
    const double w = static_cast<double>(cfg.warmup_steps);
    return cfg.lr_scale / std::sqrt(d) * std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

namespace {

void write_string(std::ofstream& f, const std::string& s) {
    const uint32_t len = static_cast<uint32_t>(s.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(s.data(), len);
}

std::string read_string(std::ifstream& f) {
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string s(len, '\0');
    f.read(s.data(), len);
    return s;
}

void write_doubles(std::ofstream& f, const std::vector<double>& v) {
    const uint64_t n = v.size();
    f.write(reinterpret_cast<const char*>(&n), 8);
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * 8));
}

std::vector<double> read_doubles(std::ifstream& f) {
    uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 8);
    std::vector<double> v(n);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
    return v;
}

constexpr uint32_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const TtsModel& model, const AdamState& adam,
                     int64_t step, const std::string& rng_state) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write("CIFT", 4);
    f.write(reinterpret_cast<const char*>(&kCkptVersion), 4);
    const uint64_t hash = model.config().hash();
    f.write(reinterpret_cast<const char*>(&hash), 8);
    f.write(reinterpret_cast<const char*>(&step), 8);
    write_string(f, rng_state);
    const auto& items = model.params().items();
    const uint32_t count = static_cast<uint32_t>(items.size());
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& [name, t] : items) {
        write_string(f, name);
        const uint32_t nd = static_cast<uint32_t>(t.shape().size());
        f.write(reinterpret_cast<const char*>(&nd), 4);
        for (int64_t d : t.shape()) f.write(reinterpret_cast<const char*>(&d), 8);
        write_doubles(f, t.values());
    }
    const uint8_t has_adam = adam.m.size() == items.size() ? 1 : 0;
    f.write(reinterpret_cast<const char*>(&has_adam), 1);
    if (has_adam) {
        f.write(reinterpret_cast<const char*>(&adam.step), 8);
        for (size_t i = 0; i < items.size(); ++i) {
            write_doubles(f, adam.m[i]);
            write_doubles(f, adam.v[i]);
        }
    }
    if (!f) throw std::runtime_error("short write to checkpoint: " + path);
}

uint64_t peek_checkpoint_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CIFT", 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    uint64_t hash = 0;
    f.read(reinterpret_cast<char*>(&hash), 8);
    return hash;
}

CheckpointInfo load_checkpoint(const std::string& path, TtsModel& model, AdamState* adam,
                               bool check_hash) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CIFT", 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCkptVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    CheckpointInfo info;
    f.read(reinterpret_cast<char*>(&info.config_hash), 8);
    if (check_hash && info.config_hash != model.config().hash()) {
        std::ostringstream os;
        os << "checkpoint config hash " << std::hex << info.config_hash
           << " does not match current config hash " << model.config().hash();
        throw std::invalid_argument(os.str());
    }
    f.read(reinterpret_cast<char*>(&info.step), 8);
    info.rng_state = read_string(f);
    uint32_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 4);
    auto& items = model.params().items();
    if (count != items.size())
        throw std::runtime_error("checkpoint parameter count mismatch: " + std::to_string(count) +
                                 " vs " + std::to_string(items.size()));
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(f);
        uint32_t nd = 0;
        f.read(reinterpret_cast<char*>(&nd), 4);
        std::vector<int64_t> shape(nd);
        for (auto& d : shape) f.read(reinterpret_cast<char*>(&d), 8);
        auto vals = read_doubles(f);
        Tensor& t = model.params().get(name);
        if (t.shape() != shape)
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        t.values() = std::move(vals);
    }
    uint8_t has_adam = 0;
    f.read(reinterpret_cast<char*>(&has_adam), 1);
    if (has_adam && adam) {
        f.read(reinterpret_cast<char*>(&adam->step), 8);
        adam->m.resize(count);
        adam->v.resize(count);
        for (uint32_t i = 0; i < count; ++i) {
            adam->m[i] = read_doubles(f);
            adam->v[i] = read_doubles(f);
        }
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return info;
}

Trainer::Sample Trainer::make_sample(const data::Utterance& utt, const Config& cfg) {
    Sample s;
    s.phonemes = utt.phonemes;
    s.targets = utt.targets;
    dsp::MelSpectrogram mel = dsp::load_mel0(utt.mel_path);
    s.mel_target = Tensor::from({mel.t, dsp::kNumMels}, std::move(mel.frames));
    dsp::AudioBuffer wav = dsp::load_wav(utt.wav_path);
    if (cfg.ref_crop_samples > 0 &&
        static_cast<int64_t>(wav.samples.size()) > cfg.ref_crop_samples)
        wav.samples.resize(static_cast<size_t>(cfg.ref_crop_samples));
    dsp::MelSpectrogram ref_mel = dsp::mel_spectrogram(wav);
    s.ref_mel = Tensor::from({ref_mel.t, dsp::kNumMels}, std::move(ref_mel.frames));
    const int64_t n = static_cast<int64_t>(wav.samples.size());
    s.ref_wave = Tensor::from({1, n}, std::move(wav.samples));
    return s;
}

Trainer::Trainer(TtsModel& model, const Config& cfg, const data::Manifest& manifest)
    : model_(model), cfg_(cfg), data_rng_(cfg.seed ^ 0x5eedd00dull) {
    for (const auto& utt : manifest.utterances)
        if (!utt.held_out) samples_.push_back(make_sample(utt, cfg));
    if (samples_.empty()) throw std::invalid_argument("manifest has no training utterances");
    const size_t n = model_.params().items().size();
    adam_.m.resize(n);
    adam_.v.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const size_t sz = static_cast<size_t>(model_.params().items()[i].second.size());
        adam_.m[i].assign(sz, 0.0);
        adam_.v[i].assign(sz, 0.0);
    }
}

void Trainer::restore(const std::string& checkpoint_path) {
    CheckpointInfo info = load_checkpoint(checkpoint_path, model_, &adam_);
    step_ = info.step;
    std::istringstream ss(info.rng_state);
    ss >> data_rng_;
    last_checkpoint_ = checkpoint_path;
}

StepMetrics Trainer::train_step() {
    FwdCtx ctx{true, &data_rng_};
    std::uniform_int_distribution<size_t> pick(0, samples_.size() - 1);
    const double inv_b = 1.0 / static_cast<double>(cfg_.batch_size);
    Tensor mel_term, pitch_term, energy_term, dur_term;
    for (int b = 0; b < cfg_.batch_size; ++b) {
        const Sample& s = samples_[pick(data_rng_)];
        TtsModel::Output out = model_.forward(s.phonemes, s.ref_wave, s.ref_mel, &s.targets, ctx);
        const int64_t l = static_cast<int64_t>(s.targets.pitch.size());
        std::vector<double> log_d(static_cast<size_t>(l));
        for (int64_t i = 0; i < l; ++i)
            log_d[i] = std::log(static_cast<double>(s.targets.duration[i]));
        Tensor lm = mean(abs(sub(s.mel_target, out.mel)));
        Tensor lp = mean(square(sub(Tensor::from({l, 1}, s.targets.pitch), out.pitch)));
        Tensor le = mean(square(sub(Tensor::from({l, 1}, s.targets.energy), out.energy)));
        Tensor ld = mean(square(sub(Tensor::from({l, 1}, std::move(log_d)), out.log_dur)));
        mel_term = b == 0 ? lm : add(mel_term, lm);
        pitch_term = b == 0 ? lp : add(pitch_term, lp);
        energy_term = b == 0 ? le : add(energy_term, le);
        dur_term = b == 0 ? ld : add(dur_term, ld);
    }
    mel_term = scale(mel_term, inv_b);
    pitch_term = scale(pitch_term, inv_b);
    energy_term = scale(energy_term, inv_b);
    dur_term = scale(dur_term, inv_b);
    Tensor total = add(add(mel_term, pitch_term), add(energy_term, dur_term));

    StepMetrics m;
    m.step = step_;
    m.total = total.item();
    m.mel = mel_term.item();
    m.pitch = pitch_term.item();
    m.energy = energy_term.item();
    m.duration = dur_term.item();
    if (!std::isfinite(m.total)) {
        std::string ref = last_checkpoint_.empty() ? "none" : last_checkpoint_;
        throw NumericalError("non-finite loss at step " + std::to_string(step_) +
                             "; last good checkpoint: " + ref);
    }
    backward(total);
    ++step_;
    m.lr = noam_lr(cfg_, step_);
    adam_update(m.lr);
    return m;
}

void Trainer::adam_update(double lr) {
    ++adam_.step;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.adam_eps;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_.step));
    auto& items = model_.params().items();
    for (size_t i = 0; i < items.size(); ++i) {
        Tensor p = items[i].second;  // shared handle; mutates the stored parameter
        auto& vals = p.values();
        auto& g = p.grad();  // zero if the parameter was unused this step
        for (size_t j = 0; j < vals.size(); ++j) {
            adam_.m[i][j] = b1 * adam_.m[i][j] + (1.0 - b1) * g[j];
            adam_.v[i][j] = b2 * adam_.v[i][j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = adam_.m[i][j] / bc1;
            const double vhat = adam_.v[i][j] / bc2;
            vals[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        std::fill(g.begin(), g.end(), 0.0);
    }
}

void Trainer::run(const std::string& metrics_path) {
    const bool fresh = step_ == 0;
    std::ofstream log(metrics_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot write metrics log: " + metrics_path);
    log.precision(17);
    if (fresh) log << "step,total,mel,pitch,energy,duration,lr\n";
    while (step_ < cfg_.max_steps) {
        StepMetrics m = train_step();
        log << m.step << ',' << m.total << ',' << m.mel << ',' << m.pitch << ',' << m.energy
            << ',' << m.duration << ',' << m.lr << "\n";
        log.flush();
        if (step_ % cfg_.checkpoint_every == 0 || step_ == cfg_.max_steps) {
            std::ostringstream rng_state;
            rng_state << data_rng_;
            const std::string path =
                (fs::path(cfg_.out_dir) / ("checkpoint_" + std::to_string(step_) + ".ckpt")).string();
            save_checkpoint(path, model_, adam_, step_, rng_state.str());
            last_checkpoint_ = path;
        }
    }
}

}  // namespace ciftts
