#include "ciftts/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <mutex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ciftts::data {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// Deterministic per-phoneme content traits shared by all speakers.
double phoneme_unit(int64_t id, uint64_t salt) {
    uint64_t x = static_cast<uint64_t>(id) * 2654435761ull + salt * 0x9e3779b97f4a7c15ull + 1;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    return static_cast<double>(x % 10000) / 9999.0;
}

double phoneme_pitch_mult(int64_t id) { return 0.8 + 0.5 * phoneme_unit(id, 1); }
double phoneme_tilt(int64_t id) { return 0.3 + 1.4 * phoneme_unit(id, 2); }

}  // namespace

std::vector<std::string> default_vocab() {
    return {"pau", "aa", "ae", "ah", "ao", "eh", "er", "ey", "ih", "iy", "ow",
            "uw", "b",  "d",  "g",  "k",  "m",  "n",  "p",  "s",  "t",  "z"};
}

void save_vocab(const std::string& path, const std::vector<std::string>& vocab) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write vocab file: " + path);
    for (const auto& s : vocab) f << s << "\n";
}

std::vector<std::string> load_vocab(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open vocab file: " + path);
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) vocab.push_back(line);
    }
    return vocab;
}

std::vector<int64_t> parse_phonemes(const std::string& text,
                                    const std::vector<std::string>& vocab) {
    std::istringstream in(text);
    std::string tok;
    std::vector<int64_t> ids;
    while (in >> tok) {
        if (!tok.empty() && std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(c); })) {
            ids.push_back(std::stoll(tok));
        } else {
            auto it = std::find(vocab.begin(), vocab.end(), tok);
            if (it == vocab.end())
                throw std::invalid_argument("unknown phoneme symbol '" + tok + "'");
            ids.push_back(static_cast<int64_t>(it - vocab.begin()));
        }
    }
    if (ids.empty()) throw std::invalid_argument("empty phoneme sequence");
    return ids;
}

dsp::AudioBuffer render_utterance(const SyntheticSpeaker& spk, const std::vector<int64_t>& phonemes,
                                  const VarianceTargets& targets) {
    const size_t l = phonemes.size();
    if (targets.pitch.size() != l || targets.energy.size() != l || targets.duration.size() != l)
        throw std::invalid_argument("render_utterance: target lengths differ from phoneme count");
    int64_t total = 0;
    for (int64_t d : targets.duration) total += d;
    dsp::AudioBuffer out;
    out.samples.resize(static_cast<size_t>(total) * dsp::kHop, 0.0);

    const int nh = static_cast<int>(spk.harmonic_amplitudes.size());
    double phase = 0.0;
    int64_t sample = 0;
    for (size_t p = 0; p < l; ++p) {
        const double f0 = std::exp(targets.pitch[p]);
        const double tilt = phoneme_tilt(phonemes[p]);
        // phoneme-specific spectral tilt over the speaker's timbre, unit energy
        std::vector<double> w(static_cast<size_t>(nh));
        double energy = 0.0;
        for (int h = 0; h < nh; ++h) {
            w[h] = spk.harmonic_amplitudes[h] * std::pow(static_cast<double>(h + 1), -tilt);
            energy += w[h] * w[h];
        }
        const double norm = 1.0 / std::sqrt(energy);
        const double amp = 0.25 * targets.energy[p];
        const int64_t seg = targets.duration[p] * dsp::kHop;
        for (int64_t i = 0; i < seg; ++i, ++sample) {
            const double t = static_cast<double>(sample) / dsp::kSampleRate;
            const double f = f0 * (1.0 + spk.vibrato_depth * std::sin(2.0 * kPi * spk.vibrato_rate * t));
            phase += 2.0 * kPi * f / dsp::kSampleRate;
            double v = 0.0;
            for (int h = 0; h < nh; ++h) v += w[h] * norm * std::sin(static_cast<double>(h + 1) * phase);
            out.samples[static_cast<size_t>(sample)] = amp * v;
        }
    }
    return out;
}

int file_parallelism() {
    if (const char* env = std::getenv("CIF_TTS_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

void write_utterance_files(const Utterance& utt, const SyntheticSpeaker& spk) {
    dsp::AudioBuffer wav = render_utterance(spk, utt.phonemes, utt.targets);
    dsp::save_wav(utt.wav_path, wav);
    dsp::MelSpectrogram mel = dsp::mel_spectrogram(wav);
    int64_t total_frames = 0;
    for (int64_t d : utt.targets.duration) total_frames += d;
    // STFT yields 1 + len/hop frames; keep exactly sum(D) so durations
    // and mel frames line up.
    if (mel.t < total_frames)
        throw std::runtime_error("mel shorter than duration sum for " + utt.id);
    mel.t = total_frames;
    mel.frames.resize(static_cast<size_t>(total_frames) * dsp::kNumMels);
    dsp::save_mel0(utt.mel_path, mel);
}

}  // namespace

Manifest generate_dataset(const GenOptions& opt) {
    if (opt.n_speakers < 2) throw std::invalid_argument("need at least 2 speakers");
    if (opt.n_utterances < 2) throw std::invalid_argument("need at least 2 utterances per speaker");
    fs::create_directories(opt.out_dir);
    const auto vocab = default_vocab();
    save_vocab((fs::path(opt.out_dir) / "vocab.txt").string(), vocab);

    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> ujit(-0.3, 0.3);
    std::uniform_real_distribution<double> uamp(0.5, 1.0);
    std::uniform_real_distribution<double> uvrate(4.0, 7.0);
    std::uniform_real_distribution<double> uvdepth(0.003, 0.010);
    std::uniform_int_distribution<int> ulen(5, 8);
    std::uniform_int_distribution<int64_t> uphon(1, static_cast<int64_t>(vocab.size()) - 1);
    std::uniform_int_distribution<int64_t> udur(3, 5);
    std::uniform_real_distribution<double> upitch_jitter(0.97, 1.03);
    std::uniform_real_distribution<double> uenergy(0.5, 1.0);

    // Speakers are stratified over the voice-parameter space rather than
    // drawn independently: pitch base is log-spaced over 120..320 Hz and
    // spectral tilt is evenly spread, so every speaker pair is guaranteed
    // to be acoustically distinct regardless of seed.
    std::vector<SyntheticSpeaker> speakers;
    const double n_spk = static_cast<double>(opt.n_speakers);
    for (int s = 0; s < opt.n_speakers; ++s) {
        SyntheticSpeaker spk;
        spk.id = s;
        const double u = (static_cast<double>(s) + 0.5 + ujit(rng)) / n_spk;
        spk.f0_base = 120.0 * std::pow(320.0 / 120.0, u);
        const double tilt = 1.2 * (static_cast<double>(s) + 0.5 + ujit(rng)) / n_spk;
        spk.harmonic_amplitudes.resize(kNumHarmonics);
        double energy = 0.0;
        for (size_t h = 0; h < spk.harmonic_amplitudes.size(); ++h) {
            spk.harmonic_amplitudes[h] =
                uamp(rng) * std::pow(static_cast<double>(h + 1), -tilt);
            energy += spk.harmonic_amplitudes[h] * spk.harmonic_amplitudes[h];
        }
        for (auto& a : spk.harmonic_amplitudes) a /= std::sqrt(energy);
        spk.vibrato_rate = uvrate(rng);
        spk.vibrato_depth = uvdepth(rng);
        speakers.push_back(spk);
    }

    Manifest manifest;
    manifest.root = opt.out_dir;
    for (int s = 0; s < opt.n_speakers; ++s) {
        const int total = opt.n_utterances + opt.n_eval_utterances;
        for (int u = 0; u < total; ++u) {
            Utterance utt;
            utt.id = "spk" + std::to_string(s) + "_utt" + std::to_string(u);
            utt.speaker_id = "spk" + std::to_string(s);
            utt.wav_path = (fs::path(opt.out_dir) / (utt.id + ".wav")).string();
            utt.mel_path = (fs::path(opt.out_dir) / (utt.id + ".mel0")).string();
            utt.held_out = u >= opt.n_utterances;
            const int len = ulen(rng);
            for (int p = 0; p < len; ++p) {
                const int64_t id = uphon(rng);
                utt.phonemes.push_back(id);
                utt.targets.duration.push_back(udur(rng));
                utt.targets.pitch.push_back(
                    std::log(speakers[s].f0_base * phoneme_pitch_mult(id) * upitch_jitter(rng)));
                utt.targets.energy.push_back(uenergy(rng));
            }
            manifest.utterances.push_back(std::move(utt));
        }
    }

    // Parameter draws above are sequential and seeded; rendering and
    // file writes are independent per utterance.
    const int threads = std::min<int>(file_parallelism(), static_cast<int>(manifest.utterances.size()));
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string error_msg;
    std::mutex error_mutex;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= manifest.utterances.size()) return;
                const auto& utt = manifest.utterances[i];
                const int spk_idx = std::stoi(utt.speaker_id.substr(3));
                try {
                    write_utterance_files(utt, speakers[spk_idx]);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    failed = true;
                    if (error_msg.empty()) error_msg = e.what();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failed) throw std::runtime_error("dataset generation failed: " + error_msg);

    save_manifest(manifest, opt.out_dir);
    return manifest;
}

namespace {

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    os.precision(17);
    for (size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
    std::istringstream in(s);
    std::vector<T> v;
    T x;
    while (in >> x) v.push_back(x);
    return v;
}

}  // namespace

void save_manifest(const Manifest& m, const std::string& dir) {
    const std::string path = (fs::path(dir) / "manifest.csv").string();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest: " + path);
    f << "id,speaker,wav,mel,split,phonemes,pitch,energy,duration\n";
    for (const auto& u : m.utterances) {
        f << u.id << ',' << u.speaker_id << ',' << fs::path(u.wav_path).filename().string() << ','
          << fs::path(u.mel_path).filename().string() << ',' << (u.held_out ? "eval" : "train")
          << ',' << join(u.phonemes) << ',' << join(u.targets.pitch) << ','
          << join(u.targets.energy) << ',' << join(u.targets.duration) << "\n";
    }
}

Manifest load_manifest(const std::string& dir) {
    const std::string path = (fs::path(dir) / "manifest.csv").string();
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open manifest: " + path);
    Manifest m;
    m.root = dir;
    std::string line;
    std::getline(f, line);  // header
    size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 9)
            throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                     ": expected 9 fields, got " + std::to_string(fields.size()));
        Utterance u;
        u.id = fields[0];
        u.speaker_id = fields[1];
        u.wav_path = (fs::path(dir) / fields[2]).string();
        u.mel_path = (fs::path(dir) / fields[3]).string();
        u.held_out = fields[4] == "eval";
        u.phonemes = parse_list<int64_t>(fields[5]);
        u.targets.pitch = parse_list<double>(fields[6]);
        u.targets.energy = parse_list<double>(fields[7]);
        u.targets.duration = parse_list<int64_t>(fields[8]);
        m.utterances.push_back(std::move(u));
    }
    return m;
}

}  // namespace ciftts::data
