#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ciftts/backbone.hpp"
#include "ciftts/dsp.hpp"

namespace ciftts::data {

inline constexpr int kNumHarmonics = 10;

// Synthetic voice: speakers share the phoneme inventory and differ
// only in timbre, so speaker/content disentanglement is testable by
// construction.
struct SyntheticSpeaker {
    int id = 0;
    double f0_base = 200.0;                    // [80, 400] Hz
    std::vector<double> harmonic_amplitudes;   // unit energy
    double vibrato_rate = 5.0;                 // Hz
    double vibrato_depth = 0.02;               // relative f0 excursion
};

struct Utterance {
    std::string id;
    std::string speaker_id;
    std::string wav_path;
    std::string mel_path;
    std::vector<int64_t> phonemes;
    VarianceTargets targets;
    bool held_out = false;
};

struct Manifest {
    std::vector<Utterance> utterances;
    std::string root;
};

struct GenOptions {
    int n_speakers = 4;
    int n_utterances = 8;       // training utterances per speaker
    int n_eval_utterances = 4;  // held-out utterances per speaker
    uint64_t seed = 1234;
    std::string out_dir;
};

// Writes vocab.txt, WAV + MEL0 per utterance, and manifest.csv.
Manifest generate_dataset(const GenOptions& opt);

Manifest load_manifest(const std::string& dir);
void save_manifest(const Manifest& m, const std::string& dir);

// One symbol per line; id = line number.
std::vector<std::string> default_vocab();
void save_vocab(const std::string& path, const std::vector<std::string>& vocab);
std::vector<std::string> load_vocab(const std::string& path);

// Resolve whitespace-separated integer ids or symbol names.
std::vector<int64_t> parse_phonemes(const std::string& text, const std::vector<std::string>& vocab);

// Render one utterance waveform for a speaker from variance targets.
dsp::AudioBuffer render_utterance(const SyntheticSpeaker& spk, const std::vector<int64_t>& phonemes,
                                  const VarianceTargets& targets);

// Honors CIF_TTS_THREADS (default: hardware concurrency, min 1).
int file_parallelism();

}  // namespace ciftts::data
