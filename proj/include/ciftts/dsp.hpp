#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ciftts::dsp {

inline constexpr int kSampleRate = 22050;
inline constexpr int kFftSize = 1024;
inline constexpr int kHop = 256;
inline constexpr int kNumMels = 80;
inline constexpr double kFMin = 0.0;
inline constexpr double kFMax = 8000.0;
inline constexpr double kLogFloor = 1e-5;

struct AudioBuffer {
    std::vector<double> samples;  // in [-1, 1]
    int sample_rate = kSampleRate;
};

struct MelSpectrogram {
    std::vector<double> frames;  // T×80, row-major, natural-log energies
    int64_t t = 0;
    double hop_seconds = static_cast<double>(kHop) / kSampleRate;
    double at(int64_t frame, int64_t band) const { return frames[frame * kNumMels + band]; }
};

struct MfccMatrix {
    std::vector<double> frames;  // T×K, coefficient 0 excluded
    int64_t t = 0;
    int k = 13;
    double at(int64_t frame, int64_t coeff) const { return frames[frame * k + coeff]; }
};

// Thrown for malformed WAV/MEL0 files; offset points at the bad bytes.
struct FormatError : std::runtime_error {
    size_t offset;
    FormatError(const std::string& msg, size_t off)
        : std::runtime_error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

// PCM-16 WAV; stereo is downmixed by averaging, other rates are
// resampled to 22050 Hz by linear interpolation.
AudioBuffer load_wav(const std::string& path);
void save_wav(const std::string& path, const AudioBuffer& a);

// Remove leading/trailing frames (frame 2048, hop 512) whose RMS falls
// more than top_db below the loudest frame. Fully silent input yields
// an empty buffer.
AudioBuffer trim_silence(const AudioBuffer& a, double top_db = 60.0);

// In-place radix-2 FFT, size must be a power of two.
void fft(std::vector<std::complex<double>>& x);

// Hann window, centered frames with reflect padding.
// Returns T×513 row-major, T = 1 + floor(len/256).
std::vector<std::complex<double>> stft(const AudioBuffer& a, int64_t* t_out);

// 80 triangular filters over [fmin, fmax] on the mel scale; each row
// has 513 entries. Applied to the power spectrum.
std::vector<double> mel_filterbank();
std::vector<double> mel_center_frequencies();

MelSpectrogram mel_spectrogram(const AudioBuffer& a);

// Orthonormal DCT-II along the mel axis, coefficients 1..K retained.
MfccMatrix mfcc(const MelSpectrogram& m, int k = 13);

// Full orthonormal DCT-II / DCT-III pair over one frame (all 80 coeffs).
std::vector<double> dct2_frame(const std::vector<double>& x);
std::vector<double> idct2_frame(const std::vector<double>& c);

// MEL0 binary: magic "MEL0", u32 frame count, then T×80 little-endian
// float64.
void save_mel0(const std::string& path, const MelSpectrogram& m);
MelSpectrogram load_mel0(const std::string& path);
void save_mel_csv(const std::string& path, const MelSpectrogram& m);

}  // namespace ciftts::dsp
