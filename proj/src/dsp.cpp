#include "ciftts/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace ciftts::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

uint32_t read_u32(const std::vector<char>& buf, size_t off) {
    uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v;
}

uint16_t read_u16(const std::vector<char>& buf, size_t off) {
    uint16_t v;
    std::memcpy(&v, buf.data() + off, 2);
    return v;
}

std::vector<double> resample_linear(const std::vector<double>& in, int from_rate, int to_rate) {
    if (from_rate == to_rate || in.empty()) return in;
    const double ratio = static_cast<double>(from_rate) / to_rate;
    const size_t n_out = static_cast<size_t>(std::floor((in.size() - 1) / ratio)) + 1;
    std::vector<double> out(n_out);
    for (size_t i = 0; i < n_out; ++i) {
        const double pos = i * ratio;
        const size_t lo = static_cast<size_t>(pos);
        const double frac = pos - lo;
        const double a = in[lo];
        const double b = lo + 1 < in.size() ? in[lo + 1] : in[lo];
        out[i] = a + frac * (b - a);
    }
    return out;
}

}  // namespace

AudioBuffer load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open WAV file: " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0)
        throw FormatError("missing RIFF header in " + path, 0);
    if (std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw FormatError("missing WAVE tag in " + path, 8);

    uint16_t channels = 0, bits = 0, format = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t off = 12;
    while (off + 8 <= buf.size()) {
        const uint32_t chunk_len = read_u32(buf, off + 4);
        if (std::memcmp(buf.data() + off, "fmt ", 4) == 0) {
            if (off + 8 + 16 > buf.size()) throw FormatError("truncated fmt chunk", off);
            format = read_u16(buf, off + 8);
            channels = read_u16(buf, off + 10);
            rate = read_u32(buf, off + 12);
            bits = read_u16(buf, off + 22);
        } else if (std::memcmp(buf.data() + off, "data", 4) == 0) {
            data_off = off + 8;
            data_len = chunk_len;
        }
        off += 8 + chunk_len + (chunk_len & 1);
    }
    if (format == 0) throw FormatError("no fmt chunk in " + path, 12);
    if (format != 1) throw FormatError("non-PCM WAV (format " + std::to_string(format) + ")", 12);
    if (bits != 16) throw FormatError("expected 16-bit PCM, got " + std::to_string(bits) + "-bit", 12);
    if (channels < 1 || channels > 2)
        throw FormatError("expected mono or stereo, got " + std::to_string(channels) + " channels", 12);
    if (data_off == 0) throw FormatError("no data chunk in " + path, off);
    if (data_off + data_len > buf.size())
        throw FormatError("data chunk exceeds file size", data_off);

    const size_t n_frames = data_len / (2 * channels);
    std::vector<double> mono(n_frames);
    for (size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (uint16_t c = 0; c < channels; ++c) {
            int16_t s;
            std::memcpy(&s, buf.data() + data_off + (i * channels + c) * 2, 2);
            acc += static_cast<double>(s);
        }
        mono[i] = acc / (channels * 32768.0);
    }
    AudioBuffer out;
    out.samples = resample_linear(mono, static_cast<int>(rate), kSampleRate);
    out.sample_rate = kSampleRate;
    return out;
}

void save_wav(const std::string& path, const AudioBuffer& a) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write WAV file: " + path);
    const uint32_t data_len = static_cast<uint32_t>(a.samples.size() * 2);
    const uint32_t riff_len = 36 + data_len;
    const uint32_t rate = static_cast<uint32_t>(a.sample_rate);
    const uint32_t byte_rate = rate * 2;
    const uint16_t block_align = 2, channels = 1, bits = 16, fmt = 1;
    const uint32_t fmt_len = 16;
    f.write("RIFF", 4);
    f.write(reinterpret_cast<const char*>(&riff_len), 4);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    f.write(reinterpret_cast<const char*>(&fmt_len), 4);
    f.write(reinterpret_cast<const char*>(&fmt), 2);
    f.write(reinterpret_cast<const char*>(&channels), 2);
    f.write(reinterpret_cast<const char*>(&rate), 4);
    f.write(reinterpret_cast<const char*>(&byte_rate), 4);
    f.write(reinterpret_cast<const char*>(&block_align), 2);
    f.write(reinterpret_cast<const char*>(&bits), 2);
    f.write("data", 4);
    f.write(reinterpret_cast<const char*>(&data_len), 4);
    for (double s : a.samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        const int16_t q = static_cast<int16_t>(std::lrint(clamped * 32767.0));
        f.write(reinterpret_cast<const char*>(&q), 2);
    }
    if (!f) throw std::runtime_error("short write to " + path);
}

AudioBuffer trim_silence(const AudioBuffer& a, double top_db) {
    if (!(top_db > 0.0)) throw std::invalid_argument("trim_silence: top_db must be > 0");
    constexpr int64_t kFrame = 2048, kTrimHop = 512;
    const int64_t n = static_cast<int64_t>(a.samples.size());
    if (n == 0) return {std::vector<double>{}, a.sample_rate};
    const int64_t n_frames = (n + kTrimHop - 1) / kTrimHop;
    std::vector<double> rms_db(n_frames);
    double max_db = -1e300, max_rms = 0.0;
    for (int64_t i = 0; i < n_frames; ++i) {
        const int64_t start = i * kTrimHop;
        const int64_t len = std::min<int64_t>(kFrame, n - start);
        double acc = 0.0;
        for (int64_t j = 0; j < len; ++j) acc += a.samples[start + j] * a.samples[start + j];
        const double rms = std::sqrt(acc / len);
        rms_db[i] = 20.0 * std::log10(std::max(rms, 1e-300));
        max_db = std::max(max_db, rms_db[i]);
        max_rms = std::max(max_rms, rms);
    }
    if (max_rms == 0.0) return {std::vector<double>{}, a.sample_rate};
    const double threshold = max_db - top_db;
    int64_t first = -1, last = -1;
    for (int64_t i = 0; i < n_frames; ++i)
        if (rms_db[i] > threshold) {
            if (first < 0) first = i;
            last = i;
        }
    if (first < 0) return {std::vector<double>{}, a.sample_rate};
    const int64_t start = first * kTrimHop;
    const int64_t end = std::min<int64_t>(n, last * kTrimHop + kFrame);
    AudioBuffer out;
    out.sample_rate = a.sample_rate;
    out.samples.assign(a.samples.begin() + start, a.samples.begin() + end);
    return out;
}

void fft(std::vector<std::complex<double>>& x) {
    const size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be a power of two");
    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = x[i + j];
                const std::complex<double> v = x[i + j + len / 2] * w;
                x[i + j] = u + v;
                x[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

namespace {

double reflect_sample(const std::vector<double>& s, int64_t idx) {
    const int64_t n = static_cast<int64_t>(s.size());
    if (n == 1) return s[0];
    while (idx < 0 || idx >= n) {
        if (idx < 0) idx = -idx;
        if (idx >= n) idx = 2 * (n - 1) - idx;
    }
    return s[idx];
}

}  // namespace

std::vector<std::complex<double>> stft(const AudioBuffer& a, int64_t* t_out) {
    const int64_t n = static_cast<int64_t>(a.samples.size());
    if (n < 1) throw std::invalid_argument("stft: empty buffer");
    const int64_t t = 1 + n / kHop;
    const int64_t bins = kFftSize / 2 + 1;
    std::vector<double> window(kFftSize);
    for (int64_t i = 0; i < kFftSize; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kFftSize);
    std::vector<std::complex<double>> out(static_cast<size_t>(t * bins));
    std::vector<std::complex<double>> frame(kFftSize);
    for (int64_t ti = 0; ti < t; ++ti) {
        const int64_t center = ti * kHop;
        for (int64_t i = 0; i < kFftSize; ++i) {
            const double s = reflect_sample(a.samples, center - kFftSize / 2 + i);
            frame[i] = {s * window[i], 0.0};
        }
        fft(frame);
        for (int64_t b = 0; b < bins; ++b) out[ti * bins + b] = frame[b];
    }
    if (t_out) *t_out = t;
    return out;
}

namespace {

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

std::vector<double> mel_edges() {
    const double lo = hz_to_mel(kFMin), hi = hz_to_mel(kFMax);
    std::vector<double> edges(kNumMels + 2);
    for (int i = 0; i < kNumMels + 2; ++i)
        edges[i] = mel_to_hz(lo + (hi - lo) * i / (kNumMels + 1));
    return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies() {
    auto edges = mel_edges();
    return {edges.begin() + 1, edges.end() - 1};
}

std::vector<double> mel_filterbank() {
    const int bins = kFftSize / 2 + 1;
    auto edges = mel_edges();
    std::vector<double> fb(static_cast<size_t>(kNumMels) * bins, 0.0);
    for (int m = 0; m < kNumMels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (int b = 0; b < bins; ++b) {
            const double f = static_cast<double>(b) * kSampleRate / kFftSize;
            double w = 0.0;
            if (f > left && f < right)
                w = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
            fb[static_cast<size_t>(m) * bins + b] = w;
        }
    }
    return fb;
}

MelSpectrogram mel_spectrogram(const AudioBuffer& a) {
    int64_t t = 0;
    auto spec = stft(a, &t);
    const int bins = kFftSize / 2 + 1;
    static const std::vector<double> fb = mel_filterbank();
    MelSpectrogram out;
    out.t = t;
    out.frames.resize(static_cast<size_t>(t) * kNumMels);
    for (int64_t ti = 0; ti < t; ++ti) {
        for (int m = 0; m < kNumMels; ++m) {
            double acc = 0.0;
            const double* row = &fb[static_cast<size_t>(m) * bins];
            for (int b = 0; b < bins; ++b) acc += row[b] * std::norm(spec[ti * bins + b]);
            out.frames[ti * kNumMels + m] = std::log(std::max(acc, kLogFloor));
        }
    }
    return out;
}

std::vector<double> dct2_frame(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<double> c(n);
    for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += x[i] * std::cos(kPi * k * (i + 0.5) / n);
        c[k] = acc * (k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n));
    }
    return c;
}

std::vector<double> idct2_frame(const std::vector<double>& c) {
    const int n = static_cast<int>(c.size());
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) {
        double acc = c[0] * std::sqrt(1.0 / n);
        for (int k = 1; k < n; ++k)
            acc += c[k] * std::sqrt(2.0 / n) * std::cos(kPi * k * (i + 0.5) / n);
        x[i] = acc;
    }
    return x;
}

MfccMatrix mfcc(const MelSpectrogram& m, int k) {
    if (k < 1 || k > kNumMels - 1)
        throw std::invalid_argument("mfcc: K must lie in [1, " + std::to_string(kNumMels - 1) + "]");
    MfccMatrix out;
    out.t = m.t;
    out.k = k;
    out.frames.resize(static_cast<size_t>(m.t) * k);
    std::vector<double> frame(kNumMels);
    for (int64_t ti = 0; ti < m.t; ++ti) {
        for (int i = 0; i < kNumMels; ++i) frame[i] = m.frames[ti * kNumMels + i];
        auto c = dct2_frame(frame);
        for (int i = 0; i < k; ++i) out.frames[ti * k + i] = c[i + 1];  // c0 dropped
    }
    return out;
}

void save_mel0(const std::string& path, const MelSpectrogram& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write MEL0 file: " + path);
    f.write("MEL0", 4);
    const uint32_t t = static_cast<uint32_t>(m.t);
    f.write(reinterpret_cast<const char*>(&t), 4);
    f.write(reinterpret_cast<const char*>(m.frames.data()),
            static_cast<std::streamsize>(m.frames.size() * sizeof(double)));
    if (!f) throw std::runtime_error("short write to " + path);
}

MelSpectrogram load_mel0(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open MEL0 file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "MEL0", 4) != 0)
        throw FormatError("missing MEL0 magic in " + path, 0);
    uint32_t t = 0;
    f.read(reinterpret_cast<char*>(&t), 4);
    if (!f) throw FormatError("truncated MEL0 header in " + path, 4);
    MelSpectrogram m;
    m.t = t;
    m.frames.resize(static_cast<size_t>(t) * kNumMels);
    f.read(reinterpret_cast<char*>(m.frames.data()),
           static_cast<std::streamsize>(m.frames.size() * sizeof(double)));
    if (!f) throw FormatError("truncated MEL0 payload in " + path, 8);
    return m;
}

void save_mel_csv(const std::string& path, const MelSpectrogram& m) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write CSV file: " + path);
    f.precision(17);
    for (int64_t ti = 0; ti < m.t; ++ti) {
        for (int b = 0; b < kNumMels; ++b) f << (b ? "," : "") << m.frames[ti * kNumMels + b];
        f << "\n";
    }
}

}  // namespace ciftts::dsp
