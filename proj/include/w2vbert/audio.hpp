#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "w2vbert/rng.hpp"

namespace w2v {

struct AudioError : std::runtime_error {
    explicit AudioError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Waveform {
    std::vector<float> samples; // mono, [-1, 1]
    int sample_rate = 16000;
};

struct LogMelSpectrogram {
    int n_frames = 0;
    int n_mels = 0;
    std::vector<float> data; // row-major, n_frames x n_mels
    float frame_hop_ms = 10.0f;
    float frame_len_ms = 25.0f;

    float at(int t, int m) const { return data[(size_t)t * n_mels + m]; }
};

struct SyntheticUtterance {
    Waveform waveform;
    std::vector<int> frame_labels; // one per log-mel frame
    std::string utterance_id;
};

// ---------------------------------------------------------------------------
// WAV I/O (PCM16 mono)
// ---------------------------------------------------------------------------

namespace detail {
inline uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}
inline uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return (uint16_t)((uint32_t)b[0] | ((uint32_t)b[1] << 8));
}
inline void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 4);
}
inline void write_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff)};
    out.write(reinterpret_cast<char*>(b), 2);
}
} // namespace detail

inline Waveform load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AudioError("load_wav: cannot open " + path);
    char riff[4], wave[4];
    in.read(riff, 4);
    uint32_t riff_size = detail::read_u32(in);
    (void)riff_size;
    in.read(wave, 4);
    if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
        throw AudioError("load_wav: not a RIFF/WAVE file: " + path);

    Waveform wav;
    bool have_fmt = false;
    uint16_t channels = 0, bits = 0, audio_format = 0;
    while (in) {
        char id[4];
        in.read(id, 4);
        if (!in) break;
        uint32_t chunk_size = detail::read_u32(in);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            audio_format = detail::read_u16(in);
            channels = detail::read_u16(in);
            wav.sample_rate = (int)detail::read_u32(in);
            detail::read_u32(in); // byte rate
            detail::read_u16(in); // block align
            bits = detail::read_u16(in);
            if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
            if (audio_format != 1)
                throw AudioError("load_wav: AudioFormat must be 1 (PCM), got " +
                                 std::to_string(audio_format));
            if (channels != 1)
                throw AudioError("load_wav: NumChannels must be 1 (mono), got " +
                                 std::to_string(channels));
            if (bits != 16)
                throw AudioError("load_wav: BitsPerSample must be 16, got " + std::to_string(bits));
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!have_fmt) throw AudioError("load_wav: data chunk before fmt chunk");
            size_t n = chunk_size / 2;
            wav.samples.resize(n);
            std::vector<char> raw(chunk_size);
            in.read(raw.data(), (std::streamsize)chunk_size);
            if ((uint32_t)in.gcount() != chunk_size)
                throw AudioError("load_wav: truncated data chunk (Subchunk2Size=" +
                                 std::to_string(chunk_size) + ")");
            for (size_t i = 0; i < n; ++i) {
                int16_t s = (int16_t)((uint8_t)raw[2 * i] | ((uint8_t)raw[2 * i + 1] << 8));
                wav.samples[i] = (float)s / 32768.0f;
            }
            return wav;
        } else {
            in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
        }
    }
    throw AudioError("load_wav: missing data chunk in " + path);
}

inline void save_wav(const std::string& path, const Waveform& wav) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AudioError("save_wav: cannot open " + path);
    uint32_t data_size = (uint32_t)(wav.samples.size() * 2);
    out.write("RIFF", 4);
    detail::write_u32(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    detail::write_u32(out, 16);
    detail::write_u16(out, 1); // PCM
    detail::write_u16(out, 1); // mono
    detail::write_u32(out, (uint32_t)wav.sample_rate);
    detail::write_u32(out, (uint32_t)(wav.sample_rate * 2));
    detail::write_u16(out, 2);
    detail::write_u16(out, 16);
    out.write("data", 4);
    detail::write_u32(out, data_size);
    for (float s : wav.samples) {
        float c = std::clamp(s, -1.0f, 1.0f);
        int v = (int)std::lrint(c * 32767.0f);
        detail::write_u16(out, (uint16_t)(int16_t)v);
    }
}

// ---------------------------------------------------------------------------
// log-mel features
// ---------------------------------------------------------------------------

namespace detail {

// In-place iterative radix-2 FFT.
inline void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / (double)len;
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k], v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank, n_mels x (n_fft/2 + 1), spanning 0..Nyquist.
// Every FFT bin below Nyquist gets nonzero total weight.
inline std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate) {
    const int n_bins = n_fft / 2 + 1;
    std::vector<double> fb((size_t)n_mels * n_bins, 0.0);
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> pts(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i) pts[(size_t)i] = mel_to_hz(mel_max * i / (n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
        double lo = pts[(size_t)m], mid = pts[(size_t)m + 1], hi = pts[(size_t)m + 2];
        for (int b = 0; b < n_bins; ++b) {
            double f = (double)b * sample_rate / n_fft;
            double w = 0.0;
            if (f > lo && f < mid) w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
            fb[(size_t)m * n_bins + b] = w;
        }
    }
    // Edge bins (DC sits exactly on the first filter's lower edge) would
    // otherwise be dropped; fold any uncovered bin into its nearest filter.
    for (int b = 0; b < n_bins - 1; ++b) {
        double col = 0.0;
        for (int m = 0; m < n_mels; ++m) col += fb[(size_t)m * n_bins + b];
        if (col == 0.0) {
            double f = (double)b * sample_rate / n_fft;
            int nearest = 0;
            double best = 1e300;
            for (int m = 0; m < n_mels; ++m) {
                double d = std::fabs(pts[(size_t)m + 1] - f);
                if (d < best) { best = d; nearest = m; }
            }
            fb[(size_t)nearest * n_bins + b] = 1e-3;
        }
    }
    return fb;
}

} // namespace detail

// 25 ms Hann window, 10 ms hop, 512-point FFT, log(mel_energy + 1e-6).
inline LogMelSpectrogram compute_logmel(const Waveform& wav, int n_mels = 80) {
    if (wav.sample_rate != 8000 && wav.sample_rate != 16000)
        throw AudioError("compute_logmel: unsupported sample rate " + std::to_string(wav.sample_rate));
    const int win = wav.sample_rate * 25 / 1000;
    const int hop = wav.sample_rate * 10 / 1000;
    const int n_fft = 512;
    if ((int)wav.samples.size() < win)
        throw AudioError("compute_logmel: waveform shorter than one 25 ms window");

    const int n_frames = 1 + (int)((wav.samples.size() - (size_t)win) / (size_t)hop);
    static thread_local std::vector<double> fb;
    static thread_local int fb_mels = -1, fb_rate = -1;
    if (fb_mels != n_mels || fb_rate != wav.sample_rate) {
        fb = detail::mel_filterbank(n_mels, n_fft, wav.sample_rate);
        fb_mels = n_mels;
        fb_rate = wav.sample_rate;
    }
    const int n_bins = n_fft / 2 + 1;

    std::vector<double> hann((size_t)win);
    for (int i = 0; i < win; ++i) hann[(size_t)i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1));

    LogMelSpectrogram mel;
    mel.n_frames = n_frames;
    mel.n_mels = n_mels;
    mel.data.resize((size_t)n_frames * n_mels);
    std::vector<std::complex<double>> buf((size_t)n_fft);
    for (int t = 0; t < n_frames; ++t) {
        const float* x = wav.samples.data() + (size_t)t * hop;
        for (int i = 0; i < n_fft; ++i)
            buf[(size_t)i] = i < win ? std::complex<double>(x[i] * hann[(size_t)i], 0.0)
                                     : std::complex<double>(0.0, 0.0);
        detail::fft(buf);
        std::vector<double> power((size_t)n_bins);
        for (int b = 0; b < n_bins; ++b) power[(size_t)b] = std::norm(buf[(size_t)b]);
        for (int m = 0; m < n_mels; ++m) {
            double e = 0.0;
            const double* row = fb.data() + (size_t)m * n_bins;
            for (int b = 0; b < n_bins; ++b) e += row[b] * power[(size_t)b];
            mel.data[(size_t)t * n_mels + m] = (float)std::log(e + 1e-6);
        }
    }
    return mel;
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

// Markov chain over hidden states, each state emitting a two-formant sinusoid
// mixture plus noise at the requested SNR (default ~20 dB). Labels are
// recorded at the log-mel frame rate. Fully deterministic given
// (seed, utterance index).
inline SyntheticUtterance generate_synthetic_utterance(int utt_index, double duration_s,
                                                       int n_states, uint64_t seed,
                                                       int sample_rate = 16000,
                                                       double snr_db = 20.0) {
    Rng rng{seed + (uint64_t)utt_index, 0x53594e54ULL};
    const int hop = sample_rate * 10 / 1000;
    const int win = sample_rate * 25 / 1000;
    const int n_samples = (int)(duration_s * sample_rate);
    const int n_frames = 1 + (n_samples - win) / hop;

    // state sequence at frame rate, min dwell 5 frames
    std::vector<int> labels((size_t)n_frames);
    int state = (int)rng.uniform_int((uint64_t)n_states);
    int dwell = 0;
    for (int t = 0; t < n_frames; ++t) {
        if (dwell >= 5 && rng.uniform() < 0.12) {
            int next = (int)rng.uniform_int((uint64_t)(n_states - 1));
            state = next >= state ? next + 1 : next;
            dwell = 0;
        }
        labels[(size_t)t] = state;
        ++dwell;
    }

    // per-state formant pair, distinct by construction
    std::vector<double> f1((size_t)n_states), f2((size_t)n_states);
    for (int s = 0; s < n_states; ++s) {
        f1[(size_t)s] = 300.0 + 250.0 * s;
        f2[(size_t)s] = 1500.0 + 400.0 * s;
    }

    Waveform wav;
    wav.sample_rate = sample_rate;
    wav.samples.resize((size_t)n_samples);
    double phase1 = rng.uniform(0.0, 2.0 * M_PI);
    double phase2 = rng.uniform(0.0, 2.0 * M_PI);
    const double signal_amp = 0.45;
    const double noise_amp = signal_amp / std::sqrt(2.0) * std::pow(10.0, -snr_db / 20.0);
    for (int n = 0; n < n_samples; ++n) {
        int t = std::min(n / hop, n_frames - 1);
        int s = labels[(size_t)t];
        phase1 += 2.0 * M_PI * f1[(size_t)s] / sample_rate;
        phase2 += 2.0 * M_PI * f2[(size_t)s] / sample_rate;
        double v = signal_amp * (0.6 * std::sin(phase1) + 0.4 * std::sin(phase2));
        v += noise_amp * rng.normal();
        wav.samples[(size_t)n] = (float)v;
    }

    SyntheticUtterance utt;
    utt.waveform = std::move(wav);
    utt.frame_labels = std::move(labels);
    {
        std::ostringstream os;
        os << "utt_" << utt_index;
        utt.utterance_id = os.str();
    }
    return utt;
}

inline std::vector<SyntheticUtterance> generate_synthetic_corpus(int n_utts, double min_duration_s,
                                                                 double max_duration_s, int n_states,
                                                                 uint64_t seed, double snr_db = 20.0) {
    if (n_states < 2) throw AudioError("generate_synthetic_corpus: n_states must be >= 2");
    if (n_utts < 1) throw AudioError("generate_synthetic_corpus: n_utts must be >= 1");
    if (min_duration_s < 0.3 || max_duration_s > 5.0 || min_duration_s > max_duration_s)
        throw AudioError("generate_synthetic_corpus: durations must lie within [0.3 s, 5 s]");
    std::vector<SyntheticUtterance> corpus;
    corpus.reserve((size_t)n_utts);
    for (int i = 0; i < n_utts; ++i) {
        Rng dur_rng{seed + (uint64_t)i, 0x44555241ULL};
        double dur = dur_rng.uniform(min_duration_s, max_duration_s);
        corpus.push_back(generate_synthetic_utterance(i, dur, n_states, seed, 16000, snr_db));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// corpus manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string utterance_id;
    std::string wav_path;
    std::string label_path;
};

inline void write_corpus(const std::string& dir, const std::vector<SyntheticUtterance>& corpus) {
    std::ofstream manifest(dir + "/manifest.tsv");
    if (!manifest) throw AudioError("write_corpus: cannot open " + dir + "/manifest.tsv");
    for (const auto& utt : corpus) {
        std::string wav_path = dir + "/" + utt.utterance_id + ".wav";
        std::string label_path = dir + "/" + utt.utterance_id + ".labels";
        save_wav(wav_path, utt.waveform);
        std::ofstream lab(label_path);
        for (int l : utt.frame_labels) lab << l << "\n";
        manifest << utt.utterance_id << "\t" << wav_path << "\t" << label_path << "\n";
    }
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AudioError("read_manifest: cannot open " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        if (!std::getline(ls, e.utterance_id, '\t') || !std::getline(ls, e.wav_path, '\t') ||
            !std::getline(ls, e.label_path, '\t'))
            throw AudioError("read_manifest: malformed line: " + line);
        entries.push_back(std::move(e));
    }
    return entries;
}

inline std::vector<int> read_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AudioError("read_labels: cannot open " + path);
    std::vector<int> labels;
    int v;
    while (in >> v) labels.push_back(v);
    return labels;
}

} // namespace w2v
