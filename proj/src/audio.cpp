#include "canilex/audio.hpp"

#include "canilex/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace canilex {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

template <typename T>
T read_le(std::string_view bytes, std::size_t offset) {
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    return value;
}

template <typename T>
void append_le(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

double decode_sample(std::string_view bytes, std::size_t offset, std::uint16_t format, int bits) {
    if (format == kFormatFloat) {
        if (bits == 32) return static_cast<double>(read_le<float>(bytes, offset));
        return read_le<double>(bytes, offset);
    }
    switch (bits) {
        case 8:
            return (static_cast<double>(static_cast<std::uint8_t>(bytes[offset])) - 128.0) / 128.0;
        case 16:
            return read_le<std::int16_t>(bytes, offset) / 32768.0;
        case 24: {
            std::int32_t v = static_cast<std::uint8_t>(bytes[offset]) |
                             (static_cast<std::uint8_t>(bytes[offset + 1]) << 8) |
                             (static_cast<std::uint8_t>(bytes[offset + 2]) << 16);
            if (v & 0x800000) v -= 0x1000000;
            return v / 8388608.0;
        }
        case 32:
            return read_le<std::int32_t>(bytes, offset) / 2147483648.0;
        default:
            throw AudioFormatError("unsupported bit depth " + std::to_string(bits));
    }
}

void validate_grid_args(double frame_duration, double hop) {
    if (!(hop > 0.0) || !(frame_duration >= hop)) {
        throw ConfigError("frame grid requires frame_duration >= hop > 0");
    }
}

// Hann-windowed frames copied into zero-padded FFT buffers.
template <typename Fn>
void for_each_windowed_frame(const AudioClip& clip, const FrameGrid& grid, Fn&& fn) {
    const Eigen::VectorXd window = hann_window(grid.frame_samples);
    const std::size_t n = grid.n_frames(clip.samples.size());
    std::vector<double> buffer(grid.fft_size, 0.0);
    for (std::size_t f = 0; f < n; ++f) {
        const std::size_t begin = f * grid.hop_samples;
        for (std::size_t i = 0; i < grid.frame_samples; ++i) {
            buffer[i] = clip.samples[begin + i] * window[static_cast<Eigen::Index>(i)];
        }
        fn(f, buffer);
    }
}

}  // namespace

const char* to_string(FeatureKind kind) {
    return kind == FeatureKind::kLogMel ? "logmel" : "external-embedding";
}

FrameGrid FrameGrid::make(int sample_rate, double frame_duration, double hop) {
    if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
    validate_grid_args(frame_duration, hop);
    FrameGrid grid;
    grid.frame_samples = static_cast<std::size_t>(std::llround(frame_duration * sample_rate));
    grid.hop_samples = static_cast<std::size_t>(std::llround(hop * sample_rate));
    if (grid.hop_samples == 0) throw ConfigError("hop shorter than one sample");
    grid.fft_size = std::bit_ceil(grid.frame_samples);
    return grid;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

AudioClip decode_wav(std::string_view bytes, int working_rate) {
    if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") {
        throw AudioFormatError("unsupported format");
    }
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t bits = 0;
    bool have_fmt = false;
    std::string_view data;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string_view id = bytes.substr(pos, 4);
        const std::uint32_t size = read_le<std::uint32_t>(bytes, pos + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
        if (id == "fmt ") {
            if (avail < 16) throw AudioFormatError("truncated fmt chunk");
            format = read_le<std::uint16_t>(bytes, body);
            channels = read_le<std::uint16_t>(bytes, body + 2);
            rate = read_le<std::uint32_t>(bytes, body + 4);
            bits = read_le<std::uint16_t>(bytes, body + 14);
            if (format == kFormatExtensible) {
                if (avail < 26) throw AudioFormatError("truncated extensible fmt chunk");
                format = read_le<std::uint16_t>(bytes, body + 24);
            }
            have_fmt = true;
        } else if (id == "data") {
            data = bytes.substr(body, avail);
            have_data = true;
        }
        pos = body + size + (size & 1u);
    }
    if (!have_fmt || !have_data) throw AudioFormatError("unsupported format: missing fmt or data chunk");
    if (format != kFormatPcm && format != kFormatFloat) {
        throw AudioFormatError("unsupported codec " + std::to_string(format));
    }
    if (format == kFormatFloat && bits != 32 && bits != 64) {
        throw AudioFormatError("unsupported float width " + std::to_string(bits));
    }
    if (format == kFormatPcm && bits != 8 && bits != 16 && bits != 24 && bits != 32) {
        throw AudioFormatError("unsupported bit depth " + std::to_string(bits));
    }
    if (channels == 0 || rate == 0) throw AudioFormatError("invalid fmt chunk");

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t n = data.size() / frame_bytes;
    if (n == 0) throw AudioFormatError("zero-length audio");

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            acc += decode_sample(data, i * frame_bytes + c * bytes_per_sample, format, bits);
        }
        clip.samples[i] = std::clamp(acc / channels, -1.0, 1.0);
    }
    if (working_rate > 0 && clip.sample_rate != working_rate) {
        clip.samples = resample(clip.samples, clip.sample_rate, working_rate);
        clip.sample_rate = working_rate;
    }
    return clip;
}

AudioClip load_audio(const std::filesystem::path& path, int working_rate) {
    std::string bytes;
    try {
        bytes = read_file(path);
    } catch (const Error& e) {
        throw Error(std::string("unreadable audio file: ") + e.what());
    }
    AudioClip clip = decode_wav(bytes, working_rate);
    clip.source_id = path.stem().string();
    return clip;
}

std::string encode_wav(const AudioClip& clip) {
    const auto n = static_cast<std::uint32_t>(clip.samples.size());
    std::string out;
    out.reserve(44 + 2 * n);
    out += "RIFF";
    append_le<std::uint32_t>(out, 36 + 2 * n);
    out += "WAVEfmt ";
    append_le<std::uint32_t>(out, 16);
    append_le<std::uint16_t>(out, kFormatPcm);
    append_le<std::uint16_t>(out, 1);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
    append_le<std::uint16_t>(out, 2);
    append_le<std::uint16_t>(out, 16);
    out += "data";
    append_le<std::uint32_t>(out, 2 * n);
    for (double s : clip.samples) {
        append_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0)));
    }
    return out;
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip) {
    write_file(path, encode_wav(clip));
}

std::vector<double> resample(const std::vector<double>& samples, int from_rate, int to_rate) {
    if (from_rate <= 0 || to_rate <= 0) throw ConfigError("sample rates must be positive");
    if (from_rate == to_rate || samples.empty()) return samples;

    constexpr double kZeroCrossings = 32.0;
    constexpr double kBeta = 8.6;
    const double ratio = static_cast<double>(to_rate) / from_rate;
    const double cutoff = std::min(1.0, ratio);  // relative to the input Nyquist
    const double half_width = kZeroCrossings / cutoff;
    const double norm = std::cyl_bessel_i(0.0, kBeta);

    const auto n_in = static_cast<std::ptrdiff_t>(samples.size());
    const auto n_out = static_cast<std::size_t>(std::llround(samples.size() * ratio));
    std::vector<double> out(n_out, 0.0);
    for (std::size_t j = 0; j < n_out; ++j) {
        const double t = j / ratio;
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
        const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
        double acc = 0.0;
        for (std::ptrdiff_t i = lo; i <= hi; ++i) {
            const double x = t - static_cast<double>(i);
            const double r = x / half_width;
            const double win = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
            const double arg = std::numbers::pi * cutoff * x;
            const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
            acc += samples[static_cast<std::size_t>(i)] * cutoff * sinc * win;
        }
        out[j] = std::clamp(acc, -1.0, 1.0);
    }
    return out;
}

Eigen::VectorXd hann_window(std::size_t length) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(length));
    for (std::size_t i = 0; i < length; ++i) {
        w[static_cast<Eigen::Index>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
    }
    return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXd mel_filterbank(int n_mels, std::size_t fft_size, int sample_rate) {
    if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
    const auto n_bins = static_cast<Eigen::Index>(fft_size / 2 + 1);
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / (n_mels + 1));
    }
    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
    for (int m = 0; m < n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (Eigen::Index b = 0; b < n_bins; ++b) {
            const double hz = static_cast<double>(b) * sample_rate / static_cast<double>(fft_size);
            if (hz > left && hz <= center) {
                fb(m, b) = (hz - left) / (center - left);
            } else if (hz > center && hz < right) {
                fb(m, b) = (right - hz) / (right - center);
            }
        }
    }
    return fb;
}

Eigen::MatrixXd stft_magnitude(const AudioClip& clip, double frame_duration, double hop) {
    const FrameGrid grid = FrameGrid::make(clip.sample_rate, frame_duration, hop);
    const std::size_t n = grid.n_frames(clip.samples.size());
    Eigen::MatrixXd mag(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid.n_bins()));
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<std::complex<double>> spectrum;
    for_each_windowed_frame(clip, grid, [&](std::size_t f, const std::vector<double>& frame) {
        fft.fwd(spectrum, frame);
        for (std::size_t b = 0; b < grid.n_bins(); ++b) {
            mag(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) = std::abs(spectrum[b]);
        }
    });
    return mag;
}

FrameFeatures compute_logmel(const AudioClip& clip, int n_mels, double frame_duration, double hop) {
    if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
    const FrameGrid grid = FrameGrid::make(clip.sample_rate, frame_duration, hop);
    const Eigen::MatrixXd fb = mel_filterbank(n_mels, grid.fft_size, clip.sample_rate);
    const Eigen::MatrixXd power = stft_magnitude(clip, frame_duration, hop).array().square();

    FrameFeatures features;
    features.frame_duration = frame_duration;
    features.hop = hop;
    features.kind = FeatureKind::kLogMel;
    features.matrix = ((power * fb.transpose()).array() + kLogFloor).log().matrix();
    if (power.rows() == 0) features.matrix.resize(0, n_mels);
    return features;
}

EnergyTrack compute_energy(const AudioClip& clip, double frame_duration, double hop) {
    const FrameGrid grid = FrameGrid::make(clip.sample_rate, frame_duration, hop);
    const std::size_t n = grid.n_frames(clip.samples.size());
    EnergyTrack track;
    track.hop = hop;
    track.values.resize(n);
    for (std::size_t f = 0; f < n; ++f) {
        const Eigen::Map<const Eigen::VectorXd> frame(clip.samples.data() + f * grid.hop_samples,
                                                      static_cast<Eigen::Index>(grid.frame_samples));
        track.values[f] = std::sqrt(frame.squaredNorm() / static_cast<double>(grid.frame_samples));
    }
    return track;
}

Eigen::MatrixXd compute_spectrogram(const AudioClip& clip, double frame_duration, double hop) {
    return (20.0 * (stft_magnitude(clip, frame_duration, hop).array() + kLogFloor).log10()).matrix();
}

namespace {
constexpr std::string_view kEmbeddingMagic = "DGFV";
constexpr std::uint32_t kEmbeddingVersion = 1;
constexpr std::size_t kEmbeddingHeader = 4 + 4 + 4 + 4 + 8 + 8;
}  // namespace

FrameFeatures decode_embeddings(std::string_view bytes) {
    if (bytes.size() < kEmbeddingHeader || bytes.substr(0, 4) != kEmbeddingMagic) {
        throw FormatError("bad magic: not a DGFV container");
    }
    const auto version = read_le<std::uint32_t>(bytes, 4);
    if (version != kEmbeddingVersion) throw FormatError("unsupported DGFV version " + std::to_string(version));
    const auto n_frames = read_le<std::uint32_t>(bytes, 8);
    const auto dim = read_le<std::uint32_t>(bytes, 12);
    const auto frame_duration = read_le<double>(bytes, 16);
    const auto hop = read_le<double>(bytes, 24);
    if (dim == 0) throw FormatError("dimension mismatch: dim must be >= 1");
    if (!(hop > 0.0) || !(frame_duration > 0.0)) throw FormatError("invalid frame timing in header");

    const std::size_t expected = kEmbeddingHeader + std::size_t{n_frames} * dim * sizeof(float);
    if (bytes.size() < expected) throw FormatError("truncated payload");
    if (bytes.size() > expected) throw FormatError("dimension mismatch: payload larger than header");

    FrameFeatures features;
    features.kind = FeatureKind::kExternalEmbedding;
    features.frame_duration = frame_duration;
    features.hop = hop;
    features.matrix.resize(n_frames, dim);
    std::size_t offset = kEmbeddingHeader;
    for (std::uint32_t r = 0; r < n_frames; ++r) {
        for (std::uint32_t c = 0; c < dim; ++c, offset += sizeof(float)) {
            features.matrix(r, c) = read_le<float>(bytes, offset);
        }
    }
    return features;
}

std::string encode_embeddings(const FrameFeatures& features) {
    std::string out(kEmbeddingMagic);
    append_le<std::uint32_t>(out, kEmbeddingVersion);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.n_frames()));
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.dim()));
    append_le<double>(out, features.frame_duration);
    append_le<double>(out, features.hop);
    out.reserve(out.size() + features.matrix.size() * sizeof(float));
    for (Eigen::Index r = 0; r < features.n_frames(); ++r) {
        for (Eigen::Index c = 0; c < features.dim(); ++c) {
            append_le<float>(out, static_cast<float>(features.matrix(r, c)));
        }
    }
    return out;
}

FrameFeatures load_embeddings(const std::filesystem::path& path) {
    return decode_embeddings(read_file(path));
}

void save_embeddings(const std::filesystem::path& path, const FrameFeatures& features) {
    write_file(path, encode_embeddings(features));
}

}  // namespace canilex
