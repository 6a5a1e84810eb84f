#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace canilex {

inline constexpr double kLogFloor = 1e-10;
inline constexpr int kWorkingRate = 16000;

struct AudioClip {
    std::vector<double> samples;  // mono, in [-1, 1]
    int sample_rate = kWorkingRate;
    std::string source_id;
    std::string dog_id;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

enum class FeatureKind { kLogMel, kExternalEmbedding };

const char* to_string(FeatureKind kind);

struct FrameFeatures {
    Eigen::MatrixXd matrix;  // n_frames x dim
    double frame_duration = 0.02;
    double hop = 0.02;
    FeatureKind kind = FeatureKind::kLogMel;
    double start_offset = 0.0;

    Eigen::Index n_frames() const { return matrix.rows(); }
    Eigen::Index dim() const { return matrix.cols(); }
};

struct EnergyTrack {
    std::vector<double> values;
    double hop = 0.02;
};

struct FeatureConfig {
    int sample_rate = kWorkingRate;
    int n_mels = 40;
    double frame_duration = 0.02;
    double hop = 0.02;

    bool operator==(const FeatureConfig&) const = default;
};

// Frame geometry in samples for a (frame_duration, hop) pair at a given rate.
struct FrameGrid {
    std::size_t frame_samples = 0;
    std::size_t hop_samples = 0;
    std::size_t fft_size = 0;  // next power of two >= frame_samples

    static FrameGrid make(int sample_rate, double frame_duration, double hop);

    std::size_t n_frames(std::size_t n_samples) const {
        if (n_samples < frame_samples) return 0;
        return (n_samples - frame_samples) / hop_samples + 1;
    }
    std::size_t n_bins() const { return fft_size / 2 + 1; }
};

// WAV I/O. Decoding accepts PCM 8/16/24/32-bit integer and 32/64-bit float,
// any channel count (downmixed by mean).
AudioClip decode_wav(std::string_view bytes, int working_rate = kWorkingRate);
AudioClip load_audio(const std::filesystem::path& path, int working_rate = kWorkingRate);
std::string encode_wav(const AudioClip& clip);  // 16-bit PCM mono
void save_wav(const std::filesystem::path& path, const AudioClip& clip);

// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
std::vector<double> resample(const std::vector<double>& samples, int from_rate, int to_rate);

Eigen::VectorXd hann_window(std::size_t length);

// n_mels x (fft_size/2 + 1) triangular filters on the HTK mel scale, 0 Hz .. Nyquist.
Eigen::MatrixXd mel_filterbank(int n_mels, std::size_t fft_size, int sample_rate);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// |STFT| of Hann-windowed frames, n_frames x n_bins.
Eigen::MatrixXd stft_magnitude(const AudioClip& clip, double frame_duration, double hop);

FrameFeatures compute_logmel(const AudioClip& clip, int n_mels, double frame_duration, double hop);
EnergyTrack compute_energy(const AudioClip& clip, double frame_duration, double hop);
Eigen::MatrixXd compute_spectrogram(const AudioClip& clip, double frame_duration, double hop);

// "DGFV" little-endian container: magic, u32 version, u32 n_frames, u32 dim,
// f64 frame_duration, f64 hop, then n_frames*dim f32 row-major.
FrameFeatures decode_embeddings(std::string_view bytes);
std::string encode_embeddings(const FrameFeatures& features);
FrameFeatures load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const FrameFeatures& features);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace canilex
