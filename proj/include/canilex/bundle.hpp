#pragma once

#include "canilex/audio.hpp"
#include "canilex/combiner.hpp"
#include "canilex/quantizer.hpp"
#include "canilex/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace canilex {

inline constexpr int kBundleVersion = 1;

struct Provenance {
    std::uint64_t seed = 0;
    std::string corpus_digest;  // sha256 over the training audio
    std::size_t n_clips = 0;
    std::size_t n_sentences = 0;
    std::string created_at;     // not covered by the checksum

    bool operator==(const Provenance&) const = default;
};

// Everything transcription and the service need, persisted as one JSON file.
struct ModelBundle {
    int version = kBundleVersion;
    FeatureConfig features;
    Codebook codebook;
    CombinerConfig combiner;
    NoiseLabelSet noise_labels;
    Vocabulary vocabulary;
    int n_min = 2;
    int n_max = 6;
    std::vector<PhonemeLengthStat> phoneme_stats;
    Provenance provenance;

    bool operator==(const ModelBundle&) const = default;
};

std::string sha256_hex(std::string_view bytes);

// Layout: {"format","version","created_at","checksum","payload"}; the checksum
// is sha256 of the compact payload dump.
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle parse_bundle(std::string_view text);
void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace canilex
