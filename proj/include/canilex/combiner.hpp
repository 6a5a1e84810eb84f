#pragma once

#include "canilex/labels.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <vector>

namespace canilex {

struct CombinerConfig {
    int tolerance = 1;  // longest run that flanking runs may assimilate

    bool operator==(const CombinerConfig&) const = default;
};

/// Phoneme combination. A run no longer than `tolerance` whose left and right
/// neighbours share one label is relabelled to that label. Passes scan left to
/// right, applying each merge immediately, and repeat until nothing changes.
std::vector<int> combine(std::span<const int> labels, const CombinerConfig& config);
LabelSequence combine(const LabelSequence& labels, const CombinerConfig& config);

std::vector<Run> run_length_encode(std::span<const int> labels);
std::vector<int> run_length_decode(std::span<const Run> runs);

Transcript to_runs(const LabelSequence& labels);
LabelSequence from_runs(const Transcript& transcript);

struct PhonemeLengthStat {
    int label = 0;
    double mean_length = 0.0;  // seconds
    double var_length = 0.0;   // seconds^2, population variance
    std::size_t n_runs = 0;

    bool operator==(const PhonemeLengthStat&) const = default;
};

// Labels without runs are omitted; all transcripts must share frame_duration.
std::vector<PhonemeLengthStat> phoneme_length_stats(std::span<const Transcript> transcripts);

using NoiseLabelSet = std::set<int>;

// Noise labels from the reference 50-cluster model's listening study.
NoiseLabelSet default_noise_labels();

struct MaskedTranscript {
    Transcript transcript;
    std::vector<bool> noise;  // one flag per run
};

MaskedTranscript mask_noise(const Transcript& transcript, const NoiseLabelSet& noise);

nlohmann::json transcript_to_json(const Transcript& transcript);
Transcript transcript_from_json(const nlohmann::json& doc);

// Newline-delimited transcript records.
void write_transcripts(std::ostream& out, std::span<const Transcript> transcripts);
std::vector<Transcript> read_transcripts(std::istream& in);
void save_transcripts(const std::filesystem::path& path, std::span<const Transcript> transcripts);
std::vector<Transcript> load_transcripts(const std::filesystem::path& path);

nlohmann::json phoneme_stats_to_json(std::span<const PhonemeLengthStat> stats);
std::vector<PhonemeLengthStat> phoneme_stats_from_json(const nlohmann::json& doc);

NoiseLabelSet load_noise_labels(const std::filesystem::path& path);

}  // namespace canilex
