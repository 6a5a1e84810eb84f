#pragma once

#include "canilex/audio.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace canilex {

struct FramewiseScore {
    std::vector<double> values;  // each in [0, 1]
    double hop = 0.02;
    std::string source_id;
};

struct SentenceSpan {
    double start = 0.0;
    double end = 0.0;
    std::string source_id;
    std::string dog_id;

    double duration() const { return end - start; }
    bool operator==(const SentenceSpan&) const = default;
};

using TagScores = std::map<std::string, double>;

std::set<std::string> default_dog_labels();

struct SegmentConfig {
    double gap_max = 1.0;
    double pad = 0.5;
    double tag_threshold = 0.1;
    std::set<std::string> dog_labels = default_dog_labels();
};

/// min(0.75 * max(values), 0.5). Throws on an empty track.
double dynamic_threshold(const FramewiseScore& scores);

/// Maximal runs of frames with value >= threshold, as [first*hop, (last+1)*hop).
std::vector<SentenceSpan> extract_clips(const FramewiseScore& scores, double threshold);

/// Merges spans whose gap is strictly below gap_max, pads each side by `pad`
/// clamped to [0, clip_duration], and re-merges spans that padding made overlap.
/// Input must be sorted by start and non-overlapping.
std::vector<SentenceSpan> merge_and_pad(std::span<const SentenceSpan> spans, double gap_max, double pad,
                                        double clip_duration);

enum class TagRule { kKept, kMissingDogTag, kLowDogScore, kForeignLabel };

struct TagDecision {
    bool keep = true;
    TagRule rule = TagRule::kKept;
    std::string label;  // label that triggered the rule, empty when kept
    std::string reason;
};

TagDecision filter_by_tags(const TagScores& tags, const std::set<std::string>& dog_labels,
                           double tag_threshold = 0.1);

// Fallback detector score: the energy track divided by its maximum.
FramewiseScore energy_scores(const EnergyTrack& energy, std::string source_id);

// Dim-1 DGFV container; values must lie in [0, 1].
FramewiseScore load_framewise_scores(const std::filesystem::path& path);
void save_framewise_scores(const std::filesystem::path& path, const FramewiseScore& scores);

// Newline-delimited {"clip_id": ..., "tags": {...}} records keyed by clip_id.
std::map<std::string, TagScores> load_tag_scores(const std::filesystem::path& path);
std::set<std::string> load_dog_labels(const std::filesystem::path& path);

}  // namespace canilex
