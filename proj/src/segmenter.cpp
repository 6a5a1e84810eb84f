#include "canilex/segmenter.hpp"

#include "canilex/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>

namespace canilex {

std::set<std::string> default_dog_labels() {
    return {"Dog", "Bark", "Howl", "Growling", "Whimper", "Yip", "Bow-wow", "Animal"};
}

double dynamic_threshold(const FramewiseScore& scores) {
    if (scores.values.empty()) throw Error("dynamic_threshold: empty score track");
    const double peak = *std::max_element(scores.values.begin(), scores.values.end());
    return std::min(0.75 * peak, 0.5);
}

std::vector<SentenceSpan> extract_clips(const FramewiseScore& scores, double threshold) {
    std::vector<SentenceSpan> spans;
    const std::size_t n = scores.values.size();
    std::size_t i = 0;
    while (i < n) {
        if (scores.values[i] < threshold) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && scores.values[j] >= threshold) ++j;
        spans.push_back({static_cast<double>(i) * scores.hop, static_cast<double>(j) * scores.hop,
                         scores.source_id, ""});
        i = j;
    }
    return spans;
}

namespace {

// Joins neighbours for which `joinable(current, next)` holds; input sorted.
template <typename Pred>
std::vector<SentenceSpan> coalesce(std::vector<SentenceSpan> spans, Pred joinable) {
    std::vector<SentenceSpan> out;
    for (auto& s : spans) {
        if (!out.empty() && joinable(out.back(), s)) {
            out.back().end = std::max(out.back().end, s.end);
        } else {
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace

std::vector<SentenceSpan> merge_and_pad(std::span<const SentenceSpan> spans, double gap_max, double pad,
                                        double clip_duration) {
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (!(spans[i].end > spans[i].start)) throw Error("merge_and_pad: span with end <= start");
        if (i > 0 && (spans[i].start < spans[i - 1].start || spans[i].start < spans[i - 1].end)) {
            throw Error("merge_and_pad: input spans must be sorted and non-overlapping");
        }
    }
    std::vector<SentenceSpan> merged = coalesce(
        std::vector<SentenceSpan>(spans.begin(), spans.end()),
        [gap_max](const SentenceSpan& a, const SentenceSpan& b) { return b.start - a.end < gap_max; });
    for (auto& s : merged) {
        s.start = std::max(0.0, s.start - pad);
        s.end = std::min(clip_duration, s.end + pad);
    }
    return coalesce(std::move(merged), [](const SentenceSpan& a, const SentenceSpan& b) { return b.start < a.end; });
}

TagDecision filter_by_tags(const TagScores& tags, const std::set<std::string>& dog_labels, double tag_threshold) {
    if (dog_labels.empty()) throw ConfigError("filter_by_tags: dog label set is empty");
    TagDecision decision;
    const auto dog = tags.find("Dog");
    if (dog == tags.end()) {
        return {false, TagRule::kMissingDogTag, "Dog", "missing dog tag"};
    }
    if (dog->second < tag_threshold) {
        return {false, TagRule::kLowDogScore, "Dog",
                "rule 1: Dog score " + std::to_string(dog->second) + " below " + std::to_string(tag_threshold)};
    }
    // Report the strongest offending label.
    const TagScores::value_type* worst = nullptr;
    for (const auto& entry : tags) {
        if (dog_labels.contains(entry.first) || entry.second <= tag_threshold) continue;
        if (worst == nullptr || entry.second > worst->second) worst = &entry;
    }
    if (worst != nullptr) {
        return {false, TagRule::kForeignLabel, worst->first,
                "rule 2: non-dog label " + worst->first + " scored " + std::to_string(worst->second)};
    }
    decision.reason = "kept";
    return decision;
}

FramewiseScore energy_scores(const EnergyTrack& energy, std::string source_id) {
    FramewiseScore scores;
    scores.hop = energy.hop;
    scores.source_id = std::move(source_id);
    scores.values = energy.values;
    const double peak = scores.values.empty() ? 0.0 : *std::max_element(scores.values.begin(), scores.values.end());
    for (double& v : scores.values) v = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) : 0.0;
    return scores;
}

FramewiseScore load_framewise_scores(const std::filesystem::path& path) {
    const FrameFeatures features = load_embeddings(path);
    if (features.dim() != 1) throw FormatError("framewise scores must have dim = 1");
    FramewiseScore scores;
    scores.hop = features.hop;
    scores.source_id = path.stem().string();
    scores.values.assign(features.matrix.data(), features.matrix.data() + features.matrix.size());
    for (double v : scores.values) {
        if (!(v >= 0.0 && v <= 1.0)) throw FormatError("framewise score outside [0, 1]");
    }
    return scores;
}

void save_framewise_scores(const std::filesystem::path& path, const FramewiseScore& scores) {
    FrameFeatures features;
    features.hop = scores.hop;
    features.frame_duration = scores.hop;
    features.matrix = Eigen::Map<const Eigen::MatrixXd>(scores.values.data(),
                                                        static_cast<Eigen::Index>(scores.values.size()), 1);
    save_embeddings(path, features);
}

std::map<std::string, TagScores> load_tag_scores(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open tag file " + path.string());
    std::map<std::string, TagScores> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto record = nlohmann::json::parse(line);
            TagScores tags;
            for (const auto& [label, score] : record.at("tags").items()) {
                const double v = score.get<double>();
                if (!(v >= 0.0 && v <= 1.0)) throw FormatError("tag score outside [0, 1]");
                tags[label] = v;
            }
            out[record.at("clip_id").get<std::string>()] = std::move(tags);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::set<std::string> load_dog_labels(const std::filesystem::path& path) {
    try {
        const auto doc = nlohmann::json::parse(read_file(path));
        const auto& labels = doc.is_array() ? doc : doc.at("dog_labels");
        auto out = labels.get<std::set<std::string>>();
        if (out.empty()) throw ConfigError("dog label allowlist is empty");
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace canilex
