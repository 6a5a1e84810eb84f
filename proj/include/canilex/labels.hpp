#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace canilex {

// Per-frame phoneme labels for one sentence.
struct LabelSequence {
    std::vector<int> labels;
    double frame_duration = 0.02;
    std::string sentence_id;
    std::string dog_id;

    bool operator==(const LabelSequence&) const = default;
};

struct Run {
    int label = 0;
    std::size_t n_frames = 0;

    bool operator==(const Run&) const = default;
};

// Run-length encoded transcript; adjacent runs carry distinct labels.
struct Transcript {
    std::vector<Run> runs;
    double frame_duration = 0.02;
    std::string sentence_id;
    std::string dog_id;

    std::size_t n_frames() const {
        std::size_t n = 0;
        for (const auto& r : runs) n += r.n_frames;
        return n;
    }
    bool operator==(const Transcript&) const = default;
};

}  // namespace canilex
