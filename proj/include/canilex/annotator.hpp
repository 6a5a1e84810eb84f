#pragma once

#include "canilex/audio.hpp"
#include "canilex/bundle.hpp"
#include "canilex/labels.hpp"
#include "canilex/vocab.hpp"

#include "json.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace canilex {

struct AnnotatedRun {
    int label = 0;
    std::size_t n_frames = 0;
    double start = 0.0;  // seconds from clip start
    double end = 0.0;
    bool noise = false;
};

struct WordSpan {
    NGram ngram;
    std::size_t start_run = 0;  // runs [start_run, end_run)
    std::size_t end_run = 0;
    double start = 0.0;
    double end = 0.0;
};

struct AnnotatedTranscript {
    std::string sentence_id;
    double frame_duration = 0.02;  // seconds represented by one label (the hop)
    std::vector<AnnotatedRun> runs;
    std::vector<WordSpan> word_spans;
    std::vector<int> raw_labels;  // before phoneme combination
    EnergyTrack energy;
    Eigen::MatrixXd spectrogram;  // dB, n_frames x n_bins
    double bin_hz = 0.0;
};

/// Features -> nearest-centroid labels -> combination -> noise flags -> word
/// matching, all under the bundle's configuration. Clips shorter than one frame
/// yield an empty transcript.
AnnotatedTranscript transcribe(const AudioClip& clip, const ModelBundle& bundle);

// Labels and runs of a clip without the display tracks.
LabelSequence label_clip(const AudioClip& clip, const ModelBundle& bundle);

nlohmann::json annotated_to_json(const AnnotatedTranscript& transcript);

// A sentence span inside its source recording.
struct SentenceRecord {
    std::string sentence_id;
    std::string source_id;
    std::string source_path;
    std::string dog_id;
    double start = 0.0;
    double end = 0.0;

    bool operator==(const SentenceRecord&) const = default;
};

nlohmann::json sentence_records_to_json(std::span<const SentenceRecord> records);
std::vector<SentenceRecord> sentence_records_from_json(const nlohmann::json& doc);

struct CorpusEntry {
    SentenceRecord record;
    Transcript transcript;
};

struct PhonemeExemplar {
    int label = 0;
    std::string sentence_id;
    std::string source_path;
    double start = 0.0;  // seconds in the source recording
    double end = 0.0;
    std::size_t n_frames = 0;

    bool operator==(const PhonemeExemplar&) const = default;
};

/// Seeded uniform sample (without replacement, at most max_count) of runs of
/// `label` lasting at least min_frames, mapped to source-recording time.
std::vector<PhonemeExemplar> extract_exemplars(std::span<const CorpusEntry> corpus, int label,
                                               std::size_t min_frames = 5, std::size_t max_count = 10,
                                               std::uint64_t seed = 7);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace canilex
