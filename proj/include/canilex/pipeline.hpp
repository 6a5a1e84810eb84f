#pragma once

#include "canilex/annotator.hpp"
#include "canilex/audio.hpp"
#include "canilex/bundle.hpp"
#include "canilex/combiner.hpp"
#include "canilex/quantizer.hpp"
#include "canilex/segmenter.hpp"
#include "canilex/vocab.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace canilex {

struct PipelineConfig {
    FeatureConfig features;
    int k = 50;
    std::uint64_t seed = 7;
    int restarts = 10;
    int max_iters = 300;
    double rel_tol = 1e-6;
    int tolerance = 1;
    int n_min = 2;
    int n_max = 6;
    std::optional<double> vocab_threshold;  // unset: knee of the coverage sweep
    std::vector<double> sweep_thresholds;   // empty: 50 points over [0, max ps]
    std::vector<int> inertia_ks;            // empty: only the trained k
    SegmentConfig segment;
    std::optional<NoiseLabelSet> noise_labels;  // unset: reference set clipped to [0, k)
    bool exclude_noise = false;
    std::string created_at;                 // empty: current UTC time

    void validate() const;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, PipelineConfig base = {});
nlohmann::json pipeline_config_to_json(const PipelineConfig& config);

struct PipelineInput {
    AudioClip clip;
    std::string path;
    std::optional<FramewiseScore> scores;
    std::optional<FrameFeatures> embeddings;
};

struct PipelineResult {
    ModelBundle bundle;
    std::vector<SentenceRecord> sentences;
    std::vector<TagDecision> dropped;  // spans removed by the tag filter
    std::vector<LabelSequence> raw_labels;
    std::vector<Transcript> transcripts;
    NGramTable stats;
    std::vector<SweepPoint> sweep;
    CoverageReport coverage;
    std::vector<InertiaPoint> inertia;
};

// Segment -> features -> quantize-train -> assign -> combine -> stats -> mine -> sweep.
PipelineResult run_pipeline(const PipelineConfig& config, const std::vector<PipelineInput>& inputs,
                            const std::map<std::string, TagScores>& tags = {});

// *.wav under `dir` (sorted). The dog id is the first sub-directory below `dir`,
// or the file-name prefix before '_' for top-level files. Optional sidecars:
// <stem>.scores.dgfv, <stem>.emb.dgfv, and dir/tags.ndjson.
std::vector<PipelineInput> load_pipeline_inputs(const std::filesystem::path& dir, int working_rate);
std::map<std::string, TagScores> load_pipeline_tags(const std::filesystem::path& dir);

// bundle.json, transcripts.ndjson, sentences.json, vocabulary.json,
// coverage.json, sweep.json, inertia_scan.json, stats.json.
void write_pipeline_outputs(const std::filesystem::path& out_dir, const PipelineResult& result);

std::string utc_timestamp();

}  // namespace canilex
