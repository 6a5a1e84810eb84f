#include "canilex/pipeline.hpp"

#include "canilex/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

namespace canilex {

void PipelineConfig::validate() const {
    if (features.sample_rate <= 0) throw ConfigError("sample_rate must be positive");
    if (features.n_mels < 1) throw ConfigError("n_mels must be >= 1");
    if (!(features.hop > 0.0) || features.frame_duration < features.hop) {
        throw ConfigError("frame grid requires frame_duration >= hop > 0");
    }
    if (k < 1) throw ConfigError("k must be >= 1");
    if (restarts < 1) throw ConfigError("restarts must be >= 1");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(rel_tol >= 0.0)) throw ConfigError("rel_tol must be >= 0");
    if (tolerance < 0) throw ConfigError("tolerance must be >= 0");
    if (n_min < 1 || n_min > n_max) throw ConfigError("need 1 <= n_min <= n_max");
    if (vocab_threshold && *vocab_threshold < 0.0) throw ConfigError("vocab_threshold must be >= 0");
    if (!std::is_sorted(sweep_thresholds.begin(), sweep_thresholds.end())) {
        throw ConfigError("sweep_thresholds must be ascending");
    }
    if (segment.gap_max < 0.0 || segment.pad < 0.0) throw ConfigError("gap_max and pad must be >= 0");
    if (segment.tag_threshold < 0.0 || segment.tag_threshold > 1.0) throw ConfigError("tag_threshold outside [0, 1]");
    if (segment.dog_labels.empty()) throw ConfigError("dog_labels must not be empty");
    if (noise_labels) {
        for (int label : *noise_labels) {
            if (label < 0 || label >= k) throw ConfigError("noise label outside [0, k)");
        }
    }
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, PipelineConfig c) {
    try {
        if (doc.contains("features")) {
            const auto& f = doc.at("features");
            c.features.sample_rate = f.value("sample_rate", c.features.sample_rate);
            c.features.n_mels = f.value("n_mels", c.features.n_mels);
            c.features.frame_duration = f.value("frame_duration", c.features.frame_duration);
            c.features.hop = f.value("hop", c.features.hop);
        }
        c.k = doc.value("k", c.k);
        c.seed = doc.value("seed", c.seed);
        c.restarts = doc.value("restarts", c.restarts);
        c.max_iters = doc.value("max_iters", c.max_iters);
        c.rel_tol = doc.value("rel_tol", c.rel_tol);
        c.tolerance = doc.value("tolerance", c.tolerance);
        c.n_min = doc.value("n_min", c.n_min);
        c.n_max = doc.value("n_max", c.n_max);
        if (doc.contains("vocab_threshold")) {
            const auto& t = doc.at("vocab_threshold");
            if (t.is_number()) {
                c.vocab_threshold = t.get<double>();
            } else if (t.is_null() || (t.is_string() && t.get<std::string>() == "knee")) {
                c.vocab_threshold.reset();
            } else {
                throw ConfigError("vocab_threshold must be a number or \"knee\"");
            }
        }
        c.sweep_thresholds = doc.value("sweep_thresholds", c.sweep_thresholds);
        c.inertia_ks = doc.value("inertia_ks", c.inertia_ks);
        c.segment.gap_max = doc.value("gap_max", c.segment.gap_max);
        c.segment.pad = doc.value("pad", c.segment.pad);
        c.segment.tag_threshold = doc.value("tag_threshold", c.segment.tag_threshold);
        c.segment.dog_labels = doc.value("dog_labels", c.segment.dog_labels);
        if (doc.contains("noise_labels")) c.noise_labels = doc.at("noise_labels").get<NoiseLabelSet>();
        c.exclude_noise = doc.value("exclude_noise", c.exclude_noise);
        c.created_at = doc.value("created_at", c.created_at);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
    nlohmann::json doc = {
        {"features",
         {{"sample_rate", c.features.sample_rate},
          {"n_mels", c.features.n_mels},
          {"frame_duration", c.features.frame_duration},
          {"hop", c.features.hop}}},
        {"k", c.k},
        {"seed", c.seed},
        {"restarts", c.restarts},
        {"max_iters", c.max_iters},
        {"rel_tol", c.rel_tol},
        {"tolerance", c.tolerance},
        {"n_min", c.n_min},
        {"n_max", c.n_max},
        {"sweep_thresholds", c.sweep_thresholds},
        {"inertia_ks", c.inertia_ks},
        {"gap_max", c.segment.gap_max},
        {"pad", c.segment.pad},
        {"tag_threshold", c.segment.tag_threshold},
        {"dog_labels", c.segment.dog_labels},
        {"exclude_noise", c.exclude_noise},
    };
    doc["vocab_threshold"] = c.vocab_threshold ? nlohmann::json(*c.vocab_threshold) : nlohmann::json("knee");
    if (c.noise_labels) doc["noise_labels"] = *c.noise_labels;
    return doc;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

template <typename Fn>
auto stage(const char* name, const std::string& id, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, id, e.what());
    }
}

FrameFeatures sentence_features(const PipelineInput& input, const SentenceSpan& span, const FeatureConfig& fc) {
    if (input.embeddings) {
        const FrameFeatures& emb = *input.embeddings;
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < emb.n_frames(); ++i) {
            const double t = static_cast<double>(i) * emb.hop;
            if (t >= span.start && t + emb.frame_duration <= span.end + 1e-9) rows.push_back(i);
        }
        FrameFeatures out = emb;
        out.matrix.resize(static_cast<Eigen::Index>(rows.size()), emb.dim());
        for (std::size_t r = 0; r < rows.size(); ++r) out.matrix.row(static_cast<Eigen::Index>(r)) = emb.matrix.row(rows[r]);
        out.start_offset = rows.empty() ? span.start : static_cast<double>(rows.front()) * emb.hop;
        return out;
    }
    const auto& clip = input.clip;
    const auto begin = static_cast<std::size_t>(std::llround(span.start * clip.sample_rate));
    const auto end = std::min(clip.samples.size(), static_cast<std::size_t>(std::llround(span.end * clip.sample_rate)));
    AudioClip piece;
    piece.sample_rate = clip.sample_rate;
    if (begin < end) piece.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                          clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
    FrameFeatures out = compute_logmel(piece, fc.n_mels, fc.frame_duration, fc.hop);
    out.start_offset = static_cast<double>(begin) / clip.sample_rate;
    return out;
}

std::string corpus_digest(const std::vector<PipelineInput>& inputs) {
    std::string per_clip;
    for (const auto& in : inputs) {
        std::string bytes = in.clip.source_id + '\0' + std::to_string(in.clip.sample_rate) + '\0';
        bytes.append(reinterpret_cast<const char*>(in.clip.samples.data()), in.clip.samples.size() * sizeof(double));
        per_clip += sha256_hex(bytes);
    }
    return "sha256:" + sha256_hex(per_clip);
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const std::vector<PipelineInput>& inputs,
                            const std::map<std::string, TagScores>& tags) {
    config.validate();
    if (inputs.empty()) throw StageError("input", "-", "no input clips");
    const FeatureConfig& fc = config.features;

    PipelineResult result;
    std::vector<FrameFeatures> features;
    std::vector<std::size_t> owner;  // input index per sentence

    for (std::size_t ci = 0; ci < inputs.size(); ++ci) {
        const PipelineInput& input = inputs[ci];
        const std::string& id = input.clip.source_id;
        const auto spans = stage("segment", id, [&] {
            if (input.clip.sample_rate != fc.sample_rate) throw Error("clip not at the working sample rate");
            const FramewiseScore scores =
                input.scores ? *input.scores
                             : energy_scores(compute_energy(input.clip, fc.frame_duration, fc.hop), id);
            if (scores.values.empty()) return std::vector<SentenceSpan>{};
            const double threshold = dynamic_threshold(scores);
            return merge_and_pad(extract_clips(scores, threshold), config.segment.gap_max, config.segment.pad,
                                 input.clip.duration());
        });
        for (std::size_t si = 0; si < spans.size(); ++si) {
            SentenceRecord rec{id + "#" + std::to_string(si), id, input.path, input.clip.dog_id, spans[si].start,
                               spans[si].end};
            const TagScores* t = nullptr;
            if (auto it = tags.find(rec.sentence_id); it != tags.end()) {
                t = &it->second;
            } else if (auto it2 = tags.find(id); it2 != tags.end()) {
                t = &it2->second;
            }
            if (t != nullptr) {
                TagDecision d = stage("segment", rec.sentence_id, [&] {
                    return filter_by_tags(*t, config.segment.dog_labels, config.segment.tag_threshold);
                });
                if (!d.keep) {
                    d.reason = rec.sentence_id + ": " + d.reason;
                    result.dropped.push_back(std::move(d));
                    continue;
                }
            }
            FrameFeatures f = stage("features", rec.sentence_id, [&] { return sentence_features(input, spans[si], fc); });
            if (f.n_frames() == 0) continue;
            rec.start = f.start_offset;
            features.push_back(std::move(f));
            owner.push_back(ci);
            result.sentences.push_back(std::move(rec));
        }
    }
    if (result.sentences.empty()) throw StageError("segment", "corpus", "no sentences extracted");

    const KMeansOptions km{config.k, config.seed, config.restarts, config.max_iters, config.rel_tol};
    const Eigen::MatrixXd frames = stage("quantize-train", "corpus", [&] { return stack_features(features); });
    const Codebook codebook = stage("quantize-train", "corpus", [&] { return train_codebook(frames, km); });

    const CombinerConfig combiner{config.tolerance};
    for (std::size_t s = 0; s < features.size(); ++s) {
        const SentenceRecord& rec = result.sentences[s];
        LabelSequence raw = stage("assign", rec.sentence_id,
                                  [&] { return assign_labels(features[s], codebook, rec.sentence_id, rec.dog_id); });
        result.transcripts.push_back(to_runs(combine(raw, combiner)));
        result.raw_labels.push_back(std::move(raw));
    }

    NoiseLabelSet noise;
    if (config.noise_labels) {
        noise = *config.noise_labels;
    } else {
        for (int label : default_noise_labels()) {
            if (label < config.k) noise.insert(label);
        }
    }

    const auto stats = stage("stats", "corpus", [&] { return phoneme_length_stats(result.transcripts); });
    const Corpus corpus = corpus_from_transcripts(result.transcripts, config.exclude_noise ? noise : NoiseLabelSet{});
    result.stats = stage("mine", "corpus", [&] { return score_ngrams(corpus, config.n_min, config.n_max); });
    const std::vector<double> thresholds =
        config.sweep_thresholds.empty() ? default_sweep_thresholds(result.stats) : config.sweep_thresholds;
    result.sweep = stage("sweep", "corpus",
                         [&] { return threshold_sweep(result.stats, corpus, thresholds, config.n_max, config.n_min); });
    const double threshold = config.vocab_threshold ? *config.vocab_threshold : knee_threshold(result.sweep);
    const Vocabulary vocab = build_vocabulary(result.stats, threshold, config.n_max, config.n_min);
    result.coverage = coverage(corpus, vocab);

    if (config.inertia_ks.empty()) {
        result.inertia.push_back({config.k, codebook.inertia});
    } else {
        result.inertia = stage("inertia-scan", "corpus", [&] {
            return inertia_scan(frames, config.inertia_ks, config.seed, config.restarts, config.max_iters,
                                config.rel_tol);
        });
    }

    ModelBundle& b = result.bundle;
    b.features = fc;
    b.codebook = codebook;
    b.combiner = combiner;
    b.noise_labels = noise;
    b.vocabulary = vocab;
    b.n_min = config.n_min;
    b.n_max = config.n_max;
    b.phoneme_stats = stats;
    b.provenance.seed = config.seed;
    b.provenance.corpus_digest = corpus_digest(inputs);
    b.provenance.n_clips = inputs.size();
    b.provenance.n_sentences = result.sentences.size();
    b.provenance.created_at = config.created_at.empty() ? utc_timestamp() : config.created_at;
    return result;
}

std::vector<PipelineInput> load_pipeline_inputs(const std::filesystem::path& dir, int working_rate) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw StageError("input", dir.string(), "not a directory");
    std::vector<fs::path> wavs;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".wav") wavs.push_back(e.path());
    }
    std::sort(wavs.begin(), wavs.end());
    std::vector<PipelineInput> inputs;
    for (const auto& path : wavs) {
        const fs::path rel = fs::relative(path, dir);
        PipelineInput in;
        in.path = path.string();
        in.clip = stage("load", rel.string(), [&] { return load_audio(path, working_rate); });
        const std::string stem = path.stem().string();
        if (std::distance(rel.begin(), rel.end()) > 1) {
            in.clip.dog_id = rel.begin()->string();
            in.clip.source_id = (rel.parent_path() / stem).generic_string();
        } else {
            in.clip.dog_id = stem.substr(0, stem.find('_'));
            in.clip.source_id = stem;
        }
        const fs::path scores = path.parent_path() / (stem + ".scores.dgfv");
        if (fs::exists(scores)) {
            in.scores = stage("load", rel.string(), [&] { return load_framewise_scores(scores); });
            in.scores->source_id = in.clip.source_id;
        }
        const fs::path emb = path.parent_path() / (stem + ".emb.dgfv");
        if (fs::exists(emb)) in.embeddings = stage("load", rel.string(), [&] { return load_embeddings(emb); });
        inputs.push_back(std::move(in));
    }
    return inputs;
}

std::map<std::string, TagScores> load_pipeline_tags(const std::filesystem::path& dir) {
    const auto path = dir / "tags.ndjson";
    if (!std::filesystem::exists(path)) return {};
    return load_tag_scores(path);
}

void write_pipeline_outputs(const std::filesystem::path& out_dir, const PipelineResult& r) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    save_bundle(out_dir / "bundle.json", r.bundle);
    save_transcripts(out_dir / "transcripts.ndjson", r.transcripts);
    write_file(out_dir / "sentences.json", sentence_records_to_json(r.sentences).dump(1) + "\n");
    write_file(out_dir / "vocabulary.json", vocabulary_to_json(r.bundle.vocabulary).dump(1) + "\n");
    write_file(out_dir / "coverage.json", coverage_to_json(r.coverage, r.bundle.vocabulary).dump(1) + "\n");
    write_file(out_dir / "sweep.json", sweep_to_json(r.sweep).dump(1) + "\n");
    nlohmann::json scan = nlohmann::json::array();
    for (const auto& p : r.inertia) scan.push_back({{"k", p.k}, {"inertia", p.inertia}});
    write_file(out_dir / "inertia_scan.json", scan.dump(1) + "\n");
    write_file(out_dir / "stats.json", phoneme_stats_to_json(r.bundle.phoneme_stats).dump(1) + "\n");
}

}  // namespace canilex
