#include "canilex/annotator.hpp"

#include "canilex/combiner.hpp"
#include "canilex/error.hpp"
#include "canilex/quantizer.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <random>

namespace canilex {

namespace {

AudioClip at_rate(const AudioClip& clip, int rate) {
    if (clip.sample_rate == rate) return clip;
    AudioClip out = clip;
    out.samples = resample(clip.samples, clip.sample_rate, rate);
    out.sample_rate = rate;
    return out;
}

}  // namespace

LabelSequence label_clip(const AudioClip& clip, const ModelBundle& bundle) {
    const auto& fc = bundle.features;
    const AudioClip working = at_rate(clip, fc.sample_rate);
    const FrameFeatures features = compute_logmel(working, fc.n_mels, fc.frame_duration, fc.hop);
    if (bundle.codebook.dim() != features.dim()) {
        throw Error("transcribe: codebook dim " + std::to_string(bundle.codebook.dim()) +
                    " does not match log-mel dim " + std::to_string(features.dim()));
    }
    return assign_labels(features, bundle.codebook, clip.source_id, clip.dog_id);
}

AnnotatedTranscript transcribe(const AudioClip& clip, const ModelBundle& bundle) {
    const auto& fc = bundle.features;
    const AudioClip working = at_rate(clip, fc.sample_rate);

    AnnotatedTranscript out;
    out.sentence_id = clip.source_id;
    out.frame_duration = fc.hop;
    const LabelSequence raw = label_clip(working, bundle);
    out.raw_labels = raw.labels;

    const MaskedTranscript masked = mask_noise(to_runs(combine(raw, bundle.combiner)), bundle.noise_labels);
    std::size_t frame = 0;
    std::vector<int> symbols;
    for (std::size_t i = 0; i < masked.transcript.runs.size(); ++i) {
        const Run& r = masked.transcript.runs[i];
        out.runs.push_back({r.label, r.n_frames, static_cast<double>(frame) * fc.hop,
                            static_cast<double>(frame + r.n_frames) * fc.hop, masked.noise[i]});
        symbols.push_back(r.label);
        frame += r.n_frames;
    }

    const WordMatcher matcher(bundle.vocabulary);
    for (const auto& m : matcher.match(symbols)) {
        out.word_spans.push_back({bundle.vocabulary.words[m.word].ngram, m.begin, m.end, out.runs[m.begin].start,
                                  out.runs[m.end - 1].end});
    }

    out.energy = compute_energy(working, fc.frame_duration, fc.hop);
    out.spectrogram = compute_spectrogram(working, fc.frame_duration, fc.hop);
    const FrameGrid grid = FrameGrid::make(fc.sample_rate, fc.frame_duration, fc.hop);
    out.bin_hz = static_cast<double>(fc.sample_rate) / static_cast<double>(grid.fft_size);
    if (out.spectrogram.rows() == 0) out.spectrogram.resize(0, static_cast<Eigen::Index>(grid.n_bins()));
    return out;
}

nlohmann::json annotated_to_json(const AnnotatedTranscript& t) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : t.runs) {
        runs.push_back({{"label", r.label}, {"n_frames", r.n_frames}, {"start", r.start}, {"end", r.end},
                        {"noise", r.noise}});
    }
    nlohmann::json words = nlohmann::json::array();
    for (const auto& w : t.word_spans) {
        words.push_back({{"ngram", w.ngram},
                         {"start_run", w.start_run},
                         {"end_run", w.end_run},
                         {"start", w.start},
                         {"end", w.end}});
    }
    std::string grid;
    grid.reserve(static_cast<std::size_t>(t.spectrogram.size()) * sizeof(float));
    for (Eigen::Index r = 0; r < t.spectrogram.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.spectrogram.cols(); ++c) {
            const auto v = static_cast<float>(t.spectrogram(r, c));
            grid.append(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
    return {{"sentence_id", t.sentence_id},
            {"frame_duration", t.frame_duration},
            {"runs", std::move(runs)},
            {"word_spans", std::move(words)},
            {"raw_labels", t.raw_labels},
            {"energy", {{"hop", t.energy.hop}, {"values", t.energy.values}}},
            {"spectrogram",
             {{"n_frames", t.spectrogram.rows()},
              {"n_bins", t.spectrogram.cols()},
              {"bin_hz", t.bin_hz},
              {"hop", t.frame_duration},
              {"encoding", "base64-f32le"},
              {"data", base64_encode(grid)}}}};
}

nlohmann::json sentence_records_to_json(std::span<const SentenceRecord> records) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : records) {
        out.push_back({{"sentence_id", r.sentence_id},
                       {"source_id", r.source_id},
                       {"source_path", r.source_path},
                       {"dog_id", r.dog_id},
                       {"start", r.start},
                       {"end", r.end}});
    }
    return out;
}

std::vector<SentenceRecord> sentence_records_from_json(const nlohmann::json& doc) {
    std::vector<SentenceRecord> out;
    try {
        for (const auto& r : doc) {
            out.push_back({r.at("sentence_id").get<std::string>(), r.at("source_id").get<std::string>(),
                           r.at("source_path").get<std::string>(), r.value("dog_id", std::string{}),
                           r.at("start").get<double>(), r.at("end").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("sentence records: ") + e.what());
    }
    return out;
}

std::vector<PhonemeExemplar> extract_exemplars(std::span<const CorpusEntry> corpus, int label,
                                               std::size_t min_frames, std::size_t max_count,
                                               std::uint64_t seed) {
    std::vector<PhonemeExemplar> candidates;
    for (const auto& entry : corpus) {
        const double fd = entry.transcript.frame_duration;
        std::size_t frame = 0;
        for (const auto& r : entry.transcript.runs) {
            if (r.label == label && r.n_frames >= min_frames) {
                const double start = entry.record.start + static_cast<double>(frame) * fd;
                candidates.push_back({label, entry.record.sentence_id, entry.record.source_path, start,
                                      start + static_cast<double>(r.n_frames) * fd, r.n_frames});
            }
            frame += r.n_frames;
        }
    }
    std::vector<PhonemeExemplar> out;
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(label + 1)));
    std::sample(candidates.begin(), candidates.end(), std::back_inserter(out), max_count, rng);
    return out;
}

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
    std::string out(3 * text.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) throw FormatError("base64: invalid input");
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

}  // namespace canilex
