#include "canilex/combiner.hpp"

#include "canilex/audio.hpp"
#include "canilex/error.hpp"

#include <fstream>
#include <map>

namespace canilex {

std::vector<Run> run_length_encode(std::span<const int> labels) {
    std::vector<Run> runs;
    for (int label : labels) {
        if (!runs.empty() && runs.back().label == label) {
            ++runs.back().n_frames;
        } else {
            runs.push_back({label, 1});
        }
    }
    return runs;
}

std::vector<int> run_length_decode(std::span<const Run> runs) {
    std::vector<int> labels;
    for (const auto& r : runs) labels.insert(labels.end(), r.n_frames, r.label);
    return labels;
}

std::vector<int> combine(std::span<const int> labels, const CombinerConfig& config) {
    if (config.tolerance < 0) throw ConfigError("combine: tolerance must be >= 0");
    std::vector<Run> runs = run_length_encode(labels);
    const auto tolerance = static_cast<std::size_t>(config.tolerance);
    bool changed = true;
    while (changed) {
        changed = false;
        std::size_t i = 1;
        while (i + 1 < runs.size()) {
            if (runs[i].n_frames <= tolerance && runs[i - 1].label == runs[i + 1].label) {
                runs[i - 1].n_frames += runs[i].n_frames + runs[i + 1].n_frames;
                runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(i),
                           runs.begin() + static_cast<std::ptrdiff_t>(i) + 2);
                changed = true;
            } else {
                ++i;
            }
        }
    }
    return run_length_decode(runs);
}

LabelSequence combine(const LabelSequence& labels, const CombinerConfig& config) {
    LabelSequence out = labels;
    out.labels = combine(std::span<const int>(labels.labels), config);
    return out;
}

Transcript to_runs(const LabelSequence& labels) {
    return {run_length_encode(labels.labels), labels.frame_duration, labels.sentence_id, labels.dog_id};
}

LabelSequence from_runs(const Transcript& transcript) {
    return {run_length_decode(transcript.runs), transcript.frame_duration, transcript.sentence_id,
            transcript.dog_id};
}

std::vector<PhonemeLengthStat> phoneme_length_stats(std::span<const Transcript> transcripts) {
    std::map<int, std::vector<double>> lengths;
    for (const auto& t : transcripts) {
        if (t.frame_duration != transcripts.front().frame_duration) {
            throw Error("phoneme_length_stats: mixed frame durations");
        }
        for (const auto& r : t.runs) lengths[r.label].push_back(static_cast<double>(r.n_frames) * t.frame_duration);
    }
    std::vector<PhonemeLengthStat> out;
    for (const auto& [label, xs] : lengths) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(xs.size());
        out.push_back({label, mean, var, xs.size()});
    }
    return out;
}

NoiseLabelSet default_noise_labels() {
    return {2, 3, 4, 5, 6, 8, 13, 15, 18, 19, 25, 35, 36, 38, 39, 45};
}

MaskedTranscript mask_noise(const Transcript& transcript, const NoiseLabelSet& noise) {
    MaskedTranscript out{transcript, {}};
    out.noise.reserve(transcript.runs.size());
    for (const auto& r : transcript.runs) out.noise.push_back(noise.contains(r.label));
    return out;
}

nlohmann::json transcript_to_json(const Transcript& transcript) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : transcript.runs) runs.push_back({r.label, r.n_frames});
    return {{"sentence_id", transcript.sentence_id},
            {"dog_id", transcript.dog_id},
            {"frame_duration", transcript.frame_duration},
            {"runs", std::move(runs)}};
}

Transcript transcript_from_json(const nlohmann::json& doc) {
    try {
        Transcript t;
        t.sentence_id = doc.at("sentence_id").get<std::string>();
        t.dog_id = doc.value("dog_id", std::string{});
        t.frame_duration = doc.at("frame_duration").get<double>();
        if (!(t.frame_duration > 0.0)) throw FormatError("transcript: frame_duration must be positive");
        for (const auto& r : doc.at("runs")) {
            Run run{r.at(0).get<int>(), r.at(1).get<std::size_t>()};
            if (run.n_frames == 0) throw FormatError("transcript: run with zero frames");
            if (!t.runs.empty() && t.runs.back().label == run.label) {
                throw FormatError("transcript: adjacent runs share a label");
            }
            t.runs.push_back(run);
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("transcript: ") + e.what());
    }
}

void write_transcripts(std::ostream& out, std::span<const Transcript> transcripts) {
    for (const auto& t : transcripts) out << transcript_to_json(t).dump() << '\n';
}

std::vector<Transcript> read_transcripts(std::istream& in) {
    std::vector<Transcript> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(transcript_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(std::string("transcripts: ") + e.what());
        }
    }
    return out;
}

void save_transcripts(const std::filesystem::path& path, std::span<const Transcript> transcripts) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    write_transcripts(out, transcripts);
}

std::vector<Transcript> load_transcripts(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return read_transcripts(in);
}

nlohmann::json phoneme_stats_to_json(std::span<const PhonemeLengthStat> stats) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : stats) {
        out.push_back({{"label", s.label}, {"mean_length", s.mean_length}, {"var_length", s.var_length},
                       {"n_runs", s.n_runs}});
    }
    return out;
}

std::vector<PhonemeLengthStat> phoneme_stats_from_json(const nlohmann::json& doc) {
    std::vector<PhonemeLengthStat> out;
    for (const auto& s : doc) {
        out.push_back({s.at("label").get<int>(), s.at("mean_length").get<double>(), s.at("var_length").get<double>(),
                       s.at("n_runs").get<std::size_t>()});
    }
    return out;
}

NoiseLabelSet load_noise_labels(const std::filesystem::path& path) {
    try {
        const auto doc = nlohmann::json::parse(read_file(path));
        return doc.at("noise_labels").get<NoiseLabelSet>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace canilex
