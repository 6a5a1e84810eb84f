#pragma once

#include "canilex/combiner.hpp"
#include "canilex/labels.hpp"

#include "json.hpp"

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace canilex {

// One sentence at run level: one symbol per run, with each run's duration.
struct CorpusSentence {
    std::string sentence_id;
    std::string dog_id;
    std::vector<int> symbols;
    std::vector<double> durations;  // seconds, parallel to symbols
};

struct Corpus {
    std::vector<CorpusSentence> sentences;

    std::set<std::string> dogs() const;
};

// Run labels become symbols; runs whose label is in `exclude` are dropped.
Corpus corpus_from_transcripts(std::span<const Transcript> transcripts, const NoiseLabelSet& exclude = {});

using NGram = std::vector<int>;

struct NGramOccurrence {
    NGram ngram;
    std::size_t sentence = 0;
    std::size_t position = 0;
};

/// Every window seq[i:i+n], i = 0 .. l-n, of every sentence.
std::vector<NGramOccurrence> enumerate_ngrams(const Corpus& corpus, int n);

struct NGramStat {
    NGram ngram;
    std::size_t count = 0;
    double f = 0.0;  // count / occurrences of the same order
    int delta = 0;   // distinct dogs uttering the gram
    double ps = 0.0; // f * delta

    int order() const { return static_cast<int>(ngram.size()); }
    bool operator==(const NGramStat&) const = default;
};

using NGramTable = std::map<NGram, NGramStat>;

NGramTable score_ngrams(const Corpus& corpus, int n_min = 2, int n_max = 6);

struct Vocabulary {
    double threshold = 0.0;
    std::vector<NGramStat> words;  // by (order desc, ps desc)

    bool operator==(const Vocabulary&) const = default;
};

bool is_contiguous_subsequence(std::span<const int> needle, std::span<const int> haystack);

/// Longest-first selection: orders n_max down to n_min, grams with ps >= threshold
/// that are not contiguous subsequences of an already selected word.
Vocabulary build_vocabulary(const NGramTable& stats, double threshold, int n_max = 6, int n_min = 2);

struct WordMatch {
    std::size_t word = 0;   // index into Vocabulary::words
    std::size_t begin = 0;  // symbol positions [begin, end)
    std::size_t end = 0;
};

// Greedy leftmost, longest-first, non-overlapping matching of vocabulary words.
class WordMatcher {
public:
    explicit WordMatcher(const Vocabulary& vocabulary);

    std::vector<WordMatch> match(std::span<const int> symbols) const;

private:
    std::vector<std::size_t> lengths_;  // distinct word lengths, descending
    std::map<NGram, std::size_t> index_;
};

struct SentenceCoverage {
    std::string sentence_id;
    std::vector<WordMatch> matches;
};

struct CoverageReport {
    double phoneme_coverage = 0.0;
    double phone_coverage = 0.0;
    std::size_t covered_positions = 0;
    std::size_t total_positions = 0;
    double covered_duration = 0.0;
    double total_duration = 0.0;
    std::vector<SentenceCoverage> sentences;
};

CoverageReport coverage(const Corpus& corpus, const Vocabulary& vocabulary);

struct SweepPoint {
    double threshold = 0.0;
    double phoneme_coverage = 0.0;
    double phone_coverage = 0.0;
    std::size_t vocabulary_size = 0;
};

std::vector<SweepPoint> threshold_sweep(const NGramTable& stats, const Corpus& corpus,
                                        std::span<const double> thresholds, int n_max = 6, int n_min = 2);

// `count` evenly spaced thresholds from 0 to the highest ps in the table.
std::vector<double> default_sweep_thresholds(const NGramTable& stats, std::size_t count = 50);

/// Knee of the phone-coverage curve: the point farthest above the chord from
/// (0, 1) to (1, 0) after normalising both axes.
double knee_threshold(std::span<const SweepPoint> sweep);

nlohmann::json vocabulary_to_json(const Vocabulary& vocabulary);
Vocabulary vocabulary_from_json(const nlohmann::json& doc);
nlohmann::json coverage_to_json(const CoverageReport& report, const Vocabulary& vocabulary);
nlohmann::json sweep_to_json(std::span<const SweepPoint> sweep);

}  // namespace canilex
