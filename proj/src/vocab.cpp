#include "canilex/vocab.hpp"

#include "canilex/error.hpp"

#include <algorithm>

namespace canilex {

std::set<std::string> Corpus::dogs() const {
    std::set<std::string> out;
    for (const auto& s : sentences) out.insert(s.dog_id);
    return out;
}

Corpus corpus_from_transcripts(std::span<const Transcript> transcripts, const NoiseLabelSet& exclude) {
    Corpus corpus;
    for (const auto& t : transcripts) {
        CorpusSentence s{t.sentence_id, t.dog_id, {}, {}};
        for (const auto& r : t.runs) {
            if (exclude.contains(r.label)) continue;
            s.symbols.push_back(r.label);
            s.durations.push_back(static_cast<double>(r.n_frames) * t.frame_duration);
        }
        if (!s.symbols.empty()) corpus.sentences.push_back(std::move(s));
    }
    return corpus;
}

std::vector<NGramOccurrence> enumerate_ngrams(const Corpus& corpus, int n) {
    if (n < 1) throw ConfigError("enumerate_ngrams: n must be >= 1");
    const auto order = static_cast<std::size_t>(n);
    std::vector<NGramOccurrence> out;
    for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
        const auto& seq = corpus.sentences[s].symbols;
        if (seq.size() < order) continue;
        for (std::size_t i = 0; i + order <= seq.size(); ++i) {
            out.push_back({NGram(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                 seq.begin() + static_cast<std::ptrdiff_t>(i + order)),
                           s, i});
        }
    }
    return out;
}

NGramTable score_ngrams(const Corpus& corpus, int n_min, int n_max) {
    if (n_min < 1 || n_min > n_max) throw ConfigError("score_ngrams: need 1 <= n_min <= n_max");
    if (corpus.sentences.empty()) throw Error("score_ngrams: empty corpus");
    NGramTable table;
    for (int n = n_min; n <= n_max; ++n) {
        std::map<NGram, std::pair<std::size_t, std::set<std::string>>> counts;
        std::size_t total = 0;
        for (auto& occ : enumerate_ngrams(corpus, n)) {
            auto& slot = counts[std::move(occ.ngram)];
            ++slot.first;
            slot.second.insert(corpus.sentences[occ.sentence].dog_id);
            ++total;
        }
        for (auto& [gram, entry] : counts) {
            NGramStat stat;
            stat.ngram = gram;
            stat.count = entry.first;
            stat.f = static_cast<double>(entry.first) / static_cast<double>(total);
            stat.delta = static_cast<int>(entry.second.size());
            stat.ps = stat.f * static_cast<double>(stat.delta);
            table.emplace(gram, std::move(stat));
        }
    }
    return table;
}

bool is_contiguous_subsequence(std::span<const int> needle, std::span<const int> haystack) {
    if (needle.size() > haystack.size()) return false;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

namespace {

bool word_order(const NGramStat& a, const NGramStat& b) {
    if (a.order() != b.order()) return a.order() > b.order();
    if (a.ps != b.ps) return a.ps > b.ps;
    return a.ngram < b.ngram;
}

}  // namespace

Vocabulary build_vocabulary(const NGramTable& stats, double threshold, int n_max, int n_min) {
    if (threshold < 0.0) throw ConfigError("build_vocabulary: threshold must be >= 0");
    std::vector<const NGramStat*> candidates;
    for (const auto& [gram, stat] : stats) {
        if (stat.order() >= n_min && stat.order() <= n_max && stat.ps >= threshold) candidates.push_back(&stat);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const NGramStat* a, const NGramStat* b) { return word_order(*a, *b); });

    Vocabulary vocab;
    vocab.threshold = threshold;
    for (const NGramStat* c : candidates) {
        const bool subsumed = std::any_of(vocab.words.begin(), vocab.words.end(), [&](const NGramStat& w) {
            return w.order() > c->order() && is_contiguous_subsequence(c->ngram, w.ngram);
        });
        if (!subsumed) vocab.words.push_back(*c);
    }
    return vocab;
}

WordMatcher::WordMatcher(const Vocabulary& vocabulary) {
    std::set<std::size_t, std::greater<>> lengths;
    for (std::size_t i = 0; i < vocabulary.words.size(); ++i) {
        index_.emplace(vocabulary.words[i].ngram, i);
        lengths.insert(vocabulary.words[i].ngram.size());
    }
    lengths_.assign(lengths.begin(), lengths.end());
}

std::vector<WordMatch> WordMatcher::match(std::span<const int> symbols) const {
    std::vector<WordMatch> out;
    std::size_t i = 0;
    NGram probe;
    while (i < symbols.size()) {
        bool hit = false;
        for (std::size_t len : lengths_) {
            if (i + len > symbols.size()) continue;
            probe.assign(symbols.begin() + static_cast<std::ptrdiff_t>(i),
                         symbols.begin() + static_cast<std::ptrdiff_t>(i + len));
            if (const auto it = index_.find(probe); it != index_.end()) {
                out.push_back({it->second, i, i + len});
                i += len;
                hit = true;
                break;
            }
        }
        if (!hit) ++i;
    }
    return out;
}

CoverageReport coverage(const Corpus& corpus, const Vocabulary& vocabulary) {
    const WordMatcher matcher(vocabulary);
    CoverageReport report;
    for (const auto& s : corpus.sentences) {
        SentenceCoverage sc{s.sentence_id, matcher.match(s.symbols)};
        report.total_positions += s.symbols.size();
        for (double d : s.durations) report.total_duration += d;
        for (const auto& m : sc.matches) {
            report.covered_positions += m.end - m.begin;
            for (std::size_t p = m.begin; p < m.end; ++p) report.covered_duration += s.durations[p];
        }
        report.sentences.push_back(std::move(sc));
    }
    if (report.total_positions > 0) {
        report.phoneme_coverage =
            static_cast<double>(report.covered_positions) / static_cast<double>(report.total_positions);
    }
    if (report.total_duration > 0.0) {
        report.phone_coverage = std::min(1.0, report.covered_duration / report.total_duration);
    }
    return report;
}

std::vector<SweepPoint> threshold_sweep(const NGramTable& stats, const Corpus& corpus,
                                        std::span<const double> thresholds, int n_max, int n_min) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw ConfigError("threshold_sweep: thresholds must be ascending");
    }
    std::vector<SweepPoint> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        const Vocabulary vocab = build_vocabulary(stats, t, n_max, n_min);
        const CoverageReport report = coverage(corpus, vocab);
        out.push_back({t, report.phoneme_coverage, report.phone_coverage, vocab.words.size()});
    }
    return out;
}

std::vector<double> default_sweep_thresholds(const NGramTable& stats, std::size_t count) {
    double top = 0.0;
    for (const auto& [gram, stat] : stats) top = std::max(top, stat.ps);
    std::vector<double> out;
    if (count == 0) return out;
    if (count == 1) return {0.0};
    for (std::size_t i = 0; i < count; ++i) out.push_back(top * static_cast<double>(i) / static_cast<double>(count - 1));
    return out;
}

double knee_threshold(std::span<const SweepPoint> sweep) {
    if (sweep.empty()) throw Error("knee_threshold: empty sweep");
    const double x0 = sweep.front().threshold;
    const double x1 = sweep.back().threshold;
    double y_lo = sweep.front().phone_coverage, y_hi = y_lo;
    for (const auto& p : sweep) {
        y_lo = std::min(y_lo, p.phone_coverage);
        y_hi = std::max(y_hi, p.phone_coverage);
    }
    if (x1 <= x0 || y_hi <= y_lo) return x0;
    double best = -1.0;
    double knee = x0;
    for (const auto& p : sweep) {
        const double score = (p.threshold - x0) / (x1 - x0) + (p.phone_coverage - y_lo) / (y_hi - y_lo);
        if (score > best) {
            best = score;
            knee = p.threshold;
        }
    }
    return knee;
}

nlohmann::json vocabulary_to_json(const Vocabulary& vocabulary) {
    nlohmann::json words = nlohmann::json::array();
    for (const auto& w : vocabulary.words) {
        words.push_back({{"ngram", w.ngram}, {"count", w.count}, {"f", w.f}, {"delta", w.delta}, {"ps", w.ps}});
    }
    return {{"threshold", vocabulary.threshold}, {"words", std::move(words)}};
}

Vocabulary vocabulary_from_json(const nlohmann::json& doc) {
    try {
        Vocabulary v;
        v.threshold = doc.at("threshold").get<double>();
        for (const auto& w : doc.at("words")) {
            NGramStat s;
            s.ngram = w.at("ngram").get<NGram>();
            s.count = w.at("count").get<std::size_t>();
            s.f = w.at("f").get<double>();
            s.delta = w.at("delta").get<int>();
            s.ps = w.at("ps").get<double>();
            if (s.ngram.empty()) throw FormatError("vocabulary: empty ngram");
            v.words.push_back(std::move(s));
        }
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("vocabulary: ") + e.what());
    }
}

nlohmann::json coverage_to_json(const CoverageReport& report, const Vocabulary& vocabulary) {
    nlohmann::json sentences = nlohmann::json::array();
    for (const auto& s : report.sentences) {
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& m : s.matches) {
            spans.push_back({{"ngram", vocabulary.words.at(m.word).ngram}, {"begin", m.begin}, {"end", m.end}});
        }
        sentences.push_back({{"sentence_id", s.sentence_id}, {"spans", std::move(spans)}});
    }
    return {{"phoneme_coverage", report.phoneme_coverage},
            {"phone_coverage", report.phone_coverage},
            {"covered_positions", report.covered_positions},
            {"total_positions", report.total_positions},
            {"covered_duration", report.covered_duration},
            {"total_duration", report.total_duration},
            {"sentences", std::move(sentences)}};
}

nlohmann::json sweep_to_json(std::span<const SweepPoint> sweep) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : sweep) {
        out.push_back({{"threshold", p.threshold},
                       {"phoneme_coverage", p.phoneme_coverage},
                       {"phone_coverage", p.phone_coverage},
                       {"vocabulary_size", p.vocabulary_size}});
    }
    return out;
}

}  // namespace canilex
