// Acceptance run: one PASS/FAIL line per criterion, exit status non-zero when
// any criterion fails.

#include "canilex/annotator.hpp"
#include "canilex/bundle.hpp"
#include "canilex/combiner.hpp"
#include "canilex/pipeline.hpp"
#include "canilex/quantizer.hpp"
#include "canilex/segmenter.hpp"
#include "canilex/service.hpp"
#include "canilex/synth.hpp"
#include "canilex/vocab.hpp"

#include "httplib.h"
#include "oracles.hpp"
#include "synthetic_fixture.hpp"

#include <chrono>
#include <filesystem>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

using namespace canilex;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail = what;
            pass = false;
        }
    }
};

using Corpus2 = std::vector<std::pair<std::string, std::vector<int>>>;

Corpus to_corpus(const Corpus2& xs) {
    Corpus c;
    std::size_t i = 0;
    for (const auto& [dog, seq] : xs) {
        c.sentences.push_back({"s" + std::to_string(i++), dog, seq, std::vector<double>(seq.size(), 0.02)});
    }
    return c;
}

Corpus2 random_corpus(std::mt19937_64& rng, int max_sentences, int max_alphabet, int max_len) {
    std::uniform_int_distribution<int> n_sent(1, max_sentences), alpha(1, max_alphabet), len(1, max_len), n_dogs(1, 4);
    const int a = alpha(rng);
    const int d = n_dogs(rng);
    std::uniform_int_distribution<int> sym(0, a - 1), dog(0, d - 1);
    Corpus2 out;
    for (int s = n_sent(rng); s > 0; --s) {
        std::vector<int> seq(static_cast<std::size_t>(len(rng)));
        for (int& x : seq) x = sym(rng);
        out.push_back({"dog" + std::to_string(dog(rng)), std::move(seq)});
    }
    return out;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------

struct Planted {
    fixture::Synthetic synthetic;
    PipelineResult result;
    double seconds = 0.0;
};

const Planted& planted() {
    static const Planted p = [] {
        Planted out;
        const auto t0 = std::chrono::steady_clock::now();
        out.synthetic = fixture::make_synthetic(10, 20, 11, 10);
        out.result = run_pipeline(out.synthetic.config, out.synthetic.inputs);
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }();
    return p;
}

Outcome criterion1() {
    Outcome o;
    const auto& p = planted();
    const ModelBundle& bundle = p.result.bundle;

    auto by_ps = [](const NGramStat& a, const NGramStat& b) {
        if (a.ps != b.ps) return a.ps > b.ps;
        if (a.order() != b.order()) return a.order() > b.order();
        return a.ngram < b.ngram;
    };
    auto top8 = [&](std::vector<NGramStat> v) {
        std::sort(v.begin(), v.end(), by_ps);
        v.resize(std::min<std::size_t>(8, v.size()));
        return v;
    };
    // Mined words: the vocabulary `mine` emits (knee threshold, longest-first).
    const auto words = top8(bundle.vocabulary.words);
    // Raw table, all orders jointly. Every sub-gram of a template is at least as
    // frequent as the template and f is per-order, so the pieces of longer
    // templates outrank whole shorter ones here; reported for reference only.
    std::vector<NGramStat> table;
    for (const auto& [g, s] : p.result.stats) table.push_back(s);
    const auto raw = top8(std::move(table));

    int recovered = 0, raw_recovered = 0;
    for (const auto& t : p.synthetic.templates) {
        const auto symbols = fixture::template_symbols(t, bundle);
        auto has = [&](const std::vector<NGramStat>& v) {
            return std::any_of(v.begin(), v.end(), [&](const NGramStat& s) { return s.ngram == symbols; });
        };
        recovered += has(words) ? 1 : 0;
        raw_recovered += has(raw) ? 1 : 0;
    }
    const std::string ranks = std::to_string(recovered) + "/5 templates in the top 8 mined words (raw n-gram table: " +
                              std::to_string(raw_recovered) + "/5)";
    o.require(recovered == static_cast<int>(p.synthetic.templates.size()), ranks);

    // Held-out sentences from the same generator, labelled with the trained bundle.
    const auto held = generate_corpus(p.synthetic.templates, p.synthetic.synth, 4, 10, 4242, "held");
    std::vector<Transcript> transcripts;
    for (const auto& s : held) {
        LabelSequence raw = label_clip(s.clip, bundle);
        raw.dog_id = s.clip.dog_id;
        raw.sentence_id = s.clip.source_id;
        transcripts.push_back(to_runs(combine(raw, bundle.combiner)));
    }
    const auto report = coverage(corpus_from_transcripts(transcripts), bundle.vocabulary);
    o.require(report.phone_coverage >= 0.8, "held-out phone coverage " + fmt("%.3f", report.phone_coverage));
    o.require(p.seconds < 60.0, "runtime " + fmt("%.1f s", p.seconds));
    if (o.pass) {
        o.detail = ranks + "; held-out phone coverage " +
                   fmt("%.3f", report.phone_coverage) + " at knee " + fmt("%.4f", bundle.vocabulary.threshold) +
                   "; pipeline " + fmt("%.1f s", p.seconds);
    }
    return o;
}

Outcome criterion2() {
    Outcome o;
    std::mt19937_64 rng(2002);
    for (int trial = 0; trial < 200 && o.pass; ++trial) {
        const Corpus2 xs = random_corpus(rng, 10, 8, 30);
        const auto table = score_ngrams(to_corpus(xs), 1, 4);
        std::size_t expected_size = 0;
        for (int n = 1; n <= 4; ++n) {
            std::size_t total = 0;
            const auto ref = oracle::count_windows(xs, n, total);
            expected_size += ref.size();
            for (const auto& [gram, c] : ref) {
                const auto it = table.find(gram);
                if (it == table.end()) {
                    o.require(false, "missing gram in corpus " + std::to_string(trial));
                    break;
                }
                const double f = static_cast<double>(c.count) / static_cast<double>(total);
                o.require(it->second.count == c.count, "count mismatch");
                o.require(it->second.delta == static_cast<int>(c.dogs.size()), "delta mismatch");
                o.require(std::abs(it->second.f - f) <= 1e-12, "f mismatch");
            }
        }
        o.require(table.size() == expected_size, "extra grams in table");
    }
    if (o.pass) o.detail = "200 corpora match the window-counting oracle";
    return o;
}

Outcome criterion3() {
    Outcome o;
    std::mt19937_64 rng(3003);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 200);
    for (int trial = 0; trial < 1000; ++trial) {
        FramewiseScore s;
        s.values.resize(static_cast<std::size_t>(len(rng)));
        const double scale = u(rng);
        for (double& v : s.values) v = u(rng) * scale;
        double peak = 0.0;
        for (double v : s.values) peak = v > peak ? v : peak;
        const double expected = 0.75 * peak < 0.5 ? 0.75 * peak : 0.5;
        o.require(dynamic_threshold(s) == expected, "formula mismatch on track " + std::to_string(trial));
    }
    FramewiseScore a;
    a.values = {0.1, 0.8, 0.2};
    FramewiseScore b;
    b.values = {0.1, 0.4, 0.2};
    o.require(dynamic_threshold(a) == 0.5, "max 0.8 did not give 0.5");
    o.require(std::abs(dynamic_threshold(b) - 0.3) <= 1e-15, "max 0.4 did not give 0.3");
    if (o.pass) o.detail = "1000 tracks exact; 0.8 -> 0.5, 0.4 -> 0.3";
    return o;
}

Outcome criterion4() {
    Outcome o;
    std::mt19937_64 rng(4004);
    std::uniform_int_distribution<int> len(0, 50), alpha(1, 6), tol(0, 3);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<int> x(static_cast<std::size_t>(len(rng)));
        std::uniform_int_distribution<int> sym(0, alpha(rng) - 1);
        for (int& v : x) v = sym(rng);
        const CombinerConfig cfg{tol(rng)};
        const auto y = combine(std::span<const int>(x), cfg);
        o.require(y.size() == x.size(), "length changed");
        o.require(combine(std::span<const int>(y), cfg) == y, "not idempotent");
        o.require(run_length_encode(y).size() <= run_length_encode(x).size(), "run count increased");
        o.require(combine(std::span<const int>(x), CombinerConfig{0}) == x, "tolerance 0 not identity");
    }
    const std::vector<int> ex1{27, 27, 27, 5, 27, 27};
    const std::vector<int> ex2{1, 1, 2, 2, 1, 1};
    o.require(combine(std::span<const int>(ex1), CombinerConfig{1}) == std::vector<int>(6, 27), "[27,27,27,5,27,27]");
    o.require(combine(std::span<const int>(ex2), CombinerConfig{1}) == ex2, "[a,a,b,b,a,a]");
    if (o.pass) o.detail = "1000 sequences; both published examples";
    return o;
}

Outcome criterion5() {
    Outcome o;
    std::normal_distribution<double> g;
    for (int run = 0; run < 100; ++run) {
        std::mt19937_64 rng(5000 + static_cast<std::uint64_t>(run));
        Eigen::MatrixXd x(200, 4);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
        std::vector<KMeansTrace> traces;
        train_codebook(x, {2 + run % 9, static_cast<std::uint64_t>(run), 1, 300, 0.0}, &traces);
        for (const auto& t : traces) {
            for (std::size_t i = 1; i < t.inertia.size(); ++i) {
                o.require(t.inertia[i] <= t.inertia[i - 1], "inertia rose in run " + std::to_string(run));
            }
        }
    }

    std::mt19937_64 rng(5555);
    Codebook cb;
    cb.centroids.resize(20, 6);
    for (Eigen::Index i = 0; i < cb.centroids.size(); ++i) cb.centroids.data()[i] = g(rng);
    Eigen::MatrixXd frames(10000, 6);
    for (Eigen::Index i = 0; i < frames.size(); ++i) frames.data()[i] = g(rng);
    const auto labels = assign_labels(frames, cb);
    std::vector<std::vector<double>> cs(20);
    for (int c = 0; c < 20; ++c) {
        for (int d = 0; d < 6; ++d) cs[static_cast<std::size_t>(c)].push_back(cb.centroids(c, d));
    }
    std::size_t mismatches = 0;
    for (Eigen::Index i = 0; i < frames.rows(); ++i) {
        std::vector<double> row(6);
        for (int d = 0; d < 6; ++d) row[static_cast<std::size_t>(d)] = frames(i, d);
        mismatches += labels[static_cast<std::size_t>(i)] != oracle::nearest(row, cs) ? 1 : 0;
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " assignment mismatches");

    Eigen::MatrixXd blobs(200, 2);
    std::normal_distribution<double> tight(0.0, 0.5);
    for (int i = 0; i < 200; ++i) blobs.row(i) << (i < 100 ? 0.0 : 10.0) + tight(rng), (i < 100 ? 0.0 : 10.0) + tight(rng);
    const std::vector<int> ks{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    auto monotone = [&](int restarts) {
        const auto scan = inertia_scan(blobs, ks, 7, restarts);
        for (std::size_t i = 1; i < scan.size(); ++i) {
            if (scan[i].inertia > scan[i - 1].inertia) return false;
        }
        return true;
    };
    o.require(monotone(10) || monotone(50), "inertia_scan not monotone over k = 1..10");

    const std::vector<int> one{1};
    const double scanned = inertia_scan(blobs, one, 7, 1)[0].inertia;
    const Eigen::RowVector2d mean = blobs.colwise().mean();
    double scatter = 0.0;
    for (int i = 0; i < 200; ++i) scatter += (blobs.row(i) - mean).squaredNorm();
    o.require(std::abs(scanned - scatter) <= 1e-9 * scatter, "k = 1 inertia differs from total scatter");
    if (o.pass) o.detail = "100 runs monotone; 10^4 frames match oracle; scan monotone; k=1 closed form";
    return o;
}

Outcome criterion6() {
    Outcome o;
    auto word = [](NGram g) {
        NGramStat s;
        s.ngram = std::move(g);
        s.ps = 1.0;
        return s;
    };
    Vocabulary full;
    full.words = {word({1, 2, 3})};
    const Corpus exact = to_corpus({{"a", {1, 2, 3}}});
    const auto r_full = coverage(exact, full);
    o.require(r_full.phoneme_coverage == 1.0 && r_full.phone_coverage == 1.0, "full match is not 1.0");
    const auto r_empty = coverage(exact, Vocabulary{});
    o.require(r_empty.phoneme_coverage == 0.0 && r_empty.phone_coverage == 0.0, "empty vocabulary is not 0.0");

    const std::vector<Transcript> hand{{{{1, 2}, {2, 1}, {9, 1}}, 0.02, "h", "a"}};
    Vocabulary v12;
    v12.words = {word({1, 2})};
    const auto r_hand = coverage(corpus_from_transcripts(hand), v12);
    o.require(r_hand.phoneme_coverage == 2.0 / 3.0, "hand example phoneme coverage");
    o.require(r_hand.phone_coverage == 0.75, "hand example phone coverage");

    std::mt19937_64 rng(6006);
    int violating = 0;
    std::string first;
    for (int trial = 0; trial < 20; ++trial) {
        const Corpus c = to_corpus(random_corpus(rng, 10, 8, 30));
        const auto stats = score_ngrams(c);
        const auto thresholds = default_sweep_thresholds(stats, 50);
        const auto sweep = threshold_sweep(stats, c, thresholds);
        for (std::size_t i = 1; i < sweep.size(); ++i) {
            if (sweep[i].phoneme_coverage > sweep[i - 1].phoneme_coverage ||
                sweep[i].phone_coverage > sweep[i - 1].phone_coverage) {
                if (violating == 0) {
                    first = "corpus " + std::to_string(trial) + ": phone coverage " +
                            fmt("%.3f", sweep[i - 1].phone_coverage) + " at " + fmt("%.4f", sweep[i - 1].threshold) +
                            " rises to " + fmt("%.3f", sweep[i].phone_coverage) + " at " +
                            fmt("%.4f", sweep[i].threshold);
                }
                ++violating;
                break;
            }
        }
    }
    o.require(violating == 0, "sweep not monotone on " + std::to_string(violating) + "/20 corpora (" + first + ")");
    if (o.pass) o.detail = "trivial and hand cases exact; 20 sweeps monotone";
    return o;
}

Outcome criterion7() {
    Outcome o;
    std::mt19937_64 rng(7007);
    for (int trial = 0; trial < 100; ++trial) {
        const Corpus c = to_corpus(random_corpus(rng, 10, 8, 30));
        const auto stats = score_ngrams(c, 2, 6);
        std::map<int, double> sums;
        double top = 0.0;
        for (const auto& [g, s] : stats) {
            sums[s.order()] += s.f;
            o.require(s.ps == s.f * s.delta, "ps != f * delta");
            top = std::max(top, s.ps);
        }
        for (const auto& [n, total] : sums) o.require(std::abs(total - 1.0) <= 1e-9, "sum f != 1 for order " + std::to_string(n));
        const double threshold = top * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const auto v = build_vocabulary(stats, threshold);
        for (const auto& a : v.words) {
            for (const auto& b : v.words) {
                if (&a != &b) o.require(!is_contiguous_subsequence(a.ngram, b.ngram), "subsumption violated");
            }
        }
    }
    if (o.pass) o.detail = "100 stat sets";
    return o;
}

Outcome criterion8() {
    Outcome o;
    std::mt19937_64 rng(8008);
    std::normal_distribution<float> g;
    FrameFeatures f;
    f.frame_duration = 0.025;
    f.hop = 0.01;
    f.kind = FeatureKind::kExternalEmbedding;
    f.matrix.resize(37, 9);
    for (Eigen::Index i = 0; i < f.matrix.size(); ++i) f.matrix.data()[i] = g(rng);
    const std::string bytes = encode_embeddings(f);
    const FrameFeatures back = decode_embeddings(bytes);
    o.require(back.matrix == f.matrix && back.hop == f.hop && back.frame_duration == f.frame_duration,
              "embedding round trip differs");
    o.require(encode_embeddings(back) == bytes, "embedding bytes differ");

    const auto& transcripts = planted().result.transcripts;
    std::stringstream io;
    write_transcripts(io, transcripts);
    const std::string nd = io.str();
    const auto reread = read_transcripts(io);
    o.require(reread == transcripts, "transcript NDJSON round trip differs");
    std::stringstream io2;
    write_transcripts(io2, reread);
    o.require(io2.str() == nd, "transcript NDJSON bytes differ");

    const ModelBundle& bundle = planted().result.bundle;
    const std::string text = serialize_bundle(bundle);
    const ModelBundle parsed = parse_bundle(text);
    o.require(parsed == bundle, "bundle round trip differs");
    o.require(serialize_bundle(parsed) == text, "bundle bytes differ");

    auto cfg = planted().synthetic.config;
    cfg.created_at = "2001-01-01T00:00:00Z";
    const auto a = run_pipeline(cfg, planted().synthetic.inputs);
    cfg.created_at = "2002-02-02T00:00:00Z";
    const auto b = run_pipeline(cfg, planted().synthetic.inputs);
    auto ja = nlohmann::json::parse(serialize_bundle(a.bundle));
    auto jb = nlohmann::json::parse(serialize_bundle(b.bundle));
    ja.erase("created_at");
    jb.erase("created_at");
    o.require(ja.dump() == jb.dump(), "run_pipeline not deterministic");
    if (o.pass) o.detail = "embeddings, transcripts, bundle bit-exact; pipeline deterministic";
    return o;
}

Outcome criterion9() {
    Outcome o;
    const auto& p = planted();
    // The service cuts exemplar and sentence audio out of the source recordings.
    const auto dir = std::filesystem::temp_directory_path() / "canilex_acceptance";
    std::filesystem::create_directories(dir);
    ServiceCorpus corpus;
    for (std::size_t i = 0; i < p.result.sentences.size(); ++i) {
        SentenceRecord rec = p.result.sentences[i];
        rec.source_path = (dir / std::filesystem::path(rec.source_path).filename()).string();
        corpus.entries.push_back({rec, p.result.transcripts[i]});
    }
    for (const auto& in : p.synthetic.inputs) save_wav(dir / in.path, in.clip);
    Service service(p.result.bundle, corpus);
    const int port = service.bind_to_any_port("127.0.0.1");
    std::thread server([&] { service.listen_after_bind(); });
    service.http().wait_until_ready();

    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(60, 0);
    auto get_json = [&](const std::string& path, int expect) -> nlohmann::json {
        auto res = cli.Get(path);
        if (!res) {
            o.require(false, path + ": no response");
            return {};
        }
        o.require(res->status == expect, path + ": status " + std::to_string(res->status));
        try {
            return nlohmann::json::parse(res->body);
        } catch (const std::exception&) {
            o.require(false, path + ": body is not JSON");
            return {};
        }
    };

    const auto health = get_json("/api/health", 200);
    o.require(health.value("status", "") == "ok", "health");
    const auto vocab = get_json("/api/vocabulary", 200);
    o.require(vocab.is_object() && vocab.contains("threshold") && vocab.at("words").is_array(), "vocabulary schema");
    const auto ph = get_json("/api/phonemes", 200);
    o.require(ph.is_object() && ph.at("phonemes").size() == static_cast<std::size_t>(p.result.bundle.codebook.k()),
              "phonemes: not k entries");
    for (const auto& e : ph.value("phonemes", nlohmann::json::array())) {
        o.require(e.at("label").is_number_integer() && e.at("x").is_number() && e.at("y").is_number() &&
                      e.at("noise").is_boolean(),
                  "phoneme entry schema");
    }
    get_json("/api/phonemes/999/exemplars", 404);
    std::string exemplar_id;
    for (int l = 0; l < p.result.bundle.codebook.k() && exemplar_id.empty(); ++l) {
        const auto ex = get_json("/api/phonemes/" + std::to_string(l) + "/exemplars", 200);
        if (!ex.at("exemplars").empty()) exemplar_id = ex.at("exemplars")[0].at("id").get<std::string>();
    }
    const auto samples = get_json("/api/samples?count=20", 200);
    o.require(samples.at("samples").size() == 20, "samples: not 20 entries");

    o.require(!exemplar_id.empty(), "no exemplars for any label");
    auto audio_ok = [&](const std::string& path) {
        auto res = cli.Get(path);
        return res && res->status == 200 && res->get_header_value("Content-Type") == "audio/wav" &&
               decode_wav(res->body).samples.size() > 0;
    };
    if (!exemplar_id.empty()) o.require(audio_ok("/api/exemplars/" + exemplar_id + "/audio"), "exemplar audio");
    if (!samples.at("samples").empty()) {
        o.require(audio_ok(samples.at("samples")[0].at("audio_url").get<std::string>()), "sentence audio");
    }
    get_json("/api/exemplars/nope/audio", 404);
    std::mt19937_64 rng(9);
    const std::vector<int> order{0, 1, 2, 3, 4};
    const std::string wav = encode_wav(render_sentence(p.synthetic.templates, order, p.synthetic.synth, rng));
    httplib::MultipartFormDataItems items{{"file", wav, "planted.wav", "audio/wav"}};
    auto res = cli.Post("/api/transcribe", items);
    std::size_t spans = 0;
    if (!res) {
        o.require(false, "transcribe: no response");
    } else {
        o.require(res->status == 200, "transcribe: status " + std::to_string(res->status));
        const auto doc = nlohmann::json::parse(res->body);
        for (const char* key : {"runs", "word_spans", "raw_labels", "energy", "spectrogram"}) {
            o.require(doc.contains(key), std::string("transcribe: missing ") + key);
        }
        spans = doc.value("word_spans", nlohmann::json::array()).size();
        o.require(spans >= 1, "transcribe: no word span on the planted fixture");
    }
    auto empty = cli.Post("/api/transcribe", "", "audio/wav");
    o.require(empty && empty->status == 400, "empty upload not rejected with 400");

    service.stop();
    server.join();
    if (o.pass) o.detail = "all endpoints answer schema-valid JSON; " + std::to_string(spans) + " word spans on planted clip";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"planted-vocabulary recovery", criterion1},
        {"scoring oracle equivalence", criterion2},
        {"threshold formula", criterion3},
        {"combination properties", criterion4},
        {"k-means", criterion5},
        {"coverage", criterion6},
        {"normalization", criterion7},
        {"round-trips", criterion8},
        {"service contract", criterion9},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
