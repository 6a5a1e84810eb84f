// canilex: command-line front end for the vocalisation pipeline.

#include "canilex/annotator.hpp"
#include "canilex/bundle.hpp"
#include "canilex/combiner.hpp"
#include "canilex/error.hpp"
#include "canilex/pipeline.hpp"
#include "canilex/quantizer.hpp"
#include "canilex/segmenter.hpp"
#include "canilex/service.hpp"
#include "canilex/synth.hpp"
#include "canilex/vocab.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace canilex;
using nlohmann::json;

namespace {

// --- small helpers --------------------------------------------------------

void emit(const json& doc, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << doc.dump(2) << "\n";
    } else {
        if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
        write_file(out, doc.dump(2) + "\n");
    }
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// "10,20,...,100", "1:10:1" (inclusive) or a plain comma list.
std::vector<double> parse_range(const std::string& text) {
    auto num = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + s + "' in range '" + text + "'");
        }
    };
    auto split = [](const std::string& s, char sep) {
        std::vector<std::string> parts;
        std::stringstream in(s);
        for (std::string p; std::getline(in, p, sep);) parts.push_back(p);
        return parts;
    };
    std::vector<double> out;
    auto progression = [&](double a, double b, double step) {
        if (step <= 0 || b < a) throw ConfigError("empty range '" + text + "'");
        const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
        for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
    };
    if (text.find(':') != std::string::npos) {
        const auto p = split(text, ':');
        if (p.size() != 3) throw ConfigError("range must be start:stop:step, got '" + text + "'");
        progression(num(p[0]), num(p[1]), num(p[2]));
        return out;
    }
    const auto p = split(text, ',');
    if (p.size() == 4 && p[2] == "...") {
        const double a = num(p[0]);
        progression(a, num(p[3]), num(p[1]) - a);
        return out;
    }
    for (const auto& s : p) out.push_back(num(s));
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw Error("no " + ext + " files in " + dir.string());
    return out;
}

// Reads one LabelSequence object, an array of them, or NDJSON.
std::vector<LabelSequence> read_label_sequences(const fs::path& path) {
    const std::string text = read_file(path);
    std::vector<LabelSequence> out;
    try {
        const json doc = json::parse(text);
        if (doc.is_array()) {
            for (const auto& d : doc) out.push_back(label_sequence_from_json(d));
        } else {
            out.push_back(label_sequence_from_json(doc));
        }
        return out;
    } catch (const json::parse_error&) {
    }
    std::stringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(label_sequence_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ": " + e.what());
        }
    }
    return out;
}

json spans_to_json(const std::vector<SentenceSpan>& spans) {
    json list = json::array();
    for (const auto& s : spans) {
        list.push_back({{"source_id", s.source_id}, {"start", s.start}, {"end", s.end}, {"duration", s.duration()}});
    }
    return list;
}

const char* rule_name(TagRule r) {
    switch (r) {
        case TagRule::kKept: return "kept";
        case TagRule::kMissingDogTag: return "missing_dog_tag";
        case TagRule::kLowDogScore: return "low_dog_score";
        case TagRule::kForeignLabel: return "foreign_label";
    }
    return "?";
}

json inertia_json(const std::vector<InertiaPoint>& points) {
    json list = json::array();
    for (const auto& p : points) list.push_back({{"k", p.k}, {"inertia", p.inertia}});
    return list;
}

Eigen::MatrixXd stack_dir(const fs::path& dir) {
    std::vector<FrameFeatures> feats;
    for (const auto& p : files_with_extension(dir, ".dgfv")) feats.push_back(load_embeddings(p));
    return stack_features(feats);
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service != nullptr) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phoneme and word discovery for dog vocalisations"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Random seed (overrides the config)");

    // features
    auto* features = app.add_subcommand("features", "Log-mel features of one WAV");
    std::string f_input, f_out;
    std::optional<int> f_mels;
    std::optional<double> f_frame, f_hop;
    features->add_option("--input", f_input)->required()->check(CLI::ExistingFile);
    features->add_option("--out", f_out)->required();
    features->add_option("--mels", f_mels);
    features->add_option("--frame", f_frame);
    features->add_option("--hop", f_hop);

    // segment
    auto* segment = app.add_subcommand("segment", "Sentence spans from a framewise detector track");
    std::string s_scores, s_tags, s_out, s_clip_id, s_dog_labels;
    std::optional<double> s_gap, s_pad, s_tag_threshold, s_duration;
    segment->add_option("--scores", s_scores)->required()->check(CLI::ExistingFile);
    segment->add_option("--tags", s_tags)->check(CLI::ExistingFile);
    segment->add_option("--out", s_out);
    segment->add_option("--clip-id", s_clip_id, "Defaults to the scores file stem");
    segment->add_option("--clip-duration", s_duration, "Defaults to frames x hop");
    segment->add_option("--gap-max", s_gap);
    segment->add_option("--pad", s_pad);
    segment->add_option("--tag-threshold", s_tag_threshold);
    segment->add_option("--dog-labels", s_dog_labels, "JSON list of dog-class tag labels")->check(CLI::ExistingFile);

    // quantize-train
    auto* qtrain = app.add_subcommand("quantize-train", "Train a k-means codebook on a directory of DGFV files");
    std::string qt_features, qt_out;
    std::optional<int> qt_k, qt_restarts;
    qtrain->add_option("--features", qt_features)->required()->check(CLI::ExistingDirectory);
    qtrain->add_option("--k", qt_k);
    qtrain->add_option("--restarts", qt_restarts);
    qtrain->add_option("--out", qt_out)->required();

    // quantize
    auto* quantize = app.add_subcommand("quantize", "Nearest-centroid labels for one DGFV file");
    std::string q_features, q_codebook, q_out, q_dog;
    quantize->add_option("--features", q_features)->required()->check(CLI::ExistingFile);
    quantize->add_option("--codebook", q_codebook)->required()->check(CLI::ExistingFile);
    quantize->add_option("--dog", q_dog);
    quantize->add_option("--out", q_out);

    // inertia-scan
    auto* scan = app.add_subcommand("inertia-scan", "Best inertia for each k");
    std::string sc_features, sc_ks = "10,20,...,100", sc_out;
    std::optional<int> sc_restarts;
    scan->add_option("--features", sc_features)->required()->check(CLI::ExistingDirectory);
    scan->add_option("--ks", sc_ks, "List, a,b,...,z or start:stop:step")->capture_default_str();
    scan->add_option("--restarts", sc_restarts);
    scan->add_option("--out", sc_out);

    // combine
    auto* comb = app.add_subcommand("combine", "Phoneme combination into run transcripts");
    std::string c_labels, c_out;
    std::optional<int> c_tolerance;
    comb->add_option("--labels", c_labels)->required()->check(CLI::ExistingFile);
    comb->add_option("--tolerance", c_tolerance);
    comb->add_option("--out", c_out)->required();

    // stats
    auto* stats = app.add_subcommand("stats", "Per-label run length statistics");
    std::string st_transcripts, st_out;
    stats->add_option("--transcripts", st_transcripts)->required()->check(CLI::ExistingFile);
    stats->add_option("--out", st_out);

    // mine / coverage / sweep share corpus options
    std::string m_transcripts, m_out, m_noise, m_vocab, m_thresholds;
    std::optional<int> m_nmin, m_nmax;
    std::optional<double> m_threshold;
    bool m_exclude_noise = false;
    auto corpus_options = [&](CLI::App* sub) {
        sub->add_option("--transcripts", m_transcripts)->required()->check(CLI::ExistingFile);
        sub->add_option("--nmin", m_nmin);
        sub->add_option("--nmax", m_nmax);
        sub->add_flag("--exclude-noise", m_exclude_noise, "Drop noise-label runs before mining");
        sub->add_option("--noise", m_noise, "Noise label JSON")->check(CLI::ExistingFile);
        sub->add_option("--out", m_out);
    };
    auto* mine = app.add_subcommand("mine", "Score n-grams and build the vocabulary");
    corpus_options(mine);
    mine->add_option("--threshold", m_threshold, "Defaults to the knee of the coverage sweep");
    auto* cov = app.add_subcommand("coverage", "Coverage of a vocabulary over transcripts");
    corpus_options(cov);
    cov->add_option("--vocab", m_vocab)->required()->check(CLI::ExistingFile);
    auto* sweep = app.add_subcommand("sweep", "Coverage across vocabulary thresholds");
    corpus_options(sweep);
    sweep->add_option("--thresholds", m_thresholds, "start:stop:step or a list; default 50 points up to max ps");

    // annotate
    auto* annotate = app.add_subcommand("annotate", "Annotated transcript of one WAV");
    std::string a_input, a_bundle, a_out;
    annotate->add_option("--input", a_input)->required()->check(CLI::ExistingFile);
    annotate->add_option("--bundle", a_bundle)->required()->check(CLI::ExistingFile);
    annotate->add_option("--out", a_out);

    // run-all
    auto* runall = app.add_subcommand("run-all", "Full pipeline over a directory of WAVs");
    std::string r_input, r_out, r_ks;
    std::optional<int> r_k, r_restarts, r_tolerance, r_nmin, r_nmax;
    std::optional<double> r_threshold;
    bool r_exclude_noise = false;
    runall->add_option("--input", r_input)->required()->check(CLI::ExistingDirectory);
    runall->add_option("--out", r_out)->required();
    runall->add_option("--k", r_k);
    runall->add_option("--restarts", r_restarts);
    runall->add_option("--tolerance", r_tolerance);
    runall->add_option("--nmin", r_nmin);
    runall->add_option("--nmax", r_nmax);
    runall->add_option("--threshold", r_threshold);
    runall->add_option("--inertia-ks", r_ks);
    runall->add_flag("--exclude-noise", r_exclude_noise);

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP backend for the annotation UI");
    std::string v_bundle, v_corpus, v_static, v_host = "0.0.0.0";
    int v_port = 8080;
    std::size_t v_max_upload = ServiceOptions{}.max_upload_bytes;
    std::string v_origin = "*";
    serve->add_option("--bundle", v_bundle)->check(CLI::ExistingFile);
    serve->add_option("--corpus", v_corpus, "run-all output directory")->check(CLI::ExistingDirectory);
    serve->add_option("--static", v_static, "Built frontend to serve at /")->check(CLI::ExistingDirectory);
    serve->add_option("--host", v_host)->capture_default_str();
    serve->add_option("--port", v_port)->capture_default_str();
    serve->add_option("--max-upload", v_max_upload)->capture_default_str();
    serve->add_option("--cors-origin", v_origin)->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic planted-template corpus");
    std::string y_out;
    int y_dogs = 10, y_sentences = 20;
    double y_snr = SynthConfig{}.snr_db;
    synth->add_option("--out", y_out)->required();
    synth->add_option("--dogs", y_dogs)->capture_default_str();
    synth->add_option("--sentences", y_sentences, "Per dog")->capture_default_str();
    synth->add_option("--snr", y_snr)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig config;
        if (!config_path.empty()) config = pipeline_config_from_json(read_json(config_path));
        if (seed) config.seed = *seed;
        const FeatureConfig& fc = config.features;

        if (*features) {
            const AudioClip clip = load_audio(f_input, fc.sample_rate);
            const FrameFeatures f = compute_logmel(clip, f_mels.value_or(fc.n_mels), f_frame.value_or(fc.frame_duration),
                                                   f_hop.value_or(fc.hop));
            save_embeddings(f_out, f);
            std::cerr << f_out << ": " << f.n_frames() << " x " << f.dim() << "\n";
        } else if (*segment) {
            SegmentConfig sc = config.segment;
            if (s_gap) sc.gap_max = *s_gap;
            if (s_pad) sc.pad = *s_pad;
            if (s_tag_threshold) sc.tag_threshold = *s_tag_threshold;
            if (!s_dog_labels.empty()) sc.dog_labels = load_dog_labels(s_dog_labels);
            FramewiseScore scores = load_framewise_scores(s_scores);
            const std::string id = s_clip_id.empty() ? fs::path(s_scores).stem().stem().string() : s_clip_id;
            scores.source_id = id;
            const double duration = s_duration.value_or(static_cast<double>(scores.values.size()) * scores.hop);
            const double threshold = dynamic_threshold(scores);
            auto spans = merge_and_pad(extract_clips(scores, threshold), sc.gap_max, sc.pad, duration);
            json doc = {{"source_id", id}, {"threshold", threshold}};
            json dropped = json::array();
            if (!s_tags.empty()) {
                const auto tags = load_tag_scores(s_tags);
                std::vector<SentenceSpan> kept;
                for (std::size_t i = 0; i < spans.size(); ++i) {
                    const std::string sid = id + "#" + std::to_string(i);
                    auto it = tags.find(sid);
                    if (it == tags.end()) it = tags.find(id);
                    if (it == tags.end()) {
                        kept.push_back(spans[i]);
                        continue;
                    }
                    const TagDecision d = filter_by_tags(it->second, sc.dog_labels, sc.tag_threshold);
                    if (d.keep) {
                        kept.push_back(spans[i]);
                    } else {
                        dropped.push_back({{"start", spans[i].start}, {"end", spans[i].end}, {"rule", rule_name(d.rule)},
                                           {"label", d.label}, {"reason", d.reason}});
                    }
                }
                spans = std::move(kept);
            }
            doc["spans"] = spans_to_json(spans);
            doc["dropped"] = std::move(dropped);
            emit(doc, s_out);
        } else if (*qtrain) {
            const Eigen::MatrixXd frames = stack_dir(qt_features);
            const Codebook cb = train_codebook(frames, KMeansOptions{qt_k.value_or(config.k), config.seed,
                                                                     qt_restarts.value_or(config.restarts),
                                                                     config.max_iters, config.rel_tol});
            emit(codebook_to_json(cb), qt_out);
            std::cerr << "k = " << cb.k() << ", inertia " << cb.inertia << " over " << frames.rows() << " frames\n";
        } else if (*quantize) {
            const FrameFeatures f = load_embeddings(q_features);
            const Codebook cb = codebook_from_json(read_json(q_codebook));
            if (cb.dim() != f.dim()) throw Error("codebook dim " + std::to_string(cb.dim()) + " != feature dim " + std::to_string(f.dim()));
            emit(label_sequence_to_json(assign_labels(f, cb, fs::path(q_features).stem().string(), q_dog)), q_out);
        } else if (*scan) {
            std::vector<int> ks;
            for (double v : parse_range(sc_ks)) ks.push_back(static_cast<int>(std::lround(v)));
            const auto points = inertia_scan(stack_dir(sc_features), ks, config.seed,
                                             sc_restarts.value_or(config.restarts), config.max_iters, config.rel_tol);
            emit(inertia_json(points), sc_out);
        } else if (*comb) {
            const CombinerConfig cc{c_tolerance.value_or(config.tolerance)};
            std::vector<Transcript> out;
            for (const auto& seq : read_label_sequences(c_labels)) out.push_back(to_runs(combine(seq, cc)));
            save_transcripts(c_out, out);
            std::cerr << out.size() << " transcripts\n";
        } else if (*stats) {
            emit(phoneme_stats_to_json(phoneme_length_stats(load_transcripts(st_transcripts))), st_out);
        } else if (*mine || *cov || *sweep) {
            const int nmin = m_nmin.value_or(config.n_min), nmax = m_nmax.value_or(config.n_max);
            if (nmin < 1 || nmax < nmin) throw ConfigError("need 1 <= nmin <= nmax");
            NoiseLabelSet noise;
            if (!m_noise.empty()) {
                noise = load_noise_labels(m_noise);
            } else if (config.noise_labels) {
                noise = *config.noise_labels;
            } else {
                noise = default_noise_labels();
            }
            const bool exclude = m_exclude_noise || config.exclude_noise;
            const auto transcripts = load_transcripts(m_transcripts);
            const Corpus corpus = corpus_from_transcripts(transcripts, exclude ? noise : NoiseLabelSet{});

            if (*cov) {
                const Vocabulary v = vocabulary_from_json(read_json(m_vocab));
                emit(coverage_to_json(coverage(corpus, v), v), m_out);
            } else {
                const NGramTable table = score_ngrams(corpus, nmin, nmax);
                std::vector<double> thresholds;
                if (*sweep && !m_thresholds.empty()) {
                    thresholds = parse_range(m_thresholds);
                } else if (!config.sweep_thresholds.empty()) {
                    thresholds = config.sweep_thresholds;
                } else {
                    thresholds = default_sweep_thresholds(table);
                }
                if (*sweep) {
                    const auto points = threshold_sweep(table, corpus, thresholds, nmax, nmin);
                    emit({{"knee", knee_threshold(points)}, {"points", sweep_to_json(points)}}, m_out);
                } else {
                    double threshold = 0.0;
                    if (m_threshold) {
                        threshold = *m_threshold;
                    } else if (config.vocab_threshold) {
                        threshold = *config.vocab_threshold;
                    } else {
                        threshold = knee_threshold(threshold_sweep(table, corpus, thresholds, nmax, nmin));
                    }
                    const Vocabulary v = build_vocabulary(table, threshold, nmax, nmin);
                    emit(vocabulary_to_json(v), m_out);
                    std::cerr << v.words.size() << " words at threshold " << threshold << "\n";
                }
            }
        } else if (*annotate) {
            const ModelBundle bundle = load_bundle(a_bundle);
            AudioClip clip = load_audio(a_input, bundle.features.sample_rate);
            clip.source_id = fs::path(a_input).stem().string();
            emit(annotated_to_json(transcribe(clip, bundle)), a_out);
        } else if (*runall) {
            if (r_k) config.k = *r_k;
            if (r_restarts) config.restarts = *r_restarts;
            if (r_tolerance) config.tolerance = *r_tolerance;
            if (r_nmin) config.n_min = *r_nmin;
            if (r_nmax) config.n_max = *r_nmax;
            if (r_threshold) config.vocab_threshold = *r_threshold;
            if (r_exclude_noise) config.exclude_noise = true;
            if (!r_ks.empty()) {
                config.inertia_ks.clear();
                for (double v : parse_range(r_ks)) config.inertia_ks.push_back(static_cast<int>(std::lround(v)));
            }
            config.validate();
            const auto inputs = load_pipeline_inputs(r_input, fc.sample_rate);
            const auto result = run_pipeline(config, inputs, load_pipeline_tags(r_input));
            write_pipeline_outputs(r_out, result);
            write_file(fs::path(r_out) / "config.json", pipeline_config_to_json(config).dump(2) + "\n");
            for (const auto& d : result.dropped) std::cerr << "dropped " << d.reason << "\n";
            std::cerr << inputs.size() << " clips, " << result.sentences.size() << " sentences, "
                      << result.bundle.vocabulary.words.size() << " words at threshold "
                      << result.bundle.vocabulary.threshold << "; phone coverage " << result.coverage.phone_coverage
                      << "\n";
        } else if (*serve) {
            std::optional<ModelBundle> bundle;
            if (!v_bundle.empty()) bundle = load_bundle(v_bundle);
            ServiceCorpus corpus;
            if (!v_corpus.empty()) corpus = ServiceCorpus::load(v_corpus);
            ServiceOptions opts;
            opts.max_upload_bytes = v_max_upload;
            opts.cors_origin = v_origin;
            opts.static_dir = v_static;
            opts.sample_seed = config.seed;
            Service service(std::move(bundle), std::move(corpus), opts);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << v_host << ":" << v_port << "\n";
            if (!service.listen(v_host, v_port)) throw Error("cannot listen on " + v_host + ":" + std::to_string(v_port));
            g_service = nullptr;
        } else if (*synth) {
            SynthConfig sc;
            sc.snr_db = y_snr;
            const auto templates = make_templates(sc, config.seed);
            const auto sentences = generate_corpus(templates, sc, y_dogs, y_sentences, config.seed + 1);
            json tmpl = json::array();
            for (const auto& t : templates) {
                json tones = json::array();
                for (const auto& tone : t) tones.push_back({{"frequency", tone.frequency}, {"duration", tone.duration}});
                tmpl.push_back(std::move(tones));
            }
            for (const auto& s : sentences) {
                const fs::path dir = fs::path(y_out) / s.clip.dog_id;
                fs::create_directories(dir);
                save_wav(dir / (s.clip.source_id + ".wav"), s.clip);
            }
            write_file(fs::path(y_out) / "templates.json", json{{"seed", config.seed}, {"templates", tmpl}}.dump(2) + "\n");
            std::cerr << sentences.size() << " sentences from " << y_dogs << " dogs in " << y_out << "\n";
        }
    } catch (const StageError& e) {
        std::cerr << "error in stage " << e.stage() << " (" << e.input_id() << "): " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
