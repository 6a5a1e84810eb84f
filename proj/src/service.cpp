#include "canilex/service.hpp"

#include "canilex/error.hpp"
#include "canilex/quantizer.hpp"

#include "httplib.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

namespace canilex {

namespace {

ServiceResponse json_response(int status, const nlohmann::json& body) {
    return {status, "application/json", body.dump()};
}

ServiceResponse error_response(int status, const std::string& error, const std::string& detail = {}) {
    nlohmann::json body = {{"error", error}};
    if (!detail.empty()) body["detail"] = detail;
    return json_response(status, body);
}

ServiceResponse no_bundle() { return error_response(503, "bundle not loaded"); }

nlohmann::json runs_json(const Transcript& t) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : t.runs) runs.push_back({r.label, r.n_frames});
    return runs;
}

nlohmann::json exemplar_json(const std::string& id, const PhonemeExemplar& e) {
    return {{"id", id},
            {"label", e.label},
            {"sentence_id", e.sentence_id},
            {"start", e.start},
            {"end", e.end},
            {"n_frames", e.n_frames},
            {"audio_url", "/api/exemplars/" + id + "/audio"}};
}

}  // namespace

ServiceCorpus ServiceCorpus::load(const std::filesystem::path& dir) {
    const auto records = sentence_records_from_json(nlohmann::json::parse(read_file(dir / "sentences.json")));
    const auto transcripts = load_transcripts(dir / "transcripts.ndjson");
    std::map<std::string, const Transcript*> by_id;
    for (const auto& t : transcripts) by_id[t.sentence_id] = &t;
    ServiceCorpus corpus;
    for (const auto& rec : records) {
        const auto it = by_id.find(rec.sentence_id);
        if (it == by_id.end()) throw FormatError("corpus: no transcript for sentence " + rec.sentence_id);
        corpus.entries.push_back({rec, *it->second});
    }
    return corpus;
}

Service::Service(std::optional<ModelBundle> bundle, ServiceCorpus corpus, ServiceOptions options)
    : bundle_(std::move(bundle)),
      corpus_(std::move(corpus)),
      options_(std::move(options)),
      server_(std::make_unique<httplib::Server>()) {
    for (std::size_t i = 0; i < corpus_.entries.size(); ++i) sentence_index_[corpus_.entries[i].record.sentence_id] = i;
    if (bundle_) {
        for (int label = 0; label < bundle_->codebook.k(); ++label) {
            auto list = extract_exemplars(corpus_.entries, label, options_.min_exemplar_frames,
                                          options_.exemplars_per_label, options_.sample_seed);
            for (std::size_t i = 0; i < list.size(); ++i) {
                exemplar_by_id_[std::to_string(label) + "-" + std::to_string(i)] = list[i];
            }
            exemplars_[label] = std::move(list);
        }
    }
    register_routes();
}

Service::~Service() = default;

httplib::Server& Service::http() { return *server_; }

int Service::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool Service::listen_after_bind() { return server_->listen_after_bind(); }

bool Service::listen(const std::string& host, int port) { return server_->listen(host, port); }

void Service::stop() { server_->stop(); }

ServiceResponse Service::health() const {
    return json_response(200, {{"status", "ok"}, {"bundle_loaded", bundle_.has_value()},
                               {"sentences", corpus_.entries.size()}});
}

ServiceResponse Service::transcribe(std::string_view wav_bytes) const {
    if (!bundle_) return no_bundle();
    if (wav_bytes.empty()) return error_response(400, "empty body");
    if (wav_bytes.size() > options_.max_upload_bytes) return error_response(413, "payload too large");
    AudioClip clip;
    try {
        clip = decode_wav(wav_bytes, bundle_->features.sample_rate);
    } catch (const AudioFormatError& e) {
        return error_response(400, "unsupported format", e.what());
    }
    clip.source_id = "upload";
    const FrameGrid grid =
        FrameGrid::make(bundle_->features.sample_rate, bundle_->features.frame_duration, bundle_->features.hop);
    if (grid.n_frames(clip.samples.size()) == 0) {
        return error_response(422, "clip too short", "shorter than one analysis frame");
    }
    try {
        return json_response(200, annotated_to_json(canilex::transcribe(clip, *bundle_)));
    } catch (const std::exception& e) {
        return error_response(500, "transcription failed", e.what());
    }
}

ServiceResponse Service::vocabulary() const {
    if (!bundle_) return no_bundle();
    return json_response(200, vocabulary_to_json(bundle_->vocabulary));
}

ServiceResponse Service::phonemes() const {
    if (!bundle_) return no_bundle();
    const auto& cb = bundle_->codebook;
    Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(cb.k(), 2);
    if (cb.k() >= 2) coords = project_centroids_2d(cb);
    std::map<int, const PhonemeLengthStat*> stats;
    for (const auto& s : bundle_->phoneme_stats) stats[s.label] = &s;
    nlohmann::json list = nlohmann::json::array();
    for (int label = 0; label < cb.k(); ++label) {
        nlohmann::json entry = {{"label", label},
                                {"noise", bundle_->noise_labels.contains(label)},
                                {"x", coords(label, 0)},
                                {"y", coords(label, 1)},
                                {"n_exemplars", exemplars_.count(label) ? exemplars_.at(label).size() : 0}};
        if (const auto it = stats.find(label); it != stats.end()) {
            entry["stats"] = {{"mean_length", it->second->mean_length},
                              {"var_length", it->second->var_length},
                              {"n_runs", it->second->n_runs}};
        } else {
            entry["stats"] = nullptr;
        }
        list.push_back(std::move(entry));
    }
    return json_response(200, {{"k", cb.k()}, {"phonemes", std::move(list)}});
}

ServiceResponse Service::exemplars(int label) const {
    if (!bundle_) return no_bundle();
    if (label < 0 || label >= bundle_->codebook.k()) return error_response(404, "unknown label");
    nlohmann::json list = nlohmann::json::array();
    const auto& items = exemplars_.at(label);
    for (std::size_t i = 0; i < items.size(); ++i) {
        list.push_back(exemplar_json(std::to_string(label) + "-" + std::to_string(i), items[i]));
    }
    return json_response(200, {{"label", label}, {"exemplars", std::move(list)}});
}

std::shared_ptr<const AudioClip> Service::source_audio(const std::string& path) const {
    std::lock_guard lock(audio_mutex_);
    if (const auto it = audio_cache_.find(path); it != audio_cache_.end()) return it->second;
    auto clip = std::make_shared<const AudioClip>(load_audio(path, bundle_ ? bundle_->features.sample_rate : kWorkingRate));
    audio_cache_[path] = clip;
    return clip;
}

ServiceResponse Service::cut_audio(const std::string& path, double start, double end) const {
    std::shared_ptr<const AudioClip> source;
    try {
        source = source_audio(path);
    } catch (const std::exception& e) {
        return error_response(404, "audio unavailable", e.what());
    }
    AudioClip piece;
    piece.sample_rate = source->sample_rate;
    const auto n = source->samples.size();
    const auto b = std::min(n, static_cast<std::size_t>(std::max(0.0, start) * source->sample_rate + 0.5));
    const auto e = std::min(n, static_cast<std::size_t>(std::max(0.0, end) * source->sample_rate + 0.5));
    if (b >= e) return error_response(404, "empty audio segment");
    piece.samples.assign(source->samples.begin() + static_cast<std::ptrdiff_t>(b),
                         source->samples.begin() + static_cast<std::ptrdiff_t>(e));
    return {200, "audio/wav", encode_wav(piece)};
}

ServiceResponse Service::exemplar_audio(const std::string& id) const {
    if (!bundle_) return no_bundle();
    const auto it = exemplar_by_id_.find(id);
    if (it == exemplar_by_id_.end()) return error_response(404, "unknown exemplar");
    return cut_audio(it->second.source_path, it->second.start, it->second.end);
}

ServiceResponse Service::sentence_audio(const std::string& sentence_id) const {
    const auto it = sentence_index_.find(sentence_id);
    if (it == sentence_index_.end()) return error_response(404, "unknown sentence");
    const auto& rec = corpus_.entries[it->second].record;
    return cut_audio(rec.source_path, rec.start, rec.end);
}

ServiceResponse Service::samples(std::size_t count) const {
    if (!bundle_) return no_bundle();
    std::vector<std::size_t> all(corpus_.entries.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> picked;
    std::mt19937_64 rng(options_.sample_seed * 0x100000001B3ull + count);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), count, rng);
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t i : picked) {
        const auto& e = corpus_.entries[i];
        list.push_back({{"sentence_id", e.record.sentence_id},
                        {"dog_id", e.record.dog_id},
                        {"start", e.record.start},
                        {"end", e.record.end},
                        {"frame_duration", e.transcript.frame_duration},
                        {"runs", runs_json(e.transcript)},
                        {"audio_url", "/api/sentences/" + httplib::detail::encode_query_param(e.record.sentence_id) + "/audio"}});
    }
    return json_response(200, {{"count", list.size()}, {"samples", std::move(list)}});
}

void Service::register_routes() {
    auto& srv = *server_;
    srv.set_payload_max_length(options_.max_upload_bytes);
    srv.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    if (!options_.static_dir.empty()) srv.set_mount_point("/", options_.static_dir);

    auto send = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };

    srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    srv.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    srv.Post("/api/transcribe", [this, send](const httplib::Request& req, httplib::Response& res) {
        if (req.is_multipart_form_data()) {
            for (const char* field : {"file", "audio"}) {
                if (req.has_file(field)) return send(res, transcribe(req.get_file_value(field).content));
            }
            if (!req.files.empty()) return send(res, transcribe(req.files.begin()->second.content));
            return send(res, error_response(400, "empty body", "multipart request carries no file"));
        }
        send(res, transcribe(req.body));
    });
    srv.Get("/api/vocabulary", [this, send](const httplib::Request&, httplib::Response& res) { send(res, vocabulary()); });
    srv.Get("/api/phonemes", [this, send](const httplib::Request&, httplib::Response& res) { send(res, phonemes()); });
    srv.Get(R"(/api/phonemes/(-?\d+)/exemplars)", [this, send](const httplib::Request& req, httplib::Response& res) {
        int label = -1;
        try {
            label = std::stoi(req.matches[1].str());
        } catch (const std::exception&) {
            return send(res, error_response(404, "unknown label"));
        }
        send(res, exemplars(label));
    });
    srv.Get(R"(/api/exemplars/([^/]+)/audio)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, exemplar_audio(req.matches[1].str()));
    });
    srv.Get(R"(/api/sentences/(.+)/audio)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, sentence_audio(req.matches[1].str()));
    });
    srv.Get("/api/samples", [this, send](const httplib::Request& req, httplib::Response& res) {
        std::size_t count = 20;
        if (req.has_param("count")) {
            try {
                const long v = std::stol(req.get_param_value("count"));
                if (v < 0) throw std::out_of_range("negative");
                count = static_cast<std::size_t>(v);
            } catch (const std::exception&) {
                return send(res, error_response(400, "invalid count"));
            }
        }
        send(res, samples(count));
    });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const char* msg = res.status == 413 ? "payload too large" : res.status == 404 ? "not found" : "error";
            res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
        }
    });
}

}  // namespace canilex
