#pragma once

#include "canilex/annotator.hpp"
#include "canilex/bundle.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace httplib {
class Server;
}

namespace canilex {

struct ServiceOptions {
    std::size_t max_upload_bytes = 25u * 1024u * 1024u;
    std::string cors_origin = "*";
    std::uint64_t sample_seed = 7;
    std::size_t exemplars_per_label = 10;
    std::size_t min_exemplar_frames = 5;
    std::string static_dir;  // served under "/" when set
};

// Training sentences with their transcripts, as written by run-all.
struct ServiceCorpus {
    std::vector<CorpusEntry> entries;

    // Reads <dir>/sentences.json and <dir>/transcripts.ndjson.
    static ServiceCorpus load(const std::filesystem::path& dir);
};

struct ServiceResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    nlohmann::json json() const { return nlohmann::json::parse(body); }
};

/// HTTP backend for the annotation UI. The bundle, corpus and exemplar index
/// are fixed at construction; handlers only read them.
class Service {
public:
    Service(std::optional<ModelBundle> bundle, ServiceCorpus corpus, ServiceOptions options = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    ServiceResponse transcribe(std::string_view wav_bytes) const;
    ServiceResponse vocabulary() const;
    ServiceResponse phonemes() const;
    ServiceResponse exemplars(int label) const;
    ServiceResponse exemplar_audio(const std::string& id) const;
    ServiceResponse samples(std::size_t count) const;
    ServiceResponse sentence_audio(const std::string& sentence_id) const;
    ServiceResponse health() const;

    httplib::Server& http();
    int bind_to_any_port(const std::string& host);
    bool listen_after_bind();
    bool listen(const std::string& host, int port);
    void stop();

private:
    std::shared_ptr<const AudioClip> source_audio(const std::string& path) const;
    ServiceResponse cut_audio(const std::string& path, double start, double end) const;
    void register_routes();

    std::optional<ModelBundle> bundle_;
    ServiceCorpus corpus_;
    ServiceOptions options_;
    std::map<int, std::vector<PhonemeExemplar>> exemplars_;
    std::map<std::string, PhonemeExemplar> exemplar_by_id_;
    std::map<std::string, std::size_t> sentence_index_;

    mutable std::mutex audio_mutex_;
    mutable std::map<std::string, std::shared_ptr<const AudioClip>> audio_cache_;

    std::unique_ptr<httplib::Server> server_;
};

}  // namespace canilex
