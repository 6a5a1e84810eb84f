#include "canilex/error.hpp"
#include "canilex/pipeline.hpp"
#include "canilex/service.hpp"

#include "doctest.h"
#include "httplib.h"
#include "synthetic_fixture.hpp"

#include <filesystem>
#include <future>
#include <set>
#include <thread>

using namespace canilex;
namespace fs = std::filesystem;

namespace {

// Corpus of 30 sentences written to disk, trained, and reloaded the way `serve` does.
struct Fixture {
    fixture::Synthetic synthetic = fixture::make_synthetic(5, 6);
    fs::path corpus_dir;
    fs::path out_dir;
    ModelBundle bundle;
    ServiceCorpus corpus;

    Fixture() {
        const auto root = fs::temp_directory_path() / "canilex_test_service";
        fs::remove_all(root);
        corpus_dir = root / "corpus";
        out_dir = root / "model";
        for (const auto& s : synthetic.sentences) {
            fs::create_directories(corpus_dir / s.clip.dog_id);
            save_wav(corpus_dir / s.clip.dog_id / (s.clip.source_id + ".wav"), s.clip);
        }
        const auto inputs = load_pipeline_inputs(corpus_dir, 16000);
        write_pipeline_outputs(out_dir, run_pipeline(synthetic.config, inputs));
        bundle = load_bundle(out_dir / "bundle.json");
        corpus = ServiceCorpus::load(out_dir);
    }
};

const Fixture& fx() {
    static const Fixture f;
    return f;
}

bool is_number(const nlohmann::json& j) { return j.is_number(); }

void check_annotated_schema(const nlohmann::json& doc) {
    REQUIRE(doc.is_object());
    CHECK(doc.at("sentence_id").is_string());
    CHECK(is_number(doc.at("frame_duration")));
    REQUIRE(doc.at("runs").is_array());
    for (const auto& r : doc.at("runs")) {
        CHECK(r.at("label").is_number_integer());
        CHECK(r.at("n_frames").is_number_unsigned());
        CHECK(is_number(r.at("start")));
        CHECK(is_number(r.at("end")));
        CHECK(r.at("noise").is_boolean());
    }
    REQUIRE(doc.at("word_spans").is_array());
    for (const auto& w : doc.at("word_spans")) {
        CHECK(w.at("ngram").is_array());
        CHECK(w.at("start_run").is_number_unsigned());
        CHECK(w.at("end_run").is_number_unsigned());
        CHECK(is_number(w.at("start")));
        CHECK(is_number(w.at("end")));
    }
    CHECK(doc.at("raw_labels").is_array());
    CHECK(is_number(doc.at("energy").at("hop")));
    CHECK(doc.at("energy").at("values").is_array());
    const auto& spec = doc.at("spectrogram");
    CHECK(spec.at("encoding") == "base64-f32le");
    CHECK(spec.at("data").is_string());
    CHECK(spec.at("n_frames").is_number_unsigned());
    CHECK(spec.at("n_bins").is_number_unsigned());
    CHECK(is_number(spec.at("bin_hz")));
    CHECK(is_number(spec.at("hop")));
}

void check_vocabulary_schema(const nlohmann::json& doc) {
    CHECK(is_number(doc.at("threshold")));
    for (const auto& w : doc.at("words")) {
        CHECK(w.at("ngram").is_array());
        CHECK(w.at("count").is_number_unsigned());
        CHECK(is_number(w.at("f")));
        CHECK(w.at("delta").is_number_integer());
        CHECK(is_number(w.at("ps")));
    }
}

std::string planted_wav() {
    const auto& s = fx().synthetic;
    std::mt19937_64 rng(99);
    const std::vector<int> order{0, 1, 2, 3, 4};
    return encode_wav(render_sentence(s.templates, order, s.synth, rng));
}

// Running HTTP server on an ephemeral port for the lifetime of the object.
struct Running {
    Service service;
    int port = 0;
    std::thread thread;

    explicit Running(std::optional<ModelBundle> bundle, ServiceOptions options = {})
        : service(std::move(bundle), fx().corpus, std::move(options)) {
        port = service.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { service.listen_after_bind(); });
        service.http().wait_until_ready();
    }
    ~Running() {
        service.stop();
        thread.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(60, 0);
        return c;
    }
};

}  // namespace

TEST_CASE("handlers: transcribe") {
    const Service svc(fx().bundle, fx().corpus);
    const auto ok = svc.transcribe(planted_wav());
    REQUIRE(ok.status == 200);
    const auto doc = ok.json();
    check_annotated_schema(doc);
    CHECK_FALSE(doc.at("word_spans").empty());
    CHECK_FALSE(doc.at("raw_labels").empty());

    CHECK(svc.transcribe("").status == 400);
    const auto junk = svc.transcribe("definitely not audio");
    CHECK(junk.status == 400);
    CHECK(junk.json().at("error") == "unsupported format");

    AudioClip tiny;
    tiny.samples.assign(100, 0.2);
    const auto short_clip = svc.transcribe(encode_wav(tiny));
    CHECK(short_clip.status == 422);
    CHECK(short_clip.json().at("error") == "clip too short");

    ServiceOptions small;
    small.max_upload_bytes = 1000;
    const Service limited(fx().bundle, fx().corpus, small);
    CHECK(limited.transcribe(planted_wav()).status == 413);
}

TEST_CASE("handlers: vocabulary and phonemes") {
    const Service svc(fx().bundle, fx().corpus);
    const auto vocab = svc.vocabulary();
    REQUIRE(vocab.status == 200);
    check_vocabulary_schema(vocab.json());
    CHECK(vocabulary_from_json(vocab.json()) == fx().bundle.vocabulary);

    const auto ph = svc.phonemes().json();
    CHECK(ph.at("k") == 12);
    REQUIRE(ph.at("phonemes").size() == 12);
    const auto coords = project_centroids_2d(fx().bundle.codebook);
    for (int l = 0; l < 12; ++l) {
        const auto& e = ph.at("phonemes")[static_cast<std::size_t>(l)];
        CHECK(e.at("label") == l);
        CHECK(e.at("noise") == fx().bundle.noise_labels.contains(l));
        CHECK(e.at("x").get<double>() == coords(l, 0));
        CHECK(e.at("y").get<double>() == coords(l, 1));
        CHECK((e.at("stats").is_null() || e.at("stats").at("mean_length").is_number()));
    }
}

TEST_CASE("handlers: exemplars") {
    const Service svc(fx().bundle, fx().corpus);
    CHECK(svc.exemplars(999).status == 404);
    CHECK(svc.exemplars(-1).status == 404);
    CHECK(svc.exemplar_audio("999-0").status == 404);
    std::size_t total = 0;
    for (int l = 0; l < 12; ++l) {
        const auto r = svc.exemplars(l);
        REQUIRE(r.status == 200);
        const auto doc = r.json();
        for (const auto& e : doc.at("exemplars")) {
            ++total;
            CHECK(e.at("n_frames").get<std::size_t>() >= 5);
            CHECK(e.at("end").get<double>() - e.at("start").get<double>() >= 0.1 - 1e-9);
            const auto audio = svc.exemplar_audio(e.at("id").get<std::string>());
            REQUIRE(audio.status == 200);
            CHECK(audio.content_type == "audio/wav");
            const AudioClip clip = decode_wav(audio.body);
            CHECK(clip.duration() == doctest::Approx(e.at("end").get<double>() - e.at("start").get<double>()).epsilon(1e-3));
        }
    }
    CHECK(total > 0);
}

TEST_CASE("handlers: samples") {
    const Service svc(fx().bundle, fx().corpus);
    REQUIRE(fx().corpus.entries.size() == 30);
    const auto a = svc.samples(20).json();
    REQUIRE(a.at("samples").size() == 20);
    std::set<std::string> ids;
    for (const auto& s : a.at("samples")) {
        ids.insert(s.at("sentence_id").get<std::string>());
        CHECK(s.at("runs").is_array());
    }
    CHECK(ids.size() == 20);
    const Service again(fx().bundle, fx().corpus);
    CHECK(again.samples(20).json() == a);
    CHECK(svc.samples(100).json().at("samples").size() == 30);

    const auto first = a.at("samples")[0];
    const auto audio = svc.sentence_audio(first.at("sentence_id").get<std::string>());
    REQUIRE(audio.status == 200);
    CHECK(decode_wav(audio.body).duration() ==
          doctest::Approx(first.at("end").get<double>() - first.at("start").get<double>()).epsilon(1e-3));
    CHECK(svc.sentence_audio("nope").status == 404);
}

TEST_CASE("handlers: no bundle loaded") {
    const Service svc(std::nullopt, fx().corpus);
    CHECK(svc.transcribe(planted_wav()).status == 503);
    CHECK(svc.vocabulary().status == 503);
    CHECK(svc.phonemes().status == 503);
    CHECK(svc.exemplars(0).status == 503);
    CHECK(svc.samples(20).status == 503);
    CHECK(svc.health().json().at("bundle_loaded") == false);
}

TEST_CASE("HTTP: endpoints over a live server") {
    Running server(fx().bundle);
    auto cli = server.client();

    auto health = cli.Get("/api/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

    httplib::MultipartFormDataItems items{{"file", planted_wav(), "planted.wav", "audio/wav"}};
    auto multipart = cli.Post("/api/transcribe", items);
    REQUIRE(multipart);
    CHECK(multipart->status == 200);
    const auto doc = nlohmann::json::parse(multipart->body);
    check_annotated_schema(doc);
    CHECK_FALSE(doc.at("word_spans").empty());

    auto raw = cli.Post("/api/transcribe", planted_wav(), "audio/wav");
    REQUIRE(raw);
    CHECK(raw->status == 200);
    CHECK(nlohmann::json::parse(raw->body) == doc);

    auto empty = cli.Post("/api/transcribe", "", "audio/wav");
    REQUIRE(empty);
    CHECK(empty->status == 400);
    auto junk = cli.Post("/api/transcribe", "hello", "application/octet-stream");
    REQUIRE(junk);
    CHECK(junk->status == 400);
    CHECK(nlohmann::json::parse(junk->body).at("error") == "unsupported format");

    auto vocab = cli.Get("/api/vocabulary");
    REQUIRE(vocab);
    check_vocabulary_schema(nlohmann::json::parse(vocab->body));

    auto ph = cli.Get("/api/phonemes");
    REQUIRE(ph);
    CHECK(nlohmann::json::parse(ph->body).at("phonemes").size() == 12);

    auto unknown = cli.Get("/api/phonemes/999/exemplars");
    REQUIRE(unknown);
    CHECK(unknown->status == 404);

    auto ex = cli.Get("/api/phonemes/0/exemplars");
    REQUIRE(ex);
    CHECK(ex->status == 200);

    auto samples = cli.Get("/api/samples");
    REQUIRE(samples);
    CHECK(nlohmann::json::parse(samples->body).at("samples").size() == 20);
    auto bad_count = cli.Get("/api/samples?count=abc");
    REQUIRE(bad_count);
    CHECK(bad_count->status == 400);

    const auto sid = nlohmann::json::parse(samples->body).at("samples")[0].at("sentence_id").get<std::string>();
    CHECK(nlohmann::json::parse(samples->body).at("samples")[0].at("audio_url").get<std::string>().find('#') ==
          std::string::npos);
    auto audio = cli.Get(("/api/sentences/" + httplib::detail::encode_query_param(sid) + "/audio").c_str());
    REQUIRE(audio);
    CHECK(audio->status == 200);
    CHECK(audio->get_header_value("Content-Type") == "audio/wav");
    CHECK_NOTHROW(decode_wav(audio->body));

    auto preflight = cli.Options("/api/transcribe");
    REQUIRE(preflight);
    CHECK(preflight->status == 204);

    auto missing = cli.Get("/api/nothing-here");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(nlohmann::json::parse(missing->body).contains("error"));
}

TEST_CASE("HTTP: oversized upload and missing bundle") {
    ServiceOptions small;
    small.max_upload_bytes = 4096;
    Running limited(fx().bundle, small);
    auto cli = limited.client();
    auto big = cli.Post("/api/transcribe", planted_wav(), "audio/wav");
    REQUIRE(big);
    CHECK(big->status == 413);

    Running empty(std::nullopt);
    auto c2 = empty.client();
    auto vocab = c2.Get("/api/vocabulary");
    REQUIRE(vocab);
    CHECK(vocab->status == 503);
}

TEST_CASE("HTTP: concurrent identical requests agree") {
    Running server(fx().bundle);
    const std::string wav = planted_wav();
    std::vector<std::future<std::string>> jobs;
    for (int i = 0; i < 6; ++i) {
        jobs.push_back(std::async(std::launch::async, [&server, &wav, i] {
            auto cli = server.client();
            auto res = i % 2 == 0 ? cli.Post("/api/transcribe", wav, "audio/wav") : cli.Get("/api/phonemes/1/exemplars");
            return res ? std::to_string(res->status) + res->body : std::string("failed");
        }));
    }
    std::vector<std::string> bodies;
    for (auto& j : jobs) bodies.push_back(j.get());
    for (std::size_t i = 2; i < bodies.size(); ++i) CHECK(bodies[i] == bodies[i - 2]);
    CHECK(bodies[0].rfind("200", 0) == 0);
}
