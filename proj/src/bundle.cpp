#include "canilex/bundle.hpp"

#include "canilex/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

namespace canilex {

namespace {

constexpr std::string_view kBundleFormat = "canilex-bundle";

nlohmann::json payload_to_json(const ModelBundle& b) {
    return {
        {"features",
         {{"sample_rate", b.features.sample_rate},
          {"n_mels", b.features.n_mels},
          {"frame_duration", b.features.frame_duration},
          {"hop", b.features.hop}}},
        {"codebook", codebook_to_json(b.codebook)},
        {"combiner", {{"tolerance", b.combiner.tolerance}}},
        {"noise_labels", b.noise_labels},
        {"vocabulary", vocabulary_to_json(b.vocabulary)},
        {"n_min", b.n_min},
        {"n_max", b.n_max},
        {"phoneme_stats", phoneme_stats_to_json(b.phoneme_stats)},
        {"provenance",
         {{"seed", b.provenance.seed},
          {"corpus_digest", b.provenance.corpus_digest},
          {"n_clips", b.provenance.n_clips},
          {"n_sentences", b.provenance.n_sentences}}},
    };
}

ModelBundle payload_from_json(const nlohmann::json& p) {
    ModelBundle b;
    const auto& f = p.at("features");
    b.features.sample_rate = f.at("sample_rate").get<int>();
    b.features.n_mels = f.at("n_mels").get<int>();
    b.features.frame_duration = f.at("frame_duration").get<double>();
    b.features.hop = f.at("hop").get<double>();
    b.codebook = codebook_from_json(p.at("codebook"));
    b.combiner.tolerance = p.at("combiner").at("tolerance").get<int>();
    b.noise_labels = p.at("noise_labels").get<NoiseLabelSet>();
    b.vocabulary = vocabulary_from_json(p.at("vocabulary"));
    b.n_min = p.at("n_min").get<int>();
    b.n_max = p.at("n_max").get<int>();
    b.phoneme_stats = phoneme_stats_from_json(p.at("phoneme_stats"));
    const auto& prov = p.at("provenance");
    b.provenance.seed = prov.at("seed").get<std::uint64_t>();
    b.provenance.corpus_digest = prov.at("corpus_digest").get<std::string>();
    b.provenance.n_clips = prov.at("n_clips").get<std::size_t>();
    b.provenance.n_sentences = prov.at("n_sentences").get<std::size_t>();

    if (b.combiner.tolerance < 0) throw FormatError("bundle: negative tolerance");
    for (int label : b.noise_labels) {
        if (label < 0 || label >= b.codebook.k()) throw FormatError("bundle: noise label outside [0, k)");
    }
    if (b.features.n_mels < 1 || b.features.sample_rate <= 0 || !(b.features.hop > 0.0) ||
        b.features.frame_duration < b.features.hop) {
        throw FormatError("bundle: invalid feature config");
    }
    return b;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string serialize_bundle(const ModelBundle& bundle) {
    const nlohmann::json payload = payload_to_json(bundle);
    nlohmann::ordered_json doc;
    doc["format"] = kBundleFormat;
    doc["version"] = bundle.version;
    doc["created_at"] = bundle.provenance.created_at;
    doc["checksum"] = "sha256:" + sha256_hex(payload.dump());
    doc["payload"] = payload;
    return doc.dump(1) + "\n";
}

ModelBundle parse_bundle(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("bundle is corrupted: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kBundleFormat) throw FormatError("not a model bundle");
        const int version = doc.at("version").get<int>();
        if (version != kBundleVersion) throw FormatError("unknown bundle version " + std::to_string(version));
        const auto& payload = doc.at("payload");
        if (doc.at("checksum").get<std::string>() != "sha256:" + sha256_hex(payload.dump())) {
            throw FormatError("bundle checksum mismatch");
        }
        ModelBundle b = payload_from_json(payload);
        b.version = version;
        b.provenance.created_at = doc.value("created_at", std::string{});
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bundle: ") + e.what());
    }
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
    write_file(path, serialize_bundle(bundle));
}

ModelBundle load_bundle(const std::filesystem::path& path) { return parse_bundle(read_file(path)); }

}  // namespace canilex
