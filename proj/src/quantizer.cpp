#include "canilex/quantizer.hpp"

namespace canilex {

nlohmann::json codebook_to_json(const Codebook& codebook) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(codebook.centroids.size()));
    for (Eigen::Index r = 0; r < codebook.k(); ++r) {
        for (Eigen::Index c = 0; c < codebook.dim(); ++c) flat.push_back(codebook.centroids(r, c));
    }
    return {{"k", codebook.k()},
            {"dim", codebook.dim()},
            {"seed", codebook.seed},
            {"inertia", codebook.inertia},
            {"n_training_frames", codebook.n_training_frames},
            {"centroids", flat}};
}

Codebook codebook_from_json(const nlohmann::json& doc) {
    try {
        Codebook cb;
        const auto k = doc.at("k").get<Eigen::Index>();
        const auto dim = doc.at("dim").get<Eigen::Index>();
        const auto flat = doc.at("centroids").get<std::vector<double>>();
        if (k < 1 || dim < 1) throw FormatError("codebook: k and dim must be >= 1");
        if (static_cast<Eigen::Index>(flat.size()) != k * dim) throw FormatError("codebook: centroid count mismatch");
        cb.centroids.resize(k, dim);
        for (Eigen::Index r = 0; r < k; ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) cb.centroids(r, c) = flat[static_cast<std::size_t>(r * dim + c)];
        }
        if (!cb.centroids.allFinite()) throw FormatError("codebook: non-finite centroid");
        cb.seed = doc.at("seed").get<std::uint64_t>();
        cb.inertia = doc.at("inertia").get<double>();
        cb.n_training_frames = doc.value("n_training_frames", std::size_t{0});
        if (cb.inertia < 0.0) throw FormatError("codebook: negative inertia");
        return cb;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("codebook: ") + e.what());
    }
}

nlohmann::json label_sequence_to_json(const LabelSequence& labels) {
    return {{"sentence_id", labels.sentence_id},
            {"dog_id", labels.dog_id},
            {"frame_duration", labels.frame_duration},
            {"labels", labels.labels}};
}

LabelSequence label_sequence_from_json(const nlohmann::json& doc) {
    try {
        LabelSequence out;
        out.sentence_id = doc.value("sentence_id", std::string{});
        out.dog_id = doc.value("dog_id", std::string{});
        out.frame_duration = doc.at("frame_duration").get<double>();
        out.labels = doc.at("labels").get<std::vector<int>>();
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("label sequence: ") + e.what());
    }
}

Eigen::MatrixXd stack_features(std::span<const FrameFeatures> features) {
    Eigen::Index rows = 0;
    Eigen::Index dim = -1;
    for (const auto& f : features) {
        if (f.n_frames() == 0) continue;
        if (dim >= 0 && f.dim() != dim) throw Error("stack_features: dimension mismatch");
        dim = f.dim();
        rows += f.n_frames();
    }
    Eigen::MatrixXd out(rows, std::max<Eigen::Index>(dim, 0));
    Eigen::Index at = 0;
    for (const auto& f : features) {
        if (f.n_frames() == 0) continue;
        out.middleRows(at, f.n_frames()) = f.matrix;
        at += f.n_frames();
    }
    return out;
}

}  // namespace canilex
