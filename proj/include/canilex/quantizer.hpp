#pragma once

#include "canilex/audio.hpp"
#include "canilex/error.hpp"
#include "canilex/labels.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace canilex {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct BasicCodebook {
    DenseMatrix<Scalar> centroids;  // k x dim
    std::uint64_t seed = 0;
    Scalar inertia = 0;
    std::size_t n_training_frames = 0;

    Eigen::Index k() const { return centroids.rows(); }
    Eigen::Index dim() const { return centroids.cols(); }

    bool operator==(const BasicCodebook& other) const {
        return centroids.rows() == other.centroids.rows() && centroids.cols() == other.centroids.cols() &&
               centroids == other.centroids && seed == other.seed && inertia == other.inertia &&
               n_training_frames == other.n_training_frames;
    }
};

using Codebook = BasicCodebook<double>;

struct KMeansOptions {
    int k = 50;
    std::uint64_t seed = 7;
    int restarts = 10;
    int max_iters = 300;
    double rel_tol = 1e-6;
};

// Inertia after every assignment step of one restart.
struct KMeansTrace {
    std::vector<double> inertia;
    bool converged = false;
};

struct InertiaPoint {
    int k = 0;
    double inertia = 0.0;
};

namespace detail {

template <typename Scalar>
struct Assignment {
    std::vector<int> labels;
    std::vector<Scalar> dist2;
    Scalar inertia = 0;
};

template <typename Derived, typename CDerived>
int nearest_centroid(const Eigen::MatrixBase<Derived>& x, const Eigen::MatrixBase<CDerived>& centroids,
                     typename Derived::Scalar* best_dist2 = nullptr) {
    using Scalar = typename Derived::Scalar;
    int best = 0;
    Scalar best_d = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const Scalar d = (centroids.row(c) - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (best_dist2 != nullptr) *best_dist2 = best_d;
    return best;
}

template <typename Scalar>
Assignment<Scalar> assign_all(const DenseMatrix<Scalar>& data, const DenseMatrix<Scalar>& centroids) {
    Assignment<Scalar> a;
    const auto n = static_cast<std::size_t>(data.rows());
    a.labels.resize(n);
    a.dist2.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        a.labels[i] = nearest_centroid(data.row(static_cast<Eigen::Index>(i)), centroids, &a.dist2[i]);
        a.inertia += a.dist2[i];
    }
    return a;
}

// Index drawn with probability proportional to d2; never a zero-mass point.
inline Eigen::Index sample_by_mass(const std::vector<double>& d2, double total, double u) {
    const double target = u * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < d2.size(); ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) return static_cast<Eigen::Index>(i);
    }
    for (std::size_t i = d2.size(); i-- > 0;) {  // rounding at the tail: last point with mass
        if (d2[i] > 0.0) return static_cast<Eigen::Index>(i);
    }
    return 0;
}

// Greedy k-means++ seeding: first centre uniform; every later centre is the best
// (lowest resulting potential) of 2 + floor(ln k) candidates drawn by squared distance.
template <typename Scalar>
DenseMatrix<Scalar> kmeanspp_init(const DenseMatrix<Scalar>& data, int k, std::mt19937_64& rng) {
    const Eigen::Index n = data.rows();
    DenseMatrix<Scalar> centroids(k, data.cols());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto pick_uniform = [&] {
        return std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(unit(rng) * static_cast<double>(n)));
    };
    auto distances_to = [&](Eigen::Index p, std::vector<double>& out) {
        for (Eigen::Index i = 0; i < n; ++i) {
            out[static_cast<std::size_t>(i)] = static_cast<double>((data.row(i) - data.row(p)).squaredNorm());
        }
    };
    const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));

    Eigen::Index first = pick_uniform();
    centroids.row(0) = data.row(first);
    std::vector<double> d2(static_cast<std::size_t>(n)), cand(d2.size()), best(d2.size());
    distances_to(first, d2);
    for (int c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        if (total <= 0.0) {
            centroids.row(c) = data.row(pick_uniform());
            continue;
        }
        Eigen::Index chosen = -1;
        double chosen_potential = std::numeric_limits<double>::infinity();
        for (int t = 0; t < trials; ++t) {
            const Eigen::Index p = sample_by_mass(d2, total, unit(rng));
            distances_to(p, cand);
            double potential = 0.0;
            for (std::size_t i = 0; i < cand.size(); ++i) {
                cand[i] = std::min(cand[i], d2[i]);
                potential += cand[i];
            }
            if (potential < chosen_potential) {
                chosen_potential = potential;
                chosen = p;
                best.swap(cand);
            }
        }
        centroids.row(c) = data.row(chosen);
        d2.swap(best);
    }
    return centroids;
}

// Lloyd iterations from `centroids` in place; returns the final assignment.
template <typename Scalar>
Assignment<Scalar> lloyd(const DenseMatrix<Scalar>& data, DenseMatrix<Scalar>& centroids, int max_iters,
                         double rel_tol, KMeansTrace& trace) {
    const Eigen::Index k = centroids.rows();
    Assignment<Scalar> current = assign_all(data, centroids);
    trace.inertia.push_back(static_cast<double>(current.inertia));
    for (int iter = 0; iter < max_iters; ++iter) {
        DenseMatrix<Scalar> sums = DenseMatrix<Scalar>::Zero(k, data.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < data.rows(); ++i) {
            const int c = current.labels[static_cast<std::size_t>(i)];
            sums.row(c) += data.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        std::vector<Scalar> donor_d2 = current.dist2;
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centroids.row(c) = sums.row(c) / static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            // Empty cluster: reseed at the point farthest from its centroid.
            const auto far = std::max_element(donor_d2.begin(), donor_d2.end()) - donor_d2.begin();
            centroids.row(c) = data.row(far);
            donor_d2[static_cast<std::size_t>(far)] = Scalar(-1);
        }
        Assignment<Scalar> next = assign_all(data, centroids);
        trace.inertia.push_back(static_cast<double>(next.inertia));
        const double prev = static_cast<double>(current.inertia);
        const double improvement = prev - static_cast<double>(next.inertia);
        const bool stable = next.labels == current.labels;
        current = std::move(next);
        if (stable || prev <= 0.0 || improvement < rel_tol * prev) {
            trace.converged = true;
            break;
        }
    }
    return current;
}

// Rows sorted lexicographically so training is independent of input frame order.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> canonical_rows(const Eigen::MatrixBase<Derived>& frames) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(frames.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index c = 0; c < frames.cols(); ++c) {
            if (frames(a, c) != frames(b, c)) return frames(a, c) < frames(b, c);
        }
        return false;
    });
    DenseMatrix<typename Derived::Scalar> out(frames.rows(), frames.cols());
    for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = frames.row(order[i]);
    return out;
}

inline std::mt19937_64 restart_rng(std::uint64_t seed, int restart) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(restart)};
    return std::mt19937_64(seq);
}

}  // namespace detail

/// Trains a k-means codebook: k-means++ seeding per restart, Lloyd iterations
/// until the relative inertia improvement drops below rel_tol, best restart kept.
/// `traces`, when given, receives the per-iteration inertia of every restart.
template <typename Derived>
BasicCodebook<typename Derived::Scalar> train_codebook(const Eigen::MatrixBase<Derived>& frames,
                                                       const KMeansOptions& options,
                                                       std::vector<KMeansTrace>* traces = nullptr) {
    using Scalar = typename Derived::Scalar;
    if (options.k < 1) throw ConfigError("k must be >= 1");
    if (options.restarts < 1) throw ConfigError("restarts must be >= 1");
    if (frames.rows() < options.k) {
        throw Error("train_codebook: " + std::to_string(frames.rows()) + " frames < k = " + std::to_string(options.k));
    }
    if (!frames.allFinite()) throw Error("train_codebook: non-finite input");

    const DenseMatrix<Scalar> data = detail::canonical_rows(frames);
    BasicCodebook<Scalar> best;
    bool have_best = false;
    for (int r = 0; r < options.restarts; ++r) {
        auto rng = detail::restart_rng(options.seed, r);
        DenseMatrix<Scalar> centroids = detail::kmeanspp_init(data, options.k, rng);
        KMeansTrace trace;
        const auto result = detail::lloyd(data, centroids, options.max_iters, options.rel_tol, trace);
        if (!have_best || result.inertia < best.inertia) {
            best.centroids = std::move(centroids);
            best.inertia = result.inertia;
            have_best = true;
        }
        if (traces != nullptr) traces->push_back(std::move(trace));
    }
    best.seed = options.seed;
    best.n_training_frames = static_cast<std::size_t>(frames.rows());
    return best;
}

/// Nearest centroid per row (Euclidean); ties go to the lowest index.
template <typename Derived, typename Scalar>
std::vector<int> assign_labels(const Eigen::MatrixBase<Derived>& frames, const BasicCodebook<Scalar>& codebook) {
    if (frames.rows() > 0 && frames.cols() != codebook.dim()) {
        throw Error("assign_labels: feature dim " + std::to_string(frames.cols()) + " != codebook dim " +
                    std::to_string(codebook.dim()));
    }
    std::vector<int> labels(static_cast<std::size_t>(frames.rows()));
    for (Eigen::Index i = 0; i < frames.rows(); ++i) {
        labels[static_cast<std::size_t>(i)] = detail::nearest_centroid(frames.row(i), codebook.centroids);
    }
    return labels;
}

inline LabelSequence assign_labels(const FrameFeatures& features, const Codebook& codebook,
                                   std::string sentence_id = {}, std::string dog_id = {}) {
    return {assign_labels(features.matrix, codebook), features.hop, std::move(sentence_id), std::move(dog_id)};
}

template <typename Derived>
std::vector<InertiaPoint> inertia_scan(const Eigen::MatrixBase<Derived>& frames, std::span<const int> ks,
                                       std::uint64_t seed, int restarts, int max_iters = 300, double rel_tol = 1e-6) {
    std::vector<InertiaPoint> out;
    out.reserve(ks.size());
    for (int k : ks) {
        const auto cb = train_codebook(frames, KMeansOptions{k, seed, restarts, max_iters, rel_tol});
        out.push_back({k, static_cast<double>(cb.inertia)});
    }
    return out;
}

/// Centred centroids projected onto the top two principal axes, columns by
/// descending eigenvalue; each axis is signed so its largest-magnitude entry is positive.
template <typename Scalar>
DenseMatrix<Scalar> project_centroids_2d(const BasicCodebook<Scalar>& codebook) {
    const auto& C = codebook.centroids;
    if (C.rows() < 2) throw Error("project_centroids_2d: need k >= 2");
    const DenseMatrix<Scalar> centered = C.rowwise() - C.colwise().mean();
    const DenseMatrix<Scalar> cov = centered.transpose() * centered / static_cast<Scalar>(C.rows());
    Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> solver(cov);
    DenseMatrix<Scalar> axes = DenseMatrix<Scalar>::Zero(C.cols(), 2);
    const Eigen::Index d = C.cols();
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(2, d); ++j) {
        auto v = solver.eigenvectors().col(d - 1 - j);  // eigenvalues ascend
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        axes.col(j) = v[arg] < 0 ? Eigen::Matrix<Scalar, Eigen::Dynamic, 1>(-v) : Eigen::Matrix<Scalar, Eigen::Dynamic, 1>(v);
    }
    return centered * axes;
}

// JSON: {"k","dim","seed","inertia","n_training_frames","centroids":[row-major]}
nlohmann::json codebook_to_json(const Codebook& codebook);
Codebook codebook_from_json(const nlohmann::json& doc);

nlohmann::json label_sequence_to_json(const LabelSequence& labels);
LabelSequence label_sequence_from_json(const nlohmann::json& doc);

// Row-wise concatenation; all inputs must share dim.
Eigen::MatrixXd stack_features(std::span<const FrameFeatures> features);

}  // namespace canilex
