#include "canilex/synth.hpp"

#include "canilex/error.hpp"
#include "canilex/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace canilex {

std::vector<ToneTemplate> make_templates(const SynthConfig& config, std::uint64_t seed) {
    const auto pool_size = static_cast<int>(config.tone_pool.size());
    if (config.min_tones < 1 || config.max_tones < config.min_tones || config.max_tones > pool_size) {
        throw ConfigError("synth: invalid template length range");
    }
    if (config.n_templates * config.max_tones < pool_size) {
        throw ConfigError("synth: templates cannot cover the tone pool");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> len_dist(config.min_tones, config.max_tones);
    std::uniform_int_distribution<std::size_t> dur_dist(0, config.durations.size() - 1);

    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<int> lengths(static_cast<std::size_t>(config.n_templates));
        for (auto& l : lengths) l = len_dist(rng);
        if (std::accumulate(lengths.begin(), lengths.end(), 0) < pool_size) continue;

        // Deal the shuffled pool across template slots first, then fill the rest.
        std::vector<int> deck(static_cast<std::size_t>(pool_size));
        std::iota(deck.begin(), deck.end(), 0);
        std::shuffle(deck.begin(), deck.end(), rng);
        std::vector<std::vector<int>> seqs(lengths.size());
        std::size_t next = 0;
        bool ok = true;
        for (std::size_t t = 0; t < lengths.size() && ok; ++t) {
            for (int slot = 0; slot < lengths[t]; ++slot) {
                int pick = -1;
                if (next < deck.size() && std::find(seqs[t].begin(), seqs[t].end(), deck[next]) == seqs[t].end()) {
                    pick = deck[next++];
                } else {
                    std::vector<int> free;
                    for (int f = 0; f < pool_size; ++f) {
                        if (std::find(seqs[t].begin(), seqs[t].end(), f) == seqs[t].end()) free.push_back(f);
                    }
                    pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
                }
                seqs[t].push_back(pick);
            }
        }
        if (next < deck.size()) continue;
        for (std::size_t a = 0; a < seqs.size() && ok; ++a) {
            for (std::size_t b = 0; b < seqs.size() && ok; ++b) {
                if (a != b && is_contiguous_subsequence(seqs[a], seqs[b])) ok = false;
            }
        }
        if (!ok) continue;

        std::vector<ToneTemplate> templates;
        for (const auto& seq : seqs) {
            ToneTemplate t;
            for (int f : seq) t.push_back({config.tone_pool[static_cast<std::size_t>(f)], config.durations[dur_dist(rng)]});
            templates.push_back(std::move(t));
        }
        return templates;
    }
    throw Error("synth: could not draw a valid template set");
}

AudioClip render_tone(double frequency, double duration, const SynthConfig& config, std::mt19937_64& rng) {
    AudioClip clip;
    clip.sample_rate = config.sample_rate;
    const auto n = static_cast<std::size_t>(std::llround(duration * config.sample_rate));
    const double noise_sd = config.amplitude / std::sqrt(2.0) * std::pow(10.0, -config.snr_db / 20.0);
    std::normal_distribution<double> noise(0.0, noise_sd);
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / config.sample_rate;
        clip.samples[i] = std::clamp(config.amplitude * std::sin(2.0 * std::numbers::pi * frequency * t) + noise(rng),
                                     -1.0, 1.0);
    }
    return clip;
}

AudioClip render_sentence(std::span<const ToneTemplate> templates, std::span<const int> order,
                          const SynthConfig& config, std::mt19937_64& rng) {
    AudioClip clip;
    clip.sample_rate = config.sample_rate;
    for (int idx : order) {
        for (const Tone& tone : templates[static_cast<std::size_t>(idx)]) {
            const AudioClip piece = render_tone(tone.frequency, tone.duration, config, rng);
            clip.samples.insert(clip.samples.end(), piece.samples.begin(), piece.samples.end());
        }
    }
    return clip;
}

std::vector<SynthSentence> generate_corpus(std::span<const ToneTemplate> templates, const SynthConfig& config,
                                           int n_dogs, int sentences_per_dog, std::uint64_t seed,
                                           const std::string& id_prefix) {
    std::mt19937_64 rng(seed);
    std::vector<SynthSentence> out;
    std::vector<int> order(templates.size());
    for (int d = 0; d < n_dogs; ++d) {
        for (int s = 0; s < sentences_per_dog; ++s) {
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            SynthSentence sentence{render_sentence(templates, order, config, rng), order};
            sentence.clip.dog_id = "dog" + std::to_string(d);
            sentence.clip.source_id = id_prefix + "_dog" + std::to_string(d) + "_" + std::to_string(s);
            out.push_back(std::move(sentence));
        }
    }
    return out;
}

}  // namespace canilex
