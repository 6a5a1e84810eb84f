#pragma once

#include "canilex/audio.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace canilex {

// Synthetic vocalisation corpus: each sentence concatenates a fixed set of
// tone templates in a random order, over white noise at a set SNR.

struct Tone {
    double frequency = 0.0;  // Hz
    double duration = 0.0;   // seconds
};

using ToneTemplate = std::vector<Tone>;

struct SynthConfig {
    int sample_rate = kWorkingRate;
    int n_templates = 5;
    int min_tones = 3;
    int max_tones = 5;
    std::vector<double> tone_pool = {500, 1000, 1500, 2000, 2500, 3000, 3500, 4000, 4500, 5000, 5500, 6000};
    std::vector<double> durations = {0.06, 0.08, 0.10, 0.12};
    double amplitude = 0.5;
    double snr_db = 20.0;
};

// Distinct tones inside a template; every pool tone is used by some template;
// no template's frequency sequence is a contiguous part of another's.
std::vector<ToneTemplate> make_templates(const SynthConfig& config, std::uint64_t seed);

// Renders the templates in `order` back to back, plus noise.
AudioClip render_sentence(std::span<const ToneTemplate> templates, std::span<const int> order,
                          const SynthConfig& config, std::mt19937_64& rng);

AudioClip render_tone(double frequency, double duration, const SynthConfig& config, std::mt19937_64& rng);

struct SynthSentence {
    AudioClip clip;
    std::vector<int> order;
};

// n_dogs x sentences_per_dog sentences, each a random permutation of all templates.
std::vector<SynthSentence> generate_corpus(std::span<const ToneTemplate> templates, const SynthConfig& config,
                                           int n_dogs, int sentences_per_dog, std::uint64_t seed,
                                           const std::string& id_prefix = "s");

}  // namespace canilex
