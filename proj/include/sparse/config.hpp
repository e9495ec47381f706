#pragma once

// Run configuration. Serialises to "key = value" text; every CLI flag has a
// matching key.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sparse/networks.hpp"
#include "sparse/pseudo_label.hpp"
#include "sparse/sup_losses.hpp"
#include "sparse/translation.hpp"

namespace sparse {

enum class InferenceMode { classifier_only, late_fusion };

std::string to_string(InferenceMode mode);  // "sparse" / "sparse-ens"
InferenceMode parse_mode(const std::string& text);

struct TrainConfig {
    std::string dataset = "toy";  // archive path, or "toy" for the generated shapes dataset
    int shots = 5;
    int mu = 10;
    int epochs = 1000;
    std::uint64_t seed = 0;

    std::int64_t resolution = 128;
    std::int64_t depth = 4;
    std::int64_t width = 32;

    double learning_rate = 2e-4;
    double weight_decay = 1e-4;
    int supervised_batch = 16;
    int unsupervised_batch = 32;
    bool augment = true;

    sup::LossWeights loss;
    translation::GanWeights gan;
    pseudo::EnsembleParams ensemble;

    InferenceMode select_metric = InferenceMode::late_fusion;
    int resume_every = 10;  // epochs between resumable snapshots; 0 disables

    // generated dataset only
    double toy_noise = 0.1;
    double toy_contrast = 0.5;
    std::uint64_t toy_seed = 7;

    std::filesystem::path out = "runs";
    std::string device = "cpu";

    // Throws std::invalid_argument on out-of-range values.
    void validate() const;

    // Throws std::invalid_argument for unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();

    std::string to_text() const;
    static TrainConfig from_text(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
    // Applies "key = value" lines on top of this config.
    void merge_text(const std::string& text);

    // Hash over every key that changes the outcome of a run (excludes out,
    // device and resume_every).
    std::string fingerprint() const;

    networks::ArchSpec arch(std::int64_t channels, std::int64_t num_classes) const;
};

// Exact schedule rule: never for mu = 0, otherwise every mu-th epoch (1-based).
bool should_run_unsupervised(int epoch, int mu);

}  // namespace sparse
