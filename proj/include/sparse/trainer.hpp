#pragma once

// Training driver: a supervised epoch every epoch, and a pseudo-labelling +
// translation + synthetic-classifier phase every mu-th epoch, with per-epoch
// validation and best-checkpoint tracking.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "sparse/checkpoint.hpp"
#include "sparse/config.hpp"
#include "sparse/data.hpp"
#include "sparse/eval.hpp"
#include "sparse/networks.hpp"
#include "sparse/optim.hpp"
#include "sparse/pseudo_label.hpp"

namespace sparse::trainer {

namespace fs = std::filesystem;

// "toy" generates the shapes dataset; anything else is an archive path.
std::shared_ptr<const data::DatasetArchive> load_dataset(const TrainConfig& config);

// Independent RNG streams derived from one master seed.
struct SeedStreams {
    std::mt19937_64 split, init, augment, mixup, shuffle, target, penalty;

    static SeedStreams from_master(std::uint64_t seed);
};

struct StepLoss {
    int epoch = 0;
    int step = 0;
    double prototype = 0, mutual = 0, entropy = 0, mixup = 0, total = 0;
};

struct SupervisedSummary {
    int steps = 0;
    double mean_total = 0.0;
};

struct PhaseSummary {
    bool ran = false;
    bool skipped = false;  // ran, but nothing passed the threshold in any batch
    int batches = 0;
    std::int64_t scored = 0;
    std::int64_t selected = 0;
    double mean_threshold = 0.0;
    double pseudo_accuracy = 0.0;  // against hidden ground truth; diagnostics only
    double critic_loss = 0.0;
    double generator_loss = 0.0;
    double synthetic_loss = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double supervised_loss = 0.0;
    int supervised_steps = 0;
    bool unsupervised = false;
    std::int64_t selected = 0;
    double pseudo_accuracy = 0.0;
    double val_sparse = 0.0;
    double val_sparse_ens = 0.0;
    bool improved = false;

    bool operator==(const EpochRecord&) const = default;
};

class Trainer {
public:
    // An empty run_dir keeps everything in memory (no logs, no checkpoints).
    Trainer(TrainConfig config, std::shared_ptr<const data::DatasetArchive> archive, fs::path run_dir = {});

    SupervisedSummary run_supervised_epoch(int epoch);
    PhaseSummary run_unsupervised_phase(int epoch);
    // Persists networks and EMA store when `metric` strictly beats the best so far.
    bool checkpoint_if_best(int epoch, double metric);

    // Trains up to config.epochs, or stops after `halt_after` (writing a
    // resumable snapshot) when given.
    const std::vector<EpochRecord>& train(std::optional<int> halt_after = std::nullopt);

    // Restores the snapshot under run_dir/resume; false if there is none.
    bool resume();

    const TrainConfig& config() const { return config_; }
    const data::FewShotSplit& split() const { return split_; }
    const networks::NetworkTriplet& networks() const { return nets_; }
    networks::NetworkTriplet& networks() { return nets_; }
    const pseudo::EnsembleState& ensemble() const { return ensemble_; }
    const std::vector<EpochRecord>& history() const { return history_; }
    const std::vector<StepLoss>& step_log() const { return steps_; }
    const checkpoint::BestRecord& best() const { return best_; }
    int epoch() const { return epoch_; }
    int unsupervised_phases() const { return unsupervised_phases_; }
    const fs::path& run_dir() const { return run_dir_; }
    fs::path best_dir() const { return run_dir_ / "best"; }

private:
    eval::EvalResult validate(InferenceMode mode) const;
    void save_snapshot() const;
    void append_logs(const EpochRecord& record, const PhaseSummary& phase, std::size_t first_step) const;
    void write_log_headers() const;

    TrainConfig config_;
    std::shared_ptr<const data::DatasetArchive> archive_;
    fs::path run_dir_;
    SeedStreams rng_;
    data::FewShotSplit split_;
    networks::NetworkTriplet nets_;
    optim::AdamW g_opt_, d_opt_, c_opt_;
    pseudo::EnsembleState ensemble_;
    checkpoint::BestRecord best_;
    std::vector<EpochRecord> history_;
    std::vector<StepLoss> steps_;
    int epoch_ = 0;
    int unsupervised_phases_ = 0;
};

}  // namespace sparse::trainer
