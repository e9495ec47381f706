#pragma once

// Run plumbing on top of the trainer: one directory per configuration, final
// test evaluation, mu sweeps and summary tables.

#include <filesystem>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparse/config.hpp"
#include "sparse/eval.hpp"
#include "sparse/trainer.hpp"

namespace sparse::experiment {

namespace fs = std::filesystem;

class RunExistsError : public std::runtime_error {
public:
    explicit RunExistsError(const fs::path& dir);
};

// <out>/<dataset>_n<shots>_mu<mu>_s<seed>_<fingerprint>
fs::path run_directory(const TrainConfig& config);

struct RunOptions {
    bool force = false;   // wipe an existing run with the same fingerprint
    bool resume = false;  // continue from the snapshot in an existing run
    std::shared_ptr<const data::DatasetArchive> archive;  // loaded from the config when null
    std::ostream* progress = nullptr;                      // one line per epoch
};

struct ExperimentResult {
    fs::path run_dir;
    checkpoint::BestRecord best;
    std::vector<trainer::EpochRecord> history;
    eval::EvalResult sparse;      // test split, classifier only
    eval::EvalResult sparse_ens;  // test split, late fusion
};

// Trains, then touches the test split once with the best checkpoint in both
// inference modes; results land in <run>/results.json.
ExperimentResult run_experiment(const TrainConfig& config, const RunOptions& options = {});

// Re-evaluates the best checkpoint of a finished run on one split.
eval::EvalResult evaluate_run(const fs::path& run_dir, const std::string& split, InferenceMode mode,
                              std::shared_ptr<const data::DatasetArchive> archive = nullptr);

// A test-split result together with the mu of the run that produced it.
struct RunResult {
    eval::EvalResult result;
    int mu = 0;
};
void write_results(const fs::path& path, const std::vector<RunResult>& results);
std::vector<RunResult> read_results(const fs::path& path);

struct SweepRow {
    int shots = 0;
    int mu = 0;
    std::uint64_t seed = 0;
    double val_sparse = 0.0;      // best-epoch validation accuracy, classifier only
    double val_sparse_ens = 0.0;  // best-epoch validation accuracy, late fusion
};

inline const std::vector<int>& default_mu_values() {
    static const std::vector<int> v{0, 1, 10, 25, 50, 100};
    return v;
}

// One run per (shots, mu) pair; runs are kept under the base config's out dir.
std::vector<SweepRow> sweep_mu(const TrainConfig& base, const std::vector<int>& mu_values,
                               const std::vector<int>& shot_settings, const RunOptions& options = {});
void write_sweep_table(const fs::path& path, const std::vector<SweepRow>& rows);
// Validation accuracy against shots, one line per mu.
void write_sweep_plot(const fs::path& path, const std::vector<SweepRow>& rows, InferenceMode mode);

// Summaries over every results.json below `root`.
struct ReportTables {
    std::string main;      // (mu, dataset) x (mode, shots), plus the across-dataset average per mu
    std::string appendix;  // per-class accuracies
};
ReportTables build_report(const std::vector<RunResult>& results);
std::vector<RunResult> collect_results(const fs::path& root);

}  // namespace sparse::experiment
