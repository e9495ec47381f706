#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sparse/experiment.hpp"

using namespace sparse;

namespace {

struct RunFlags {
    std::string config_file;
    std::optional<std::string> dataset, mode, out;
    std::optional<int> shots, mu, epochs;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> resolution;
    std::vector<std::string> overrides;
    bool force = false;
    bool resume = false;
    bool quiet = false;
};

void add_run_flags(CLI::App& cmd, RunFlags& f) {
    cmd.add_option("--config", f.config_file, "key = value file; flags override it")->check(CLI::ExistingFile);
    cmd.add_option("--dataset", f.dataset, "dataset .npz archive, or 'toy'");
    cmd.add_option("--shots", f.shots, "labeled samples per class");
    cmd.add_option("--mu", f.mu, "unsupervised phase every mu epochs (0 = supervised only)");
    cmd.add_option("--epochs", f.epochs);
    cmd.add_option("--seed", f.seed);
    cmd.add_option("--mode", f.mode, "checkpoint selection metric")->check(CLI::IsMember({"sparse", "sparse-ens"}));
    cmd.add_option("--out", f.out, "root directory for runs");
    cmd.add_option("--resolution", f.resolution);
    cmd.add_option("--set", f.overrides, "any config key, as key=value");
    cmd.add_flag("--force", f.force, "replace an existing run with the same configuration");
    cmd.add_flag("--resume", f.resume, "continue an interrupted run");
    cmd.add_flag("-q,--quiet", f.quiet);
}

// config file < environment < flags
TrainConfig build_config(const RunFlags& f) {
    TrainConfig c = f.config_file.empty() ? TrainConfig{} : TrainConfig::load(f.config_file);
    if (const char* dir = std::getenv("SPARSE_RUN_DIR")) c.out = dir;
    if (const char* dev = std::getenv("SPARSE_DEVICE")) c.device = dev;
    if (f.dataset) c.dataset = *f.dataset;
    if (f.shots) c.shots = *f.shots;
    if (f.mu) c.mu = *f.mu;
    if (f.epochs) c.epochs = *f.epochs;
    if (f.seed) c.seed = *f.seed;
    if (f.mode) c.select_metric = parse_mode(*f.mode);
    if (f.out) c.out = *f.out;
    if (f.resolution) c.resolution = *f.resolution;
    for (const auto& kv : f.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
}

void print_result(const eval::EvalResult& r) {
    std::cout << to_string(r.mode) << "\tmacro " << r.macro << "\tper-class";
    for (double v : r.per_class) std::cout << " " << v;
    std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised few-shot training with pseudo-labels and class-conditioned translation"};
    app.require_subcommand(1);

    RunFlags train_flags;
    auto* train = app.add_subcommand("train", "train one configuration and evaluate it on the test split");
    add_run_flags(*train, train_flags);

    std::string run_dir, split = "test", eval_mode = "sparse-ens";
    auto* evaluate = app.add_subcommand("evaluate", "evaluate the best checkpoint of a run");
    evaluate->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
    evaluate->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
    evaluate->add_option("--mode", eval_mode)->check(CLI::IsMember({"sparse", "sparse-ens", "both"}));

    RunFlags sweep_flags;
    std::vector<int> mu_values = experiment::default_mu_values();
    std::vector<int> shot_values;
    auto* sweep = app.add_subcommand("sweep-mu", "validation accuracy for several mu values");
    add_run_flags(*sweep, sweep_flags);
    sweep->add_option("--mu-values", mu_values)->delimiter(',');
    sweep->add_option("--shot-values", shot_values, "defaults to --shots")->delimiter(',');

    std::string report_root = "runs", report_prefix;
    auto* report = app.add_subcommand("report", "summary tables over every finished run below a directory");
    report->add_option("--root", report_root)->check(CLI::ExistingDirectory);
    report->add_option("--prefix", report_prefix, "write <prefix>main.tsv and <prefix>appendix.tsv");

    std::string toy_path;
    data::ToyOptions toy;
    auto* make_toy = app.add_subcommand("make-toy", "write the generated shapes dataset as an .npz archive");
    make_toy->add_option("output", toy_path)->required();
    make_toy->add_option("--size", toy.size);
    make_toy->add_option("--noise", toy.noise);
    make_toy->add_option("--contrast", toy.contrast);
    make_toy->add_option("--seed", toy.seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const auto c = build_config(train_flags);
            experiment::RunOptions opts;
            opts.force = train_flags.force;
            opts.resume = train_flags.resume;
            if (!train_flags.quiet) opts.progress = &std::cerr;
            const auto r = experiment::run_experiment(c, opts);
            std::cout << "run\t" << r.run_dir.string() << "\nbest epoch\t" << r.best.epoch << "\tval " << r.best.metric << "\n";
            print_result(r.sparse);
            print_result(r.sparse_ens);
        } else if (*evaluate) {
            for (auto mode : {InferenceMode::classifier_only, InferenceMode::late_fusion}) {
                if (eval_mode == "both" || parse_mode(eval_mode) == mode) {
                    print_result(experiment::evaluate_run(run_dir, split, mode));
                }
            }
        } else if (*sweep) {
            const auto c = build_config(sweep_flags);
            if (shot_values.empty()) shot_values = {c.shots};
            experiment::RunOptions opts;
            opts.force = sweep_flags.force;
            opts.resume = sweep_flags.resume;
            if (!sweep_flags.quiet) opts.progress = &std::cerr;
            const auto rows = experiment::sweep_mu(c, mu_values, shot_values, opts);
            std::filesystem::create_directories(c.out);
            experiment::write_sweep_table(c.out / "sweep_mu.tsv", rows);
            experiment::write_sweep_plot(c.out / "sweep_mu.svg", rows, c.select_metric);
            std::ifstream table(c.out / "sweep_mu.tsv");
            std::cout << table.rdbuf();
        } else if (*report) {
            const auto results = experiment::collect_results(report_root);
            if (results.empty()) throw std::runtime_error("no results.json below " + report_root);
            const auto tables = experiment::build_report(results);
            std::cout << tables.main << "\n" << tables.appendix;
            if (!report_prefix.empty()) {
                std::ofstream(report_prefix + "main.tsv") << tables.main;
                std::ofstream(report_prefix + "appendix.tsv") << tables.appendix;
            }
        } else if (*make_toy) {
            data::save_archive(toy_path, data::make_toy_archive(toy));
            std::cout << "wrote " << toy_path << "\n";
        }
    } catch (const experiment::RunExistsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
