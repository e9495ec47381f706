#include "sparse/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sparse::experiment {

namespace {

std::string dataset_label(const std::string& dataset) {
    if (dataset == "toy") return "toy";
    return fs::path(dataset).stem().string();
}

data::LabeledImages const& split_by_name(const data::DatasetArchive& a, const std::string& split) {
    if (split == "test") return a.test;
    if (split == "val") return a.val;
    if (split == "train") return a.train;
    throw std::invalid_argument("split must be train, val or test, got '" + split + "'");
}

nlohmann::json to_json(const RunResult& run) {
    const auto& r = run.result;
    nlohmann::json per_class = nlohmann::json::array();
    for (double v : r.per_class) per_class.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    return {{"dataset", r.dataset}, {"shots", r.shots}, {"seed", r.seed},
            {"mu", run.mu}, {"mode", to_string(r.mode)}, {"macro", r.macro}, {"per_class", per_class}};
}

RunResult from_json(const nlohmann::json& j) {
    RunResult run;
    run.mu = j.at("mu").get<int>();
    auto& r = run.result;
    r.dataset = j.at("dataset").get<std::string>();
    r.shots = j.at("shots").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.macro = j.at("macro").get<double>();
    for (const auto& v : j.at("per_class")) r.per_class.push_back(v.is_null() ? std::nan("") : v.get<double>());
    return run;
}

std::string pct(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << 100.0 * v;
    return out.str();
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

}  // namespace

RunExistsError::RunExistsError(const fs::path& dir)
    : std::runtime_error("run directory " + dir.string() + " already holds this configuration; use --force or --resume") {}

fs::path run_directory(const TrainConfig& c) {
    return c.out / (dataset_label(c.dataset) + "_n" + std::to_string(c.shots) + "_mu" + std::to_string(c.mu) + "_s" +
                    std::to_string(c.seed) + "_" + c.fingerprint());
}

ExperimentResult run_experiment(const TrainConfig& config, const RunOptions& options) {
    config.validate();
    const fs::path dir = run_directory(config);
    if (fs::exists(dir) && !options.resume) {
        if (!options.force) throw RunExistsError(dir);
        fs::remove_all(dir);
    }
    auto archive = options.archive ? options.archive : trainer::load_dataset(config);
    trainer::Trainer t(config, archive, dir);
    if (options.resume) t.resume();
    while (t.epoch() < config.epochs) {
        t.train(t.epoch() + 1);
        if (options.progress) {
            const auto& r = t.history().back();
            *options.progress << "epoch " << r.epoch << "/" << config.epochs << "  loss " << r.supervised_loss
                              << "  val sparse " << pct(r.val_sparse) << "  sparse-ens " << pct(r.val_sparse_ens)
                              << (r.unsupervised ? "  selected " + std::to_string(r.selected) : std::string())
                              << (r.improved ? "  *" : "") << "\n";
        }
    }

    ExperimentResult out;
    out.run_dir = dir;
    out.best = checkpoint::read_record(t.best_dir() / "record.json");
    out.history = t.history();
    const auto nets = checkpoint::load_triplet(t.best_dir());
    const int k = static_cast<int>(archive->num_classes);
    for (auto* slot : {&out.sparse, &out.sparse_ens}) {
        const auto mode = slot == &out.sparse ? InferenceMode::classifier_only : InferenceMode::late_fusion;
        *slot = eval::evaluate(nets, archive->test, k, mode);
        slot->dataset = dataset_label(config.dataset);
        slot->shots = config.shots;
        slot->seed = config.seed;
    }
    write_results(dir / "results.json", {{out.sparse, config.mu}, {out.sparse_ens, config.mu}});
    return out;
}

eval::EvalResult evaluate_run(const fs::path& run_dir, const std::string& split, InferenceMode mode,
                              std::shared_ptr<const data::DatasetArchive> archive) {
    const auto config = TrainConfig::load(run_dir / "config.txt");
    if (!archive) archive = trainer::load_dataset(config);
    const auto nets = checkpoint::load_triplet(run_dir / "best");
    auto r = eval::evaluate(nets, split_by_name(*archive, split), static_cast<int>(archive->num_classes), mode);
    r.dataset = dataset_label(config.dataset);
    r.shots = config.shots;
    r.seed = config.seed;
    return r;
}

void write_results(const fs::path& path, const std::vector<RunResult>& results) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : results) j.push_back(to_json(r));
    std::ofstream(path) << j.dump(2) << "\n";
}

std::vector<RunResult> read_results(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<RunResult> out;
    for (const auto& r : nlohmann::json::parse(in)) out.push_back(from_json(r));
    return out;
}

std::vector<SweepRow> sweep_mu(const TrainConfig& base, const std::vector<int>& mu_values,
                               const std::vector<int>& shot_settings, const RunOptions& options) {
    RunOptions opts = options;
    if (!opts.archive) opts.archive = trainer::load_dataset(base);
    std::vector<SweepRow> rows;
    for (int shots : shot_settings) {
        for (int mu : mu_values) {
            TrainConfig c = base;
            c.shots = shots;
            c.mu = mu;
            const auto r = run_experiment(c, opts);
            double best_sparse = -1.0, best_ens = -1.0;
            for (const auto& h : r.history) {
                if (h.epoch == r.best.epoch) best_sparse = h.val_sparse, best_ens = h.val_sparse_ens;
            }
            rows.push_back({shots, mu, c.seed, best_sparse, best_ens});
        }
    }
    return rows;
}

void write_sweep_table(const fs::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    out << "shots\tmu\tseed\tval_sparse\tval_sparse_ens\n";
    for (const auto& r : rows) {
        out << r.shots << "\t" << r.mu << "\t" << r.seed << "\t" << r.val_sparse << "\t" << r.val_sparse_ens << "\n";
    }
}

void write_sweep_plot(const fs::path& path, const std::vector<SweepRow>& rows, InferenceMode mode) {
    std::set<int> shots;
    std::map<int, std::map<int, std::vector<double>>> by_mu;  // mu -> shots -> accuracies
    for (const auto& r : rows) {
        shots.insert(r.shots);
        by_mu[r.mu][r.shots].push_back(mode == InferenceMode::late_fusion ? r.val_sparse_ens : r.val_sparse);
    }
    const double w = 640, h = 400, left = 60, right = 140, top = 30, bottom = 50;
    const std::vector<int> xs(shots.begin(), shots.end());
    auto px = [&](int s) {
        const auto i = std::find(xs.begin(), xs.end(), s) - xs.begin();
        return xs.size() < 2 ? left + (w - left - right) / 2
                             : left + (w - left - right) * static_cast<double>(i) / static_cast<double>(xs.size() - 1);
    };
    auto py = [&](double acc) { return top + (h - top - bottom) * (1.0 - acc); };
    static const char* colours[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};

    std::ofstream out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << w - right << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << left << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 10; t += 2) {
        out << "<text x=\"" << left - 8 << "\" y=\"" << py(t / 10.0) + 4 << "\" text-anchor=\"end\">" << t * 10 << "</text>\n";
    }
    for (int s : xs) out << "<text x=\"" << px(s) << "\" y=\"" << h - bottom + 18 << "\" text-anchor=\"middle\">" << s << "</text>\n";
    out << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">labeled samples per class</text>\n"
        << "<text x=\"15\" y=\"" << (top + h - bottom) / 2 << "\" transform=\"rotate(-90 15 " << (top + h - bottom) / 2
        << ")\" text-anchor=\"middle\">validation accuracy (%, " << to_string(mode) << ")</text>\n";
    std::size_t line = 0;
    for (const auto& [mu, series] : by_mu) {
        const char* colour = colours[line % std::size(colours)];
        std::ostringstream pts;
        for (const auto& [s, accs] : series) pts << px(s) << "," << py(mean(accs)) << " ";
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
        for (const auto& [s, accs] : series) {
            out << "<circle cx=\"" << px(s) << "\" cy=\"" << py(mean(accs)) << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
        }
        const double ly = top + 18.0 * static_cast<double>(line);
        out << "<line x1=\"" << w - right + 15 << "\" y1=\"" << ly << "\" x2=\"" << w - right + 35 << "\" y2=\"" << ly
            << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << w - right + 40 << "\" y=\"" << ly + 4 << "\">mu = " << mu << "</text>\n";
        ++line;
    }
    out << "</svg>\n";
}

ReportTables build_report(const std::vector<RunResult>& results) {
    // (mu, dataset) -> shots -> mode -> per-seed results
    using Key = std::pair<int, std::string>;
    std::map<Key, std::map<int, std::map<InferenceMode, std::vector<const eval::EvalResult*>>>> grouped;
    std::set<int> shots;
    for (const auto& run : results) {
        grouped[{run.mu, run.result.dataset}][run.result.shots][run.result.mode].push_back(&run.result);
        shots.insert(run.result.shots);
    }
    const std::vector<InferenceMode> modes{InferenceMode::classifier_only, InferenceMode::late_fusion};

    std::ostringstream main;
    main << "mu\tdataset";
    for (auto m : modes) {
        for (int s : shots) main << "\t" << to_string(m) << "_" << s << "shot";
    }
    main << "\n";
    // mean of per-dataset accuracies, per mu and column
    std::map<std::tuple<int, InferenceMode, int>, std::vector<double>> column;
    auto write_average = [&](int mu) {
        main << mu << "\taverage";
        for (auto m : modes) {
            for (int s : shots) {
                const double v = mean(column[{mu, m, s}]);
                main << "\t" << (std::isnan(v) ? "-" : pct(v));
            }
        }
        main << "\n";
    };
    for (auto it = grouped.begin(); it != grouped.end(); ++it) {
        const auto& [key, by_shots] = *it;
        main << key.first << "\t" << key.second;
        for (auto m : modes) {
            for (int s : shots) {
                std::vector<double> macros;
                if (auto st = by_shots.find(s); st != by_shots.end()) {
                    if (auto mt = st->second.find(m); mt != st->second.end()) {
                        for (const auto* r : mt->second) macros.push_back(r->macro);
                    }
                }
                const double v = mean(macros);
                main << "\t" << (std::isnan(v) ? "-" : pct(v));
                if (!std::isnan(v)) column[{key.first, m, s}].push_back(v);
            }
        }
        main << "\n";
        const auto next = std::next(it);
        if (next == grouped.end() || next->first.first != key.first) write_average(key.first);
    }

    std::ostringstream appendix;
    appendix << "mu\tdataset\tshots\tmode\tseeds\tmacro\tper_class\n";
    for (const auto& [key, by_shots] : grouped) {
        for (const auto& [s, by_mode] : by_shots) {
            for (const auto& [m, runs] : by_mode) {
                std::vector<double> macros;
                std::vector<std::vector<double>> per_class;
                for (const auto* r : runs) {
                    macros.push_back(r->macro);
                    if (per_class.size() < r->per_class.size()) per_class.resize(r->per_class.size());
                    for (std::size_t c = 0; c < r->per_class.size(); ++c) {
                        if (!std::isnan(r->per_class[c])) per_class[c].push_back(r->per_class[c]);
                    }
                }
                appendix << key.first << "\t" << key.second << "\t" << s << "\t" << to_string(m) << "\t" << runs.size()
                         << "\t" << pct(mean(macros)) << "\t";
                for (std::size_t c = 0; c < per_class.size(); ++c) {
                    const double v = mean(per_class[c]);
                    appendix << (c ? " " : "") << (std::isnan(v) ? "-" : pct(v));
                }
                appendix << "\n";
            }
        }
    }
    return {main.str(), appendix.str()};
}

std::vector<RunResult> collect_results(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().filename() == "results.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<RunResult> out;
    for (const auto& f : files) {
        auto r = read_results(f);
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

}  // namespace sparse::experiment
