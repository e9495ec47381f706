#include "sparse/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "sparse/sup_losses.hpp"
#include "sparse/translation.hpp"

namespace sparse::trainer {

namespace {

std::mt19937_64 stream(std::uint64_t master, std::uint32_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32), index};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return std::mt19937_64((static_cast<std::uint64_t>(words[0]) << 32) | words[1]);
}

// Rows `positions` of a [B,...] tensor.
ag::Tensor gather_rows(const ag::Tensor& x, const std::vector<std::size_t>& positions) {
    const std::int64_t per = x.numel() / x.size(0);
    std::vector<double> v;
    v.reserve(positions.size() * static_cast<std::size_t>(per));
    for (std::size_t p : positions) {
        const auto d = x.data().subspan(p * static_cast<std::size_t>(per), static_cast<std::size_t>(per));
        v.insert(v.end(), d.begin(), d.end());
    }
    ag::Shape shape = x.shape();
    shape[0] = static_cast<std::int64_t>(positions.size());
    return ag::Tensor::from(std::move(shape), std::move(v));
}

// Gradient list for `opt` holding entries only for parameters in `subset`.
std::vector<ag::Tensor> scatter_grads(const optim::AdamW& opt, const std::vector<ag::Tensor>& subset,
                                      const std::vector<ag::Tensor>& grads) {
    std::unordered_map<const ag::Node*, const ag::Tensor*> by_node;
    for (std::size_t i = 0; i < subset.size(); ++i) by_node[subset[i].id()] = &grads[i];
    std::vector<ag::Tensor> out(opt.params().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto it = by_node.find(opt.params()[i].id());
        if (it != by_node.end()) out[i] = *it->second;
    }
    return out;
}

// Critic parameters that the supervised objective reaches (everything but the realism head).
std::vector<ag::Tensor> critic_class_parameters(const networks::Discriminator& d) {
    std::vector<ag::Tensor> out;
    for (const auto& p : d.named_parameters()) {
        if (p.name.rfind("realism", 0) != 0) out.push_back(p.tensor);
    }
    return out;
}

std::string tsv_row(std::initializer_list<std::string> cells) {
    std::string line;
    for (const auto& c : cells) line += (line.empty() ? "" : "\t") + c;
    return line + "\n";
}

std::string num(double v) {
    std::ostringstream out;
    out.precision(10);
    out << v;
    return out.str();
}

// Drops rows whose first column (epoch) is beyond `epoch`.
void truncate_log(const fs::path& path, int epoch) {
    std::ifstream in(path);
    if (!in) return;
    std::string line, kept;
    bool header = true;
    while (std::getline(in, line)) {
        if (header || std::stoi(line.substr(0, line.find('\t'))) <= epoch) kept += line + "\n";
        header = false;
    }
    in.close();
    std::ofstream(path, std::ios::trunc) << kept;
}

nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"supervised_loss", r.supervised_loss},
            {"supervised_steps", r.supervised_steps},
            {"unsupervised", r.unsupervised},
            {"selected", r.selected},
            {"pseudo_accuracy", r.pseudo_accuracy},
            {"val_sparse", r.val_sparse},
            {"val_sparse_ens", r.val_sparse_ens},
            {"improved", r.improved}};
}

EpochRecord from_json(const nlohmann::json& j) {
    EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.supervised_loss = j.at("supervised_loss").get<double>();
    r.supervised_steps = j.at("supervised_steps").get<int>();
    r.unsupervised = j.at("unsupervised").get<bool>();
    r.selected = j.at("selected").get<std::int64_t>();
    r.pseudo_accuracy = j.at("pseudo_accuracy").get<double>();
    r.val_sparse = j.at("val_sparse").get<double>();
    r.val_sparse_ens = j.at("val_sparse_ens").get<double>();
    r.improved = j.at("improved").get<bool>();
    return r;
}

}  // namespace

std::shared_ptr<const data::DatasetArchive> load_dataset(const TrainConfig& config) {
    if (config.dataset == "toy") {
        data::ToyOptions t;
        t.noise = config.toy_noise;
        t.contrast = config.toy_contrast;
        t.seed = config.toy_seed;
        return std::make_shared<const data::DatasetArchive>(data::make_toy_archive(t));
    }
    return std::make_shared<const data::DatasetArchive>(data::load_archive(config.dataset));
}

SeedStreams SeedStreams::from_master(std::uint64_t seed) {
    return {stream(seed, 0), stream(seed, 1), stream(seed, 2), stream(seed, 3),
            stream(seed, 4), stream(seed, 5), stream(seed, 6)};
}

Trainer::Trainer(TrainConfig config, std::shared_ptr<const data::DatasetArchive> archive, fs::path run_dir)
    : config_((config.validate(), std::move(config))),
      archive_(std::move(archive)),
      run_dir_(std::move(run_dir)),
      rng_(SeedStreams::from_master(config_.seed)),
      split_(data::build_fewshot_split(archive_, config_.shots, rng_.split())),
      nets_(networks::NetworkTriplet::create(
          config_.arch(archive_->train.images.channels, archive_->num_classes), rng_.init())),
      g_opt_(nets_.generator->parameters(), {config_.learning_rate, 0.9, 0.999, 1e-8, config_.weight_decay}),
      d_opt_(nets_.discriminator->parameters(), {config_.learning_rate, 0.9, 0.999, 1e-8, config_.weight_decay}),
      c_opt_(nets_.classifier->parameters(), {config_.learning_rate, 0.9, 0.999, 1e-8, config_.weight_decay}),
      ensemble_(config_.ensemble) {
    best_.mode = to_string(config_.select_metric);
    best_.fingerprint = config_.fingerprint();
}

SupervisedSummary Trainer::run_supervised_epoch(int epoch) {
    const auto& labeled = split_.labeled();
    if (labeled.empty()) throw std::runtime_error("no labeled samples to train on");
    const std::int64_t k = archive_->num_classes;
    std::vector<std::size_t> order(labeled.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_.shuffle);

    auto& G = *nets_.generator;
    auto& D = *nets_.discriminator;
    auto& C = *nets_.classifier;
    const auto g_params = G.encoder_parameters();
    const auto d_params = critic_class_parameters(D);
    const auto c_params = C.parameters();
    std::vector<ag::Tensor> all(g_params);
    all.insert(all.end(), d_params.begin(), d_params.end());
    all.insert(all.end(), c_params.begin(), c_params.end());

    SupervisedSummary summary;
    const auto batch = static_cast<std::size_t>(config_.supervised_batch);
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        std::vector<data::Image> imgs;
        std::vector<int> labels;
        for (std::size_t i = start; i < end; ++i) {
            data::Image img = split_.labeled_image(order[i], config_.resolution);
            imgs.push_back(config_.augment ? data::augment(std::move(img), rng_.augment) : std::move(img));
            labels.push_back(labeled[order[i]].label);
        }
        const ag::Tensor x = data::stack(imgs);
        const ag::Tensor y = networks::one_hot(labels, k);
        const auto mixed = sup::mixup_batch(x, y, config_.loss.mix_alpha, rng_.mixup);

        const std::array<ag::Tensor, sup::kModels> clean{G.encoder_logits(x), D.discriminate(x).logits, C.classify(x)};
        const std::array<ag::Tensor, sup::kModels> mix{G.encoder_logits(mixed.images),
                                                       D.discriminate(mixed.images).logits,
                                                       C.classify(mixed.images)};
        const auto terms = sup::supervised_total(clean, mix, y, mixed.targets, config_.loss);
        const auto grads = ag::grad(terms.total, all);

        const std::vector<ag::Tensor> gg(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(g_params.size()));
        const std::vector<ag::Tensor> dg(grads.begin() + static_cast<std::ptrdiff_t>(g_params.size()),
                                         grads.begin() + static_cast<std::ptrdiff_t>(g_params.size() + d_params.size()));
        const std::vector<ag::Tensor> cg(grads.begin() + static_cast<std::ptrdiff_t>(g_params.size() + d_params.size()),
                                         grads.end());
        g_opt_.step(scatter_grads(g_opt_, g_params, gg));
        d_opt_.step(scatter_grads(d_opt_, d_params, dg));
        c_opt_.step(cg);

        ++summary.steps;
        summary.mean_total += terms.total.item();
        steps_.push_back({epoch, static_cast<int>(steps_.size()) + 1, terms.prototype.item(), terms.mutual.item(),
                          terms.entropy.item(), terms.mixup.item(), terms.total.item()});
    }
    summary.mean_total /= summary.steps;
    return summary;
}

PhaseSummary Trainer::run_unsupervised_phase(int epoch) {
    PhaseSummary s;
    s.ran = true;
    ++unsupervised_phases_;
    ensemble_.set_epoch(epoch);
    const auto& pool = split_.unlabeled();
    if (pool.empty()) {
        s.skipped = true;
        return s;
    }
    const std::int64_t k = archive_->num_classes;
    auto& G = *nets_.generator;
    auto& D = *nets_.discriminator;
    auto& C = *nets_.classifier;

    std::vector<std::int64_t> order(static_cast<std::size_t>(pool.size()));
    std::iota(order.begin(), order.end(), std::int64_t{0});
    std::shuffle(order.begin(), order.end(), rng_.shuffle);

    std::int64_t correct = 0;
    int trained_batches = 0;
    const auto batch = static_cast<std::size_t>(config_.unsupervised_batch);
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        std::vector<data::Image> imgs;
        std::vector<std::int64_t> ids;
        for (std::size_t i = start; i < end; ++i) {
            imgs.push_back(pool.image(order[i], config_.resolution));
            ids.push_back(pool.ids()[static_cast<std::size_t>(order[i])]);
        }
        const ag::Tensor x = data::stack(imgs);
        ag::Tensor d_logits, c_logits;
        {
            ag::NoGradGuard scoring;
            d_logits = D.discriminate(x).logits;
            c_logits = C.classify(x);
        }
        const auto pseudo = pseudo::pseudo_label_batch(ids, d_logits.data(), c_logits.data(), k, ensemble_);
        ++s.batches;
        s.scored += static_cast<std::int64_t>(ids.size());
        s.mean_threshold += pseudo.threshold;
        if (pseudo.selected_ids.empty()) continue;

        s.selected += static_cast<std::int64_t>(pseudo.selected_ids.size());
        for (std::size_t i = 0; i < pseudo.selected_ids.size(); ++i) {
            correct += split_.hidden_label(pseudo.selected_ids[i]) == pseudo.labels[i];
        }
        const std::size_t n = pseudo.selected_ids.size();
        translation::TranslationBatch tb{gather_rows(x, pseudo.selected_positions), networks::one_hot(pseudo.labels, k),
                                         networks::one_hot(translation::sample_target_classes(n, k, rng_.target), k)};

        for (int c = 0; c < config_.gan.critic_steps; ++c) {
            const auto dt = translation::discriminator_loss(G, D, tb, config_.gan, rng_.penalty);
            d_opt_.step(ag::grad(dt->total, d_opt_.params()));
            s.critic_loss += dt->total.item() / config_.gan.critic_steps;
        }
        const auto gt = translation::generator_loss(G, D, tb, config_.gan);
        g_opt_.step(ag::grad(gt->total, g_opt_.params()));
        s.generator_loss += gt->total.item();

        const ag::Tensor synth_targets =
            networks::one_hot(translation::sample_target_classes(n, k, rng_.target), k);
        s.synthetic_loss += translation::synthetic_classifier_step(
            G, [&C](const ag::Tensor& t) { return C.classify(t); }, c_opt_, tb.real, synth_targets);
        ++trained_batches;
    }
    if (s.batches) s.mean_threshold /= s.batches;
    if (trained_batches) {
        s.critic_loss /= trained_batches;
        s.generator_loss /= trained_batches;
        s.synthetic_loss /= trained_batches;
    }
    s.skipped = s.selected == 0;
    if (s.selected) s.pseudo_accuracy = static_cast<double>(correct) / static_cast<double>(s.selected);
    return s;
}

bool Trainer::checkpoint_if_best(int epoch, double metric) {
    if (!(metric > best_.metric)) return false;
    best_.epoch = epoch;
    best_.metric = metric;
    if (!run_dir_.empty()) {
        checkpoint::save_triplet(best_dir(), nets_);
        checkpoint::save_ensemble(best_dir() / "ensemble.npz", ensemble_);
        checkpoint::write_record(best_dir() / "record.json", best_);
    }
    return true;
}

eval::EvalResult Trainer::validate(InferenceMode mode) const {
    return eval::evaluate(nets_, archive_->val, archive_->num_classes, mode);
}

void Trainer::write_log_headers() const {
    if (run_dir_.empty()) return;
    fs::create_directories(run_dir_);
    auto header = [&](const char* name, std::initializer_list<std::string> cols) {
        const fs::path p = run_dir_ / name;
        if (!fs::exists(p)) std::ofstream(p) << tsv_row(cols);
    };
    header("metrics.tsv", {"epoch", "supervised_loss", "supervised_steps", "unsupervised", "selected",
                           "pseudo_accuracy", "val_sparse", "val_sparse_ens", "improved"});
    header("steps.tsv", {"epoch", "step", "prototype", "mutual", "entropy", "mixup", "total"});
    header("pseudo.tsv", {"epoch", "threshold", "selected", "scored", "pseudo_accuracy", "batches", "skipped",
                          "critic_loss", "generator_loss", "synthetic_loss"});
}

void Trainer::append_logs(const EpochRecord& r, const PhaseSummary& phase, std::size_t first_step) const {
    if (run_dir_.empty()) return;
    std::ofstream(run_dir_ / "metrics.tsv", std::ios::app)
        << tsv_row({std::to_string(r.epoch), num(r.supervised_loss), std::to_string(r.supervised_steps),
                    r.unsupervised ? "1" : "0", std::to_string(r.selected), num(r.pseudo_accuracy),
                    num(r.val_sparse), num(r.val_sparse_ens), r.improved ? "1" : "0"});
    std::ofstream steps(run_dir_ / "steps.tsv", std::ios::app);
    for (std::size_t i = first_step; i < steps_.size(); ++i) {
        const auto& s = steps_[i];
        steps << tsv_row({std::to_string(s.epoch), std::to_string(s.step), num(s.prototype), num(s.mutual),
                          num(s.entropy), num(s.mixup), num(s.total)});
    }
    if (phase.ran) {
        std::ofstream(run_dir_ / "pseudo.tsv", std::ios::app)
            << tsv_row({std::to_string(r.epoch), num(phase.mean_threshold), std::to_string(phase.selected),
                        std::to_string(phase.scored), num(phase.pseudo_accuracy), std::to_string(phase.batches),
                        phase.skipped ? "1" : "0", num(phase.critic_loss), num(phase.generator_loss),
                        num(phase.synthetic_loss)});
    }
}

const std::vector<EpochRecord>& Trainer::train(std::optional<int> halt_after) {
    if (!run_dir_.empty()) {
        fs::create_directories(run_dir_);
        std::ofstream(run_dir_ / "config.txt") << config_.to_text();
        split_.write_manifest(run_dir_ / "split_manifest.txt");
        write_log_headers();
    }
    const int last = halt_after ? std::min(*halt_after, config_.epochs) : config_.epochs;
    while (epoch_ < last) {
        const int e = epoch_ + 1;
        const std::size_t first_step = steps_.size();
        EpochRecord r;
        r.epoch = e;
        const auto sup = run_supervised_epoch(e);
        r.supervised_loss = sup.mean_total;
        r.supervised_steps = sup.steps;
        PhaseSummary phase;
        if (should_run_unsupervised(e, config_.mu)) phase = run_unsupervised_phase(e);
        r.unsupervised = phase.ran;
        r.selected = phase.selected;
        r.pseudo_accuracy = phase.pseudo_accuracy;
        r.val_sparse = validate(InferenceMode::classifier_only).macro;
        r.val_sparse_ens = validate(InferenceMode::late_fusion).macro;
        epoch_ = e;
        r.improved = checkpoint_if_best(
            e, config_.select_metric == InferenceMode::late_fusion ? r.val_sparse_ens : r.val_sparse);
        history_.push_back(r);
        append_logs(r, phase, first_step);
        const bool periodic = config_.resume_every > 0 && e % config_.resume_every == 0;
        if (periodic || e == last) save_snapshot();
    }
    return history_;
}

void Trainer::save_snapshot() const {
    if (run_dir_.empty()) return;
    const fs::path dir = run_dir_ / "resume";
    checkpoint::save_triplet(dir, nets_);
    checkpoint::save_ensemble(dir / "ensemble.npz", ensemble_);
    npz::Archive opt;
    checkpoint::put_optimizer(opt, "generator", g_opt_);
    checkpoint::put_optimizer(opt, "discriminator", d_opt_);
    checkpoint::put_optimizer(opt, "classifier", c_opt_);
    npz::save(dir / "optimizers.npz", opt);

    nlohmann::json j;
    j["epoch"] = epoch_;
    j["fingerprint"] = config_.fingerprint();
    j["unsupervised_phases"] = unsupervised_phases_;
    j["best"] = {{"epoch", best_.epoch}, {"metric", best_.metric}};
    j["rng"] = {{"augment", checkpoint::rng_state(rng_.augment)}, {"mixup", checkpoint::rng_state(rng_.mixup)},
                {"shuffle", checkpoint::rng_state(rng_.shuffle)}, {"target", checkpoint::rng_state(rng_.target)},
                {"penalty", checkpoint::rng_state(rng_.penalty)}};
    j["history"] = nlohmann::json::array();
    for (const auto& r : history_) j["history"].push_back(to_json(r));
    j["steps"] = nlohmann::json::array();
    for (const auto& s : steps_) {
        j["steps"].push_back({s.epoch, s.step, s.prototype, s.mutual, s.entropy, s.mixup, s.total});
    }
    const fs::path tmp = dir / "state.json.tmp";
    std::ofstream(tmp) << j.dump() << "\n";
    fs::rename(tmp, dir / "state.json");
}

bool Trainer::resume() {
    if (run_dir_.empty()) return false;
    const fs::path dir = run_dir_ / "resume";
    if (!fs::exists(dir / "state.json")) return false;
    std::ifstream in(dir / "state.json");
    const auto j = nlohmann::json::parse(in);
    if (j.at("fingerprint").get<std::string>() != config_.fingerprint()) {
        throw std::runtime_error("snapshot in " + dir.string() + " belongs to a different configuration");
    }
    const auto arch = nets_.generator->arch();
    checkpoint::load_network(dir / "generator.npz", *nets_.generator, arch);
    checkpoint::load_network(dir / "discriminator.npz", *nets_.discriminator, arch);
    checkpoint::load_network(dir / "classifier.npz", *nets_.classifier, arch);
    ensemble_ = checkpoint::load_ensemble(dir / "ensemble.npz");
    const npz::Archive opt = npz::load(dir / "optimizers.npz");
    checkpoint::get_optimizer(opt, "generator", g_opt_);
    checkpoint::get_optimizer(opt, "discriminator", d_opt_);
    checkpoint::get_optimizer(opt, "classifier", c_opt_);

    epoch_ = j.at("epoch").get<int>();
    unsupervised_phases_ = j.at("unsupervised_phases").get<int>();
    best_.epoch = j.at("best").at("epoch").get<int>();
    best_.metric = j.at("best").at("metric").get<double>();
    const auto& r = j.at("rng");
    checkpoint::set_rng_state(rng_.augment, r.at("augment").get<std::string>());
    checkpoint::set_rng_state(rng_.mixup, r.at("mixup").get<std::string>());
    checkpoint::set_rng_state(rng_.shuffle, r.at("shuffle").get<std::string>());
    checkpoint::set_rng_state(rng_.target, r.at("target").get<std::string>());
    checkpoint::set_rng_state(rng_.penalty, r.at("penalty").get<std::string>());
    history_.clear();
    for (const auto& h : j.at("history")) history_.push_back(from_json(h));
    steps_.clear();
    for (const auto& s : j.at("steps")) {
        steps_.push_back({s[0].get<int>(), s[1].get<int>(), s[2].get<double>(), s[3].get<double>(),
                          s[4].get<double>(), s[5].get<double>(), s[6].get<double>()});
    }
    for (const char* log : {"metrics.tsv", "steps.tsv", "pseudo.tsv"}) truncate_log(run_dir_ / log, epoch_);
    return true;
}

}  // namespace sparse::trainer
