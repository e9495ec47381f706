#include "sparse/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace sparse {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad value '" + text + "' for " + key);
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument("bad boolean '" + text + "' for " + key);
}

struct Field {
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
    bool affects_run = true;
};

template <class T>
Field number(T TrainConfig::*member) {
    return {[member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return fmt(c.*member);
                else return std::to_string(c.*member);
            },
            [member](TrainConfig& c, const std::string& v) { c.*member = parse_number<T>("value", v); }};
}

template <class S, class T>
Field nested(S TrainConfig::*outer, T S::*inner) {
    return {[=](const TrainConfig& c) {
                if constexpr (std::is_same_v<T, bool>) return std::string((c.*outer).*inner ? "true" : "false");
                else if constexpr (std::is_floating_point_v<T>) return fmt((c.*outer).*inner);
                else return std::to_string((c.*outer).*inner);
            },
            [=](TrainConfig& c, const std::string& v) {
                if constexpr (std::is_same_v<T, bool>) (c.*outer).*inner = parse_bool("value", v);
                else (c.*outer).*inner = parse_number<T>("value", v);
            }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        t["dataset"] = {[](const TrainConfig& c) { return c.dataset; },
                        [](TrainConfig& c, const std::string& v) { c.dataset = v; }};
        t["shots"] = number(&TrainConfig::shots);
        t["mu"] = number(&TrainConfig::mu);
        t["epochs"] = number(&TrainConfig::epochs);
        t["seed"] = number(&TrainConfig::seed);
        t["resolution"] = number(&TrainConfig::resolution);
        t["depth"] = number(&TrainConfig::depth);
        t["width"] = number(&TrainConfig::width);
        t["learning_rate"] = number(&TrainConfig::learning_rate);
        t["weight_decay"] = number(&TrainConfig::weight_decay);
        t["supervised_batch"] = number(&TrainConfig::supervised_batch);
        t["unsupervised_batch"] = number(&TrainConfig::unsupervised_batch);
        t["augment"] = {[](const TrainConfig& c) { return std::string(c.augment ? "true" : "false"); },
                        [](TrainConfig& c, const std::string& v) { c.augment = parse_bool("augment", v); }};
        t["alpha"] = nested(&TrainConfig::loss, &sup::LossWeights::mutual);
        t["beta"] = nested(&TrainConfig::loss, &sup::LossWeights::entropy);
        t["gamma"] = nested(&TrainConfig::loss, &sup::LossWeights::mixup);
        t["lambda_kl"] = nested(&TrainConfig::loss, &sup::LossWeights::kl);
        t["temperature"] = nested(&TrainConfig::loss, &sup::LossWeights::temperature);
        t["mix_alpha"] = nested(&TrainConfig::loss, &sup::LossWeights::mix_alpha);
        t["literal_prototype_sign"] = nested(&TrainConfig::loss, &sup::LossWeights::literal_prototype_sign);
        t["lambda_rec"] = nested(&TrainConfig::gan, &translation::GanWeights::reconstruction);
        t["lambda_cls"] = nested(&TrainConfig::gan, &translation::GanWeights::classification);
        t["lambda_gp"] = nested(&TrainConfig::gan, &translation::GanWeights::gradient_penalty);
        t["critic_steps"] = nested(&TrainConfig::gan, &translation::GanWeights::critic_steps);
        t["ens_alpha"] = nested(&TrainConfig::ensemble, &pseudo::EnsembleParams::alpha);
        t["ens_beta"] = nested(&TrainConfig::ensemble, &pseudo::EnsembleParams::beta);
        t["ens_rho"] = nested(&TrainConfig::ensemble, &pseudo::EnsembleParams::rho);
        t["ens_temperature"] = nested(&TrainConfig::ensemble, &pseudo::EnsembleParams::temperature);
        t["mode"] = {[](const TrainConfig& c) { return to_string(c.select_metric); },
                     [](TrainConfig& c, const std::string& v) { c.select_metric = parse_mode(v); }};
        t["resume_every"] = number(&TrainConfig::resume_every);
        t["resume_every"].affects_run = false;
        t["toy_noise"] = number(&TrainConfig::toy_noise);
        t["toy_contrast"] = number(&TrainConfig::toy_contrast);
        t["toy_seed"] = number(&TrainConfig::toy_seed);
        t["out"] = {[](const TrainConfig& c) { return c.out.string(); },
                    [](TrainConfig& c, const std::string& v) { c.out = v; }, false};
        t["device"] = {[](const TrainConfig& c) { return c.device; },
                       [](TrainConfig& c, const std::string& v) { c.device = v; }, false};
        return t;
    }();
    return table;
}

}  // namespace

std::string to_string(InferenceMode mode) {
    return mode == InferenceMode::classifier_only ? "sparse" : "sparse-ens";
}

InferenceMode parse_mode(const std::string& text) {
    if (text == "sparse") return InferenceMode::classifier_only;
    if (text == "sparse-ens") return InferenceMode::late_fusion;
    throw std::invalid_argument("mode must be 'sparse' or 'sparse-ens', got '" + text + "'");
}

void TrainConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(what);
    };
    need(shots >= 1, "shots must be >= 1");
    need(mu >= 0, "mu must be >= 0");
    need(epochs >= 1, "epochs must be >= 1");
    need(resolution >= 4, "resolution too small");
    need(depth >= 1 && width >= 1, "depth and width must be positive");
    need(resolution % (std::int64_t{1} << depth) == 0, "resolution must be divisible by 2^depth");
    need(learning_rate > 0 && weight_decay >= 0, "learning rate must be positive, weight decay non-negative");
    need(supervised_batch >= 1 && unsupervised_batch >= 1, "batch sizes must be positive");
    need(loss.temperature > 0 && loss.mix_alpha > 0, "temperature and mix_alpha must be positive");
    need(loss.mutual >= 0 && loss.entropy >= 0 && loss.mixup >= 0 && loss.kl >= 0, "loss weights must be >= 0");
    need(gan.reconstruction >= 0 && gan.classification >= 0 && gan.gradient_penalty >= 0, "GAN weights must be >= 0");
    need(gan.critic_steps >= 1, "critic_steps must be >= 1");
    need(resume_every >= 0, "resume_every must be >= 0");
    ensemble.validate();
    if (device != "cpu") throw std::invalid_argument("unsupported device '" + device + "' (only cpu is available)");
}

void TrainConfig::set(const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw std::invalid_argument("unknown config key '" + key + "'");
    try {
        it->second.set(*this, value);
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("bad value '" + value + "' for " + key);
    }
}

std::string TrainConfig::get(const std::string& key) const {
    auto it = fields().find(key);
    if (it == fields().end()) throw std::invalid_argument("unknown config key '" + key + "'");
    return it->second.get(*this);
}

const std::vector<std::string>& TrainConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& [name, f] : fields()) out.push_back(name);
        return out;
    }();
    return k;
}

std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
    return out;
}

void TrainConfig::merge_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

TrainConfig TrainConfig::from_text(const std::string& text) {
    TrainConfig c;
    c.merge_text(text);
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

std::string TrainConfig::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, f] : fields()) {
        if (!f.affects_run) continue;
        for (char ch : name + "=" + f.get(*this) + ";") {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ull;
        }
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

networks::ArchSpec TrainConfig::arch(std::int64_t channels, std::int64_t num_classes) const {
    return {channels, resolution, num_classes, depth, width};
}

bool should_run_unsupervised(int epoch, int mu) { return mu > 0 && epoch % mu == 0; }

}  // namespace sparse
