#include "sparse/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sparse::checkpoint {

namespace {

constexpr const char* kArchKey = "__arch__";

const npz::Array& need(const npz::Archive& a, const std::string& key, const fs::path& path) {
    auto it = a.find(key);
    if (it == a.end()) throw std::runtime_error(path.string() + ": missing array '" + key + "'");
    return it->second;
}

}  // namespace

void save_network(const fs::path& path, const nn::Module& net, const networks::ArchSpec& arch) {
    npz::Archive a;
    for (const auto& p : net.named_parameters()) {
        a[p.name] = npz::Array::from_double(p.tensor.shape(), p.tensor.data());
    }
    a[kArchKey] = npz::Array::from_text(arch.to_string());
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    npz::save(path, a);
}

networks::ArchSpec read_arch(const fs::path& path) {
    const npz::Archive a = npz::load(path);
    return networks::ArchSpec::parse(need(a, kArchKey, path).to_text());
}

void load_network(const fs::path& path, nn::Module& net, const networks::ArchSpec& expected) {
    const npz::Archive a = npz::load(path);
    const auto stored = networks::ArchSpec::parse(need(a, kArchKey, path).to_text());
    if (!(stored == expected)) {
        throw std::runtime_error(path.string() + ": architecture '" + stored.to_string() + "' does not match '" +
                                 expected.to_string() + "'");
    }
    nn::StateDict state;
    for (const auto& [key, array] : a) {
        if (key != kArchKey) state[key] = array.to_double();
    }
    net.load_state_dict(state);
}

networks::NetworkTriplet load_triplet(const fs::path& dir) {
    const auto arch = read_arch(dir / "generator.npz");
    auto nets = networks::NetworkTriplet::create(arch, 0);
    load_network(dir / "generator.npz", *nets.generator, arch);
    load_network(dir / "discriminator.npz", *nets.discriminator, arch);
    load_network(dir / "classifier.npz", *nets.classifier, arch);
    return nets;
}

void save_triplet(const fs::path& dir, const networks::NetworkTriplet& nets) {
    save_network(dir / "generator.npz", *nets.generator, nets.generator->arch());
    save_network(dir / "discriminator.npz", *nets.discriminator, nets.discriminator->arch());
    save_network(dir / "classifier.npz", *nets.classifier, nets.classifier->arch());
}

void save_ensemble(const fs::path& path, const pseudo::EnsembleState& state) {
    const auto& p = state.params();
    std::vector<std::int64_t> ids;
    std::vector<double> probs;
    std::int64_t k = 0;
    for (const auto& [id, row] : state.entries()) {
        ids.push_back(id);
        k = static_cast<std::int64_t>(row.size());
        probs.insert(probs.end(), row.begin(), row.end());
    }
    npz::Archive a;
    a["ids"] = npz::Array::from_int64({static_cast<std::int64_t>(ids.size())}, ids);
    a["probs"] = npz::Array::from_double({static_cast<std::int64_t>(ids.size()), k}, probs);
    const std::vector<double> params{p.alpha, p.beta, p.rho, p.temperature};
    a["params"] = npz::Array::from_double({4}, params);
    const std::vector<std::int64_t> epoch{state.epoch()};
    a["epoch"] = npz::Array::from_int64({1}, epoch);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    npz::save(path, a);
}

pseudo::EnsembleState load_ensemble(const fs::path& path) {
    const npz::Archive a = npz::load(path);
    const auto params = need(a, "params", path).to_double();
    if (params.size() != 4) throw std::runtime_error(path.string() + ": bad ensemble parameters");
    pseudo::EnsembleState state({params[0], params[1], params[2], params[3]});
    state.set_epoch(need(a, "epoch", path).to_int64().at(0));
    const auto ids = need(a, "ids", path).to_int64();
    const npz::Array& probs = need(a, "probs", path);
    const auto values = probs.to_double();
    const std::size_t k = probs.shape.size() == 2 ? static_cast<std::size_t>(probs.shape[1]) : 0;
    if (values.size() != ids.size() * k) throw std::runtime_error(path.string() + ": ids and probs disagree");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        state.store(ids[i], pseudo::Prob(values.begin() + static_cast<std::ptrdiff_t>(i * k),
                                         values.begin() + static_cast<std::ptrdiff_t>((i + 1) * k)));
    }
    return state;
}

void put_optimizer(npz::Archive& archive, const std::string& prefix, const optim::AdamW& opt) {
    const auto& s = opt.state();
    archive[prefix + "/steps"] = npz::Array::from_int64({static_cast<std::int64_t>(s.steps.size())}, s.steps);
    for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
        const auto n = static_cast<std::int64_t>(s.first_moment[i].size());
        archive[prefix + "/m" + std::to_string(i)] = npz::Array::from_double({n}, s.first_moment[i]);
        archive[prefix + "/v" + std::to_string(i)] = npz::Array::from_double({n}, s.second_moment[i]);
    }
}

void get_optimizer(const npz::Archive& archive, const std::string& prefix, optim::AdamW& opt) {
    optim::AdamW::State s;
    s.steps = need(archive, prefix + "/steps", prefix).to_int64();
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
        s.first_moment.push_back(need(archive, prefix + "/m" + std::to_string(i), prefix).to_double());
        s.second_moment.push_back(need(archive, prefix + "/v" + std::to_string(i), prefix).to_double());
    }
    opt.load_state(std::move(s));
}

std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream out;
    out << rng;
    return out.str();
}

void set_rng_state(std::mt19937_64& rng, const std::string& state) {
    std::istringstream in(state);
    in >> rng;
    if (!in) throw std::runtime_error("corrupt RNG state");
}

void write_record(const fs::path& path, const BestRecord& r) {
    nlohmann::json j{{"epoch", r.epoch}, {"metric", r.metric}, {"mode", r.mode}, {"fingerprint", r.fingerprint}};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream(path) << j.dump(2) << "\n";
}

BestRecord read_record(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const auto j = nlohmann::json::parse(in);
    return {j.at("epoch").get<int>(), j.at("metric").get<double>(), j.at("mode").get<std::string>(),
            j.at("fingerprint").get<std::string>()};
}

}  // namespace sparse::checkpoint
