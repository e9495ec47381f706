#pragma once

// On-disk state: one .npz per network (parameters plus an "__arch__"
// descriptor), the pseudo-label EMA store, optimizer moments, RNG streams and
// a small JSON record for the best checkpoint.

#include <filesystem>
#include <random>
#include <string>

#include "sparse/networks.hpp"
#include "sparse/npz.hpp"
#include "sparse/optim.hpp"
#include "sparse/pseudo_label.hpp"

namespace sparse::checkpoint {

namespace fs = std::filesystem;

void save_network(const fs::path& path, const nn::Module& net, const networks::ArchSpec& arch);
networks::ArchSpec read_arch(const fs::path& path);
// Throws std::runtime_error if the stored architecture differs from `expected`.
void load_network(const fs::path& path, nn::Module& net, const networks::ArchSpec& expected);

// Rebuilds all three networks from a directory holding generator.npz,
// discriminator.npz and classifier.npz.
networks::NetworkTriplet load_triplet(const fs::path& dir);
void save_triplet(const fs::path& dir, const networks::NetworkTriplet& nets);

void save_ensemble(const fs::path& path, const pseudo::EnsembleState& state);
pseudo::EnsembleState load_ensemble(const fs::path& path);

void put_optimizer(npz::Archive& archive, const std::string& prefix, const optim::AdamW& opt);
void get_optimizer(const npz::Archive& archive, const std::string& prefix, optim::AdamW& opt);

std::string rng_state(const std::mt19937_64& rng);
void set_rng_state(std::mt19937_64& rng, const std::string& state);

struct BestRecord {
    int epoch = 0;
    double metric = -1.0;  // below any accuracy, so the first evaluation always improves
    std::string mode;
    std::string fingerprint;
};
void write_record(const fs::path& path, const BestRecord& record);
BestRecord read_record(const fs::path& path);

}  // namespace sparse::checkpoint
