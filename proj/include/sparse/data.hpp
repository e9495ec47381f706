#pragma once

// Dataset archives in the MedMNIST layout, few-shot labeled/unlabeled splits,
// image preprocessing and augmentation.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparse/autograd.hpp"

namespace sparse::data {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CorruptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientDataError : public std::runtime_error {
public:
    InsufficientDataError(int class_index, std::int64_t available, std::int64_t requested);
    int class_index() const { return class_index_; }

private:
    int class_index_;
};

// Raw uint8 images, N x H x W x C.
struct ImageSet {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t channels = 1;
    std::vector<std::uint8_t> pixels;

    std::int64_t count() const;
    std::span<const std::uint8_t> image(std::int64_t index) const;
};

struct LabeledImages {
    ImageSet images;
    std::vector<int> labels;
};

struct DatasetArchive {
    std::string name;
    LabeledImages train;
    LabeledImages val;
    LabeledImages test;
    int num_classes = 0;
};

// Reads train/val/test images and labels from a .npz archive. K is inferred
// as max label + 1 unless `expected_classes` is given, in which case any
// label outside [0, expected) is a CorruptionError. Archives named after a
// known MedMNIST dataset must also match its published split sizes.
DatasetArchive load_archive(const std::filesystem::path& path, std::optional<int> expected_classes = std::nullopt);
void save_archive(const std::filesystem::path& path, const DatasetArchive& archive);

struct KnownDataset {
    const char* name;
    int num_classes;
    std::int64_t train, val, test;
};
const std::vector<KnownDataset>& known_medmnist();

// Preprocessed image: CHW, values in [-1, 1].
struct Image {
    std::int64_t channels = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<double> values;

    bool operator==(const Image&) const = default;
};

// Bilinear resize to resolution x resolution (half-pixel centres) followed by
// the [0,255] -> [-1,1] mapping. resolution <= 0 keeps the stored size.
Image prepare_image(const ImageSet& set, std::int64_t index, std::int64_t resolution);
void flip_horizontal(Image& image);
// Mirrors left-right with probability 0.5.
Image augment(Image image, std::mt19937_64& rng);
ag::Tensor stack(std::span<const Image> images);

struct LabeledSample {
    std::int64_t id;  // index into the archive's training split
    int label;
};

// Unlabeled training images. Exposes sample ids and pixels only.
class UnlabeledPool {
public:
    UnlabeledPool() = default;
    UnlabeledPool(std::shared_ptr<const ImageSet> images, std::vector<std::int64_t> ids);

    std::int64_t size() const { return static_cast<std::int64_t>(ids_.size()); }
    bool empty() const { return ids_.empty(); }
    const std::vector<std::int64_t>& ids() const { return ids_; }
    Image image(std::int64_t position, std::int64_t resolution) const;

private:
    std::shared_ptr<const ImageSet> images_;
    std::vector<std::int64_t> ids_;
};

class FewShotSplit {
public:
    FewShotSplit(std::shared_ptr<const DatasetArchive> archive, int shots, std::uint64_t seed,
                 std::vector<LabeledSample> labeled, std::vector<std::int64_t> unlabeled_ids);

    int shots() const { return shots_; }
    std::uint64_t seed() const { return seed_; }
    int num_classes() const { return archive_->num_classes; }
    const std::vector<LabeledSample>& labeled() const { return labeled_; }
    const UnlabeledPool& unlabeled() const { return pool_; }
    Image labeled_image(std::size_t index, std::int64_t resolution) const;
    const DatasetArchive& archive() const { return *archive_; }

    // Ground truth of unlabeled samples, for pseudo-label accuracy
    // diagnostics only; training code never reads it.
    int hidden_label(std::int64_t sample_id) const;

    // One line per sample: "labeled <id> <class>" or "unlabeled <id>".
    std::string manifest() const;
    void write_manifest(const std::filesystem::path& path) const;

private:
    std::shared_ptr<const DatasetArchive> archive_;
    int shots_;
    std::uint64_t seed_;
    std::vector<LabeledSample> labeled_;
    UnlabeledPool pool_;
};

// Per class, N training samples drawn uniformly without replacement; the rest
// of the training split becomes the unlabeled pool.
FewShotSplit build_fewshot_split(std::shared_ptr<const DatasetArchive> archive, int shots, std::uint64_t seed);

// Synthetic two-class dataset of noisy discs and squares.
struct ToyOptions {
    std::int64_t size = 32;
    std::int64_t train = 510;
    std::int64_t val = 100;
    std::int64_t test = 400;
    double noise = 0.1;      // std-dev of pixel noise, in units of full range
    double contrast = 0.5;   // shape brightness above background
    std::uint64_t seed = 7;
};
DatasetArchive make_toy_archive(const ToyOptions& options);

}  // namespace sparse::data
