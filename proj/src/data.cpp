#include "sparse/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "sparse/npz.hpp"

namespace sparse::data {

InsufficientDataError::InsufficientDataError(int class_index, std::int64_t available, std::int64_t requested)
    : std::runtime_error("class " + std::to_string(class_index) + " has " + std::to_string(available) +
                         " training samples, " + std::to_string(requested) + " requested"),
      class_index_(class_index) {}

std::int64_t ImageSet::count() const {
    const std::int64_t per = height * width * channels;
    return per ? static_cast<std::int64_t>(pixels.size()) / per : 0;
}

std::span<const std::uint8_t> ImageSet::image(std::int64_t index) const {
    const auto per = static_cast<std::size_t>(height * width * channels);
    return std::span<const std::uint8_t>(pixels).subspan(static_cast<std::size_t>(index) * per, per);
}

const std::vector<KnownDataset>& known_medmnist() {
    static const std::vector<KnownDataset> table = {
        {"bloodmnist", 8, 11959, 1712, 3421},     {"breastmnist", 2, 546, 78, 156},
        {"chestmnist", 2, 78468, 11219, 22433},   {"dermamnist", 7, 7007, 1003, 2005},
        {"octmnist", 4, 97477, 10832, 1000},      {"organamnist", 11, 34561, 6491, 17778},
        {"organcmnist", 11, 12975, 2392, 8216},   {"organsmnist", 11, 13932, 2452, 8827},
        {"pathmnist", 9, 89996, 10004, 7180},     {"pneumoniamnist", 2, 4708, 524, 624},
        {"tissuemnist", 8, 165466, 23640, 47280},
    };
    return table;
}

namespace {

std::string dataset_name(const std::filesystem::path& path) {
    std::string stem = path.stem().string();
    std::transform(stem.begin(), stem.end(), stem.begin(), [](unsigned char c) { return std::tolower(c); });
    // MedMNIST+ ships resolution-suffixed files, e.g. breastmnist_128.npz
    if (auto us = stem.rfind('_'); us != std::string::npos && us + 1 < stem.size() &&
                                   std::all_of(stem.begin() + static_cast<std::ptrdiff_t>(us) + 1, stem.end(),
                                               [](unsigned char c) { return std::isdigit(c); })) {
        stem.resize(us);
    }
    return stem;
}

LabeledImages read_split(const npz::Archive& npz, const std::string& split) {
    const std::string ik = split + "_images", lk = split + "_labels";
    auto images = npz.find(ik);
    auto labels = npz.find(lk);
    if (images == npz.end()) throw FormatError("archive is missing array '" + ik + "'");
    if (labels == npz.end()) throw FormatError("archive is missing array '" + lk + "'");

    const auto& ia = images->second;
    if (ia.dtype != npz::DType::u8) throw FormatError("'" + ik + "' must be uint8");
    LabeledImages out;
    if (ia.shape.size() == 3) {
        out.images.channels = 1;
    } else if (ia.shape.size() == 4) {
        out.images.channels = ia.shape[3];
    } else {
        throw FormatError("'" + ik + "' must be N x H x W or N x H x W x C");
    }
    out.images.height = ia.shape[1];
    out.images.width = ia.shape[2];
    out.images.pixels = ia.bytes;

    const auto& la = labels->second;
    const bool single_column = la.shape.size() == 1 || (la.shape.size() == 2 && la.shape[1] == 1);
    if (!single_column) throw FormatError("'" + lk + "' must hold one label per sample");
    if (la.shape[0] != ia.shape[0]) throw FormatError(split + " images and labels differ in count");
    for (auto v : la.to_int64()) out.labels.push_back(static_cast<int>(v));
    return out;
}

void check_shape(const ImageSet& a, const ImageSet& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw FormatError("splits disagree on image shape");
    }
}

void append_split(npz::Archive& out, const std::string& split, const LabeledImages& s) {
    std::vector<std::int64_t> shape{s.images.count(), s.images.height, s.images.width};
    if (s.images.channels != 1) shape.push_back(s.images.channels);
    out[split + "_images"] = npz::Array::from_u8(shape, s.images.pixels);
    std::vector<std::uint8_t> labels(s.labels.begin(), s.labels.end());
    out[split + "_labels"] = npz::Array::from_u8({static_cast<std::int64_t>(labels.size()), 1}, labels);
}

}  // namespace

DatasetArchive load_archive(const std::filesystem::path& path, std::optional<int> expected_classes) {
    npz::Archive npz;
    try {
        npz = npz::load(path);
    } catch (const npz::NpzError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    DatasetArchive a;
    a.name = dataset_name(path);
    a.train = read_split(npz, "train");
    a.val = read_split(npz, "val");
    a.test = read_split(npz, "test");
    check_shape(a.train.images, a.val.images);
    check_shape(a.train.images, a.test.images);

    int max_label = -1;
    for (const auto* s : {&a.train, &a.val, &a.test}) {
        for (int l : s->labels) {
            if (l < 0) throw CorruptionError("negative label " + std::to_string(l));
            max_label = std::max(max_label, l);
        }
    }
    a.num_classes = max_label + 1;
    if (expected_classes) {
        if (max_label >= *expected_classes) {
            throw CorruptionError("label " + std::to_string(max_label) + " outside [0, " +
                                  std::to_string(*expected_classes) + ")");
        }
        a.num_classes = *expected_classes;
    }

    for (const auto& known : known_medmnist()) {
        if (a.name != known.name) continue;
        if (a.train.labels.size() != static_cast<std::size_t>(known.train) ||
            a.val.labels.size() != static_cast<std::size_t>(known.val) ||
            a.test.labels.size() != static_cast<std::size_t>(known.test)) {
            throw FormatError(a.name + ": split sizes do not match the published MedMNIST counts");
        }
        if (a.num_classes > known.num_classes) throw CorruptionError(a.name + ": too many classes");
        a.num_classes = known.num_classes;
    }
    return a;
}

void save_archive(const std::filesystem::path& path, const DatasetArchive& archive) {
    npz::Archive out;
    append_split(out, "train", archive.train);
    append_split(out, "val", archive.val);
    append_split(out, "test", archive.test);
    npz::save(path, out);
}

Image prepare_image(const ImageSet& set, std::int64_t index, std::int64_t resolution) {
    const auto src = set.image(index);
    const std::int64_t h = set.height, w = set.width, c = set.channels;
    const std::int64_t oh = resolution > 0 ? resolution : h;
    const std::int64_t ow = resolution > 0 ? resolution : w;
    Image out{c, oh, ow, std::vector<double>(static_cast<std::size_t>(c * oh * ow))};
    auto pixel = [&](std::int64_t y, std::int64_t x, std::int64_t ch) {
        return static_cast<double>(src[static_cast<std::size_t>((y * w + x) * c + ch)]);
    };
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = 0; y < oh; ++y) {
            for (std::int64_t x = 0; x < ow; ++x) {
                double v;
                if (oh == h && ow == w) {
                    v = pixel(y, x, ch);
                } else {
                    const double sy = std::clamp((static_cast<double>(y) + 0.5) * h / oh - 0.5, 0.0, double(h - 1));
                    const double sx = std::clamp((static_cast<double>(x) + 0.5) * w / ow - 0.5, 0.0, double(w - 1));
                    const auto y0 = static_cast<std::int64_t>(sy), x0 = static_cast<std::int64_t>(sx);
                    const std::int64_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
                    const double fy = sy - y0, fx = sx - x0;
                    v = (1 - fy) * ((1 - fx) * pixel(y0, x0, ch) + fx * pixel(y0, x1, ch)) +
                        fy * ((1 - fx) * pixel(y1, x0, ch) + fx * pixel(y1, x1, ch));
                }
                out.values[static_cast<std::size_t>((ch * oh + y) * ow + x)] = v / 127.5 - 1.0;
            }
        }
    }
    return out;
}

void flip_horizontal(Image& image) {
    for (std::int64_t row = 0; row < image.channels * image.height; ++row) {
        auto begin = image.values.begin() + row * image.width;
        std::reverse(begin, begin + image.width);
    }
}

Image augment(Image image, std::mt19937_64& rng) {
    if (std::bernoulli_distribution(0.5)(rng)) flip_horizontal(image);
    return image;
}

ag::Tensor stack(std::span<const Image> images) {
    if (images.empty()) throw std::invalid_argument("stack of zero images");
    const auto& f = images.front();
    std::vector<double> values;
    values.reserve(images.size() * f.values.size());
    for (const auto& im : images) {
        if (im.channels != f.channels || im.height != f.height || im.width != f.width) {
            throw std::invalid_argument("stack: images differ in shape");
        }
        values.insert(values.end(), im.values.begin(), im.values.end());
    }
    return ag::Tensor::from({static_cast<std::int64_t>(images.size()), f.channels, f.height, f.width},
                            std::move(values));
}

UnlabeledPool::UnlabeledPool(std::shared_ptr<const ImageSet> images, std::vector<std::int64_t> ids)
    : images_(std::move(images)), ids_(std::move(ids)) {}

Image UnlabeledPool::image(std::int64_t position, std::int64_t resolution) const {
    return prepare_image(*images_, ids_.at(static_cast<std::size_t>(position)), resolution);
}

FewShotSplit::FewShotSplit(std::shared_ptr<const DatasetArchive> archive, int shots, std::uint64_t seed,
                           std::vector<LabeledSample> labeled, std::vector<std::int64_t> unlabeled_ids)
    : archive_(std::move(archive)), shots_(shots), seed_(seed), labeled_(std::move(labeled)) {
    // Aliasing pointer: the pool sees the image block only, never the labels.
    std::shared_ptr<const ImageSet> images(archive_, &archive_->train.images);
    pool_ = UnlabeledPool(std::move(images), std::move(unlabeled_ids));
}

Image FewShotSplit::labeled_image(std::size_t index, std::int64_t resolution) const {
    return prepare_image(archive_->train.images, labeled_.at(index).id, resolution);
}

int FewShotSplit::hidden_label(std::int64_t sample_id) const {
    return archive_->train.labels.at(static_cast<std::size_t>(sample_id));
}

std::string FewShotSplit::manifest() const {
    std::ostringstream out;
    for (const auto& s : labeled_) out << "labeled " << s.id << ' ' << s.label << '\n';
    for (auto id : pool_.ids()) out << "unlabeled " << id << '\n';
    return out.str();
}

void FewShotSplit::write_manifest(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    out << manifest();
}

FewShotSplit build_fewshot_split(std::shared_ptr<const DatasetArchive> archive, int shots, std::uint64_t seed) {
    if (shots <= 0) throw std::invalid_argument("shots must be positive");
    const int k = archive->num_classes;
    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(k));
    const auto& labels = archive->train.labels;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<LabeledSample> labeled;
    std::vector<bool> taken(labels.size(), false);
    for (int c = 0; c < k; ++c) {
        auto& pool = by_class[static_cast<std::size_t>(c)];
        if (static_cast<std::int64_t>(pool.size()) < shots) throw InsufficientDataError(c, pool.size(), shots);
        // partial Fisher-Yates
        for (int j = 0; j < shots; ++j) {
            std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(j), pool.size() - 1);
            std::swap(pool[static_cast<std::size_t>(j)], pool[pick(rng)]);
            labeled.push_back({pool[static_cast<std::size_t>(j)], c});
            taken[static_cast<std::size_t>(pool[static_cast<std::size_t>(j)])] = true;
        }
    }
    std::vector<std::int64_t> unlabeled;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!taken[i]) unlabeled.push_back(static_cast<std::int64_t>(i));
    }
    return FewShotSplit(std::move(archive), shots, seed, std::move(labeled), std::move(unlabeled));
}

namespace {

LabeledImages toy_split(std::int64_t count, const ToyOptions& o, std::mt19937_64& rng) {
    LabeledImages out;
    out.images.height = out.images.width = o.size;
    out.images.channels = 1;
    out.images.pixels.resize(static_cast<std::size_t>(count * o.size * o.size));
    std::normal_distribution<double> noise(0.0, o.noise);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double s = static_cast<double>(o.size);
    for (std::int64_t n = 0; n < count; ++n) {
        const int label = static_cast<int>(n % 2);
        out.labels.push_back(label);
        // class 0: horizontal bar, class 1: vertical bar
        const double length = s * (0.45 + 0.3 * unit(rng));
        const double thickness = s * (0.12 + 0.08 * unit(rng));
        const double along = label == 0 ? length : thickness;
        const double across = label == 0 ? thickness : length;
        const double cx = along / 2 + unit(rng) * (s - along);
        const double cy = across / 2 + unit(rng) * (s - across);
        const double background = 0.3 + 0.1 * unit(rng);
        for (std::int64_t y = 0; y < o.size; ++y) {
            for (std::int64_t x = 0; x < o.size; ++x) {
                const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
                const bool inside = std::abs(dx) <= along / 2 && std::abs(dy) <= across / 2;
                double v = background + (inside ? o.contrast : 0.0) + noise(rng);
                v = std::clamp(v, 0.0, 1.0);
                out.images.pixels[static_cast<std::size_t>((n * o.size + y) * o.size + x)] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return out;
}

}  // namespace

DatasetArchive make_toy_archive(const ToyOptions& options) {
    std::mt19937_64 rng(options.seed);
    DatasetArchive a;
    a.name = "toy";
    a.num_classes = 2;
    a.train = toy_split(options.train, options, rng);
    a.val = toy_split(options.val, options, rng);
    a.test = toy_split(options.test, options, rng);
    return a;
}

}  // namespace sparse::data
