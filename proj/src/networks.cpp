#include "sparse/networks.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace sparse::networks {

namespace {

constexpr double kSlope = 0.2;

std::int64_t stage_channels(const ArchSpec& a, std::int64_t level) {
    return std::min(a.width << level, a.width * 8);
}

void validate(const ArchSpec& a) {
    if (a.channels <= 0 || a.num_classes <= 0 || a.depth <= 0 || a.width <= 0) {
        throw std::invalid_argument("architecture fields must be positive: " + a.to_string());
    }
    if (a.resolution % (std::int64_t{1} << a.depth) != 0) {
        throw std::invalid_argument("resolution must be divisible by 2^depth: " + a.to_string());
    }
}

void require_image(const Tensor& x, const ArchSpec& a) {
    if (x.dim() != 4 || x.size(1) != a.channels || x.size(2) != a.resolution || x.size(3) != a.resolution) {
        throw std::invalid_argument("expected images [B," + std::to_string(a.channels) + "," +
                                    std::to_string(a.resolution) + "," + std::to_string(a.resolution) + "], got " +
                                    ag::shape_str(x.shape()));
    }
}

// z [B,K] -> K constant planes [B,K,H,W]
Tensor condition_planes(const Tensor& z, std::int64_t h, std::int64_t w) {
    Tensor planes = ag::reshape(z, {z.size(0), z.size(1), 1, 1});
    return ag::broadcast_to(planes, {z.size(0), z.size(1), h, w});
}

}  // namespace

std::string ArchSpec::to_string() const {
    std::ostringstream out;
    out << "channels=" << channels << " resolution=" << resolution << " num_classes=" << num_classes
        << " depth=" << depth << " width=" << width;
    return out.str();
}

ArchSpec ArchSpec::parse(const std::string& text) {
    ArchSpec a;
    std::istringstream in(text);
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad architecture token '" + token + "'");
        const std::string key = token.substr(0, eq);
        const std::int64_t value = std::stoll(token.substr(eq + 1));
        if (key == "channels") a.channels = value;
        else if (key == "resolution") a.resolution = value;
        else if (key == "num_classes") a.num_classes = value;
        else if (key == "depth") a.depth = value;
        else if (key == "width") a.width = value;
        else throw std::runtime_error("unknown architecture field '" + key + "'");
    }
    return a;
}

void require_one_hot(const Tensor& z, std::int64_t num_classes) {
    if (z.dim() != 2 || z.size(1) != num_classes) {
        throw std::invalid_argument("class condition must be [B," + std::to_string(num_classes) + "], got " +
                                    ag::shape_str(z.shape()));
    }
    for (std::int64_t b = 0; b < z.size(0); ++b) {
        int ones = 0;
        for (std::int64_t k = 0; k < num_classes; ++k) {
            const double v = z.at(b * num_classes + k);
            if (v == 1.0) {
                ++ones;
            } else if (v != 0.0) {
                ones = -1;
                break;
            }
        }
        if (ones != 1) throw std::invalid_argument("class condition row " + std::to_string(b) + " is not one-hot");
    }
}

Tensor one_hot(const std::vector<int>& classes, std::int64_t num_classes) {
    std::vector<double> v(classes.size() * static_cast<std::size_t>(num_classes), 0.0);
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] < 0 || classes[i] >= num_classes) throw std::out_of_range("class index out of range");
        v[i * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(classes[i])] = 1.0;
    }
    return Tensor::from({static_cast<std::int64_t>(classes.size()), num_classes}, std::move(v));
}

Generator::Generator(const ArchSpec& arch, std::mt19937_64& rng) : arch_(arch) {
    validate(arch_);
    for (std::int64_t level = 0; level <= arch_.depth; ++level) enc_channels_.push_back(stage_channels(arch_, level));

    for (std::int64_t level = 0; level <= arch_.depth; ++level) {
        const std::int64_t out = enc_channels_[static_cast<std::size_t>(level)];
        if (level == 0) {
            enc_conv_.push_back(std::make_unique<nn::Conv2d>(arch_.channels + arch_.num_classes, out, 3, 1, 1, false, rng));
        } else {
            const std::int64_t in = enc_channels_[static_cast<std::size_t>(level - 1)];
            enc_conv_.push_back(std::make_unique<nn::Conv2d>(in, out, 4, 2, 1, false, rng));
        }
        enc_norm_.push_back(std::make_unique<nn::InstanceNorm2d>(out));
        register_module("enc" + std::to_string(level) + ".conv", *enc_conv_.back());
        register_module("enc" + std::to_string(level) + ".norm", *enc_norm_.back());
    }
    head_ = std::make_unique<nn::Linear>(enc_channels_.back(), arch_.num_classes, rng);
    register_module("head", *head_);

    for (std::int64_t level = arch_.depth; level >= 1; --level) {
        const std::int64_t deep = enc_channels_[static_cast<std::size_t>(level)];
        const std::int64_t skip = enc_channels_[static_cast<std::size_t>(level - 1)];
        dec_conv_.push_back(std::make_unique<nn::Conv2d>(deep + skip, skip, 3, 1, 1, false, rng));
        dec_norm_.push_back(std::make_unique<nn::InstanceNorm2d>(skip));
        register_module("dec" + std::to_string(level) + ".conv", *dec_conv_.back());
        register_module("dec" + std::to_string(level) + ".norm", *dec_norm_.back());
    }
    out_conv_ = std::make_unique<nn::Conv2d>(enc_channels_.front(), arch_.channels, 3, 1, 1, true, rng);
    register_module("out", *out_conv_);
}

std::vector<Tensor> Generator::encode(const Tensor& x, const Tensor& z) const {
    Tensor h = ag::concat({x, condition_planes(z, x.size(2), x.size(3))}, 1);
    std::vector<Tensor> acts;
    for (std::size_t i = 0; i < enc_conv_.size(); ++i) {
        h = ag::leaky_relu(enc_norm_[i]->forward(enc_conv_[i]->forward(h)), kSlope);
        acts.push_back(h);
    }
    return acts;
}

Tensor Generator::translate(const Tensor& x, const Tensor& z) const {
    require_image(x, arch_);
    require_one_hot(z, arch_.num_classes);
    if (z.size(0) != x.size(0)) throw std::invalid_argument("translate: batch sizes of x and z differ");
    const auto acts = encode(x, z);
    Tensor h = acts.back();
    for (std::size_t j = 0; j < dec_conv_.size(); ++j) {
        const Tensor& skip = acts[acts.size() - 2 - j];
        h = ag::concat({ag::upsample_nearest2x(h), skip}, 1);
        h = ag::relu(dec_norm_[j]->forward(dec_conv_[j]->forward(h)));
    }
    return ag::tanh(out_conv_->forward(h));
}

Tensor Generator::encoder_logits(const Tensor& x) const {
    require_image(x, arch_);
    // Classification sees the image alone: the condition planes are zero.
    const Tensor z = Tensor::zeros({x.size(0), arch_.num_classes});
    return head_->forward(ag::global_avg_pool(encode(x, z).back()));
}

std::vector<Tensor> Generator::encoder_parameters() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < enc_conv_.size(); ++i) {
        for (auto& t : enc_conv_[i]->parameters()) out.push_back(t);
        for (auto& t : enc_norm_[i]->parameters()) out.push_back(t);
    }
    for (auto& t : head_->parameters()) out.push_back(t);
    return out;
}

Discriminator::Discriminator(const ArchSpec& arch, std::mt19937_64& rng) : arch_(arch) {
    validate(arch_);
    std::int64_t in = arch_.channels;
    for (std::int64_t level = 0; level < arch_.depth; ++level) {
        const std::int64_t out = stage_channels(arch_, level);
        convs_.push_back(std::make_unique<nn::Conv2d>(in, out, 4, 2, 1, true, rng));
        register_module("conv" + std::to_string(level), *convs_.back());
        in = out;
    }
    const std::int64_t side = arch_.resolution >> arch_.depth;
    const std::int64_t features = in * side * side;
    realism_ = std::make_unique<nn::Linear>(features, 1, rng);
    classes_ = std::make_unique<nn::Linear>(features, arch_.num_classes, rng);
    register_module("realism", *realism_);
    register_module("classes", *classes_);
}

Tensor Discriminator::trunk(const Tensor& x) const {
    require_image(x, arch_);
    Tensor h = x;
    for (const auto& conv : convs_) h = ag::leaky_relu(conv->forward(h), kSlope);
    return ag::reshape(h, {x.size(0), -1});
}

CriticOutput Discriminator::discriminate(const Tensor& x) const {
    const Tensor features = trunk(x);
    return {ag::reshape(realism_->forward(features), {x.size(0)}), classes_->forward(features)};
}

Classifier::Classifier(const ArchSpec& arch, std::mt19937_64& rng) : arch_(arch) {
    validate(arch_);
    std::int64_t ch = arch_.width;
    stem_ = std::make_unique<nn::Conv2d>(arch_.channels, ch, 3, 1, 1, true, rng);
    register_module("stem", *stem_);
    for (std::int64_t level = 0; level < arch_.depth; ++level) {
        const std::string tag = "stage" + std::to_string(level);
        res_a_.push_back(std::make_unique<nn::Conv2d>(ch, ch, 3, 1, 1, true, rng));
        res_b_.push_back(std::make_unique<nn::Conv2d>(ch, ch, 3, 1, 1, true, rng));
        const std::int64_t next = stage_channels(arch_, level + 1);
        down_.push_back(std::make_unique<nn::Conv2d>(ch, next, 4, 2, 1, true, rng));
        register_module(tag + ".res_a", *res_a_.back());
        register_module(tag + ".res_b", *res_b_.back());
        register_module(tag + ".down", *down_.back());
        ch = next;
    }
    head_ = std::make_unique<nn::Linear>(ch, arch_.num_classes, rng);
    register_module("head", *head_);
}

Tensor Classifier::classify(const Tensor& x) const {
    require_image(x, arch_);
    Tensor h = ag::leaky_relu(stem_->forward(x), kSlope);
    for (std::size_t i = 0; i < down_.size(); ++i) {
        Tensor r = res_b_[i]->forward(ag::leaky_relu(res_a_[i]->forward(h), kSlope));
        h = ag::leaky_relu(ag::add(h, r), kSlope);
        h = ag::leaky_relu(down_[i]->forward(h), kSlope);
    }
    return head_->forward(ag::global_avg_pool(h));
}

NetworkTriplet NetworkTriplet::create(const ArchSpec& arch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    NetworkTriplet t;
    t.generator = std::make_unique<Generator>(arch, rng);
    t.discriminator = std::make_unique<Discriminator>(arch, rng);
    t.classifier = std::make_unique<Classifier>(arch, rng);
    return t;
}

}  // namespace sparse::networks
