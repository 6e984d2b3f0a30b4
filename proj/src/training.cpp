#include "mangacolor/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "mangacolor/error.hpp"
#include "mangacolor/image_io.hpp"
#include "mangacolor/json_io.hpp"
#include "mangacolor/nn/ops.hpp"

namespace mangacolor {

namespace fs = std::filesystem;
using nn::Tensor;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

}  // namespace

std::vector<DotAnnotation> synthesize_dots(const RasterImage& target_lab, std::uint64_t seed, int max_dots) {
    if (target_lab.encoding() != Encoding::LabF32) throw EncodingMismatch("synthesize_dots expects LabF32");
    if (max_dots < 0) throw InvalidArgument("max_dots must be non-negative");
    std::mt19937_64 rng(seed);
    const auto pixels = static_cast<long long>(target_lab.pixel_count());
    const int count = static_cast<int>(
        std::min<long long>(std::uniform_int_distribution<int>(0, max_dots)(rng), pixels));
    std::uniform_int_distribution<long long> pick(0, pixels - 1);
    std::unordered_set<long long> used;
    std::vector<DotAnnotation> dots;
    const auto px = target_lab.floats();
    while (static_cast<int>(dots.size()) < count) {
        const long long p = pick(rng);
        if (!used.insert(p).second) continue;
        const int x = static_cast<int>(p % target_lab.width());
        const int y = static_cast<int>(p / target_lab.width());
        const std::size_t o = target_lab.offset(x, y);
        dots.push_back({x, y, px[o + 1], px[o + 2]});
    }
    return dots;
}

TrainingExample build_example(const RasterImage& color, int label, std::uint64_t seed,
                              const ExampleOptions& options) {
    if (color.encoding() != Encoding::RGB8) throw EncodingMismatch("training images must be RGB8");
    if (color.empty()) throw InvalidArgument("training image is empty");
    if (options.crop_size < 1) throw InvalidArgument("crop size must be positive");
    const int side = options.crop_size * 8 / 7;
    const RasterImage resized = (color.width() == side && color.height() == side)
                                    ? color
                                    : resize(color, side, side, ResizeMethod::Bilinear);
    RasterImage cropped;
    if (options.augment) {
        cropped = random_crop_flip(resized, options.crop_size, 0.5, mix(seed, 1));
    } else {
        const int off = (side - options.crop_size) / 2;
        cropped = crop(resized, off, off, options.crop_size, options.crop_size);
    }

    TrainingExample ex;
    ex.label = label;
    ex.target_lab = rgb_to_lab(cropped);
    ex.mono = binarize(cropped);
    if (options.dots) ex.dots = synthesize_dots(ex.target_lab, mix(seed, 2));

    const ColorFeature hist = extract_histogram(color);
    bool palette = options.feature == FeaturePolicy::Palette;
    if (options.feature == FeaturePolicy::Mixed) {
        std::mt19937_64 rng(mix(seed, 3));
        palette = std::bernoulli_distribution(0.5)(rng);
    }
    ex.feature = palette ? binarize_palette(hist, options.palette_tau) : hist;
    return ex;
}

LossReport make_loss_report(double mse, double adversarial, double classification, const LossWeights& w) {
    LossReport r{mse, adversarial, classification, 0.0};
    r.total = w.mse * mse + w.adversarial * adversarial + w.classification * classification;
    return r;
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string> kConfigKeys = {
    "iterations", "batch_size", "seed",     "label_count",      "input_size", "width_divisor", "loss_weights",
    "adam",       "checkpoint_every",       "feature_mode",     "palette_tau", "augment",      "dots",
    "target",     "sr_patch",   "dataset"};

template <typename T>
void read_field(const nlohmann::json& doc, const char* key, T& out) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InvalidArgument(std::string("config field '") + key + "' has the wrong type");
    }
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw InvalidArgument("training config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (!kConfigKeys.count(key)) throw InvalidArgument("unknown training config field '" + key + "'");
    }
    TrainConfig c;
    read_field(doc, "iterations", c.iterations);
    read_field(doc, "batch_size", c.batch_size);
    read_field(doc, "seed", c.seed);
    read_field(doc, "label_count", c.label_count);
    read_field(doc, "input_size", c.input_size);
    read_field(doc, "width_divisor", c.width_divisor);
    read_field(doc, "checkpoint_every", c.checkpoint_every);
    read_field(doc, "palette_tau", c.example.palette_tau);
    read_field(doc, "augment", c.example.augment);
    read_field(doc, "dots", c.example.dots);
    read_field(doc, "sr_patch", c.sr_patch);
    c.example.crop_size = c.input_size;
    if (doc.contains("loss_weights")) {
        const auto& w = doc["loss_weights"];
        read_field(w, "mse", c.weights.mse);
        read_field(w, "adversarial", c.weights.adversarial);
        read_field(w, "classification", c.weights.classification);
    }
    if (doc.contains("adam")) {
        const auto& a = doc["adam"];
        read_field(a, "alpha", c.adam.alpha);
        read_field(a, "beta1", c.adam.beta1);
        read_field(a, "beta2", c.adam.beta2);
        read_field(a, "eps", c.adam.eps);
    }
    if (doc.contains("feature_mode")) {
        const auto mode = doc["feature_mode"].get<std::string>();
        if (mode == "mixed") c.example.feature = FeaturePolicy::Mixed;
        else if (mode == "histogram") c.example.feature = FeaturePolicy::Histogram;
        else if (mode == "palette") c.example.feature = FeaturePolicy::Palette;
        else throw InvalidArgument("feature_mode must be mixed, histogram or palette");
    }
    if (doc.contains("target")) {
        const auto t = doc["target"].get<std::string>();
        if (t == "colorizer") c.target = TrainTarget::Colorizer;
        else if (t == "superres") c.target = TrainTarget::SuperRes;
        else throw InvalidArgument("target must be colorizer or superres");
    }
    if (doc.contains("dataset")) {
        for (const auto& e : doc["dataset"]) {
            DatasetEntry entry;
            fs::path p = e.at("image").get<std::string>();
            entry.image = p.is_absolute() ? p : base_dir / p;
            entry.label = e.value("label", 0);
            c.dataset.push_back(std::move(entry));
        }
    }
    if (c.iterations < 0 || c.batch_size < 1 || c.label_count < 1 || c.width_divisor < 1) {
        throw InvalidArgument("training config: iterations, batch_size, label_count and width_divisor must be positive");
    }
    return c;
}

std::vector<DatasetItem> load_dataset(const TrainConfig& config) {
    if (config.dataset.empty()) throw InvalidArgument("training dataset is empty");
    std::vector<DatasetItem> items;
    for (const auto& e : config.dataset) {
        if (e.label < 0 || e.label >= config.label_count) {
            throw InvalidArgument("label " + std::to_string(e.label) + " of " + e.image.string() + " is out of range");
        }
        items.push_back({read_image(e.image), e.label});
    }
    return items;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& config, std::vector<DatasetItem> data)
    : config_(config), data_(std::move(data)), adam_g_(config.adam), adam_d_(config.adam) {
    if (data_.empty()) throw InvalidArgument("training dataset is empty");
    for (const auto& d : data_) {
        if (d.label < 0 || d.label >= config_.label_count) throw InvalidArgument("dataset label out of range");
    }
    ModelConfig mc;
    mc.label_count = config_.label_count;
    mc.input_size = config_.input_size;
    mc.width_divisor = config_.width_divisor;
    mc.seed = mix(config_.seed, 10);
    config_.example.crop_size = config_.input_size;
    generator_ = std::make_unique<ColorizationModel>(mc);
    discriminator_ = std::make_unique<Discriminator>(config_.width_divisor, mix(config_.seed, 11));
}

Trainer::~Trainer() = default;

namespace {

// Item order for one pass over the data, reshuffled every epoch.
std::size_t item_for(std::uint64_t seed, long global_index, std::size_t n) {
    const long epoch = global_index / static_cast<long>(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix(seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    return order[static_cast<std::size_t>(global_index % static_cast<long>(n))];
}

void scale(Tensor& t, double factor) {
    for (float& v : t.data()) v = static_cast<float>(v * factor);
}

}  // namespace

std::vector<TrainingExample> Trainer::batch_examples(long iteration) const {
    std::vector<TrainingExample> out;
    for (int j = 0; j < config_.batch_size; ++j) {
        const long global = (iteration - 1) * config_.batch_size + j;
        const auto& item = data_[item_for(config_.seed, global, data_.size())];
        out.push_back(build_example(item.image, item.label, mix(config_.seed, 100000 + static_cast<std::uint64_t>(global)),
                                    config_.example));
    }
    return out;
}

LossRecord Trainer::step() {
    const long it = iteration_ + 1;
    const int n = config_.batch_size;
    const int s = config_.input_size;
    const auto examples = batch_examples(it);

    Tensor x({n, 3, s, s}), feature({n, kFeatureBins}), target({n, 3, s, s});
    std::vector<int> labels;
    for (int j = 0; j < n; ++j) {
        write_model_input(x, j, examples[j].mono, examples[j].dots);
        write_feature(feature, j, examples[j].feature);
        write_lab(target, j, examples[j].target_lab);
        labels.push_back(examples[j].label);
    }

    ColorizationModel::Cache gcache;
    auto out = generator_->forward(x, feature, nn::Mode::Train, gcache);
    const Tensor fake_unit = lab_to_unit(out.lab);

    // Discriminator: real and detached fake, averaged over all items.
    discriminator_->params().zero_grad();
    double disc_loss = 0.0;
    {
        Discriminator::Cache real_cache, fake_cache;
        Tensor g;
        const Tensor real_logits = discriminator_->forward(lab_to_unit(target), nn::Mode::Train, real_cache);
        disc_loss += 0.5 * nn::sigmoid_cross_entropy(real_logits, 1.0f, &g);
        scale(g, 0.5);
        discriminator_->backward(real_cache, g, false);
        const Tensor fake_logits = discriminator_->forward(fake_unit, nn::Mode::Train, fake_cache);
        disc_loss += 0.5 * nn::sigmoid_cross_entropy(fake_logits, 0.0f, &g);
        scale(g, 0.5);
        discriminator_->backward(fake_cache, g, false);
    }
    if (!std::isfinite(disc_loss)) {
        throw TrainingError("non-finite discriminator loss at iteration " + std::to_string(it));
    }
    adam_d_.step(discriminator_->params());

    // Generator.
    generator_->params().zero_grad();
    Tensor g_lab, g_adv, g_cls;
    const double mse = nn::mse_loss(out.lab, target, &g_lab);
    scale(g_lab, config_.weights.mse);
    Discriminator::Cache adv_cache;
    const Tensor adv_logits = discriminator_->forward(fake_unit, nn::Mode::Train, adv_cache);
    const double adv = nn::sigmoid_cross_entropy(adv_logits, 1.0f, &g_adv);
    if (config_.weights.adversarial != 0.0) {
        scale(g_adv, config_.weights.adversarial);
        const Tensor g_unit = discriminator_->backward(adv_cache, g_adv, true);
        const Tensor g_from_adv = lab_to_unit_backward(g_unit);
        for (std::size_t i = 0; i < g_lab.size(); ++i) g_lab[i] += g_from_adv[i];
    }
    const double cls = nn::softmax_cross_entropy(out.logits, labels, &g_cls);
    scale(g_cls, config_.weights.classification);

    const LossReport report = make_loss_report(mse, adv, cls, config_.weights);
    if (!std::isfinite(report.total)) {
        throw TrainingError("non-finite generator loss at iteration " + std::to_string(it));
    }
    generator_->backward(gcache, g_lab, g_cls);
    try {
        adam_g_.step(generator_->params());
    } catch (const InvalidArgument& e) {
        throw TrainingError(std::string(e.what()) + " at iteration " + std::to_string(it));
    }
    iteration_ = it;
    return {it, report, disc_loss};
}

// ---------------------------------------------------------------------------

RasterImage downsample_half(const RasterImage& rgb) {
    if (rgb.encoding() != Encoding::RGB8) throw EncodingMismatch("downsample_half expects RGB8");
    if (rgb.width() % 2 || rgb.height() % 2) throw InvalidArgument("downsample_half needs even dimensions");
    const int w = rgb.width() / 2, h = rgb.height() / 2;
    RasterImage out(w, h, Encoding::RGB8);
    const auto src = rgb.bytes();
    auto dst = out.bytes();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int sum = src[rgb.offset(2 * x, 2 * y) + c] + src[rgb.offset(2 * x + 1, 2 * y) + c] +
                                src[rgb.offset(2 * x, 2 * y + 1) + c] + src[rgb.offset(2 * x + 1, 2 * y + 1) + c];
                dst[out.offset(x, y) + c] = static_cast<std::uint8_t>((sum + 2) / 4);
            }
        }
    }
    return out;
}

SRTrainer::SRTrainer(const TrainConfig& config, std::vector<DatasetItem> data)
    : config_(config), data_(std::move(data)), adam_(config.adam) {
    if (data_.empty()) throw InvalidArgument("training dataset is empty");
    if (config_.sr_patch < 4 || config_.sr_patch % 4) throw InvalidArgument("sr_patch must be a positive multiple of 4");
    for (const auto& d : data_) {
        if (d.image.width() < 2 * config_.sr_patch || d.image.height() < 2 * config_.sr_patch) {
            throw InvalidArgument("super-resolution training images must be at least twice the patch size");
        }
    }
    model_ = std::make_unique<SRModel>(config_.width_divisor, mix(config_.seed, 20));
}

SRTrainer::~SRTrainer() = default;

double SRTrainer::step() {
    const long it = iteration_ + 1;
    const int n = config_.batch_size;
    const int p = config_.sr_patch;
    Tensor lr({n, 3, p, p}), hr({n, 3, 2 * p, 2 * p});
    for (int j = 0; j < n; ++j) {
        const long global = (it - 1) * n + j;
        const auto& img = data_[item_for(config_.seed, global, data_.size())].image;
        std::mt19937_64 rng(mix(config_.seed, 200000 + static_cast<std::uint64_t>(global)));
        const int x = 2 * std::uniform_int_distribution<int>(0, (img.width() - 2 * p) / 2)(rng);
        const int y = 2 * std::uniform_int_distribution<int>(0, (img.height() - 2 * p) / 2)(rng);
        RasterImage patch = crop(img, x, y, 2 * p, 2 * p);
        if (config_.example.augment && std::bernoulli_distribution(0.5)(rng)) patch = flip_horizontal(patch);
        write_rgb_unit(hr, j, patch);
        write_rgb_unit(lr, j, downsample_half(patch));
    }
    SRModel::Cache cache;
    const Tensor out = model_->forward(lr, cache);
    Tensor g;
    const double mse = nn::mse_loss(out, hr, &g);
    if (!std::isfinite(mse)) throw TrainingError("non-finite super-resolution loss at iteration " + std::to_string(it));
    model_->params().zero_grad();
    model_->backward(cache, g);
    adam_.step(model_->params());
    iteration_ = it;
    return mse;
}

// ---------------------------------------------------------------------------

void train_to_directory(const TrainConfig& config, const fs::path& out_dir,
                        const std::function<void(const LossRecord&)>& progress) {
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "loss.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (out_dir / "loss.csv").string());
    csv << "iteration,mse,adv,cls,total,disc_loss\n";
    csv << std::setprecision(17);
    auto checkpoint_dir = [&](long it) {
        std::ostringstream name;
        name << "iter_" << std::setw(7) << std::setfill('0') << it;
        return out_dir / "checkpoints" / name.str();
    };
    auto record = [&](const LossRecord& r) {
        csv << r.iteration << ',' << r.loss.mse << ',' << r.loss.adversarial << ',' << r.loss.classification << ','
            << r.loss.total << ',' << r.disc_loss << '\n';
        csv.flush();
        if (progress) progress(r);
    };

    auto data = load_dataset(config);
    if (config.target == TrainTarget::SuperRes) {
        SRTrainer trainer(config, std::move(data));
        for (long i = 0; i < config.iterations; ++i) {
            const double mse = trainer.step();
            record({trainer.iteration(), make_loss_report(mse, 0.0, 0.0, {1.0, 0.0, 0.0}), 0.0});
            if (config.checkpoint_every > 0 && trainer.iteration() % config.checkpoint_every == 0) {
                trainer.model().save(checkpoint_dir(trainer.iteration()));
            }
        }
        trainer.model().save(out_dir / "model");
        return;
    }
    Trainer trainer(config, std::move(data));
    for (long i = 0; i < config.iterations; ++i) {
        record(trainer.step());
        if (config.checkpoint_every > 0 && trainer.iteration() % config.checkpoint_every == 0) {
            trainer.generator().save(checkpoint_dir(trainer.iteration()));
        }
    }
    trainer.generator().save(out_dir / "model");
}

}  // namespace mangacolor
