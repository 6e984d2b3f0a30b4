#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mangacolor/colornet.hpp"
#include "mangacolor/error.hpp"
#include "mangacolor/nn/adam.hpp"

namespace mangacolor {

inline constexpr int kMaxDots = 15;

/// Number of dots uniform in [0, max_dots], positions distinct and uniform,
/// chrominance copied from the target at each position.
std::vector<DotAnnotation> synthesize_dots(const RasterImage& target_lab, std::uint64_t seed,
                                           int max_dots = kMaxDots);

enum class FeaturePolicy { Mixed, Histogram, Palette };

struct ExampleOptions {
    int crop_size = 224;
    /// Random crop offset and flip; off means a centered crop, no flip.
    bool augment = true;
    bool dots = true;
    FeaturePolicy feature = FeaturePolicy::Mixed;
    double palette_tau = kDefaultPaletteTau;
};

struct TrainingExample {
    RasterImage mono;        // Mono1, crop_size square
    std::vector<DotAnnotation> dots;
    RasterImage target_lab;  // LabF32, crop_size square
    ColorFeature feature = ColorFeature::palette({1.0});
    int label = 0;
};

/// Resize to 8/7 of the crop size (256 for 224), crop (randomly when
/// augmenting) and flip, convert the crop to L*a*b, binarize it, synthesize
/// dots. The color feature comes from the whole input image; under the mixed
/// policy each example is a histogram or a palette with probability 1/2.
TrainingExample build_example(const RasterImage& color, int label, std::uint64_t seed,
                              const ExampleOptions& options = {});

struct LossWeights {
    double mse = 1.0;
    double adversarial = 1.0;
    double classification = 0.003;
};

struct LossReport {
    double mse = 0.0;
    double adversarial = 0.0;
    double classification = 0.0;
    double total = 0.0;
};

/// total = w.mse * mse + w.adversarial * adv + w.classification * cls,
/// evaluated left to right in double.
LossReport make_loss_report(double mse, double adversarial, double classification, const LossWeights& w);

struct LossRecord {
    long iteration = 0;  // 1-based
    LossReport loss;
    double disc_loss = 0.0;
};

enum class TrainTarget { Colorizer, SuperRes };

struct DatasetEntry {
    std::filesystem::path image;
    int label = 0;
};

struct TrainConfig {
    long iterations = 550000;
    int batch_size = 30;
    std::uint64_t seed = 0;
    int label_count = 428;
    int input_size = 224;
    int width_divisor = 1;
    LossWeights weights;
    nn::AdamConfig adam;
    long checkpoint_every = 0;  // 0: final checkpoint only
    ExampleOptions example;
    TrainTarget target = TrainTarget::Colorizer;
    int sr_patch = 32;  // low-resolution patch side for super-resolution training
    std::vector<DatasetEntry> dataset;

    /// Unknown keys are rejected. Relative dataset paths resolve against `base_dir`.
    static TrainConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
};

struct DatasetItem {
    RasterImage image;  // RGB8
    int label = 0;
};

std::vector<DatasetItem> load_dataset(const TrainConfig& config);

/// Alternating GAN training of the colorization model: per iteration one
/// discriminator step on real and detached generated images, then one
/// generator step on the weighted MSE, adversarial and classification losses.
class Trainer {
public:
    Trainer(const TrainConfig& config, std::vector<DatasetItem> data);
    ~Trainer();

    /// Runs one iteration. Throws TrainingError on a non-finite loss.
    LossRecord step();
    long iteration() const { return iteration_; }

    ColorizationModel& generator() { return *generator_; }
    Discriminator& discriminator() { return *discriminator_; }
    const TrainConfig& config() const { return config_; }

    /// Examples of the batch used at `iteration` (1-based); deterministic.
    std::vector<TrainingExample> batch_examples(long iteration) const;

private:
    TrainConfig config_;
    std::vector<DatasetItem> data_;
    std::unique_ptr<ColorizationModel> generator_;
    std::unique_ptr<Discriminator> discriminator_;
    nn::Adam adam_g_, adam_d_;
    long iteration_ = 0;
};

/// Super-resolution training on random patches: the high-resolution patch is
/// downsampled 2x by box averaging and the model learns to restore it.
class SRTrainer {
public:
    SRTrainer(const TrainConfig& config, std::vector<DatasetItem> data);
    ~SRTrainer();

    /// One Adam step; returns the batch MSE in [0,1] RGB units.
    double step();
    long iteration() const { return iteration_; }
    SRModel& model() { return *model_; }

private:
    TrainConfig config_;
    std::vector<DatasetItem> data_;
    std::unique_ptr<SRModel> model_;
    nn::Adam adam_;
    long iteration_ = 0;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

/// 2x box downsampling used to synthesize low-resolution inputs.
RasterImage downsample_half(const RasterImage& rgb);

/// Runs the configured training, writing `loss.csv`, periodic checkpoints
/// under `checkpoints/` and the final model under `model/` in `out_dir`.
/// `progress` is called after every iteration.
void train_to_directory(const TrainConfig& config, const std::filesystem::path& out_dir,
                        const std::function<void(const LossRecord&)>& progress = {});

}  // namespace mangacolor
