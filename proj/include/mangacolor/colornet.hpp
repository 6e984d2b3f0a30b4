#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mangacolor/color_feature.hpp"
#include "mangacolor/nn/layers.hpp"

namespace mangacolor {

inline constexpr int kArchVersion = 1;
inline constexpr int kColorInputChannels = 3;  // binarized drawing, dot a, dot b

struct ModelConfig {
    int label_count = 428;
    /// Square input side; must be a multiple of 32 (four stride-2 stages
    /// reach the global 7x7 grid at 224).
    int input_size = 224;
    /// Every hidden width is divided by this (minimum 1). 1 is the full model.
    int width_divisor = 1;
    std::uint64_t seed = 0;

    int width(int full) const { return full / width_divisor > 0 ? full / width_divisor : 1; }
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& doc);
};

/// Shapes at the stage boundaries for a batch of one, excluding the batch axis.
struct ShapeLedger {
    nn::Shape input, low_level, mid_level, global_conv, global_vector, color_vector, fusion_input, fusion_output,
        decoder_output, output, class_logits;
    std::vector<nn::Shape> discriminator_chain;  // input and every conv output

    bool operator==(const ShapeLedger&) const = default;
};

struct ColorizationOutput {
    nn::Tensor lab;     // [N,3,S,S]: L in [0,100], a and b in [-128,127]
    nn::Tensor logits;  // [N,label_count]
};

/// Encoder/decoder colorization network conditioned on a 216-bin color feature.
///
///   low-level tower  3 -> 64 s2, 128, 128 s2, 256, 256 s2, 512    (S/8)
///   mid-level        512, 256
///   global           512 s2, 512, 512 s2, 512, FC 1024, FC 512
///                      -> FC 256 (fusion vector), FC label_count (classes)
///   color            FC 216 -> 256
///   fusion           concat(mid, global, color) 768 -> 1x1 conv 256
///   decoder          128, up, 64, 64, up, 32, 3 + sigmoid      (S/2)
///   output           fixed bilinear x2, then L = 100 s, a = b = 255 s - 128
///
/// Every conv except the last is followed by batch norm and ReLU. The low-level
/// tower is shared by the mid-level and global paths.
class ColorizationModel {
public:
    /// Activations kept by forward for the backward pass.
    struct Cache {
        struct Linear {
            nn::Tensor input, output;
        };
        nn::Mode mode = nn::Mode::Train;
        std::vector<nn::ConvBlock::Cache> low, mid, global_conv, decoder;
        nn::ConvBlock::Cache fusion, out;
        nn::Shape global_conv_shape;
        Linear fc1, fc2, global_vec, color;
        nn::Tensor sig;  // sigmoid output before the fixed upsampling
        std::vector<int> fusion_split;
    };

    explicit ColorizationModel(const ModelConfig& config = {});
    ColorizationModel(const ColorizationModel&) = delete;
    ColorizationModel& operator=(const ColorizationModel&) = delete;
    ~ColorizationModel();

    const ModelConfig& config() const { return config_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    /// Stage shapes derived from the layer definitions at construction; a
    /// mismatch anywhere throws ShapeError from the constructor.
    const ShapeLedger& shape_ledger() const { return ledger_; }

    /// x: [N,3,S,S], feature: [N,216]. Eval mode, no state is touched, safe to
    /// call concurrently. `observed`, when given, receives the actual shapes.
    ColorizationOutput infer(const nn::Tensor& x, const nn::Tensor& feature, ShapeLedger* observed = nullptr) const;

    /// Forward that records what backward needs. Train mode updates the batch
    /// norm running statistics.
    ColorizationOutput forward(const nn::Tensor& x, const nn::Tensor& feature, nn::Mode mode, Cache& cache);

    struct InputGrads {
        nn::Tensor x;        // empty unless requested
        nn::Tensor feature;  // empty unless requested
    };
    /// Accumulates parameter gradients. Either output gradient may be empty.
    InputGrads backward(const Cache& cache, const nn::Tensor& grad_lab, const nn::Tensor& grad_logits,
                        bool want_x_grad = false, bool want_feature_grad = false);

    nlohmann::json checkpoint_meta() const;
    void save(const std::filesystem::path& dir) const;
    /// Builds the architecture recorded in the checkpoint and loads its weights.
    static std::unique_ptr<ColorizationModel> load(const std::filesystem::path& dir);

private:
    ColorizationOutput run(const nn::Tensor& x, const nn::Tensor& feature, nn::Mode mode, Cache* cache,
                           ShapeLedger* observed) const;
    void build_ledger();

    ModelConfig config_;
    nn::ParamSet params_;
    std::vector<nn::ConvBlock> low_, mid_, global_conv_, decoder_;
    nn::ConvBlock fusion_;
    nn::ConvBlock out_conv_;
    nn::Linear global_fc1_, global_fc2_, global_fusion_, classifier_, color_fc_;
    ShapeLedger ledger_;
};

/// Four 4x4 stride-2 convs (64, 128, 256, 512) with batch norm and ReLU,
/// global average pooling and an affine map to one real/fake logit.
/// Input is L*a*b scaled to [0,1] per channel.
class Discriminator {
public:
    struct Cache {
        std::vector<nn::ConvBlock::Cache> convs;
        nn::Shape pooled_from;
        nn::Tensor pooled;
    };

    explicit Discriminator(int width_divisor = 1, std::uint64_t seed = 0);
    Discriminator(const Discriminator&) = delete;
    Discriminator& operator=(const Discriminator&) = delete;
    ~Discriminator();

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }
    std::vector<nn::Shape> shape_chain(const nn::Shape& input) const;

    /// Returns logits [N,1].
    nn::Tensor infer(const nn::Tensor& x) const;
    nn::Tensor forward(const nn::Tensor& x, nn::Mode mode, Cache& cache);
    /// Accumulates parameter gradients and returns d/dx.
    nn::Tensor backward(const Cache& cache, const nn::Tensor& grad_logits, bool need_dx);

private:
    nn::ParamSet params_;
    std::vector<nn::ConvBlock> convs_;
    nn::Linear head_;
};

/// Maps a Lab tensor to [0,1]^3: L/100, (a+128)/255, (b+128)/255.
nn::Tensor lab_to_unit(const nn::Tensor& lab);
/// Gradient of lab_to_unit applied to an upstream gradient.
nn::Tensor lab_to_unit_backward(const nn::Tensor& grad_unit);

/// 2x super-resolution: a three-level encoder (32, 64 s2, 128 s2) and a
/// decoder that upsamples and concatenates the skips, predicting a residual
/// on top of the nearest-upsampled input. Works on RGB in [0,1]; any input
/// side divisible by 4 is accepted.
class SRModel {
public:
    struct Cache {
        nn::ConvBlock::Cache enc1, enc2, enc3, dec2, dec1, out;
        std::vector<int> split2, split1;
    };

    explicit SRModel(int width_divisor = 1, std::uint64_t seed = 0);
    SRModel(const SRModel&) = delete;
    SRModel& operator=(const SRModel&) = delete;
    ~SRModel();

    /// A model whose residual branch is zero: output = nearest-upsampled input.
    static std::unique_ptr<SRModel> identity(int width_divisor = 1, std::uint64_t seed = 0);

    int width_divisor() const { return width_divisor_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    nn::Tensor infer(const nn::Tensor& x) const;
    nn::Tensor forward(const nn::Tensor& x, Cache& cache) const;
    void backward(const Cache& cache, const nn::Tensor& grad_out);

    nlohmann::json checkpoint_meta() const;
    void save(const std::filesystem::path& dir) const;
    static std::unique_ptr<SRModel> load(const std::filesystem::path& dir);

private:
    nn::Tensor run(const nn::Tensor& x, Cache* cache) const;

    int width_divisor_;
    nn::ParamSet params_;
    nn::ConvBlock enc1_, enc2_, enc3_, dec2_, dec1_, out_;
};

/// A one-pixel chrominance hint.
struct DotAnnotation {
    int x = 0;
    int y = 0;
    float a = 0.0f;
    float b = 0.0f;

    bool operator==(const DotAnnotation&) const = default;
};

/// Packs a binarized drawing (Mono1) and optional dots into slot `index` of a
/// [N,3,S,S] batch: channel 0 is the 0/1 drawing, channels 1 and 2 hold dot
/// a and b values and are zero elsewhere.
void write_model_input(nn::Tensor& batch, int index, const RasterImage& mono,
                       const std::vector<DotAnnotation>& dots);
void write_feature(nn::Tensor& batch, int index, const ColorFeature& feature);

/// One item of a [N,3,H,W] Lab tensor as a LabF32 image.
RasterImage tensor_to_lab_image(const nn::Tensor& lab, int index);
/// One item of a [N,3,H,W] tensor in [0,1] as RGB8 (clamped, rounded).
RasterImage tensor_to_rgb_image(const nn::Tensor& unit, int index);
/// RGB8 image into slot `index` of a [N,3,H,W] tensor, scaled to [0,1].
void write_rgb_unit(nn::Tensor& batch, int index, const RasterImage& rgb);
/// LabF32 image into slot `index` of a [N,3,H,W] tensor.
void write_lab(nn::Tensor& batch, int index, const RasterImage& lab);

}  // namespace mangacolor
