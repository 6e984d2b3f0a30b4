#include "mangacolor/colornet.hpp"

#include <algorithm>
#include <cmath>

#include "mangacolor/error.hpp"
#include "mangacolor/nn/checkpoint.hpp"

namespace mangacolor {

using nn::ConvBlock;
using nn::Mode;
using nn::Shape;
using nn::Tensor;

namespace {

constexpr float kLabScale[3] = {100.0f, 255.0f, 255.0f};
constexpr float kLabOffset[3] = {0.0f, -128.0f, -128.0f};

Shape drop_batch(const Shape& s) { return Shape(s.begin() + 1, s.end()); }

void add_into(Tensor& acc, const Tensor& g) {
    if (acc.empty()) {
        acc = g;
        return;
    }
    if (acc.shape() != g.shape()) throw ShapeError("gradient accumulation shape mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
    if (t.shape() != expected) {
        throw ShapeError(std::string(what) + ": expected " + nn::shape_string(expected) + ", got " +
                         nn::shape_string(t.shape()));
    }
}

}  // namespace

nlohmann::json ModelConfig::to_json() const {
    return {{"label_count", label_count}, {"input_size", input_size}, {"width_divisor", width_divisor}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
    ModelConfig c;
    c.label_count = doc.value("label_count", c.label_count);
    c.input_size = doc.value("input_size", c.input_size);
    c.width_divisor = doc.value("width_divisor", c.width_divisor);
    return c;
}

// ---------------------------------------------------------------------------
// Colorization model

ColorizationModel::ColorizationModel(const ModelConfig& config) : config_(config) {
    if (config_.label_count < 1) throw InvalidArgument("label_count must be positive");
    if (config_.width_divisor < 1) throw InvalidArgument("width_divisor must be positive");
    if (config_.input_size < 32 || config_.input_size % 32 != 0) {
        throw InvalidArgument("input_size must be a positive multiple of 32");
    }
    nn::InitRng rng(config_.seed);
    auto w = [this](int full) { return config_.width(full); };

    struct Spec {
        int out, stride;
    };
    const Spec low[] = {{64, 2}, {128, 1}, {128, 2}, {256, 1}, {256, 2}, {512, 1}};
    int in = kColorInputChannels;
    for (std::size_t i = 0; i < std::size(low); ++i) {
        low_.push_back(ConvBlock::create(params_, "low." + std::to_string(i), in, w(low[i].out), 3, low[i].stride, 1, rng));
        in = w(low[i].out);
    }
    const int low_out = in;

    in = low_out;
    const int mid[] = {512, 256};
    for (std::size_t i = 0; i < std::size(mid); ++i) {
        mid_.push_back(ConvBlock::create(params_, "mid." + std::to_string(i), in, w(mid[i]), 3, 1, 1, rng));
        in = w(mid[i]);
    }
    const int mid_out = in;

    in = low_out;
    const Spec glob[] = {{512, 2}, {512, 1}, {512, 2}, {512, 1}};
    for (std::size_t i = 0; i < std::size(glob); ++i) {
        global_conv_.push_back(
            ConvBlock::create(params_, "global." + std::to_string(i), in, w(glob[i].out), 3, glob[i].stride, 1, rng));
        in = w(glob[i].out);
    }
    const int grid = config_.input_size / 32;
    global_fc1_ = nn::Linear::create(params_, "global.fc1", in * grid * grid, w(1024), rng);
    global_fc2_ = nn::Linear::create(params_, "global.fc2", w(1024), w(512), rng);
    global_fusion_ = nn::Linear::create(params_, "global.fusion", w(512), w(256), rng);
    classifier_ = nn::Linear::create(params_, "classifier", w(512), config_.label_count, rng);
    color_fc_ = nn::Linear::create(params_, "color.fc", kFeatureBins, w(256), rng);

    fusion_ = ConvBlock::create(params_, "fusion", mid_out + 2 * w(256), w(256), 1, 1, 0, rng);
    const int dec[] = {128, 64, 64, 32};
    in = w(256);
    for (std::size_t i = 0; i < std::size(dec); ++i) {
        decoder_.push_back(ConvBlock::create(params_, "decoder." + std::to_string(i), in, w(dec[i]), 3, 1, 1, rng));
        in = w(dec[i]);
    }
    out_conv_ = ConvBlock::create(params_, "decoder.out", in, 3, 3, 1, 1, rng, false, false);
    build_ledger();
}

ColorizationModel::~ColorizationModel() = default;

void ColorizationModel::build_ledger() {
    const int s = config_.input_size;
    ShapeLedger& L = ledger_;
    L.input = {1, kColorInputChannels, s, s};
    Shape h = L.input;
    for (const auto& b : low_) h = b.output_shape(h);
    L.low_level = h;
    Shape m = h;
    for (const auto& b : mid_) m = b.output_shape(m);
    L.mid_level = m;
    Shape g = h;
    for (const auto& b : global_conv_) g = b.output_shape(g);
    L.global_conv = g;
    if (static_cast<int>(nn::shape_size(g)) != global_fc1_.weight->dim(1)) {
        throw ShapeError("global conv output " + nn::shape_string(g) + " does not feed FC of width " +
                         std::to_string(global_fc1_.weight->dim(1)));
    }
    L.global_vector = {1, global_fusion_.out_features()};
    L.color_vector = {1, color_fc_.out_features()};
    L.class_logits = {1, classifier_.out_features()};
    L.fusion_input = {1, m[1] + L.global_vector[1] + L.color_vector[1], m[2], m[3]};
    L.fusion_output = fusion_.output_shape(L.fusion_input);
    Shape d = L.fusion_output;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
        d = decoder_[i].output_shape(d);
        if (i == 0 || i == 2) d = {d[0], d[1], d[2] * 2, d[3] * 2};
    }
    d = out_conv_.output_shape(d);
    L.decoder_output = d;
    L.output = {1, 3, d[2] * 2, d[3] * 2};
    if (L.output != Shape{1, 3, s, s}) {
        throw ShapeError("model output " + nn::shape_string(L.output) + " does not match input side " + std::to_string(s));
    }
    for (Shape* sh : {&L.input, &L.low_level, &L.mid_level, &L.global_conv, &L.global_vector, &L.color_vector,
                      &L.fusion_input, &L.fusion_output, &L.decoder_output, &L.output, &L.class_logits}) {
        *sh = drop_batch(*sh);
    }
    Discriminator probe_shapes_only(config_.width_divisor);
    L.discriminator_chain = probe_shapes_only.shape_chain({3, s, s});
}

ColorizationOutput ColorizationModel::infer(const Tensor& x, const Tensor& feature, ShapeLedger* observed) const {
    return run(x, feature, Mode::Eval, nullptr, observed);
}

ColorizationOutput ColorizationModel::forward(const Tensor& x, const Tensor& feature, Mode mode, Cache& cache) {
    return run(x, feature, mode, &cache, nullptr);
}

ColorizationOutput ColorizationModel::run(const Tensor& x, const Tensor& feature, Mode mode, Cache* cache,
                                          ShapeLedger* observed) const {
    const int s = config_.input_size;
    if (x.rank() != 4 || x.dim(1) != kColorInputChannels || x.dim(2) != s || x.dim(3) != s) {
        throw ShapeError("model input must be [N,3," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                         nn::shape_string(x.shape()));
    }
    const int n = x.dim(0);
    require_shape(feature, {n, kFeatureBins}, "color feature");
    if (cache) {
        cache->mode = mode;
        cache->low.assign(low_.size(), {});
        cache->mid.assign(mid_.size(), {});
        cache->global_conv.assign(global_conv_.size(), {});
        cache->decoder.assign(decoder_.size(), {});
    }
    auto slot = [cache](std::vector<ConvBlock::Cache>& v, std::size_t i) { return cache ? &v[i] : nullptr; };
    std::vector<ConvBlock::Cache> none;

    Tensor h = x;
    for (std::size_t i = 0; i < low_.size(); ++i) h = low_[i].forward(h, mode, slot(cache ? cache->low : none, i));
    const Tensor low_out = h;

    Tensor m = low_out;
    for (std::size_t i = 0; i < mid_.size(); ++i) m = mid_[i].forward(m, mode, slot(cache ? cache->mid : none, i));

    Tensor g = low_out;
    for (std::size_t i = 0; i < global_conv_.size(); ++i) {
        g = global_conv_[i].forward(g, mode, slot(cache ? cache->global_conv : none, i));
    }
    const Shape gshape = g.shape();
    const Tensor gflat = g.reshaped({n, static_cast<int>(g.size() / n)});
    const Tensor g1 = nn::relu(global_fc1_.forward(gflat));
    const Tensor g2 = nn::relu(global_fc2_.forward(g1));
    const Tensor gv = nn::relu(global_fusion_.forward(g2));
    Tensor logits = classifier_.forward(g2);
    const Tensor cv = nn::relu(color_fc_.forward(feature));

    const int fh = m.dim(2), fw = m.dim(3);
    const Tensor gb = nn::broadcast_spatial(gv, fh, fw);
    const Tensor cb = nn::broadcast_spatial(cv, fh, fw);
    const Tensor fin = nn::concat_channels({&m, &gb, &cb});
    const Tensor f = fusion_.forward(fin, mode, cache ? &cache->fusion : nullptr);

    Tensor d = f;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
        d = decoder_[i].forward(d, mode, slot(cache ? cache->decoder : none, i));
        if (i == 0 || i == 2) d = nn::upsample2x_nearest(d);
    }
    const Tensor o = out_conv_.forward(d, mode, cache ? &cache->out : nullptr);
    Tensor sig = nn::sigmoid(o);
    Tensor lab = nn::upsample2x_bilinear(sig);
    const std::size_t plane = static_cast<std::size_t>(lab.dim(2)) * lab.dim(3);
    for (int b = 0; b < n; ++b) {
        for (int c = 0; c < 3; ++c) {
            float* p = lab.ptr() + (static_cast<std::size_t>(b) * 3 + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] * kLabScale[c] + kLabOffset[c];
        }
    }

    if (observed) {
        observed->input = drop_batch(x.shape());
        observed->low_level = drop_batch(low_out.shape());
        observed->mid_level = drop_batch(m.shape());
        observed->global_conv = drop_batch(gshape);
        observed->global_vector = drop_batch(gv.shape());
        observed->color_vector = drop_batch(cv.shape());
        observed->fusion_input = drop_batch(fin.shape());
        observed->fusion_output = drop_batch(f.shape());
        observed->decoder_output = drop_batch(o.shape());
        observed->output = drop_batch(lab.shape());
        observed->class_logits = drop_batch(logits.shape());
        observed->discriminator_chain = ledger_.discriminator_chain;
    }
    if (cache) {
        cache->global_conv_shape = gshape;
        cache->fc1 = {gflat, g1};
        cache->fc2 = {g1, g2};
        cache->global_vec = {g2, gv};
        cache->color = {feature, cv};
        cache->sig = std::move(sig);
        cache->fusion_split = {m.dim(1), gv.dim(1), cv.dim(1)};
    }
    return {std::move(lab), std::move(logits)};
}

ColorizationModel::InputGrads ColorizationModel::backward(const Cache& cache, const Tensor& grad_lab,
                                                          const Tensor& grad_logits, bool want_x_grad,
                                                          bool want_feature_grad) {
    InputGrads out;
    Tensor g_low;  // gradient arriving at the low-level output
    Tensor g_g2;   // gradient at the FC 512 output (post ReLU)

    if (!grad_lab.empty()) {
        Tensor gu = grad_lab;
        require_shape(gu, {cache.sig.dim(0), 3, cache.sig.dim(2) * 2, cache.sig.dim(3) * 2}, "grad_lab");
        const std::size_t plane = static_cast<std::size_t>(gu.dim(2)) * gu.dim(3);
        for (int b = 0; b < gu.dim(0); ++b) {
            for (int c = 0; c < 3; ++c) {
                float* p = gu.ptr() + (static_cast<std::size_t>(b) * 3 + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] *= kLabScale[c];
            }
        }
        Tensor gd = nn::sigmoid_backward(cache.sig, nn::upsample2x_bilinear_backward(gu));
        gd = out_conv_.backward(cache.out, gd);
        for (std::size_t i = decoder_.size(); i-- > 0;) {
            if (i == 0 || i == 2) gd = nn::upsample2x_nearest_backward(gd);
            gd = decoder_[i].backward(cache.decoder[i], gd);
        }
        const Tensor gfin = fusion_.backward(cache.fusion, gd);
        auto parts = nn::concat_channels_backward(gfin, cache.fusion_split);

        Tensor gcv = nn::relu_backward(cache.color.output, nn::broadcast_spatial_backward(parts[2]));
        Tensor gfeat = color_fc_.backward(cache.color.input, gcv, want_feature_grad);
        if (want_feature_grad) out.feature = std::move(gfeat);

        Tensor ggv = nn::relu_backward(cache.global_vec.output, nn::broadcast_spatial_backward(parts[1]));
        add_into(g_g2, global_fusion_.backward(cache.global_vec.input, ggv));

        Tensor gm = std::move(parts[0]);
        for (std::size_t i = mid_.size(); i-- > 0;) gm = mid_[i].backward(cache.mid[i], gm);
        add_into(g_low, gm);
    } else if (want_feature_grad) {
        out.feature = Tensor(cache.color.input.shape());
    }

    if (!grad_logits.empty()) add_into(g_g2, classifier_.backward(cache.global_vec.input, grad_logits));

    if (!g_g2.empty()) {
        Tensor g = nn::relu_backward(cache.fc2.output, g_g2);
        g = global_fc2_.backward(cache.fc2.input, g);
        g = nn::relu_backward(cache.fc1.output, g);
        g = global_fc1_.backward(cache.fc1.input, g).reshaped(cache.global_conv_shape);
        for (std::size_t i = global_conv_.size(); i-- > 0;) g = global_conv_[i].backward(cache.global_conv[i], g);
        add_into(g_low, g);
    }

    if (!g_low.empty()) {
        for (std::size_t i = low_.size(); i-- > 0;) {
            g_low = low_[i].backward(cache.low[i], g_low, i > 0 || want_x_grad);
        }
        if (want_x_grad) out.x = std::move(g_low);
    }
    return out;
}

nlohmann::json ColorizationModel::checkpoint_meta() const {
    auto meta = config_.to_json();
    meta["kind"] = "colorizer";
    meta["arch_version"] = kArchVersion;
    return meta;
}

void ColorizationModel::save(const std::filesystem::path& dir) const {
    nn::save_checkpoint(dir, params_, checkpoint_meta());
}

std::unique_ptr<ColorizationModel> ColorizationModel::load(const std::filesystem::path& dir) {
    const auto meta = nn::read_checkpoint_meta(dir);
    if (meta.value("kind", "") != "colorizer") throw IoError(dir.string() + " is not a colorization checkpoint");
    if (meta.value("arch_version", 0) != kArchVersion) throw IoError("unsupported architecture version in " + dir.string());
    auto model = std::make_unique<ColorizationModel>(ModelConfig::from_json(meta));
    nn::load_checkpoint(dir, model->params_);
    return model;
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(int width_divisor, std::uint64_t seed) {
    if (width_divisor < 1) throw InvalidArgument("width_divisor must be positive");
    nn::InitRng rng(seed ^ 0x6469736372696dull);
    int in = 3;
    const int widths[] = {64, 128, 256, 512};
    for (std::size_t i = 0; i < std::size(widths); ++i) {
        const int out = std::max(1, widths[i] / width_divisor);
        convs_.push_back(ConvBlock::create(params_, "disc." + std::to_string(i), in, out, 4, 2, 1, rng));
        in = out;
    }
    head_ = nn::Linear::create(params_, "disc.head", in, 1, rng);
}

Discriminator::~Discriminator() = default;

std::vector<Shape> Discriminator::shape_chain(const Shape& input) const {
    std::vector<Shape> chain{input};
    Shape s = input;
    s.insert(s.begin(), 1);
    for (const auto& c : convs_) {
        s = c.output_shape(s);
        chain.push_back(drop_batch(s));
    }
    return chain;
}

Tensor Discriminator::infer(const Tensor& x) const {
    Tensor h = x;
    for (const auto& c : convs_) h = c.forward(h, Mode::Eval, nullptr);
    return head_.forward(nn::global_avg_pool(h));
}

Tensor Discriminator::forward(const Tensor& x, Mode mode, Cache& cache) {
    cache.convs.assign(convs_.size(), {});
    Tensor h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) h = convs_[i].forward(h, mode, &cache.convs[i]);
    cache.pooled_from = h.shape();
    cache.pooled = nn::global_avg_pool(h);
    return head_.forward(cache.pooled);
}

Tensor Discriminator::backward(const Cache& cache, const Tensor& grad_logits, bool need_dx) {
    Tensor g = head_.backward(cache.pooled, grad_logits);
    g = nn::global_avg_pool_backward(g, cache.pooled_from[2], cache.pooled_from[3]);
    for (std::size_t i = convs_.size(); i-- > 0;) g = convs_[i].backward(cache.convs[i], g, i > 0 || need_dx);
    return need_dx ? g : Tensor();
}

Tensor lab_to_unit(const Tensor& lab) {
    if (lab.rank() != 4 || lab.dim(1) != 3) throw ShapeError("lab_to_unit expects [N,3,H,W]");
    Tensor out(lab.shape());
    const std::size_t plane = static_cast<std::size_t>(lab.dim(2)) * lab.dim(3);
    for (int b = 0; b < lab.dim(0); ++b) {
        for (int c = 0; c < 3; ++c) {
            const std::size_t base = (static_cast<std::size_t>(b) * 3 + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) out[base + i] = (lab[base + i] - kLabOffset[c]) / kLabScale[c];
        }
    }
    return out;
}

Tensor lab_to_unit_backward(const Tensor& grad_unit) {
    Tensor out(grad_unit.shape());
    const std::size_t plane = static_cast<std::size_t>(grad_unit.dim(2)) * grad_unit.dim(3);
    for (int b = 0; b < grad_unit.dim(0); ++b) {
        for (int c = 0; c < 3; ++c) {
            const std::size_t base = (static_cast<std::size_t>(b) * 3 + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) out[base + i] = grad_unit[base + i] / kLabScale[c];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Super-resolution

SRModel::SRModel(int width_divisor, std::uint64_t seed) : width_divisor_(width_divisor) {
    if (width_divisor < 1) throw InvalidArgument("width_divisor must be positive");
    nn::InitRng rng(seed ^ 0x7375706572726573ull);
    auto w = [width_divisor](int full) { return std::max(1, full / width_divisor); };
    enc1_ = ConvBlock::create(params_, "sr.enc1", 3, w(32), 3, 1, 1, rng, false, true);
    enc2_ = ConvBlock::create(params_, "sr.enc2", w(32), w(64), 3, 2, 1, rng, false, true);
    enc3_ = ConvBlock::create(params_, "sr.enc3", w(64), w(128), 3, 2, 1, rng, false, true);
    dec2_ = ConvBlock::create(params_, "sr.dec2", w(128) + w(64), w(64), 3, 1, 1, rng, false, true);
    dec1_ = ConvBlock::create(params_, "sr.dec1", w(64) + w(32), w(32), 3, 1, 1, rng, false, true);
    out_ = ConvBlock::create(params_, "sr.out", w(32), 3, 3, 1, 1, rng, false, false);
    // Start close to the plain upsampling so early training refines rather
    // than fights a random residual.
    for (float& v : out_.conv.weight->data()) v *= 0.1f;
}

SRModel::~SRModel() = default;

std::unique_ptr<SRModel> SRModel::identity(int width_divisor, std::uint64_t seed) {
    auto m = std::make_unique<SRModel>(width_divisor, seed);
    std::fill(m->out_.conv.weight->data().begin(), m->out_.conv.weight->data().end(), 0.0f);
    std::fill(m->out_.conv.bias->data().begin(), m->out_.conv.bias->data().end(), 0.0f);
    return m;
}

Tensor SRModel::infer(const Tensor& x) const { return run(x, nullptr); }

Tensor SRModel::forward(const Tensor& x, Cache& cache) const { return run(x, &cache); }

Tensor SRModel::run(const Tensor& x, Cache* cache) const {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
        throw ShapeError("super-resolution input must be [N,3,H,W] with H and W divisible by 4, got " +
                         nn::shape_string(x.shape()));
    }
    auto c = [cache](ConvBlock::Cache Cache::*member) { return cache ? &(cache->*member) : nullptr; };
    const Tensor e1 = enc1_.forward(x, Mode::Eval, c(&Cache::enc1));
    const Tensor e2 = enc2_.forward(e1, Mode::Eval, c(&Cache::enc2));
    const Tensor e3 = enc3_.forward(e2, Mode::Eval, c(&Cache::enc3));
    const Tensor u3 = nn::upsample2x_nearest(e3);
    const Tensor d2 = dec2_.forward(nn::concat_channels({&u3, &e2}), Mode::Eval, c(&Cache::dec2));
    const Tensor u2 = nn::upsample2x_nearest(d2);
    const Tensor d1 = dec1_.forward(nn::concat_channels({&u2, &e1}), Mode::Eval, c(&Cache::dec1));
    Tensor y = out_.forward(nn::upsample2x_nearest(d1), Mode::Eval, c(&Cache::out));
    const Tensor base = nn::upsample2x_nearest(x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += base[i];
    if (cache) {
        cache->split2 = {u3.dim(1), e2.dim(1)};
        cache->split1 = {u2.dim(1), e1.dim(1)};
    }
    return y;
}

void SRModel::backward(const Cache& cache, const Tensor& grad_out) {
    Tensor g = nn::upsample2x_nearest_backward(out_.backward(cache.out, grad_out));
    auto p1 = nn::concat_channels_backward(dec1_.backward(cache.dec1, g), cache.split1);
    auto p2 = nn::concat_channels_backward(dec2_.backward(cache.dec2, nn::upsample2x_nearest_backward(p1[0])),
                                           cache.split2);
    Tensor g3 = enc3_.backward(cache.enc3, nn::upsample2x_nearest_backward(p2[0]));
    add_into(p2[1], g3);
    Tensor g2 = enc2_.backward(cache.enc2, p2[1]);
    add_into(p1[1], g2);
    enc1_.backward(cache.enc1, p1[1], false);
}

nlohmann::json SRModel::checkpoint_meta() const {
    return {{"kind", "superres"}, {"arch_version", kArchVersion}, {"width_divisor", width_divisor_}};
}

void SRModel::save(const std::filesystem::path& dir) const { nn::save_checkpoint(dir, params_, checkpoint_meta()); }

std::unique_ptr<SRModel> SRModel::load(const std::filesystem::path& dir) {
    const auto meta = nn::read_checkpoint_meta(dir);
    if (meta.value("kind", "") != "superres") throw IoError(dir.string() + " is not a super-resolution checkpoint");
    if (meta.value("arch_version", 0) != kArchVersion) throw IoError("unsupported architecture version in " + dir.string());
    auto model = std::make_unique<SRModel>(meta.value("width_divisor", 1));
    nn::load_checkpoint(dir, model->params_);
    return model;
}

// ---------------------------------------------------------------------------
// Tensor <-> image helpers

void write_model_input(Tensor& batch, int index, const RasterImage& mono, const std::vector<DotAnnotation>& dots) {
    if (mono.encoding() != Encoding::Mono1) throw EncodingMismatch("model input drawing must be Mono1");
    require_shape(batch, {batch.dim(0), 3, mono.height(), mono.width()}, "model input batch");
    if (index < 0 || index >= batch.dim(0)) throw InvalidArgument("batch index out of range");
    const std::size_t plane = mono.pixel_count();
    float* base = batch.ptr() + static_cast<std::size_t>(index) * 3 * plane;
    const auto px = mono.bytes();
    for (std::size_t i = 0; i < plane; ++i) base[i] = px[i];
    std::fill(base + plane, base + 3 * plane, 0.0f);
    for (const auto& d : dots) {
        if (d.x < 0 || d.y < 0 || d.x >= mono.width() || d.y >= mono.height()) {
            throw InvalidArgument("dot (" + std::to_string(d.x) + "," + std::to_string(d.y) + ") is outside the input");
        }
        const std::size_t p = static_cast<std::size_t>(d.y) * mono.width() + d.x;
        base[plane + p] = d.a;
        base[2 * plane + p] = d.b;
    }
}

void write_feature(Tensor& batch, int index, const ColorFeature& feature) {
    require_shape(batch, {batch.dim(0), kFeatureBins}, "feature batch");
    const auto v = feature_to_vector(feature);
    for (int i = 0; i < kFeatureBins; ++i) batch[static_cast<std::size_t>(index) * kFeatureBins + i] = static_cast<float>(v[i]);
}

RasterImage tensor_to_lab_image(const Tensor& lab, int index) {
    if (lab.rank() != 4 || lab.dim(1) != 3) throw ShapeError("expected [N,3,H,W]");
    const int h = lab.dim(2), w = lab.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const float* base = lab.ptr() + static_cast<std::size_t>(index) * 3 * plane;
    std::vector<float> samples(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) samples[3 * i + c] = base[c * plane + i];
    }
    return RasterImage::lab(w, h, std::move(samples));
}

RasterImage tensor_to_rgb_image(const Tensor& unit, int index) {
    if (unit.rank() != 4 || unit.dim(1) != 3) throw ShapeError("expected [N,3,H,W]");
    const int h = unit.dim(2), w = unit.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const float* base = unit.ptr() + static_cast<std::size_t>(index) * 3 * plane;
    std::vector<std::uint8_t> samples(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(static_cast<double>(base[c * plane + i]), 0.0, 1.0);
            samples[3 * i + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    return RasterImage::rgb(w, h, std::move(samples));
}

void write_rgb_unit(Tensor& batch, int index, const RasterImage& rgb) {
    if (rgb.encoding() != Encoding::RGB8) throw EncodingMismatch("expected RGB8");
    require_shape(batch, {batch.dim(0), 3, rgb.height(), rgb.width()}, "rgb batch");
    const std::size_t plane = rgb.pixel_count();
    float* base = batch.ptr() + static_cast<std::size_t>(index) * 3 * plane;
    const auto px = rgb.bytes();
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) base[c * plane + i] = px[3 * i + c] / 255.0f;
    }
}

void write_lab(Tensor& batch, int index, const RasterImage& lab) {
    if (lab.encoding() != Encoding::LabF32) throw EncodingMismatch("expected LabF32");
    require_shape(batch, {batch.dim(0), 3, lab.height(), lab.width()}, "lab batch");
    const std::size_t plane = lab.pixel_count();
    float* base = batch.ptr() + static_cast<std::size_t>(index) * 3 * plane;
    const auto px = lab.floats();
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) base[c * plane + i] = px[3 * i + c];
    }
}

}  // namespace mangacolor
