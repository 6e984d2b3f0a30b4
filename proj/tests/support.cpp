#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mangacolor/nn/layers.hpp"
#include "mangacolor/nn/ops.hpp"

namespace testsupport {

using nn::Tensor;

RasterImage toy_drawing(int kind, std::array<std::uint8_t, 3> fill, int size) {
    RasterImage img = RasterImage::filled_rgb(size, size, {255, 255, 255});
    auto px = img.bytes();
    const double c = size / 2.0;
    const double radius = size * 70.0 / 256.0;
    const int half = size * 60 / 256;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            bool inside, edge;
            if (kind == 0) {
                const double d = std::hypot(x - c, y - c);
                inside = d < radius;
                edge = std::abs(d - radius) < 3.0;
            } else {
                const int m = std::max(std::abs(x - size / 2), std::abs(y - size / 2));
                inside = m < half;
                edge = std::abs(m - half) < 3;
            }
            const auto o = img.offset(x, y);
            if (edge) {
                px[o] = px[o + 1] = px[o + 2] = 0;
            } else if (inside) {
                px[o] = fill[0];
                px[o + 1] = fill[1];
                px[o + 2] = fill[2];
            }
        }
    }
    return img;
}

std::vector<DatasetItem> toy_dataset() {
    return {{toy_drawing(0, kToyRed), 0},
            {toy_drawing(0, kToyBlue), 1},
            {toy_drawing(1, kToyRed), 2},
            {toy_drawing(1, kToyBlue), 3}};
}

RasterImage line_drawing(std::uint64_t seed, int size) {
    std::mt19937_64 rng(seed);
    RasterImage img = RasterImage::filled_rgb(size, size, {255, 255, 255});
    std::uniform_real_distribution<double> pos(0.0, size);
    std::uniform_int_distribution<int> width(1, 3), lines(4, 9);
    const int n = lines(rng);
    for (int k = 0; k < n; ++k) {
        const double x0 = pos(rng), y0 = pos(rng), x1 = pos(rng), y1 = pos(rng);
        const double half = width(rng) / 2.0;
        const double dx = x1 - x0, dy = y1 - y0, len2 = dx * dx + dy * dy;
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const double t = len2 > 0.0 ? std::clamp(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0) : 0.0;
                if (std::hypot(px - x0 - t * dx, py - y0 - t * dy) > half) continue;
                const auto o = img.offset(x, y);
                img.bytes()[o] = img.bytes()[o + 1] = img.bytes()[o + 2] = 0;
            }
        }
    }
    return img;
}

namespace {

void fill_rect(RasterImage& img, int x0, int y0, int x1, int y1, std::uint8_t v) {
    auto px = img.bytes();
    for (int y = std::max(0, y0); y < std::min(img.height(), y1); ++y) {
        for (int x = std::max(0, x0); x < std::min(img.width(), x1); ++x) {
            const auto o = img.offset(x, y);
            px[o] = px[o + 1] = px[o + 2] = v;
        }
    }
}

std::vector<int> split(int total, const std::vector<double>& weights, int gap) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    const int avail = total - gap * static_cast<int>(weights.size() - 1);
    std::vector<int> sizes;
    int used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const int s = i + 1 == weights.size() ? avail - used : static_cast<int>(std::lround(avail * weights[i] / sum));
        sizes.push_back(s);
        used += s;
    }
    return sizes;
}

}  // namespace

SyntheticPage grid_page(int width, int height, const std::vector<std::vector<double>>& rows,
                        const std::vector<double>& heights, int gutter, int margin, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SyntheticPage out{RasterImage::filled_rgb(width, height, {255, 255, 255}), {}};
    const auto row_h = split(height - 2 * margin, heights, gutter);
    int y = margin;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto col_w = split(width - 2 * margin, rows[r], gutter);
        std::vector<PanelRect> row;
        int x = margin;
        for (int w : col_w) {
            const PanelRect rect{x, y, w, row_h[r]};
            row.push_back(rect);
            fill_rect(out.page, rect.x, rect.y, rect.x + rect.w, rect.y + rect.h, 0);
            fill_rect(out.page, rect.x + 2, rect.y + 2, rect.x + rect.w - 2, rect.y + rect.h - 2, 255);
            // Interior ink: a gray block and a few strokes, clear of the frame.
            std::uniform_int_distribution<int> ux(rect.x + 8, rect.x + rect.w - 24);
            std::uniform_int_distribution<int> uy(rect.y + 8, rect.y + rect.h - 24);
            const int gx = ux(rng), gy = uy(rng);
            fill_rect(out.page, gx, gy, std::min(gx + rect.w / 3, rect.x + rect.w - 8),
                      std::min(gy + rect.h / 3, rect.y + rect.h - 8), 150);
            for (int k = 0; k < 4; ++k) {
                const int sx = ux(rng), sy = uy(rng);
                fill_rect(out.page, sx, sy, sx + 16, sy + 3, 0);
            }
            x += w + gutter;
        }
        out.panels.insert(out.panels.end(), row.rbegin(), row.rend());
        y += row_h[r] + gutter;
    }
    return out;
}

std::vector<std::pair<std::string, SyntheticPage>> grid_corpus() {
    std::vector<std::pair<std::string, SyntheticPage>> corpus;
    corpus.emplace_back("1x1", grid_page(420, 600, {{1.0}}, {1.0}, 12, 20, 1));
    corpus.emplace_back("2x2", grid_page(600, 840, {{1, 1}, {1, 1}}, {1, 1}, 14, 24, 2));
    corpus.emplace_back("3x2", grid_page(600, 840, {{1, 1}, {1, 1}, {1, 1}}, {1, 1, 1}, 12, 24, 3));
    corpus.emplace_back("irregular", grid_page(640, 900, {{1.0}, {0.6, 0.4}, {0.25, 0.35, 0.4}, {0.5, 0.5}},
                                               {0.22, 0.3, 0.26, 0.22}, 10, 20, 4));
    corpus.emplace_back("narrow-gutters", grid_page(500, 700, {{0.3, 0.7}, {0.5, 0.2, 0.3}}, {0.45, 0.55}, 5, 8, 5));
    return corpus;
}

ModelConfig tiny_config(int input_size, int divisor, std::uint64_t seed) {
    ModelConfig c;
    c.label_count = 4;
    c.input_size = input_size;
    c.width_divisor = divisor;
    c.seed = seed;
    return c;
}

namespace {

Tensor randn(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, scale);
    for (float& v : t.data()) v = static_cast<float>(n(rng));
    return t;
}

void add_to_grad(Tensor& t, const Tensor& g) {
    auto dst = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Tensor scalar(double v) { return Tensor({1}, std::vector<float>{static_cast<float>(v)}); }

struct Suite {
    std::vector<NamedGradCheck> results;
    std::mt19937_64 rng{2024};
    nn::GradCheckOptions options;

    void check(const std::string& name, const std::function<Tensor()>& forward,
               const std::function<void(const Tensor&)>& backward, const std::vector<nn::GradCheckTarget>& targets) {
        results.push_back({name, nn::grad_check(forward, backward, targets, options)});
    }
};

void conv_checks(Suite& s) {
    struct Geometry {
        const char* name;
        int k, stride, pad, c, o, hw;
    };
    const Geometry geoms[] = {{"conv3x3", 3, 1, 1, 3, 4, 6},
                              {"conv3x3 stride 2", 3, 2, 1, 3, 4, 7},
                              {"conv4x4 stride 2", 4, 2, 1, 2, 3, 8},
                              {"conv1x1", 1, 1, 0, 5, 3, 4}};
    for (const auto& g : geoms) {
        Tensor x = randn({2, g.c, g.hw, g.hw}, s.rng);
        Tensor w = randn({g.o, g.c, g.k, g.k}, s.rng, 0.5);
        Tensor b = randn({g.o}, s.rng);
        s.check(
            g.name, [&] { return nn::conv2d(x, w, b, g.stride, g.pad); },
            [&](const Tensor& r) { add_to_grad(x, nn::conv2d_backward(x, w, r, g.stride, g.pad, w.grad(), b.grad())); },
            {{"x", &x}, {"weight", &w}, {"bias", &b}});
    }
}

void batch_norm_checks(Suite& s) {
    for (const bool train : {false, true}) {
        Tensor x = randn({3, 4, 3, 3}, s.rng, 2.0);
        Tensor gamma = randn({4}, s.rng);
        Tensor beta = randn({4}, s.rng);
        Tensor mean = randn({4}, s.rng);
        Tensor var({4});
        for (float& v : var.data()) v = 0.5f + static_cast<float>(std::uniform_real_distribution<double>(0, 2)(s.rng));
        nn::BatchNormCache cache;
        s.check(
            train ? "batch norm (batch statistics)" : "batch norm (running statistics)",
            [&] {
                if (!train) return nn::batch_norm_eval(x, gamma, beta, mean, var, &cache);
                Tensor m = mean, v = var;  // keep the running statistics fixed between calls
                return nn::batch_norm_train(x, gamma, beta, m, v, &cache);
            },
            [&](const Tensor& r) { add_to_grad(x, nn::batch_norm_backward(cache, gamma, r, gamma.grad(), beta.grad())); },
            {{"x", &x}, {"gamma", &gamma}, {"beta", &beta}});
    }
}

void pointwise_checks(Suite& s) {
    {
        Tensor x = randn({2, 3, 4, 4}, s.rng);
        Tensor y;
        s.check(
            "relu", [&] { return y = nn::relu(x); }, [&](const Tensor& r) { add_to_grad(x, nn::relu_backward(y, r)); },
            {{"x", &x}});
    }
    {
        Tensor x = randn({2, 3, 4, 4}, s.rng, 2.0);
        Tensor y;
        s.check(
            "sigmoid", [&] { return y = nn::sigmoid(x); },
            [&](const Tensor& r) { add_to_grad(x, nn::sigmoid_backward(y, r)); }, {{"x", &x}});
    }
    {
        Tensor x = randn({2, 2, 3, 5}, s.rng);
        s.check(
            "upsample nearest", [&] { return nn::upsample2x_nearest(x); },
            [&](const Tensor& r) { add_to_grad(x, nn::upsample2x_nearest_backward(r)); }, {{"x", &x}});
    }
    {
        Tensor x = randn({2, 2, 4, 3}, s.rng);
        s.check(
            "upsample bilinear", [&] { return nn::upsample2x_bilinear(x); },
            [&](const Tensor& r) { add_to_grad(x, nn::upsample2x_bilinear_backward(r)); }, {{"x", &x}});
    }
    {
        Tensor x = randn({3, 7}, s.rng);
        Tensor w = randn({5, 7}, s.rng, 0.5);
        Tensor b = randn({5}, s.rng);
        s.check(
            "fully connected", [&] { return nn::fully_connected(x, w, b); },
            [&](const Tensor& r) { add_to_grad(x, nn::fully_connected_backward(x, w, r, w.grad(), b.grad())); },
            {{"x", &x}, {"weight", &w}, {"bias", &b}});
    }
    {
        Tensor a = randn({2, 3, 3, 4}, s.rng);
        Tensor b = randn({2, 2, 3, 4}, s.rng);
        s.check(
            "concat channels", [&] { return nn::concat_channels({&a, &b}); },
            [&](const Tensor& r) {
                auto parts = nn::concat_channels_backward(r, {3, 2});
                add_to_grad(a, parts[0]);
                add_to_grad(b, parts[1]);
            },
            {{"a", &a}, {"b", &b}});
    }
    {
        Tensor v = randn({2, 3}, s.rng);
        s.check(
            "broadcast spatial", [&] { return nn::broadcast_spatial(v, 4, 5); },
            [&](const Tensor& r) { add_to_grad(v, nn::broadcast_spatial_backward(r)); }, {{"v", &v}});
    }
    {
        Tensor x = randn({2, 3, 4, 5}, s.rng);
        s.check(
            "global average pool", [&] { return nn::global_avg_pool(x); },
            [&](const Tensor& r) { add_to_grad(x, nn::global_avg_pool_backward(r, 4, 5)); }, {{"x", &x}});
    }
    {
        Tensor lab = randn({2, 3, 3, 3}, s.rng, 40.0);
        s.check(
            "lab to unit", [&] { return lab_to_unit(lab); },
            [&](const Tensor& r) { add_to_grad(lab, lab_to_unit_backward(r)); }, {{"lab", &lab}});
    }
}

void loss_checks(Suite& s) {
    {
        Tensor p = randn({2, 3, 2, 2}, s.rng, 10.0);
        const Tensor t = randn({2, 3, 2, 2}, s.rng, 10.0);
        // Subtracting the unperturbed value keeps the float output precise.
        const double base = nn::mse_loss(p, t, nullptr);
        s.check(
            "mse loss", [&] { return scalar(nn::mse_loss(p, t, nullptr) - base); },
            [&](const Tensor& r) {
                Tensor g;
                nn::mse_loss(p, t, &g);
                for (float& v : g.data()) v *= r[0];
                add_to_grad(p, g);
            },
            {{"pred", &p}});
    }
    for (const float label : {0.0f, 1.0f}) {
        Tensor z = randn({4, 1}, s.rng, 3.0);
        const double base = nn::sigmoid_cross_entropy(z, label, nullptr);
        s.check(
            label == 0.0f ? "sigmoid cross entropy (fake)" : "sigmoid cross entropy (real)",
            [&] { return scalar(nn::sigmoid_cross_entropy(z, label, nullptr) - base); },
            [&](const Tensor& r) {
                Tensor g;
                nn::sigmoid_cross_entropy(z, label, &g);
                for (float& v : g.data()) v *= r[0];
                add_to_grad(z, g);
            },
            {{"logits", &z}});
    }
    {
        Tensor z = randn({3, 5}, s.rng, 2.0);
        const std::vector<int> labels{4, 0, 2};
        const double base = nn::softmax_cross_entropy(z, labels, nullptr);
        s.check(
            "softmax cross entropy", [&] { return scalar(nn::softmax_cross_entropy(z, labels, nullptr) - base); },
            [&](const Tensor& r) {
                Tensor g;
                nn::softmax_cross_entropy(z, labels, &g);
                for (float& v : g.data()) v *= r[0];
                add_to_grad(z, g);
            },
            {{"logits", &z}});
    }
}

void block_checks(Suite& s, nn::Mode mode) {
    {
        nn::ParamSet params;
        nn::InitRng init(5);
        const auto block = nn::ConvBlock::create(params, "block", 3, 4, 3, 1, 1, init);
        for (const char* n : {"block.bn.running_mean", "block.bn.gamma", "block.bn.beta"}) {
            for (float& v : params.at(n).data()) v = static_cast<float>(std::normal_distribution<double>(0, 0.5)(s.rng));
        }
        Tensor x = randn({3, 3, 5, 5}, s.rng);
        nn::ConvBlock::Cache cache;
        const Tensor mean0 = params.at("block.bn.running_mean"), var0 = params.at("block.bn.running_var");
        s.check(
            mode == nn::Mode::Eval ? "conv block (eval)" : "conv block (train)",
            [&] {
                params.at("block.bn.running_mean") = mean0;
                params.at("block.bn.running_var") = var0;
                return block.forward(x, mode, &cache);
            },
            [&](const Tensor& r) { add_to_grad(x, block.backward(cache, r)); },
            {{"x", &x}, {"weight", block.conv.weight}, {"gamma", block.bn.gamma}, {"beta", block.bn.beta}});
    }
}

// Running statistics drawn away from the (0, 1) initialization so eval-mode
// batch norm is not an identity.
void randomize_running_stats(nn::ParamSet& params, std::mt19937_64& rng) {
    for (auto& [name, entry] : params.entries()) {
        if (name.ends_with("running_mean")) {
            for (float& v : entry.tensor.data()) v = static_cast<float>(std::normal_distribution<double>(0, 0.2)(rng));
        } else if (name.ends_with("running_var")) {
            for (float& v : entry.tensor.data()) v = static_cast<float>(std::uniform_real_distribution<double>(0.5, 2)(rng));
        }
    }
}

// conv block -> strided conv block -> (nearest upsample | pool, FC, ReLU,
// broadcast) -> concat -> 1x1 conv -> sigmoid -> bilinear upsample, with an
// MSE term appended to the output.
void composed_check(Suite& s) {
    nn::ParamSet params;
    nn::InitRng init(9);
    const auto b1 = nn::ConvBlock::create(params, "b1", 2, 3, 3, 1, 1, init);
    const auto b2 = nn::ConvBlock::create(params, "b2", 3, 3, 4, 2, 1, init);
    const auto fc = nn::Linear::create(params, "fc", 3, 2, init);
    const auto out = nn::ConvBlock::create(params, "out", 5, 3, 1, 1, 0, init, false, false);
    randomize_running_stats(params, s.rng);
    Tensor x = randn({2, 2, 4, 4}, s.rng);
    const Tensor target = randn({2, 3, 8, 8}, s.rng, 0.2);
    nn::ConvBlock::Cache c1, c2, c3;
    Tensor h2, pooled, g, sig, up;
    auto run = [&] {
        const Tensor h1 = b1.forward(x, nn::Mode::Eval, &c1);
        h2 = b2.forward(h1, nn::Mode::Eval, &c2);
        const Tensor u = nn::upsample2x_nearest(h2);
        pooled = nn::global_avg_pool(h2);
        g = nn::relu(fc.forward(pooled));
        const Tensor gb = nn::broadcast_spatial(g, 4, 4);
        sig = nn::sigmoid(out.forward(nn::concat_channels({&u, &gb}), nn::Mode::Eval, &c3));
        up = nn::upsample2x_bilinear(sig);
    };
    run();
    const double base = nn::mse_loss(up, target, nullptr);
    s.check(
        "composed micro-model",
        [&] {
            run();
            std::vector<float> v(up.data().begin(), up.data().end());
            v.push_back(static_cast<float>(nn::mse_loss(up, target, nullptr) - base));
            const int n = static_cast<int>(v.size());
            return Tensor({n}, std::move(v));
        },
        [&](const Tensor& r) {
            Tensor gup;
            nn::mse_loss(up, target, &gup);
            const float r_mse = r[r.size() - 1];
            for (std::size_t i = 0; i < gup.size(); ++i) gup[i] = gup[i] * r_mse + r[i];
            const Tensor gc = out.backward(c3, nn::sigmoid_backward(sig, nn::upsample2x_bilinear_backward(gup)));
            const auto parts = nn::concat_channels_backward(gc, {3, 2});
            const Tensor gg = nn::relu_backward(g, nn::broadcast_spatial_backward(parts[1]));
            const Tensor gpool = fc.backward(pooled, gg);
            Tensor gh2 = nn::upsample2x_nearest_backward(parts[0]);
            const Tensor gpool_spatial = nn::global_avg_pool_backward(gpool, 2, 2);
            for (std::size_t i = 0; i < gh2.size(); ++i) gh2[i] += gpool_spatial[i];
            add_to_grad(x, b1.backward(c1, b2.backward(c2, gh2)));
        },
        {{"x", &x},
         {"b1.conv.weight", b1.conv.weight},
         {"b1.bn.gamma", b1.bn.gamma},
         {"b2.conv.weight", b2.conv.weight},
         {"b2.bn.beta", b2.bn.beta},
         {"fc.weight", fc.weight},
         {"out.conv.weight", out.conv.weight},
         {"out.conv.bias", out.conv.bias}});
}

void model_checks(Suite& s) {
    {
        ColorizationModel model(tiny_config(32, 32, 12));
        randomize_running_stats(model.params(), s.rng);
        Tensor x = randn({2, 3, 32, 32}, s.rng);
        Tensor f = randn({2, kFeatureBins}, s.rng, 0.2);
        ColorizationModel::Cache cache;
        const std::size_t lab_size = 2 * 3 * 32 * 32;
        s.check(
            "colorization model",
            [&] {
                const auto out = model.forward(x, f, nn::Mode::Eval, cache);
                std::vector<float> v(out.lab.data().begin(), out.lab.data().end());
                v.insert(v.end(), out.logits.data().begin(), out.logits.data().end());
                const int n = static_cast<int>(v.size());
                return Tensor({n}, std::move(v));
            },
            [&](const Tensor& r) {
                Tensor g_lab({2, 3, 32, 32}, std::vector<float>(r.data().begin(), r.data().begin() + lab_size));
                Tensor g_logits({2, 4}, std::vector<float>(r.data().begin() + lab_size, r.data().end()));
                const auto grads = model.backward(cache, g_lab, g_logits, true, true);
                add_to_grad(x, grads.x);
                add_to_grad(f, grads.feature);
            },
            {{"input", &x},
             {"feature", &f},
             {"low.0.conv.weight", &model.params().at("low.0.conv.weight")},
             {"global.fc1.weight", &model.params().at("global.fc1.weight")},
             {"color.fc.weight", &model.params().at("color.fc.weight")},
             {"classifier.weight", &model.params().at("classifier.weight")},
             {"fusion.bn.gamma", &model.params().at("fusion.bn.gamma")},
             {"decoder.out.conv.weight", &model.params().at("decoder.out.conv.weight")}});
    }
    {
        Discriminator disc(32, 12);
        randomize_running_stats(disc.params(), s.rng);
        Tensor x = randn({2, 3, 32, 32}, s.rng, 0.3);
        Discriminator::Cache cache;
        s.check(
            "discriminator", [&] { return disc.forward(x, nn::Mode::Eval, cache); },
            [&](const Tensor& r) { add_to_grad(x, disc.backward(cache, r, true)); },
            {{"input", &x},
             {"conv0", &disc.params().at("disc.0.conv.weight")},
             {"head", &disc.params().at("disc.head.weight")}});
    }
    {
        SRModel sr(8, 13);
        Tensor x = randn({1, 3, 8, 8}, s.rng, 0.3);
        SRModel::Cache cache;
        s.check(
            "super-resolution model", [&] { return sr.forward(x, cache); },
            [&](const Tensor& r) { sr.backward(cache, r); },
            {{"enc1", &sr.params().at("sr.enc1.conv.weight")},
             {"dec2", &sr.params().at("sr.dec2.conv.weight")},
             {"out", &sr.params().at("sr.out.conv.weight")}});
    }
}

}  // namespace

std::vector<NamedGradCheck> run_grad_checks() {
    Suite s;
    conv_checks(s);
    batch_norm_checks(s);
    pointwise_checks(s);
    loss_checks(s);
    block_checks(s, nn::Mode::Eval);
    composed_check(s);
    return s.results;
}

std::vector<NamedGradCheck> run_model_grad_checks() {
    Suite s;
    s.options.eps = 3e-1;
    block_checks(s, nn::Mode::Train);
    model_checks(s);
    return s.results;
}

std::filesystem::path temp_dir(const std::string& name) {
    static std::mt19937_64 rng{std::random_device{}()};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("mangacolor_" + name + "_" + std::to_string(rng() % 1000000000));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::uint64_t image_checksum(const RasterImage& img) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::uint8_t b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    if (img.encoding() == Encoding::LabF32) {
        for (float f : img.floats()) {
            const auto* p = reinterpret_cast<const std::uint8_t*>(&f);
            for (int i = 0; i < 4; ++i) mix(p[i]);
        }
    } else {
        for (std::uint8_t b : img.bytes()) mix(b);
    }
    return h;
}

}  // namespace testsupport
