#include "mangacolor/image.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mangacolor/error.hpp"

namespace mangacolor {

const char* encoding_name(Encoding enc) {
    switch (enc) {
        case Encoding::RGB8: return "RGB8";
        case Encoding::LabF32: return "LabF32";
        case Encoding::Mono1: return "Mono1";
    }
    return "?";
}

namespace {

void require_encoding(const RasterImage& img, Encoding want, const char* op) {
    if (img.encoding() != want) {
        throw EncodingMismatch(std::string(op) + ": expected " + encoding_name(want) + ", got " +
                               encoding_name(img.encoding()));
    }
}

void require_dims(int width, int height) {
    if (width < 0 || height < 0) throw InvalidArgument("negative image dimensions");
}

}  // namespace

RasterImage::RasterImage(int width, int height, Encoding enc)
    : width_(width), height_(height), encoding_(enc) {
    require_dims(width, height);
    const std::size_t n = pixel_count() * channels();
    if (enc == Encoding::LabF32) {
        f32_.assign(n, 0.0f);
    } else {
        u8_.assign(n, 0);
    }
}

RasterImage RasterImage::rgb(int width, int height, std::vector<std::uint8_t> samples) {
    RasterImage img(0, 0, Encoding::RGB8);
    require_dims(width, height);
    if (samples.size() != static_cast<std::size_t>(width) * height * 3) {
        throw ShapeError("RGB8 sample count does not match dimensions");
    }
    img.width_ = width;
    img.height_ = height;
    img.u8_ = std::move(samples);
    return img;
}

RasterImage RasterImage::mono(int width, int height, std::vector<std::uint8_t> samples) {
    RasterImage img(0, 0, Encoding::Mono1);
    require_dims(width, height);
    if (samples.size() != static_cast<std::size_t>(width) * height) {
        throw ShapeError("Mono1 sample count does not match dimensions");
    }
    if (std::any_of(samples.begin(), samples.end(), [](std::uint8_t v) { return v > 1; })) {
        throw InvalidArgument("Mono1 samples must be 0 or 1");
    }
    img.width_ = width;
    img.height_ = height;
    img.u8_ = std::move(samples);
    return img;
}

RasterImage RasterImage::lab(int width, int height, std::vector<float> samples) {
    RasterImage img(0, 0, Encoding::LabF32);
    require_dims(width, height);
    if (samples.size() != static_cast<std::size_t>(width) * height * 3) {
        throw ShapeError("LabF32 sample count does not match dimensions");
    }
    img.width_ = width;
    img.height_ = height;
    img.f32_ = std::move(samples);
    return img;
}

RasterImage RasterImage::filled_rgb(int width, int height, std::array<std::uint8_t, 3> color) {
    RasterImage img(width, height, Encoding::RGB8);
    auto px = img.bytes();
    for (std::size_t i = 0; i < px.size(); i += 3) {
        px[i] = color[0];
        px[i + 1] = color[1];
        px[i + 2] = color[2];
    }
    return img;
}

std::span<std::uint8_t> RasterImage::bytes() {
    if (encoding_ == Encoding::LabF32) throw EncodingMismatch("LabF32 image has no byte samples");
    return u8_;
}

std::span<const std::uint8_t> RasterImage::bytes() const {
    if (encoding_ == Encoding::LabF32) throw EncodingMismatch("LabF32 image has no byte samples");
    return u8_;
}

std::span<float> RasterImage::floats() {
    if (encoding_ != Encoding::LabF32) throw EncodingMismatch("only LabF32 images hold floats");
    return f32_;
}

std::span<const float> RasterImage::floats() const {
    if (encoding_ != Encoding::LabF32) throw EncodingMismatch("only LabF32 images hold floats");
    return f32_;
}

// ---------------------------------------------------------------------------
// Color conversion

namespace {

// sRGB primaries, D65 white.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};
constexpr double kXyzToRgb[3][3] = {
    {3.2404542, -1.5371385, -0.4985314},
    {-0.9692660, 1.8760108, 0.0415560},
    {0.0556434, -0.2040259, 1.0572252},
};
constexpr double kWhiteX = 0.95047;
constexpr double kWhiteY = 1.00000;
constexpr double kWhiteZ = 1.08883;
constexpr double kDelta = 6.0 / 29.0;

double srgb_decode(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_encode(double v) {
    return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
    return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
    return t > kDelta ? t * t * t : 3 * kDelta * kDelta * (t - 4.0 / 29.0);
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Lookup of the sRGB decode for all 256 byte values.
const std::array<double, 256>& linear_table() {
    static const std::array<double, 256> table = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = srgb_decode(i / 255.0);
        return t;
    }();
    return table;
}

}  // namespace

Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const auto& lin = linear_table();
    const double rl = lin[r], gl = lin[g], bl = lin[b];
    const double x = kRgbToXyz[0][0] * rl + kRgbToXyz[0][1] * gl + kRgbToXyz[0][2] * bl;
    const double y = kRgbToXyz[1][0] * rl + kRgbToXyz[1][1] * gl + kRgbToXyz[1][2] * bl;
    const double z = kRgbToXyz[2][0] * rl + kRgbToXyz[2][1] * gl + kRgbToXyz[2][2] * bl;
    const double fx = lab_f(x / kWhiteX);
    const double fy = lab_f(y / kWhiteY);
    const double fz = lab_f(z / kWhiteZ);
    return {std::clamp(116.0 * fy - 16.0, 0.0, 100.0), 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<std::uint8_t, 3> lab_to_srgb(const Lab& lab) {
    const double fy = (lab.l + 16.0) / 116.0;
    const double fx = fy + lab.a / 500.0;
    const double fz = fy - lab.b / 200.0;
    const double x = kWhiteX * lab_f_inv(fx);
    const double y = kWhiteY * lab_f_inv(fy);
    const double z = kWhiteZ * lab_f_inv(fz);
    std::array<std::uint8_t, 3> out{};
    for (int c = 0; c < 3; ++c) {
        double lin = kXyzToRgb[c][0] * x + kXyzToRgb[c][1] * y + kXyzToRgb[c][2] * z;
        lin = std::clamp(lin, 0.0, 1.0);
        out[c] = to_byte(255.0 * srgb_encode(lin));
    }
    return out;
}

RasterImage rgb_to_lab(const RasterImage& img) {
    require_encoding(img, Encoding::RGB8, "rgb_to_lab");
    RasterImage out(img.width(), img.height(), Encoding::LabF32);
    auto src = img.bytes();
    auto dst = out.floats();
    for (std::size_t i = 0; i < src.size(); i += 3) {
        const Lab lab = srgb_to_lab(src[i], src[i + 1], src[i + 2]);
        dst[i] = static_cast<float>(lab.l);
        dst[i + 1] = static_cast<float>(lab.a);
        dst[i + 2] = static_cast<float>(lab.b);
    }
    return out;
}

RasterImage lab_to_rgb(const RasterImage& img) {
    require_encoding(img, Encoding::LabF32, "lab_to_rgb");
    RasterImage out(img.width(), img.height(), Encoding::RGB8);
    auto src = img.floats();
    auto dst = out.bytes();
    for (std::size_t i = 0; i < src.size(); i += 3) {
        const auto rgb = lab_to_srgb({src[i], src[i + 1], src[i + 2]});
        dst[i] = rgb[0];
        dst[i + 1] = rgb[1];
        dst[i + 2] = rgb[2];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binarization

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

std::array<std::uint64_t, 256> luma_histogram(const RasterImage& rgb) {
    require_encoding(rgb, Encoding::RGB8, "luma_histogram");
    std::array<std::uint64_t, 256> hist{};
    auto px = rgb.bytes();
    for (std::size_t i = 0; i < px.size(); i += 3) ++hist[luma(px[i], px[i + 1], px[i + 2])];
    return hist;
}

int otsu_threshold(std::span<const std::uint64_t> counts) {
    if (counts.size() != 256) throw InvalidArgument("otsu_threshold expects 256 bins");
    std::uint64_t total = 0;
    std::uint64_t total_sum = 0;
    for (int v = 0; v < 256; ++v) {
        total += counts[v];
        total_sum += counts[v] * static_cast<std::uint64_t>(v);
    }
    if (total == 0) throw InvalidArgument("otsu_threshold: empty histogram");

    int best_t = -1;
    double best_var = -1.0;
    std::uint64_t n0 = 0;
    std::uint64_t sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        n0 += counts[t];
        sum0 += counts[t] * static_cast<std::uint64_t>(t);
        if (n0 == 0) continue;
        const std::uint64_t n1 = total - n0;
        double var = 0.0;
        if (n1 > 0) {
            const double w0 = static_cast<double>(n0) / static_cast<double>(total);
            const double w1 = static_cast<double>(n1) / static_cast<double>(total);
            const double mu0 = static_cast<double>(sum0) / static_cast<double>(n0);
            const double mu1 = static_cast<double>(total_sum - sum0) / static_cast<double>(n1);
            var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        }
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

RasterImage binarize(const RasterImage& rgb) {
    require_encoding(rgb, Encoding::RGB8, "binarize");
    const auto hist = luma_histogram(rgb);
    RasterImage out(rgb.width(), rgb.height(), Encoding::Mono1);
    if (rgb.empty()) return out;

    int occupied = 0;
    int only_value = 0;
    for (int v = 0; v < 256; ++v) {
        if (hist[v] != 0) {
            ++occupied;
            only_value = v;
        }
    }
    auto src = rgb.bytes();
    auto dst = out.bytes();
    if (occupied == 1) {
        std::fill(dst.begin(), dst.end(), only_value >= 128 ? 1 : 0);
        return out;
    }
    const int t = otsu_threshold(hist);
    for (std::size_t p = 0; p < dst.size(); ++p) {
        dst[p] = luma(src[3 * p], src[3 * p + 1], src[3 * p + 2]) > t ? 1 : 0;
    }
    return out;
}

RasterImage mono_to_rgb(const RasterImage& mono) {
    require_encoding(mono, Encoding::Mono1, "mono_to_rgb");
    RasterImage out(mono.width(), mono.height(), Encoding::RGB8);
    auto src = mono.bytes();
    auto dst = out.bytes();
    for (std::size_t p = 0; p < src.size(); ++p) {
        const std::uint8_t v = src[p] ? 255 : 0;
        dst[3 * p] = dst[3 * p + 1] = dst[3 * p + 2] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct Tap {
    int index;
    double weight;
};

// For every output coordinate, the source taps and weights along one axis.
std::vector<std::vector<Tap>> axis_taps(int in, int out, ResizeMethod method) {
    std::vector<std::vector<Tap>> taps(out);
    const double scale = static_cast<double>(in) / out;
    auto clampi = [in](long i) { return static_cast<int>(std::clamp(i, 0L, static_cast<long>(in) - 1)); };
    for (int d = 0; d < out; ++d) {
        auto& t = taps[d];
        switch (method) {
            case ResizeMethod::Nearest: {
                const long s = (2L * d + 1) * in / (2L * out);
                t.push_back({clampi(s), 1.0});
                break;
            }
            case ResizeMethod::Bilinear: {
                const double src = (d + 0.5) * scale - 0.5;
                const double fl = std::floor(src);
                const double f = src - fl;
                const long i0 = static_cast<long>(fl);
                t.push_back({clampi(i0), 1.0 - f});
                t.push_back({clampi(i0 + 1), f});
                break;
            }
            case ResizeMethod::Bicubic: {
                constexpr double a = -0.5;
                auto kernel = [](double x) {
                    x = std::abs(x);
                    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
                    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
                    return 0.0;
                };
                const double src = (d + 0.5) * scale - 0.5;
                const double fl = std::floor(src);
                const double f = src - fl;
                const long i0 = static_cast<long>(fl);
                double sum = 0.0;
                for (int k = -1; k <= 2; ++k) {
                    const double w = kernel(f - k);
                    t.push_back({clampi(i0 + k), w});
                    sum += w;
                }
                for (auto& tap : t) tap.weight /= sum;
                break;
            }
        }
    }
    return taps;
}

}  // namespace

RasterImage resize(const RasterImage& img, int width, int height, ResizeMethod method) {
    if (width < 1 || height < 1) throw InvalidArgument("resize: target dimensions must be >= 1");
    if (img.empty()) throw InvalidArgument("resize: empty source image");
    if (width == img.width() && height == img.height()) return img;

    const int c = img.channels();
    const int in_w = img.width();
    const int in_h = img.height();
    std::vector<double> src(img.pixel_count() * c);
    if (img.encoding() == Encoding::LabF32) {
        auto f = img.floats();
        std::copy(f.begin(), f.end(), src.begin());
    } else {
        auto b = img.bytes();
        std::copy(b.begin(), b.end(), src.begin());
    }

    const auto xt = axis_taps(in_w, width, method);
    const auto yt = axis_taps(in_h, height, method);

    std::vector<double> horiz(static_cast<std::size_t>(width) * in_h * c, 0.0);
    for (int y = 0; y < in_h; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (const auto& tap : xt[x]) {
                    acc += tap.weight * src[(static_cast<std::size_t>(y) * in_w + tap.index) * c + ch];
                }
                horiz[(static_cast<std::size_t>(y) * width + x) * c + ch] = acc;
            }
        }
    }

    RasterImage out(width, height, img.encoding());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (const auto& tap : yt[y]) {
                    acc += tap.weight * horiz[(static_cast<std::size_t>(tap.index) * width + x) * c + ch];
                }
                const std::size_t o = out.offset(x, y) + ch;
                switch (img.encoding()) {
                    case Encoding::LabF32: out.floats()[o] = static_cast<float>(acc); break;
                    case Encoding::RGB8: out.bytes()[o] = to_byte(acc); break;
                    case Encoding::Mono1: out.bytes()[o] = acc >= 0.5 ? 1 : 0; break;
                }
            }
        }
    }
    return out;
}

RasterImage crop(const RasterImage& img, int x, int y, int width, int height) {
    if (x < 0 || y < 0 || width < 0 || height < 0 || x + width > img.width() ||
        y + height > img.height()) {
        throw InvalidArgument("crop rectangle outside image bounds");
    }
    RasterImage out(width, height, img.encoding());
    const std::size_t row = static_cast<std::size_t>(width) * img.channels();
    for (int r = 0; r < height; ++r) {
        if (img.encoding() == Encoding::LabF32) {
            auto s = img.floats().subspan(img.offset(x, y + r), row);
            std::copy(s.begin(), s.end(), out.floats().begin() + out.offset(0, r));
        } else {
            auto s = img.bytes().subspan(img.offset(x, y + r), row);
            std::copy(s.begin(), s.end(), out.bytes().begin() + out.offset(0, r));
        }
    }
    return out;
}

void paste(RasterImage& canvas, const RasterImage& src, int x, int y) {
    if (canvas.encoding() != src.encoding()) throw EncodingMismatch("paste: encodings differ");
    if (x < 0 || y < 0 || x + src.width() > canvas.width() || y + src.height() > canvas.height()) {
        throw InvalidArgument("paste: source does not fit in canvas");
    }
    const std::size_t row = static_cast<std::size_t>(src.width()) * src.channels();
    for (int r = 0; r < src.height(); ++r) {
        if (src.encoding() == Encoding::LabF32) {
            auto s = src.floats().subspan(src.offset(0, r), row);
            std::copy(s.begin(), s.end(), canvas.floats().begin() + canvas.offset(x, y + r));
        } else {
            auto s = src.bytes().subspan(src.offset(0, r), row);
            std::copy(s.begin(), s.end(), canvas.bytes().begin() + canvas.offset(x, y + r));
        }
    }
}

RasterImage flip_horizontal(const RasterImage& img) {
    RasterImage out(img.width(), img.height(), img.encoding());
    const int c = img.channels();
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const std::size_t s = img.offset(img.width() - 1 - x, y);
            const std::size_t d = out.offset(x, y);
            for (int ch = 0; ch < c; ++ch) {
                if (img.encoding() == Encoding::LabF32) {
                    out.floats()[d + ch] = img.floats()[s + ch];
                } else {
                    out.bytes()[d + ch] = img.bytes()[s + ch];
                }
            }
        }
    }
    return out;
}

RasterImage random_crop_flip(const RasterImage& img, int crop_size, double flip_prob,
                             std::uint64_t seed) {
    if (crop_size < 1) throw InvalidArgument("random_crop_flip: crop size must be >= 1");
    if (img.width() < crop_size || img.height() < crop_size) {
        throw InvalidArgument("random_crop_flip: image smaller than crop");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ox(0, img.width() - crop_size);
    std::uniform_int_distribution<int> oy(0, img.height() - crop_size);
    const int x = ox(rng);
    const int y = oy(rng);
    const bool flip = std::bernoulli_distribution(flip_prob)(rng);
    RasterImage out = crop(img, x, y, crop_size, crop_size);
    return flip ? flip_horizontal(out) : out;
}

}  // namespace mangacolor
