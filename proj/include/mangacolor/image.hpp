#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace mangacolor {

enum class Encoding { RGB8, LabF32, Mono1 };

constexpr int channel_count(Encoding enc) { return enc == Encoding::Mono1 ? 1 : 3; }
const char* encoding_name(Encoding enc);

/// Row-major, channel-interleaved pixel raster.
///
/// RGB8 and Mono1 samples live in a byte buffer, LabF32 samples in a float
/// buffer; the accessor for the other buffer throws EncodingMismatch.
/// Mono1 samples are 0 (ink) or 1 (paper).
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, Encoding enc);

    static RasterImage rgb(int width, int height, std::vector<std::uint8_t> samples);
    static RasterImage mono(int width, int height, std::vector<std::uint8_t> samples);
    static RasterImage lab(int width, int height, std::vector<float> samples);
    static RasterImage filled_rgb(int width, int height, std::array<std::uint8_t, 3> color);

    int width() const { return width_; }
    int height() const { return height_; }
    Encoding encoding() const { return encoding_; }
    int channels() const { return channel_count(encoding_); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return pixel_count() == 0; }

    std::span<std::uint8_t> bytes();
    std::span<const std::uint8_t> bytes() const;
    std::span<float> floats();
    std::span<const float> floats() const;

    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels();
    }

    bool operator==(const RasterImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    Encoding encoding_ = Encoding::RGB8;
    std::vector<std::uint8_t> u8_;
    std::vector<float> f32_;
};

struct Lab {
    double l = 0, a = 0, b = 0;
};

/// CIE L*a*b* (D65 white, sRGB companding) of one 8-bit sRGB pixel.
Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);
/// Inverse of srgb_to_lab; out-of-gamut results are clamped per channel.
std::array<std::uint8_t, 3> lab_to_srgb(const Lab& lab);

RasterImage rgb_to_lab(const RasterImage& img);
RasterImage lab_to_rgb(const RasterImage& img);

/// Rec.601 luma rounded to the nearest integer.
std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);
std::array<std::uint64_t, 256> luma_histogram(const RasterImage& rgb);

/// Otsu threshold over a 256-bin histogram. Class 0 is values <= t, only
/// thresholds with a non-empty class 0 are candidates, ties go to the lowest t.
int otsu_threshold(std::span<const std::uint64_t> counts);

/// Luma > Otsu threshold maps to 1 (paper), everything else to 0 (ink).
/// A constant image has no threshold to speak of; it becomes paper when its
/// luma is at least 128 and ink otherwise.
RasterImage binarize(const RasterImage& rgb);

/// Mono1 -> RGB8 with 0 -> black and 1 -> white.
RasterImage mono_to_rgb(const RasterImage& mono);

enum class ResizeMethod { Nearest, Bilinear, Bicubic };

/// Separable resampling with half-pixel centers and clamped borders.
/// Mono1 is resampled as float and re-thresholded at 0.5.
RasterImage resize(const RasterImage& img, int width, int height, ResizeMethod method);

RasterImage crop(const RasterImage& img, int x, int y, int width, int height);
/// Copies `src` into `canvas` with its top-left at (x, y); encodings must match.
void paste(RasterImage& canvas, const RasterImage& src, int x, int y);
RasterImage flip_horizontal(const RasterImage& img);

/// Square crop at a uniformly drawn offset, then a horizontal flip with
/// probability `flip_prob`. Deterministic in `seed`.
RasterImage random_crop_flip(const RasterImage& img, int crop_size, double flip_prob,
                             std::uint64_t seed);

}  // namespace mangacolor
