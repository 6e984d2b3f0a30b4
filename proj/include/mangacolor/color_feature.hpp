#pragma once

#include <array>
#include <span>

#include "mangacolor/image.hpp"

namespace mangacolor {

inline constexpr int kLevelsPerChannel = 6;
inline constexpr int kFeatureBins = kLevelsPerChannel * kLevelsPerChannel * kLevelsPerChannel;
inline constexpr double kDefaultPaletteTau = 0.005;

enum class FeatureMode { Histogram, Palette };

const char* feature_mode_name(FeatureMode mode);

/// The 216-bin conditioning signal: a normalized color histogram or its
/// binary palette. Construction validates the mode's invariants.
class ColorFeature {
public:
    using Bins = std::array<double, kFeatureBins>;

    /// Bins must be non-negative and sum to 1 within 1e-6.
    static ColorFeature histogram(const Bins& bins);
    /// Bins must be 0 or 1 with at least one bit set.
    static ColorFeature palette(const Bins& bins);
    static ColorFeature from_vector(std::span<const double> values, FeatureMode mode);

    FeatureMode mode() const { return mode_; }
    const Bins& bins() const { return bins_; }
    double operator[](int i) const { return bins_[i]; }

    bool operator==(const ColorFeature&) const = default;

private:
    ColorFeature(const Bins& bins, FeatureMode mode) : bins_(bins), mode_(mode) {}

    Bins bins_{};
    FeatureMode mode_ = FeatureMode::Histogram;
};

/// Flat bin of an RGB triple: i_c = min(5, c*6/256), index = 36 i_r + 6 i_g + i_b.
constexpr int color_bin(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto level = [](int c) { return c * kLevelsPerChannel / 256 < 5 ? c * kLevelsPerChannel / 256 : 5; };
    return level(r) * 36 + level(g) * 6 + level(b);
}

ColorFeature extract_histogram(const RasterImage& rgb);

/// Bit i is set iff h_i >= tau; an all-zero result falls back to the argmax bin.
ColorFeature binarize_palette(const ColorFeature& hist, double tau = kDefaultPaletteTau);

/// Scales the most frequent bin (lowest index on ties) and renormalizes.
ColorFeature adjust_dominant_bin(const ColorFeature& hist, double scale);

/// ratio * h1 + (1 - ratio) * h2.
ColorFeature blend_histograms(const ColorFeature& h1, const ColorFeature& h2, double ratio);

std::array<double, kFeatureBins> feature_to_vector(const ColorFeature& feature);

}  // namespace mangacolor
