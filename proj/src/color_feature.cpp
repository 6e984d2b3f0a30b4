#include "mangacolor/color_feature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mangacolor/error.hpp"

namespace mangacolor {

const char* feature_mode_name(FeatureMode mode) {
    return mode == FeatureMode::Histogram ? "histogram" : "palette";
}

namespace {

void require_histogram(const ColorFeature& f, const char* op) {
    if (f.mode() != FeatureMode::Histogram) {
        throw InvalidArgument(std::string(op) + " requires a histogram feature");
    }
}

int argmax_bin(const ColorFeature::Bins& bins) {
    // max_element returns the first maximum, which is the lowest index.
    return static_cast<int>(std::max_element(bins.begin(), bins.end()) - bins.begin());
}

}  // namespace

ColorFeature ColorFeature::histogram(const Bins& bins) {
    double sum = 0.0;
    for (double v : bins) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw InvalidArgument("histogram bins must be finite and non-negative");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw InvalidArgument("histogram bins must sum to 1 (got " + std::to_string(sum) + ")");
    }
    return {bins, FeatureMode::Histogram};
}

ColorFeature ColorFeature::palette(const Bins& bins) {
    bool any = false;
    for (double v : bins) {
        if (v != 0.0 && v != 1.0) throw InvalidArgument("palette bins must be 0 or 1");
        any = any || v == 1.0;
    }
    if (!any) throw InvalidArgument("palette must have at least one bit set");
    return {bins, FeatureMode::Palette};
}

ColorFeature ColorFeature::from_vector(std::span<const double> values, FeatureMode mode) {
    if (values.size() != kFeatureBins) {
        throw InvalidArgument("color feature needs exactly 216 values, got " +
                              std::to_string(values.size()));
    }
    Bins bins{};
    std::copy(values.begin(), values.end(), bins.begin());
    return mode == FeatureMode::Histogram ? histogram(bins) : palette(bins);
}

ColorFeature extract_histogram(const RasterImage& rgb) {
    if (rgb.encoding() != Encoding::RGB8) throw EncodingMismatch("extract_histogram expects RGB8");
    if (rgb.empty()) throw InvalidArgument("extract_histogram: image has no pixels");
    std::array<std::uint64_t, kFeatureBins> counts{};
    auto px = rgb.bytes();
    for (std::size_t i = 0; i < px.size(); i += 3) ++counts[color_bin(px[i], px[i + 1], px[i + 2])];
    ColorFeature::Bins bins{};
    const double n = static_cast<double>(rgb.pixel_count());
    for (int i = 0; i < kFeatureBins; ++i) bins[i] = static_cast<double>(counts[i]) / n;
    return ColorFeature::histogram(bins);
}

ColorFeature binarize_palette(const ColorFeature& hist, double tau) {
    require_histogram(hist, "binarize_palette");
    ColorFeature::Bins bits{};
    bool any = false;
    for (int i = 0; i < kFeatureBins; ++i) {
        if (hist[i] >= tau) {
            bits[i] = 1.0;
            any = true;
        }
    }
    if (!any) bits[argmax_bin(hist.bins())] = 1.0;
    return ColorFeature::palette(bits);
}

ColorFeature adjust_dominant_bin(const ColorFeature& hist, double scale) {
    require_histogram(hist, "adjust_dominant_bin");
    if (!(scale >= 0.0) || !std::isfinite(scale)) {
        throw InvalidArgument("dominant-bin scale must be a finite value >= 0");
    }
    if (scale == 1.0) return hist;
    ColorFeature::Bins bins = hist.bins();
    const int m = argmax_bin(bins);
    bins[m] *= scale;
    const double total = std::accumulate(bins.begin(), bins.end(), 0.0);
    if (total <= 0.0) {
        throw InvalidArgument("dominant-bin adjustment removed all histogram mass");
    }
    for (double& v : bins) v /= total;
    return ColorFeature::histogram(bins);
}

ColorFeature blend_histograms(const ColorFeature& h1, const ColorFeature& h2, double ratio) {
    require_histogram(h1, "blend_histograms");
    require_histogram(h2, "blend_histograms");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidArgument("blend ratio must be in [0, 1]");
    ColorFeature::Bins bins{};
    for (int i = 0; i < kFeatureBins; ++i) bins[i] = ratio * h1[i] + (1.0 - ratio) * h2[i];
    return ColorFeature::histogram(bins);
}

std::array<double, kFeatureBins> feature_to_vector(const ColorFeature& feature) {
    return feature.bins();
}

}  // namespace mangacolor
