#pragma once

#include <vector>

#include "mangacolor/image.hpp"

namespace mangacolor {

struct PanelRect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const PanelRect&) const = default;
};

/// Panels in reading order: top-to-bottom, right-to-left within a row band.
struct PageLayout {
    int page_w = 0;
    int page_h = 0;
    std::vector<PanelRect> panels;

    bool operator==(const PageLayout&) const = default;
};

double intersection_over_union(const PanelRect& a, const PanelRect& b);

/// Throws InvalidArgument if a panel is empty or leaves the page.
void validate_layout(const PageLayout& layout);

PageLayout scale_layout(const PageLayout& layout, int factor);

struct SegmentParams {
    double gutter_white_ratio = 0.98;  // a gutter row/column is at least this white
    int min_gutter = 4;                // px
    double min_region_fraction = 0.05; // of the page dimension
};

/// Recursive X-Y cut on gutter bands.
///
/// A region is first trimmed to its ink bounding box. Runs of at least
/// `min_gutter` rows (then columns) that are each `gutter_white_ratio` white
/// and that no ink line crosses end to end split the region; the pieces are
/// segmented again. Horizontal gutters are tried before vertical ones. Leaves
/// smaller than `min_region_fraction` of the page in either dimension are
/// dropped. A page with no surviving leaf is one full-page panel.
PageLayout segment_page(const RasterImage& mono, const SegmentParams& params = {});

std::vector<RasterImage> crop_panels(const RasterImage& page, const PageLayout& layout);

/// min(R,G,B) >= white_min -> white; max(R,G,B) <= black_max -> black.
RasterImage snap_extremes(const RasterImage& rgb, int white_min = 230, int black_max = 25);

/// Resizes each colorized panel into its rect on a white canvas the size of
/// `original`, then paints every ink pixel of `original` black.
RasterImage restore_layout(const RasterImage& original, const PageLayout& layout,
                           const std::vector<RasterImage>& colorized);

}  // namespace mangacolor
