#include "mangacolor/panels.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "mangacolor/error.hpp"

namespace mangacolor {

double intersection_over_union(const PanelRect& a, const PanelRect& b) {
    const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = static_cast<double>(ix) * iy;
    const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
    return uni > 0 ? inter / uni : 0.0;
}

void validate_layout(const PageLayout& layout) {
    for (std::size_t i = 0; i < layout.panels.size(); ++i) {
        const auto& r = layout.panels[i];
        if (r.w < 1 || r.h < 1 || r.x < 0 || r.y < 0 || r.x + r.w > layout.page_w ||
            r.y + r.h > layout.page_h) {
            throw InvalidArgument("panel " + std::to_string(i) + " is empty or outside the page");
        }
    }
}

PageLayout scale_layout(const PageLayout& layout, int factor) {
    PageLayout out{layout.page_w * factor, layout.page_h * factor, {}};
    for (const auto& r : layout.panels) {
        out.panels.push_back({r.x * factor, r.y * factor, r.w * factor, r.h * factor});
    }
    return out;
}

namespace {

// Half-open pixel box.
struct Box {
    int x0, y0, x1, y1;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};

class XyCutter {
public:
    XyCutter(const RasterImage& mono, const SegmentParams& params)
        : mono_(mono), px_(mono.bytes()), params_(params) {
        min_w_ = params.min_region_fraction * mono.width();
        min_h_ = params.min_region_fraction * mono.height();
    }

    void run(Box box) { cut(box); }
    std::vector<PanelRect> panels;

private:
    bool ink(int x, int y) const { return px_[static_cast<std::size_t>(y) * mono_.width() + x] == 0; }

    std::optional<Box> trim(const Box& b) const {
        int x0 = b.x1, y0 = b.y1, x1 = b.x0 - 1, y1 = b.y0 - 1;
        for (int y = b.y0; y < b.y1; ++y) {
            for (int x = b.x0; x < b.x1; ++x) {
                if (ink(x, y)) {
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                }
            }
        }
        if (x1 < x0) return std::nullopt;
        return Box{x0, y0, x1 + 1, y1 + 1};
    }

    // Interior gutter runs along one axis as [start, end) line indices.
    // `rows` selects horizontal gutters (runs of rows).
    std::vector<std::pair<int, int>> gutters(const Box& b, bool rows) const {
        const int lines_begin = rows ? b.y0 : b.x0;
        const int lines_end = rows ? b.y1 : b.x1;
        const int across_begin = rows ? b.x0 : b.y0;
        const int across_end = rows ? b.x1 : b.y1;
        const int span = across_end - across_begin;
        auto at = [&](int line, int pos) { return rows ? ink(pos, line) : ink(line, pos); };

        std::vector<char> white(lines_end - lines_begin, 0);
        for (int l = lines_begin; l < lines_end; ++l) {
            int inked = 0;
            for (int p = across_begin; p < across_end; ++p) inked += at(l, p) ? 1 : 0;
            white[l - lines_begin] = (span - inked) >= params_.gutter_white_ratio * span;
        }

        std::vector<std::pair<int, int>> runs;
        int l = lines_begin;
        while (l < lines_end) {
            if (!white[l - lines_begin]) {
                ++l;
                continue;
            }
            const int start = l;
            while (l < lines_end && white[l - lines_begin]) ++l;
            const int end = l;
            if (start == lines_begin || end == lines_end) continue;
            if (end - start < params_.min_gutter) continue;
            // A frame edge or any other stroke running through the whole band
            // means the band is inside a panel.
            bool crossed = false;
            for (int p = across_begin; p < across_end && !crossed; ++p) {
                bool solid = true;
                for (int q = start; q < end && solid; ++q) solid = at(q, p);
                crossed = solid;
            }
            if (!crossed) runs.emplace_back(start, end);
        }
        return runs;
    }

    bool too_small(const Box& b) const { return b.width() < min_w_ || b.height() < min_h_; }

    void cut(Box box) {
        const auto trimmed = trim(box);
        if (!trimmed || too_small(*trimmed)) return;
        const Box b = *trimmed;

        for (const bool rows : {true, false}) {
            const auto runs = gutters(b, rows);
            if (runs.empty()) continue;
            std::vector<Box> pieces;
            int start = rows ? b.y0 : b.x0;
            for (const auto& [gs, ge] : runs) {
                pieces.push_back(rows ? Box{b.x0, start, b.x1, gs} : Box{start, b.y0, gs, b.y1});
                start = ge;
            }
            pieces.push_back(rows ? Box{b.x0, start, b.x1, b.y1} : Box{start, b.y0, b.x1, b.y1});
            if (!rows) std::reverse(pieces.begin(), pieces.end());  // right-to-left
            for (const auto& p : pieces) cut(p);
            return;
        }
        panels.push_back({b.x0, b.y0, b.width(), b.height()});
    }

    const RasterImage& mono_;
    std::span<const std::uint8_t> px_;
    SegmentParams params_;
    double min_w_ = 0;
    double min_h_ = 0;
};

}  // namespace

PageLayout segment_page(const RasterImage& mono, const SegmentParams& params) {
    if (mono.encoding() != Encoding::Mono1) throw EncodingMismatch("segment_page expects Mono1");
    if (mono.empty()) throw InvalidArgument("segment_page: empty page");
    XyCutter cutter(mono, params);
    cutter.run({0, 0, mono.width(), mono.height()});
    PageLayout layout{mono.width(), mono.height(), std::move(cutter.panels)};
    if (layout.panels.empty()) layout.panels.push_back({0, 0, mono.width(), mono.height()});
    return layout;
}

std::vector<RasterImage> crop_panels(const RasterImage& page, const PageLayout& layout) {
    if (layout.page_w != page.width() || layout.page_h != page.height()) {
        throw InvalidArgument("layout does not match page dimensions");
    }
    validate_layout(layout);
    std::vector<RasterImage> out;
    out.reserve(layout.panels.size());
    for (const auto& r : layout.panels) out.push_back(crop(page, r.x, r.y, r.w, r.h));
    return out;
}

RasterImage snap_extremes(const RasterImage& rgb, int white_min, int black_max) {
    if (rgb.encoding() != Encoding::RGB8) throw EncodingMismatch("snap_extremes expects RGB8");
    RasterImage out = rgb;
    auto px = out.bytes();
    for (std::size_t i = 0; i < px.size(); i += 3) {
        const int lo = std::min({px[i], px[i + 1], px[i + 2]});
        const int hi = std::max({px[i], px[i + 1], px[i + 2]});
        if (lo >= white_min) {
            px[i] = px[i + 1] = px[i + 2] = 255;
        } else if (hi <= black_max) {
            px[i] = px[i + 1] = px[i + 2] = 0;
        }
    }
    return out;
}

RasterImage restore_layout(const RasterImage& original, const PageLayout& layout,
                           const std::vector<RasterImage>& colorized) {
    if (original.encoding() != Encoding::Mono1) throw EncodingMismatch("restore_layout expects a Mono1 original");
    if (colorized.size() != layout.panels.size()) {
        throw InvalidArgument("restore_layout: " + std::to_string(colorized.size()) +
                              " colorized panels for " + std::to_string(layout.panels.size()) +
                              " layout panels");
    }
    if (layout.page_w != original.width() || layout.page_h != original.height()) {
        throw InvalidArgument("layout does not match page dimensions");
    }
    validate_layout(layout);

    RasterImage page = RasterImage::filled_rgb(original.width(), original.height(), {255, 255, 255});
    for (std::size_t i = 0; i < colorized.size(); ++i) {
        const auto& r = layout.panels[i];
        if (colorized[i].encoding() != Encoding::RGB8) {
            throw EncodingMismatch("colorized panel " + std::to_string(i) + " is not RGB8");
        }
        paste(page, resize(colorized[i], r.w, r.h, ResizeMethod::Bilinear), r.x, r.y);
    }
    auto mask = original.bytes();
    auto px = page.bytes();
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (mask[p] == 0) px[3 * p] = px[3 * p + 1] = px[3 * p + 2] = 0;
    }
    return page;
}

}  // namespace mangacolor
