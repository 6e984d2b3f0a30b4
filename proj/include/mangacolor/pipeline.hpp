#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "mangacolor/colornet.hpp"
#include "mangacolor/panels.hpp"

namespace mangacolor {

struct BlendOption {
    ColorFeature feature = ColorFeature::palette({1.0});  // second histogram
    double ratio = 1.0;    // weight of the request's own feature
};

struct ColorizeOptions {
    std::optional<double> dominant_scale;
    std::optional<BlendOption> blend;
};

struct ColorizeRequest {
    RasterImage panel;  // RGB8, any size
    ColorFeature feature = ColorFeature::palette({1.0});
    std::vector<DotAnnotation> dots;  // panel pixel coordinates
    ColorizeOptions options;
};

/// Placement of a w x h image inside a size x size square: uniform scale,
/// centered, the rest padded.
struct Letterbox {
    double scale = 1.0;
    int x = 0, y = 0, w = 0, h = 0;  // content region inside the square
};

Letterbox letterbox_geometry(int width, int height, int size);
/// Bilinear resize into the content region of a white size x size canvas.
RasterImage letterbox(const RasterImage& rgb, int size, Letterbox* geometry = nullptr);
/// Panel pixel -> letterboxed pixel, rounded to the nearest and kept inside
/// the content region.
DotAnnotation letterbox_dot(const DotAnnotation& dot, const Letterbox& geometry);

/// Dominant-bin adjustment first, then blending. A scale of exactly 1 is a
/// no-op in either feature mode; any other adjustment needs a histogram.
ColorFeature apply_feature_options(const ColorFeature& feature, const ColorizeOptions& options);

/// Letterbox to the model input, binarize, rasterize dots, transform the
/// feature, run the model in eval mode, convert to RGB and undo the letterbox.
RasterImage colorize_panel(const ColorizeRequest& request, const ColorizationModel& model);

/// Exact 2x of a square RGB8 image whose side the model accepts.
RasterImage super_resolve(const SRModel& model, const RasterImage& rgb);
/// Native-resolution 2x of any RGB8 image: pads right and bottom with white
/// to a multiple of 4, super-resolves and crops to 2w x 2h.
RasterImage super_resolve_image(const SRModel& model, const RasterImage& rgb);
/// Letterboxes a panel to `size`, super-resolves it and returns it at 2w x 2h.
RasterImage super_resolve_panel(const SRModel& model, const RasterImage& rgb, int size = 224);

struct PanelOverride {
    std::optional<ColorFeature> feature;
    std::vector<DotAnnotation> dots;
    ColorizeOptions options;
};

struct PageJob {
    RasterImage page;  // RGB8
    ColorFeature default_feature = ColorFeature::palette({1.0});
    std::map<int, PanelOverride> overrides;  // 0-based panel index
    std::filesystem::path model;
    std::filesystem::path sr_model;
    SegmentParams segment;
};

/// Job file: {"page", "model", "sr_model", "default_feature", "panels":
/// [{"index", "feature", "dots": [[x,y,a,b]...], "dominant_scale",
/// "blend": {"feature", "ratio"}}]}. Features are inline JSON documents or
/// paths to feature files; relative paths resolve against the job file.
/// An empty `page_override` reads the page named in the job.
PageJob load_page_job(const std::filesystem::path& job_file, const std::filesystem::path& page_override = {});

struct PageResult {
    RasterImage page;  // RGB8 at twice the input size
    PageLayout layout;
    std::vector<RasterImage> panels;  // colorized, snapped, at panel size
};

using PanelColorizer = std::function<RasterImage(const ColorizeRequest&)>;
using PanelUpscaler = std::function<RasterImage(const RasterImage&)>;

/// Colorizes one crop of the rendered binary page and snaps extremes. A crop
/// without ink or dots has nothing to condition on and stays white.
RasterImage render_panel(const ColorizeRequest& request, const PanelColorizer& colorize);

/// Binarize, segment, colorize each panel from the rendered binary page,
/// snap extremes, upscale 2x and restore the layout over a 2x ink mask.
/// Panels without ink are left white. Stage errors name the panel.
PageResult colorize_page(const PageJob& job, const PanelColorizer& colorize, const PanelUpscaler& upscale);
PageResult colorize_page(const PageJob& job, const ColorizationModel& model, const SRModel& sr);

}  // namespace mangacolor
