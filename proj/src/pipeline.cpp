#include "mangacolor/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "mangacolor/error.hpp"
#include "mangacolor/image_io.hpp"
#include "mangacolor/json_io.hpp"

namespace mangacolor {

namespace fs = std::filesystem;

Letterbox letterbox_geometry(int width, int height, int size) {
    if (width <= 0 || height <= 0) throw InvalidArgument("letterbox: image has no pixels");
    if (size <= 0) throw InvalidArgument("letterbox: size must be positive");
    Letterbox g;
    g.scale = static_cast<double>(size) / std::max(width, height);
    g.w = std::clamp(static_cast<int>(std::lround(width * g.scale)), 1, size);
    g.h = std::clamp(static_cast<int>(std::lround(height * g.scale)), 1, size);
    g.x = (size - g.w) / 2;
    g.y = (size - g.h) / 2;
    return g;
}

RasterImage letterbox(const RasterImage& rgb, int size, Letterbox* geometry) {
    if (rgb.encoding() != Encoding::RGB8) throw EncodingMismatch("letterbox expects RGB8");
    const Letterbox g = letterbox_geometry(rgb.width(), rgb.height(), size);
    RasterImage canvas = RasterImage::filled_rgb(size, size, {255, 255, 255});
    const RasterImage content =
        (g.w == rgb.width() && g.h == rgb.height()) ? rgb : resize(rgb, g.w, g.h, ResizeMethod::Bilinear);
    paste(canvas, content, g.x, g.y);
    if (geometry) *geometry = g;
    return canvas;
}

DotAnnotation letterbox_dot(const DotAnnotation& dot, const Letterbox& g) {
    auto map = [&](int v, int lo, int extent) {
        const long p = std::lround((v + 0.5) * g.scale - 0.5);
        return lo + static_cast<int>(std::clamp<long>(p, 0, extent - 1));
    };
    return {map(dot.x, g.x, g.w), map(dot.y, g.y, g.h), dot.a, dot.b};
}

ColorFeature apply_feature_options(const ColorFeature& feature, const ColorizeOptions& options) {
    ColorFeature out = feature;
    if (options.dominant_scale && *options.dominant_scale != 1.0) {
        out = adjust_dominant_bin(out, *options.dominant_scale);
    }
    if (options.blend) out = blend_histograms(out, options.blend->feature, options.blend->ratio);
    return out;
}

RasterImage colorize_panel(const ColorizeRequest& req, const ColorizationModel& model) {
    const RasterImage& panel = req.panel;
    if (panel.encoding() != Encoding::RGB8) throw EncodingMismatch("colorize_panel expects an RGB8 panel");
    for (const auto& d : req.dots) {
        if (d.x < 0 || d.y < 0 || d.x >= panel.width() || d.y >= panel.height()) {
            throw InvalidArgument("dot (" + std::to_string(d.x) + "," + std::to_string(d.y) + ") is outside the " +
                                  std::to_string(panel.width()) + "x" + std::to_string(panel.height()) + " panel");
        }
    }
    const ColorFeature feature = apply_feature_options(req.feature, req.options);

    const int size = model.config().input_size;
    Letterbox g;
    const RasterImage boxed = letterbox(panel, size, &g);
    std::vector<DotAnnotation> dots;
    dots.reserve(req.dots.size());
    for (const auto& d : req.dots) dots.push_back(letterbox_dot(d, g));

    nn::Tensor x({1, kColorInputChannels, size, size});
    write_model_input(x, 0, binarize(boxed), dots);
    nn::Tensor f({1, kFeatureBins});
    write_feature(f, 0, feature);

    const ColorizationOutput out = model.infer(x, f);
    const RasterImage rgb = lab_to_rgb(tensor_to_lab_image(out.lab, 0));
    const RasterImage content = crop(rgb, g.x, g.y, g.w, g.h);
    if (g.w == panel.width() && g.h == panel.height()) return content;
    return resize(content, panel.width(), panel.height(), ResizeMethod::Bilinear);
}

RasterImage super_resolve(const SRModel& model, const RasterImage& rgb) {
    if (rgb.encoding() != Encoding::RGB8) throw EncodingMismatch("super_resolve expects RGB8");
    nn::Tensor x({1, 3, rgb.height(), rgb.width()});
    write_rgb_unit(x, 0, rgb);
    return tensor_to_rgb_image(model.infer(x), 0);
}

RasterImage super_resolve_image(const SRModel& model, const RasterImage& rgb) {
    if (rgb.encoding() != Encoding::RGB8) throw EncodingMismatch("super_resolve_image expects RGB8");
    const int w = (rgb.width() + 3) / 4 * 4, h = (rgb.height() + 3) / 4 * 4;
    if (w == rgb.width() && h == rgb.height()) return super_resolve(model, rgb);
    RasterImage padded = RasterImage::filled_rgb(w, h, {255, 255, 255});
    paste(padded, rgb, 0, 0);
    return crop(super_resolve(model, padded), 0, 0, 2 * rgb.width(), 2 * rgb.height());
}

RasterImage super_resolve_panel(const SRModel& model, const RasterImage& rgb, int size) {
    Letterbox g;
    const RasterImage boxed = letterbox(rgb, size, &g);
    const RasterImage up = super_resolve(model, boxed);
    const RasterImage content = crop(up, 2 * g.x, 2 * g.y, 2 * g.w, 2 * g.h);
    if (content.width() == 2 * rgb.width() && content.height() == 2 * rgb.height()) return content;
    return resize(content, 2 * rgb.width(), 2 * rgb.height(), ResizeMethod::Bilinear);
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

ColorFeature feature_field(const nlohmann::json& v, const fs::path& base) {
    if (v.is_string()) return feature_from_json(read_json(resolve(base, v.get<std::string>())));
    if (v.is_object()) return feature_from_json(v);
    throw InvalidArgument("a feature must be an object or a path to a feature file");
}

DotAnnotation dot_field(const nlohmann::json& v) {
    if (v.is_array() && v.size() == 4) {
        return {v[0].get<int>(), v[1].get<int>(), v[2].get<float>(), v[3].get<float>()};
    }
    if (v.is_object()) return {v.at("x").get<int>(), v.at("y").get<int>(), v.at("a").get<float>(), v.at("b").get<float>()};
    throw InvalidArgument("a dot must be [x, y, a, b] or {x, y, a, b}");
}

}  // namespace

namespace {

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known, const std::string& where) {
    if (!obj.is_object()) throw InvalidArgument(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            throw InvalidArgument("unknown " + where + " field '" + key + "'");
        }
    }
}

}  // namespace

PageJob load_page_job(const fs::path& job_file, const fs::path& page_override) {
    const nlohmann::json doc = read_json(job_file);
    const fs::path base = job_file.parent_path();
    PageJob job;
    reject_unknown(doc, {"page", "model", "sr_model", "default_feature", "panels"}, "job");
    try {
        if (!page_override.empty()) {
            job.page = read_image(page_override);
        } else {
            job.page = read_image(resolve(base, doc.at("page").get<std::string>()));
        }
        if (doc.contains("model")) job.model = resolve(base, doc["model"].get<std::string>());
        if (doc.contains("sr_model")) job.sr_model = resolve(base, doc["sr_model"].get<std::string>());
        job.default_feature = feature_field(doc.at("default_feature"), base);
        for (const auto& p : doc.value("panels", nlohmann::json::array())) {
            reject_unknown(p, {"index", "feature", "dots", "dominant_scale", "blend"}, "panel override");
            const int index = p.at("index").get<int>();
            if (index < 0) throw InvalidArgument("panel index must be >= 0");
            PanelOverride o;
            if (p.contains("feature")) o.feature = feature_field(p["feature"], base);
            for (const auto& d : p.value("dots", nlohmann::json::array())) o.dots.push_back(dot_field(d));
            if (p.contains("dominant_scale")) o.options.dominant_scale = p["dominant_scale"].get<double>();
            if (p.contains("blend")) {
                const auto& b = p["blend"];
                o.options.blend = BlendOption{feature_field(b.at("feature"), base), b.at("ratio").get<double>()};
            }
            if (!job.overrides.emplace(index, std::move(o)).second) {
                throw InvalidArgument("panel " + std::to_string(index) + " is overridden twice");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("job file " + job_file.string() + ": " + e.what());
    }
    return job;
}

namespace {

bool has_ink(const RasterImage& rgb) {
    const auto px = rgb.bytes();
    for (std::size_t i = 0; i < px.size(); i += 3) {
        if (px[i] == 0) return true;
    }
    return false;
}

}  // namespace

RasterImage render_panel(const ColorizeRequest& req, const PanelColorizer& colorize) {
    if (!has_ink(req.panel) && req.dots.empty()) {
        return RasterImage::filled_rgb(req.panel.width(), req.panel.height(), {255, 255, 255});
    }
    return snap_extremes(colorize(req));
}

PageResult colorize_page(const PageJob& job, const PanelColorizer& colorize, const PanelUpscaler& upscale) {
    if (job.page.encoding() != Encoding::RGB8) throw EncodingMismatch("page must be RGB8");
    const RasterImage mono = binarize(job.page);
    PageResult result;
    result.layout = segment_page(mono, job.segment);
    const int count = static_cast<int>(result.layout.panels.size());
    for (const auto& [index, o] : job.overrides) {
        if (index >= count) {
            throw InvalidArgument("override for panel " + std::to_string(index) + " but the page has " +
                                  std::to_string(count) + " panels");
        }
    }

    const std::vector<RasterImage> crops = crop_panels(mono_to_rgb(mono), result.layout);
    std::vector<RasterImage> upscaled;
    for (int i = 0; i < count; ++i) {
        try {
            ColorizeRequest req{crops[i], job.default_feature, {}, {}};
            if (auto it = job.overrides.find(i); it != job.overrides.end()) {
                if (it->second.feature) req.feature = *it->second.feature;
                req.dots = it->second.dots;
                req.options = it->second.options;
            }
            RasterImage colored = render_panel(req, colorize);
            upscaled.push_back(upscale(colored));
            result.panels.push_back(std::move(colored));
        } catch (const Error& e) {
            throw Error("panel " + std::to_string(i) + ": " + e.what());
        }
    }

    const RasterImage mono2 = resize(mono, 2 * mono.width(), 2 * mono.height(), ResizeMethod::Nearest);
    result.page = restore_layout(mono2, scale_layout(result.layout, 2), upscaled);
    return result;
}

PageResult colorize_page(const PageJob& job, const ColorizationModel& model, const SRModel& sr) {
    return colorize_page(
        job, [&](const ColorizeRequest& req) { return colorize_panel(req, model); },
        [&](const RasterImage& panel) { return super_resolve_panel(sr, panel, model.config().input_size); });
}

}  // namespace mangacolor
