#include "mangacolor/json_io.hpp"

#include <fstream>

#include "mangacolor/error.hpp"

namespace mangacolor {

using nlohmann::json;

json feature_to_json(const ColorFeature& feature) {
    json bins = json::array();
    for (double v : feature.bins()) {
        if (feature.mode() == FeatureMode::Palette) {
            bins.push_back(static_cast<int>(v));
        } else {
            bins.push_back(v);
        }
    }
    return {{"mode", feature_mode_name(feature.mode())}, {"bins", std::move(bins)}};
}

ColorFeature feature_from_json(const json& doc) {
    try {
        const auto mode_name = doc.at("mode").get<std::string>();
        FeatureMode mode;
        if (mode_name == "histogram") {
            mode = FeatureMode::Histogram;
        } else if (mode_name == "palette") {
            mode = FeatureMode::Palette;
        } else {
            throw InvalidArgument("unknown feature mode '" + mode_name + "'");
        }
        const auto values = doc.at("bins").get<std::vector<double>>();
        return ColorFeature::from_vector(values, mode);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed color feature: ") + e.what());
    }
}

json layout_to_json(const PageLayout& layout) {
    json panels = json::array();
    for (const auto& r : layout.panels) panels.push_back({{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}});
    return {{"page_w", layout.page_w}, {"page_h", layout.page_h}, {"panels", std::move(panels)}};
}

PageLayout layout_from_json(const json& doc) {
    try {
        PageLayout layout{doc.at("page_w").get<int>(), doc.at("page_h").get<int>(), {}};
        for (const auto& p : doc.at("panels")) {
            layout.panels.push_back({p.at("x").get<int>(), p.at("y").get<int>(), p.at("w").get<int>(),
                                     p.at("h").get<int>()});
        }
        validate_layout(layout);
        return layout;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed page layout: ") + e.what());
    }
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace mangacolor
