#pragma once

#include <filesystem>

#include <json.hpp>

#include "mangacolor/color_feature.hpp"
#include "mangacolor/panels.hpp"

namespace mangacolor {

/// {"mode": "histogram"|"palette", "bins": [216 numbers]}
nlohmann::json feature_to_json(const ColorFeature& feature);
ColorFeature feature_from_json(const nlohmann::json& doc);

/// {"page_w", "page_h", "panels": [{"x", "y", "w", "h"}, ...]}
nlohmann::json layout_to_json(const PageLayout& layout);
PageLayout layout_from_json(const nlohmann::json& doc);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace mangacolor
