#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mangacolor/image.hpp"

namespace mangacolor {

/// Decodes PNG or JPEG (sniffed from the signature) into RGB8. Gray inputs are
/// expanded and alpha is composited over white.
RasterImage decode_image(std::span<const std::uint8_t> encoded);
RasterImage read_image(const std::filesystem::path& path);

/// PNG encoding. Mono1 becomes 8-bit gray (0/255), LabF32 is converted to sRGB.
std::vector<std::uint8_t> encode_png(const RasterImage& img);
void write_png(const std::filesystem::path& path, const RasterImage& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mangacolor
