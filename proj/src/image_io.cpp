#include "mangacolor/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "mangacolor/error.hpp"

namespace mangacolor {

namespace {

bool is_png(std::span<const std::uint8_t> data) {
    return data.size() >= 8 && png_sig_cmp(data.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> data) {
    return data.size() >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF;
}

RasterImage decode_png(std::span<const std::uint8_t> data) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
        throw IoError(std::string("PNG decode failed: ") + image.message);
    }
    image.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError(std::string("PNG decode failed: ") + image.message);
    }
    const int w = static_cast<int>(image.width);
    const int h = static_cast<int>(image.height);
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t p = 0; p < static_cast<std::size_t>(w) * h; ++p) {
        const unsigned alpha = rgba[4 * p + 3];
        for (int c = 0; c < 3; ++c) {
            // Composite over white: c*a + 255*(1-a), rounded.
            const unsigned v = rgba[4 * p + c] * alpha + 255u * (255u - alpha);
            rgb[3 * p + c] = static_cast<std::uint8_t>((v + 127u) / 255u);
        }
    }
    return RasterImage::rgb(w, h, std::move(rgb));
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Decodes into `out`; returns false with `err.message` set on failure. Kept
// free of objects with destructors because of the longjmp error path.
bool decode_jpeg_raw(std::span<const std::uint8_t> data, std::vector<std::uint8_t>& out, int& w,
                     int& h, JpegErrorManager& err) {
    jpeg_decompress_struct cinfo;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    w = static_cast<int>(cinfo.output_width);
    h = static_cast<int>(cinfo.output_height);
    out.resize(static_cast<std::size_t>(w) * h * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

RasterImage decode_jpeg(std::span<const std::uint8_t> data) {
    std::vector<std::uint8_t> rgb;
    int w = 0;
    int h = 0;
    JpegErrorManager err{};
    if (!decode_jpeg_raw(data, rgb, w, h, err)) {
        throw IoError(std::string("JPEG decode failed: ") + err.message);
    }
    return RasterImage::rgb(w, h, std::move(rgb));
}

}  // namespace

RasterImage decode_image(std::span<const std::uint8_t> encoded) {
    if (is_png(encoded)) return decode_png(encoded);
    if (is_jpeg(encoded)) return decode_jpeg(encoded);
    throw IoError("unrecognized image format (expected PNG or JPEG)");
}

RasterImage read_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_image(bytes);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
    if (img.empty()) throw InvalidArgument("cannot encode an empty image");
    RasterImage rgb_holder;
    const RasterImage* src = &img;
    std::vector<std::uint8_t> gray;
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    const void* buffer = nullptr;
    switch (img.encoding()) {
        case Encoding::LabF32:
            rgb_holder = lab_to_rgb(img);
            src = &rgb_holder;
            [[fallthrough]];
        case Encoding::RGB8:
            image.format = PNG_FORMAT_RGB;
            buffer = src->bytes().data();
            break;
        case Encoding::Mono1: {
            image.format = PNG_FORMAT_GRAY;
            auto m = img.bytes();
            gray.resize(m.size());
            for (std::size_t i = 0; i < m.size(); ++i) gray[i] = m[i] ? 255 : 0;
            buffer = gray.data();
            break;
        }
    }
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, buffer, 0, nullptr)) {
        throw IoError(std::string("PNG encode failed: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, buffer, 0, nullptr)) {
        throw IoError(std::string("PNG encode failed: ") + image.message);
    }
    out.resize(size);
    return out;
}

void write_png(const std::filesystem::path& path, const RasterImage& img) {
    write_file(path, encode_png(img));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace mangacolor
