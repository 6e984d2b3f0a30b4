#include "mangacolor/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mangacolor/error.hpp"
#include "mangacolor/json_io.hpp"

namespace mangacolor::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr int kFormat = 1;

nlohmann::json read_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    if (!fs::exists(path)) throw IoError("not a checkpoint (no manifest.json): " + dir.string());
    auto doc = read_json(path);
    if (!doc.is_object() || doc.value("format", 0) != kFormat || !doc.contains("tensors")) {
        throw IoError("unsupported checkpoint manifest: " + path.string());
    }
    return doc;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const ParamSet& params, const nlohmann::json& meta) {
    fs::create_directories(dir);
    nlohmann::json tensors = nlohmann::json::object();
    std::ofstream blob(dir / "weights.bin", std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("cannot write " + (dir / "weights.bin").string());
    std::uint64_t offset = 0;
    for (const auto& [name, e] : params.entries()) {
        tensors[name] = {{"shape", e.tensor.shape()}, {"dtype", "float32"}, {"offset", offset}};
        const auto bytes = e.tensor.size() * sizeof(float);
        blob.write(reinterpret_cast<const char*>(e.tensor.ptr()), static_cast<std::streamsize>(bytes));
        offset += bytes;
    }
    blob.close();
    if (!blob) throw IoError("failed writing " + (dir / "weights.bin").string());
    write_json(dir / "manifest.json", {{"format", kFormat}, {"meta", meta}, {"tensors", tensors}});
}

nlohmann::json read_checkpoint_meta(const fs::path& dir) {
    return read_manifest(dir).value("meta", nlohmann::json::object());
}

nlohmann::json load_checkpoint(const fs::path& dir, ParamSet& params) {
    const auto manifest = read_manifest(dir);
    const auto& tensors = manifest["tensors"];
    if (tensors.size() != params.entries().size()) {
        throw IoError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                      std::to_string(params.entries().size()));
    }
    std::ifstream blob(dir / "weights.bin", std::ios::binary);
    if (!blob) throw IoError("cannot read " + (dir / "weights.bin").string());
    blob.seekg(0, std::ios::end);
    const auto blob_size = static_cast<std::uint64_t>(blob.tellg());

    for (auto& [name, e] : params.entries()) {
        if (!tensors.contains(name)) throw IoError("checkpoint is missing tensor '" + name + "'");
        const auto& t = tensors[name];
        if (t.value("dtype", "") != "float32") throw IoError("tensor '" + name + "' is not float32");
        const auto shape = t.at("shape").get<Shape>();
        if (shape != e.tensor.shape()) {
            throw IoError("tensor '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                          shape_string(e.tensor.shape()));
        }
        const auto offset = t.at("offset").get<std::uint64_t>();
        const auto bytes = e.tensor.size() * sizeof(float);
        if (offset + bytes > blob_size) throw IoError("tensor '" + name + "' runs past the end of weights.bin");
        blob.seekg(static_cast<std::streamoff>(offset));
        blob.read(reinterpret_cast<char*>(e.tensor.ptr()), static_cast<std::streamsize>(bytes));
        if (!blob) throw IoError("short read for tensor '" + name + "'");
    }
    return manifest.value("meta", nlohmann::json::object());
}

}  // namespace mangacolor::nn
