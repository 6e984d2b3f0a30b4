#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "mangacolor/colornet.hpp"

namespace mangacolor {

struct ServiceOptions {
    /// When set, every session is snapshotted here after each mutation and
    /// sessions found here are restored at startup.
    std::filesystem::path state_dir;
    std::string cors_origin = "*";
    /// Added before each panel inference; lets tests hold a recolorize open.
    std::chrono::milliseconds inference_delay{0};
};

/// HTTP session service for interactive revision of a page.
///
///   POST   /sessions                          page upload -> {id, revision, layout}
///   GET    /sessions/{id}                     session state
///   GET    /sessions/{id}/panels/{i}          colorized panel (PNG)
///   PUT    /sessions/{id}/panels/{i}/feature  feature JSON or reference image
///   POST   /sessions/{id}/panels/{i}/dots     {x, y, a, b}
///   DELETE /sessions/{id}/panels/{i}/dots/{k}
///   PUT    /sessions/{id}/panels/{i}/dominant_scale  {scale}
///   PUT    /sessions/{id}/panels/{i}/blend    {feature, ratio}
///   POST   /sessions/{id}/recolorize?panel=i
///   GET    /sessions/{id}/page                restored page at 2x (PNG)
///
/// Errors are JSON {code, message} with 400, 404 or 409.
class Service {
public:
    Service(std::shared_ptr<const ColorizationModel> model, std::shared_ptr<const SRModel> sr,
            ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to host:port (0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called. Requires bind().
    void run();
    void stop();

    std::size_t session_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mangacolor
