#include "mangacolor/service.hpp"

#include <cstdio>
#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mangacolor/error.hpp"
#include "mangacolor/image_io.hpp"
#include "mangacolor/json_io.hpp"
#include "mangacolor/pipeline.hpp"

namespace mangacolor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Carries an HTTP status out of request handling.
struct HttpError {
    int status;
    std::string code;
    std::string message;
};

[[noreturn]] void fail(int status, std::string code, std::string message) {
    throw HttpError{status, std::move(code), std::move(message)};
}

struct PanelState {
    std::optional<ColorFeature> feature;  // the session default when absent
    std::vector<DotAnnotation> dots;
    ColorizeOptions options;
    std::optional<RasterImage> result;    // colorized at panel size
    std::optional<RasterImage> upscaled;  // result at 2x
    bool in_flight = false;
};

struct Session {
    std::mutex mutex;
    std::string id;
    long revision = 0;
    RasterImage page;
    RasterImage mono;
    PageLayout layout;
    std::vector<RasterImage> crops;  // rendered binary page per panel
    ColorFeature default_feature = ColorFeature::palette({1.0});
    std::vector<PanelState> panels;
};

json dots_to_json(const std::vector<DotAnnotation>& dots) {
    json out = json::array();
    for (const auto& d : dots) out.push_back({{"x", d.x}, {"y", d.y}, {"a", d.a}, {"b", d.b}});
    return out;
}

DotAnnotation dot_from_json(const json& v) {
    if (!v.is_object()) throw InvalidArgument("a dot must be an object {x, y, a, b}");
    for (const char* k : {"x", "y", "a", "b"}) {
        if (!v.contains(k) || !v[k].is_number()) throw InvalidArgument(std::string("dot field '") + k + "' must be a number");
    }
    if (!v["x"].is_number_integer() || !v["y"].is_number_integer()) throw InvalidArgument("dot x and y must be integers");
    const DotAnnotation d{v["x"].get<int>(), v["y"].get<int>(), v["a"].get<float>(), v["b"].get<float>()};
    if (!std::isfinite(d.a) || !std::isfinite(d.b)) throw InvalidArgument("dot chroma must be finite");
    return d;
}

json panel_state_json(const PanelState& p) {
    json j;
    j["feature"] = p.feature ? feature_to_json(*p.feature) : json(nullptr);
    j["dots"] = dots_to_json(p.dots);
    j["dominant_scale"] = p.options.dominant_scale ? json(*p.options.dominant_scale) : json(nullptr);
    j["blend"] = p.options.blend ? json{{"feature", feature_to_json(p.options.blend->feature)},
                                        {"ratio", p.options.blend->ratio}}
                                 : json(nullptr);
    j["colorized"] = p.result.has_value();
    return j;
}

json session_json(const Session& s) {
    json panels = json::array();
    for (std::size_t i = 0; i < s.panels.size(); ++i) {
        json p = panel_state_json(s.panels[i]);
        p["index"] = i;
        panels.push_back(std::move(p));
    }
    return {{"id", s.id},
            {"revision", s.revision},
            {"layout", layout_to_json(s.layout)},
            {"default_feature", feature_to_json(s.default_feature)},
            {"panels", std::move(panels)}};
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        fail(400, "invalid_payload", std::string("request body is not valid JSON: ") + e.what());
    }
}

bool is_json(const httplib::Request& req) {
    return req.get_header_value("Content-Type").rfind("application/json", 0) == 0;
}

/// The uploaded file of a multipart request, or the raw body otherwise.
std::string upload_bytes(const httplib::Request& req, const char* field) {
    if (req.is_multipart_form_data()) {
        if (req.has_file(field)) return req.get_file_value(field).content;
        if (req.files.size() == 1) return req.files.begin()->second.content;
        fail(400, "invalid_payload", std::string("multipart upload needs a '") + field + "' part");
    }
    return req.body;
}

RasterImage decode_upload(const std::string& bytes) {
    if (bytes.empty()) fail(400, "invalid_payload", "empty image upload");
    try {
        return decode_image({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
    } catch (const Error& e) {
        fail(400, "invalid_payload", std::string("cannot decode image: ") + e.what());
    }
}

void send_png(httplib::Response& res, const RasterImage& img) {
    const auto png = encode_png(img);
    res.set_content(std::string(png.begin(), png.end()), "image/png");
}

}  // namespace

struct Service::Impl {
    std::shared_ptr<const ColorizationModel> model;
    std::shared_ptr<const SRModel> sr;
    ServiceOptions options;
    httplib::Server server;
    bool bound = false;

    mutable std::mutex store_mutex;
    std::map<std::string, std::shared_ptr<Session>> sessions;
    std::mt19937_64 id_rng{std::random_device{}()};

    Impl(std::shared_ptr<const ColorizationModel> m, std::shared_ptr<const SRModel> s, ServiceOptions o)
        : model(std::move(m)), sr(std::move(s)), options(std::move(o)) {
        if (!model || !sr) throw InvalidArgument("service needs a colorization model and a super-resolution model");
        if (!options.state_dir.empty()) restore_all();
        routes();
    }

    // ---- session store ----

    std::shared_ptr<Session> find(const std::string& id) {
        std::lock_guard lock(store_mutex);
        auto it = sessions.find(id);
        if (it == sessions.end()) fail(404, "not_found", "unknown session '" + id + "'");
        return it->second;
    }

    static PanelState& panel_of(Session& s, const std::string& index) {
        std::size_t i = 0;
        try {
            std::size_t used = 0;
            i = std::stoul(index, &used);
            if (used != index.size()) throw std::invalid_argument(index);
        } catch (const std::exception&) {
            fail(404, "not_found", "unknown panel '" + index + "'");
        }
        if (i >= s.panels.size()) fail(404, "not_found", "session has no panel " + index);
        return s.panels[i];
    }

    std::string new_id() {
        std::lock_guard lock(store_mutex);
        for (;;) {
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng()));
            if (!sessions.count(buf)) return buf;
        }
    }

    std::shared_ptr<Session> create(const RasterImage& page) {
        auto s = std::make_shared<Session>();
        s->id = new_id();
        s->page = page;
        s->mono = binarize(page);
        s->layout = segment_page(s->mono);
        s->crops = crop_panels(mono_to_rgb(s->mono), s->layout);
        s->default_feature = binarize_palette(extract_histogram(page));
        s->panels.resize(s->layout.panels.size());
        {
            std::lock_guard lock(store_mutex);
            sessions[s->id] = s;
        }
        persist(*s);
        return s;
    }

    RasterImage compose_page(const Session& s) const {
        std::vector<RasterImage> tiles;
        for (std::size_t i = 0; i < s.panels.size(); ++i) {
            const auto& p = s.panels[i];
            tiles.push_back(p.upscaled ? *p.upscaled
                                       : resize(s.crops[i], 2 * s.crops[i].width(), 2 * s.crops[i].height(),
                                                ResizeMethod::Nearest));
        }
        const RasterImage mono2 = resize(s.mono, 2 * s.mono.width(), 2 * s.mono.height(), ResizeMethod::Nearest);
        return restore_layout(mono2, scale_layout(s.layout, 2), tiles);
    }

    // ---- persistence ----

    void persist(const Session& s) const {
        if (options.state_dir.empty()) return;
        const fs::path dir = options.state_dir / s.id;
        fs::create_directories(dir);
        json doc = session_json(s);
        for (std::size_t i = 0; i < s.panels.size(); ++i) {
            const auto& p = s.panels[i];
            if (p.result) write_png(dir / ("panel_" + std::to_string(i) + ".png"), *p.result);
            if (p.upscaled) write_png(dir / ("panel_" + std::to_string(i) + "_2x.png"), *p.upscaled);
        }
        if (!fs::exists(dir / "page.png")) write_png(dir / "page.png", s.page);
        const fs::path tmp = dir / "session.json.tmp";
        write_json(tmp, doc);
        fs::rename(tmp, dir / "session.json");
    }

    void restore_all() {
        if (!fs::exists(options.state_dir)) return;
        for (const auto& entry : fs::directory_iterator(options.state_dir)) {
            const fs::path doc_path = entry.path() / "session.json";
            if (!entry.is_directory() || !fs::exists(doc_path)) continue;
            const json doc = read_json(doc_path);
            auto s = std::make_shared<Session>();
            s->id = doc.at("id").get<std::string>();
            s->revision = doc.at("revision").get<long>();
            s->page = read_image(entry.path() / "page.png");
            s->mono = binarize(s->page);
            s->layout = layout_from_json(doc.at("layout"));
            s->crops = crop_panels(mono_to_rgb(s->mono), s->layout);
            s->default_feature = feature_from_json(doc.at("default_feature"));
            for (const auto& pj : doc.at("panels")) {
                PanelState p;
                if (!pj.at("feature").is_null()) p.feature = feature_from_json(pj["feature"]);
                for (const auto& d : pj.at("dots")) p.dots.push_back(dot_from_json(d));
                if (!pj.at("dominant_scale").is_null()) p.options.dominant_scale = pj["dominant_scale"].get<double>();
                if (!pj.at("blend").is_null()) {
                    p.options.blend = BlendOption{feature_from_json(pj["blend"].at("feature")),
                                                  pj["blend"].at("ratio").get<double>()};
                }
                const std::string i = std::to_string(s->panels.size());
                if (pj.at("colorized").get<bool>()) {
                    p.result = read_image(entry.path() / ("panel_" + i + ".png"));
                    p.upscaled = read_image(entry.path() / ("panel_" + i + "_2x.png"));
                }
                s->panels.push_back(std::move(p));
            }
            if (s->panels.size() != s->layout.panels.size()) {
                throw IoError("session snapshot " + doc_path.string() + " has a panel count mismatch");
            }
            sessions[s->id] = s;
        }
    }

    // ---- handlers ----

    template <class F>
    httplib::Server::Handler wrap(F f) {
        return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
            auto reply_error = [&](int status, const std::string& code, const std::string& message) {
                res.status = status;
                res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
            };
            try {
                f(req, res);
            } catch (const HttpError& e) {
                reply_error(e.status, e.code, e.message);
            } catch (const InvalidArgument& e) {
                reply_error(400, "invalid_payload", e.what());
            } catch (const EncodingMismatch& e) {
                reply_error(400, "invalid_payload", e.what());
            } catch (const json::exception& e) {
                reply_error(400, "invalid_payload", e.what());
            } catch (const std::exception& e) {
                reply_error(500, "internal", e.what());
            }
        };
    }

    /// Applies `mutate` under the session lock, bumps the revision and
    /// returns the session state.
    template <class F>
    void mutate(httplib::Response& res, Session& s, F&& f, int status = 200) {
        std::lock_guard lock(s.mutex);
        f();
        ++s.revision;
        persist(s);
        res.status = status;
        res.set_content(session_json(s).dump(), "application/json");
    }

    void recolorize(Session& s, std::size_t index, httplib::Response& res) {
        ColorizeRequest request;
        {
            std::lock_guard lock(s.mutex);
            PanelState& p = s.panels[index];
            if (p.in_flight) fail(409, "in_flight", "panel " + std::to_string(index) + " is already being recolorized");
            p.in_flight = true;
            request = {s.crops[index], p.feature.value_or(s.default_feature), p.dots, p.options};
        }
        std::optional<RasterImage> result, upscaled;
        try {
            if (options.inference_delay.count() > 0) std::this_thread::sleep_for(options.inference_delay);
            result = render_panel(request, [this](const ColorizeRequest& r) { return colorize_panel(r, *model); });
            upscaled = super_resolve_panel(*sr, *result, model->config().input_size);
        } catch (...) {
            std::lock_guard lock(s.mutex);
            s.panels[index].in_flight = false;
            throw;
        }
        std::lock_guard lock(s.mutex);
        PanelState& p = s.panels[index];
        p.in_flight = false;
        p.result = std::move(result);
        p.upscaled = std::move(upscaled);
        ++s.revision;
        persist(s);
        res.set_content(json{{"id", s.id}, {"panel", index}, {"revision", s.revision}}.dump(), "application/json");
    }

    void routes() {
        const std::string origin = options.cors_origin;
        server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                    {"Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Post("/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
            auto s = create(decode_upload(upload_bytes(req, "page")));
            std::lock_guard lock(s->mutex);
            res.status = 201;
            res.set_content(json{{"id", s->id}, {"revision", s->revision}, {"layout", layout_to_json(s->layout)}}.dump(),
                            "application/json");
        }));

        server.Get(R"(/sessions/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
            auto s = find(req.matches[1]);
            std::lock_guard lock(s->mutex);
            res.set_content(session_json(*s).dump(), "application/json");
        }));

        server.Get(R"(/sessions/([^/]+)/panels/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
            auto s = find(req.matches[1]);
            std::lock_guard lock(s->mutex);
            const PanelState& p = panel_of(*s, req.matches[2]);
            if (!p.result) fail(404, "not_colorized", "panel has not been colorized yet");
            send_png(res, *p.result);
        }));

        server.Put(R"(/sessions/([^/]+)/panels/([^/]+)/feature)",
                   wrap([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = find(req.matches[1]);
                       ColorFeature feature = ColorFeature::palette({1.0});
                       if (is_json(req)) {
                           feature = feature_from_json(parse_body(req));
                       } else {
                           const std::string mode = req.has_param("mode") ? req.get_param_value("mode") : "histogram";
                           if (mode != "histogram" && mode != "palette") {
                               fail(400, "invalid_payload", "mode must be 'histogram' or 'palette'");
                           }
                           double tau = kDefaultPaletteTau;
                           if (req.has_param("tau")) {
                               try {
                                   tau = std::stod(req.get_param_value("tau"));
                               } catch (const std::exception&) {
                                   fail(400, "invalid_payload", "tau must be a number");
                               }
                           }
                           feature = extract_histogram(decode_upload(upload_bytes(req, "reference")));
                           if (mode == "palette") feature = binarize_palette(feature, tau);
                       }
                       mutate(res, *s, [&] { panel_of(*s, req.matches[2]).feature = feature; });
                   }));

        server.Post(R"(/sessions/([^/]+)/panels/([^/]+)/dots)",
                    wrap([this](const httplib::Request& req, httplib::Response& res) {
                        auto s = find(req.matches[1]);
                        const DotAnnotation d = dot_from_json(parse_body(req));
                        mutate(
                            res, *s,
                            [&] {
                                const std::string i = req.matches[2];
                                PanelState& p = panel_of(*s, i);
                                const RasterImage& crop = s->crops[std::stoul(i)];
                                if (d.x < 0 || d.y < 0 || d.x >= crop.width() || d.y >= crop.height()) {
                                    fail(400, "invalid_payload", "dot is outside the panel");
                                }
                                p.dots.push_back(d);
                            },
                            201);
                    }));

        server.Delete(R"(/sessions/([^/]+)/panels/([^/]+)/dots/([^/]+))",
                      wrap([this](const httplib::Request& req, httplib::Response& res) {
                          auto s = find(req.matches[1]);
                          mutate(res, *s, [&] {
                              PanelState& p = panel_of(*s, req.matches[2]);
                              const std::string k = req.matches[3];
                              std::size_t idx = 0, used = 0;
                              try {
                                  idx = std::stoul(k, &used);
                              } catch (const std::exception&) {
                                  used = 0;
                              }
                              if (used != k.size() || idx >= p.dots.size()) fail(404, "not_found", "no dot '" + k + "'");
                              p.dots.erase(p.dots.begin() + static_cast<long>(idx));
                          });
                      }));

        server.Put(R"(/sessions/([^/]+)/panels/([^/]+)/dominant_scale)",
                   wrap([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = find(req.matches[1]);
                       const json body = parse_body(req);
                       if (!body.is_object() || !body.contains("scale") || !body["scale"].is_number()) {
                           fail(400, "invalid_payload", "expected {\"scale\": number}");
                       }
                       const double scale = body["scale"].get<double>();
                       if (!std::isfinite(scale) || scale < 0.0) fail(400, "invalid_payload", "scale must be finite and >= 0");
                       mutate(res, *s, [&] { panel_of(*s, req.matches[2]).options.dominant_scale = scale; });
                   }));

        server.Put(R"(/sessions/([^/]+)/panels/([^/]+)/blend)",
                   wrap([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = find(req.matches[1]);
                       const json body = parse_body(req);
                       if (!body.is_object() || !body.contains("ratio") || !body["ratio"].is_number()) {
                           fail(400, "invalid_payload", "expected {\"feature\": {...}, \"ratio\": number}");
                       }
                       const double ratio = body["ratio"].get<double>();
                       if (!(ratio >= 0.0 && ratio <= 1.0)) fail(400, "invalid_payload", "ratio must be in [0, 1]");
                       const ColorFeature feature = feature_from_json(body.at("feature"));
                       if (feature.mode() != FeatureMode::Histogram) {
                           fail(400, "invalid_payload", "the blend feature must be a histogram");
                       }
                       mutate(res, *s,
                              [&] { panel_of(*s, req.matches[2]).options.blend = BlendOption{feature, ratio}; });
                   }));

        server.Post(R"(/sessions/([^/]+)/recolorize)", wrap([this](const httplib::Request& req, httplib::Response& res) {
            auto s = find(req.matches[1]);
            if (!req.has_param("panel")) fail(400, "invalid_payload", "missing ?panel=");
            const std::string i = req.get_param_value("panel");
            {
                std::lock_guard lock(s->mutex);
                panel_of(*s, i);
            }
            recolorize(*s, std::stoul(i), res);
        }));

        server.Get(R"(/sessions/([^/]+)/page)", wrap([this](const httplib::Request& req, httplib::Response& res) {
            auto s = find(req.matches[1]);
            RasterImage page;
            {
                std::lock_guard lock(s->mutex);
                page = compose_page(*s);
            }
            send_png(res, page);
        }));
    }
};

Service::Service(std::shared_ptr<const ColorizationModel> model, std::shared_ptr<const SRModel> sr,
                 ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(sr), std::move(options))) {}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    impl_->bound = true;
    return bound;
}

void Service::run() {
    if (!impl_->bound) throw InvalidArgument("Service::run before bind");
    impl_->server.listen_after_bind();
}

void Service::stop() {
    if (impl_) impl_->server.stop();
}

std::size_t Service::session_count() const {
    std::lock_guard lock(impl_->store_mutex);
    return impl_->sessions.size();
}

}  // namespace mangacolor
