#include "mangacolor/cli.hpp"

#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "mangacolor/error.hpp"
#include "mangacolor/image_io.hpp"
#include "mangacolor/json_io.hpp"
#include "mangacolor/pipeline.hpp"
#include "mangacolor/service.hpp"
#include "mangacolor/training.hpp"

namespace mangacolor {

namespace fs = std::filesystem;

namespace {

DotAnnotation parse_dot(const std::string& text) {
    std::istringstream in(text);
    DotAnnotation d;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(in >> d.x >> c1 >> d.y >> c2 >> d.a >> c3 >> d.b) || c1 != ',' || c2 != ',' || c3 != ',' || !in.eof()) {
        throw InvalidArgument("--dot expects x,y,a,b but got '" + text + "'");
    }
    return d;
}

BlendOption parse_blend(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0) throw InvalidArgument("--blend expects file.json:ratio");
    double ratio = 0.0;
    try {
        std::size_t used = 0;
        ratio = std::stod(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw InvalidArgument("--blend ratio in '" + text + "' is not a number");
    }
    return {feature_from_json(read_json(text.substr(0, colon))), ratio};
}

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    bool verbose = false;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Reference-driven manga colorization", "mangacolor"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed (overrides the training config)");
    app.add_option("--config", g.config, "JSON configuration file (train, serve)");
    app.add_flag("--verbose", g.verbose, "Report progress");

    // extract-feature
    std::string fe_image, fe_out;
    bool fe_palette = false, fe_histogram = false;
    double fe_tau = kDefaultPaletteTau;
    auto* fe = app.add_subcommand("extract-feature", "Color histogram or palette of a reference image");
    fe->add_option("image", fe_image, "Reference image")->required()->check(CLI::ExistingFile);
    auto* fe_p = fe->add_flag("--palette", fe_palette, "Binary palette");
    fe->add_flag("--histogram", fe_histogram, "Normalized histogram (default)")->excludes(fe_p);
    fe->add_option("--tau", fe_tau, "Palette threshold");
    fe->add_option("-o,--output", fe_out, "Feature JSON")->required();

    // segment
    std::string sg_page, sg_out;
    auto* sg = app.add_subcommand("segment", "Split a page into panels");
    sg->add_option("page", sg_page, "Page image")->required()->check(CLI::ExistingFile);
    sg->add_option("-o,--output", sg_out, "Layout JSON")->required();

    // colorize-panel
    std::string cp_panel, cp_feature, cp_model, cp_out, cp_blend;
    std::vector<std::string> cp_dots;
    std::optional<double> cp_scale;
    auto* cp = app.add_subcommand("colorize-panel", "Colorize one panel");
    cp->add_option("panel", cp_panel, "Panel image")->required()->check(CLI::ExistingFile);
    cp->add_option("--feature", cp_feature, "Feature JSON")->required()->check(CLI::ExistingFile);
    cp->add_option("--dot", cp_dots, "Color dot x,y,a,b in panel pixels (repeatable)");
    cp->add_option("--dominant-scale", cp_scale, "Scale of the dominant histogram bin");
    cp->add_option("--blend", cp_blend, "Second feature and ratio, file.json:ratio");
    cp->add_option("--model", cp_model, "Colorization checkpoint directory")->required();
    cp->add_option("-o,--output", cp_out, "Output PNG")->required();

    // colorize-page
    std::string pg_page, pg_job, pg_out, pg_model, pg_sr, pg_layout;
    auto* pg = app.add_subcommand("colorize-page", "Colorize a full page");
    pg->add_option("page", pg_page, "Page image")->required()->check(CLI::ExistingFile);
    pg->add_option("--job", pg_job, "Job JSON")->required()->check(CLI::ExistingFile);
    pg->add_option("--model", pg_model, "Colorization checkpoint (overrides the job)");
    pg->add_option("--sr", pg_sr, "Super-resolution checkpoint (overrides the job)");
    pg->add_option("--layout", pg_layout, "Also write the detected layout JSON");
    pg->add_option("-o,--output", pg_out, "Output PNG")->required();

    // train
    std::string tr_out;
    auto* tr = app.add_subcommand("train", "Train a colorization or super-resolution model");
    tr->add_option("--out", tr_out, "Output directory")->required();

    // superres
    std::string sr_image, sr_model, sr_out;
    auto* sr = app.add_subcommand("superres", "2x super-resolution of an image");
    sr->add_option("image", sr_image, "Input image")->required()->check(CLI::ExistingFile);
    sr->add_option("--model", sr_model, "Super-resolution checkpoint directory")->required();
    sr->add_option("-o,--output", sr_out, "Output PNG")->required();

    // serve
    int sv_port = 8080;
    std::string sv_host = "127.0.0.1", sv_model, sv_sr, sv_state;
    auto* sv = app.add_subcommand("serve", "HTTP session service");
    sv->add_option("--port", sv_port, "Port")->check(CLI::Range(0, 65535));
    sv->add_option("--host", sv_host, "Bind address");
    sv->add_option("--model", sv_model, "Colorization checkpoint directory")->required();
    sv->add_option("--sr", sv_sr, "Super-resolution checkpoint directory")->required();
    sv->add_option("--state-dir", sv_state, "Persist sessions in this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << e.what() << "\n\n" << (app.get_subcommands().empty() ? app.help() : app.get_subcommands()[0]->help());
        return 1;
    }

    try {
        if (fe->parsed()) {
            ColorFeature f = extract_histogram(read_image(fe_image));
            if (fe_palette) f = binarize_palette(f, fe_tau);
            write_json(fe_out, feature_to_json(f));
            int nonzero = 0;
            for (double v : f.bins()) nonzero += v != 0.0;
            out << "wrote " << feature_mode_name(f.mode()) << " feature with " << nonzero << " non-zero bins to "
                << fe_out << "\n";
        } else if (sg->parsed()) {
            const PageLayout layout = segment_page(binarize(read_image(sg_page)));
            write_json(sg_out, layout_to_json(layout));
            out << "found " << layout.panels.size() << " panels, wrote " << sg_out << "\n";
        } else if (cp->parsed()) {
            ColorizeRequest req{read_image(cp_panel), feature_from_json(read_json(cp_feature)), {}, {}};
            for (const auto& d : cp_dots) req.dots.push_back(parse_dot(d));
            req.options.dominant_scale = cp_scale;
            if (!cp_blend.empty()) req.options.blend = parse_blend(cp_blend);
            const auto model = ColorizationModel::load(cp_model);
            write_png(cp_out, colorize_panel(req, *model));
            out << "wrote " << cp_out << "\n";
        } else if (pg->parsed()) {
            const PageJob job = load_page_job(pg_job, pg_page);
            const fs::path model_dir = pg_model.empty() ? job.model : fs::path(pg_model);
            const fs::path sr_dir = pg_sr.empty() ? job.sr_model : fs::path(pg_sr);
            if (model_dir.empty() || sr_dir.empty()) throw InvalidArgument("the job names no model or sr_model");
            const auto model = ColorizationModel::load(model_dir);
            const auto srm = SRModel::load(sr_dir);
            const PageResult result = colorize_page(job, *model, *srm);
            write_png(pg_out, result.page);
            if (!pg_layout.empty()) write_json(pg_layout, layout_to_json(result.layout));
            out << "colorized " << result.layout.panels.size() << " panels, wrote " << result.page.width() << "x"
                << result.page.height() << " page to " << pg_out << "\n";
        } else if (tr->parsed()) {
            if (g.config.empty()) throw InvalidArgument("train needs --config");
            TrainConfig config = TrainConfig::from_json(read_json(g.config), fs::path(g.config).parent_path());
            if (g.seed) config.seed = *g.seed;
            const long every = std::max(1L, config.iterations / 20);
            train_to_directory(config, tr_out, [&](const LossRecord& r) {
                if (g.verbose && (r.iteration % every == 0 || r.iteration == 1)) {
                    out << "iter " << r.iteration << " total " << r.loss.total << " mse " << r.loss.mse << "\n";
                }
            });
            out << "trained " << config.iterations << " iterations, wrote " << tr_out << "\n";
        } else if (sr->parsed()) {
            const auto model = SRModel::load(sr_model);
            const RasterImage img = read_image(sr_image);
            write_png(sr_out, super_resolve_image(*model, img));
            out << "wrote " << 2 * img.width() << "x" << 2 * img.height() << " image to " << sr_out << "\n";
        } else if (sv->parsed()) {
            ServiceOptions options;
            if (!g.config.empty()) {
                const auto doc = read_json(g.config);
                options.cors_origin = doc.value("cors_origin", options.cors_origin);
                if (doc.contains("state_dir")) options.state_dir = doc["state_dir"].get<std::string>();
            }
            if (!sv_state.empty()) options.state_dir = sv_state;
            Service service(std::shared_ptr<const ColorizationModel>(ColorizationModel::load(sv_model)),
                            std::shared_ptr<const SRModel>(SRModel::load(sv_sr)), options);
            const int port = service.bind(sv_host, sv_port);
            out << "listening on " << sv_host << ":" << port << std::endl;
            service.run();
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace mangacolor
