// Acceptance run: one PASS/FAIL line per criterion. Tolerances and time
// budgets are fixed here; the exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "mangacolor/image_io.hpp"
#include "mangacolor/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mangacolor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Detail {
public:
    template <class T>
    Detail& operator<<(const T& v) {
        s_ << v;
        return *this;
    }
    std::string str() const { return s_.str(); }

private:
    std::ostringstream s_;
};

// Pinned tolerances and budgets.
constexpr double kColorMathSeconds = 10.0;
constexpr double kOtsuSeconds = 5.0;
constexpr double kGradTolerance = 1e-3;
constexpr double kGradSeconds = 60.0;
constexpr double kOverfitRatio = 0.10;
constexpr double kOverfitSeconds = 300.0;
constexpr double kDotFrequencyTolerance = 0.01;
constexpr double kSegmentIoU = 0.9;
constexpr double kSegmentSeconds = 10.0;

// Overfit harness settings.
constexpr int kOverfitIterations = 500;
constexpr int kOverfitBatch = 4;
constexpr int kOverfitDivisor = 16;
constexpr double kOverfitAlpha = 3e-3;
constexpr int kDeterminismPrefix = 10;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome color_math() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> side(1, 96);
    int mismatched = 0;
    double worst_sum = 0.0;
    for (int i = 0; i < 100; ++i) {
        const RasterImage img = oracle::random_image(side(rng), side(rng), rng);
        const ColorFeature f = extract_histogram(img);
        const auto want = oracle::histogram(img);
        double sum = 0.0;
        for (int b = 0; b < kFeatureBins; ++b) {
            mismatched += f[b] != want[b];
            sum += f[b];
        }
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    o.pass = mismatched == 0 && worst_sum <= 1e-9;

    // Palette: bins at or above tau become 1; with none above tau, the argmax bin.
    int palette_errors = 0;
    for (int i = 0; i < 200; ++i) {
        const RasterImage img = oracle::random_image(side(rng), side(rng), rng);
        const ColorFeature h = extract_histogram(img);
        const double tau = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
        const ColorFeature p = binarize_palette(h, tau);
        int argmax = 0;
        bool any = false;
        for (int b = 0; b < kFeatureBins; ++b) {
            if (h[b] > h[argmax]) argmax = b;
            any = any || h[b] >= tau;
        }
        for (int b = 0; b < kFeatureBins; ++b) {
            const bool on = any ? h[b] >= tau : b == argmax;
            palette_errors += p[b] != (on ? 1.0 : 0.0);
        }
    }
    ColorFeature::Bins uniform;
    uniform.fill(1.0 / kFeatureBins);
    const ColorFeature fallback = binarize_palette(ColorFeature::histogram(uniform), 0.5);
    palette_errors += fallback[0] != 1.0;
    const ColorFeature red = binarize_palette(extract_histogram(RasterImage::filled_rgb(3, 3, {255, 0, 0})));
    palette_errors += red[180] != 1.0;
    o.pass = o.pass && palette_errors == 0;

    const double t = seconds_since(t0);
    o.pass = o.pass && t < kColorMathSeconds;
    o.detail = (Detail() << "100 images, " << mismatched << " bin mismatches, max |sum-1| " << worst_sum << ", "
                         << palette_errors << " palette errors, " << t << " s (< " << kColorMathSeconds << ")")
                   .str();
    return o;
}

Outcome otsu() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(99);
    int mismatched = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto h = oracle::random_histogram(rng);
        mismatched += otsu_threshold(h) != oracle::otsu(h);
    }
    const double t = seconds_since(t0);
    return {mismatched == 0 && t < kOtsuSeconds,
            (Detail() << "1000 histograms, " << mismatched << " mismatches, " << t << " s (< " << kOtsuSeconds << ")")
                .str()};
}

Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    double worst = 0.0;
    std::string worst_name;
    std::size_t checked = 0;
    for (const auto& c : testsupport::run_grad_checks()) {
        checked += c.result.checked;
        if (c.result.checked == 0) {
            o.pass = false;
            worst_name = c.name + " (nothing checked)";
        }
        if (c.result.max_rel_error > worst) {
            worst = c.result.max_rel_error;
            worst_name = c.name;
        }
    }
    const double t = seconds_since(t0);
    o.pass = o.pass && worst <= kGradTolerance && t < kGradSeconds;
    o.detail = (Detail() << checked << " coordinates, max rel error " << worst << " (" << worst_name << ", <= "
                         << kGradTolerance << "), " << t << " s (< " << kGradSeconds << ")")
                   .str();
    return o;
}

Outcome shape_ledger() {
    try {
        ModelConfig config;
        config.label_count = 428;
        const ColorizationModel model(config);
        const ShapeLedger& l = model.shape_ledger();
        const std::vector<nn::Shape> chain{{3, 224, 224}, {64, 112, 112}, {128, 56, 56}, {256, 28, 28}, {512, 14, 14}};
        const bool derived = l.input == nn::Shape{3, 224, 224} && l.low_level == nn::Shape{512, 28, 28} &&
                             l.mid_level == nn::Shape{256, 28, 28} && l.fusion_input == nn::Shape{768, 28, 28} &&
                             l.fusion_output == nn::Shape{256, 28, 28} && l.output == nn::Shape{3, 224, 224} &&
                             l.class_logits == nn::Shape{428} && l.discriminator_chain == chain;
        ShapeLedger seen;
        nn::Tensor x({1, 3, 224, 224}, 1.0f), f({1, kFeatureBins}, 1.0f / kFeatureBins);
        model.infer(x, f, &seen);
        seen.discriminator_chain = Discriminator().shape_chain({3, 224, 224});
        const bool observed = seen == l;
        return {derived && observed,
                (Detail() << "low " << nn::shape_string(l.low_level) << ", mid " << nn::shape_string(l.mid_level)
                          << ", fusion " << nn::shape_string(l.fusion_input) << " -> "
                          << nn::shape_string(l.fusion_output) << ", output " << nn::shape_string(l.output)
                          << ", logits " << nn::shape_string(l.class_logits) << ", discriminator "
                          << nn::shape_string(l.discriminator_chain.front()) << " -> "
                          << nn::shape_string(l.discriminator_chain.back()) << ", forward pass "
                          << (observed ? "agrees" : "DISAGREES"))
                    .str()};
    } catch (const std::exception& e) {
        return {false, std::string("construction failed: ") + e.what()};
    }
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

Outcome loss_identity(const fs::path& dir) {
    TrainConfig c;
    c.iterations = 25;
    c.batch_size = 2;
    c.seed = 3;
    c.label_count = 4;
    c.input_size = 64;
    c.width_divisor = 16;
    const auto data = testsupport::toy_dataset();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const fs::path p = dir / ("toy" + std::to_string(i) + ".png");
        write_png(p, data[i].image);
        c.dataset.push_back({p, data[i].label});
    }
    std::vector<LossRecord> records;
    train_to_directory(c, dir / "run", [&](const LossRecord& r) { records.push_back(r); });
    int bad = 0;
    for (const auto& r : records) {
        const auto& l = r.loss;
        bad += l.total != l.mse + l.adversarial + 0.003 * l.classification;
    }
    // The CSV carries the same doubles at round-trip precision.
    std::ifstream csv(dir / "run" / "loss.csv");
    std::string line;
    std::getline(csv, line);
    int rows = 0;
    while (std::getline(csv, line)) {
        const auto f = split_csv(line);
        const double mse = std::stod(f.at(1)), adv = std::stod(f.at(2)), cls = std::stod(f.at(3)),
                     total = std::stod(f.at(4));
        bad += total != mse + adv + 0.003 * cls;
        ++rows;
    }
    const bool ok = bad == 0 && rows == c.iterations && static_cast<long>(records.size()) == c.iterations;
    return {ok, (Detail() << records.size() << " steps, " << rows << " CSV rows, " << bad << " violations").str()};
}

TrainConfig overfit_config() {
    TrainConfig c;
    c.iterations = kOverfitIterations;
    c.batch_size = kOverfitBatch;
    c.seed = 7;
    c.label_count = 4;
    c.input_size = 224;
    c.width_divisor = kOverfitDivisor;
    c.weights.adversarial = 0.0;
    c.adam.alpha = kOverfitAlpha;
    c.example.augment = false;
    c.example.feature = FeaturePolicy::Palette;
    return c;
}

struct OverfitRun {
    std::unique_ptr<Trainer> trainer;
    std::vector<LossRecord> records;
    double seconds = 0.0;
};

Outcome overfit(OverfitRun& run) {
    const auto t0 = std::chrono::steady_clock::now();
    run.trainer = std::make_unique<Trainer>(overfit_config(), testsupport::toy_dataset());
    for (int i = 0; i < kOverfitIterations; ++i) run.records.push_back(run.trainer->step());
    run.seconds = seconds_since(t0);

    Trainer repeat(overfit_config(), testsupport::toy_dataset());
    int diverged = 0;
    for (int i = 0; i < kDeterminismPrefix; ++i) {
        const LossRecord r = repeat.step();
        diverged += r.loss.mse != run.records[i].loss.mse || r.loss.total != run.records[i].loss.total;
    }
    const double first = run.records.front().loss.mse, last = run.records.back().loss.mse;
    const double ratio = last / first;

    // Mean MSE over consecutive 50-iteration windows.
    std::vector<double> windows;
    for (int w = 0; w + 50 <= kOverfitIterations; w += 50) {
        double s = 0.0;
        for (int i = w; i < w + 50; ++i) s += run.records[i].loss.mse;
        windows.push_back(s / 50.0);
    }
    int rises = 0;
    for (std::size_t i = 1; i < windows.size(); ++i) rises += windows[i] > windows[i - 1];

    const bool ok = ratio <= kOverfitRatio && diverged == 0 && run.seconds <= kOverfitSeconds;
    return {ok, (Detail() << "MSE " << first << " -> " << last << " (" << 100.0 * ratio << "% <= "
                          << 100.0 * kOverfitRatio << "%), repeat of first " << kDeterminismPrefix << " steps "
                          << (diverged == 0 ? "identical" : "DIFFERS") << ", 50-step window means rose " << rises
                          << " of " << windows.size() - 1 << " times, " << run.seconds << " s (<= " << kOverfitSeconds
                          << ")")
                    .str()};
}

double mean_a(const RasterImage& rgb, int x0, int y0, int x1, int y1) {
    const RasterImage lab = rgb_to_lab(rgb);
    double s = 0.0;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) s += lab.floats()[lab.offset(x, y) + 1];
    }
    return s / ((x1 - x0) * (y1 - y0));
}

Outcome conditioning(OverfitRun& run) {
    if (!run.trainer) return {false, "overfit harness did not run"};
    const ColorizationModel& model = run.trainer->generator();
    const RasterImage panel = testsupport::toy_drawing(0, testsupport::kToyRed);
    const ColorFeature red = binarize_palette(extract_histogram(testsupport::toy_drawing(0, testsupport::kToyRed)));
    const ColorFeature blue = binarize_palette(extract_histogram(testsupport::toy_drawing(0, testsupport::kToyBlue)));
    const RasterImage out_red = colorize_panel({panel, red, {}, {}}, model);
    const RasterImage out_blue = colorize_panel({panel, blue, {}, {}}, model);
    const RasterImage again = colorize_panel({panel, red, {}, {}}, model);
    // Interior of the shape, away from the outline.
    const double a_red = mean_a(out_red, 100, 100, 156, 156), a_blue = mean_a(out_blue, 100, 100, 156, 156);
    const bool identical = again == out_red;
    // Red has the larger a*; the blue fill of the toy set sits much lower.
    const bool ok = a_red > a_blue && identical;
    return {ok, (Detail() << "mean a* red palette " << a_red << ", blue palette " << a_blue
                          << ", same palette twice " << (identical ? "byte-identical" : "DIFFERS"))
                    .str()};
}

Outcome dot_statistics() {
    const RasterImage target = rgb_to_lab(testsupport::toy_drawing(1, testsupport::kToyBlue, 64));
    std::array<int, kMaxDots + 1> counts{};
    const int draws = 16000;
    int chroma_errors = 0, too_many = 0;
    double worst = 0.0;
    for (int s = 0; s < draws; ++s) {
        const auto dots = synthesize_dots(target, static_cast<std::uint64_t>(s));
        ++counts[dots.size()];
        for (const auto& d : dots) {
            const auto o = target.offset(d.x, d.y);
            chroma_errors += d.a != target.floats()[o + 1] || d.b != target.floats()[o + 2];
        }
        if (s % 16 == 0) {
            nn::Tensor x({1, 3, 64, 64});
            write_model_input(x, 0, binarize(lab_to_rgb(target)), dots);
            int nonzero = 0;
            for (std::size_t p = 0; p < 64 * 64; ++p) nonzero += x[64 * 64 + p] != 0.0f || x[2 * 64 * 64 + p] != 0.0f;
            too_many += nonzero > kMaxDots;
        }
    }
    for (int k = 0; k <= kMaxDots; ++k) worst = std::max(worst, std::abs(counts[k] / double(draws) - 1.0 / 16.0));
    const bool ok = worst <= kDotFrequencyTolerance && chroma_errors == 0 && too_many == 0;
    return {ok, (Detail() << draws << " draws, max |freq - 1/16| " << worst << " (<= " << kDotFrequencyTolerance
                          << "), " << chroma_errors << " chroma mismatches, " << too_many
                          << " inputs over 15 dot pixels")
                    .str()};
}

Outcome segmentation() {
    const auto t0 = std::chrono::steady_clock::now();
    int pages = 0, wrong_counts = 0, low = 0;
    double min_iou = 1.0;
    for (const auto& [name, page] : testsupport::grid_corpus()) {
        ++pages;
        const PageLayout layout = segment_page(binarize(page.page));
        if (layout.panels.size() != page.panels.size()) {
            ++wrong_counts;
            continue;
        }
        for (std::size_t i = 0; i < layout.panels.size(); ++i) {
            const double iou = intersection_over_union(layout.panels[i], page.panels[i]);
            min_iou = std::min(min_iou, iou);
            low += iou < kSegmentIoU;
        }
    }
    const double t = seconds_since(t0);
    const bool ok = wrong_counts == 0 && low == 0 && t < kSegmentSeconds;
    return {ok, (Detail() << pages << " pages, " << wrong_counts << " wrong panel counts, min IoU " << min_iou
                          << " (>= " << kSegmentIoU << "), " << t << " s (< " << kSegmentSeconds << ")")
                    .str()};
}

Outcome page_round_trip() {
    const PanelColorizer identity = [](const ColorizeRequest& r) { return r.panel; };
    const PanelUpscaler nearest = [](const RasterImage& img) {
        return resize(img, 2 * img.width(), 2 * img.height(), ResizeMethod::Nearest);
    };
    const ColorizationModel model(testsupport::tiny_config(64, 16, 12));
    const auto sr = SRModel::identity(16, 1);
    int mismatched = 0, wrong_size = 0, ink_errors = 0, pages = 0;
    auto pages_to_check = testsupport::grid_corpus();
    pages_to_check.emplace_back("blank", testsupport::SyntheticPage{RasterImage::filled_rgb(200, 150, {255, 255, 255}), {}});
    for (const auto& [name, page] : pages_to_check) {
        ++pages;
        const RasterImage mono = binarize(page.page);
        const PageLayout layout = segment_page(mono);
        const RasterImage rendered = mono_to_rgb(mono);
        mismatched += restore_layout(mono, layout, crop_panels(rendered, layout)) != rendered;

        PageJob job;
        job.page = page.page;
        job.default_feature = extract_histogram(testsupport::toy_drawing(0, testsupport::kToyRed, 32));
        const PageResult id = colorize_page(job, identity, nearest);
        mismatched += id.page != nearest(rendered);

        const PageResult real = colorize_page(job, model, *sr);
        for (const RasterImage* out : {&id.page, &real.page}) {
            wrong_size += out->width() != 2 * page.page.width() || out->height() != 2 * page.page.height();
            if (out->width() != 2 * mono.width()) continue;
            for (int y = 0; y < out->height(); ++y) {
                for (int x = 0; x < out->width(); ++x) {
                    if (mono.bytes()[mono.offset(x / 2, y / 2)] != 0) continue;
                    const auto o = out->offset(x, y);
                    ink_errors += out->bytes()[o] | out->bytes()[o + 1] | out->bytes()[o + 2];
                }
            }
        }
    }
    const bool ok = mismatched == 0 && wrong_size == 0 && ink_errors == 0;
    return {ok, (Detail() << pages << " pages, " << mismatched << " round-trip mismatches, " << wrong_size
                          << " outputs not at 2x, " << ink_errors << " non-black ink pixels")
                    .str()};
}

Outcome checkpoint_round_trip(const fs::path& dir, OverfitRun& run) {
    const ColorizationModel fresh(testsupport::tiny_config(224, 16, 5));
    const ColorizationModel& trained = run.trainer ? run.trainer->generator() : fresh;
    trained.save(dir / "colorizer");
    const auto loaded = ColorizationModel::load(dir / "colorizer");

    std::mt19937_64 rng(1);
    nn::Tensor x({2, 3, 224, 224}), f({2, kFeatureBins});
    for (auto& v : x.data()) v = std::bernoulli_distribution(0.7)(rng) ? 1.0f : 0.0f;
    write_feature(f, 0, extract_histogram(testsupport::toy_drawing(0, testsupport::kToyRed, 32)));
    write_feature(f, 1, binarize_palette(extract_histogram(testsupport::toy_drawing(1, testsupport::kToyBlue, 32))));
    const auto a = trained.infer(x, f), b = loaded->infer(x, f);
    const bool colorizer = a.lab.same_as(b.lab) && a.logits.same_as(b.logits);

    const SRModel sr(16, 8);
    sr.save(dir / "sr");
    nn::Tensor lr({1, 3, 32, 32});
    for (auto& v : lr.data()) v = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    const bool super = SRModel::load(dir / "sr")->infer(lr).same_as(sr.infer(lr));
    return {colorizer && super, (Detail() << "colorizer outputs " << (colorizer ? "bitwise identical" : "DIFFER")
                                          << ", super-resolution outputs " << (super ? "bitwise identical" : "DIFFER"))
                                    .str()};
}

}  // namespace

int main() {
    const fs::path dir = testsupport::temp_dir("acceptance");
    OverfitRun run;
    struct Criterion {
        const char* name;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {"color math", color_math},
        {"otsu oracle", otsu},
        {"gradient checks", gradients},
        {"shape ledger", shape_ledger},
        {"loss identity", [&] { return loss_identity(dir); }},
        {"overfit harness", [&] { return overfit(run); }},
        {"conditioning sensitivity", [&] { return conditioning(run); }},
        {"dot synthesis statistics", dot_statistics},
        {"segmentation oracle", segmentation},
        {"page round trip", page_round_trip},
        {"checkpoint round trip", [&] { return checkpoint_round_trip(dir, run); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
