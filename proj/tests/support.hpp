#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mangacolor/colornet.hpp"
#include "mangacolor/nn/grad_check.hpp"
#include "mangacolor/panels.hpp"
#include "mangacolor/training.hpp"

namespace testsupport {

using namespace mangacolor;

/// Circle (kind 0) or square (kind 1) with a 3 px black outline and a solid
/// fill, centered on a white size x size canvas.
RasterImage toy_drawing(int kind, std::array<std::uint8_t, 3> fill, int size = 256);

inline constexpr std::array<std::uint8_t, 3> kToyRed{230, 40, 40};
inline constexpr std::array<std::uint8_t, 3> kToyBlue{0, 128, 255};

/// Red and blue circle and square, labels 0..3.
std::vector<DatasetItem> toy_dataset();

/// Black straight strokes, 1 to 3 px wide, on a white size x size canvas.
RasterImage line_drawing(std::uint64_t seed, int size = 128);

struct SyntheticPage {
    RasterImage page;                // RGB8
    std::vector<PanelRect> panels;   // ground truth in reading order
};

/// Rows of framed panels separated by white gutters. `rows[r]` lists the
/// relative widths of the panels in row r (left to right), `heights` the
/// relative row heights. Each panel gets a 2 px black frame and some ink
/// inside. Reading order of the returned rects is top to bottom, right to left.
SyntheticPage grid_page(int width, int height, const std::vector<std::vector<double>>& rows,
                        const std::vector<double>& heights, int gutter, int margin, std::uint64_t seed);

/// The synthetic corpus used for segmentation checks.
std::vector<std::pair<std::string, SyntheticPage>> grid_corpus();

/// A small colorization model that keeps tests fast.
ModelConfig tiny_config(int input_size = 64, int divisor = 16, std::uint64_t seed = 3);

struct NamedGradCheck {
    std::string name;
    nn::GradCheckResult result;
};

/// Finite-difference checks of every layer kernel, the loss functions, an
/// eval-mode conv block and a composed micro-model built from all of them.
std::vector<NamedGradCheck> run_grad_checks();

/// The same comparison on the train-mode conv block and the full colorizer,
/// discriminator and super-resolution models. Rounding noise through these
/// deeper float32 stacks is far larger than in the micro-model.
std::vector<NamedGradCheck> run_model_grad_checks();

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

/// FNV-1a of the raw samples.
std::uint64_t image_checksum(const RasterImage& img);

}  // namespace testsupport
