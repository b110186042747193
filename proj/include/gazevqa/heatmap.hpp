#pragma once

#include "gazevqa/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gazevqa {

// Gaze-target estimation output consumed as a precomputed input.
struct Heatmap {
    int width = 0;
    int height = 0;
    std::vector<float> values; // row-major, width * height

    float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; // row-major

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
};

// Bit set iff the score is strictly greater than the threshold. A score of
// exactly 0 under the default threshold therefore does not enter the RoI.
// Throws ValidationError on non-finite scores.
BinaryMask binarize(const Heatmap& h, float threshold = 0.0f);

BinaryMask rescale_nearest(const BinaryMask& mask, int width, int height);

// Bounding box of the largest 8-connected true component, in image
// coordinates (the mask is rescaled to image_size when resolutions differ).
// An empty mask falls back to the full-image box. Area ties go to the
// component whose first pixel comes first in row-major order.
BoundingBox extract_roi(const BinaryMask& mask, int image_w, int image_h);

// Heatmap file: "GVHM" magic, width/height as u32 little-endian, then
// width*height IEEE-754 f32 little-endian values, row-major.
Heatmap load_heatmap(const std::filesystem::path& path);
void save_heatmap(const Heatmap& h, const std::filesystem::path& path);

} // namespace gazevqa
