#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gazevqa {

struct BoundingBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const BoundingBox&) const = default;

    bool within(int image_w, int image_h) const {
        return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= image_w && y + h <= image_h;
    }
};

// 8-bit RGB raster, row-major, origin at the top-left corner.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb; // width * height * 3

    std::uint8_t& at(int x, int y, int c) {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

Image make_image(int width, int height, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

// Pixel-exact subimage. Throws ValidationError when the box leaves the image.
Image crop(const Image& img, const BoundingBox& box);

// Binary PPM (P6, maxval 255).
Image load_ppm(const std::filesystem::path& path);
void save_ppm(const Image& img, const std::filesystem::path& path);

} // namespace gazevqa
