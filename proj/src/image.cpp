#include "gazevqa/image.hpp"

#include "gazevqa/errors.hpp"

#include <cstring>
#include <fstream>

namespace gazevqa {

Image make_image(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (width <= 0 || height <= 0) {
        throw ValidationError("image dimensions must be positive");
    }
    Image img;
    img.width = width;
    img.height = height;
    img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = r;
        img.rgb[i + 1] = g;
        img.rgb[i + 2] = b;
    }
    return img;
}

Image crop(const Image& img, const BoundingBox& box) {
    if (!box.within(img.width, img.height)) {
        throw ValidationError("crop box (" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                              std::to_string(box.w) + "," + std::to_string(box.h) + ") out of bounds for " +
                              std::to_string(img.width) + "x" + std::to_string(img.height) + " image");
    }
    Image out;
    out.width = box.w;
    out.height = box.h;
    out.rgb.resize(static_cast<std::size_t>(box.w) * box.h * 3);
    for (int y = 0; y < box.h; ++y) {
        const std::uint8_t* src = &img.rgb[((static_cast<std::size_t>(box.y) + y) * img.width + box.x) * 3];
        std::memcpy(&out.rgb[static_cast<std::size_t>(y) * box.w * 3], src, static_cast<std::size_t>(box.w) * 3);
    }
    return out;
}

namespace {

int read_ppm_token(std::istream& in) {
    // skips whitespace and '#' comments between header fields
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') {
                c = in.get();
            }
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) {
        throw FormatError("malformed PPM header");
    }
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

} // namespace

Image load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open image file: " + path.string());
    }
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '6') {
        throw FormatError("not a binary PPM (P6) file: " + path.string());
    }
    const int width = read_ppm_token(in);
    const int height = read_ppm_token(in);
    const int maxval = read_ppm_token(in);
    if (width <= 0 || height <= 0 || maxval != 255) {
        throw FormatError("unsupported PPM header in " + path.string());
    }
    Image img;
    img.width = width;
    img.height = height;
    img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
        throw FormatError("truncated PPM payload in " + path.string());
    }
    return img;
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write image file: " + path.string());
    }
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!out) {
        throw FormatError("failed writing PPM payload to " + path.string());
    }
}

} // namespace gazevqa
