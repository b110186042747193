#include "gazevqa/heatmap.hpp"

#include "gazevqa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace gazevqa {

BinaryMask binarize(const Heatmap& h, float threshold) {
    if (h.width <= 0 || h.height <= 0 ||
        h.values.size() != static_cast<std::size_t>(h.width) * h.height) {
        throw ValidationError("heatmap dimensions do not match its value count");
    }
    BinaryMask mask;
    mask.width = h.width;
    mask.height = h.height;
    mask.bits.resize(h.values.size());
    for (std::size_t i = 0; i < h.values.size(); ++i) {
        if (!std::isfinite(h.values[i])) {
            throw ValidationError("non-finite heatmap value at index " + std::to_string(i));
        }
        mask.bits[i] = h.values[i] > threshold ? 1 : 0;
    }
    return mask;
}

BinaryMask rescale_nearest(const BinaryMask& mask, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw ValidationError("rescale target dimensions must be positive");
    }
    if (mask.width == width && mask.height == height) {
        return mask;
    }
    BinaryMask out;
    out.width = width;
    out.height = height;
    out.bits.resize(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        const int sy = static_cast<int>(static_cast<std::int64_t>(y) * mask.height / height);
        for (int x = 0; x < width; ++x) {
            const int sx = static_cast<int>(static_cast<std::int64_t>(x) * mask.width / width);
            out.bits[static_cast<std::size_t>(y) * width + x] = mask.bits[static_cast<std::size_t>(sy) * mask.width + sx];
        }
    }
    return out;
}

BoundingBox extract_roi(const BinaryMask& mask, int image_w, int image_h) {
    if (image_w <= 0 || image_h <= 0) {
        throw ValidationError("image dimensions must be positive");
    }
    const BinaryMask m = rescale_nearest(mask, image_w, image_h);

    const int w = m.width;
    const int h = m.height;
    std::vector<std::uint8_t> seen(m.bits.size(), 0);

    long best_area = 0;
    std::size_t best_origin = m.bits.size(); // row-major index of the component's first pixel
    BoundingBox best{};

    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < m.bits.size(); ++start) {
        if (!m.bits[start] || seen[start]) {
            continue;
        }
        // flood fill one 8-connected component
        long area = 0;
        int min_x = w, min_y = h, max_x = -1, max_y = -1;
        stack.assign(1, start);
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t idx = stack.back();
            stack.pop_back();
            const int x = static_cast<int>(idx % w);
            const int y = static_cast<int>(idx / w);
            ++area;
            min_x = std::min(min_x, x);
            min_y = std::min(min_y, y);
            max_x = std::max(max_x, x);
            max_y = std::max(max_y, y);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) {
                        continue;
                    }
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
                        continue;
                    }
                    const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                    if (m.bits[nidx] && !seen[nidx]) {
                        seen[nidx] = 1;
                        stack.push_back(nidx);
                    }
                }
            }
        }
        // scan order guarantees `start` is the component's first row-major pixel
        if (area > best_area || (area == best_area && start < best_origin)) {
            best_area = area;
            best_origin = start;
            best = BoundingBox{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
        }
    }

    if (best_area == 0) {
        return BoundingBox{0, 0, image_w, image_h};
    }
    return best;
}

namespace {

constexpr char kHeatmapMagic[4] = {'G', 'V', 'H', 'M'};

std::uint32_t read_u32le(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (in.gcount() != 4) {
        throw FormatError("truncated heatmap header");
    }
    return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
           (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

void write_u32le(std::ostream& out, std::uint32_t v) {
    const unsigned char buf[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                                  static_cast<unsigned char>((v >> 16) & 0xFF),
                                  static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

static_assert(sizeof(float) == 4, "f32 serialization assumes 4-byte float");

} // namespace

Heatmap load_heatmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open heatmap file: " + path.string());
    }
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kHeatmapMagic, 4) != 0) {
        throw FormatError("bad heatmap magic in " + path.string());
    }
    Heatmap h;
    h.width = static_cast<int>(read_u32le(in));
    h.height = static_cast<int>(read_u32le(in));
    if (h.width <= 0 || h.height <= 0) {
        throw FormatError("invalid heatmap dimensions in " + path.string());
    }
    const std::size_t count = static_cast<std::size_t>(h.width) * h.height;
    h.values.resize(count);
    in.read(reinterpret_cast<char*>(h.values.data()), static_cast<std::streamsize>(count * 4));
    if (in.gcount() != static_cast<std::streamsize>(count * 4)) {
        throw FormatError("heatmap payload shorter than header in " + path.string());
    }
    in.peek();
    if (!in.eof()) {
        throw FormatError("heatmap payload longer than header in " + path.string());
    }
    return h;
}

void save_heatmap(const Heatmap& h, const std::filesystem::path& path) {
    if (h.width <= 0 || h.height <= 0 ||
        h.values.size() != static_cast<std::size_t>(h.width) * h.height) {
        throw ValidationError("heatmap dimensions do not match its value count");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write heatmap file: " + path.string());
    }
    out.write(kHeatmapMagic, 4);
    write_u32le(out, static_cast<std::uint32_t>(h.width));
    write_u32le(out, static_cast<std::uint32_t>(h.height));
    out.write(reinterpret_cast<const char*>(h.values.data()), static_cast<std::streamsize>(h.values.size() * 4));
    if (!out) {
        throw FormatError("failed writing heatmap payload to " + path.string());
    }
}

} // namespace gazevqa
