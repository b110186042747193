#include <doctest.h>

#include "gazevqa/errors.hpp"
#include "gazevqa/heatmap.hpp"
#include "gazevqa/rng.hpp"

#include "oracles.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

using namespace gazevqa;

namespace {

Heatmap make_heatmap(int w, int h, float fill) {
    Heatmap hm;
    hm.width = w;
    hm.height = h;
    hm.values.assign(static_cast<std::size_t>(w) * h, fill);
    return hm;
}

} // namespace

TEST_SUITE("gaze_roi") {

TEST_CASE("binarize is strictly greater-than") {
    CHECK(binarize(make_heatmap(3, 3, -1.0f)).bits == std::vector<std::uint8_t>(9, 0));
    CHECK(binarize(make_heatmap(3, 3, 1.0f)).bits == std::vector<std::uint8_t>(9, 1));
    // exactly 0 does not set the bit
    CHECK(binarize(make_heatmap(2, 2, 0.0f)).bits == std::vector<std::uint8_t>(4, 0));
    // custom threshold
    Heatmap h = make_heatmap(1, 2, 0.5f);
    h.values[1] = 0.6f;
    const BinaryMask m = binarize(h, 0.5f);
    CHECK_FALSE(m.at(0, 0));
    CHECK(m.at(0, 1));
}

TEST_CASE("binarize rejects non-finite values") {
    Heatmap h = make_heatmap(2, 2, 0.0f);
    h.values[3] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(binarize(h), ValidationError);
    h.values[3] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(binarize(h), ValidationError);
}

TEST_CASE("empty mask falls back to the full image box") {
    const BinaryMask m = binarize(make_heatmap(10, 10, -1.0f));
    CHECK(extract_roi(m, 10, 10) == BoundingBox{0, 0, 10, 10});
    // fallback also applies when mask and image resolutions differ
    CHECK(extract_roi(m, 64, 48) == BoundingBox{0, 0, 64, 48});
}

TEST_CASE("single pixel component") {
    Heatmap h = make_heatmap(10, 10, -1.0f);
    h.at(5, 3) = 2.0f; // col 5, row 3
    const BoundingBox box = extract_roi(binarize(h), 10, 10);
    CHECK(box == BoundingBox{5, 3, 1, 1});
}

TEST_CASE("largest of two components wins") {
    Heatmap h = make_heatmap(12, 12, -1.0f);
    // 4-pixel blob near the origin
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            h.at(x, y) = 1.0f;
        }
    }
    // 9-pixel blob lower right
    for (int y = 7; y < 10; ++y) {
        for (int x = 6; x < 9; ++x) {
            h.at(x, y) = 1.0f;
        }
    }
    const BinaryMask m = binarize(h);
    const BoundingBox expected = oracles::roi(m, 12, 12);
    CHECK(expected == BoundingBox{6, 7, 3, 3}); // oracle agrees with the constructed blob
    CHECK(extract_roi(m, 12, 12) == expected);
}

TEST_CASE("area ties go to the first component in scan order") {
    Heatmap h = make_heatmap(9, 9, -1.0f);
    h.at(7, 1) = 1.0f; // appears first in row-major order (row 1)
    h.at(1, 5) = 1.0f; // second component, row 5
    const BinaryMask m = binarize(h);
    const BoundingBox box = extract_roi(m, 9, 9);
    CHECK(box == BoundingBox{7, 1, 1, 1});
    CHECK(box == oracles::roi(m, 9, 9));
}

TEST_CASE("diagonal pixels are 8-connected") {
    Heatmap h = make_heatmap(6, 6, -1.0f);
    h.at(1, 1) = 1.0f;
    h.at(2, 2) = 1.0f;
    h.at(3, 3) = 1.0f;
    h.at(5, 0) = 1.0f; // separate singleton
    const BoundingBox box = extract_roi(binarize(h), 6, 6);
    CHECK(box == BoundingBox{1, 1, 3, 3});
}

TEST_CASE("random masks agree with the brute-force oracle") {
    RandomSource rng(0xA042);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const double density = 0.1 + 0.1 * (trial % 6);
        Heatmap h = make_heatmap(16, 16, 0.0f);
        for (auto& v : h.values) {
            v = rng.uniform() < density ? 1.0f : -1.0f;
        }
        const BinaryMask m = binarize(h);
        CHECK(extract_roi(m, 16, 16) == oracles::roi(m, 16, 16));
        ++checked;
    }
    CHECK(checked == 60);
}

TEST_CASE("roi always lies within bounds and has positive area") {
    RandomSource rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        Heatmap h = make_heatmap(8, 8, 0.0f);
        for (auto& v : h.values) {
            v = static_cast<float>(rng.uniform(-1.0, 1.0));
        }
        const BoundingBox box = extract_roi(binarize(h), 32, 24);
        CHECK(box.w > 0);
        CHECK(box.h > 0);
        CHECK(box.x >= 0);
        CHECK(box.y >= 0);
        CHECK(box.x + box.w <= 32);
        CHECK(box.y + box.h <= 24);
    }
}

TEST_CASE("negating a positive heatmap yields the fallback box end-to-end") {
    Heatmap h = make_heatmap(16, 16, 0.75f);
    for (auto& v : h.values) {
        v = -v;
    }
    CHECK(extract_roi(binarize(h), 40, 30) == BoundingBox{0, 0, 40, 30});
}

TEST_CASE("integer-factor rescale scales the box") {
    RandomSource rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Heatmap h = make_heatmap(8, 8, 0.0f);
        for (auto& v : h.values) {
            v = rng.uniform() < 0.3 ? 1.0f : -1.0f;
        }
        const BinaryMask m = binarize(h);
        const BoundingBox base = extract_roi(m, 8, 8);
        for (const int k : {2, 3, 4}) {
            const BoundingBox scaled = extract_roi(m, 8 * k, 8 * k);
            CHECK(scaled.x == base.x * k);
            CHECK(scaled.y == base.y * k);
            CHECK(scaled.w == base.w * k);
            CHECK(scaled.h == base.h * k);
        }
    }
}

TEST_CASE("crop identity and pixel exactness") {
    Image img = make_image(5, 5);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) {
            img.at(x, y, 0) = static_cast<std::uint8_t>(10 * y + x);
            img.at(x, y, 1) = static_cast<std::uint8_t>(100 + x);
            img.at(x, y, 2) = static_cast<std::uint8_t>(200 - y);
        }
    }
    SUBCASE("full-image box returns an identical image") {
        const Image c = crop(img, BoundingBox{0, 0, 5, 5});
        CHECK(c.rgb == img.rgb);
    }
    SUBCASE("1x1 box at the origin") {
        const Image c = crop(img, BoundingBox{0, 0, 1, 1});
        CHECK(c.width == 1);
        CHECK(c.height == 1);
        CHECK(c.at(0, 0, 0) == 0);
        CHECK(c.at(0, 0, 1) == 100);
    }
    SUBCASE("interior box checked pixelwise against index arithmetic") {
        const BoundingBox box{2, 1, 3, 2};
        const Image c = crop(img, box);
        REQUIRE(c.width == 3);
        REQUIRE(c.height == 2);
        for (int y = 0; y < c.height; ++y) {
            for (int x = 0; x < c.width; ++x) {
                for (int ch = 0; ch < 3; ++ch) {
                    CHECK(c.at(x, y, ch) == img.at(box.x + x, box.y + y, ch));
                }
            }
        }
    }
    SUBCASE("out-of-bounds boxes are rejected") {
        CHECK_THROWS_AS(crop(img, BoundingBox{3, 3, 3, 3}), ValidationError);
        CHECK_THROWS_AS(crop(img, BoundingBox{0, 0, 0, 1}), ValidationError);
        CHECK_THROWS_AS(crop(img, BoundingBox{-1, 0, 2, 2}), ValidationError);
    }
}

TEST_CASE("heatmap file round trip is bit exact") {
    RandomSource rng(5);
    Heatmap h = make_heatmap(16, 16, 0.0f);
    for (auto& v : h.values) {
        v = static_cast<float>(rng.uniform(-2.0, 2.0));
    }
    const auto path = std::filesystem::temp_directory_path() / "roundtrip.gvhm";
    save_heatmap(h, path);
    const Heatmap r = load_heatmap(path);
    CHECK(r.width == h.width);
    CHECK(r.height == h.height);
    REQUIRE(r.values.size() == h.values.size());
    for (std::size_t i = 0; i < h.values.size(); ++i) {
        CHECK(std::memcmp(&r.values[i], &h.values[i], sizeof(float)) == 0);
    }
}

TEST_CASE("heatmap format errors") {
    const auto dir = std::filesystem::temp_directory_path();
    SUBCASE("bad magic") {
        const auto path = dir / "badmagic.gvhm";
        std::ofstream(path, std::ios::binary) << "NOPE1234";
        CHECK_THROWS_AS(load_heatmap(path), FormatError);
    }
    SUBCASE("truncated payload") {
        Heatmap h = make_heatmap(4, 4, 1.0f);
        const auto path = dir / "trunc.gvhm";
        save_heatmap(h, path);
        // drop the last value: header says 4x4 but only 15 floats remain
        const auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size - 4);
        CHECK_THROWS_AS(load_heatmap(path), FormatError);
    }
    SUBCASE("trailing bytes beyond the header size") {
        Heatmap h = make_heatmap(4, 4, 1.0f);
        const auto path = dir / "extra.gvhm";
        save_heatmap(h, path);
        std::ofstream app(path, std::ios::binary | std::ios::app);
        const float extra = 0.0f;
        app.write(reinterpret_cast<const char*>(&extra), 4);
        app.close();
        CHECK_THROWS_AS(load_heatmap(path), FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_heatmap(dir / "no_such_file.gvhm"), FormatError);
    }
}

} // TEST_SUITE
