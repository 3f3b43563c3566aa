#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "zoomiq/image.hpp"
#include "zoomiq/png_io.hpp"
#include "zoomiq/rng.hpp"

using namespace zoomiq;
using img::ImageF32;
using img::ImageU8;

namespace {

ImageF32 random_image(int h, int w, Rng& rng) {
    ImageF32 out(h, w);
    for (auto& v : out.data) v = float(rng.uniform());
    return out;
}

std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("zoomiq_vision_" + tag);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("resize at current short side is bit-identical") {
    Rng rng(1);
    auto im = random_image(13, 21, rng);
    auto out = img::resize_short_side(im, 13);
    CHECK(out.height == 13);
    CHECK(out.width == 21);
    CHECK(out.data == im.data);
}

TEST_CASE("resize preserves aspect ratio") {
    ImageF32 im(384, 512); // 512 wide, 384 high
    auto out = img::resize_short_side(im, 768);
    CHECK(out.height == 768);
    CHECK(out.width == 1024);

    auto down = img::resize_short_side(im, 224);
    CHECK(down.height == 224);
    CHECK(down.width == int(std::lround(512.0 * 224 / 384)));
}

TEST_CASE("2x2 upscale matches the half-pixel bilinear formula") {
    // plane value f(y,x) = 2y + x is reproduced exactly by bilinear sampling,
    // so expected = 2*sy + sx at the clamped source coordinates.
    ImageF32 im(2, 2);
    for (int c = 0; c < 3; ++c) {
        im.at(c, 0, 0) = 0;
        im.at(c, 0, 1) = 1;
        im.at(c, 1, 0) = 2;
        im.at(c, 1, 1) = 3;
    }
    auto out = img::resize_to(im, 4, 4);
    const double coords[4] = {0.0, 0.25, 0.75, 1.0}; // clamp((d+0.5)*0.5-0.5, 0, 1)
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                CHECK(out.at(c, y, x) == doctest::Approx(2 * coords[y] + coords[x]).epsilon(1e-6));
}

TEST_CASE("scale_by_factor dimensions and identity") {
    ImageF32 im(384, 512);
    auto half = img::scale_by_factor(im, 0.5);
    CHECK(half.height == 192);
    CHECK(half.width == 256);
    auto twice = img::scale_by_factor(im, 2.0);
    CHECK(twice.height == 768);
    CHECK(twice.width == 1024);

    Rng rng(2);
    auto r = random_image(9, 7, rng);
    auto same = img::scale_by_factor(r, 1.0);
    CHECK(same.data == r.data);

    CHECK_THROWS_AS(img::scale_by_factor(ImageF32(2, 2), 0.1), ContractViolation);
}

TEST_CASE("crop copies the exact rectangle") {
    Rng rng(3);
    auto im = random_image(10, 12, rng);
    auto full = img::crop(im, 0, 0, 12, 10);
    CHECK(full.data == im.data);

    auto one = img::crop(im, 0, 0, 1, 1);
    for (int c = 0; c < 3; ++c) CHECK(one.at(c, 0, 0) == im.at(c, 0, 0));

    auto r = img::crop(im, 3, 2, 5, 6);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 5; ++x) CHECK(r.at(c, y, x) == im.at(c, y + 2, x + 3));

    CHECK_THROWS_AS(img::crop(im, 8, 0, 5, 5), ContractViolation);
    CHECK_THROWS_AS(img::crop(im, 0, 8, 5, 5), ContractViolation);
}

TEST_CASE("transpose and hflip are involutions preserving the pixel multiset") {
    Rng rng(4);
    auto im = random_image(6, 9, rng);

    auto t = img::transpose_image(im);
    CHECK(t.height == 9);
    CHECK(t.width == 6);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x) CHECK(t.at(c, x, y) == im.at(c, y, x));
    CHECK(img::transpose_image(t).data == im.data);

    auto f = img::hflip(im);
    CHECK(img::hflip(f).data == im.data);

    auto sorted = [](std::vector<float> v) { std::sort(v.begin(), v.end()); return v; };
    CHECK(sorted(t.data) == sorted(im.data));
    CHECK(sorted(f.data) == sorted(im.data));
}

TEST_CASE("bilinear outputs stay inside the input range") {
    Rng rng(5);
    auto im = random_image(11, 17, rng);
    const float lo = *std::min_element(im.data.begin(), im.data.end());
    const float hi = *std::max_element(im.data.begin(), im.data.end());
    for (int target : {5, 23, 64}) {
        auto out = img::resize_short_side(im, target);
        for (float v : out.data) {
            CHECK(v >= lo - 1e-6f);
            CHECK(v <= hi + 1e-6f);
        }
    }
}

TEST_CASE("resize round trip reaches a fixed point at identical sizes") {
    Rng rng(6);
    auto im = random_image(12, 18, rng);
    auto up = img::resize_short_side(im, 30);
    auto back = img::resize_short_side(up, 12);
    // once a size matches, further resizes to that size change nothing
    auto again = img::resize_short_side(back, 12);
    CHECK(again.data == back.data);
}

TEST_CASE("normalize and denormalize") {
    ImageF32 im(2, 2);
    for (auto& v : im.data) v = 0.5f;
    auto t = img::normalize<float>(im);
    REQUIRE(t->shape == std::vector<int>({3, 2, 2}));
    for (float v : t->values) CHECK(v == doctest::Approx(0.f));

    for (auto& v : im.data) v = 1.0f;
    auto t2 = img::normalize<float>(im);
    for (float v : t2->values) CHECK(v == doctest::Approx(1.f));

    Rng rng(7);
    auto r = random_image(5, 4, rng);
    auto round = img::denormalize<float>(img::normalize<float>(r));
    for (std::size_t i = 0; i < r.data.size(); ++i)
        CHECK(round.data[i] == doctest::Approx(r.data[i]).epsilon(1e-7));

    CHECK_THROWS_AS(img::normalize<float>(r, {0.5, 0.5, 0.5}, {0.5, 0.0, 0.5}), ContractViolation);
}

TEST_CASE("png round trip is exact for 8-bit RGB") {
    auto dir = temp_dir("roundtrip");
    Rng rng(8);
    ImageU8 im;
    im.height = 19;
    im.width = 23;
    im.pixels.resize(std::size_t(3) * 19 * 23);
    for (auto& p : im.pixels) p = std::uint8_t(rng.uniform_int(0, 255));

    const auto path = dir / "rt.png";
    img::write_png(path, im);
    auto back = img::read_png(path);
    CHECK(back.height == im.height);
    CHECK(back.width == im.width);
    CHECK(back.pixels == im.pixels);
    std::filesystem::remove_all(dir);
}

TEST_CASE("alpha channels are dropped on read") {
    auto dir = temp_dir("alpha");
    const auto path = dir / "rgba.png";
    {
        // craft an RGBA file directly with libpng
        png_image image{};
        image.version = PNG_IMAGE_VERSION;
        image.width = 3;
        image.height = 2;
        image.format = PNG_FORMAT_RGBA;
        std::vector<std::uint8_t> rgba;
        for (int i = 0; i < 6; ++i) {
            rgba.push_back(std::uint8_t(10 * i));
            rgba.push_back(std::uint8_t(10 * i + 1));
            rgba.push_back(std::uint8_t(10 * i + 2));
            rgba.push_back(std::uint8_t(i % 2 ? 255 : 64));
        }
        REQUIRE(png_image_write_to_file(&image, path.string().c_str(), 0, rgba.data(), 0, nullptr) != 0);
    }
    auto im = img::read_png(path);
    CHECK(im.width == 3);
    CHECK(im.height == 2);
    CHECK(im.pixels.size() == 18);
    CHECK(im.at(0, 0, 0) == 0);
    CHECK(im.at(1, 2, 2) == 52);
    std::filesystem::remove_all(dir);
}

TEST_CASE("png read failures raise data errors") {
    auto dir = temp_dir("badpng");
    CHECK_THROWS_AS(img::read_png(dir / "missing.png"), DataError);

    const auto junk = dir / "junk.png";
    std::ofstream(junk) << "this is not a png";
    CHECK_THROWS_AS(img::read_png(junk), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("u8/f32 conversion quantizes symmetrically") {
    ImageU8 im;
    im.height = 1;
    im.width = 3;
    im.pixels = {0, 0, 0, 128, 128, 128, 255, 255, 255};
    auto f = img::to_f32(im);
    CHECK(f.at(0, 0, 0) == doctest::Approx(0.f));
    CHECK(f.at(0, 0, 1) == doctest::Approx(128.f / 255.f));
    CHECK(f.at(0, 0, 2) == doctest::Approx(1.f));
    auto back = img::to_u8(f);
    CHECK(back.pixels == im.pixels);
}
