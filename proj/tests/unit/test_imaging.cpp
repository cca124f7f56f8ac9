#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "obr/error.hpp"
#include "obr/imaging.hpp"
#include "obr/png_io.hpp"

using namespace obr;

namespace {

RasterImage random_image(int w, int h, int channels, std::mt19937& gen, int lo = 0, int hi = 255)
{
    RasterImage img(w, h, channels);
    std::uniform_int_distribution<int> u(lo, hi);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(u(gen));
    return img;
}

struct Stats {
    double mean, std;
};

Stats stats(std::span<const float> v)
{
    double m = 0;
    for (float x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (float x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace

TEST(Normalize, ConstantImageIsZero)
{
    const RasterImage img(7, 5, 1, 128);
    const auto out = normalize(img);
    for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Normalize, TwoPixelChannel)
{
    RasterImage img(2, 1, 1);
    img.at(0, 0) = 0;
    img.at(1, 0) = 255;
    const auto out = normalize(img);
    EXPECT_NEAR(out.at(0, 0, 0), -1.0 / 3.0, 1e-7);
    EXPECT_NEAR(out.at(0, 0, 1), 1.0 / 3.0, 1e-7);
}

TEST(Normalize, MeanZeroAndStdThird)
{
    std::mt19937 gen(1);
    for (int i = 0; i < 20; ++i) {
        const int channels = i % 2 ? 3 : 1;
        const RasterImage img = random_image(31 + i, 17 + 2 * i, channels, gen);
        const auto out = normalize(img);
        for (int c = 0; c < channels; ++c) {
            const Stats s = stats(out.channel(c));
            EXPECT_NEAR(s.mean, 0.0, 1e-6);
            EXPECT_NEAR(s.std, 1.0 / 3.0, 1e-6);
        }
    }
}

TEST(Normalize, LowContrastUsesClampedDenominator)
{
    std::mt19937 gen(2);
    const RasterImage img = random_image(40, 30, 1, gen, 100, 110);
    double m = 0, s = 0;
    for (auto p : img.pixels()) m += p;
    m /= img.pixels().size();
    for (auto p : img.pixels()) s += (p - m) * (p - m);
    s = std::sqrt(s / img.pixels().size());
    ASSERT_LT(s, 25.5);
    const auto out = normalize(img);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 40; ++x) EXPECT_NEAR(out.at(0, y, x), (img.at(x, y) - m) / 76.5, 1e-6);
}

TEST(Resize, HalvesA4Scan)
{
    std::mt19937 gen(3);
    const RasterImage img = random_image(1728, 2300, 1, gen);
    const RasterImage out = resize(img, 864, 1150);
    ASSERT_EQ(out.width(), 864);
    ASSERT_EQ(out.height(), 1150);
    // At an exact 2x reduction every output center sits between four source pixels.
    for (int y = 0; y < 1150; y += 37)
        for (int x = 0; x < 864; x += 29) {
            const double avg = (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) + img.at(2 * x, 2 * y + 1) +
                                img.at(2 * x + 1, 2 * y + 1)) /
                               4.0;
            EXPECT_EQ(out.at(x, y), static_cast<int>(std::floor(avg + 0.5)));
        }
}

TEST(Resize, IdentityAndCheckerboard)
{
    std::mt19937 gen(4);
    const RasterImage img = random_image(13, 9, 3, gen);
    EXPECT_EQ(resize(img, 13, 9), img);
    RasterImage board(2, 2, 1);
    board.at(0, 0) = 0;
    board.at(1, 0) = 255;
    board.at(0, 1) = 255;
    board.at(1, 1) = 0;
    const RasterImage one = resize(board, 1, 1);
    EXPECT_EQ(one.at(0, 0), 128);  // 127.5 rounds half up
}

TEST(Transform, IdentityKeepsEverything)
{
    std::mt19937 gen(5);
    const RasterImage img = random_image(50, 40, 1, gen);
    const std::vector<Box> boxes{{3, 4, 23, 36}};
    const auto out = apply_transform(img, GeometricTransform{}, boxes);
    EXPECT_EQ(out.image, img);
    ASSERT_EQ(out.boxes.size(), 1u);
    EXPECT_EQ(out.boxes[0], boxes[0]);
}

TEST(Transform, MirrorBox)
{
    const RasterImage img(100, 60, 1, 90);
    GeometricTransform t;
    t.mirror = true;
    const std::vector<Box> boxes{{10, 10, 30, 42}};
    const auto out = apply_transform(img, t, boxes);
    EXPECT_EQ(out.boxes[0], (Box{70, 10, 90, 42}));
}

TEST(Transform, MirrorFlipsPixels)
{
    std::mt19937 gen(6);
    const RasterImage img = random_image(20, 10, 3, gen);
    GeometricTransform t;
    t.mirror = true;
    const auto out = apply_transform(img, t, {});
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 20; ++x)
            for (int c = 0; c < 3; ++c) EXPECT_EQ(out.image.at(x, y, c), img.at(19 - x, y, c));
}

TEST(Transform, RotationMatchesCornerMapping)
{
    const RasterImage img(200, 100, 1, 100);
    GeometricTransform t;
    t.rotation_deg = 5;
    const Box box{40, 30, 60, 62};
    const auto out = apply_transform(img, t, std::vector<Box>{box});
    const double r = 5 * std::numbers::pi / 180, c = std::cos(r), s = std::sin(r);
    double l = 1e9, tp = 1e9, rt = -1e9, bt = -1e9;
    for (double x : {box.left, box.right})
        for (double y : {box.top, box.bottom}) {
            const double dx = x - 100, dy = y - 50;
            const double X = 100 + c * dx - s * dy, Y = 50 + s * dx + c * dy;
            l = std::min(l, X);
            rt = std::max(rt, X);
            tp = std::min(tp, Y);
            bt = std::max(bt, Y);
        }
    const Box& got = out.boxes[0];
    EXPECT_NEAR(got.left, l, 1e-9);
    EXPECT_NEAR(got.top, tp, 1e-9);
    EXPECT_NEAR(got.right, rt, 1e-9);
    EXPECT_NEAR(got.bottom, bt, 1e-9);
    EXPECT_GT(got.area(), box.area());
}

TEST(Transform, InverseRecoversCenters)
{
    std::mt19937 gen(7);
    std::uniform_real_distribution<double> u(0, 1);
    const RasterImage img(300, 200, 1, 120);
    for (int i = 0; i < 200; ++i) {
        GeometricTransform t;
        t.scale_x = 0.6 + u(gen);
        t.scale_y = t.scale_x * (0.9 + 0.2 * u(gen));
        t.rotation_deg = -5 + 10 * u(gen);
        t.mirror = u(gen) < 0.5;
        t.crop_x = std::round(40 * u(gen));
        t.crop_y = std::round(40 * u(gen));
        const Box b = Box::from_center(30 + 240 * u(gen), 30 + 140 * u(gen), 20, 32);
        const auto map = t.matrix(300, 200);
        const Box moved = transform_box(map, b);
        const Affine2D inv = map.inverse();
        EXPECT_NEAR(inv.apply_x(moved.center_x(), moved.center_y()), b.center_x(), 1.0);
        EXPECT_NEAR(inv.apply_y(moved.center_x(), moved.center_y()), b.center_y(), 1.0);
    }
}

TEST(Transform, FillIsChannelMean)
{
    RasterImage img(10, 10, 1, 0);
    for (int y = 0; y < 10; ++y)
        for (int x = 5; x < 10; ++x) img.at(x, y) = 200;  // mean 100
    GeometricTransform t;
    t.crop_x = -20;
    t.out_width = 40;
    t.out_height = 10;
    const auto out = apply_transform(img, t, {});
    EXPECT_EQ(out.image.at(0, 5), 100);
    EXPECT_EQ(out.image.at(39, 5), 100);
    EXPECT_EQ(out.image.at(27, 5), 200);
}

TEST(Transform, FullyOutOfFrameFails)
{
    const RasterImage img(10, 10, 1, 0);
    GeometricTransform t;
    t.crop_x = 500;
    t.out_width = 16;
    t.out_height = 16;
    EXPECT_THROW(apply_transform(img, t, {}), InputError);
}

TEST(Crop, BoxRetention)
{
    const RasterImage img(100, 100, 1, 50);
    const std::vector<Box> boxes{
        {20, 20, 30, 30},  // inside
        {80, 80, 90, 90},  // outside
        {56, 20, 66, 30},  // 4 of 10 columns inside a 60-wide window
        {54, 40, 64, 50},  // 6 of 10 columns inside
    };
    const CropResult r = crop(img, 0, 0, 60, 60, boxes);
    ASSERT_EQ(r.boxes.size(), 2u);
    EXPECT_EQ(r.boxes[0].source_index, 0u);
    EXPECT_EQ(r.boxes[0].box, boxes[0]);
    EXPECT_EQ(r.boxes[1].source_index, 3u);
    EXPECT_EQ(r.boxes[1].box, (Box{54, 40, 60, 50}));

    const CropResult shifted = crop(img, 10, 5, 40, 40, std::vector<Box>{boxes[0]});
    ASSERT_EQ(shifted.boxes.size(), 1u);
    EXPECT_EQ(shifted.boxes[0].box, (Box{10, 15, 20, 25}));
}

TEST(Crop, PadsWithMean)
{
    RasterImage img(4, 4, 1, 10);
    img.at(0, 0) = 170;  // mean 20
    const CropResult r = crop(img, -2, -2, 8, 8, {});
    EXPECT_EQ(r.image.at(0, 0), 20);
    EXPECT_EQ(r.image.at(2, 2), 170);
    EXPECT_THROW(crop(img, 10, 10, 4, 4, {}), InputError);
}

TEST(Png, LosslessRoundTrip)
{
    std::mt19937 gen(8);
    std::filesystem::create_directories(OBR_TEST_TMP);
    for (int channels : {1, 3}) {
        const RasterImage img = random_image(37, 23, channels, gen);
        const auto path = std::filesystem::path(OBR_TEST_TMP) / ("roundtrip" + std::to_string(channels) + ".png");
        write_png(path, img);
        EXPECT_EQ(read_png(path), img);
    }
    EXPECT_THROW(read_png(std::filesystem::path(OBR_TEST_TMP) / "missing.png"), InputError);
}
