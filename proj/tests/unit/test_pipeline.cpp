#include <gtest/gtest.h>

#include "obr/pipeline.hpp"

using namespace obr;

namespace {

// A detector that predicts class 5 with zero deltas at every anchor.
Detector constant_detector()
{
    Detector det = build_reference_network(1);
    auto& net = det.network();
    const auto& head = net.layers().back();
    auto& w = net.parameters()[head.weight].value;
    auto& b = net.parameters()[head.bias].value;
    std::fill(w.begin(), w.end(), 0.0f);
    std::fill(b.begin(), b.end(), -10.0f);
    for (int k = 0; k < kBoxChannels; ++k) b[k] = 0;
    b[kBoxChannels + 4] = 10;
    return det;
}

RasterImage gradient_image(int w, int h)
{
    RasterImage img(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * 3) % 256);
    return img;
}

}  // namespace

TEST(Prepare, PadsWithZeros)
{
    NormalizedImage img(1, 20, 33, 0.5f);
    const auto padded = pad_to_stride(img);
    EXPECT_EQ(padded.height(), 32);
    EXPECT_EQ(padded.width(), 48);
    EXPECT_EQ(padded.at(0, 19, 32), 0.5f);
    EXPECT_EQ(padded.at(0, 20, 0), 0.0f);
    EXPECT_EQ(padded.at(0, 0, 33), 0.0f);
}

TEST(Prepare, A4PageAtInferenceWidth)
{
    const auto prepared = prepare_image(gradient_image(1728, 2300), 864, 1);
    EXPECT_EQ(prepared.input.width(), 864);
    EXPECT_EQ(prepared.input.height(), 1152);
    EXPECT_DOUBLE_EQ(prepared.scale_x, 0.5);
    EXPECT_DOUBLE_EQ(prepared.scale_y, 0.5);
    // The padding rows stay at the mean.
    EXPECT_EQ(prepared.input.at(0, 1151, 10), 0.0f);
    const auto rgb = prepare_image(gradient_image(100, 50), 0, 3);
    EXPECT_EQ(rgb.input.channels(), 3);
    EXPECT_EQ(rgb.input.width(), 112);
    EXPECT_EQ(rgb.input.height(), 64);
}

TEST(DetectPage, BoxesInSourceCoordinates)
{
    const Detector det = constant_detector();
    const auto dets = detect_page(det, gradient_image(192, 128), 96, 0.5);
    ASSERT_FALSE(dets.empty());
    EXPECT_EQ(dets[0].cls.value(), 5);
    // Anchor (0, 0) is [-2, -8, 18, 24] in network pixels, doubled here.
    EXPECT_NEAR(dets[0].box.left, -4, 1e-6);
    EXPECT_NEAR(dets[0].box.top, -16, 1e-6);
    EXPECT_NEAR(dets[0].box.right, 36, 1e-6);
    EXPECT_NEAR(dets[0].box.bottom, 48, 1e-6);
    for (std::size_t i = 0; i < dets.size(); ++i)
        for (std::size_t j = i + 1; j < dets.size(); ++j) EXPECT_LE(iou(dets[i].box, dets[j].box), 0.02);
}

TEST(Recognize, BlankPageIsEmpty)
{
    Detector det = constant_detector();
    auto& b = det.network().parameters()[det.network().layers().back().bias].value;
    b[kBoxChannels + 4] = -10;
    const auto r = recognize(det, RasterImage(200, 100, 1, 180), AlphabetTable{}, 0, 0.5);
    EXPECT_TRUE(r.detections.empty());
    EXPECT_EQ(r.text, "");
}

TEST(Overlay, DrawsBoxesInColour)
{
    const RasterImage img(60, 60, 1, 128);
    const std::vector<Detection> dets{{Box{20, 20, 40, 52}, ClassId(1), 0.9}};
    const RasterImage out = draw_overlay(img, dets);
    EXPECT_EQ(out.channels(), 3);
    EXPECT_EQ(out.at(20, 30, 0), 255);
    EXPECT_EQ(out.at(20, 30, 1), 0);
    EXPECT_EQ(out.at(30, 30, 0), 128);
    // Dot 1 of the glyph is filled, dot 4 is not.
    EXPECT_EQ(out.at(20, 10, 2), 255);
    EXPECT_EQ(out.at(23, 10, 2), 200);
}
