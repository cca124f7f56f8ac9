#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "obr/detector.hpp"
#include "obr/error.hpp"
#include "support/oracles.hpp"

using namespace obr;
namespace fs = std::filesystem;

namespace {

Tensor<float> quiet_output(const AnchorGrid& grid)
{
    Tensor<float> out(kOutputChannels, grid.rows(), grid.cols());
    for (int k = 0; k < kNumClasses; ++k)
        for (auto& v : out.channel(kBoxChannels + k)) v = -20;
    return out;
}

fs::path tmp(const std::string& name)
{
    const fs::path dir = fs::path(OBR_TEST_TMP) / "detector";
    fs::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& bytes) { std::ofstream(p, std::ios::binary) << bytes; }

}  // namespace

TEST(Decode, AllNegativeIsEmpty)
{
    const auto grid = make_anchors(96, 96);
    EXPECT_TRUE(decode_output(quiet_output(grid), grid, 0.5).empty());
}

TEST(Decode, SingleAnchor)
{
    const auto grid = make_anchors(96, 96);
    auto out = quiet_output(grid);
    out.at(kBoxChannels + 4, 2, 3) = 10;  // class 5 at column 3, row 2
    const auto dets = decode_output(out, grid, 0.5);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0].cls.value(), 5);
    EXPECT_NEAR(dets[0].score, 1 / (1 + std::exp(-10.0)), 1e-12);
    const Box a = grid.anchor(3, 2);
    EXPECT_NEAR(dets[0].box.left, a.left, 1e-9);
    EXPECT_NEAR(dets[0].box.top, a.top, 1e-9);
    EXPECT_NEAR(dets[0].box.right, a.right, 1e-9);
    EXPECT_NEAR(dets[0].box.bottom, a.bottom, 1e-9);
}

TEST(Decode, BestClassAndThreshold)
{
    const auto grid = make_anchors(32, 32);
    auto out = quiet_output(grid);
    out.at(kBoxChannels + 0, 0, 0) = 0.5;
    out.at(kBoxChannels + 62, 0, 0) = 1.0;
    auto dets = decode_output(out, grid, 0.7);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0].cls.value(), 63);
    EXPECT_TRUE(decode_output(out, grid, 0.75).empty());
    EXPECT_THROW(decode_output(out, make_anchors(48, 32), 0.5), InputError);
}

TEST(Decode, AdjacentAnchorsOnOneCharacter)
{
    // Two vertically adjacent anchors stretched onto one character: decoded
    // boxes overlap at IOU 0.6, NMS keeps the higher score.
    const auto grid = make_anchors(64, 64);
    auto out = quiet_output(grid);
    const Box a0 = grid.anchor(1, 1), a1 = grid.anchor(1, 2);
    const Box t0 = Box::from_center(a0.center_x(), a0.center_y(), 20, 64);
    const Box t1 = Box::from_center(a1.center_x(), a1.center_y(), 20, 64);
    ASSERT_NEAR(iou(t0, t1), 0.6, 1e-9);
    const BoxDelta d0 = encode_delta(a0, t0), d1 = encode_delta(a1, t1);
    const float v0[4] = {float(d0.tx), float(d0.ty), float(d0.tw), float(d0.th)};
    const float v1[4] = {float(d1.tx), float(d1.ty), float(d1.tw), float(d1.th)};
    for (int c = 0; c < 4; ++c) {
        out.at(c, 1, 1) = v0[c];
        out.at(c, 2, 1) = v1[c];
    }
    out.at(kBoxChannels + 9, 1, 1) = 2;
    out.at(kBoxChannels + 9, 2, 1) = 3;
    const auto dets = decode_output(out, grid, 0.5, 0.02);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_NEAR(dets[0].box.center_y(), t1.center_y(), 1e-4);
}

TEST(Decode, RandomOutputsMatchBruteForce)
{
    const auto grid = make_anchors(160, 128);
    std::mt19937 gen(3);
    std::normal_distribution<float> noise(0, 0.4f);
    std::uniform_real_distribution<float> logit(-4, 3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<float> out(kOutputChannels, grid.rows(), grid.cols());
        for (int c = 0; c < kBoxChannels; ++c)
            for (auto& v : out.channel(c)) v = noise(gen);
        for (int c = kBoxChannels; c < kOutputChannels; ++c)
            for (auto& v : out.channel(c)) v = logit(gen);
        // Candidates decoded independently, then the quadratic reference.
        std::vector<Detection> candidates;
        for (int i = 0; i < grid.size(); ++i) {
            const int row = i / grid.cols(), col = i % grid.cols();
            int best = 0;
            for (int k = 1; k < kNumClasses; ++k)
                if (out.at(kBoxChannels + k, row, col) > out.at(kBoxChannels + best, row, col)) best = k;
            const double score = 1 / (1 + std::exp(-double(out.at(kBoxChannels + best, row, col))));
            if (score < 0.5) continue;
            const Box a = grid.anchor(col, row);
            const double cx = a.center_x() + out.at(0, row, col) * a.width();
            const double cy = a.center_y() + out.at(1, row, col) * a.height();
            const double w = a.width() * std::exp(double(out.at(2, row, col)));
            const double h = a.height() * std::exp(double(out.at(3, row, col)));
            candidates.push_back({Box::from_center(cx, cy, w, h), ClassId(best + 1), score});
        }
        const auto expected = oracle::brute_force_nms(candidates, 0.02);
        const auto got = decode_output(out, grid, 0.5, 0.02);
        ASSERT_EQ(got.size(), expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].cls, expected[i].cls);
            EXPECT_NEAR(got[i].box.left, expected[i].box.left, 1e-9);
            EXPECT_NEAR(got[i].box.top, expected[i].box.top, 1e-9);
        }
    }
}

TEST(Detector, InputsMustBeStrideMultiples)
{
    const Detector det = build_reference_network(1);
    EXPECT_NO_THROW(det.detect(NormalizedImage(1, 64, 48)));
    EXPECT_THROW(det.detect(NormalizedImage(1, 60, 48)), InputError);
}

TEST(Checkpoint, RoundTrip)
{
    DetectorConfig config;
    config.backbone.depths = {1, 2, 1, 1};
    config.focal.alpha = std::nullopt;
    config.score_threshold = 0.3;
    const Detector det(config, 17);
    const std::vector<NamedTensor> extra{{"adam.m.x", {2, 3}, {1, 2, 3, 4, 5, 6}}};
    save_checkpoint(tmp("a.ckpt"), det, "{\"epoch\": 3}", extra);
    const Checkpoint ck = load_checkpoint(tmp("a.ckpt"));
    EXPECT_EQ(ck.state_json, "{\"epoch\": 3}");
    ASSERT_EQ(ck.extra.size(), 1u);
    EXPECT_EQ(ck.extra[0].name, "adam.m.x");
    EXPECT_EQ(ck.extra[0].values, extra[0].values);
    EXPECT_EQ(ck.detector.config().backbone, config.backbone);
    EXPECT_FALSE(ck.detector.config().focal.alpha.has_value());
    EXPECT_EQ(ck.detector.config().score_threshold, 0.3);
    for (std::size_t i = 0; i < det.network().parameters().size(); ++i)
        EXPECT_EQ(ck.detector.network().parameters()[i].value, det.network().parameters()[i].value);

    // Saving the loaded detector reproduces the file byte for byte.
    save_checkpoint(tmp("b.ckpt"), ck.detector, ck.state_json, ck.extra);
    EXPECT_EQ(read_bytes(tmp("a.ckpt")), read_bytes(tmp("b.ckpt")));
}

TEST(Checkpoint, CorruptionIsRejected)
{
    const Detector det = build_reference_network(2);
    save_checkpoint(tmp("good.ckpt"), det);
    const std::string bytes = read_bytes(tmp("good.ckpt"));

    write_bytes(tmp("truncated.ckpt"), bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_checkpoint(tmp("truncated.ckpt")), ModelError);

    std::string magic = bytes;
    magic[0] = 'X';
    write_bytes(tmp("magic.ckpt"), magic);
    EXPECT_THROW(load_checkpoint(tmp("magic.ckpt")), ModelError);

    write_bytes(tmp("trailing.ckpt"), bytes + "zz");
    EXPECT_THROW(load_checkpoint(tmp("trailing.ckpt")), ModelError);

    write_bytes(tmp("empty.ckpt"), "");
    EXPECT_THROW(load_checkpoint(tmp("empty.ckpt")), ModelError);
    EXPECT_THROW(load_checkpoint(tmp("missing.ckpt")), ModelError);

    // A network whose shapes disagree with the stored config.
    DetectorConfig other;
    other.backbone.widths = {8, 16, 32, 64};
    save_checkpoint(tmp("other.ckpt"), Detector(other, 1));
    std::string swapped = read_bytes(tmp("other.ckpt"));
    const std::string from = "[8,16,32,64]";
    const auto pos = swapped.find(from);
    ASSERT_NE(pos, std::string::npos);
    // Same length edit keeps the container intact.
    swapped.replace(pos, from.size(), "[9,16,32,64]");
    write_bytes(tmp("shape.ckpt"), swapped);
    EXPECT_THROW(load_checkpoint(tmp("shape.ckpt")), ModelError);
}
