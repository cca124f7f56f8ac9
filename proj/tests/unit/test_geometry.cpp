#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "obr/error.hpp"
#include "obr/geometry.hpp"

using namespace obr;

namespace {

double ref_iou(const Box& a, const Box& b)
{
    const double w = std::max(0.0, std::min(a.right, b.right) - std::max(a.left, b.left));
    const double h = std::max(0.0, std::min(a.bottom, b.bottom) - std::max(a.top, b.top));
    const double inter = w * h;
    return inter / ((a.right - a.left) * (a.bottom - a.top) + (b.right - b.left) * (b.bottom - b.top) - inter);
}

// Selection by rank, then keep-if-compatible with every earlier keeper.
std::vector<Detection> ref_nms(std::vector<Detection> d, double thr)
{
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = i + 1; j < d.size(); ++j) {
            const auto& a = d[i];
            const auto& b = d[j];
            const bool swap = b.score > a.score || (b.score == a.score && (b.box.top < a.box.top ||
                                                                            (b.box.top == a.box.top && b.box.left < a.box.left)));
            if (swap) std::swap(d[i], d[j]);
        }
    std::vector<Detection> kept;
    for (const auto& x : d) {
        bool ok = true;
        for (const auto& k : kept) ok = ok && ref_iou(x.box, k.box) <= thr;
        if (ok) kept.push_back(x);
    }
    return kept;
}

}  // namespace

TEST(Iou, HandCases)
{
    const Box a{0, 0, 2, 2};
    EXPECT_EQ(iou(a, a), 1.0);
    EXPECT_EQ(iou(a, Box{5, 5, 6, 6}), 0.0);
    EXPECT_EQ(iou(a, Box{2, 0, 4, 2}), 0.0);  // touching edges
    EXPECT_DOUBLE_EQ(iou(a, Box{1, 0, 3, 2}), 2.0 / 6.0);
    EXPECT_DOUBLE_EQ(iou(Box{0, 0, 4, 4}, Box{1, 1, 3, 3}), 0.25);
}

TEST(Iou, Properties)
{
    std::mt19937 gen(5);
    std::uniform_real_distribution<double> u(0, 100);
    for (int i = 0; i < 2000; ++i) {
        const double x = u(gen), y = u(gen), x2 = u(gen), y2 = u(gen);
        const Box a{x, y, x + 1 + u(gen) / 4, y + 1 + u(gen) / 4};
        const Box b{x2, y2, x2 + 1 + u(gen) / 4, y2 + 1 + u(gen) / 4};
        const double v = iou(a, b);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_DOUBLE_EQ(v, iou(b, a));
        EXPECT_NEAR(v, ref_iou(a, b), 1e-12);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Anchors, GridExamples)
{
    const AnchorGrid g = make_anchors(416, 416, 20, 32);
    EXPECT_EQ(g.cols(), 26);
    EXPECT_EQ(g.rows(), 26);
    EXPECT_EQ(g.size(), 676);
    const AnchorGrid page = make_anchors(864, 1152);
    EXPECT_EQ(page.cols(), 54);
    EXPECT_EQ(page.rows(), 72);
    EXPECT_EQ(page.size(), 3888);
    EXPECT_EQ(make_anchors(864, 1150).size(), 3888);  // ceiling division
    const Box a = g.anchor(0, 0);
    EXPECT_DOUBLE_EQ(a.center_x(), 8);
    EXPECT_DOUBLE_EQ(a.center_y(), 8);
    EXPECT_DOUBLE_EQ(a.width(), 20);
    EXPECT_DOUBLE_EQ(a.height(), 32);
    const Box b = g.anchor(3, 5);
    EXPECT_DOUBLE_EQ(b.center_x(), 16 * 3 + 8);
    EXPECT_DOUBLE_EQ(b.center_y(), 16 * 5 + 8);
    EXPECT_EQ(g.anchor(5 * 26 + 3), b);
}

TEST(Delta, Examples)
{
    const Box anchor = Box::from_center(8, 8, 20, 32);
    const BoxDelta zero = encode_delta(anchor, anchor);
    EXPECT_EQ(zero.tx, 0);
    EXPECT_EQ(zero.ty, 0);
    EXPECT_EQ(zero.tw, 0);
    EXPECT_EQ(zero.th, 0);
    const BoxDelta wide = encode_delta(anchor, Box::from_center(8, 8, 40, 32));
    EXPECT_NEAR(wide.tw, 0.6931, 1e-4);
    EXPECT_EQ(wide.tx, 0);
    EXPECT_EQ(wide.ty, 0);
    EXPECT_EQ(wide.th, 0);
    EXPECT_THROW(encode_delta(anchor, Box{5, 5, 5, 9}), InputError);
}

TEST(Delta, RoundTrip)
{
    std::mt19937 gen(9);
    std::uniform_real_distribution<double> pos(-50, 900), size(2, 80);
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        const Box anchor = Box::from_center(pos(gen), pos(gen), size(gen), size(gen));
        const Box target = Box::from_center(pos(gen), pos(gen), size(gen), size(gen));
        const Box back = decode_delta(anchor, encode_delta(anchor, target));
        worst = std::max({worst, std::abs(back.left - target.left), std::abs(back.top - target.top),
                          std::abs(back.right - target.right), std::abs(back.bottom - target.bottom)});
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Nms, Examples)
{
    const Box b{0, 0, 20, 32};
    const std::vector<Detection> same{{b, ClassId(1), 0.8}, {b, ClassId(2), 0.9}};
    const auto kept = nms(same, 0.02);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].score, 0.9);

    // Overlap 0.4 px wide: IOU = 0.4*32 / (2*640 - 12.8) ~ 0.0101
    const std::vector<Detection> near{{b, ClassId(1), 0.9}, {Box{19.6, 0, 39.6, 32}, ClassId(1), 0.8}};
    ASSERT_LT(iou(near[0].box, near[1].box), 0.02);
    EXPECT_EQ(nms(near, 0.02).size(), 2u);
}

TEST(Nms, TieBreakIsTopThenLeft)
{
    const std::vector<Detection> d{{Box{10, 5, 30, 37}, ClassId(1), 0.5},
                                   {Box{0, 5, 20, 37}, ClassId(2), 0.5},
                                   {Box{5, 0, 25, 32}, ClassId(3), 0.5}};
    const auto kept = nms(d, 0.02);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].cls.value(), 3);
    const auto all = nms(d, 1.0);
    ASSERT_EQ(all.size(), 3u);
    EXPECT_EQ(all[1].cls.value(), 2);
    EXPECT_EQ(all[2].cls.value(), 1);
}

TEST(Nms, MatchesBruteForce)
{
    std::mt19937 gen(21);
    for (int inst = 0; inst < 1000; ++inst) {
        const int n = std::uniform_int_distribution<int>(0, 50)(gen);
        std::uniform_real_distribution<double> pos(0, 120), size(5, 40);
        // Coarse scores produce ties.
        std::uniform_int_distribution<int> score(1, 20);
        const double thr = inst % 3 == 0 ? 0.02 : std::uniform_real_distribution<double>(0, 1)(gen);
        std::vector<Detection> d;
        for (int i = 0; i < n; ++i) {
            const double x = std::round(pos(gen)), y = std::round(pos(gen));
            d.push_back({Box{x, y, x + size(gen), y + size(gen)}, ClassId(1 + i % 63), score(gen) / 20.0});
        }
        const auto got = nms(d, thr);
        const auto want = ref_nms(d, thr);
        ASSERT_EQ(got.size(), want.size()) << inst;
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].box, want[i].box);
            EXPECT_EQ(got[i].score, want[i].score);
        }
        for (std::size_t i = 0; i < got.size(); ++i)
            for (std::size_t j = i + 1; j < got.size(); ++j) {
                EXPECT_LE(iou(got[i].box, got[j].box), thr);
                EXPECT_GE(got[i].score, got[j].score);
            }
    }
}
