#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "obr/reader.hpp"

using namespace obr;

namespace {

AlphabetTable latin()
{
    return AlphabetTable::load(std::filesystem::path(OBR_SOURCE_DIR) / "data/alphabets/latin.tsv");
}

// Characters of a text laid out at 25 px pitch and 40 px line pitch,
// rotated by degrees about (200, 100). Blank cells are skipped.
std::vector<Detection> lay_out(const std::vector<std::string>& rows, const AlphabetTable& table, double degrees = 0)
{
    const double a = degrees * std::numbers::pi / 180;
    std::vector<Detection> dets;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (rows[r][c] == ' ') continue;
            const double x = 30 + 25.0 * c - 200, y = 50 + 40.0 * r - 100;
            const double rx = 200 + x * std::cos(a) - y * std::sin(a), ry = 100 + x * std::sin(a) + y * std::cos(a);
            dets.push_back({Box::from_center(rx, ry, 20, 32), *table.lookup(std::string(1, rows[r][c])), 0.9});
        }
    }
    // Reading order must not depend on input order.
    std::reverse(dets.begin(), dets.end());
    return dets;
}

}  // namespace

TEST(Reader, Empty)
{
    std::vector<TextLine> lines = group_lines({});
    EXPECT_TRUE(lines.empty());
    EXPECT_EQ(render_text(lines, latin()), "");
}

TEST(Reader, TwoLines)
{
    const auto table = latin();
    auto lines = group_lines(lay_out({"abc", "de"}, table));
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0].characters.size(), 3u);
    EXPECT_LT(lines[0].baseline_y, lines[1].baseline_y);
    EXPECT_EQ(render_text(lines, table), "abc\nde");
    EXPECT_EQ(lines[1].text, "de");
}

TEST(Reader, Spaces)
{
    const auto table = latin();
    auto lines = group_lines(lay_out({"the quick brown", "fox"}, table));
    EXPECT_EQ(render_text(lines, table), "the quick brown\nfox");
}

TEST(Reader, RotatedPage)
{
    const auto table = latin();
    const std::vector<std::string> text{"lorem ipsum dolor sit", "amet consectetur adipiscing", "elit sed do eiusmod"};
    for (double deg : {-3.0, 3.0, 5.0}) {
        auto lines = group_lines(lay_out(text, table, deg));
        ASSERT_EQ(lines.size(), 3u) << deg;
        EXPECT_EQ(render_text(lines, table), "lorem ipsum dolor sit\namet consectetur adipiscing\nelit sed do eiusmod")
            << deg;
    }
}

TEST(Reader, UnmappedFallsBackToUnicode)
{
    std::vector<Detection> dets{{Box::from_center(20, 20, 20, 32), ClassId(63), 0.9}};
    auto lines = group_lines(dets);
    EXPECT_EQ(render_text(lines, AlphabetTable{}), "⠿");
}

TEST(Reader, LinkThresholdIsConfigurable)
{
    const auto table = latin();
    auto dets = lay_out({"abcdef"}, table);
    dets[0].box.top += 12;
    dets[0].box.bottom += 12;
    EXPECT_EQ(group_lines(dets).size(), 1u);
    EXPECT_EQ(group_lines(dets, ReaderOptions{0.25, 1.5}).size(), 2u);
}
