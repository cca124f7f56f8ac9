#include "obr/reader.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace obr {

namespace {

double median(std::vector<double> values)
{
    if (values.empty()) return 0.0;
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    if (values.size() % 2) return values[mid];
    const double upper = values[mid];
    return 0.5 * (upper + *std::max_element(values.begin(), values.begin() + mid));
}

// Median dy/dx between each detection and its nearest right-hand neighbour on
// roughly the same line.
double estimate_slope(std::span<const Detection> dets, double char_w, double char_h)
{
    std::vector<double> slopes;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const double xi = dets[i].box.center_x(), yi = dets[i].box.center_y();
        double best_dx = 0;
        double best_dy = 0;
        for (std::size_t j = 0; j < dets.size(); ++j) {
            const double dx = dets[j].box.center_x() - xi;
            const double dy = dets[j].box.center_y() - yi;
            if (dx <= 0.5 * char_w || dx > 3 * char_w || std::abs(dy) > 0.5 * char_h) continue;
            if (best_dx == 0 || dx < best_dx) {
                best_dx = dx;
                best_dy = dy;
            }
        }
        if (best_dx > 0) slopes.push_back(best_dy / best_dx);
    }
    return median(std::move(slopes));
}

}  // namespace

std::vector<TextLine> group_lines(std::span<const Detection> detections, const ReaderOptions& options)
{
    std::vector<TextLine> lines;
    if (detections.empty()) return lines;

    std::vector<double> heights, widths;
    for (const auto& d : detections) {
        heights.push_back(d.box.height());
        widths.push_back(d.box.width());
    }
    const double char_h = median(heights);
    const double char_w = median(widths);
    const double slope = estimate_slope(detections, char_w, char_h);
    const double threshold = options.line_link * char_h;

    std::vector<double> level(detections.size());
    for (std::size_t i = 0; i < detections.size(); ++i)
        level[i] = detections[i].box.center_y() - slope * detections[i].box.center_x();

    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return level[a] < level[b]; });

    std::vector<std::vector<std::size_t>> clusters{{order[0]}};
    for (std::size_t k = 1; k < order.size(); ++k) {
        if (level[order[k]] - level[order[k - 1]] > threshold) clusters.emplace_back();
        clusters.back().push_back(order[k]);
    }

    for (auto& cluster : clusters) {
        std::stable_sort(cluster.begin(), cluster.end(), [&](std::size_t a, std::size_t b) {
            return detections[a].box.center_x() < detections[b].box.center_x();
        });
        TextLine line;
        double sum = 0;
        for (std::size_t i : cluster) {
            line.characters.push_back(detections[i]);
            sum += detections[i].box.center_y();
        }
        line.baseline_y = sum / static_cast<double>(cluster.size());
        lines.push_back(std::move(line));
    }
    std::stable_sort(lines.begin(), lines.end(),
                     [](const TextLine& a, const TextLine& b) { return a.baseline_y < b.baseline_y; });
    return lines;
}

std::string render_text(std::vector<TextLine>& lines, const AlphabetTable& table, const ReaderOptions& options)
{
    auto gaps_of = [](const TextLine& line) {
        std::vector<double> gaps;
        for (std::size_t i = 1; i < line.characters.size(); ++i)
            gaps.push_back(line.characters[i].box.center_x() - line.characters[i - 1].box.center_x());
        return gaps;
    };
    // Lines with fewer than three gaps borrow the page-wide pitch.
    std::vector<double> all_gaps;
    for (const auto& line : lines) {
        const auto g = gaps_of(line);
        all_gaps.insert(all_gaps.end(), g.begin(), g.end());
    }
    const double page_pitch = median(all_gaps);

    std::string out;
    for (std::size_t l = 0; l < lines.size(); ++l) {
        TextLine& line = lines[l];
        const auto gaps = gaps_of(line);
        const double pitch = gaps.size() >= 3 ? median(gaps) : page_pitch;
        line.text.clear();
        for (std::size_t i = 0; i < line.characters.size(); ++i) {
            if (i > 0 && pitch > 0 && gaps[i - 1] > options.space_gap * pitch) line.text.push_back(' ');
            line.text += to_text(line.characters[i].cls, table);
        }
        if (l > 0) out.push_back('\n');
        out += line.text;
    }
    return out;
}

}  // namespace obr
