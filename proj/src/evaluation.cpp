#include "obr/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "obr/error.hpp"

namespace obr {

Scores compute_prf(const Counts& c)
{
    if (c.tp == 0 && c.fp == 0 && c.fn == 0) return {1.0, 1.0, 1.0};
    Scores s;
    s.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    s.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

CharacterMatch match_characters(std::span<const Detection> detections, std::span<const LabeledBox> truth)
{
    CharacterMatch m;
    m.truth_of_detection.assign(detections.size(), -1);
    m.detection_correct.assign(detections.size(), false);
    m.truth_tp_detection.assign(truth.size(), -1);
    m.truth_mismatch_detection.assign(truth.size(), -1);

    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ranks_before(detections[a], detections[b]); });

    for (std::size_t d : order) {
        const Detection& det = detections[d];
        int best = -1;
        double best_iou = kMatchIou;
        for (std::size_t t = 0; t < truth.size(); ++t) {
            if (m.truth_tp_detection[t] >= 0) continue;
            const double overlap = iou(det.box, truth[t].box);
            if (overlap >= best_iou && (best < 0 || overlap > best_iou)) {
                best = static_cast<int>(t);
                best_iou = overlap;
            }
        }
        m.truth_of_detection[d] = best;
        if (best < 0) continue;
        if (det.cls == truth[best].cls) {
            m.detection_correct[d] = true;
            m.truth_tp_detection[best] = static_cast<int>(d);
            ++m.counts.tp;
        } else if (m.truth_mismatch_detection[best] < 0) {
            m.truth_mismatch_detection[best] = static_cast<int>(d);
        }
    }
    m.counts.fp = static_cast<long>(detections.size()) - m.counts.tp;
    m.counts.fn = static_cast<long>(truth.size()) - m.counts.tp;
    return m;
}

Counts dot_level_counts(std::span<const Detection> detections, std::span<const LabeledBox> truth,
                        const CharacterMatch& match)
{
    Counts dots;
    std::vector<bool> accounted(detections.size(), false);
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const DotPattern expected = decode(truth[t].cls);
        if (const int d = match.truth_tp_detection[t]; d >= 0) {
            dots.tp += expected.count();
            accounted[d] = true;
        } else if (const int w = match.truth_mismatch_detection[t]; w >= 0) {
            const DotPattern got = decode(detections[w].cls);
            for (int i = 1; i <= 6; ++i) {
                if (expected.has(i) && got.has(i)) ++dots.tp;
                else if (got.has(i)) ++dots.fp;
                else if (expected.has(i)) ++dots.fn;
            }
            accounted[w] = true;
        } else {
            dots.fn += expected.count();
        }
    }
    for (std::size_t d = 0; d < detections.size(); ++d)
        if (!accounted[d]) dots.fp += decode(detections[d].cls).count();
    return dots;
}

PageResult evaluate_page(const PageEvaluation& page)
{
    const CharacterMatch match = match_characters(page.detections, page.truth);
    return {page.page, match.counts, dot_level_counts(page.detections, page.truth, match)};
}

EvalReport evaluate_corpus(std::span<const PageEvaluation> pages, double seconds_per_image)
{
    EvalReport report;
    report.seconds_per_image = seconds_per_image;
    for (const auto& page : pages) {
        PageResult r = evaluate_page(page);
        report.chars += r.chars;
        report.dots += r.dots;
        report.pages.push_back(std::move(r));
    }
    report.char_scores = compute_prf(report.chars);
    report.dot_scores = compute_prf(report.dots);
    return report;
}

EvalReport evaluate_corpus(std::span<const std::pair<std::string, std::vector<Detection>>> detections,
                           std::span<const std::pair<std::string, std::vector<LabeledBox>>> truths,
                           double seconds_per_image)
{
    std::map<std::string, const std::vector<LabeledBox>*> by_page;
    for (const auto& [page, boxes] : truths)
        if (!by_page.emplace(page, &boxes).second) throw InputError("page '" + page + "' appears twice in the truth set");
    if (detections.size() != truths.size())
        throw InputError("detections cover " + std::to_string(detections.size()) + " pages but truth covers " +
                         std::to_string(truths.size()));
    std::vector<PageEvaluation> pages;
    for (const auto& [page, dets] : detections) {
        auto it = by_page.find(page);
        if (it == by_page.end()) throw InputError("page '" + page + "' has detections but no ground truth");
        pages.push_back({page, dets, *it->second});
    }
    return evaluate_corpus(pages, seconds_per_image);
}

std::string report_csv(const EvalReport& report)
{
    std::ostringstream out;
    out << "page,char_tp,char_fp,char_fn,dot_tp,dot_fp,dot_fn\n";
    for (const auto& p : report.pages)
        out << p.page << ',' << p.chars.tp << ',' << p.chars.fp << ',' << p.chars.fn << ',' << p.dots.tp << ','
            << p.dots.fp << ',' << p.dots.fn << '\n';
    return out.str();
}

std::string report_summary(const EvalReport& report)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "dot_precision,dot_recall,dot_f1,char_precision,char_recall,char_f1,seconds_per_image\n"
                  "%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                  report.dot_scores.precision, report.dot_scores.recall, report.dot_scores.f1,
                  report.char_scores.precision, report.char_scores.recall, report.char_scores.f1,
                  report.seconds_per_image);
    return buf;
}

}  // namespace obr
