#pragma once

#include <span>
#include <string>
#include <vector>

#include "obr/geometry.hpp"

namespace obr {

inline constexpr double kMatchIou = 0.5;

struct Counts {
    long tp = 0;
    long fp = 0;
    long fn = 0;

    Counts& operator+=(const Counts& o)
    {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const Counts&, const Counts&) = default;
};

struct Scores {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

// Precision/recall/F1 from counts. A denominator of zero yields 0, except
// that all-zero counts (nothing to find, nothing found) score 1.
Scores compute_prf(const Counts& counts);

/// Result of greedy one-to-one matching. Detections are visited by rank;
/// each takes the highest-IOU truth (IOU >= 0.5) that has no correct match
/// yet. Same class: TP, and the truth is consumed. Different class: FP, the
/// truth stays available and the first such detection is remembered as its
/// position match.
struct CharacterMatch {
    Counts counts;
    std::vector<int> truth_of_detection;  // -1 when nothing overlaps enough
    std::vector<bool> detection_correct;
    std::vector<int> truth_tp_detection;        // detection scoring the truth, or -1
    std::vector<int> truth_mismatch_detection;  // first wrong-class detection, or -1
};

CharacterMatch match_characters(std::span<const Detection> detections, std::span<const LabeledBox> truth);

/// Dot counts derived from a character match: TP characters give TP dots;
/// unmatched truths give FN dots; detections overlapping no truth give FP
/// dots; a truth whose best position match has the wrong class is compared
/// dot by dot; any other wrong detection contributes its dots as FP.
Counts dot_level_counts(std::span<const Detection> detections, std::span<const LabeledBox> truth,
                        const CharacterMatch& match);

struct PageResult {
    std::string page;
    Counts chars;
    Counts dots;
};

struct EvalReport {
    Counts chars;
    Counts dots;
    Scores char_scores;
    Scores dot_scores;
    double seconds_per_image = 0;
    std::vector<PageResult> pages;
};

struct PageEvaluation {
    std::string page;
    std::vector<Detection> detections;
    std::vector<LabeledBox> truth;
};

PageResult evaluate_page(const PageEvaluation& page);

// Counts pooled over pages before scoring.
EvalReport evaluate_corpus(std::span<const PageEvaluation> pages, double seconds_per_image = 0);

// Pairs detections and truths by page id; throws InputError when the page sets differ.
EvalReport evaluate_corpus(std::span<const std::pair<std::string, std::vector<Detection>>> detections,
                           std::span<const std::pair<std::string, std::vector<LabeledBox>>> truths,
                           double seconds_per_image = 0);

// "page,char_tp,char_fp,char_fn,dot_tp,dot_fp,dot_fn" rows.
std::string report_csv(const EvalReport& report);

// Dot P/R/F1, char P/R/F1 and s/image, in that column order.
std::string report_summary(const EvalReport& report);

}  // namespace obr
