#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "falldet/common.hpp"

namespace falldet::ev {

// Binary confusion counts with the fall class as positive.
struct ConfusionCounts {
    int64_t tp = 0, fn = 0, fp = 0, tn = 0;
    int64_t total() const { return tp + fn + fp + tn; }
};

// Per-class rates as percentages in [0, 100]. Zero-denominator rates are
// reported as 0 so every field stays inside the documented range.
struct ClassRates {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int64_t support = 0;
};

// One operating point of the threshold sweep: predictions are positive when
// prob >= threshold. precision uses the at-least-one-prediction convention
// (no positive predictions -> precision 100).
struct CurvePoint {
    double threshold = 0.0;
    double precision = 0.0;  // percent
    double recall = 0.0;     // percent (= tpr)
    double fpr = 0.0;        // percent
    double tpr = 0.0;        // percent
};

// Per-scenario sub-report. Rates that have an empty denominator within the
// scenario (e.g. fall precision with no predicted falls) are absent rather
// than 0 so downstream comparisons skip them instead of reading noise.
struct ScenarioReport {
    uint8_t scenario = 0;
    ConfusionCounts confusion;
    std::optional<double> fall_precision;  // percent
    std::optional<double> fall_recall;     // percent
    double accuracy = 0.0;                 // percent
};

struct MetricsReport {
    ConfusionCounts confusion;
    ClassRates fall;
    ClassRates nonfall;
    double accuracy = 0.0;           // percent
    double balanced_accuracy = 0.0;  // percent, mean of class recalls
    double macro_f1 = 0.0;           // percent, mean of class F1
    std::optional<double> auc;       // in [0,1]; absent when labels are single-class
    std::vector<CurvePoint> curve;   // one point per distinct predicted probability
    std::vector<ScenarioReport> scenarios;
};

// Scores each window's predicted fall probability against its label at the
// given decision threshold and sweeps the full curve. labels must be 0/1;
// scenarios tags each window for the per-scenario breakdown and may be empty
// (no breakdown). Throws ShapeMismatch on length mismatch, InvalidLabel on a
// label outside {0,1}.
MetricsReport compute_metrics(const std::vector<double>& probs,
                              const std::vector<uint8_t>& labels,
                              const std::vector<uint8_t>& scenarios, double threshold = 0.5);

// Serialization for reports: a JSON document, a flat key,value CSV, and the
// curve as CSV rows (threshold, precision, recall, fpr, tpr).
std::string report_to_json(const MetricsReport& r);
std::string report_to_csv(const MetricsReport& r);
std::string curve_to_csv(const MetricsReport& r);

}  // namespace falldet::ev
