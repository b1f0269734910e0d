#include "falldet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "falldet/synth.hpp"
#include "json.hpp"

namespace falldet::ev {

namespace {

double pct(int64_t num, int64_t den) {
    return den > 0 ? 100.0 * double(num) / double(den) : 0.0;
}

ClassRates rates_from(int64_t tp, int64_t fn, int64_t fp) {
    ClassRates r;
    r.support = tp + fn;
    r.precision = pct(tp, tp + fp);
    r.recall = pct(tp, tp + fn);
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string scenario_tag(uint8_t id) {
    if (id < synth::kScenarioCount) return synth::scenario_name(synth::Scenario(id));
    return "scenario_" + std::to_string(int(id));
}

}  // namespace

MetricsReport compute_metrics(const std::vector<double>& probs,
                              const std::vector<uint8_t>& labels,
                              const std::vector<uint8_t>& scenarios, double threshold) {
    if (probs.size() != labels.size())
        throw ShapeMismatch("compute_metrics: probs and labels lengths differ");
    if (!scenarios.empty() && scenarios.size() != labels.size())
        throw ShapeMismatch("compute_metrics: scenario tags length differs");
    if (probs.empty()) throw DegenerateInput("compute_metrics: empty input");
    for (double p : probs)
        if (!std::isfinite(p)) throw DegenerateInput("compute_metrics: non-finite probability");
    for (uint8_t l : labels)
        if (l > 1) throw InvalidLabel("compute_metrics: label outside {0,1}");

    MetricsReport rep;
    const int64_t n = int64_t(probs.size());
    for (int64_t i = 0; i < n; ++i) {
        bool pos = probs[size_t(i)] >= threshold;
        bool is_fall = labels[size_t(i)] == 1;
        if (pos && is_fall) ++rep.confusion.tp;
        else if (pos) ++rep.confusion.fp;
        else if (is_fall) ++rep.confusion.fn;
        else ++rep.confusion.tn;
    }
    const auto& c = rep.confusion;
    rep.fall = rates_from(c.tp, c.fn, c.fp);
    rep.nonfall = rates_from(c.tn, c.fp, c.fn);
    rep.accuracy = pct(c.tp + c.tn, n);
    rep.balanced_accuracy = 0.5 * (rep.fall.recall + rep.nonfall.recall);
    rep.macro_f1 = 0.5 * (rep.fall.f1 + rep.nonfall.f1);

    // Threshold sweep over the distinct predicted probabilities, descending;
    // ties enter as one group, which makes the ROC trapezoid exact.
    const int64_t npos = c.tp + c.fn, nneg = c.fp + c.tn;
    std::vector<size_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return probs[a] > probs[b]; });
    int64_t tp = 0, fp = 0;
    double auc = 0.0, prev_tpr = 0.0, prev_fpr = 0.0;
    for (size_t i = 0; i < order.size();) {
        size_t j = i;
        while (j < order.size() && probs[order[j]] == probs[order[i]]) {
            if (labels[order[j]] == 1) ++tp;
            else ++fp;
            ++j;
        }
        double tpr = npos > 0 ? double(tp) / double(npos) : 0.0;
        double fpr = nneg > 0 ? double(fp) / double(nneg) : 0.0;
        auc += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
        prev_tpr = tpr;
        prev_fpr = fpr;
        CurvePoint pt;
        pt.threshold = probs[order[i]];
        pt.precision = pct(tp, tp + fp);
        pt.recall = 100.0 * tpr;
        pt.fpr = 100.0 * fpr;
        pt.tpr = 100.0 * tpr;
        rep.curve.push_back(pt);
        i = j;
    }
    if (npos > 0 && nneg > 0) rep.auc = auc;

    if (!scenarios.empty()) {
        std::vector<uint8_t> ids(scenarios);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        for (uint8_t id : ids) {
            ScenarioReport s;
            s.scenario = id;
            for (int64_t i = 0; i < n; ++i) {
                if (scenarios[size_t(i)] != id) continue;
                bool pos = probs[size_t(i)] >= threshold;
                bool is_fall = labels[size_t(i)] == 1;
                if (pos && is_fall) ++s.confusion.tp;
                else if (pos) ++s.confusion.fp;
                else if (is_fall) ++s.confusion.fn;
                else ++s.confusion.tn;
            }
            const auto& sc = s.confusion;
            s.accuracy = pct(sc.tp + sc.tn, sc.total());
            if (sc.tp + sc.fp > 0) s.fall_precision = pct(sc.tp, sc.tp + sc.fp);
            if (sc.tp + sc.fn > 0) s.fall_recall = pct(sc.tp, sc.tp + sc.fn);
            rep.scenarios.push_back(s);
        }
    }
    return rep;
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["confusion"] = {{"tp", r.confusion.tp}, {"fn", r.confusion.fn},
                      {"fp", r.confusion.fp}, {"tn", r.confusion.tn}};
    auto cls = [](const ClassRates& c) {
        return nlohmann::json{{"precision", c.precision},
                              {"recall", c.recall},
                              {"f1", c.f1},
                              {"support", c.support}};
    };
    j["fall"] = cls(r.fall);
    j["nonfall"] = cls(r.nonfall);
    j["accuracy"] = r.accuracy;
    j["balanced_accuracy"] = r.balanced_accuracy;
    j["macro_f1"] = r.macro_f1;
    if (r.auc) j["auc"] = *r.auc;
    else j["auc"] = nullptr;
    nlohmann::json scen = nlohmann::json::array();
    for (const auto& s : r.scenarios) {
        nlohmann::json e;
        e["scenario"] = scenario_tag(s.scenario);
        e["windows"] = s.confusion.total();
        e["confusion"] = {{"tp", s.confusion.tp}, {"fn", s.confusion.fn},
                          {"fp", s.confusion.fp}, {"tn", s.confusion.tn}};
        e["accuracy"] = s.accuracy;
        if (s.fall_precision) e["fall_precision"] = *s.fall_precision;
        else e["fall_precision"] = nullptr;
        if (s.fall_recall) e["fall_recall"] = *s.fall_recall;
        else e["fall_recall"] = nullptr;
        scen.push_back(e);
    }
    j["scenarios"] = scen;
    return j.dump(2);
}

std::string report_to_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "accuracy," << fmt(r.accuracy) << "\n";
    os << "balanced_accuracy," << fmt(r.balanced_accuracy) << "\n";
    os << "macro_f1," << fmt(r.macro_f1) << "\n";
    os << "auc," << (r.auc ? fmt(*r.auc) : std::string()) << "\n";
    os << "fall_precision," << fmt(r.fall.precision) << "\n";
    os << "fall_recall," << fmt(r.fall.recall) << "\n";
    os << "fall_f1," << fmt(r.fall.f1) << "\n";
    os << "nonfall_precision," << fmt(r.nonfall.precision) << "\n";
    os << "nonfall_recall," << fmt(r.nonfall.recall) << "\n";
    os << "nonfall_f1," << fmt(r.nonfall.f1) << "\n";
    os << "tp," << r.confusion.tp << "\n";
    os << "fn," << r.confusion.fn << "\n";
    os << "fp," << r.confusion.fp << "\n";
    os << "tn," << r.confusion.tn << "\n";
    for (const auto& s : r.scenarios) {
        std::string tag = scenario_tag(s.scenario);
        os << tag << "_accuracy," << fmt(s.accuracy) << "\n";
        os << tag << "_fall_precision,"
           << (s.fall_precision ? fmt(*s.fall_precision) : std::string()) << "\n";
        os << tag << "_fall_recall,"
           << (s.fall_recall ? fmt(*s.fall_recall) : std::string()) << "\n";
    }
    return os.str();
}

std::string curve_to_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "threshold,precision,recall,fpr,tpr\n";
    for (const auto& p : r.curve)
        os << fmt(p.threshold) << ',' << fmt(p.precision) << ',' << fmt(p.recall) << ','
           << fmt(p.fpr) << ',' << fmt(p.tpr) << "\n";
    return os.str();
}

}  // namespace falldet::ev
