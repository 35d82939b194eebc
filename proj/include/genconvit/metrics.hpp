#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"

namespace gcv::metrics {

struct Confusion {
    i64 tp = 0, fp = 0, tn = 0, fn = 0;
    i64 total() const { return tp + fp + tn + fn; }
};

struct RocPoint {
    double fpr = 0, tpr = 0, threshold = 0;
    bool operator==(const RocPoint& o) const {
        return fpr == o.fpr && tpr == o.tpr && threshold == o.threshold;
    }
};

struct EvalReport {
    Confusion confusion;
    double threshold = 0.5;
    double accuracy = 0;
    double acc_real = 0;  // true-negative rate; fake-class accuracy equals recall
    double acc_fake = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::optional<double> auc;
    std::vector<RocPoint> roc;
    std::vector<std::string> warnings;
};

namespace detail {

inline void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DataError("metrics: scores and labels differ in length");
    if (scores.empty()) throw DataError("metrics: empty inputs");
    for (double s : scores)
        if (std::isnan(s)) throw DataError("metrics: NaN score");
    for (int l : labels)
        if (l != 0 && l != 1) throw DataError("metrics: labels must be 0 (real) or 1 (fake)");
}

inline double ratio(i64 num, i64 den, const char* name, std::vector<std::string>* warnings) {
    if (den == 0) {
        if (warnings) warnings->push_back(std::string(name) + " undefined (0/0); reported as 0");
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

inline std::string full_precision(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace detail

// Classifies score >= threshold as FAKE (the positive class).
inline Confusion confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                           double threshold = 0.5) {
    detail::check_inputs(scores, labels);
    Confusion c;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool pred_fake = scores[i] >= threshold;
        if (labels[i] == 1)
            pred_fake ? ++c.tp : ++c.fn;
        else
            pred_fake ? ++c.fp : ++c.tn;
    }
    return c;
}

// One point per unique score in descending order, preceded by an infinite
// sentinel, so the curve always runs from (0,0) to (1,1).
inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                       const std::vector<int>& labels) {
    detail::check_inputs(scores, labels);
    i64 pos = 0, neg = 0;
    for (int l : labels) (l == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw DataError("roc_curve: need both classes present in the labels");

    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    i64 tp = 0, fp = 0;
    size_t i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == s) {
            (labels[idx[i]] == 1 ? tp : fp)++;
            ++i;
        }
        points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos), s});
    }
    return points;
}

inline double auc_trapezoid(const std::vector<RocPoint>& points) {
    if (points.size() < 2) throw DataError("auc: need at least two ROC points");
    double area = 0;
    for (size_t i = 1; i < points.size(); ++i)
        area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
    return area;
}

inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    return auc_trapezoid(roc_curve(scores, labels));
}

inline EvalReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels,
                           double threshold = 0.5) {
    EvalReport r;
    r.threshold = threshold;
    r.confusion = confusion(scores, labels, threshold);
    const Confusion& c = r.confusion;
    r.accuracy = detail::ratio(c.tp + c.tn, c.total(), "accuracy", &r.warnings);
    r.acc_real = detail::ratio(c.tn, c.tn + c.fp, "real-class accuracy", &r.warnings);
    r.acc_fake = detail::ratio(c.tp, c.tp + c.fn, "fake-class accuracy", &r.warnings);
    r.precision = detail::ratio(c.tp, c.tp + c.fp, "precision", &r.warnings);
    r.recall = detail::ratio(c.tp, c.tp + c.fn, "recall", &r.warnings);
    if (r.precision + r.recall == 0) {
        r.warnings.push_back("f1 undefined (precision + recall = 0); reported as 0");
        r.f1 = 0;
    } else {
        r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
    }
    const bool single_class = (c.tp + c.fn == 0) || (c.tn + c.fp == 0);
    if (single_class) {
        r.warnings.push_back("single-class evaluation: ROC and AUC omitted");
    } else {
        r.roc = roc_curve(scores, labels);
        r.auc = auc_trapezoid(r.roc);
    }
    return r;
}

// Key order is fixed so the serialized report is byte-stable.
inline nlohmann::ordered_json report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["n"] = r.confusion.total();
    j["threshold"] = r.threshold;
    j["confusion"] = {{"tp", r.confusion.tp},
                      {"fp", r.confusion.fp},
                      {"tn", r.confusion.tn},
                      {"fn", r.confusion.fn}};
    j["accuracy"] = r.accuracy;
    j["per_class_accuracy"] = {{"real", r.acc_real}, {"fake", r.acc_fake}};
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    if (r.auc) j["auc"] = *r.auc;
    if (!r.warnings.empty()) j["warnings"] = r.warnings;
    return j;
}

// Writes a self-contained SVG plot plus a sibling .csv with full-precision
// points. Both outputs are pure functions of the arguments, so re-emission
// produces identical bytes.
inline void emit_roc_plot(const std::string& svg_path, const std::vector<RocPoint>& points,
                          double auc_value) {
    if (points.size() < 2) throw DataError("emit_roc_plot: need at least two ROC points");

    const std::string csv_path =
        std::filesystem::path(svg_path).replace_extension(".csv").string();
    {
        std::ofstream csv(csv_path, std::ios::binary);
        if (!csv) throw IoError("cannot write ROC csv: " + csv_path);
        csv << "fpr,tpr,threshold\n";
        for (const auto& p : points)
            csv << detail::full_precision(p.fpr) << ',' << detail::full_precision(p.tpr) << ','
                << detail::full_precision(p.threshold) << '\n';
        if (!csv) throw IoError("failed while writing ROC csv: " + csv_path);
    }

    const double size = 480, margin = 56, plot = size - 2 * margin;
    auto px = [&](double fpr) { return margin + fpr * plot; };
    auto py = [&](double tpr) { return margin + (1.0 - tpr) * plot; };

    std::ofstream svg(svg_path, std::ios::binary);
    if (!svg) throw IoError("cannot write ROC svg: " + svg_path);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" "
           "viewBox=\"0 0 480 480\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"480\" height=\"480\" fill=\"white\"/>\n";
    svg << "<rect x=\"" << detail::fixed2(margin) << "\" y=\"" << detail::fixed2(margin)
        << "\" width=\"" << detail::fixed2(plot) << "\" height=\"" << detail::fixed2(plot)
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        svg << "<text x=\"" << detail::fixed2(px(t)) << "\" y=\"" << detail::fixed2(size - margin + 20)
            << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222\">" << detail::fixed2(t)
            << "</text>\n";
        svg << "<text x=\"" << detail::fixed2(margin - 8) << "\" y=\"" << detail::fixed2(py(t) + 4)
            << "\" font-size=\"11\" text-anchor=\"end\" fill=\"#222\">" << detail::fixed2(t)
            << "</text>\n";
    }
    svg << "<text x=\"" << detail::fixed2(size / 2) << "\" y=\"" << detail::fixed2(size - 12)
        << "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#222\">false positive rate</text>\n";
    svg << "<text x=\"16\" y=\"" << detail::fixed2(size / 2)
        << "\" font-size=\"13\" text-anchor=\"middle\" fill=\"#222\" transform=\"rotate(-90 16 "
        << detail::fixed2(size / 2) << ")\">true positive rate</text>\n";
    svg << "<line x1=\"" << detail::fixed2(px(0)) << "\" y1=\"" << detail::fixed2(py(0))
        << "\" x2=\"" << detail::fixed2(px(1)) << "\" y2=\"" << detail::fixed2(py(1))
        << "\" stroke=\"#999\" stroke-dasharray=\"5,4\"/>\n";
    svg << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < points.size(); ++i) {
        if (i) svg << ' ';
        svg << detail::fixed2(px(points[i].fpr)) << ',' << detail::fixed2(py(points[i].tpr));
    }
    svg << "\"/>\n";
    {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "AUC = %.6f", auc_value);
        svg << "<text x=\"" << detail::fixed2(size - margin - 10) << "\" y=\""
            << detail::fixed2(size - margin - 14)
            << "\" font-size=\"14\" text-anchor=\"end\" fill=\"#222\">" << buf << "</text>\n";
    }
    svg << "</svg>\n";
    if (!svg) throw IoError("failed while writing ROC svg: " + svg_path);
}

}  // namespace gcv::metrics
