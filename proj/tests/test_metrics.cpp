#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "genconvit/metrics.hpp"
#include "genconvit/rng.hpp"

using namespace gcv;
using namespace gcv::metrics;
namespace fs = std::filesystem;

namespace {

// Mann-Whitney statistic by exhaustive pair counting: ties count half.
double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    i64 pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

struct Instance {
    std::vector<double> scores;
    std::vector<int> labels;
};

Instance random_instance(Rng& rng, bool with_ties) {
    Instance inst;
    const i64 n = uniform_int(rng, 4, 200);
    for (i64 i = 0; i < n; ++i) {
        inst.labels.push_back(static_cast<int>(uniform_int(rng, 0, 1)));
        inst.scores.push_back(with_ties ? static_cast<double>(uniform_int(rng, 0, 7)) / 7.0
                                        : uniform01(rng));
    }
    // Force both classes.
    inst.labels[0] = 0;
    inst.labels[1] = 1;
    return inst;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("confusion counts with score >= threshold meaning fake") {
    const std::vector<double> s{0.9, 0.5, 0.4, 0.1, 0.6, 0.5};
    const std::vector<int> l{1, 1, 1, 0, 0, 0};
    const Confusion c = confusion(s, l, 0.5);
    CHECK(c.tp == 2);  // 0.9 and the boundary 0.5 both classify as fake
    CHECK(c.fn == 1);
    CHECK(c.fp == 2);  // 0.6 and 0.5 with real labels
    CHECK(c.tn == 1);
    CHECK(c.total() == 6);
}

TEST_CASE("metric input validation") {
    CHECK_THROWS_AS(confusion({0.5}, {1, 0}), DataError);
    CHECK_THROWS_AS(confusion({}, {}), DataError);
    CHECK_THROWS_AS(confusion({0.5}, {2}), DataError);
    CHECK_THROWS_AS(confusion({std::nan("")}, {1}), DataError);
    CHECK_THROWS_AS(roc_curve({0.1, 0.2}, {1, 1}), DataError);
    CHECK_THROWS_AS(roc_curve({0.1, 0.2}, {0, 0}), DataError);
}

TEST_CASE("evaluate matches direct formulas and stays in the unit interval") {
    Rng rng = make_rng(301);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance inst = random_instance(rng, trial % 2 == 0);
        const EvalReport r = evaluate(inst.scores, inst.labels, 0.5);
        const Confusion& c = r.confusion;

        i64 tp = 0, fp = 0, tn = 0, fn = 0;
        for (size_t i = 0; i < inst.scores.size(); ++i) {
            const bool pf = inst.scores[i] >= 0.5;
            if (inst.labels[i] == 1)
                (pf ? tp : fn)++;
            else
                (pf ? fp : tn)++;
        }
        REQUIRE(c.tp == tp);
        REQUIRE(c.fp == fp);
        REQUIRE(c.tn == tn);
        REQUIRE(c.fn == fn);

        CHECK(r.accuracy == Catch::Approx(static_cast<double>(tp + tn) / (tp + tn + fp + fn)));
        if (tp + fp > 0) CHECK(r.precision == Catch::Approx(static_cast<double>(tp) / (tp + fp)));
        if (tp + fn > 0) CHECK(r.recall == Catch::Approx(static_cast<double>(tp) / (tp + fn)));
        if (r.precision + r.recall > 0)
            CHECK(r.f1 ==
                  Catch::Approx(2 * r.precision * r.recall / (r.precision + r.recall)));
        CHECK(r.acc_fake == r.recall);  // fake-class accuracy is recall by definition
        if (tn + fp > 0) CHECK(r.acc_real == Catch::Approx(static_cast<double>(tn) / (tn + fp)));

        for (double v : {r.accuracy, r.acc_real, r.acc_fake, r.precision, r.recall, r.f1}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        if (r.auc) {
            CHECK(*r.auc >= 0.0);
            CHECK(*r.auc <= 1.0);
        }
    }
}

TEST_CASE("degenerate denominators report zero with a warning") {
    // Nothing predicted fake: precision is 0/0.
    const EvalReport r = evaluate({0.1, 0.2, 0.3, 0.4}, {1, 0, 1, 0}, 0.9);
    CHECK(r.precision == 0.0);
    CHECK(r.f1 == 0.0);
    REQUIRE_FALSE(r.warnings.empty());
    bool precision_warned = false, f1_warned = false;
    for (const auto& w : r.warnings) {
        if (w.find("precision") != std::string::npos) precision_warned = true;
        if (w.find("f1") != std::string::npos) f1_warned = true;
    }
    CHECK(precision_warned);
    CHECK(f1_warned);
}

TEST_CASE("single-class evaluation omits ROC and AUC with a warning") {
    const EvalReport r = evaluate({0.2, 0.8, 0.5}, {0, 0, 0}, 0.5);
    CHECK_FALSE(r.auc.has_value());
    CHECK(r.roc.empty());
    bool warned = false;
    for (const auto& w : r.warnings)
        if (w.find("single-class") != std::string::npos) warned = true;
    CHECK(warned);
    const auto j = report_json(r);
    CHECK_FALSE(j.contains("auc"));
    CHECK(j.contains("warnings"));
}

TEST_CASE("roc curve on a worked example") {
    const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
    const std::vector<int> l{1, 0, 1, 0};
    const auto pts = roc_curve(s, l);
    REQUIRE(pts.size() == 5);
    CHECK(pts[0] == RocPoint{0.0, 0.0, std::numeric_limits<double>::infinity()});
    CHECK(pts[1] == RocPoint{0.0, 0.5, 0.9});
    CHECK(pts[2] == RocPoint{0.5, 0.5, 0.8});
    CHECK(pts[3] == RocPoint{0.5, 1.0, 0.7});
    CHECK(pts[4] == RocPoint{1.0, 1.0, 0.6});
    CHECK(auc_trapezoid(pts) == Catch::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("roc endpoints and threshold ordering hold on random instances") {
    Rng rng = make_rng(302);
    for (int trial = 0; trial < 25; ++trial) {
        const Instance inst = random_instance(rng, trial % 2 == 0);
        const auto pts = roc_curve(inst.scores, inst.labels);
        REQUIRE(pts.size() >= 2);
        CHECK(pts.front().fpr == 0.0);
        CHECK(pts.front().tpr == 0.0);
        CHECK(std::isinf(pts.front().threshold));
        CHECK(pts.back().fpr == 1.0);
        CHECK(pts.back().tpr == 1.0);
        for (size_t i = 1; i < pts.size(); ++i) {
            CHECK(pts[i].threshold < pts[i - 1].threshold);
            CHECK(pts[i].fpr >= pts[i - 1].fpr);
            CHECK(pts[i].tpr >= pts[i - 1].tpr);
        }
    }
}

TEST_CASE("all-identical scores collapse to the two-point diagonal") {
    const auto pts = roc_curve({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0});
    REQUIRE(pts.size() == 2);
    CHECK(pts[0] == RocPoint{0.0, 0.0, std::numeric_limits<double>::infinity()});
    CHECK(pts[1] == RocPoint{1.0, 1.0, 0.4});
    CHECK(auc_trapezoid(pts) == 0.5);
}

TEST_CASE("trapezoid auc equals brute-force pair counting to 1e-12") {
    Rng rng = make_rng(303);
    for (int trial = 0; trial < 100; ++trial) {
        const Instance inst = random_instance(rng, trial % 3 != 0);
        const double fast = auc(inst.scores, inst.labels);
        const double slow = brute_force_auc(inst.scores, inst.labels);
        CHECK(std::fabs(fast - slow) < 1e-12);
    }
}

TEST_CASE("random scores on random labels give chance-level auc") {
    Rng rng = make_rng(304);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 10000; ++i) {
        scores.push_back(uniform01(rng));
        labels.push_back(static_cast<int>(uniform_int(rng, 0, 1)));
    }
    CHECK(std::fabs(auc(scores, labels) - 0.5) <= 0.02);
}

TEST_CASE("label complement flips auc for tie-free scores") {
    Rng rng = make_rng(305);
    for (int trial = 0; trial < 20; ++trial) {
        const i64 n = uniform_int(rng, 8, 120);
        std::vector<double> scores;
        std::vector<int> labels;
        for (i64 i = 0; i < n; ++i) {
            scores.push_back((static_cast<double>(i) + uniform01(rng) * 0.5) /
                             static_cast<double>(n));  // strictly increasing, hence tie-free
            labels.push_back(static_cast<int>(uniform_int(rng, 0, 1)));
        }
        labels[0] = 0;
        labels[1] = 1;
        std::vector<int> flipped;
        for (int l : labels) flipped.push_back(1 - l);
        CHECK(std::fabs(auc(scores, labels) + auc(scores, flipped) - 1.0) < 1e-12);
    }
}

TEST_CASE("auc is invariant under strictly increasing score transforms") {
    Rng rng = make_rng(306);
    const Instance inst = random_instance(rng, true);
    const double base = auc(inst.scores, inst.labels);

    auto transformed = [&](auto&& f) {
        std::vector<double> t;
        for (double s : inst.scores) t.push_back(f(s));
        return auc(t, inst.labels);
    };
    CHECK(transformed([](double s) { return 2.0 * s + 1.0; }) == base);
    CHECK(transformed([](double s) { return std::exp(s); }) == base);
    CHECK(transformed([](double s) { return std::tanh(s) + 3.0; }) == base);
}

TEST_CASE("roc plot emission is byte-stable and the csv round-trips exactly") {
    const fs::path dir = fs::temp_directory_path() / "gcv_roc_plot";
    fs::remove_all(dir);
    fs::create_directories(dir);

    Rng rng = make_rng(307);
    const Instance inst = random_instance(rng, false);
    const auto pts = roc_curve(inst.scores, inst.labels);
    const double a = auc_trapezoid(pts);

    const std::string svg = (dir / "roc.svg").string();
    const std::string csv = (dir / "roc.csv").string();
    emit_roc_plot(svg, pts, a);
    const std::string svg1 = slurp(svg), csv1 = slurp(csv);
    emit_roc_plot(svg, pts, a);
    CHECK(slurp(svg) == svg1);
    CHECK(slurp(csv) == csv1);

    CHECK(svg1.find("<svg") == 0);
    CHECK(svg1.find("polyline") != std::string::npos);
    CHECK(svg1.find("AUC = ") != std::string::npos);
    CHECK(svg1.find("stroke-dasharray") != std::string::npos);
    CHECK(svg1.rfind("</svg>\n") == svg1.size() - 7);
    CHECK(svg1.find("http") == svg1.find("xmlns=\"http://www.w3.org/2000/svg\"") + 7);

    std::ifstream in(csv);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "fpr,tpr,threshold");
    size_t row = 0;
    while (std::getline(in, line)) {
        REQUIRE(row < pts.size());
        const size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
        REQUIRE(c2 != std::string::npos);
        CHECK(std::stod(line.substr(0, c1)) == pts[row].fpr);
        CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == pts[row].tpr);
        CHECK(std::stod(line.substr(c2 + 1)) == pts[row].threshold);
        ++row;
    }
    CHECK(row == pts.size());

    CHECK_THROWS_AS(emit_roc_plot(svg, {pts[0]}, 0.5), DataError);
    CHECK_THROWS_AS(emit_roc_plot((dir / "missing" / "roc.svg").string(), pts, a), IoError);
    fs::remove_all(dir);
}

TEST_CASE("report json carries every metric with stable keys") {
    const EvalReport r = evaluate({0.9, 0.1, 0.8, 0.3}, {1, 0, 1, 0}, 0.5);
    const auto j = report_json(r);
    CHECK(j["n"] == 4);
    CHECK(j["confusion"]["tp"] == 2);
    CHECK(j["confusion"]["tn"] == 2);
    CHECK(j["accuracy"] == 1.0);
    CHECK(j["per_class_accuracy"]["real"] == 1.0);
    CHECK(j["per_class_accuracy"]["fake"] == 1.0);
    CHECK(j["f1"] == 1.0);
    REQUIRE(j.contains("auc"));
    CHECK(j["auc"] == 1.0);
    CHECK(j.dump(2) == report_json(r).dump(2));
    const std::string d = j.dump();
    CHECK(d.find("\"n\"") < d.find("\"threshold\""));
    CHECK(d.find("\"threshold\"") < d.find("\"confusion\""));
}
