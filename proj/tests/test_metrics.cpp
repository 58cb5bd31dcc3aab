#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "hoigraph/metrics.hpp"

using namespace hoigraph;

namespace {

// Independent scoring pass: per-class tallies straight off the label arrays,
// no confusion matrix involved.
struct OracleScore {
    double precision, recall, f1;
};

std::pair<std::map<int, OracleScore>, double> oracle_f1(const std::vector<int>& truth,
                                                        const std::vector<int>& pred) {
    std::map<int, std::size_t> tp, fp, fn;
    std::map<int, bool> seen;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        seen[truth[i]] = true;
        seen[pred[i]] = true;
        if (truth[i] == pred[i]) {
            tp[truth[i]]++;
        } else {
            fn[truth[i]]++;
            fp[pred[i]]++;
        }
    }
    std::map<int, OracleScore> per;
    double sum = 0;
    for (auto [c, _] : seen) {
        double p = tp[c] + fp[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
        double r = tp[c] + fn[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]) : 0.0;
        double f = p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
        per[c] = {p, r, f};
        sum += f;
    }
    return {per, sum / static_cast<double>(seen.size())};
}

}  // namespace

TEST_CASE("f1 hand cases", "[metrics]") {
    SECTION("three-sample case") {
        F1Report r = f1_report({0, 1, 1}, {0, 0, 1}, 2);  // truth A,B,B ; pred A,A,B
        REQUIRE(r.per_class.size() == 2);
        REQUIRE(r.per_class[0].f1 == 2.0 / 3.0);
        REQUIRE(r.per_class[1].f1 == 2.0 / 3.0);
        REQUIRE(r.macro_f1 == 2.0 / 3.0);
        REQUIRE(r.per_class[0].precision == 0.5);
        REQUIRE(r.per_class[0].recall == 1.0);
        REQUIRE(r.per_class[1].precision == 1.0);
        REQUIRE(r.per_class[1].recall == 0.5);
    }

    SECTION("all correct scores 1.0") {
        F1Report r = f1_report({2, 0, 1, 2}, {2, 0, 1, 2}, 4);
        REQUIRE(r.macro_f1 == 1.0);
        for (const auto& s : r.per_class) REQUIRE(s.f1 == 1.0);
        // class 3 never occurs, so it is not averaged in
        REQUIRE(r.per_class.size() == 3);
    }

    SECTION("collapsed predictor") {
        F1Report r = f1_report({0, 1, 2}, {1, 1, 1}, 3);
        REQUIRE(r.per_class[0].f1 == 0.0);
        REQUIRE(r.per_class[1].precision == 1.0 / 3.0);
        REQUIRE(r.per_class[1].recall == 1.0);
        REQUIRE(r.per_class[1].f1 == 0.5);
        REQUIRE(r.per_class[2].f1 == 0.0);
        REQUIRE(r.macro_f1 == 0.5 / 3.0);
    }

    SECTION("confusion rows count the ground truth") {
        F1Report r = f1_report({0, 0, 1, 2, 2, 2}, {1, 0, 1, 0, 2, 2}, 3);
        REQUIRE(r.confusion[0][0] + r.confusion[0][1] + r.confusion[0][2] == 2);
        REQUIRE(r.confusion[1][0] + r.confusion[1][1] + r.confusion[1][2] == 1);
        REQUIRE(r.confusion[2][0] + r.confusion[2][1] + r.confusion[2][2] == 3);
        REQUIRE(r.confusion[2][0] == 1);
        REQUIRE(r.confusion[2][2] == 2);
    }

    SECTION("bad input is rejected") {
        REQUIRE_THROWS_AS(f1_report({0, 1}, {0}, 2), ContractError);
        REQUIRE_THROWS_AS(f1_report({}, {}, 2), DataError);
        REQUIRE_THROWS_AS(f1_report({0, 5}, {0, 1}, 2), std::out_of_range);
        REQUIRE_THROWS_AS(f1_report({0, 1}, {0, -1}, 2), std::out_of_range);
    }
}

TEST_CASE("randomized f1 against a tally oracle", "[metrics]") {
    Rng rng(31);
    for (int rep = 0; rep < 1000; ++rep) {
        std::size_t C = 2 + rng.below(7);
        std::size_t n = 1 + rng.below(50);
        std::vector<int> truth(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.below(C));
            pred[i] = static_cast<int>(rng.below(C));
        }
        F1Report r = f1_report(truth, pred, C);
        auto [per, macro] = oracle_f1(truth, pred);

        REQUIRE(r.per_class.size() == per.size());
        for (const auto& s : r.per_class) {
            const OracleScore& o = per.at(static_cast<int>(s.cls));
            REQUIRE(s.precision == o.precision);
            REQUIRE(s.recall == o.recall);
            REQUIRE(s.f1 == o.f1);
        }
        REQUIRE(r.macro_f1 == macro);

        // row sums recount the truth
        for (std::size_t c = 0; c < C; ++c) {
            std::size_t row = 0, want = 0;
            for (std::size_t k = 0; k < C; ++k) row += r.confusion[c][k];
            for (int t : truth) want += t == static_cast<int>(c) ? 1 : 0;
            REQUIRE(row == want);
        }
    }
}

TEST_CASE("top-k accuracy", "[metrics]") {
    SECTION("ties break toward the lower class") {
        std::vector<std::vector<double>> probs = {{0.4, 0.4, 0.2}};
        REQUIRE(topk_accuracy(probs, {0}, 1) == 1.0);
        REQUIRE(topk_accuracy(probs, {1}, 1) == 0.0);
        REQUIRE(topk_accuracy(probs, {1}, 2) == 1.0);
    }

    SECTION("k beyond the class count retrieves everything") {
        std::vector<std::vector<double>> probs = {{0.1, 0.2, 0.3, 0.4}, {0.9, 0.05, 0.03, 0.02}};
        REQUIRE(topk_accuracy(probs, {0, 3}, 5) == 1.0);
    }

    SECTION("counts hits exactly") {
        std::vector<std::vector<double>> probs = {
            {0.7, 0.2, 0.1}, {0.1, 0.6, 0.3}, {0.5, 0.3, 0.2}, {0.2, 0.3, 0.5}};
        REQUIRE(topk_accuracy(probs, {0, 1, 1, 0}, 1) == 0.5);
        REQUIRE(topk_accuracy(probs, {0, 1, 1, 0}, 2) == 0.75);
        REQUIRE(topk_accuracy(probs, {0, 1, 1, 0}, 3) == 1.0);
    }

    SECTION("bad input is rejected") {
        REQUIRE_THROWS_AS(topk_accuracy({}, {}, 1), DataError);
        REQUIRE_THROWS_AS(topk_accuracy({{0.5, 0.5}}, {0, 1}, 1), ContractError);
        REQUIRE_THROWS_AS(topk_accuracy({{0.5, 0.5}}, {3}, 1), std::out_of_range);
        REQUIRE_THROWS_AS(topk_accuracy({{0.5, 0.5}}, {0}, 0), ContractError);
    }
}

TEST_CASE("report serialization", "[metrics]") {
    MetricsReport m;
    m.activity = f1_report({0, 1, 1}, {0, 0, 1}, 2);
    m.affordance = f1_report({0, 0, 3}, {0, 0, 3}, 4);
    m.top1 = 2.0 / 3.0;
    m.top5 = 1.0;
    m.n_videos = 3;
    m.n_objects = 3;

    nlohmann::json j = metrics_json(m);
    REQUIRE(j["sub_activity"]["macro_f1"] == 2.0 / 3.0);
    REQUIRE(j["affordance"]["macro_f1"] == 1.0);
    REQUIRE(j["sub_activity"]["per_class"].size() == 2);
    REQUIRE(j["sub_activity"]["confusion"].size() == 2);
    REQUIRE(j["top1"] == 2.0 / 3.0);
    REQUIRE(j["n_videos"] == 3);

    std::string table = metrics_table(m, {"idle", "reach"}, {"stationary", "reachable", "movable", "placeable"});
    REQUIRE(table.find("idle") != std::string::npos);
    REQUIRE(table.find("macro F1: 0.6667") != std::string::npos);
    REQUIRE(table.find("top-1: 0.6667") != std::string::npos);
}
