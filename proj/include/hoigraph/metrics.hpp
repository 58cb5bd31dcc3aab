#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoigraph/common.hpp"

namespace hoigraph {

struct ClassScore {
    std::size_t cls = 0;
    double precision = 0, recall = 0, f1 = 0;
    std::size_t support = 0;  // ground-truth count
};

struct F1Report {
    std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
    std::vector<ClassScore> per_class;  // classes present in truth or predictions
    double macro_f1 = 0;
};

// Precision/recall/F1 per class plus the unweighted mean over the classes
// that actually occur (in either labels or predictions); classes the data
// never mentions do not dilute the macro average.
inline F1Report f1_report(const std::vector<int>& truth, const std::vector<int>& pred,
                          std::size_t num_classes) {
    if (truth.size() != pred.size())
        throw ContractError("f1_report: " + std::to_string(truth.size()) + " labels vs " +
                            std::to_string(pred.size()) + " predictions");
    if (truth.empty()) throw DataError("f1_report: no samples");

    F1Report r;
    r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= num_classes)
            throw std::out_of_range("f1_report: label " + std::to_string(truth[i]) +
                                    " outside " + std::to_string(num_classes) + " classes");
        if (pred[i] < 0 || static_cast<std::size_t>(pred[i]) >= num_classes)
            throw std::out_of_range("f1_report: prediction " + std::to_string(pred[i]) +
                                    " outside " + std::to_string(num_classes) + " classes");
        r.confusion[truth[i]][pred[i]]++;
    }

    double f1_sum = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
        for (std::size_t k = 0; k < num_classes; ++k) {
            if (k == c) continue;
            fp += r.confusion[k][c];
            fn += r.confusion[c][k];
        }
        if (tp + fp + fn == 0) continue;  // class absent everywhere
        ClassScore s;
        s.cls = c;
        s.support = tp + fn;
        s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        s.f1 = s.precision + s.recall > 0
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
        f1_sum += s.f1;
        r.per_class.push_back(s);
    }
    r.macro_f1 = f1_sum / static_cast<double>(r.per_class.size());
    return r;
}

// Fraction of rows whose label ranks in the top k by probability; exact ties
// break toward the lower class index. k larger than the class count counts
// every class as retrieved.
inline double topk_accuracy(const std::vector<std::vector<double>>& probs,
                            const std::vector<int>& truth, std::size_t k) {
    if (probs.size() != truth.size())
        throw ContractError("topk_accuracy: " + std::to_string(probs.size()) + " rows vs " +
                            std::to_string(truth.size()) + " labels");
    if (probs.empty()) throw DataError("topk_accuracy: no samples");
    if (k == 0) throw ContractError("topk_accuracy: k must be positive");

    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto& p = probs[i];
        if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= p.size())
            throw std::out_of_range("topk_accuracy: label " + std::to_string(truth[i]) +
                                    " outside " + std::to_string(p.size()) + " classes");
        std::vector<std::size_t> order(p.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (p[a] != p[b]) return p[a] > p[b];
            return a < b;
        });
        std::size_t cut = std::min(k, order.size());
        for (std::size_t j = 0; j < cut; ++j)
            if (order[j] == static_cast<std::size_t>(truth[i])) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(probs.size());
}

inline std::size_t top1_class(const std::vector<double>& probs) {
    if (probs.empty()) throw ContractError("top1_class: empty distribution");
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
        if (probs[c] > probs[best]) best = c;
    return best;
}

struct MetricsReport {
    F1Report activity;
    F1Report affordance;
    double top1 = 0, top5 = 0;  // sub-activity retrieval
    std::size_t n_videos = 0, n_objects = 0;
};

inline nlohmann::json f1_json(const F1Report& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : r.per_class)
        per.push_back({{"class", s.cls},
                       {"precision", s.precision},
                       {"recall", s.recall},
                       {"f1", s.f1},
                       {"support", s.support}});
    return {{"macro_f1", r.macro_f1}, {"per_class", per}, {"confusion", r.confusion}};
}

inline nlohmann::json metrics_json(const MetricsReport& m) {
    return {{"sub_activity", f1_json(m.activity)},
            {"affordance", f1_json(m.affordance)},
            {"top1", m.top1},
            {"top5", m.top5},
            {"n_videos", m.n_videos},
            {"n_objects", m.n_objects}};
}

inline std::string f1_table(const F1Report& r, const std::string& title,
                            const std::vector<std::string>& names) {
    std::string out = title + "\n  class        precision  recall     f1         support\n";
    char line[160];
    for (const auto& s : r.per_class) {
        std::string name = s.cls < names.size() ? names[s.cls] : std::to_string(s.cls);
        std::snprintf(line, sizeof line, "  %-12s %-10.4f %-10.4f %-10.4f %zu\n",
                      name.c_str(), s.precision, s.recall, s.f1, s.support);
        out += line;
    }
    std::snprintf(line, sizeof line, "  macro F1: %.4f\n", r.macro_f1);
    out += line;
    return out;
}

inline std::string metrics_table(const MetricsReport& m,
                                 const std::vector<std::string>& activity_names,
                                 const std::vector<std::string>& affordance_names) {
    std::string out = f1_table(m.activity, "sub-activity (" + std::to_string(m.n_videos) +
                                               " videos)", activity_names);
    out += f1_table(m.affordance,
                    "affordance (" + std::to_string(m.n_objects) + " objects)",
                    affordance_names);
    char line[160];
    std::snprintf(line, sizeof line, "top-1: %.4f   top-5: %.4f\n", m.top1, m.top5);
    out += line;
    return out;
}

}  // namespace hoigraph
