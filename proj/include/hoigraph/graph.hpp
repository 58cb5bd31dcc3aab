#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoigraph/params.hpp"
#include "hoigraph/tensor.hpp"

namespace hoigraph {

// Dense spatio-temporal scaffold over T*M nodes, node(t, m) = t*M + m.
// Edges exist only between human/object pairs, in both directions; the
// intra/inter split partitions them by frame equality.
struct GraphMasks {
    std::size_t T = 0, M = 0;
    std::vector<std::uint8_t> human_flags;
    Mask dense, intra, inter;

    std::size_t node(std::size_t t, std::size_t m) const { return t * M + m; }
};

inline GraphMasks build_dense_masks(std::size_t T, std::size_t M,
                                    const std::vector<std::uint8_t>& human_flags) {
    if (T < 1) throw ConfigError("graph needs at least one frame");
    if (human_flags.size() != M) {
        throw ConfigError("human_flags length " + std::to_string(human_flags.size()) +
                          " does not match M = " + std::to_string(M));
    }
    std::size_t humans = 0;
    for (auto f : human_flags) humans += f ? 1 : 0;
    if (humans == 0) throw ConfigError("graph needs at least one human instance");
    if (humans == M) throw ConfigError("graph needs at least one object instance");

    GraphMasks g;
    g.T = T;
    g.M = M;
    g.human_flags = human_flags;
    std::size_t n = T * M;
    g.dense = Mask(n);
    g.intra = Mask(n);
    g.inter = Mask(n);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t u = 0; u < T; ++u)
                for (std::size_t k = 0; k < M; ++k) {
                    std::size_t i = g.node(t, m), j = g.node(u, k);
                    if (i == j) continue;
                    bool heterogeneous = human_flags[m] != human_flags[k];
                    if (!heterogeneous) continue;
                    g.dense.set(i, j, true);
                    if (t == u) {
                        g.intra.set(i, j, true);
                    } else {
                        g.inter.set(i, j, true);
                    }
                }
    return g;
}

// Attention parameters: a shared node transform W and the split attention
// vector a = [a1; a2], stored whole to match its conceptual shape.
struct AffinityParams {
    Tensor W;  // d_in x d_att
    Tensor a;  // (2*d_att) x 1
    std::size_t d_att = 0;

    AffinityParams() = default;
    AffinityParams(Rng& rng, std::size_t d_in, std::size_t d_att_)
        : W(init_param(rng, d_in, d_att_, d_in)),
          a(init_param(rng, 2 * d_att_, 1, 2 * d_att_)),
          d_att(d_att_) {}

    void reg(ParamRegistry& pr, const std::string& prefix) {
        pr.add(prefix + ".W", W);
        pr.add(prefix + ".a", a);
    }
};

// scores[i][j] = LeakyReLU(a1'W y_i + a2'W y_j, slope 0.2), computed densely;
// mask-excluded entries never reach a normalization, so their values are inert.
inline Tensor pairwise_affinity(Tape& tape, const Tensor& y, const AffinityParams& p,
                                const Mask& mask) {
    if (mask.n != y.rows()) {
        throw ShapeError("affinity mask size " + std::to_string(mask.n) +
                         " does not match " + std::to_string(y.rows()) + " nodes");
    }
    Tensor h = tape.matmul(y, p.W);
    Tensor a1 = tape.slice_rows(p.a, 0, p.d_att);
    Tensor a2 = tape.slice_rows(p.a, p.d_att, p.d_att);
    Tensor s1 = tape.matmul(h, a1);
    Tensor s2 = tape.matmul(h, a2);
    return tape.leaky_relu(tape.outer_pair_sum(s1, s2), 0.2);
}

struct ParsedAdjacency {
    Tensor a_intra, a_inter;  // (T*M) x (T*M), row-stochastic on their supports
};

inline ParsedAdjacency parse_adjacency(Tape& tape, const Tensor& scores,
                                       const GraphMasks& g) {
    ParsedAdjacency out;
    out.a_intra = tape.masked_row_softmax(scores, g.intra);
    out.a_inter = tape.masked_row_softmax(scores, g.inter);
    return out;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json adjacency_json(const std::string& video_id, const GraphMasks& g,
                                     const Tensor& a_intra, const Tensor& a_inter) {
    nlohmann::json j;
    j["video_id"] = video_id;
    j["T"] = g.T;
    j["M"] = g.M;
    j["human_flags"] = nlohmann::json::array();
    for (auto f : g.human_flags) j["human_flags"].push_back(f != 0);
    j["A_intra"] = a_intra.values();
    j["A_inter"] = a_inter.values();
    return j;
}

// DOT digraph: every node declared, then per human node its strongest
// same-frame edge (solid) and its top-n cross-frame edges (dashed). Weights
// label the edges with three decimals.
inline std::string adjacency_dot(const GraphMasks& g, const Tensor& a_intra,
                                 const Tensor& a_inter, int top_n = 3) {
    std::string out = "digraph parsed {\n  rankdir=LR;\n";
    char buf[128];
    for (std::size_t t = 0; t < g.T; ++t)
        for (std::size_t m = 0; m < g.M; ++m) {
            bool human = g.human_flags[m] != 0;
            std::snprintf(buf, sizeof(buf),
                          "  \"t%zu_m%zu\" [label=\"t%zu m%zu %s\", shape=%s];\n", t, m, t,
                          m, human ? "human" : "obj", human ? "box" : "ellipse");
            out += buf;
        }
    for (std::size_t t = 0; t < g.T; ++t)
        for (std::size_t m = 0; m < g.M; ++m) {
            if (!g.human_flags[m]) continue;
            std::size_t i = g.node(t, m);
            // strongest intra edge into this human node
            double best = -1.0;
            std::size_t best_j = 0;
            bool found = false;
            for (std::size_t j = 0; j < g.intra.n; ++j) {
                if (!g.intra.at(i, j)) continue;
                double w = a_intra.at(i, j);
                if (w > best) {
                    best = w;
                    best_j = j;
                    found = true;
                }
            }
            if (found) {
                std::snprintf(buf, sizeof(buf),
                              "  \"t%zu_m%zu\" -> \"t%zu_m%zu\" [style=solid, "
                              "label=\"%.3f\"];\n",
                              best_j / g.M, best_j % g.M, t, m, best);
                out += buf;
            }
            // top-n inter edges into this human node, weight-descending
            std::vector<std::pair<double, std::size_t>> cand;
            for (std::size_t j = 0; j < g.inter.n; ++j)
                if (g.inter.at(i, j)) cand.emplace_back(a_inter.at(i, j), j);
            std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (std::size_t k = 0; k < cand.size() && k < static_cast<std::size_t>(top_n);
                 ++k) {
                std::snprintf(buf, sizeof(buf),
                              "  \"t%zu_m%zu\" -> \"t%zu_m%zu\" [style=dashed, "
                              "label=\"%.3f\"];\n",
                              cand[k].second / g.M, cand[k].second % g.M, t, m,
                              cand[k].first);
                out += buf;
            }
        }
    out += "}\n";
    return out;
}

}  // namespace hoigraph
