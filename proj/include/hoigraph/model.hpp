#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hoigraph/common.hpp"
#include "hoigraph/data.hpp"
#include "hoigraph/features.hpp"
#include "hoigraph/graph.hpp"
#include "hoigraph/params.hpp"
#include "hoigraph/tensor.hpp"

namespace hoigraph {

// Widths of everything past the feature encoders. d_branch is one half of the
// evolved concat; d_fuse is the fused sequence width the heads read from.
struct ModelDims {
    std::size_t d_att = 8;
    std::size_t d_branch = 16;
    std::size_t d_fuse = 64;
    std::size_t head_h1 = 64;
    std::size_t head_h2 = 16;
};

inline ModelDims paper_model_dims() { return {256, 512, 2048, 2048, 512}; }
inline ModelDims desk_model_dims() { return {8, 16, 64, 64, 16}; }

// Bidirectional Elman cell: one parameter set per direction, one shared output
// projection over the concatenated hidden states.
struct BiRnnParams {
    std::size_t hidden = 0;
    Tensor wx_f, wh_f, bh_f;
    Tensor wx_b, wh_b, bh_b;
    Tensor wy, by;

    BiRnnParams() = default;
    BiRnnParams(Rng& rng, std::size_t d_in, std::size_t h, std::size_t d_out)
        : hidden(h),
          wx_f(init_param(rng, d_in, h, d_in)),
          wh_f(init_param(rng, h, h, h)),
          bh_f(init_param(rng, 1, h, h)),
          wx_b(init_param(rng, d_in, h, d_in)),
          wh_b(init_param(rng, h, h, h)),
          bh_b(init_param(rng, 1, h, h)),
          wy(init_param(rng, 2 * h, d_out, 2 * h)),
          by(init_param(rng, 1, d_out, 2 * h)) {}

    void reg(ParamRegistry& pr, const std::string& prefix) {
        pr.add(prefix + ".wx_f", wx_f);
        pr.add(prefix + ".wh_f", wh_f);
        pr.add(prefix + ".bh_f", bh_f);
        pr.add(prefix + ".wx_b", wx_b);
        pr.add(prefix + ".wh_b", wh_b);
        pr.add(prefix + ".bh_b", bh_b);
        pr.add(prefix + ".wy", wy);
        pr.add(prefix + ".by", by);
    }
};

// Runs the BiRNN over each instance's frame sequence. Rows stay in node order
// (t*M + m); the recurrence mixes time steps but never instances, so instance
// rows of the output depend only on their own sequence. Hidden states start
// at zero on both ends.
inline Tensor birnn_apply(Tape& tape, const Tensor& x, std::size_t T, std::size_t M,
                          const BiRnnParams& p) {
    if (T == 0 || M == 0) throw ContractError("birnn: empty sequence");
    if (x.rows() != T * M)
        throw ShapeError("birnn: input rows " + std::to_string(x.rows()) +
                         " do not match T*M = " + std::to_string(T * M));

    std::vector<Tensor> frames(T);
    for (std::size_t t = 0; t < T; ++t) frames[t] = tape.slice_rows(x, t * M, M);

    std::vector<Tensor> hf(T), hb(T);
    Tensor h = Tensor::zeros(M, p.hidden);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor pre = tape.add(tape.matmul(frames[t], p.wx_f), tape.matmul(h, p.wh_f));
        h = tape.tanh(tape.add_rowvec(pre, p.bh_f));
        hf[t] = h;
    }
    h = Tensor::zeros(M, p.hidden);
    for (std::size_t t = T; t-- > 0;) {
        Tensor pre = tape.add(tape.matmul(frames[t], p.wx_b), tape.matmul(h, p.wh_b));
        h = tape.tanh(tape.add_rowvec(pre, p.bh_b));
        hb[t] = h;
    }

    std::vector<Tensor> cat(T);
    for (std::size_t t = 0; t < T; ++t) cat[t] = tape.concat_cols(hf[t], hb[t]);
    return tape.add_rowvec(tape.matmul(tape.concat_rows(cat), p.wy), p.by);
}

inline Tensor temporal_enhance(Tape& tape, const Tensor& x, std::size_t T,
                               std::size_t M, const BiRnnParams& p) {
    return birnn_apply(tape, x, T, M, p);
}

inline Tensor temporal_fuse(Tape& tape, const Tensor& x, std::size_t T,
                            std::size_t M, const BiRnnParams& p) {
    return birnn_apply(tape, x, T, M, p);
}

struct GraphEvolveParams {
    Tensor w_intra, w_inter;

    GraphEvolveParams() = default;
    GraphEvolveParams(Rng& rng, std::size_t d_in, std::size_t d_branch)
        : w_intra(init_param(rng, d_in, d_branch, d_in)),
          w_inter(init_param(rng, d_in, d_branch, d_in)) {}

    void reg(ParamRegistry& pr, const std::string& prefix) {
        pr.add(prefix + ".w_intra", w_intra);
        pr.add(prefix + ".w_inter", w_inter);
    }
};

// Two relation branches over the same node features, concatenated.
inline Tensor graph_evolve(Tape& tape, const Tensor& y, const ParsedAdjacency& adj,
                           const GraphEvolveParams& p) {
    Tensor zi = tape.adj_matmul(adj.a_intra, tape.matmul(y, p.w_intra));
    Tensor zj = tape.adj_matmul(adj.a_inter, tape.matmul(y, p.w_inter));
    return tape.concat_cols(zi, zj);
}

// Linear-BN-ReLU twice, then the class projection. Logits out.
struct ReadoutHead {
    LinearLayer l1, l2, l3;
    BatchNormLayer bn1, bn2;

    ReadoutHead() = default;
    ReadoutHead(Rng& rng, std::size_t d_in, std::size_t h1, std::size_t h2,
                std::size_t classes, bool use_norm)
        : l1(rng, d_in, h1),
          l2(rng, h1, h2),
          l3(rng, h2, classes),
          bn1(h1, use_norm),
          bn2(h2, use_norm) {}

    Tensor apply(Tape& tape, const Tensor& x, bool training) {
        Tensor a = tape.relu(bn1.apply(tape, l1.apply(tape, x), training));
        Tensor b = tape.relu(bn2.apply(tape, l2.apply(tape, a), training));
        return l3.apply(tape, b);
    }

    void reg(ParamRegistry& pr, BufferRegistry& br, const std::string& prefix) {
        l1.reg(pr, prefix + ".l1");
        bn1.reg(pr, br, prefix + ".bn1");
        l2.reg(pr, prefix + ".l2");
        bn2.reg(pr, br, prefix + ".bn2");
        l3.reg(pr, prefix + ".l3");
    }
};

// One stream's parameters end to end. Hidden sizes are half the output width
// so the concatenated directions land exactly on it.
struct StreamParams {
    std::size_t d_in = 0;
    BiRnnParams te;
    AffinityParams affinity;
    GraphEvolveParams evolve;
    BiRnnParams fuse;
    ReadoutHead head_h, head_o;

    StreamParams(Rng& rng, std::size_t d, const ModelDims& md, std::size_t c_h,
                 std::size_t c_o, bool use_norm)
        : d_in(check_even(d, "stream input width")),
          te(rng, d, d / 2, d),
          affinity(rng, d, md.d_att),
          evolve(rng, d, md.d_branch),
          fuse(rng, 2 * md.d_branch, check_even(md.d_fuse, "fused width") / 2, md.d_fuse),
          head_h(rng, md.d_fuse, md.head_h1, md.head_h2, c_h, use_norm),
          head_o(rng, md.d_fuse, md.head_h1, md.head_h2, c_o, use_norm) {}

    void reg(ParamRegistry& pr, BufferRegistry& br, const std::string& prefix) {
        te.reg(pr, prefix + ".te");
        affinity.reg(pr, prefix + ".att");
        evolve.reg(pr, prefix + ".evolve");
        fuse.reg(pr, prefix + ".fuse");
        head_h.reg(pr, br, prefix + ".head_h");
        head_o.reg(pr, br, prefix + ".head_o");
    }

private:
    static std::size_t check_even(std::size_t d, const char* what) {
        if (d == 0 || d % 2 != 0)
            throw ConfigError(std::string(what) + " must be a positive even number, got " +
                              std::to_string(d));
        return d;
    }
};

struct AblationFlags {
    bool no_te = false;
    bool intra_only = false;
    bool inter_only = false;
    bool dense_baseline = false;
};

inline void validate_ablation(const AblationFlags& f) {
    if (f.intra_only && f.inter_only)
        throw ConfigError("ablation: intra-only and inter-only are mutually exclusive");
    if (f.dense_baseline && (f.intra_only || f.inter_only))
        throw ConfigError(
            "ablation: dense-baseline replaces the parsed adjacency and cannot be "
            "combined with a branch restriction");
}

// Every heterogeneous pair weighted 1/degree. A plain constant: the attention
// parameters take no part in it.
inline Tensor uniform_dense_adjacency(const GraphMasks& g) {
    std::size_t n = g.dense.n;
    Tensor a = Tensor::zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t deg = 0;
        for (std::size_t j = 0; j < n; ++j) deg += g.dense.at(i, j) ? 1 : 0;
        if (deg == 0) continue;
        double w = 1.0 / static_cast<double>(deg);
        for (std::size_t j = 0; j < n; ++j)
            if (g.dense.at(i, j)) a.at(i, j) = w;
    }
    return a;
}

// Everything up to and including the parsed adjacency. Split out so graph
// export can stop here without running the heads.
struct StreamTrunk {
    Tensor y;  // enhanced features, or the raw input when TE is off
    GraphMasks masks;
    ParsedAdjacency adj;
};

inline StreamTrunk stream_trunk(Tape& tape, const Tensor& x, std::size_t T,
                                std::size_t M, const std::vector<std::uint8_t>& flags,
                                const StreamParams& sp, const AblationFlags& ab) {
    validate_ablation(ab);
    if (x.cols() != sp.d_in)
        throw ShapeError("stream input width " + std::to_string(x.cols()) +
                         " does not match parameters (" + std::to_string(sp.d_in) + ")");

    StreamTrunk tr;
    tr.masks = build_dense_masks(T, M, flags);
    tr.y = (ab.no_te || ab.dense_baseline) ? x : temporal_enhance(tape, x, T, M, sp.te);

    if (ab.dense_baseline) {
        Tensor u = uniform_dense_adjacency(tr.masks);
        tr.adj.a_intra = u;
        tr.adj.a_inter = u;
        return tr;
    }
    Tensor scores = pairwise_affinity(tape, tr.y, sp.affinity, tr.masks.dense);
    tr.adj = parse_adjacency(tape, scores, tr.masks);
    std::size_t n = tr.masks.dense.n;
    if (ab.intra_only) tr.adj.a_inter = Tensor::zeros(n, n);
    if (ab.inter_only) tr.adj.a_intra = Tensor::zeros(n, n);
    return tr;
}

// Per-entity logits, already averaged over frames. Object rows follow
// ascending instance slots.
struct StreamLogits {
    Tensor human;    // 1 x C_h
    Tensor objects;  // (M-1) x C_o
    std::vector<std::size_t> object_slots;
};

inline StreamLogits readout_logits(Tape& tape, const Tensor& z, std::size_t T,
                                   std::size_t M, const std::vector<std::uint8_t>& flags,
                                   StreamParams& sp, bool training) {
    if (flags.size() != M) throw ContractError("readout: flag count does not match M");
    std::size_t human = M;
    std::vector<std::size_t> slots;
    for (std::size_t m = 0; m < M; ++m) {
        if (flags[m]) {
            if (human != M) throw ConfigError("readout: more than one human instance");
            human = m;
        } else {
            slots.push_back(m);
        }
    }
    if (human == M) throw ConfigError("readout: no human instance");
    if (slots.empty()) throw ConfigError("readout: no object instances");

    std::vector<std::size_t> hrows(T);
    for (std::size_t t = 0; t < T; ++t) hrows[t] = t * M + human;
    StreamLogits out;
    out.human = tape.mean_rows(sp.head_h.apply(tape, tape.select_rows(z, hrows), training));
    out.object_slots = slots;

    std::vector<std::size_t> orows;
    orows.reserve(T * slots.size());
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t s : slots) orows.push_back(t * M + s);
    Tensor lo = sp.head_o.apply(tape, tape.select_rows(z, orows), training);
    std::vector<Tensor> per;
    per.reserve(slots.size());
    for (std::size_t p = 0; p < slots.size(); ++p) {
        std::vector<std::size_t> rows(T);
        for (std::size_t t = 0; t < T; ++t) rows[t] = t * slots.size() + p;
        per.push_back(tape.mean_rows(tape.select_rows(lo, rows)));
    }
    out.objects = tape.concat_rows(per);
    return out;
}

inline StreamLogits stream_forward(Tape& tape, const Tensor& x, std::size_t T,
                                   std::size_t M, const std::vector<std::uint8_t>& flags,
                                   StreamParams& sp, const AblationFlags& ab,
                                   bool training) {
    StreamTrunk tr = stream_trunk(tape, x, T, M, flags, sp, ab);
    Tensor z_st = graph_evolve(tape, tr.y, tr.adj, sp.evolve);
    Tensor z = temporal_fuse(tape, z_st, T, M, sp.fuse);
    return readout_logits(tape, z, T, M, flags, sp, training);
}

// Distributions for one sample: one row for the human, one per object.
struct Prediction {
    std::vector<double> human;
    std::vector<std::vector<double>> objects;
    std::vector<std::size_t> object_slots;
};

inline Prediction prediction_from_logits(const StreamLogits& lg) {
    Prediction p;
    p.human = softmax_row(std::span<const double>(lg.human.values()));
    p.object_slots = lg.object_slots;
    std::size_t c = lg.objects.cols();
    for (std::size_t r = 0; r < lg.objects.rows(); ++r) {
        std::span<const double> row(lg.objects.values().data() + r * c, c);
        p.objects.push_back(softmax_row(row));
    }
    return p;
}

inline Prediction predict(Tape& tape, const Tensor& z, std::size_t T, std::size_t M,
                          const std::vector<std::uint8_t>& flags, StreamParams& sp,
                          bool training = false) {
    return prediction_from_logits(readout_logits(tape, z, T, M, flags, sp, training));
}

inline std::vector<double> two_stream_fuse(const std::vector<double>& a,
                                           const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ShapeError("two_stream_fuse: class counts differ (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
    return out;
}

inline Prediction fuse_predictions(const Prediction& v, const Prediction& s) {
    if (v.object_slots != s.object_slots)
        throw ContractError("fuse_predictions: streams disagree on object slots");
    Prediction out;
    out.human = two_stream_fuse(v.human, s.human);
    out.object_slots = v.object_slots;
    for (std::size_t i = 0; i < v.objects.size(); ++i)
        out.objects.push_back(two_stream_fuse(v.objects[i], s.objects[i]));
    return out;
}

struct LossReport {
    Tensor total;  // scalar, lives on the tape
    double loss_v_h = 0, loss_v_o = 0, loss_s_h = 0, loss_s_o = 0;
    double lambda = 1.0;
};

// Joint objective: human term plus lambda-weighted object term, per stream,
// summed. Objects without an affordance label contribute nothing.
inline LossReport compute_loss(Tape& tape, const StreamLogits& vis,
                               const StreamLogits& sem, int activity,
                               const std::vector<int>& affordance, double lambda) {
    if (activity < 0) throw DataError("sample has no activity label");
    if (affordance.size() != vis.object_slots.size() ||
        affordance.size() != sem.object_slots.size())
        throw ContractError("loss: affordance labels do not line up with object rows");

    auto stream_terms = [&](const StreamLogits& s) {
        Tensor lh = tape.cross_entropy(s.human, {activity});
        std::vector<std::size_t> rows;
        std::vector<int> labels;
        for (std::size_t i = 0; i < affordance.size(); ++i)
            if (affordance[i] >= 0) {
                rows.push_back(i);
                labels.push_back(affordance[i]);
            }
        Tensor lo = rows.empty()
                        ? Tensor::scalar(0.0)
                        : tape.cross_entropy(tape.select_rows(s.objects, rows), labels);
        return std::pair<Tensor, Tensor>(lh, lo);
    };

    auto [lvh, lvo] = stream_terms(vis);
    auto [lsh, lso] = stream_terms(sem);
    LossReport r;
    r.total = tape.add(tape.add(lvh, tape.scale(lvo, lambda)),
                       tape.add(lsh, tape.scale(lso, lambda)));
    r.loss_v_h = lvh.item();
    r.loss_v_o = lvo.item();
    r.loss_s_h = lsh.item();
    r.loss_s_o = lso.item();
    r.lambda = lambda;
    return r;
}

// Affordance labels for the readout's object rows, -1 where unlabeled.
inline std::vector<int> object_labels(const VideoSample& s,
                                      const std::vector<std::size_t>& slots) {
    std::vector<int> out;
    out.reserve(slots.size());
    for (std::size_t m : slots) out.push_back(s.instances[m].affordance);
    return out;
}

enum class Stream { kVisual, kSemantic };

struct ModelConfig {
    FeatureDims feat = desk_feature_dims(6);
    ModelDims dims = desk_model_dims();
    std::size_t activity_classes = 4;
    std::size_t affordance_classes = 4;
    bool use_norm = true;
    double lambda = 1.0;
    std::uint64_t init_seed = 0;
};

struct ForwardOut {
    StreamLogits visual, semantic;
};

// The complete two-stream network. Parameter registry order is fixed by
// construction: encoder, then visual stream, then semantic stream. Pinned in
// place: the buffer registry points into the batchnorm layers, so a moved or
// copied Model would leave it dangling.
struct Model {
    ModelConfig cfg;
    Rng init_rng;  // consumed during construction only
    FeatureEncoder encoder;
    StreamParams visual, semantic;
    ParamRegistry params;
    BufferRegistry buffers;

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    explicit Model(const ModelConfig& c)
        : cfg(c),
          init_rng(hash_combine(c.init_seed, fnv1a("model-init"))),
          encoder(c.feat, c.use_norm, init_rng),
          visual(init_rng, c.feat.d_vis + c.feat.d_spa, c.dims, c.activity_classes,
                 c.affordance_classes, c.use_norm),
          semantic(init_rng, c.feat.d_spa + c.feat.d_sem, c.dims, c.activity_classes,
                   c.affordance_classes, c.use_norm) {
        encoder.register_into(params, buffers);
        visual.reg(params, buffers, "visual");
        semantic.reg(params, buffers, "semantic");
    }

    // The sample must already be cut to the frame count the caller wants.
    ForwardOut forward(Tape& tape, const VideoSample& s, const AblationFlags& ab,
                       bool training) {
        StreamInputs in = assemble_stream_inputs(tape, s, encoder, training);
        ForwardOut out;
        out.visual =
            stream_forward(tape, in.visual_spatial, in.T, in.M, in.human_flags, visual, ab, training);
        out.semantic = stream_forward(tape, in.spatial_semantic, in.T, in.M, in.human_flags,
                                      semantic, ab, training);
        return out;
    }

    LossReport loss(Tape& tape, const ForwardOut& f, const VideoSample& s) {
        return compute_loss(tape, f.visual, f.semantic, s.activity,
                            object_labels(s, f.visual.object_slots), cfg.lambda);
    }

    Prediction predict_fused(Tape& tape, const VideoSample& s, const AblationFlags& ab) {
        ForwardOut f = forward(tape, s, ab, false);
        return fuse_predictions(prediction_from_logits(f.visual),
                                prediction_from_logits(f.semantic));
    }

    // Parsed adjacency of one stream, for export and inspection.
    StreamTrunk trunk(Tape& tape, const VideoSample& s, Stream which,
                      const AblationFlags& ab) {
        StreamInputs in = assemble_stream_inputs(tape, s, encoder, false);
        const Tensor& x = which == Stream::kVisual ? in.visual_spatial : in.spatial_semantic;
        StreamParams& sp = which == Stream::kVisual ? visual : semantic;
        return stream_trunk(tape, x, in.T, in.M, in.human_flags, sp, ab);
    }
};

}  // namespace hoigraph
