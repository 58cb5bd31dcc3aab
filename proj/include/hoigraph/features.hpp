#pragma once

#include <string>
#include <vector>

#include "hoigraph/data.hpp"
#include "hoigraph/params.hpp"
#include "hoigraph/tensor.hpp"

namespace hoigraph {

struct FeatureDims {
    int d_raw = 64;    // incoming visual vector size
    int d_vis = 32;    // projected visual size
    int d_spa = 16;    // spatial encoder output
    int d_sem = 8;     // semantic embedding size
    int spa_hidden = 8;
    int semantic_classes = 6;
};

inline FeatureDims paper_feature_dims(int semantic_classes) {
    return {2048, 1024, 256, 128, 128, semantic_classes};
}
inline FeatureDims desk_feature_dims(int semantic_classes) {
    return {64, 32, 16, 8, 8, semantic_classes};
}

struct SpatialQuad {
    double xc = 0, yc = 0, w = 0, h = 0;  // all normalized to [0,1]
};

inline SpatialQuad make_quad(const Box& b, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw DataError("spatial quad needs positive image dims, got " +
                        std::to_string(width) + "x" + std::to_string(height));
    }
    auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
    SpatialQuad q;
    q.xc = unit((b.x + b.w / 2) / static_cast<double>(width));
    q.yc = unit((b.y + b.h / 2) / static_cast<double>(height));
    q.w = unit(b.w / static_cast<double>(width));
    q.h = unit(b.h / static_cast<double>(height));
    return q;
}

// Shared per-node feature encoders: the spatial two-layer MLP, the visual
// projection, and the semantic embedding table. Both streams read the same
// spatial encoding, so its gradients accumulate from both.
class FeatureEncoder {
public:
    FeatureEncoder(const FeatureDims& dims, bool use_norm, Rng& rng)
        : dims_(dims),
          spa1_(rng, 4, static_cast<std::size_t>(dims.spa_hidden)),
          bn1_(static_cast<std::size_t>(dims.spa_hidden), use_norm),
          spa2_(rng, static_cast<std::size_t>(dims.spa_hidden),
                static_cast<std::size_t>(dims.d_spa)),
          bn2_(static_cast<std::size_t>(dims.d_spa), use_norm),
          vis_(rng, static_cast<std::size_t>(dims.d_raw),
               static_cast<std::size_t>(dims.d_vis)),
          sem_table_(init_param(rng, static_cast<std::size_t>(dims.semantic_classes),
                                static_cast<std::size_t>(dims.d_sem),
                                static_cast<std::size_t>(dims.d_sem))) {}

    const FeatureDims& dims() const { return dims_; }

    // quads: N x 4 rows of (xc, yc, w, h)
    Tensor encode_spatial(Tape& tape, const Tensor& quads, bool training) {
        if (quads.cols() != 4) {
            throw ShapeError("encode_spatial expects N x 4 quads, got " + quads.shape_str());
        }
        Tensor h = tape.relu(bn1_.apply(tape, spa1_.apply(tape, quads), training));
        return tape.relu(bn2_.apply(tape, spa2_.apply(tape, h), training));
    }

    Tensor project_visual(Tape& tape, const Tensor& raw) {
        if (raw.cols() != static_cast<std::size_t>(dims_.d_raw)) {
            throw ShapeError("project_visual expects width " + std::to_string(dims_.d_raw) +
                             ", got " + raw.shape_str());
        }
        return vis_.apply(tape, raw);
    }

    Tensor lookup_semantic(Tape& tape, const std::vector<int>& class_ids) {
        std::vector<std::size_t> rows;
        rows.reserve(class_ids.size());
        for (int c : class_ids) {
            if (c < 0 || c >= dims_.semantic_classes) {
                throw std::out_of_range("semantic class " + std::to_string(c) +
                                        " outside [0, " +
                                        std::to_string(dims_.semantic_classes) + ")");
            }
            rows.push_back(static_cast<std::size_t>(c));
        }
        return tape.select_rows(sem_table_, rows);
    }

    void register_into(ParamRegistry& pr, BufferRegistry& br) {
        spa1_.reg(pr, "feat.spa1");
        bn1_.reg(pr, br, "feat.bn1");
        spa2_.reg(pr, "feat.spa2");
        bn2_.reg(pr, br, "feat.bn2");
        vis_.reg(pr, "feat.vis");
        pr.add("feat.sem.table", sem_table_);
    }

private:
    FeatureDims dims_;
    LinearLayer spa1_;
    BatchNormLayer bn1_;
    LinearLayer spa2_;
    BatchNormLayer bn2_;
    LinearLayer vis_;
    Tensor sem_table_;
};

// Node-major layout shared by every downstream stage: node(t, m) = t*M + m.
struct StreamInputs {
    Tensor visual_spatial;    // (T*M) x (d_vis + d_spa)
    Tensor spatial_semantic;  // (T*M) x (d_spa + d_sem)
    std::size_t T = 0, M = 0;
    std::vector<std::uint8_t> human_flags;  // per instance
};

inline StreamInputs assemble_stream_inputs(Tape& tape, const VideoSample& s,
                                           FeatureEncoder& enc, bool training) {
    const std::size_t T = s.frames(), M = s.instances.size();
    const auto& d = enc.dims();

    std::vector<double> quads;
    std::vector<double> raw;
    std::vector<int> class_ids;
    quads.reserve(T * M * 4);
    raw.reserve(T * M * static_cast<std::size_t>(d.d_raw));
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t m = 0; m < M; ++m) {
            const auto& tr = s.instances[m];
            SpatialQuad q = make_quad(tr.boxes[t], s.width, s.height);
            quads.insert(quads.end(), {q.xc, q.yc, q.w, q.h});
            if (tr.visual.size() <= t) {
                throw DataError("video '" + s.video_id +
                                "': no visual feature at (t=" + std::to_string(t) +
                                ", m=" + std::to_string(m) + ")");
            }
            raw.insert(raw.end(), tr.visual[t].begin(), tr.visual[t].end());
            class_ids.push_back(tr.class_id);
        }
    }
    if (raw.size() != T * M * static_cast<std::size_t>(d.d_raw)) {
        throw ShapeError("visual features do not match d_raw = " + std::to_string(d.d_raw));
    }

    Tensor quad_t = Tensor::from(T * M, 4, std::move(quads));
    Tensor raw_t = Tensor::from(T * M, static_cast<std::size_t>(d.d_raw), std::move(raw));

    Tensor spa = enc.encode_spatial(tape, quad_t, training);
    Tensor vis = enc.project_visual(tape, raw_t);
    Tensor sem = enc.lookup_semantic(tape, class_ids);

    StreamInputs out;
    out.visual_spatial = tape.concat_cols(vis, spa);
    out.spatial_semantic = tape.concat_cols(spa, sem);
    out.T = T;
    out.M = M;
    out.human_flags.resize(M);
    for (std::size_t m = 0; m < M; ++m) out.human_flags[m] = s.instances[m].is_human ? 1 : 0;
    return out;
}

}  // namespace hoigraph
