#pragma once

#include <cstddef>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "hoigraph/config.hpp"
#include "hoigraph/data.hpp"
#include "hoigraph/metrics.hpp"
#include "hoigraph/model.hpp"
#include "hoigraph/optim.hpp"

namespace hoigraph {

enum class EvalStream { visual, semantic, both };

inline EvalStream eval_stream_from_string(const std::string& name) {
    if (name == "visual") return EvalStream::visual;
    if (name == "semantic") return EvalStream::semantic;
    if (name == "both") return EvalStream::both;
    throw ConfigError("unknown stream '" + name + "'");
}

// Run the model over a dataset and score it. Samples are cut to `frames`
// frames first, exactly as in training.
inline MetricsReport evaluate(Model& model, const std::vector<VideoSample>& data,
                              std::size_t frames, const AblationFlags& ab,
                              EvalStream stream = EvalStream::both) {
    if (data.empty()) throw DataError("evaluate: no samples");

    std::vector<int> act_truth, act_pred, aff_truth, aff_pred;
    std::vector<std::vector<double>> act_probs;
    for (const VideoSample& full : data) {
        if (full.activity < 0)
            throw DataError("video '" + full.video_id + "' has no activity label");
        if (static_cast<std::size_t>(full.activity) >= model.cfg.activity_classes)
            throw DataError("video '" + full.video_id + "' has activity " +
                            std::to_string(full.activity) + " but the model knows " +
                            std::to_string(model.cfg.activity_classes) + " classes");

        VideoSample s = uniform_sample_frames(full, frames);
        Tape tape;
        Prediction p;
        if (stream == EvalStream::both) {
            p = model.predict_fused(tape, s, ab);
        } else {
            ForwardOut f = model.forward(tape, s, ab, false);
            p = prediction_from_logits(stream == EvalStream::visual ? f.visual : f.semantic);
        }

        act_truth.push_back(s.activity);
        act_pred.push_back(static_cast<int>(top1_class(p.human)));
        act_probs.push_back(p.human);
        for (std::size_t i = 0; i < p.object_slots.size(); ++i) {
            int label = s.instances[p.object_slots[i]].affordance;
            if (label < 0) continue;
            if (static_cast<std::size_t>(label) >= model.cfg.affordance_classes)
                throw DataError("video '" + s.video_id + "' has affordance " +
                                std::to_string(label) + " but the model knows " +
                                std::to_string(model.cfg.affordance_classes) + " classes");
            aff_truth.push_back(label);
            aff_pred.push_back(static_cast<int>(top1_class(p.objects[i])));
        }
    }

    MetricsReport m;
    m.n_videos = act_truth.size();
    m.n_objects = aff_truth.size();
    m.activity = f1_report(act_truth, act_pred, model.cfg.activity_classes);
    if (!aff_truth.empty())
        m.affordance = f1_report(aff_truth, aff_pred, model.cfg.affordance_classes);
    m.top1 = topk_accuracy(act_probs, act_truth, 1);
    m.top5 = topk_accuracy(act_probs, act_truth, 5);
    return m;
}

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0;
    double loss = 0, loss_v_h = 0, loss_v_o = 0, loss_s_h = 0, loss_s_o = 0;
    double val_score = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_score = 0;
};

// Full state of a training run at one point in time, used to rewind the
// model to its best validation epoch.
struct Snapshot {
    std::vector<std::vector<double>> params;
    std::vector<std::vector<double>> buffers;
    std::uint64_t adam_t = 0;
    std::vector<std::vector<double>> adam_m, adam_v;
};

inline Snapshot take_snapshot(const Model& model, const Adam& adam) {
    Snapshot s;
    for (const auto& [name, p] : model.params.items) s.params.push_back(p.values());
    for (const auto& [name, b] : model.buffers.items) s.buffers.push_back(*b);
    s.adam_t = adam.step_count();
    s.adam_m = adam.m();
    s.adam_v = adam.v();
    return s;
}

inline void restore_snapshot(Model& model, Adam& adam, const Snapshot& s) {
    for (std::size_t i = 0; i < model.params.items.size(); ++i)
        model.params.items[i].second.values() = s.params[i];
    for (std::size_t i = 0; i < model.buffers.items.size(); ++i)
        *model.buffers.items[i].second = s.buffers[i];
    adam.restore(s.adam_t, s.adam_m, s.adam_v);
}

// Per-sample SGD with Adam, seeded epoch shuffles, per-epoch validation.
// When the run ends, the model and optimizer hold the state of the best
// validation epoch (strictly-greater comparison, so the earliest best wins).
// The per-epoch validation score is the macro F1 of sub-activity and
// affordance averaged, or sub-activity alone when no object is labeled.
inline TrainResult train_model(Model& model, Adam& adam,
                               const std::vector<VideoSample>& train_set,
                               const std::vector<VideoSample>& val_set,
                               const RunConfig& rc, std::ostream* progress = nullptr) {
    validate_run_config(rc);
    if (train_set.empty()) throw DataError("train: no samples");
    AblationFlags ab = ablation_from_string(rc.ablation);

    std::vector<VideoSample> train;
    train.reserve(train_set.size());
    for (const VideoSample& s : train_set) train.push_back(uniform_sample_frames(s, rc.frames));
    const std::vector<VideoSample>& val = val_set.empty() ? train_set : val_set;

    TrainResult result;
    double best = -1.0;
    Snapshot best_state;

    for (std::size_t epoch = 0; epoch < rc.epochs; ++epoch) {
        double lr = decayed_lr(rc.lr, epoch, rc.lr_decay, rc.lr_decay_every);
        adam.set_lr(lr);

        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(hash_combine(rc.seed, hash_combine(fnv1a("epoch"), epoch)));
        shuffle_rng.shuffle(order);

        EpochLog row;
        row.epoch = epoch;
        row.lr = lr;
        for (std::size_t i : order) {
            Tape tape;
            ForwardOut f = model.forward(tape, train[i], ab, true);
            LossReport r = model.loss(tape, f, train[i]);
            adam.zero_grad();
            tape.backward(r.total);
            adam.step();
            row.loss += r.total.item();
            row.loss_v_h += r.loss_v_h;
            row.loss_v_o += r.lambda * r.loss_v_o;
            row.loss_s_h += r.loss_s_h;
            row.loss_s_o += r.lambda * r.loss_s_o;
        }
        double n = static_cast<double>(train.size());
        row.loss /= n;
        row.loss_v_h /= n;
        row.loss_v_o /= n;
        row.loss_s_h /= n;
        row.loss_s_o /= n;

        MetricsReport m = evaluate(model, val, rc.frames, ab);
        row.val_score = m.n_objects > 0
                            ? 0.5 * (m.activity.macro_f1 + m.affordance.macro_f1)
                            : m.activity.macro_f1;
        result.log.push_back(row);

        if (row.val_score > best) {
            best = row.val_score;
            result.best_epoch = epoch;
            best_state = take_snapshot(model, adam);
        }
        if (progress) {
            char line[160];
            std::snprintf(line, sizeof line, "epoch %zu  lr %.3g  loss %.4f  val %.4f\n",
                          epoch, lr, row.loss, row.val_score);
            *progress << line << std::flush;
        }
    }

    result.best_score = best;
    restore_snapshot(model, adam, best_state);
    return result;
}

// One row per epoch, full double precision so identical runs write identical
// bytes.
inline std::string loss_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,lr,loss,loss_v_h,loss_v_o,loss_s_h,loss_s_o,val_score\n";
    char line[360];
    for (const EpochLog& r : log) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.epoch, r.lr, r.loss, r.loss_v_h, r.loss_v_o, r.loss_s_h, r.loss_s_o,
                      r.val_score);
        out += line;
    }
    return out;
}

}  // namespace hoigraph
