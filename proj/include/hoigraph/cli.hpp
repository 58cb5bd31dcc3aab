#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hoigraph/checkpoint.hpp"
#include "hoigraph/config.hpp"
#include "hoigraph/data.hpp"
#include "hoigraph/graph.hpp"
#include "hoigraph/metrics.hpp"
#include "hoigraph/model.hpp"
#include "hoigraph/train.hpp"

// Implementations behind the hoigraph binary. They live in the library so
// tests can drive whole commands without spawning processes.

namespace hoigraph {

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << text;
    if (!out) throw DataError("failed while writing: " + path);
}

inline RunConfig load_run_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

// Loads a tracklet dataset, attaching a visual sidecar when one is given.
inline std::vector<VideoSample> load_cli_dataset(const std::string& data_path,
                                                 const std::string& visual_path) {
    auto data = load_dataset(data_path);
    if (!visual_path.empty()) attach_visual(data, load_visual_features(visual_path));
    return data;
}

struct TrainArgs {
    RunConfig rc;
    std::string data;        // tracklet dataset JSON (required)
    std::string visual;      // optional visual feature sidecar
    std::string checkpoint;  // optional: write the trained model here
    std::string log;         // optional: write the per-epoch loss CSV here
};

inline TrainResult cmd_train(const TrainArgs& a, std::ostream& out) {
    validate_run_config(a.rc);
    auto data = load_cli_dataset(a.data, a.visual);
    if (data.empty()) throw DataError("training dataset is empty: " + a.data);

    std::vector<VideoSample> train = std::move(data), val;
    if (a.rc.val_ratio > 0.0) {
        auto split = dataset_split(train, 1.0 - a.rc.val_ratio,
                                   hash_combine(a.rc.seed, fnv1a("val-split")));
        train = std::move(split.first);
        val = std::move(split.second);
    }

    Model model(make_model_config(a.rc));
    AdamConfig ac;
    ac.lr = a.rc.lr;
    Adam adam(ac);
    adam.attach(model.params.tensors());

    out << "training on " << train.size() << " videos";
    if (!val.empty()) out << ", validating on " << val.size();
    out << "\n";
    TrainResult r = train_model(model, adam, train, val, a.rc, &out);

    char line[96];
    std::snprintf(line, sizeof line, "best epoch %zu, score %.4f\n", r.best_epoch,
                  r.best_score);
    out << line;
    if (!a.log.empty()) {
        write_text_file(a.log, loss_csv(r.log));
        out << "wrote " << a.log << "\n";
    }
    if (!a.checkpoint.empty()) {
        save_checkpoint(a.checkpoint, model, a.rc, &adam);
        out << "wrote " << a.checkpoint << "\n";
    }
    return r;
}

struct EvalArgs {
    std::string checkpoint;       // trained model (required)
    std::string data;             // dataset to score (required)
    std::string visual;           // optional visual feature sidecar
    std::string stream = "both";  // visual | semantic | both
    std::string ablation;         // empty = keep the checkpoint's setting
    std::string json_out;         // optional: write the metrics JSON here
};

inline MetricsReport cmd_eval(const EvalArgs& a, std::ostream& out) {
    LoadedModel lm = load_model(a.checkpoint);
    auto data = load_cli_dataset(a.data, a.visual);
    AblationFlags ab =
        ablation_from_string(a.ablation.empty() ? lm.rc.ablation : a.ablation);
    EvalStream stream = eval_stream_from_string(a.stream);

    MetricsReport rep = evaluate(*lm.model, data, lm.rc.frames, ab, stream);
    SynthTask task = task_from_string(lm.rc.task);
    out << metrics_table(rep, activity_class_names(task), affordance_class_names());
    std::string j = metrics_json(rep).dump(1) + "\n";
    if (a.json_out.empty()) {
        out << j;
    } else {
        write_text_file(a.json_out, j);
        out << "wrote " << a.json_out << "\n";
    }
    return rep;
}

struct ExportGraphArgs {
    std::string checkpoint;         // trained model (required)
    std::string data;               // dataset holding the video (required)
    std::string visual;             // optional visual feature sidecar
    std::string video;              // video_id to export (required)
    std::string out;                // base path; writes <out>.json and <out>.dot
    std::string stream = "visual";  // "both" exports the visual stream's graph
    std::string ablation;           // empty = keep the checkpoint's setting
    int top_n = 3;                  // cross-frame edges kept per human node
};

inline void cmd_export_graph(const ExportGraphArgs& a, std::ostream& out) {
    if (a.top_n < 1) throw ConfigError("top-n must be at least 1");
    if (a.out.empty()) throw ConfigError("export-graph needs an output path");
    LoadedModel lm = load_model(a.checkpoint);
    auto data = load_cli_dataset(a.data, a.visual);

    const VideoSample* hit = nullptr;
    for (const auto& s : data)
        if (s.video_id == a.video) { hit = &s; break; }
    if (!hit) throw DataError("dataset has no video '" + a.video + "'");

    AblationFlags ab =
        ablation_from_string(a.ablation.empty() ? lm.rc.ablation : a.ablation);
    Stream which = eval_stream_from_string(a.stream) == EvalStream::semantic
                       ? Stream::kSemantic
                       : Stream::kVisual;

    VideoSample cut = uniform_sample_frames(*hit, lm.rc.frames);
    Tape tape;
    StreamTrunk tr = lm.model->trunk(tape, cut, which, ab);
    nlohmann::json j =
        adjacency_json(cut.video_id, tr.masks, tr.adj.a_intra, tr.adj.a_inter);
    write_text_file(a.out + ".json", j.dump(1) + "\n");
    write_text_file(a.out + ".dot",
                    adjacency_dot(tr.masks, tr.adj.a_intra, tr.adj.a_inter, a.top_n));
    out << "wrote " << a.out << ".json and " << a.out << ".dot\n";
}

struct SynthGenArgs {
    SyntheticConfig cfg;
    std::string task = "motion";  // motion | ordering
    std::string out;              // tracklet dataset JSON (required)
    std::string visual_out;       // optional: write the visual sidecar here
};

inline std::size_t cmd_synth_gen(const SynthGenArgs& a, std::ostream& out) {
    if (a.out.empty()) throw ConfigError("synth-gen needs an output path");
    SyntheticConfig cfg = a.cfg;
    cfg.task = task_from_string(a.task);
    auto data = synth_generate(cfg);
    save_dataset(a.out, data);
    out << "wrote " << data.size() << " videos to " << a.out << "\n";
    if (!a.visual_out.empty()) {
        save_visual_features(a.visual_out, data, cfg.d_raw);
        out << "wrote visual features to " << a.visual_out << "\n";
    }
    return data.size();
}

}  // namespace hoigraph
