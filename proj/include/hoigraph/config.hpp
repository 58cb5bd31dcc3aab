#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoigraph/data.hpp"
#include "hoigraph/model.hpp"

namespace hoigraph {

// One flat bag of knobs covering model construction, synthesis alignment and
// the training schedule. This is what the CLI config file holds and what a
// checkpoint embeds.
struct RunConfig {
    std::string preset = "desk";   // desk | paper
    std::string task = "motion";   // motion | ordering
    std::string ablation = "none";
    std::size_t semantic_classes = 6;
    bool use_norm = true;
    double lambda = 1.0;

    std::size_t epochs = 300;
    double lr = 2e-5;
    double lr_decay = 0.8;
    std::size_t lr_decay_every = 10;
    std::size_t frames = 10;   // frames sampled per video
    double val_ratio = 0.1;    // 0 validates on the training set itself
    std::uint64_t seed = 0;
};

inline AblationFlags ablation_from_string(const std::string& name) {
    if (name == "none") return {};
    if (name == "no-te") return {true, false, false, false};
    if (name == "intra-only") return {false, true, false, false};
    if (name == "inter-only") return {false, false, true, false};
    if (name == "dense-baseline") return {false, false, false, true};
    throw ConfigError("unknown ablation '" + name + "'");
}

inline SynthTask task_from_string(const std::string& name) {
    if (name == "motion") return SynthTask::motion;
    if (name == "ordering") return SynthTask::ordering;
    throw ConfigError("unknown task '" + name + "'");
}

inline void validate_run_config(const RunConfig& c) {
    if (c.preset != "desk" && c.preset != "paper")
        throw ConfigError("preset must be 'desk' or 'paper', got '" + c.preset + "'");
    task_from_string(c.task);
    ablation_from_string(c.ablation);
    if (c.semantic_classes < 2) throw ConfigError("semantic_classes must be at least 2");
    if (c.lambda < 0) throw ConfigError("lambda must be non-negative");
    if (c.epochs == 0) throw ConfigError("epochs must be positive");
    if (c.lr <= 0) throw ConfigError("lr must be positive");
    if (c.lr_decay <= 0 || c.lr_decay > 1) throw ConfigError("lr_decay must be in (0, 1]");
    if (c.lr_decay_every == 0) throw ConfigError("lr_decay_every must be positive");
    if (c.frames == 0) throw ConfigError("frames must be positive");
    if (c.val_ratio < 0 || c.val_ratio >= 1) throw ConfigError("val_ratio must be in [0, 1)");
}

inline nlohmann::json run_config_json(const RunConfig& c) {
    return {{"preset", c.preset},
            {"task", c.task},
            {"ablation", c.ablation},
            {"semantic_classes", c.semantic_classes},
            {"use_norm", c.use_norm},
            {"lambda", c.lambda},
            {"epochs", c.epochs},
            {"lr", c.lr},
            {"lr_decay", c.lr_decay},
            {"lr_decay_every", c.lr_decay_every},
            {"frames", c.frames},
            {"val_ratio", c.val_ratio},
            {"seed", c.seed}};
}

// Strict parse: every key must be known and well typed. Missing keys keep
// their defaults.
inline RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "preset") c.preset = value.get<std::string>();
            else if (key == "task") c.task = value.get<std::string>();
            else if (key == "ablation") c.ablation = value.get<std::string>();
            else if (key == "semantic_classes") c.semantic_classes = value.get<std::size_t>();
            else if (key == "use_norm") c.use_norm = value.get<bool>();
            else if (key == "lambda") c.lambda = value.get<double>();
            else if (key == "epochs") c.epochs = value.get<std::size_t>();
            else if (key == "lr") c.lr = value.get<double>();
            else if (key == "lr_decay") c.lr_decay = value.get<double>();
            else if (key == "lr_decay_every") c.lr_decay_every = value.get<std::size_t>();
            else if (key == "frames") c.frames = value.get<std::size_t>();
            else if (key == "val_ratio") c.val_ratio = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw ConfigError("config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate_run_config(c);
    return c;
}

inline ModelConfig make_model_config(const RunConfig& rc) {
    validate_run_config(rc);
    ModelConfig mc;
    mc.feat = rc.preset == "paper" ? paper_feature_dims(rc.semantic_classes)
                                   : desk_feature_dims(rc.semantic_classes);
    mc.dims = rc.preset == "paper" ? paper_model_dims() : desk_model_dims();
    mc.activity_classes =
        static_cast<std::size_t>(synth_activity_classes(task_from_string(rc.task)));
    mc.affordance_classes = static_cast<std::size_t>(kAffordanceClasses);
    mc.use_norm = rc.use_norm;
    mc.lambda = rc.lambda;
    mc.init_seed = rc.seed;
    return mc;
}

inline std::vector<std::string> activity_class_names(SynthTask task) {
    std::vector<std::string> out;
    for (int c = 0; c < synth_activity_classes(task); ++c)
        out.push_back(synth_class_name(task, c));
    return out;
}

inline std::vector<std::string> affordance_class_names() {
    return {"stationary", "reachable", "movable", "placeable"};
}

}  // namespace hoigraph
