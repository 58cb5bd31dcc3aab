// Command-line tool: train, eval, export-graph, synth-gen.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hoigraph/cli.hpp"

namespace {

// Shared run-config flags: a JSON file plus targeted overrides.
struct ConfigFlags {
    std::string path;
    std::uint64_t seed = 0;
    std::string preset;
    std::string ablation;
    CLI::Option *seed_opt = nullptr, *preset_opt = nullptr, *ablation_opt = nullptr;

    void wire(CLI::App* cmd) {
        cmd->add_option("--config", path, "run config JSON file");
        seed_opt = cmd->add_option("--seed", seed, "override the config seed");
        preset_opt = cmd->add_option("--preset", preset, "model size preset")
                         ->check(CLI::IsMember({"desk", "paper"}));
        ablation_opt =
            cmd->add_option("--ablation", ablation, "graph ablation")
                ->check(CLI::IsMember(
                    {"none", "no-te", "intra-only", "inter-only", "dense-baseline"}));
    }

    hoigraph::RunConfig resolve() const {
        hoigraph::RunConfig rc =
            path.empty() ? hoigraph::RunConfig{} : hoigraph::load_run_config(path);
        if (seed_opt->count()) rc.seed = seed;
        if (preset_opt->count()) rc.preset = preset;
        if (ablation_opt->count()) rc.ablation = ablation;
        hoigraph::validate_run_config(rc);
        return rc;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatio-temporal interaction graphs over video tracklets"};
    app.require_subcommand(1);

    // train ----------------------------------------------------------------
    auto* train = app.add_subcommand("train", "fit a model on a tracklet dataset");
    hoigraph::TrainArgs ta;
    ConfigFlags tcfg;
    tcfg.wire(train);
    train->add_option("--data", ta.data, "tracklet dataset JSON")->required();
    train->add_option("--visual", ta.visual, "visual feature sidecar JSON");
    train->add_option("--checkpoint", ta.checkpoint, "write the trained model here");
    train->add_option("--log", ta.log, "write the per-epoch loss CSV here");

    // eval -----------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "score a trained model on a dataset");
    hoigraph::EvalArgs ea;
    eval->add_option("--checkpoint", ea.checkpoint, "trained model JSON")->required();
    eval->add_option("--data", ea.data, "tracklet dataset JSON")->required();
    eval->add_option("--visual", ea.visual, "visual feature sidecar JSON");
    eval->add_option("--stream", ea.stream, "which stream to score")
        ->check(CLI::IsMember({"visual", "semantic", "both"}));
    eval->add_option("--ablation", ea.ablation, "override the checkpoint's ablation")
        ->check(CLI::IsMember(
            {"none", "no-te", "intra-only", "inter-only", "dense-baseline"}));
    eval->add_option("--out", ea.json_out, "write the metrics JSON here");

    // export-graph -----------------------------------------------------------
    auto* exp = app.add_subcommand("export-graph", "dump one video's parsed graphs");
    hoigraph::ExportGraphArgs xa;
    exp->add_option("--checkpoint", xa.checkpoint, "trained model JSON")->required();
    exp->add_option("--data", xa.data, "tracklet dataset JSON")->required();
    exp->add_option("--visual", xa.visual, "visual feature sidecar JSON");
    exp->add_option("--video", xa.video, "video_id to export")->required();
    exp->add_option("--out", xa.out, "base path for the .json and .dot files")
        ->required();
    exp->add_option("--stream", xa.stream, "which stream's graph to export")
        ->check(CLI::IsMember({"visual", "semantic", "both"}));
    exp->add_option("--ablation", xa.ablation, "override the checkpoint's ablation")
        ->check(CLI::IsMember(
            {"none", "no-te", "intra-only", "inter-only", "dense-baseline"}));
    exp->add_option("--top-n", xa.top_n, "cross-frame edges kept per human node");

    // synth-gen ---------------------------------------------------------------
    auto* synth = app.add_subcommand("synth-gen", "write a synthetic dataset");
    hoigraph::SynthGenArgs sa;
    synth->add_option("--out", sa.out, "tracklet dataset JSON to write")->required();
    synth->add_option("--visual-out", sa.visual_out, "visual sidecar JSON to write");
    synth->add_option("--task", sa.task, "label family")
        ->check(CLI::IsMember({"motion", "ordering"}));
    synth->add_option("--per-class", sa.cfg.samples_per_class, "videos per class")
        ->check(CLI::PositiveNumber);
    synth->add_option("--seed", sa.cfg.seed, "generator seed");
    synth->add_option("--k-min", sa.cfg.k_min, "min objects per scene");
    synth->add_option("--k-max", sa.cfg.k_max, "max objects per scene");
    synth->add_option("--len-min", sa.cfg.len_min, "min clip length in frames");
    synth->add_option("--len-max", sa.cfg.len_max, "max clip length in frames");
    synth->add_option("--jitter", sa.cfg.box_jitter, "box jitter sigma in pixels");
    synth->add_option("--d-raw", sa.cfg.d_raw, "visual feature width");
    synth->add_option("--noise", sa.cfg.visual_noise, "visual feature noise sigma");
    synth->add_option("--semantic-classes", sa.cfg.semantic_classes,
                      "object vocabulary size (class 0 is the hand)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            ta.rc = tcfg.resolve();
            hoigraph::cmd_train(ta, std::cout);
        } else if (*eval) {
            hoigraph::cmd_eval(ea, std::cout);
        } else if (*exp) {
            hoigraph::cmd_export_graph(xa, std::cout);
        } else if (*synth) {
            hoigraph::cmd_synth_gen(sa, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
