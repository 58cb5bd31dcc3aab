#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoigraph/config.hpp"
#include "hoigraph/model.hpp"
#include "hoigraph/optim.hpp"

namespace hoigraph {

inline constexpr int kCheckpointVersion = 1;

// Everything a run needs to resume or evaluate: the flat run config, every
// parameter with its shape, the batchnorm buffers, and the Adam state keyed
// by parameter name. nlohmann keeps object keys sorted and prints doubles in
// shortest-round-trip form, so identical states serialize to identical bytes.
inline nlohmann::json checkpoint_json(const Model& model, const RunConfig& rc,
                                      const Adam* adam) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, p] : model.params.items) {
        for (double v : p.values())
            if (!std::isfinite(v))
                throw DataError("checkpoint: parameter '" + name + "' is not finite");
        params[name] = {{"shape", {p.rows(), p.cols()}}, {"values", p.values()}};
    }
    nlohmann::json buffers = nlohmann::json::object();
    for (const auto& [name, b] : model.buffers.items) buffers[name] = *b;

    nlohmann::json j = {{"format_version", kCheckpointVersion},
                        {"config", run_config_json(rc)},
                        {"params", params},
                        {"buffers", buffers}};
    if (adam) {
        nlohmann::json m = nlohmann::json::object(), v = nlohmann::json::object();
        for (std::size_t i = 0; i < model.params.items.size(); ++i) {
            const std::string& name = model.params.items[i].first;
            m[name] = adam->m()[i];
            v[name] = adam->v()[i];
        }
        j["adam"] = {{"t", adam->step_count()}, {"m", m}, {"v", v}};
    }
    return j;
}

inline void save_checkpoint(const std::string& path, const Model& model,
                            const RunConfig& rc, const Adam* adam = nullptr) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out << checkpoint_json(model, rc, adam).dump(1) << "\n";
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

inline nlohmann::json read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint '" + path + "': " + e.what());
    }
    if (!j.is_object() || !j.contains("format_version"))
        throw DataError("'" + path + "' is not a checkpoint file");
    if (j.at("format_version").get<int>() != kCheckpointVersion)
        throw DataError("checkpoint '" + path + "' has format_version " +
                        j.at("format_version").dump() + ", expected " +
                        std::to_string(kCheckpointVersion));
    return j;
}

inline RunConfig checkpoint_run_config(const nlohmann::json& j) {
    return parse_run_config(j.at("config"));
}

// Loads values into an already-constructed model. Strict: the file must hold
// exactly the parameters and buffers this model registers, each with the
// right shape.
inline void restore_model(Model& model, const nlohmann::json& j) {
    try {
        const nlohmann::json& params = j.at("params");
        if (params.size() != model.params.items.size())
            throw DataError("checkpoint holds " + std::to_string(params.size()) +
                            " parameters, the model expects " +
                            std::to_string(model.params.items.size()));
        for (auto& [name, p] : model.params.items) {
            if (!params.contains(name))
                throw DataError("checkpoint is missing parameter '" + name + "'");
            const nlohmann::json& entry = params.at(name);
            auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2 || shape[0] != p.rows() || shape[1] != p.cols())
                throw DataError("checkpoint parameter '" + name + "' has shape " +
                                entry.at("shape").dump() + ", expected " + p.shape_str());
            auto values = entry.at("values").get<std::vector<double>>();
            if (values.size() != p.numel())
                throw DataError("checkpoint parameter '" + name + "' holds " +
                                std::to_string(values.size()) + " values, expected " +
                                std::to_string(p.numel()));
            p.values() = std::move(values);
        }

        const nlohmann::json& buffers = j.at("buffers");
        if (buffers.size() != model.buffers.items.size())
            throw DataError("checkpoint holds " + std::to_string(buffers.size()) +
                            " buffers, the model expects " +
                            std::to_string(model.buffers.items.size()));
        for (auto& [name, b] : model.buffers.items) {
            if (!buffers.contains(name))
                throw DataError("checkpoint is missing buffer '" + name + "'");
            auto values = buffers.at(name).get<std::vector<double>>();
            if (values.size() != b->size())
                throw DataError("checkpoint buffer '" + name + "' holds " +
                                std::to_string(values.size()) + " values, expected " +
                                std::to_string(b->size()));
            *b = std::move(values);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

// Restores optimizer moments for resumption. The Adam instance must already
// be attached to the model's parameters, in registry order.
inline void restore_adam(Adam& adam, const Model& model, const nlohmann::json& j) {
    if (!j.contains("adam")) throw DataError("checkpoint has no optimizer state");
    try {
        const nlohmann::json& a = j.at("adam");
        std::vector<std::vector<double>> m, v;
        for (const auto& [name, p] : model.params.items) {
            m.push_back(a.at("m").at(name).get<std::vector<double>>());
            v.push_back(a.at("v").at(name).get<std::vector<double>>());
        }
        adam.restore(a.at("t").get<std::uint64_t>(), std::move(m), std::move(v));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

// Convenience for eval and export: rebuild the model a checkpoint describes.
// Heap-allocated because Model pins itself in place.
struct LoadedModel {
    std::unique_ptr<Model> model;
    RunConfig rc;
};

inline LoadedModel load_model(const std::string& path) {
    nlohmann::json j = read_checkpoint_file(path);
    LoadedModel out;
    out.rc = checkpoint_run_config(j);
    out.model = std::make_unique<Model>(make_model_config(out.rc));
    restore_model(*out.model, j);
    return out;
}

}  // namespace hoigraph
