#include "claimcast/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "claimcast/errors.hpp"

namespace claimcast {

using nlohmann::json;

namespace {

json spec_to_json(const ModelSpec& spec) {
    return json{{"variant", variant_name(spec.variant)},
                {"cell", spec.cell == CellKind::Lstm ? "lstm" : "vanilla_rnn"},
                {"recurrent_layers", spec.recurrent_layers},
                {"recurrent_units", spec.recurrent_units},
                {"dense_layers", spec.dense_layers},
                {"dense_units", spec.dense_units},
                {"n_static_features", spec.n_static_features},
                {"n_seq_channels", spec.n_seq_channels},
                {"severity_vocab", spec.severity_vocab},
                {"age_vocab", spec.age_vocab},
                {"embedding_dim", spec.embedding_dim},
                {"dropout_rate", spec.dropout_rate},
                {"batch_norm", spec.batch_norm},
                {"layer_norm", spec.layer_norm}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec spec;
    spec.variant = parse_variant(j.at("variant").get<std::string>());
    const std::string cell = j.at("cell").get<std::string>();
    if (cell == "lstm") {
        spec.cell = CellKind::Lstm;
    } else if (cell == "vanilla_rnn") {
        spec.cell = CellKind::VanillaRnn;
    } else {
        throw parse_error("checkpoint: unknown cell kind '" + cell + "'");
    }
    j.at("recurrent_layers").get_to(spec.recurrent_layers);
    j.at("recurrent_units").get_to(spec.recurrent_units);
    j.at("dense_layers").get_to(spec.dense_layers);
    j.at("dense_units").get_to(spec.dense_units);
    j.at("n_static_features").get_to(spec.n_static_features);
    j.at("n_seq_channels").get_to(spec.n_seq_channels);
    j.at("severity_vocab").get_to(spec.severity_vocab);
    j.at("age_vocab").get_to(spec.age_vocab);
    j.at("embedding_dim").get_to(spec.embedding_dim);
    j.at("dropout_rate").get_to(spec.dropout_rate);
    j.at("batch_norm").get_to(spec.batch_norm);
    j.at("layer_norm").get_to(spec.layer_norm);
    return spec;
}

json stats_to_json(const NormalisationStats& stats) {
    return json{{"static_mean", stats.static_mean}, {"static_sd", stats.static_sd},
                {"seq_mean", stats.seq_mean},       {"seq_sd", stats.seq_sd},
                {"target_mean", stats.target_mean}, {"target_sd", stats.target_sd}};
}

NormalisationStats stats_from_json(const json& j) {
    NormalisationStats stats;
    j.at("static_mean").get_to(stats.static_mean);
    j.at("static_sd").get_to(stats.static_sd);
    j.at("seq_mean").get_to(stats.seq_mean);
    j.at("seq_sd").get_to(stats.seq_sd);
    j.at("target_mean").get_to(stats.target_mean);
    j.at("target_sd").get_to(stats.target_sd);
    return stats;
}

json combo_to_json(const GridPoint& combo) {
    return json{{"index", combo.index},
                {"layers", combo.layers},
                {"units", combo.units},
                {"learning_rate", combo.learning_rate},
                {"batch_size", combo.batch_size}};
}

GridPoint combo_from_json(const json& j) {
    GridPoint combo;
    j.at("index").get_to(combo.index);
    j.at("layers").get_to(combo.layers);
    j.at("units").get_to(combo.units);
    j.at("learning_rate").get_to(combo.learning_rate);
    j.at("batch_size").get_to(combo.batch_size);
    return combo;
}

}  // namespace

Checkpoint make_checkpoint(const Model& model, const NormalisationStats& stats,
                           std::uint64_t seed, const SmearingFactor& smearing,
                           const GridPoint& combo, bool include_current_ce) {
    Checkpoint ckpt;
    ckpt.spec = model.spec();
    ckpt.params = model.params().values();
    ckpt.bn_states = model.bn_states();
    ckpt.stats = stats;
    ckpt.seed = seed;
    ckpt.smearing = smearing;
    ckpt.combo = combo;
    ckpt.include_current_ce = include_current_ce;
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    json j;
    j["version"] = ckpt.version;
    j["spec"] = spec_to_json(ckpt.spec);
    j["params"] = ckpt.params;
    json bn = json::array();
    for (const BatchNormState& state : ckpt.bn_states) {
        std::vector<double> mean(state.running_mean.data(),
                                 state.running_mean.data() + state.running_mean.size());
        std::vector<double> var(state.running_var.data(),
                                state.running_var.data() + state.running_var.size());
        bn.push_back(json{{"mean", mean}, {"var", var}});
    }
    j["bn_running"] = bn;
    j["normalisation"] = stats_to_json(ckpt.stats);
    j["seed"] = ckpt.seed;
    j["smearing"] = json{{"b", ckpt.smearing.b},
                         {"n_validation", ckpt.smearing.n_validation},
                         {"source", ckpt.smearing.source}};
    j["combo"] = combo_to_json(ckpt.combo);
    j["include_current_ce"] = ckpt.include_current_ce;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw parse_error("checkpoint '" + path.string() + "': " + e.what());
    }
    Checkpoint ckpt;
    if (!j.contains("version")) throw parse_error("checkpoint missing mandatory version field");
    j.at("version").get_to(ckpt.version);
    if (ckpt.version != 1)
        throw parse_error("unsupported checkpoint version " + std::to_string(ckpt.version));
    ckpt.spec = spec_from_json(j.at("spec"));
    j.at("params").get_to(ckpt.params);
    for (const json& state_j : j.at("bn_running")) {
        std::vector<double> mean, var;
        state_j.at("mean").get_to(mean);
        state_j.at("var").get_to(var);
        BatchNormState state;
        state.running_mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        state.running_var = Eigen::Map<const Vec>(var.data(), static_cast<Eigen::Index>(var.size()));
        ckpt.bn_states.push_back(std::move(state));
    }
    ckpt.stats = stats_from_json(j.at("normalisation"));
    j.at("seed").get_to(ckpt.seed);
    ckpt.smearing.b = j.at("smearing").at("b").get<double>();
    ckpt.smearing.n_validation = j.at("smearing").at("n_validation").get<std::size_t>();
    ckpt.smearing.source = j.at("smearing").at("source").get<std::string>();
    ckpt.combo = combo_from_json(j.at("combo"));
    j.at("include_current_ce").get_to(ckpt.include_current_ce);
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model model(ckpt.spec);
    if (model.params().size() != ckpt.params.size())
        throw parse_error("checkpoint parameter count does not match the architecture");
    model.params().values() = ckpt.params;
    if (model.bn_states().size() != ckpt.bn_states.size())
        throw parse_error("checkpoint batch-norm state count does not match the architecture");
    model.bn_states() = ckpt.bn_states;
    return model;
}

}  // namespace claimcast
