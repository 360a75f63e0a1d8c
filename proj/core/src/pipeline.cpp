#include "claimcast/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "claimcast/errors.hpp"
#include "claimcast/parallel.hpp"
#include "claimcast/text.hpp"

namespace claimcast {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Profiles and configuration
// ---------------------------------------------------------------------------

std::vector<std::string> ExperimentConfig::nn_variants() const {
    std::vector<std::string> out;
    for (const std::string& v : variants)
        if (v != kCeBaselineName) out.push_back(v);
    return out;
}

bool ExperimentConfig::wants_ce() const {
    return std::find(variants.begin(), variants.end(), kCeBaselineName) != variants.end();
}

void ExperimentConfig::validate() const {
    simulation.validate();
    if (variants.empty()) throw config_error("variants must be nonempty");
    for (const std::string& v : variants)
        if (v != kCeBaselineName) parse_variant(v);  // throws on unknown names
    if (n_eval_datasets < 1) throw config_error("n_eval_datasets must be >= 1");
    if (static_cast<int>(split.valuation) != simulation.n_accident_quarters)
        throw config_error("split.valuation must equal the final accident quarter");
    if (split.mode == SplitMode::Finalisation) {
        if (split.train_cutoff >= split.valuation)
            throw config_error("split.train_cutoff must be < split.valuation");
        if (split.move_fraction < 0.0 || split.move_fraction >= 1.0)
            throw config_error("split.move_fraction must be in [0, 1)");
    } else {
        const double total = split.fractions[0] + split.fractions[1] + split.fractions[2];
        if (std::abs(total - 1.0) > 1e-9) throw config_error("split.fractions must sum to 1");
    }
    if (max_epochs < 1) throw config_error("max_epochs must be >= 1");
    if (patience < 1) throw config_error("patience must be >= 1");
    if (tuning_seeds < 1) throw config_error("tuning_seeds must be >= 1");
}

ExperimentConfig desk_profile() {
    ExperimentConfig cfg;
    cfg.profile = "desk";
    cfg.n_eval_datasets = 5;
    cfg.simulation.n_accident_quarters = 20;
    cfg.simulation.expected_claims_per_quarter = 150.0;
    cfg.split.train_cutoff = 16.0;
    cfg.split.valuation = 20.0;
    return cfg;
}

ExperimentConfig paper_profile() {
    ExperimentConfig cfg;
    cfg.profile = "paper";
    cfg.n_eval_datasets = 50;
    cfg.simulation.n_accident_quarters = 40;
    cfg.simulation.expected_claims_per_quarter = 750.0;
    cfg.split.train_cutoff = 36.0;
    cfg.split.valuation = 40.0;
    return cfg;
}

ExperimentConfig profile_by_name(const std::string& name) {
    if (name == "desk") return desk_profile();
    if (name == "paper") return paper_profile();
    throw config_error("unknown profile '" + name + "' (expected desk or paper)");
}

namespace {

class StrictObject {
public:
    StrictObject(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw config_error(name_ + " must be a JSON object");
    }
    bool has(const char* key) const { return j_.contains(key); }
    const json& at(const char* key) {
        seen_.push_back(key);
        return j_.at(key);
    }
    template <typename T>
    void get_to(const char* key, T& out) {
        if (has(key)) at(key).get_to(out);
    }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw config_error("unknown key '" + it.key() + "' in " + name_);
    }

private:
    const json& j_;
    std::string name_;
    std::vector<std::string> seen_;
};

}  // namespace

ExperimentConfig experiment_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("experiment config: ") + e.what());
    }
    StrictObject o(j, "experiment config");
    ExperimentConfig cfg;
    if (o.has("profile")) cfg = profile_by_name(o.at("profile").get<std::string>());
    o.get_to("seed", cfg.seed);
    if (o.has("out_dir")) cfg.out_dir = o.at("out_dir").get<std::string>();
    o.get_to("variants", cfg.variants);
    o.get_to("n_eval_datasets", cfg.n_eval_datasets);
    if (o.has("simulation"))
        cfg.simulation = simulation_config_from_json_text(o.at("simulation").dump(), cfg.simulation);
    if (o.has("split")) {
        StrictObject s(o.at("split"), "split");
        if (s.has("mode")) {
            const std::string mode = s.at("mode").get<std::string>();
            if (mode == "finalisation") {
                cfg.split.mode = SplitMode::Finalisation;
            } else if (mode == "naive") {
                cfg.split.mode = SplitMode::Naive;
            } else {
                throw config_error("split.mode must be 'finalisation' or 'naive'");
            }
        }
        s.get_to("train_cutoff", cfg.split.train_cutoff);
        s.get_to("valuation", cfg.split.valuation);
        s.get_to("move_fraction", cfg.split.move_fraction);
        s.get_to("fractions", cfg.split.fractions);
        s.finish();
    }
    if (o.has("grid")) {
        StrictObject g(o.at("grid"), "grid");
        g.get_to("lstm_layers", cfg.grid.lstm_layers);
        g.get_to("lstm_units", cfg.grid.lstm_units);
        g.get_to("lstm_learning_rates", cfg.grid.lstm_learning_rates);
        g.get_to("lstm_batch_sizes", cfg.grid.lstm_batch_sizes);
        g.get_to("fnn_layers", cfg.grid.fnn_layers);
        g.get_to("fnn_units", cfg.grid.fnn_units);
        g.get_to("fnn_learning_rates", cfg.grid.fnn_learning_rates);
        g.get_to("fnn_batch_sizes", cfg.grid.fnn_batch_sizes);
        g.finish();
    }
    if (o.has("training")) {
        StrictObject t(o.at("training"), "training");
        t.get_to("max_epochs", cfg.max_epochs);
        t.get_to("patience", cfg.patience);
        t.finish();
    }
    o.get_to("include_current_ce", cfg.include_current_ce);
    o.get_to("tuning_seeds", cfg.tuning_seeds);
    std::uint64_t workers = 0;
    o.get_to("workers", workers);
    if (o.has("workers")) cfg.workers = static_cast<std::size_t>(workers);
    o.finish();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open experiment config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return experiment_config_from_json_text(buf.str());
}

std::string experiment_config_to_json_text(const ExperimentConfig& cfg) {
    json j;
    j["profile"] = cfg.profile;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir.string();
    j["variants"] = cfg.variants;
    j["n_eval_datasets"] = cfg.n_eval_datasets;
    j["simulation"] = json::parse(simulation_config_to_json_text(cfg.simulation));
    j["split"] = json{{"mode", cfg.split.mode == SplitMode::Finalisation ? "finalisation" : "naive"},
                      {"train_cutoff", cfg.split.train_cutoff},
                      {"valuation", cfg.split.valuation},
                      {"move_fraction", cfg.split.move_fraction},
                      {"fractions", cfg.split.fractions}};
    j["grid"] = json{{"lstm_layers", cfg.grid.lstm_layers},
                     {"lstm_units", cfg.grid.lstm_units},
                     {"lstm_learning_rates", cfg.grid.lstm_learning_rates},
                     {"lstm_batch_sizes", cfg.grid.lstm_batch_sizes},
                     {"fnn_layers", cfg.grid.fnn_layers},
                     {"fnn_units", cfg.grid.fnn_units},
                     {"fnn_learning_rates", cfg.grid.fnn_learning_rates},
                     {"fnn_batch_sizes", cfg.grid.fnn_batch_sizes}};
    j["training"] = json{{"max_epochs", cfg.max_epochs}, {"patience", cfg.patience}};
    j["include_current_ce"] = cfg.include_current_ce;
    j["tuning_seeds"] = cfg.tuning_seeds;
    j["workers"] = cfg.workers;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Stage stamps (content-addressed stage outputs)
// ---------------------------------------------------------------------------

std::string dataset_name(int dataset_id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ds_%03d", dataset_id);
    return buf;
}

namespace {

namespace fs = std::filesystem;

constexpr int kCodeVersion = 1;

std::size_t effective_workers(const ExperimentConfig& cfg) {
    if (cfg.workers > 0) return cfg.workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

std::string stamp_key(const std::string& material) {
    return to_hex(fnv1a64(std::to_string(kCodeVersion) + "|" + material));
}

bool stamp_matches(const fs::path& path, const std::string& key) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    json j;
    try {
        in >> j;
    } catch (...) {
        return false;
    }
    return j.value("key", "") == key;
}

void write_stamp(const fs::path& path, const std::string& stage, const std::string& key) {
    json j{{"stage", stage}, {"key", key}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write stamp '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

void require_stamp(const fs::path& path, const std::string& key, const std::string& needed_stage) {
    if (!stamp_matches(path, key))
        throw dependency_error("missing or stale output of stage '" + needed_stage +
                               "'; run that stage first");
}

// --- content keys ----------------------------------------------------------

SimulationConfig dataset_simulation_config(const ExperimentConfig& cfg, int id) {
    SimulationConfig sim = cfg.simulation;
    sim.seed = derive_seed(cfg.seed, "simulate", static_cast<std::uint64_t>(id));
    return sim;
}

std::string simulate_material(const ExperimentConfig& cfg, int id) {
    return "simulate|" + simulation_config_to_json_text(dataset_simulation_config(cfg, id));
}

std::string split_material(const ExperimentConfig& cfg, int id) {
    json j{{"mode", cfg.split.mode == SplitMode::Finalisation ? "finalisation" : "naive"},
           {"train_cutoff", cfg.split.train_cutoff},
           {"valuation", cfg.split.valuation},
           {"move_fraction", cfg.split.move_fraction},
           {"fractions", cfg.split.fractions},
           {"seed", derive_seed(cfg.seed, "split", static_cast<std::uint64_t>(id))}};
    return j.dump();
}

std::string prepare_material(const ExperimentConfig& cfg, int id) {
    return "prepare|" + simulate_material(cfg, id) + "|" + split_material(cfg, id);
}

std::string grid_material(const ExperimentConfig& cfg) {
    json j{{"lstm_layers", cfg.grid.lstm_layers},
           {"lstm_units", cfg.grid.lstm_units},
           {"lstm_learning_rates", cfg.grid.lstm_learning_rates},
           {"lstm_batch_sizes", cfg.grid.lstm_batch_sizes},
           {"fnn_layers", cfg.grid.fnn_layers},
           {"fnn_units", cfg.grid.fnn_units},
           {"fnn_learning_rates", cfg.grid.fnn_learning_rates},
           {"fnn_batch_sizes", cfg.grid.fnn_batch_sizes}};
    return j.dump();
}

std::string tune_material(const ExperimentConfig& cfg, const std::string& variant) {
    json j{{"variant", variant},
           {"max_epochs", cfg.max_epochs},
           {"patience", cfg.patience},
           {"tuning_seeds", cfg.tuning_seeds},
           {"include_current_ce", cfg.include_current_ce},
           {"seed", derive_seed(cfg.seed, "tune-" + variant)}};
    return "tune|" + prepare_material(cfg, 0) + "|" + grid_material(cfg) + "|" + j.dump();
}

std::string combo_material(const GridPoint& combo) {
    json j{{"index", combo.index},       {"layers", combo.layers},
           {"units", combo.units},       {"learning_rate", combo.learning_rate},
           {"batch_size", combo.batch_size}};
    return j.dump();
}

std::string train_material(const ExperimentConfig& cfg, int id, const std::string& variant,
                           const GridPoint& combo) {
    json j{{"variant", variant},
           {"max_epochs", cfg.max_epochs},
           {"patience", cfg.patience},
           {"include_current_ce", cfg.include_current_ce},
           {"seed", derive_seed(cfg.seed, "train-" + variant, static_cast<std::uint64_t>(id))}};
    return "train|" + prepare_material(cfg, id) + "|" + combo_material(combo) + "|" + j.dump();
}

// --- paths ------------------------------------------------------------------

fs::path dataset_dir(const ExperimentConfig& cfg, int id) {
    return cfg.out_dir / "datasets" / dataset_name(id);
}
fs::path tuning_dir(const ExperimentConfig& cfg, const std::string& variant) {
    return cfg.out_dir / "tuning" / variant;
}
fs::path models_dir(const ExperimentConfig& cfg, int id) {
    return cfg.out_dir / "models" / dataset_name(id);
}
fs::path predictions_dir(const ExperimentConfig& cfg, int id) {
    return cfg.out_dir / "predictions" / dataset_name(id);
}
fs::path reports_dir(const ExperimentConfig& cfg, int id) {
    return cfg.out_dir / "reports" / dataset_name(id);
}

// --- shared loading helpers --------------------------------------------------

struct DatasetBundle {
    Portfolio portfolio;
    std::vector<Observation> observations;
    SplitAssignment split;
};

DatasetBundle load_bundle(const ExperimentConfig& cfg, int id, bool need_split) {
    const fs::path dir = dataset_dir(cfg, id);
    require_stamp(dir / ".stamp_simulate.json", stamp_key(simulate_material(cfg, id)), "simulate");
    DatasetBundle bundle;
    bundle.portfolio = load_transactions(dir / "transactions.csv");
    bundle.observations = build_observations(bundle.portfolio);
    if (need_split) {
        require_stamp(dir / ".stamp_prepare.json", stamp_key(prepare_material(cfg, id)), "prepare");
        bundle.split = load_split_manifest(dir / "splits.csv");
    }
    return bundle;
}

struct SplitObservations {
    std::vector<Observation> train, validation;
};

SplitObservations split_observations(const DatasetBundle& bundle) {
    SplitObservations out;
    for (const Observation& obs : bundle.observations) {
        switch (bundle.split.of(obs.claim_id)) {
            case Split::Train: out.train.push_back(obs); break;
            case Split::Validation: out.validation.push_back(obs); break;
            case Split::Test: break;
        }
    }
    return out;
}

GridPoint load_winner(const ExperimentConfig& cfg, const std::string& variant) {
    const fs::path path = tuning_dir(cfg, variant) / "winner.json";
    require_stamp(tuning_dir(cfg, variant) / ".stamp_tune.json",
                  stamp_key(tune_material(cfg, variant)), "tune");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw dependency_error("missing tuning winner for " + variant + "; run tune first");
    json j;
    in >> j;
    GridPoint combo;
    j.at("combo").at("index").get_to(combo.index);
    j.at("combo").at("layers").get_to(combo.layers);
    j.at("combo").at("units").get_to(combo.units);
    j.at("combo").at("learning_rate").get_to(combo.learning_rate);
    j.at("combo").at("batch_size").get_to(combo.batch_size);
    return combo;
}

void write_leaderboard(const std::vector<LeaderboardEntry>& leaderboard, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << "index,layers,units,learning_rate,batch_size,best_epoch,best_val_loss,status,error\n";
    for (const LeaderboardEntry& e : leaderboard) {
        out << e.combo.index << ',' << e.combo.layers << ',' << e.combo.units << ','
            << format_double(e.combo.learning_rate) << ',' << e.combo.batch_size << ','
            << e.best_epoch << ',' << (e.failed ? "" : format_double(e.best_val_loss)) << ','
            << (e.failed ? "failed" : "ok") << ',' << e.error << "\n";
    }
}

// Train one variant on one prepared dataset and return the checkpoint.
Checkpoint train_one(const ExperimentConfig& cfg, const DatasetBundle& bundle, int id,
                     const std::string& variant_str, const GridPoint& combo) {
    const Variant variant = parse_variant(variant_str);
    const SplitObservations sets = split_observations(bundle);
    if (sets.train.empty()) throw config_error(dataset_name(id) + ": empty training split");
    if (sets.validation.empty()) throw config_error(dataset_name(id) + ": empty validation split");

    const NormalisationStats stats = fit_normaliser(bundle.portfolio, sets.train);
    const EncodedDataset train_ds = encode_observations(bundle.portfolio, sets.train, variant,
                                                        stats, cfg.include_current_ce);
    const EncodedDataset val_ds = encode_observations(bundle.portfolio, sets.validation, variant,
                                                      stats, cfg.include_current_ce);

    TrainingConfig training;
    training.optimiser.learning_rate = combo.learning_rate;
    training.batch_size = combo.batch_size;
    training.max_epochs = cfg.max_epochs;
    training.patience = cfg.patience;
    training.seed = derive_seed(cfg.seed, "train-" + variant_str, static_cast<std::uint64_t>(id));

    Model model(ModelSpec::for_variant(variant, combo.layers, combo.units, train_ds.n_static(),
                                       train_ds.n_channels()));
    RngStream init(derive_seed(training.seed, "init"));
    model.init_params(init);
    train_model(model, train_ds, val_ds, training);

    // Smearing factor: validation-set residuals on the log-dollar scale.
    const Vec val_pred = model.predict(val_ds);
    Vec y_log(val_ds.size()), yhat_log(val_ds.size());
    for (Eigen::Index i = 0; i < val_ds.size(); ++i) {
        y_log(i) = std::log(val_ds.actual_ultimate(i));
        yhat_log(i) = val_pred(i) * stats.target_sd + stats.target_mean;
    }
    const SmearingFactor smearing = fit_smearing_factor(y_log, yhat_log, variant_str);

    return make_checkpoint(model, stats, training.seed, smearing, combo, cfg.include_current_ce);
}

PredictionSet predictions_from_checkpoint(const Checkpoint& ckpt, const Portfolio& portfolio,
                                          std::span<const Observation> slice,
                                          const std::string& source) {
    const Model model = model_from_checkpoint(ckpt);
    const EncodedDataset ds = encode_observations(portfolio, slice, ckpt.spec.variant, ckpt.stats,
                                                  ckpt.include_current_ce);
    const Vec pred = model.predict(ds);
    PredictionSet out;
    out.source = source;
    out.rows.reserve(slice.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        PredictionRow row;
        row.claim_id = ds.claim_ids[u];
        row.prediction_quarter = ds.prediction_quarters[u];
        row.accident_quarter = ds.accident_quarters[u];
        row.dev_quarter = ds.dev_quarters[u];
        const double yhat_log = pred(i) * ckpt.stats.target_sd + ckpt.stats.target_mean;
        row.y_hat = std::exp(yhat_log) * ckpt.smearing.b;
        row.paid = ds.paid_to_date(i);
        row.actual_ultimate = ds.actual_ultimate(i);
        row.case_estimate = ds.case_estimate(i);
        out.rows.push_back(row);
    }
    return out;
}

void write_predictions(const PredictionSet& preds, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << "claim_id,prediction_quarter,accident_quarter,dev_quarter,paid_to_date,"
           "case_estimate,actual_ultimate,y_hat\n";
    char idbuf[16];
    for (const PredictionRow& r : preds.rows) {
        std::snprintf(idbuf, sizeof(idbuf), "%06u", r.claim_id);
        out << idbuf << ',' << r.prediction_quarter << ',' << r.accident_quarter << ','
            << r.dev_quarter << ',' << format_double(r.paid) << ','
            << format_double(r.case_estimate) << ',' << format_double(r.actual_ultimate) << ','
            << format_double(r.y_hat) << "\n";
    }
}

void write_breakdown_csv(const PredictionSet& preds, GroupKey key, const fs::path& path) {
    const std::vector<BreakdownRow> rows = report_breakdowns(preds, key);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << "group_key,group,n_observations,aggregate_ratio,outstanding_share,cumulative_share\n";
    for (const BreakdownRow& r : rows) {
        out << group_key_name(key) << ',' << r.group << ',' << r.n << ','
            << format_double(r.aggregate_ratio) << ',' << format_double(r.outstanding_share)
            << ',' << format_double(r.cumulative_share) << "\n";
    }
}

json metrics_report_to_json(const MetricsReport& report, int dataset_id) {
    json j;
    j["dataset"] = dataset_name(dataset_id);
    j["source"] = report.source;
    j["n_observations"] = report.n_observations;
    j["ocl_err"] = report.ocl_err;
    j["male"] = report.male;
    j["msle"] = report.msle;
    j["smearing_b"] = report.smearing_b;
    if (report.has_uncorrected) j["ocl_err_uncorrected"] = report.ocl_err_uncorrected;
    j["vs"] = report.vs;
    return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_simulate(const ExperimentConfig& cfg) {
    cfg.validate();
    const int n_datasets = cfg.n_eval_datasets + 1;  // dataset 0 tunes
    parallel_for(static_cast<std::size_t>(n_datasets), effective_workers(cfg), [&](std::size_t i) {
        const int id = static_cast<int>(i);
        const fs::path dir = dataset_dir(cfg, id);
        const std::string key = stamp_key(simulate_material(cfg, id));
        const fs::path stamp = dir / ".stamp_simulate.json";
        if (stamp_matches(stamp, key) && fs::exists(dir / "transactions.csv")) return;
        fs::create_directories(dir);
        const Portfolio portfolio = simulate_portfolio(dataset_simulation_config(cfg, id));
        write_transactions(portfolio, dir / "transactions.csv");
        write_stamp(stamp, "simulate", key);
    });
}

void stage_prepare(const ExperimentConfig& cfg) {
    cfg.validate();
    const int n_datasets = cfg.n_eval_datasets + 1;
    parallel_for(static_cast<std::size_t>(n_datasets), effective_workers(cfg), [&](std::size_t i) {
        const int id = static_cast<int>(i);
        const fs::path dir = dataset_dir(cfg, id);
        require_stamp(dir / ".stamp_simulate.json", stamp_key(simulate_material(cfg, id)),
                      "simulate");
        const std::string key = stamp_key(prepare_material(cfg, id));
        const fs::path stamp = dir / ".stamp_prepare.json";
        if (stamp_matches(stamp, key) && fs::exists(dir / "splits.csv")) return;

        const Portfolio portfolio = load_transactions(dir / "transactions.csv");
        const std::uint64_t split_seed = derive_seed(cfg.seed, "split", static_cast<std::uint64_t>(id));
        SplitAssignment split;
        if (cfg.split.mode == SplitMode::Finalisation) {
            split = assign_splits(portfolio, {cfg.split.train_cutoff, cfg.split.valuation},
                                  cfg.split.move_fraction, split_seed);
        } else {
            split = assign_splits_naive(portfolio, cfg.split.fractions, split_seed);
        }
        write_split_manifest(split, dir / "splits.csv");
        write_stamp(stamp, "prepare", key);
    });
}

void stage_tune(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<std::string> nn = cfg.nn_variants();
    if (nn.empty()) return;

    // All variants tune on the designated tuning dataset (dataset 0).
    bool all_stamped = true;
    for (const std::string& variant : nn) {
        if (!stamp_matches(tuning_dir(cfg, variant) / ".stamp_tune.json",
                           stamp_key(tune_material(cfg, variant))))
            all_stamped = false;
    }
    if (all_stamped) return;

    const DatasetBundle bundle = load_bundle(cfg, 0, true);
    const SplitObservations sets = split_observations(bundle);
    if (sets.train.empty() || sets.validation.empty())
        throw config_error("tuning dataset has an empty train or validation split");
    const NormalisationStats stats = fit_normaliser(bundle.portfolio, sets.train);

    for (const std::string& variant_str : nn) {
        const fs::path dir = tuning_dir(cfg, variant_str);
        const std::string key = stamp_key(tune_material(cfg, variant_str));
        const fs::path stamp = dir / ".stamp_tune.json";
        if (stamp_matches(stamp, key) && fs::exists(dir / "winner.json")) continue;
        fs::create_directories(dir);

        const Variant variant = parse_variant(variant_str);
        const EncodedDataset train_ds = encode_observations(bundle.portfolio, sets.train, variant,
                                                            stats, cfg.include_current_ce);
        const EncodedDataset val_ds = encode_observations(bundle.portfolio, sets.validation,
                                                          variant, stats, cfg.include_current_ce);
        TuneOptions options;
        options.base.max_epochs = cfg.max_epochs;
        options.base.patience = cfg.patience;
        options.seed = derive_seed(cfg.seed, "tune-" + variant_str);
        options.n_seeds = cfg.tuning_seeds;
        options.workers = effective_workers(cfg);

        const TuneResult result = tune(cfg.grid, variant, train_ds, val_ds, options);
        write_leaderboard(result.leaderboard, dir / "leaderboard.csv");

        double best_loss = 0.0;
        for (const LeaderboardEntry& e : result.leaderboard)
            if (!e.failed && e.combo.index == result.best.index) best_loss = e.best_val_loss;
        json winner{{"variant", variant_str},
                    {"combo",
                     {{"index", result.best.index},
                      {"layers", result.best.layers},
                      {"units", result.best.units},
                      {"learning_rate", result.best.learning_rate},
                      {"batch_size", result.best.batch_size}}},
                    {"best_val_loss", best_loss}};
        std::ofstream out(dir / "winner.json", std::ios::binary);
        if (!out) throw io_error("cannot write winner.json");
        out << winner.dump(2) << "\n";
        out.close();
        write_stamp(stamp, "tune", key);
    }
}

void stage_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<std::string> nn = cfg.nn_variants();
    if (nn.empty()) return;

    std::map<std::string, GridPoint> winners;
    for (const std::string& variant : nn) winners[variant] = load_winner(cfg, variant);

    struct Job {
        int dataset;
        std::string variant;
    };
    std::vector<Job> jobs;
    for (int id = 1; id <= cfg.n_eval_datasets; ++id)
        for (const std::string& variant : nn) jobs.push_back({id, variant});

    // One bundle load per dataset, shared read-only across that dataset's jobs.
    std::map<int, DatasetBundle> bundles;
    for (int id = 1; id <= cfg.n_eval_datasets; ++id) {
        bool needed = false;
        for (const std::string& variant : nn) {
            const std::string key = stamp_key(train_material(cfg, id, variant, winners[variant]));
            const fs::path stamp = models_dir(cfg, id) / (".stamp_train_" + variant + ".json");
            if (!stamp_matches(stamp, key)) needed = true;
        }
        if (needed) bundles.emplace(id, load_bundle(cfg, id, true));
    }

    parallel_for(jobs.size(), effective_workers(cfg), [&](std::size_t ji) {
        const Job& job = jobs[ji];
        const GridPoint combo = winners.at(job.variant);
        const std::string key = stamp_key(train_material(cfg, job.dataset, job.variant, combo));
        const fs::path dir = models_dir(cfg, job.dataset);
        const fs::path stamp = dir / (".stamp_train_" + job.variant + ".json");
        const fs::path ckpt_path = dir / (job.variant + ".json");
        if (stamp_matches(stamp, key) && fs::exists(ckpt_path)) return;
        fs::create_directories(dir);

        const Checkpoint ckpt =
            train_one(cfg, bundles.at(job.dataset), job.dataset, job.variant, combo);
        save_checkpoint(ckpt, ckpt_path);
        write_stamp(stamp, "train", key);
    });
}

namespace {

std::string evaluate_material(const ExperimentConfig& cfg, int id,
                              const std::map<std::string, GridPoint>& winners) {
    std::string material = "evaluate|" + prepare_material(cfg, id) + "|valuation=" +
                           std::to_string(cfg.valuation_quarter());
    for (const std::string& variant : cfg.variants) {
        if (variant == kCeBaselineName) {
            material += "|CE-baseline";
        } else {
            material += "|" + train_material(cfg, id, variant, winners.at(variant));
        }
    }
    return material;
}

}  // namespace

void stage_evaluate(const ExperimentConfig& cfg) {
    cfg.validate();
    std::map<std::string, GridPoint> winners;
    for (const std::string& variant : cfg.nn_variants()) winners[variant] = load_winner(cfg, variant);

    parallel_for(static_cast<std::size_t>(cfg.n_eval_datasets), effective_workers(cfg),
                 [&](std::size_t i) {
        const int id = static_cast<int>(i) + 1;
        const std::string key = stamp_key(evaluate_material(cfg, id, winners));
        const fs::path rep_dir = reports_dir(cfg, id);
        const fs::path stamp = rep_dir / ".stamp_evaluate.json";
        if (stamp_matches(stamp, key)) return;

        const DatasetBundle bundle = load_bundle(cfg, id, true);
        std::vector<Observation> slice =
            valuation_slice(bundle.observations, cfg.valuation_quarter());
        if (cfg.split.mode == SplitMode::Naive) {
            // Naive-split evaluation keeps only test-set claims open at the
            // valuation date.
            std::vector<Observation> filtered;
            for (const Observation& obs : slice)
                if (bundle.split.of(obs.claim_id) == Split::Test) filtered.push_back(obs);
            slice = std::move(filtered);
        }
        if (slice.empty())
            throw config_error(dataset_name(id) + ": no observations at the valuation quarter");

        const fs::path pred_dir = predictions_dir(cfg, id);
        fs::create_directories(pred_dir);
        fs::create_directories(rep_dir);

        std::vector<PredictionSet> sets;
        std::vector<double> smearing_bs;
        std::vector<double> uncorrected_ocl;
        std::vector<bool> is_nn;
        for (const std::string& variant : cfg.variants) {
            if (variant == kCeBaselineName) {
                sets.push_back(case_estimates_as_model(slice));
                smearing_bs.push_back(1.0);
                uncorrected_ocl.push_back(0.0);
                is_nn.push_back(false);
            } else {
                const fs::path ckpt_path = models_dir(cfg, id) / (variant + ".json");
                const std::string train_key =
                    stamp_key(train_material(cfg, id, variant, winners.at(variant)));
                require_stamp(models_dir(cfg, id) / (".stamp_train_" + variant + ".json"),
                              train_key, "train");
                const Checkpoint ckpt = load_checkpoint(ckpt_path);
                PredictionSet preds =
                    predictions_from_checkpoint(ckpt, bundle.portfolio, slice, variant);
                // Metrics on the uncorrected predictions quantify what the
                // smearing factor buys at the aggregate level.
                PredictionSet raw = preds;
                for (PredictionRow& r : raw.rows) r.y_hat /= ckpt.smearing.b;
                uncorrected_ocl.push_back(ocl_err(raw));
                smearing_bs.push_back(ckpt.smearing.b);
                is_nn.push_back(true);
                sets.push_back(std::move(preds));
            }
        }

        for (std::size_t vi = 0; vi < sets.size(); ++vi) {
            const PredictionSet& preds = sets[vi];
            write_predictions(preds, pred_dir / (preds.source + ".csv"));
            MetricsReport report = compute_metrics(preds, sets);
            report.smearing_b = smearing_bs[vi];
            if (is_nn[vi]) {
                report.has_uncorrected = true;
                report.ocl_err_uncorrected = uncorrected_ocl[vi];
            }
            std::ofstream out(rep_dir / (preds.source + ".json"), std::ios::binary);
            if (!out) throw io_error("cannot write report for " + preds.source);
            out << metrics_report_to_json(report, id).dump(2) << "\n";
            out.close();
            write_breakdown_csv(preds, GroupKey::AccidentQuarter,
                                rep_dir / (preds.source + "_by_accident_quarter.csv"));
            write_breakdown_csv(preds, GroupKey::QuartersSinceNotification,
                                rep_dir / (preds.source + "_by_dev_quarter.csv"));
        }
        write_stamp(stamp, "evaluate", key);
    });
}

namespace {

struct MeanSd {
    double n = 0.0, mean = 0.0, m2 = 0.0;
    void add(double x) {
        n += 1.0;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    double sd() const { return n < 2.0 ? 0.0 : std::sqrt(m2 / (n - 1.0)); }
};

}  // namespace

void stage_report(const ExperimentConfig& cfg) {
    cfg.validate();
    std::map<std::string, GridPoint> winners;
    for (const std::string& variant : cfg.nn_variants()) winners[variant] = load_winner(cfg, variant);

    std::string material = "report";
    for (int id = 1; id <= cfg.n_eval_datasets; ++id)
        material += "|" + evaluate_material(cfg, id, winners);
    const std::string key = stamp_key(material);
    const fs::path stamp = cfg.out_dir / "reports" / ".stamp_report.json";
    if (stamp_matches(stamp, key) && fs::exists(cfg.out_dir / "reports" / "summary.json")) return;

    // metric -> model -> accumulator; vs: (m1, m2, weighting) -> accumulator.
    std::map<std::string, std::map<std::string, MeanSd>> metric_acc;
    std::map<std::string, std::map<std::string, std::map<std::string, MeanSd>>> vs_acc;

    for (int id = 1; id <= cfg.n_eval_datasets; ++id) {
        const fs::path rep_dir = reports_dir(cfg, id);
        require_stamp(rep_dir / ".stamp_evaluate.json",
                      stamp_key(evaluate_material(cfg, id, winners)), "evaluate");
        for (const std::string& variant : cfg.variants) {
            const fs::path path = rep_dir / (variant + ".json");
            std::ifstream in(path, std::ios::binary);
            if (!in)
                throw dependency_error("missing report '" + path.string() +
                                       "'; run evaluate first");
            json j;
            in >> j;
            metric_acc["ocl_err"][variant].add(j.at("ocl_err").get<double>());
            metric_acc["abs_ocl_err"][variant].add(std::abs(j.at("ocl_err").get<double>()));
            metric_acc["male"][variant].add(j.at("male").get<double>());
            metric_acc["msle"][variant].add(j.at("msle").get<double>());
            if (j.contains("ocl_err_uncorrected")) {
                metric_acc["ocl_err_uncorrected"][variant].add(
                    j.at("ocl_err_uncorrected").get<double>());
                metric_acc["abs_ocl_err_uncorrected"][variant].add(
                    std::abs(j.at("ocl_err_uncorrected").get<double>()));
                metric_acc["smearing_b"][variant].add(j.at("smearing_b").get<double>());
            }
            for (const auto& [opponent, weights] : j.at("vs").items())
                for (const auto& [weighting, value] : weights.items())
                    vs_acc[variant][opponent][weighting].add(value.get<double>());
        }
    }

    json summary;
    summary["n_datasets"] = cfg.n_eval_datasets;
    summary["models"] = cfg.variants;
    json metrics_j;
    for (const auto& [metric, by_model] : metric_acc) {
        json row;
        for (const auto& [model, acc] : by_model)
            row[model] = json{{"mean", acc.mean}, {"sd", acc.sd()}};
        metrics_j[metric] = row;
    }
    summary["metrics"] = metrics_j;
    json vs_j;
    for (const auto& [m1, by_opp] : vs_acc) {
        json opp_j;
        for (const auto& [m2, by_w] : by_opp) {
            json w_j;
            for (const auto& [w, acc] : by_w)
                w_j[w] = json{{"mean", acc.mean}, {"sd", acc.sd()}};
            opp_j[m2] = w_j;
        }
        vs_j[m1] = opp_j;
    }
    summary["vs_table"] = vs_j;

    fs::create_directories(cfg.out_dir / "reports");
    {
        std::ofstream out(cfg.out_dir / "reports" / "summary.json", std::ios::binary);
        if (!out) throw io_error("cannot write summary.json");
        out << summary.dump(2) << "\n";
    }
    {
        std::ofstream out(cfg.out_dir / "reports" / "summary_metrics.csv", std::ios::binary);
        if (!out) throw io_error("cannot write summary_metrics.csv");
        out << "model,metric,mean,sd\n";
        for (const auto& [metric, by_model] : metric_acc)
            for (const auto& [model, acc] : by_model)
                out << model << ',' << metric << ',' << format_double(acc.mean) << ','
                    << format_double(acc.sd()) << "\n";
    }
    {
        std::ofstream out(cfg.out_dir / "reports" / "summary_vs_table.csv", std::ios::binary);
        if (!out) throw io_error("cannot write summary_vs_table.csv");
        out << "model_1,model_2,weighting,mean,sd\n";
        for (const auto& [m1, by_opp] : vs_acc)
            for (const auto& [m2, by_w] : by_opp)
                for (const auto& [w, acc] : by_w)
                    out << m1 << ',' << m2 << ',' << w << ',' << format_double(acc.mean) << ','
                        << format_double(acc.sd()) << "\n";
    }
    write_stamp(stamp, "report", key);
}

void run_pipeline(const ExperimentConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    {
        std::ofstream out(cfg.out_dir / "experiment.json", std::ios::binary);
        if (!out) throw io_error("cannot write experiment.json");
        out << experiment_config_to_json_text(cfg) << "\n";
    }
    struct Stage {
        const char* name;
        void (*fn)(const ExperimentConfig&);
    };
    static const Stage stages[] = {
        {"simulate", stage_simulate}, {"prepare", stage_prepare}, {"tune", stage_tune},
        {"train", stage_train},       {"evaluate", stage_evaluate}, {"report", stage_report},
    };
    for (const Stage& stage : stages) {
        try {
            stage.fn(cfg);
        } catch (const std::exception& e) {
            throw error("[stage " + std::string(stage.name) + "] " + e.what());
        }
    }
}

}  // namespace claimcast
