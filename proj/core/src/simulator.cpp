#include "claimcast/simulator.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "claimcast/errors.hpp"
#include "claimcast/text.hpp"

namespace claimcast {

namespace {

// Sub-stream tags for counter-based splitting per claim.
enum StreamPurpose : std::uint64_t {
    kLifecycle = 1,
    kPayments = 2,
    kRevisions = 3,
    kCovariates = 4,
};

RngStream claim_stream(std::uint64_t seed, std::uint64_t claim_index, StreamPurpose purpose) {
    return RngStream(mix64(mix64(seed ^ 0x636c61696dULL) ^ claim_index * 8 + purpose));
}

double standardized_log_size(const SimulationConfig& cfg, double base_size) {
    const double sd = std::max(cfg.claim_size.sdlog, 1e-12);
    return (std::log(base_size) - cfg.claim_size.meanlog) / sd;
}

double draw_delay(const DelaySpec& spec, double z_size, RngStream& rng) {
    if (spec.median_quarters <= 0.0) return 0.0;
    const double meanlog = std::log(spec.median_quarters) + spec.size_elasticity * z_size;
    if (spec.sigma_log <= 0.0) return std::exp(meanlog);
    return rng.lognormal(meanlog, spec.sigma_log);
}

int draw_severity(double z, RngStream& rng) {
    // Size-correlated categories 1..6 via a noisy latent score.
    const double score = z + 0.8 * rng.normal();
    static const double cuts[5] = {-1.2, -0.5, 0.0, 0.5, 1.2};
    int sev = 1;
    for (double c : cuts) {
        if (score > c) ++sev;
    }
    return sev;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct RevisionDraw {
    double time;
    TxnKind kind;
    double case_estimate_after;
};

}  // namespace

const char* txn_kind_code(TxnKind k) {
    switch (k) {
        case TxnKind::Payment: return "P";
        case TxnKind::MajorRevision: return "MAJ";
        case TxnKind::MinorRevision: return "MIN";
    }
    return "?";
}

TxnKind parse_txn_kind(std::string_view code) {
    if (code == "P") return TxnKind::Payment;
    if (code == "MAJ") return TxnKind::MajorRevision;
    if (code == "MIN") return TxnKind::MinorRevision;
    throw parse_error("unknown txn_kind '" + std::string(code) + "'");
}

std::size_t InflationSpec::band_of(double base_size) const {
    for (std::size_t i = 0; i < band_upper.size(); ++i) {
        if (base_size <= band_upper[i]) return i;
    }
    return band_upper.size() - 1;
}

double InflationSpec::factor(double payment_time, double occurrence_time, double base_size) const {
    const std::size_t b = band_of(base_size);
    return std::exp(calendar_rate[b] * payment_time + occurrence_rate[b] * occurrence_time);
}

InflationSpec SimulationConfig::default_inflation() {
    InflationSpec spec;
    // Three size bands; both inflation channels rise with claim size.
    spec.band_upper = {30e3, 150e3, std::numeric_limits<double>::infinity()};
    spec.calendar_rate = {0.003, 0.006, 0.010};
    spec.occurrence_rate = {0.001, 0.003, 0.005};
    return spec;
}

void SimulationConfig::validate() const {
    if (n_accident_quarters < 1) throw config_error("n_accident_quarters must be >= 1");
    if (expected_claims_per_quarter < 0.0)
        throw config_error("expected_claims_per_quarter must be >= 0");
    if (claim_size.sdlog <= 0.0) throw config_error("claim_size.sdlog must be > 0");
    if (notification_delay.median_quarters < 0.0)
        throw config_error("notification_delay.median_quarters must be >= 0");
    if (notification_delay.sigma_log < 0.0)
        throw config_error("notification_delay.sigma_log must be >= 0");
    if (settlement_delay.median_quarters < 0.0)
        throw config_error("settlement_delay.median_quarters must be >= 0");
    if (settlement_delay.sigma_log < 0.0)
        throw config_error("settlement_delay.sigma_log must be >= 0");
    if (payment_count.mean_base < 0.0) throw config_error("payment_count.mean_base must be >= 0");
    if (inflation.band_upper.empty()) throw config_error("inflation.band_upper must be nonempty");
    if (!std::isinf(inflation.band_upper.back()))
        throw config_error("inflation.band_upper must end with +inf to partition (0, inf)");
    if (!std::is_sorted(inflation.band_upper.begin(), inflation.band_upper.end()))
        throw config_error("inflation.band_upper must be ascending");
    if (inflation.calendar_rate.size() != inflation.band_upper.size())
        throw config_error("inflation.calendar_rate must have one rate per band");
    if (inflation.occurrence_rate.size() != inflation.band_upper.size())
        throw config_error("inflation.occurrence_rate must have one rate per band");
    if (revisions.minor_mean_count < 0.0)
        throw config_error("revisions.minor_mean_count must be >= 0");
    if (revisions.major_mean_count < 0.0)
        throw config_error("revisions.major_mean_count must be >= 0");
    if (revisions.minor_sigma_log < 0.0) throw config_error("revisions.minor_sigma_log must be >= 0");
    if (revisions.major_sigma_log < 0.0) throw config_error("revisions.major_sigma_log must be >= 0");
    if (revisions.settle_agreement_prob < 0.0 || revisions.settle_agreement_prob > 1.0)
        throw config_error("revisions.settle_agreement_prob must be in [0, 1]");
    if (initial_estimate_error.sdlog < 0.0)
        throw config_error("initial_estimate_error.sdlog must be >= 0");
}

ClaimLifecycle simulate_claim_lifecycle(const SimulationConfig& cfg, RngStream& rng,
                                        double occurrence_time) {
    ClaimLifecycle life;
    life.occurrence_time = occurrence_time;
    life.base_size = rng.lognormal(cfg.claim_size.meanlog, cfg.claim_size.sdlog);
    const double z = standardized_log_size(cfg, life.base_size);

    const double notif_delay = std::max(draw_delay(cfg.notification_delay, z, rng), 1e-6);
    life.notification_time = occurrence_time + notif_delay;

    const double settle_delay = draw_delay(cfg.settlement_delay, z, rng);
    life.settlement_time = life.notification_time + settle_delay;
    // Degenerate draws are floored so notification < settlement always holds.
    if (life.settlement_time <= life.notification_time)
        life.settlement_time = life.notification_time + 0.01;
    return life;
}

std::vector<TransactionEvent> simulate_payments(const ClaimLifecycle& life,
                                                const SimulationConfig& cfg, RngStream& rng) {
    const double z = standardized_log_size(cfg, life.base_size);
    const double mean_partials =
        std::max(0.0, cfg.payment_count.mean_base + cfg.payment_count.mean_size_slope * z);
    const long n = 1 + rng.poisson(mean_partials);

    // Dirichlet(1,...,1) shares of the base size.
    std::vector<double> shares(static_cast<std::size_t>(n));
    double total = 0.0;
    for (double& s : shares) {
        s = rng.gamma(1.0);
        total += s;
    }
    for (double& s : shares) s /= total;

    // Interior payment times, final payment exactly at settlement.
    std::vector<double> times(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        times[i] = rng.uniform(life.notification_time, life.settlement_time);
    times.back() = life.settlement_time;
    std::sort(times.begin(), times.end() - 1);

    std::vector<TransactionEvent> events(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < events.size(); ++i) {
        events[i].time = times[i];
        events[i].kind = TxnKind::Payment;
        events[i].payment_amount = shares[i] * life.base_size *
                                   cfg.inflation.factor(times[i], life.occurrence_time, life.base_size);
    }
    return events;
}

std::vector<TransactionEvent> simulate_revisions(const ClaimLifecycle& life, double ultimate,
                                                 const SimulationConfig& cfg, RngStream& rng) {
    const RevisionSpec& rev = cfg.revisions;

    // Counts first, then timings (timings depend on the counts).
    const long n_minor = rng.poisson(rev.minor_mean_count);
    const long n_major = rng.poisson(rev.major_mean_count);

    std::vector<RevisionDraw> interior;
    interior.reserve(static_cast<std::size_t>(n_minor + n_major));
    for (long i = 0; i < n_minor; ++i)
        interior.push_back({rng.uniform(life.notification_time, life.settlement_time),
                            TxnKind::MinorRevision, 0.0});
    for (long i = 0; i < n_major; ++i)
        interior.push_back({rng.uniform(life.notification_time, life.settlement_time),
                            TxnKind::MajorRevision, 0.0});
    std::stable_sort(interior.begin(), interior.end(),
                     [](const RevisionDraw& a, const RevisionDraw& b) { return a.time < b.time; });

    const bool agreed_early =
        !interior.empty() && rng.bernoulli(rev.settle_agreement_prob);

    const double initial = ultimate * rng.lognormal(cfg.initial_estimate_error.meanlog,
                                                    cfg.initial_estimate_error.sdlog);

    std::vector<TransactionEvent> events;
    events.reserve(interior.size() + 2);
    events.push_back({life.notification_time, TxnKind::MajorRevision, 0.0, initial});

    // The estimate walks linearly (in revision index) from the initial value
    // toward the ultimate, with kind-dependent multiplicative wobble. The
    // last step of the walk lands on the ultimate exactly: at the settlement
    // truing-up, or already at the last interior revision when agreed early.
    const std::size_t n_steps = interior.size() + (agreed_early ? 0 : 1);
    for (std::size_t k = 0; k < interior.size(); ++k) {
        const double progress = static_cast<double>(k + 1) / static_cast<double>(n_steps);
        double estimate = initial + progress * (ultimate - initial);
        if (!(agreed_early && k + 1 == interior.size())) {
            const double sd = interior[k].kind == TxnKind::MajorRevision ? rev.major_sigma_log
                                                                         : rev.minor_sigma_log;
            estimate *= rng.lognormal(0.0, sd);
        }
        events.push_back({interior[k].time, interior[k].kind, 0.0, estimate});
    }
    events.push_back({life.settlement_time, TxnKind::MinorRevision, 0.0, ultimate});
    return events;
}

namespace {

void assemble_claim(ClaimRecord& claim, std::vector<TransactionEvent> payments,
                    std::vector<TransactionEvent> revisions) {
    auto& events = claim.events;
    events.clear();
    events.reserve(payments.size() + revisions.size());
    events.insert(events.end(), payments.begin(), payments.end());
    events.insert(events.end(), revisions.begin(), revisions.end());
    std::stable_sort(events.begin(), events.end(), [](const TransactionEvent& a,
                                                      const TransactionEvent& b) {
        if (a.time != b.time) return a.time < b.time;
        // Payments book before concurrent revisions, so the settlement
        // truing-up revision is the final word on the estimate.
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });

    // Walk the merged stream: track cumulative payments and keep the estimate
    // in force at or above them.
    double cum_paid = 0.0;
    double in_force = 0.0;
    for (TransactionEvent& e : events) {
        if (e.kind == TxnKind::Payment) {
            cum_paid += e.payment_amount;
        } else {
            in_force = e.case_estimate_after;
        }
        in_force = std::max(in_force, cum_paid);
        e.case_estimate_after = in_force;
    }
    claim.ultimate_size = cum_paid;
}

}  // namespace

Portfolio simulate_portfolio(const SimulationConfig& cfg) {
    cfg.validate();
    Portfolio portfolio;

    std::uint64_t claim_index = 0;
    for (int q = 1; q <= cfg.n_accident_quarters; ++q) {
        RngStream occ(derive_seed(cfg.seed, "occurrence", static_cast<std::uint64_t>(q)));
        const long count = occ.poisson(cfg.expected_claims_per_quarter);
        for (long j = 0; j < count; ++j) {
            const double occurrence = (q - 1) + occ.uniform01();

            ClaimRecord claim;
            claim.claim_id = static_cast<std::uint32_t>(claim_index + 1);

            RngStream life_rng = claim_stream(cfg.seed, claim_index, kLifecycle);
            const ClaimLifecycle life = simulate_claim_lifecycle(cfg, life_rng, occurrence);
            claim.occurrence_time = life.occurrence_time;
            claim.notification_time = life.notification_time;
            claim.settlement_time = life.settlement_time;

            RngStream pay_rng = claim_stream(cfg.seed, claim_index, kPayments);
            std::vector<TransactionEvent> payments = simulate_payments(life, cfg, pay_rng);
            double ultimate = 0.0;
            for (const auto& p : payments) ultimate += p.payment_amount;

            RngStream rev_rng = claim_stream(cfg.seed, claim_index, kRevisions);
            std::vector<TransactionEvent> revisions =
                simulate_revisions(life, ultimate, cfg, rev_rng);

            RngStream cov_rng = claim_stream(cfg.seed, claim_index, kCovariates);
            const double z = standardized_log_size(cfg, life.base_size);
            claim.severity = draw_severity(z, cov_rng);
            claim.age_band = static_cast<int>(cov_rng.uniform_int(9));
            claim.legal_rep = cov_rng.bernoulli(sigmoid(0.3 + 0.8 * z)) ? 1 : 0;

            assemble_claim(claim, std::move(payments), std::move(revisions));
            portfolio.push_back(std::move(claim));
            ++claim_index;
        }
    }
    return portfolio;
}

void write_transactions(const Portfolio& portfolio, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << transaction_csv_header() << "\n";
    char idbuf[16];
    for (const ClaimRecord& c : portfolio) {
        std::snprintf(idbuf, sizeof(idbuf), "%06u", c.claim_id);
        const std::string prefix = std::string(idbuf) + ',' + format_double(c.occurrence_time) +
                                   ',' + format_double(c.notification_time) + ',' +
                                   format_double(c.settlement_time) + ',' +
                                   std::to_string(c.severity) + ',' + std::to_string(c.age_band) +
                                   ',' + std::to_string(c.legal_rep) + ',';
        for (const TransactionEvent& e : c.events) {
            out << prefix << format_double(e.time) << ',' << txn_kind_code(e.kind) << ','
                << format_double(e.payment_amount) << ',' << format_double(e.case_estimate_after)
                << "\n";
        }
    }
    if (!out) throw io_error("write failed for '" + path.string() + "'");
}

namespace {

using nlohmann::json;

// Strict object reader: every key must be consumed.
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
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw config_error("unknown key '" + it.key() + "' in " + name_);
        }
    }

private:
    const json& j_;
    std::string name_;
    std::vector<std::string> seen_;
};

void read_lognormal(const json& j, const std::string& name, LognormalSpec& out) {
    StrictObject o(j, name);
    o.get_to("meanlog", out.meanlog);
    o.get_to("sdlog", out.sdlog);
    o.finish();
}

void read_delay(const json& j, const std::string& name, DelaySpec& out) {
    StrictObject o(j, name);
    o.get_to("median_quarters", out.median_quarters);
    o.get_to("sigma_log", out.sigma_log);
    o.get_to("size_elasticity", out.size_elasticity);
    o.finish();
}

}  // namespace

SimulationConfig simulation_config_from_json_text(const std::string& text,
                                                  const SimulationConfig& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw parse_error(std::string("simulation config: ") + e.what());
    }
    SimulationConfig cfg = base;
    StrictObject o(j, "simulation config");
    o.get_to("n_accident_quarters", cfg.n_accident_quarters);
    o.get_to("expected_claims_per_quarter", cfg.expected_claims_per_quarter);
    if (o.has("claim_size")) read_lognormal(o.at("claim_size"), "claim_size", cfg.claim_size);
    if (o.has("notification_delay"))
        read_delay(o.at("notification_delay"), "notification_delay", cfg.notification_delay);
    if (o.has("settlement_delay"))
        read_delay(o.at("settlement_delay"), "settlement_delay", cfg.settlement_delay);
    if (o.has("payment_count")) {
        StrictObject p(o.at("payment_count"), "payment_count");
        p.get_to("mean_base", cfg.payment_count.mean_base);
        p.get_to("mean_size_slope", cfg.payment_count.mean_size_slope);
        p.finish();
    }
    if (o.has("inflation")) {
        StrictObject p(o.at("inflation"), "inflation");
        p.get_to("band_upper", cfg.inflation.band_upper);
        p.get_to("calendar_rate", cfg.inflation.calendar_rate);
        p.get_to("occurrence_rate", cfg.inflation.occurrence_rate);
        p.finish();
        // JSON has no +inf literal; the unbounded top band is implied when
        // one more rate than bound is given.
        if (cfg.inflation.band_upper.size() + 1 == cfg.inflation.calendar_rate.size())
            cfg.inflation.band_upper.push_back(std::numeric_limits<double>::infinity());
    }
    if (o.has("revisions")) {
        StrictObject p(o.at("revisions"), "revisions");
        p.get_to("minor_mean_count", cfg.revisions.minor_mean_count);
        p.get_to("major_mean_count", cfg.revisions.major_mean_count);
        p.get_to("minor_sigma_log", cfg.revisions.minor_sigma_log);
        p.get_to("major_sigma_log", cfg.revisions.major_sigma_log);
        p.get_to("settle_agreement_prob", cfg.revisions.settle_agreement_prob);
        p.finish();
    }
    if (o.has("initial_estimate_error"))
        read_lognormal(o.at("initial_estimate_error"), "initial_estimate_error",
                       cfg.initial_estimate_error);
    o.get_to("seed", cfg.seed);
    o.finish();
    cfg.validate();
    return cfg;
}

SimulationConfig load_simulation_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open simulation config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return simulation_config_from_json_text(buf.str());
}

std::string simulation_config_to_json_text(const SimulationConfig& cfg) {
    json j;
    j["n_accident_quarters"] = cfg.n_accident_quarters;
    j["expected_claims_per_quarter"] = cfg.expected_claims_per_quarter;
    j["claim_size"] = {{"meanlog", cfg.claim_size.meanlog}, {"sdlog", cfg.claim_size.sdlog}};
    j["notification_delay"] = {{"median_quarters", cfg.notification_delay.median_quarters},
                               {"sigma_log", cfg.notification_delay.sigma_log},
                               {"size_elasticity", cfg.notification_delay.size_elasticity}};
    j["settlement_delay"] = {{"median_quarters", cfg.settlement_delay.median_quarters},
                             {"sigma_log", cfg.settlement_delay.sigma_log},
                             {"size_elasticity", cfg.settlement_delay.size_elasticity}};
    j["payment_count"] = {{"mean_base", cfg.payment_count.mean_base},
                          {"mean_size_slope", cfg.payment_count.mean_size_slope}};
    std::vector<double> bands = cfg.inflation.band_upper;
    if (!bands.empty() && std::isinf(bands.back())) bands.pop_back();
    j["inflation"] = {{"band_upper", bands},
                      {"calendar_rate", cfg.inflation.calendar_rate},
                      {"occurrence_rate", cfg.inflation.occurrence_rate}};
    j["revisions"] = {{"minor_mean_count", cfg.revisions.minor_mean_count},
                      {"major_mean_count", cfg.revisions.major_mean_count},
                      {"minor_sigma_log", cfg.revisions.minor_sigma_log},
                      {"major_sigma_log", cfg.revisions.major_sigma_log},
                      {"settle_agreement_prob", cfg.revisions.settle_agreement_prob}};
    j["initial_estimate_error"] = {{"meanlog", cfg.initial_estimate_error.meanlog},
                                   {"sdlog", cfg.initial_estimate_error.sdlog}};
    j["seed"] = cfg.seed;
    return j.dump(2);
}

}  // namespace claimcast
