#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "claimcast/rng.hpp"

namespace claimcast {

enum class TxnKind { Payment, MajorRevision, MinorRevision };

const char* txn_kind_code(TxnKind k);              // "P", "MAJ", "MIN"
TxnKind parse_txn_kind(std::string_view code);

// One payment or case-estimate revision on one claim. `case_estimate_after`
// is the total-incurred estimate in force once the event has been booked and
// never drops below cumulative payments.
struct TransactionEvent {
    double time = 0.0;  // calendar quarters
    TxnKind kind = TxnKind::Payment;
    double payment_amount = 0.0;      // zero for pure revisions
    double case_estimate_after = 0.0;
};

struct ClaimRecord {
    std::uint32_t claim_id = 0;
    double occurrence_time = 0.0;    // continuous quarters
    double notification_time = 0.0;
    double settlement_time = 0.0;
    double ultimate_size = 0.0;      // equals the sum of payment amounts
    int severity = 1;                // 1..6
    int age_band = 0;                // 0..8, 10-year bands
    int legal_rep = 0;               // 0/1
    std::vector<TransactionEvent> events;  // sorted by (time, kind)

    int accident_quarter() const { return static_cast<int>(std::floor(occurrence_time)) + 1; }
};

using Portfolio = std::vector<ClaimRecord>;

// Lognormal delay whose median scales with claim size:
//   median(size) = median_quarters * (size / size_ref)^size_elasticity.
// median_quarters == 0 collapses to a degenerate zero delay.
struct DelaySpec {
    double median_quarters = 1.0;
    double sigma_log = 0.5;
    double size_elasticity = 0.0;
};

// Number of partial payments: 1 + Poisson(max(0, mean_base + mean_size_slope * z))
// where z is the standardized log claim size.
struct PaymentCountSpec {
    double mean_base = 3.5;
    double mean_size_slope = 1.0;
};

// Calendar- and occurrence-period superimposed inflation, with rates varying
// by claim-size band. band_upper holds ascending upper bounds for the base
// (uninflated) claim size; the last entry must be +inf so the bands partition
// the positive reals.
struct InflationSpec {
    std::vector<double> band_upper{std::numeric_limits<double>::infinity()};
    std::vector<double> calendar_rate{0.0};    // continuous per-quarter rate
    std::vector<double> occurrence_rate{0.0};  // continuous per-quarter rate

    std::size_t band_of(double base_size) const;
    double factor(double payment_time, double occurrence_time, double base_size) const;
};

struct RevisionSpec {
    double minor_mean_count = 2.0;
    double major_mean_count = 0.4;
    double minor_sigma_log = 0.06;   // magnitude noise around the convergence path
    double major_sigma_log = 0.30;   // strictly larger than minor under defaults
    // Probability the last revision before settlement already fixes the case
    // estimate at the ultimate cost (the file is agreed early; remaining time
    // is payment processing).
    double settle_agreement_prob = 0.35;
};

struct LognormalSpec {
    double meanlog = 0.0;
    double sdlog = 1.0;
};

struct SimulationConfig {
    int n_accident_quarters = 40;
    double expected_claims_per_quarter = 750.0;
    LognormalSpec claim_size{10.5, 1.2};             // base size, pre-inflation
    DelaySpec notification_delay{0.15, 0.8, 0.10};
    DelaySpec settlement_delay{3.0, 1.18, 0.45};
    PaymentCountSpec payment_count{3.5, 1.0};
    InflationSpec inflation = default_inflation();
    RevisionSpec revisions{};
    LognormalSpec initial_estimate_error{std::log(0.75), 0.35};
    std::uint64_t seed = 0;

    static InflationSpec default_inflation();
    // Throws config_error naming the offending field.
    void validate() const;
};

// Lifecycle quantities drawn before any transactions exist.
struct ClaimLifecycle {
    double occurrence_time = 0.0;
    double base_size = 0.0;          // pre-inflation size, drives delays/covariates
    double notification_time = 0.0;
    double settlement_time = 0.0;
};

ClaimLifecycle simulate_claim_lifecycle(const SimulationConfig& cfg, RngStream& rng,
                                        double occurrence_time);

// Payment events on (notification, settlement], final payment at settlement.
// Amounts are inflated per the config; they sum exactly to the claim's
// realized ultimate size.
std::vector<TransactionEvent> simulate_payments(const ClaimLifecycle& life,
                                                const SimulationConfig& cfg, RngStream& rng);

// Revision events: the initial estimate at notification, interior major/minor
// revisions converging toward the ultimate, and the truing-up revision at
// settlement. `ultimate` is the realized (inflated) claim cost.
std::vector<TransactionEvent> simulate_revisions(const ClaimLifecycle& life, double ultimate,
                                                 const SimulationConfig& cfg, RngStream& rng);

// Full pipeline: occurrence counts/times per quarter, lifecycle, payments,
// revisions, covariates. Deterministic in (config, seed); per-claim streams
// are derived by counter-based splitting so claims can be generated in
// parallel with results identical to sequential generation.
Portfolio simulate_portfolio(const SimulationConfig& cfg);

// One row per transaction, (claim_id, time) order, header row required.
void write_transactions(const Portfolio& portfolio, const std::filesystem::path& path);

inline const char* transaction_csv_header() {
    return "claim_id,occurrence_time,notification_time,settlement_time,severity,age_band,"
           "legal_rep,txn_time,txn_kind,payment_amount,case_estimate_after";
}

// Read a SimulationConfig from a JSON document; unknown keys are rejected.
// Fields absent from the document keep their values from `base`.
SimulationConfig simulation_config_from_json_text(const std::string& text,
                                                  const SimulationConfig& base = {});
SimulationConfig load_simulation_config(const std::filesystem::path& path);
std::string simulation_config_to_json_text(const SimulationConfig& cfg);

}  // namespace claimcast
