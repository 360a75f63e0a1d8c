#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "claimcast/simulator.hpp"

namespace claimcast {

// Snapshot of one claim at the end of one calendar quarter. The history is a
// prefix of the claim's event list (everything with time <= the prediction
// quarter); the target is hidden from the features.
struct Observation {
    std::uint32_t claim_index = 0;  // position in the portfolio
    std::uint32_t claim_id = 0;
    int prediction_quarter = 0;
    int accident_quarter = 0;
    int quarters_since_notification = 0;  // >= 1
    double paid_to_date = 0.0;
    double case_estimate_now = 0.0;
    std::size_t history_size = 0;  // events[0 .. history_size) are visible
    double target_ultimate = 0.0;

    std::span<const TransactionEvent> history(const Portfolio& p) const {
        return std::span<const TransactionEvent>(p[claim_index].events.data(), history_size);
    }
};

// A claim open on (t1, t2) yields one observation per integer quarter
// floor(t1)+1 ... floor(t2); claims reported and settled within a single
// calendar quarter yield none and are excluded.
std::vector<Observation> build_observations(const Portfolio& portfolio);

enum class Split { Train, Validation, Test };
const char* split_name(Split s);

enum class SplitMode { Finalisation, Naive };

struct SplitBoundaries {
    double train_cutoff = 36.0;
    double valuation = 40.0;
};

struct SplitAssignment {
    SplitMode mode = SplitMode::Finalisation;
    SplitBoundaries boundaries;
    double move_fraction = 0.0;
    std::uint64_t seed = 0;
    std::unordered_map<std::uint32_t, Split> by_claim;  // claim_id -> split
    std::vector<std::uint32_t> moved_claims;            // validation -> train moves

    Split of(std::uint32_t claim_id) const { return by_claim.at(claim_id); }
};

// Finalisation-time split: train if settled before the cutoff, validation if
// settled in [cutoff, valuation), test otherwise; then a uniformly random
// move_fraction of validation claims is moved into train. Claims are moved
// whole so no claim's observations straddle two sets.
SplitAssignment assign_splits(const Portfolio& portfolio, SplitBoundaries boundaries,
                              double move_fraction, std::uint64_t seed);

// Random split by claim id into the given train/validation/test fractions
// (largest-remainder rounding).
SplitAssignment assign_splits_naive(const Portfolio& portfolio,
                                    const std::array<double, 3>& fractions, std::uint64_t seed);

// Observations made exactly at the valuation quarter; one per open claim,
// IBNR claims absent by construction.
std::vector<Observation> valuation_slice(const std::vector<Observation>& observations,
                                         int valuation_quarter);

// Reassemble a portfolio from the transaction CSV; all claim and event
// invariants are revalidated.
Portfolio load_transactions(const std::filesystem::path& path);

void write_split_manifest(const SplitAssignment& split, const std::filesystem::path& path);

// Reads a manifest written by write_split_manifest; only the claim -> split
// mapping is recovered.
SplitAssignment load_split_manifest(const std::filesystem::path& path);

}  // namespace claimcast
