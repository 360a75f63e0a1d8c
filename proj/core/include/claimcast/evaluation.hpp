#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "claimcast/dataset.hpp"
#include "claimcast/features.hpp"

namespace claimcast {

// One model's dollar-scale predictions on a set of observations, alongside
// the ground truth needed by the metric suite.
struct PredictionRow {
    std::uint32_t claim_id = 0;
    int prediction_quarter = 0;
    int accident_quarter = 0;
    int dev_quarter = 0;          // quarters since notification
    double y_hat = 0.0;           // dollar prediction of the ultimate
    double paid = 0.0;            // P_i
    double actual_ultimate = 0.0; // Y_i
    double case_estimate = 0.0;   // in-force estimate at the prediction time
};

struct PredictionSet {
    std::string source;
    std::vector<PredictionRow> rows;
};

enum class Weighting { Unit, ClaimSize, Ocl };
const char* weighting_name(Weighting w);

// Share of weight on observations where M1's prediction is strictly closer to
// the actual ultimate than M2's; ties count against M1. Unit weighting is
// reported as a proportion of n.
double m1_vs_m2(const PredictionSet& m1, const PredictionSet& m2, Weighting weighting);

// Mean |log((Yhat-P)/(Y-P))|; a nonpositive predicted outstanding contributes
// |log(Y-P)| instead.
double male(const PredictionSet& preds);

// As MALE with squared contributions; replacement value (log(Y-P))^2.
double msle(const PredictionSet& preds);

// Aggregate predicted outstanding over actual outstanding, minus one.
double ocl_err(const PredictionSet& preds);

// The case estimate is a total-incurred prediction, directly comparable to a
// model's Yhat; no bias correction applies.
PredictionSet case_estimates_as_model(std::span<const Observation> observations);

enum class GroupKey { AccidentQuarter, QuartersSinceNotification };
const char* group_key_name(GroupKey k);

struct BreakdownRow {
    int group = 0;
    std::size_t n = 0;
    double aggregate_ratio = 0.0;    // sum(Yhat-P)/sum(Y-P) within the group
    double outstanding_share = 0.0;  // group share of total actual outstanding
    double cumulative_share = 0.0;   // share for groups <= this one
};

// Per-group aggregate ratios plus the cumulative actual-outstanding curve
// (nondecreasing from 0 to 1); empty groups are omitted.
std::vector<BreakdownRow> report_breakdowns(const PredictionSet& preds, GroupKey key);

// Scalar metrics plus pairwise comparisons for one model on one dataset.
struct MetricsReport {
    std::string source;
    std::size_t n_observations = 0;
    double ocl_err = 0.0;
    double male = 0.0;
    double msle = 0.0;
    double smearing_b = 1.0;
    bool has_uncorrected = false;
    double ocl_err_uncorrected = 0.0;
    // (opponent, weighting) -> M1vsM2 value with this model as M1.
    std::map<std::string, std::map<std::string, double>> vs;
};

MetricsReport compute_metrics(const PredictionSet& preds,
                              std::span<const PredictionSet> opponents);

}  // namespace claimcast
