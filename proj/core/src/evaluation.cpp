#include "claimcast/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "claimcast/errors.hpp"

namespace claimcast {

const char* weighting_name(Weighting w) {
    switch (w) {
        case Weighting::Unit: return "unit";
        case Weighting::ClaimSize: return "claim_size";
        case Weighting::Ocl: return "ocl";
    }
    return "?";
}

const char* group_key_name(GroupKey k) {
    switch (k) {
        case GroupKey::AccidentQuarter: return "accident_quarter";
        case GroupKey::QuartersSinceNotification: return "quarters_since_notification";
    }
    return "?";
}

namespace {

void check_alignment(const PredictionSet& a, const PredictionSet& b) {
    if (a.rows.size() != b.rows.size())
        throw alignment_error("prediction sets '" + a.source + "' and '" + b.source +
                              "' cover different observation counts");
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].claim_id != b.rows[i].claim_id ||
            a.rows[i].prediction_quarter != b.rows[i].prediction_quarter)
            throw alignment_error("prediction sets '" + a.source + "' and '" + b.source +
                                  "' cover different observations");
    }
}

}  // namespace

double m1_vs_m2(const PredictionSet& m1, const PredictionSet& m2, Weighting weighting) {
    check_alignment(m1, m2);
    if (m1.rows.empty()) throw config_error("m1_vs_m2: empty prediction sets");

    double denom = 0.0;
    for (const PredictionRow& r : m1.rows) {
        switch (weighting) {
            case Weighting::Unit: denom += 1.0; break;
            case Weighting::ClaimSize: denom += r.actual_ultimate; break;
            case Weighting::Ocl: denom += r.actual_ultimate - r.paid; break;
        }
    }
    if (denom <= 0.0) throw domain_error("m1_vs_m2: nonpositive total weight");

    double won = 0.0;
    for (std::size_t i = 0; i < m1.rows.size(); ++i) {
        const PredictionRow& r1 = m1.rows[i];
        const PredictionRow& r2 = m2.rows[i];
        if (std::abs(r1.y_hat - r1.actual_ultimate) >= std::abs(r2.y_hat - r2.actual_ultimate))
            continue;  // strict inequality: ties count as losses for M1
        switch (weighting) {
            case Weighting::Unit: won += 1.0; break;
            case Weighting::ClaimSize: won += r1.actual_ultimate; break;
            case Weighting::Ocl: won += r1.actual_ultimate - r1.paid; break;
        }
    }
    return won / denom;
}

namespace {

double log_error_contribution(const PredictionRow& r) {
    const double actual_ocl = r.actual_ultimate - r.paid;
    if (actual_ocl <= 0.0)
        throw domain_error("claim " + std::to_string(r.claim_id) +
                           ": actual outstanding must be > 0");
    const double pred_ocl = r.y_hat - r.paid;
    // A nonpositive predicted outstanding has no logarithm; the contribution
    // is replaced by the (heavily penalising) log of the actual outstanding.
    if (pred_ocl <= 0.0) return std::log(actual_ocl);
    return std::log(pred_ocl / actual_ocl);
}

}  // namespace

double male(const PredictionSet& preds) {
    if (preds.rows.empty()) throw config_error("male: empty prediction set");
    double total = 0.0;
    for (const PredictionRow& r : preds.rows) total += std::abs(log_error_contribution(r));
    return total / static_cast<double>(preds.rows.size());
}

double msle(const PredictionSet& preds) {
    if (preds.rows.empty()) throw config_error("msle: empty prediction set");
    double total = 0.0;
    for (const PredictionRow& r : preds.rows) {
        const double e = log_error_contribution(r);
        total += e * e;
    }
    return total / static_cast<double>(preds.rows.size());
}

double ocl_err(const PredictionSet& preds) {
    if (preds.rows.empty()) throw config_error("ocl_err: empty prediction set");
    double predicted = 0.0;
    double actual = 0.0;
    for (const PredictionRow& r : preds.rows) {
        predicted += r.y_hat - r.paid;
        actual += r.actual_ultimate - r.paid;
    }
    if (actual <= 0.0) throw domain_error("ocl_err: total actual outstanding must be > 0");
    return predicted / actual - 1.0;
}

PredictionSet case_estimates_as_model(std::span<const Observation> observations) {
    PredictionSet out;
    out.source = "CE-baseline";
    out.rows.reserve(observations.size());
    for (const Observation& obs : observations) {
        PredictionRow row;
        row.claim_id = obs.claim_id;
        row.prediction_quarter = obs.prediction_quarter;
        row.accident_quarter = obs.accident_quarter;
        row.dev_quarter = obs.quarters_since_notification;
        row.y_hat = obs.case_estimate_now;
        row.paid = obs.paid_to_date;
        row.actual_ultimate = obs.target_ultimate;
        row.case_estimate = obs.case_estimate_now;
        out.rows.push_back(row);
    }
    return out;
}

std::vector<BreakdownRow> report_breakdowns(const PredictionSet& preds, GroupKey key) {
    std::map<int, BreakdownRow> groups;
    double total_actual = 0.0;
    std::map<int, double> predicted, actual;
    for (const PredictionRow& r : preds.rows) {
        const int g = key == GroupKey::AccidentQuarter ? r.accident_quarter : r.dev_quarter;
        predicted[g] += r.y_hat - r.paid;
        actual[g] += r.actual_ultimate - r.paid;
        groups[g].n += 1;
        total_actual += r.actual_ultimate - r.paid;
    }
    std::vector<BreakdownRow> out;
    double cumulative = 0.0;
    for (auto& [g, row] : groups) {
        row.group = g;
        row.aggregate_ratio = actual[g] != 0.0 ? predicted[g] / actual[g] : 0.0;
        row.outstanding_share = total_actual > 0.0 ? actual[g] / total_actual : 0.0;
        cumulative += row.outstanding_share;
        row.cumulative_share = cumulative;
        out.push_back(row);
    }
    return out;
}

MetricsReport compute_metrics(const PredictionSet& preds,
                              std::span<const PredictionSet> opponents) {
    MetricsReport report;
    report.source = preds.source;
    report.n_observations = preds.rows.size();
    report.ocl_err = ocl_err(preds);
    report.male = male(preds);
    report.msle = msle(preds);
    for (const PredictionSet& opp : opponents) {
        if (opp.source == preds.source) continue;
        auto& row = report.vs[opp.source];
        row[weighting_name(Weighting::Unit)] = m1_vs_m2(preds, opp, Weighting::Unit);
        row[weighting_name(Weighting::ClaimSize)] = m1_vs_m2(preds, opp, Weighting::ClaimSize);
        row[weighting_name(Weighting::Ocl)] = m1_vs_m2(preds, opp, Weighting::Ocl);
    }
    return report;
}

}  // namespace claimcast
