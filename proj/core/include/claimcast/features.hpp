#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "claimcast/dataset.hpp"

namespace claimcast {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Variant { FNN, FNNPlus, LSTM, LSTMPlus };

const char* variant_name(Variant v);  // "FNN", "FNN+", "LSTM", "LSTM+"
Variant parse_variant(std::string_view name);
bool variant_uses_case_estimates(Variant v);
bool variant_is_recurrent(Variant v);

struct PaymentSummaries {
    double count = 0.0;
    double mean = 0.0;
    double cv = 0.0;  // sample sd / mean; 0 for fewer than two payments
    double max = 0.0;
};

// Summaries of the payments made at or before the prediction time.
PaymentSummaries payment_summaries(std::span<const double> payments);

struct CaseEstimateSummaries {
    double n_revisions = 0.0;
    double largest_abs = 0.0;
    double total_abs = 0.0;
    double prop_upward = 0.0;  // 0 when there are no revisions
};

// Revisions are the nonzero consecutive differences of the case-estimate
// path; the path's first entry (the initial estimate) is not a revision.
CaseEstimateSummaries case_estimate_summaries(std::span<const double> ce_path);

// Canonical continuous static layout (superset across variants). Variants
// select a subset of these columns; severity/age enter via embeddings.
enum StaticField : int {
    kPredictionQuarter = 0,
    kAccidentQuarter,
    kDevelopmentQuarter,
    kNPayments,
    kMeanPayment,
    kCvPayment,
    kMaxPayment,
    kNRevisions,
    kLargestAbsRevision,
    kTotalAbsRevisions,
    kPropUpward,
    kLegalRep,
    kCurrentCaseEstimate,  // opt-in via include_current_ce
    kNumStaticFields
};

// Sequence channels fed to the recurrent layers, one step per transaction.
enum SeqChannel : int {
    kCalTime = 0,
    kDevTime,
    kCumPaid,
    kCaseEstimate,  // LSTM+ only
    kNumSeqChannels
};

// Dollar-scale fields are passed through log1p before z-scoring.
bool static_field_is_dollar(int field);
bool seq_channel_is_dollar(int channel);

std::vector<int> static_fields_for(Variant v, bool include_current_ce);
std::vector<int> seq_channels_for(Variant v);

// Per-feature mean/sd fitted on training observations only; sds are floored
// so the transform stays invertible.
struct NormalisationStats {
    std::vector<double> static_mean, static_sd;  // kNumStaticFields entries
    std::vector<double> seq_mean, seq_sd;        // kNumSeqChannels entries
    double target_mean = 0.0;
    double target_sd = 1.0;
};

double apply_normaliser(double x, double mean, double sd);
double invert_normaliser(double z, double mean, double sd);

// Raw (untransformed) values of every canonical static field for one
// observation.
std::vector<double> raw_static_fields(const Portfolio& portfolio, const Observation& obs);

NormalisationStats fit_normaliser(const Portfolio& portfolio,
                                  std::span<const Observation> train_observations);

// Normalised log target: (log(ultimate) - target_mean) / target_sd.
double make_target(double ultimate, const NormalisationStats& stats);
double invert_target(double y, const NormalisationStats& stats);

// Severity 1..6 and age band 0..8 map to dense 0-based indices; anything
// outside the known range maps to the reserved (last) embedding row.
inline constexpr int kSeverityVocab = 6;
inline constexpr int kAgeVocab = 9;
int severity_index(int severity);
int age_index(int age_band);

// Model-ready encoding of a set of observations for one variant. Sequences
// are stored per observation as step-major [t * n_channels + c] with raw
// bookkeeping columns kept for evaluation.
struct EncodedDataset {
    Variant variant = Variant::FNN;
    Mat static_cont;                         // N x n_static, standardized
    std::vector<int> severity_idx, age_idx;  // N
    std::vector<std::vector<double>> sequences;  // standardized; empty for FNN variants
    std::vector<int> seq_len;
    Vec targets;  // normalized log scale

    // Raw per-observation bookkeeping for calibration and evaluation.
    std::vector<std::uint32_t> claim_ids;
    std::vector<int> prediction_quarters;
    std::vector<int> accident_quarters;
    std::vector<int> dev_quarters;
    Vec paid_to_date;
    Vec actual_ultimate;
    Vec case_estimate;

    int n_static() const { return static_cast<int>(static_cont.cols()); }
    int n_channels() const;
    Eigen::Index size() const { return static_cont.rows(); }
};

EncodedDataset encode_observations(const Portfolio& portfolio,
                                   std::span<const Observation> observations, Variant variant,
                                   const NormalisationStats& stats,
                                   bool include_current_ce = false);

// Per-observation views used by the unit tests and the feature dump.
struct SequenceFeatures {
    int n_channels = 0;
    std::vector<double> steps;  // step-major, standardized
    int length() const { return static_cast<int>(steps.size()) / n_channels; }
};
SequenceFeatures build_sequence(const Portfolio& portfolio, const Observation& obs,
                                Variant variant, const NormalisationStats& stats);

struct StaticFeatures {
    std::vector<int> fields;       // canonical field ids, in column order
    std::vector<double> values;    // standardized
    int severity_index = 0;
    int age_index = 0;
};
StaticFeatures encode_static(const Portfolio& portfolio, const Observation& obs, Variant variant,
                             const NormalisationStats& stats, bool include_current_ce = false);

}  // namespace claimcast
