#include "claimcast/features.hpp"

#include <algorithm>
#include <cmath>

#include "claimcast/errors.hpp"

namespace claimcast {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::FNN: return "FNN";
        case Variant::FNNPlus: return "FNN+";
        case Variant::LSTM: return "LSTM";
        case Variant::LSTMPlus: return "LSTM+";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    if (name == "FNN") return Variant::FNN;
    if (name == "FNN+") return Variant::FNNPlus;
    if (name == "LSTM") return Variant::LSTM;
    if (name == "LSTM+") return Variant::LSTMPlus;
    throw config_error("unknown model variant '" + std::string(name) + "'");
}

bool variant_uses_case_estimates(Variant v) {
    return v == Variant::FNNPlus || v == Variant::LSTMPlus;
}

bool variant_is_recurrent(Variant v) {
    return v == Variant::LSTM || v == Variant::LSTMPlus;
}

PaymentSummaries payment_summaries(std::span<const double> payments) {
    PaymentSummaries s;
    if (payments.empty()) return s;
    s.count = static_cast<double>(payments.size());
    double total = 0.0;
    for (double p : payments) {
        total += p;
        s.max = std::max(s.max, p);
    }
    s.mean = total / s.count;
    if (payments.size() > 1 && s.mean > 0.0) {
        double ss = 0.0;
        for (double p : payments) ss += (p - s.mean) * (p - s.mean);
        const double sd = std::sqrt(ss / (s.count - 1.0));
        s.cv = sd / s.mean;
    }
    return s;
}

CaseEstimateSummaries case_estimate_summaries(std::span<const double> ce_path) {
    CaseEstimateSummaries s;
    if (ce_path.size() < 2) return s;
    double upward = 0.0;
    for (std::size_t i = 1; i < ce_path.size(); ++i) {
        const double diff = ce_path[i] - ce_path[i - 1];
        if (diff == 0.0) continue;
        s.n_revisions += 1.0;
        s.largest_abs = std::max(s.largest_abs, std::abs(diff));
        s.total_abs += std::abs(diff);
        if (diff > 0.0) upward += 1.0;
    }
    if (s.n_revisions > 0.0) s.prop_upward = upward / s.n_revisions;
    return s;
}

bool static_field_is_dollar(int field) {
    switch (field) {
        case kMeanPayment:
        case kMaxPayment:
        case kLargestAbsRevision:
        case kTotalAbsRevisions:
        case kCurrentCaseEstimate:
            return true;
        default:
            return false;
    }
}

bool seq_channel_is_dollar(int channel) {
    return channel == kCumPaid || channel == kCaseEstimate;
}

std::vector<int> static_fields_for(Variant v, bool include_current_ce) {
    switch (v) {
        case Variant::FNN:
            return {kPredictionQuarter, kAccidentQuarter, kDevelopmentQuarter, kNPayments,
                    kMeanPayment,       kCvPayment,       kMaxPayment,         kLegalRep};
        case Variant::FNNPlus: {
            std::vector<int> fields{kPredictionQuarter, kAccidentQuarter,    kDevelopmentQuarter,
                                    kNPayments,         kMeanPayment,        kCvPayment,
                                    kMaxPayment,        kNRevisions,         kLargestAbsRevision,
                                    kTotalAbsRevisions, kPropUpward,         kLegalRep};
            if (include_current_ce) fields.push_back(kCurrentCaseEstimate);
            return fields;
        }
        case Variant::LSTM:
        case Variant::LSTMPlus:
            return {kPredictionQuarter, kAccidentQuarter, kLegalRep};
    }
    throw config_error("unknown model variant");
}

std::vector<int> seq_channels_for(Variant v) {
    switch (v) {
        case Variant::FNN:
        case Variant::FNNPlus:
            return {};
        case Variant::LSTM:
            return {kCalTime, kDevTime, kCumPaid};
        case Variant::LSTMPlus:
            return {kCalTime, kDevTime, kCumPaid, kCaseEstimate};
    }
    throw config_error("unknown model variant");
}

double apply_normaliser(double x, double mean, double sd) { return (x - mean) / sd; }
double invert_normaliser(double z, double mean, double sd) { return z * sd + mean; }

namespace {

double transform_static(int field, double raw) {
    return static_field_is_dollar(field) ? std::log1p(raw) : raw;
}

double transform_seq(int channel, double raw) {
    return seq_channel_is_dollar(channel) ? std::log1p(raw) : raw;
}

struct MeanSd {
    double n = 0.0, mean = 0.0, m2 = 0.0;
    void add(double x) {
        n += 1.0;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    double sd() const {
        if (n < 2.0) return 1.0;
        const double v = m2 / (n - 1.0);
        const double s = std::sqrt(std::max(v, 0.0));
        return s < 1e-12 ? 1.0 : s;
    }
};

}  // namespace

std::vector<double> raw_static_fields(const Portfolio& portfolio, const Observation& obs) {
    const auto history = obs.history(portfolio);

    std::vector<double> payments;
    std::vector<double> ce_path;
    payments.reserve(history.size());
    ce_path.reserve(history.size());
    for (const TransactionEvent& e : history) {
        if (e.kind == TxnKind::Payment && e.payment_amount > 0.0)
            payments.push_back(e.payment_amount);
        ce_path.push_back(e.case_estimate_after);
    }
    const PaymentSummaries pay = payment_summaries(payments);
    const CaseEstimateSummaries ce = case_estimate_summaries(ce_path);

    std::vector<double> raw(kNumStaticFields, 0.0);
    raw[kPredictionQuarter] = obs.prediction_quarter;
    raw[kAccidentQuarter] = obs.accident_quarter;
    raw[kDevelopmentQuarter] = obs.quarters_since_notification;
    raw[kNPayments] = pay.count;
    raw[kMeanPayment] = pay.mean;
    raw[kCvPayment] = pay.cv;
    raw[kMaxPayment] = pay.max;
    raw[kNRevisions] = ce.n_revisions;
    raw[kLargestAbsRevision] = ce.largest_abs;
    raw[kTotalAbsRevisions] = ce.total_abs;
    raw[kPropUpward] = ce.prop_upward;
    raw[kLegalRep] = portfolio[obs.claim_index].legal_rep;
    raw[kCurrentCaseEstimate] = obs.case_estimate_now;
    return raw;
}

NormalisationStats fit_normaliser(const Portfolio& portfolio,
                                  std::span<const Observation> train_observations) {
    if (train_observations.empty())
        throw config_error("fit_normaliser requires a nonempty training set");

    std::vector<MeanSd> stat(kNumStaticFields);
    std::vector<MeanSd> seq(kNumSeqChannels);
    MeanSd target;

    for (const Observation& obs : train_observations) {
        const std::vector<double> raw = raw_static_fields(portfolio, obs);
        for (int f = 0; f < kNumStaticFields; ++f)
            stat[static_cast<std::size_t>(f)].add(transform_static(f, raw[static_cast<std::size_t>(f)]));

        const auto history = obs.history(portfolio);
        const ClaimRecord& c = portfolio[obs.claim_index];
        double cum_paid = 0.0;
        for (const TransactionEvent& e : history) {
            cum_paid += e.payment_amount;
            seq[kCalTime].add(e.time);
            seq[kDevTime].add(e.time - c.notification_time);
            seq[kCumPaid].add(transform_seq(kCumPaid, cum_paid));
            seq[kCaseEstimate].add(transform_seq(kCaseEstimate, e.case_estimate_after));
        }
        if (obs.target_ultimate <= 0.0)
            throw domain_error("claim " + std::to_string(obs.claim_id) +
                               ": target ultimate must be > 0");
        target.add(std::log(obs.target_ultimate));
    }

    NormalisationStats out;
    out.static_mean.resize(kNumStaticFields);
    out.static_sd.resize(kNumStaticFields);
    for (int f = 0; f < kNumStaticFields; ++f) {
        out.static_mean[static_cast<std::size_t>(f)] = stat[static_cast<std::size_t>(f)].mean;
        out.static_sd[static_cast<std::size_t>(f)] = stat[static_cast<std::size_t>(f)].sd();
    }
    out.seq_mean.resize(kNumSeqChannels);
    out.seq_sd.resize(kNumSeqChannels);
    for (int ch = 0; ch < kNumSeqChannels; ++ch) {
        out.seq_mean[static_cast<std::size_t>(ch)] = seq[static_cast<std::size_t>(ch)].mean;
        out.seq_sd[static_cast<std::size_t>(ch)] = seq[static_cast<std::size_t>(ch)].sd();
    }
    out.target_mean = target.mean;
    out.target_sd = target.sd();
    return out;
}

double make_target(double ultimate, const NormalisationStats& stats) {
    if (ultimate <= 0.0) throw domain_error("make_target: ultimate must be > 0");
    return (std::log(ultimate) - stats.target_mean) / stats.target_sd;
}

double invert_target(double y, const NormalisationStats& stats) {
    return std::exp(y * stats.target_sd + stats.target_mean);
}

int severity_index(int severity) {
    return (severity >= 1 && severity <= kSeverityVocab) ? severity - 1 : kSeverityVocab;
}

int age_index(int age_band) {
    return (age_band >= 0 && age_band < kAgeVocab) ? age_band : kAgeVocab;
}

SequenceFeatures build_sequence(const Portfolio& portfolio, const Observation& obs,
                                Variant variant, const NormalisationStats& stats) {
    const std::vector<int> channels = seq_channels_for(variant);
    SequenceFeatures seq;
    seq.n_channels = static_cast<int>(channels.size());
    if (channels.empty()) return seq;

    const auto history = obs.history(portfolio);
    const ClaimRecord& c = portfolio[obs.claim_index];
    seq.steps.reserve(history.size() * channels.size());
    double cum_paid = 0.0;
    for (const TransactionEvent& e : history) {
        cum_paid += e.payment_amount;
        for (int ch : channels) {
            double raw = 0.0;
            switch (ch) {
                case kCalTime: raw = e.time; break;
                case kDevTime: raw = e.time - c.notification_time; break;
                case kCumPaid: raw = cum_paid; break;
                case kCaseEstimate: raw = e.case_estimate_after; break;
            }
            const std::size_t u = static_cast<std::size_t>(ch);
            seq.steps.push_back(
                apply_normaliser(transform_seq(ch, raw), stats.seq_mean[u], stats.seq_sd[u]));
        }
    }
    return seq;
}

StaticFeatures encode_static(const Portfolio& portfolio, const Observation& obs, Variant variant,
                             const NormalisationStats& stats, bool include_current_ce) {
    StaticFeatures out;
    out.fields = static_fields_for(variant, include_current_ce);
    const std::vector<double> raw = raw_static_fields(portfolio, obs);
    out.values.reserve(out.fields.size());
    for (int f : out.fields) {
        const std::size_t u = static_cast<std::size_t>(f);
        out.values.push_back(apply_normaliser(transform_static(f, raw[u]), stats.static_mean[u],
                                              stats.static_sd[u]));
    }
    const ClaimRecord& c = portfolio[obs.claim_index];
    out.severity_index = severity_index(c.severity);
    out.age_index = age_index(c.age_band);
    return out;
}

int EncodedDataset::n_channels() const {
    return static_cast<int>(seq_channels_for(variant).size());
}

EncodedDataset encode_observations(const Portfolio& portfolio,
                                   std::span<const Observation> observations, Variant variant,
                                   const NormalisationStats& stats, bool include_current_ce) {
    EncodedDataset ds;
    ds.variant = variant;
    const std::vector<int> fields = static_fields_for(variant, include_current_ce);
    const Eigen::Index n = static_cast<Eigen::Index>(observations.size());

    ds.static_cont.resize(n, static_cast<Eigen::Index>(fields.size()));
    ds.severity_idx.resize(observations.size());
    ds.age_idx.resize(observations.size());
    ds.targets.resize(n);
    ds.claim_ids.resize(observations.size());
    ds.prediction_quarters.resize(observations.size());
    ds.accident_quarters.resize(observations.size());
    ds.dev_quarters.resize(observations.size());
    ds.paid_to_date.resize(n);
    ds.actual_ultimate.resize(n);
    ds.case_estimate.resize(n);
    const bool recurrent = variant_is_recurrent(variant);
    if (recurrent) {
        ds.sequences.resize(observations.size());
        ds.seq_len.resize(observations.size());
    }

    for (std::size_t i = 0; i < observations.size(); ++i) {
        const Observation& obs = observations[i];
        const StaticFeatures st =
            encode_static(portfolio, obs, variant, stats, include_current_ce);
        for (std::size_t k = 0; k < st.values.size(); ++k)
            ds.static_cont(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                st.values[k];
        ds.severity_idx[i] = st.severity_index;
        ds.age_idx[i] = st.age_index;
        if (recurrent) {
            SequenceFeatures seq = build_sequence(portfolio, obs, variant, stats);
            ds.seq_len[i] = seq.length();
            ds.sequences[i] = std::move(seq.steps);
        }
        ds.targets(static_cast<Eigen::Index>(i)) = make_target(obs.target_ultimate, stats);
        ds.claim_ids[i] = obs.claim_id;
        ds.prediction_quarters[i] = obs.prediction_quarter;
        ds.accident_quarters[i] = obs.accident_quarter;
        ds.dev_quarters[i] = obs.quarters_since_notification;
        ds.paid_to_date(static_cast<Eigen::Index>(i)) = obs.paid_to_date;
        ds.actual_ultimate(static_cast<Eigen::Index>(i)) = obs.target_ultimate;
        ds.case_estimate(static_cast<Eigen::Index>(i)) = obs.case_estimate_now;
    }
    return ds;
}

}  // namespace claimcast
