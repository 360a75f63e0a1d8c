#include "claimcast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "claimcast/errors.hpp"
#include "claimcast/rng.hpp"
#include "claimcast/text.hpp"

namespace claimcast {

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "?";
}

std::vector<Observation> build_observations(const Portfolio& portfolio) {
    std::vector<Observation> out;
    for (std::uint32_t idx = 0; idx < portfolio.size(); ++idx) {
        const ClaimRecord& c = portfolio[idx];
        const int notif_quarter = static_cast<int>(std::floor(c.notification_time));
        const int first = notif_quarter + 1;
        const int last = static_cast<int>(std::floor(c.settlement_time));
        if (first > last) continue;  // reported and settled within one quarter

        std::size_t cursor = 0;
        double paid = 0.0;
        double estimate = 0.0;
        for (int q = first; q <= last; ++q) {
            while (cursor < c.events.size() && c.events[cursor].time <= static_cast<double>(q)) {
                paid += c.events[cursor].payment_amount;
                estimate = c.events[cursor].case_estimate_after;
                ++cursor;
            }
            Observation obs;
            obs.claim_index = idx;
            obs.claim_id = c.claim_id;
            obs.prediction_quarter = q;
            obs.accident_quarter = c.accident_quarter();
            obs.quarters_since_notification = q - notif_quarter;
            obs.paid_to_date = paid;
            obs.case_estimate_now = estimate;
            obs.history_size = cursor;
            obs.target_ultimate = c.ultimate_size;
            out.push_back(obs);
        }
    }
    return out;
}

SplitAssignment assign_splits(const Portfolio& portfolio, SplitBoundaries boundaries,
                              double move_fraction, std::uint64_t seed) {
    if (boundaries.train_cutoff >= boundaries.valuation)
        throw config_error("split boundaries must satisfy train_cutoff < valuation");
    if (move_fraction < 0.0 || move_fraction >= 1.0)
        throw config_error("move_fraction must be in [0, 1)");

    SplitAssignment split;
    split.mode = SplitMode::Finalisation;
    split.boundaries = boundaries;
    split.move_fraction = move_fraction;
    split.seed = seed;

    std::vector<std::uint32_t> validation_ids;
    for (const ClaimRecord& c : portfolio) {
        Split s;
        if (c.settlement_time < boundaries.train_cutoff) {
            s = Split::Train;
        } else if (c.settlement_time < boundaries.valuation) {
            s = Split::Validation;
            validation_ids.push_back(c.claim_id);
        } else {
            s = Split::Test;
        }
        split.by_claim.emplace(c.claim_id, s);
    }

    std::sort(validation_ids.begin(), validation_ids.end());
    RngStream rng(derive_seed(seed, "split-move"));
    rng.shuffle(validation_ids);
    const std::size_t n_move = static_cast<std::size_t>(
        std::llround(move_fraction * static_cast<double>(validation_ids.size())));
    for (std::size_t i = 0; i < n_move; ++i) {
        split.by_claim[validation_ids[i]] = Split::Train;
        split.moved_claims.push_back(validation_ids[i]);
    }
    std::sort(split.moved_claims.begin(), split.moved_claims.end());
    return split;
}

SplitAssignment assign_splits_naive(const Portfolio& portfolio,
                                    const std::array<double, 3>& fractions, std::uint64_t seed) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9) throw config_error("naive split fractions must sum to 1");
    for (double f : fractions)
        if (f < 0.0) throw config_error("naive split fractions must be >= 0");

    SplitAssignment split;
    split.mode = SplitMode::Naive;
    split.seed = seed;

    std::vector<std::uint32_t> ids;
    ids.reserve(portfolio.size());
    for (const ClaimRecord& c : portfolio) ids.push_back(c.claim_id);
    std::sort(ids.begin(), ids.end());
    RngStream rng(derive_seed(seed, "split-naive"));
    rng.shuffle(ids);

    // Largest-remainder apportionment of claim counts.
    const double n = static_cast<double>(ids.size());
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
        const double target = fractions[static_cast<std::size_t>(k)] * n;
        sizes[static_cast<std::size_t>(k)] = static_cast<std::size_t>(std::floor(target));
        remainders[static_cast<std::size_t>(k)] = target - std::floor(target);
        assigned += sizes[static_cast<std::size_t>(k)];
    }
    while (assigned < ids.size()) {
        int best = 0;
        for (int k = 1; k < 3; ++k)
            if (remainders[static_cast<std::size_t>(k)] > remainders[static_cast<std::size_t>(best)])
                best = k;
        sizes[static_cast<std::size_t>(best)] += 1;
        remainders[static_cast<std::size_t>(best)] = -1.0;
        ++assigned;
    }

    std::size_t pos = 0;
    static const Split order[3] = {Split::Train, Split::Validation, Split::Test};
    for (int k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < sizes[static_cast<std::size_t>(k)]; ++i, ++pos)
            split.by_claim.emplace(ids[pos], order[k]);
    }
    return split;
}

std::vector<Observation> valuation_slice(const std::vector<Observation>& observations,
                                         int valuation_quarter) {
    std::vector<Observation> out;
    for (const Observation& o : observations)
        if (o.prediction_quarter == valuation_quarter) out.push_back(o);
    return out;
}

namespace {

struct PendingClaim {
    ClaimRecord claim;
    double cum_paid = 0.0;
    bool seen = false;
};

void validate_claim(const ClaimRecord& c) {
    const std::string tag = "claim " + std::to_string(c.claim_id);
    if (c.occurrence_time > c.notification_time)
        throw data_error(tag + ": occurrence_time > notification_time");
    if (c.notification_time >= c.settlement_time)
        throw data_error(tag + ": notification_time >= settlement_time");
    if (c.events.empty()) throw data_error(tag + ": no transactions");
    if (c.ultimate_size <= 0.0) throw data_error(tag + ": ultimate_size must be > 0");

    double cum = 0.0;
    double prev_time = c.notification_time;
    bool any_payment = false;
    for (const TransactionEvent& e : c.events) {
        if (e.time < c.notification_time - 1e-12 || e.time > c.settlement_time + 1e-12)
            throw data_error(tag + ": event outside [notification, settlement]");
        if (e.time < prev_time) throw data_error(tag + ": events out of order");
        prev_time = e.time;
        if (e.payment_amount < 0.0) throw data_error(tag + ": negative payment_amount");
        if (e.kind == TxnKind::Payment && e.payment_amount > 0.0) any_payment = true;
        cum += e.payment_amount;
        if (e.case_estimate_after < cum - 1e-9 * std::max(1.0, cum))
            throw data_error(tag + ": case_estimate_after below cumulative payments");
    }
    if (!any_payment) throw data_error(tag + ": claim has no payments");
    if (cum != c.ultimate_size)
        throw data_error(tag + ": payments do not sum to ultimate_size");
    if (c.events.back().case_estimate_after != c.ultimate_size)
        throw data_error(tag + ": final case estimate != ultimate_size");
}

}  // namespace

Portfolio load_transactions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw parse_error(path.string() + ": empty file (missing header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != transaction_csv_header())
        throw parse_error(path.string() + ":1: unexpected header");

    Portfolio portfolio;
    std::unordered_map<std::uint32_t, std::size_t> index_of;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto fields = split_csv(line);
        if (fields.size() != 11) throw parse_error(where + ": expected 11 fields");

        const long id = parse_long(fields[0], where);
        if (id <= 0) throw parse_error(where + ": claim_id must be positive");
        const std::uint32_t claim_id = static_cast<std::uint32_t>(id);

        auto [it, inserted] = index_of.emplace(claim_id, portfolio.size());
        if (inserted) {
            ClaimRecord c;
            c.claim_id = claim_id;
            c.occurrence_time = parse_double(fields[1], where);
            c.notification_time = parse_double(fields[2], where);
            c.settlement_time = parse_double(fields[3], where);
            c.severity = static_cast<int>(parse_long(fields[4], where));
            c.age_band = static_cast<int>(parse_long(fields[5], where));
            c.legal_rep = static_cast<int>(parse_long(fields[6], where));
            portfolio.push_back(std::move(c));
        }
        ClaimRecord& c = portfolio[it->second];

        TransactionEvent e;
        e.time = parse_double(fields[7], where);
        e.kind = parse_txn_kind(fields[8]);
        e.payment_amount = parse_double(fields[9], where);
        e.case_estimate_after = parse_double(fields[10], where);
        if (e.payment_amount < 0.0)
            throw data_error("claim " + std::to_string(claim_id) + ": negative payment_amount (" +
                             where + ")");
        c.events.push_back(e);
    }

    for (ClaimRecord& c : portfolio) {
        double cum = 0.0;
        for (const TransactionEvent& e : c.events) cum += e.payment_amount;
        c.ultimate_size = cum;
        validate_claim(c);
    }
    return portfolio;
}

void write_split_manifest(const SplitAssignment& split, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << "claim_id,split\n";
    std::vector<std::uint32_t> ids;
    ids.reserve(split.by_claim.size());
    for (const auto& [id, s] : split.by_claim) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    char idbuf[16];
    for (std::uint32_t id : ids) {
        std::snprintf(idbuf, sizeof(idbuf), "%06u", id);
        out << idbuf << ',' << split_name(split.by_claim.at(id)) << "\n";
    }
    if (!out) throw io_error("write failed for '" + path.string() + "'");
}

SplitAssignment load_split_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw parse_error(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "claim_id,split") throw parse_error(path.string() + ":1: unexpected header");

    SplitAssignment split;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto fields = split_csv(line);
        if (fields.size() != 2) throw parse_error(where + ": expected 2 fields");
        const std::uint32_t id = static_cast<std::uint32_t>(parse_long(fields[0], where));
        Split s;
        if (fields[1] == "train") {
            s = Split::Train;
        } else if (fields[1] == "validation") {
            s = Split::Validation;
        } else if (fields[1] == "test") {
            s = Split::Test;
        } else {
            throw parse_error(where + ": unknown split label");
        }
        split.by_claim.emplace(id, s);
    }
    return split;
}

}  // namespace claimcast
