#include <doctest.h>

#include <claimcast/dataset.hpp>
#include <claimcast/errors.hpp>
#include <claimcast/simulator.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace claimcast;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / (std::string("claimcast_sim_") + name);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

SimulationConfig desk_config(std::uint64_t seed) {
    SimulationConfig cfg;
    cfg.n_accident_quarters = 8;
    cfg.expected_claims_per_quarter = 60.0;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("zero claim rate yields an empty portfolio") {
    SimulationConfig cfg = desk_config(1);
    cfg.expected_claims_per_quarter = 0.0;
    CHECK(simulate_portfolio(cfg).empty());
}

TEST_CASE("identical config and seed give bit-identical serialized output") {
    const SimulationConfig cfg = desk_config(7);
    const auto p1 = temp_file("det_a.csv");
    const auto p2 = temp_file("det_b.csv");
    write_transactions(simulate_portfolio(cfg), p1);
    write_transactions(simulate_portfolio(cfg), p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(!slurp(p1).empty());
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("paper-scale portfolio lands near 30k claims and 250k transactions") {
    SimulationConfig cfg;  // defaults are paper scale: 40 quarters, 750/quarter
    cfg.seed = 42;
    const Portfolio p = simulate_portfolio(cfg);
    std::size_t txns = 0;
    for (const ClaimRecord& c : p) txns += c.events.size();
    CHECK(p.size() > 24000);
    CHECK(p.size() < 36000);
    CHECK(txns > 200000);
    CHECK(txns < 300000);
}

TEST_CASE("portfolio invariants hold on every claim") {
    const Portfolio p = simulate_portfolio(desk_config(3));
    REQUIRE(!p.empty());
    for (const ClaimRecord& c : p) {
        CHECK(c.occurrence_time <= c.notification_time);
        CHECK(c.notification_time < c.settlement_time);
        CHECK(c.ultimate_size > 0.0);

        double cum = 0.0;
        double prev = c.notification_time;
        bool any_payment = false;
        for (const TransactionEvent& e : c.events) {
            CHECK(e.time >= c.notification_time);
            CHECK(e.time <= c.settlement_time);
            CHECK(e.time >= prev);  // nondecreasing
            prev = e.time;
            CHECK(e.payment_amount >= 0.0);
            if (e.kind == TxnKind::Payment) any_payment = true;
            cum += e.payment_amount;
            CHECK(e.case_estimate_after >= cum - 1e-9);
        }
        CHECK(any_payment);
        CHECK(cum == c.ultimate_size);  // conservation, exact
        CHECK(c.events.back().case_estimate_after == c.ultimate_size);  // convergence
    }
}

TEST_CASE("degenerate delays collapse to the floors") {
    SimulationConfig cfg = desk_config(5);
    cfg.notification_delay = {0.0, 0.0, 0.0};
    cfg.settlement_delay = {0.0, 0.0, 0.0};
    RngStream rng(derive_seed(cfg.seed, "lifecycle"));
    const ClaimLifecycle life = simulate_claim_lifecycle(cfg, rng, 2.0);
    CHECK(life.notification_time == doctest::Approx(2.0).epsilon(1e-5));
    CHECK(life.notification_time > 2.0);
    CHECK(life.settlement_time == doctest::Approx(life.notification_time + 0.01));
}

TEST_CASE("settlement delay is stochastically increasing in claim size") {
    // Monte Carlo over replications: larger claims settle later on average.
    SimulationConfig cfg;
    RngStream size_rng(101);
    std::vector<double> sizes;
    for (int i = 0; i < 10000; ++i)
        sizes.push_back(size_rng.lognormal(cfg.claim_size.meanlog, cfg.claim_size.sdlog));
    std::sort(sizes.begin(), sizes.end());
    const double size_p10 = sizes[1000];
    const double size_p90 = sizes[9000];

    auto mean_delay = [&](double size) {
        const double z = (std::log(size) - cfg.claim_size.meanlog) / cfg.claim_size.sdlog;
        RngStream rng(777);
        double total = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const double meanlog =
                std::log(cfg.settlement_delay.median_quarters) +
                cfg.settlement_delay.size_elasticity * z;
            total += rng.lognormal(meanlog, cfg.settlement_delay.sigma_log);
        }
        return total / 10000.0;
    };
    CHECK(mean_delay(size_p90) > mean_delay(size_p10));

    // End to end: mean realized settlement delay rises with realized size.
    const Portfolio p = simulate_portfolio(desk_config(11));
    std::vector<std::pair<double, double>> size_delay;
    for (const ClaimRecord& c : p)
        size_delay.emplace_back(c.ultimate_size, c.settlement_time - c.notification_time);
    std::sort(size_delay.begin(), size_delay.end());
    const std::size_t k = size_delay.size() / 4;
    double low = 0.0, high = 0.0;
    for (std::size_t i = 0; i < k; ++i) low += size_delay[i].second;
    for (std::size_t i = size_delay.size() - k; i < size_delay.size(); ++i)
        high += size_delay[i].second;
    CHECK(high / k > low / k);
}

TEST_CASE("seeded lifecycle draw reproduces the golden tuple") {
    SimulationConfig cfg;
    RngStream rng(derive_seed(2024, "lifecycle"));
    const ClaimLifecycle life = simulate_claim_lifecycle(cfg, rng, 3.25);
    CHECK(life.occurrence_time == 3.25);
    CHECK(life.base_size == doctest::Approx(1358.4912142590165).epsilon(1e-14));
    CHECK(life.notification_time == doctest::Approx(3.3211769022782418).epsilon(1e-14));
    CHECK(life.settlement_time == doctest::Approx(5.173670184400466).epsilon(1e-14));
}

TEST_CASE("forcing a single payment puts the full ultimate at settlement") {
    SimulationConfig cfg = desk_config(13);
    cfg.payment_count = {0.0, 0.0};  // 1 + Poisson(0)
    RngStream rng(1);
    const ClaimLifecycle life{1.0, 5000.0, 1.2, 4.0};
    const auto payments = simulate_payments(life, cfg, rng);
    REQUIRE(payments.size() == 1);
    CHECK(payments[0].time == 4.0);
    double total = 0.0;
    for (const auto& e : payments) total += e.payment_amount;
    const double expected = 5000.0 * cfg.inflation.factor(4.0, 1.0, 5000.0);
    CHECK(total == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("partial payments conserve the base size under zero inflation") {
    SimulationConfig cfg = desk_config(17);
    cfg.inflation.band_upper = {std::numeric_limits<double>::infinity()};
    cfg.inflation.calendar_rate = {0.0};
    cfg.inflation.occurrence_rate = {0.0};
    RngStream rng(2);
    const ClaimLifecycle life{1.0, 1000.0, 1.5, 9.5};
    const auto payments = simulate_payments(life, cfg, rng);
    double total = 0.0;
    for (const auto& e : payments) total += e.payment_amount;
    CHECK(total == doctest::Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("calendar inflation makes a later copy of the claim strictly more expensive") {
    SimulationConfig cfg;  // nonzero default inflation
    const ClaimLifecycle early{1.0, 40000.0, 1.5, 6.0};
    const ClaimLifecycle late{9.0, 40000.0, 9.5, 14.0};
    RngStream rng_a(4), rng_b(4);  // paired seeds: identical shares and offsets
    const auto pay_early = simulate_payments(early, cfg, rng_a);
    const auto pay_late = simulate_payments(late, cfg, rng_b);
    REQUIRE(pay_early.size() == pay_late.size());
    for (std::size_t i = 0; i < pay_early.size(); ++i)
        CHECK(pay_late[i].payment_amount > pay_early[i].payment_amount);
}

TEST_CASE("perfect initial estimate with no revisions stays at the ultimate") {
    SimulationConfig cfg = desk_config(19);
    cfg.initial_estimate_error = {0.0, 0.0};
    cfg.revisions.minor_mean_count = 0.0;
    cfg.revisions.major_mean_count = 0.0;
    const Portfolio p = simulate_portfolio(cfg);
    REQUIRE(!p.empty());
    for (const ClaimRecord& c : p)
        for (const TransactionEvent& e : c.events)
            CHECK(e.case_estimate_after == doctest::Approx(c.ultimate_size).epsilon(1e-12));
}

TEST_CASE("major revisions move the estimate more than minor ones") {
    SimulationConfig cfg;
    cfg.n_accident_quarters = 10;
    cfg.expected_claims_per_quarter = 1000.0;  // ~10,000 claims
    cfg.seed = 23;
    const Portfolio p = simulate_portfolio(cfg);
    double major_sum = 0.0, minor_sum = 0.0;
    std::size_t major_n = 0, minor_n = 0;
    for (const ClaimRecord& c : p) {
        double prev = -1.0;
        for (const TransactionEvent& e : c.events) {
            if (e.kind != TxnKind::Payment && prev >= 0.0) {
                // Relative move so large claims do not dominate the means.
                const double move = std::abs(e.case_estimate_after - prev) / c.ultimate_size;
                if (e.kind == TxnKind::MajorRevision) {
                    major_sum += move;
                    ++major_n;
                } else {
                    minor_sum += move;
                    ++minor_n;
                }
            }
            if (e.kind != TxnKind::Payment) prev = e.case_estimate_after;
        }
    }
    REQUIRE(major_n > 100);
    REQUIRE(minor_n > 100);
    CHECK(major_sum / major_n > minor_sum / minor_n);
}

TEST_CASE("some claims sit at their final revision while still open") {
    const Portfolio p = simulate_portfolio(desk_config(29));
    std::size_t agreed_open = 0;
    for (const ClaimRecord& c : p) {
        // In-force estimate at the end of quarter 6 for claims open there.
        if (!(c.notification_time < 6.0 && c.settlement_time > 6.0)) continue;
        double estimate = 0.0;
        for (const TransactionEvent& e : c.events)
            if (e.time <= 6.0) estimate = e.case_estimate_after;
        if (estimate == c.ultimate_size) ++agreed_open;
    }
    CHECK(agreed_open > 0);
}

TEST_CASE("write_transactions: empty portfolio gives a header-only file") {
    const auto path = temp_file("empty.csv");
    write_transactions({}, path);
    CHECK(slurp(path) == std::string(transaction_csv_header()) + "\n");
    fs::remove(path);
}

TEST_CASE("write_transactions: one row per transaction") {
    SimulationConfig cfg = desk_config(31);
    cfg.expected_claims_per_quarter = 2.0;
    const Portfolio p = simulate_portfolio(cfg);
    REQUIRE(!p.empty());
    std::size_t txns = 0;
    for (const ClaimRecord& c : p) txns += c.events.size();
    const auto path = temp_file("rows.csv");
    write_transactions(p, path);
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == txns + 1);
    fs::remove(path);
}

TEST_CASE("transactions round-trip losslessly through the loader") {
    const Portfolio p = simulate_portfolio(desk_config(37));
    const auto path = temp_file("roundtrip.csv");
    write_transactions(p, path);
    const Portfolio q = load_transactions(path);
    REQUIRE(q.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(q[i].claim_id == p[i].claim_id);
        CHECK(q[i].occurrence_time == p[i].occurrence_time);
        CHECK(q[i].notification_time == p[i].notification_time);
        CHECK(q[i].settlement_time == p[i].settlement_time);
        CHECK(q[i].ultimate_size == p[i].ultimate_size);
        CHECK(q[i].severity == p[i].severity);
        CHECK(q[i].age_band == p[i].age_band);
        CHECK(q[i].legal_rep == p[i].legal_rep);
        REQUIRE(q[i].events.size() == p[i].events.size());
        for (std::size_t k = 0; k < p[i].events.size(); ++k) {
            CHECK(q[i].events[k].time == p[i].events[k].time);
            CHECK(q[i].events[k].kind == p[i].events[k].kind);
            CHECK(q[i].events[k].payment_amount == p[i].events[k].payment_amount);
            CHECK(q[i].events[k].case_estimate_after == p[i].events[k].case_estimate_after);
        }
    }
    fs::remove(path);
}

TEST_CASE("invalid configs are rejected with the offending field named") {
    SimulationConfig cfg;
    cfg.n_accident_quarters = 0;
    CHECK_THROWS_WITH_AS(simulate_portfolio(cfg), doctest::Contains("n_accident_quarters"),
                         config_error);
    cfg = SimulationConfig{};
    cfg.claim_size.sdlog = 0.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("claim_size"), config_error);
    cfg = SimulationConfig{};
    cfg.inflation.band_upper = {100.0};  // does not partition the positive reals
    CHECK_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("simulation config JSON rejects unknown keys and round-trips") {
    CHECK_THROWS_WITH_AS(simulation_config_from_json_text(R"({"bogus": 1})"),
                         doctest::Contains("bogus"), config_error);
    SimulationConfig cfg = desk_config(41);
    const SimulationConfig parsed =
        simulation_config_from_json_text(simulation_config_to_json_text(cfg));
    CHECK(parsed.n_accident_quarters == cfg.n_accident_quarters);
    CHECK(parsed.expected_claims_per_quarter == cfg.expected_claims_per_quarter);
    CHECK(parsed.seed == cfg.seed);
    CHECK(parsed.settlement_delay.sigma_log == cfg.settlement_delay.sigma_log);
    CHECK(parsed.inflation.band_upper == cfg.inflation.band_upper);
}
