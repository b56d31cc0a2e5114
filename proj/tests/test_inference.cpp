#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "dosecomb/inference.hpp"
#include "oracle.hpp"

using namespace dosecomb;

namespace {

PatientRecord rec(double x, double y, Outcome o) { return {{x, y}, o}; }

double mean_of(const PosteriorSamples& s, double ModelParams::*field) {
    double total = 0.0;
    for (const auto& d : s.draws) total += d.*field;
    return total / static_cast<double>(s.draws.size());
}

}  // namespace

TEST_CASE("from_indicators covers the five leaves") {
    const StandardizedDose d{0.1, 0.2};
    CHECK(PatientRecord::from_indicators(d, 0, 0, 0, 0).outcome == Outcome::NoDlt);
    CHECK(PatientRecord::from_indicators(d, 0, 1, 1, 1).outcome == Outcome::NoDlt);
    CHECK(PatientRecord::from_indicators(d, 1, 0, 1, 0).outcome == Outcome::DltUnattributed);
    CHECK(PatientRecord::from_indicators(d, 1, 1, 1, 0).outcome == Outcome::DltDrug1);
    CHECK(PatientRecord::from_indicators(d, 1, 1, 0, 1).outcome == Outcome::DltDrug2);
    CHECK(PatientRecord::from_indicators(d, 1, 1, 1, 1).outcome == Outcome::DltBoth);
    CHECK_THROWS_AS(PatientRecord::from_indicators(d, 1, 1, 0, 0), DomainError);
    CHECK_THROWS_AS(PatientRecord::from_indicators(d, 2, 0, 0, 0), DomainError);
    CHECK_THROWS_AS(PatientRecord::from_indicators(d, 1, 3, 0, 0), DomainError);
}

TEST_CASE("outcome tags round-trip") {
    for (auto o : {Outcome::NoDlt, Outcome::DltUnattributed, Outcome::DltDrug1, Outcome::DltDrug2,
                   Outcome::DltBoth})
        CHECK(outcome_from_string(to_string(o)) == o);
    CHECK_THROWS_AS(outcome_from_string("maybe"), DomainError);
}

TEST_CASE("log_likelihood matches the per-patient oracle") {
    const std::vector<PatientRecord> data{
        rec(0.05, 0.05, Outcome::NoDlt),           rec(0.1, 0.05, Outcome::DltUnattributed),
        rec(0.1, 0.15, Outcome::DltDrug1),         rec(0.2, 0.15, Outcome::DltDrug2),
        rec(0.25, 0.3, Outcome::DltBoth)};
    const ModelParams p{0.9, 1.4, 2.5, 0.35};
    const oracle::Params q{0.9, 1.4, 2.5, 0.35};
    double expected = std::log(oracle::contribution(0.05, 0.05, 0, 0, 0, 0, q)) +
                      std::log(oracle::contribution(0.1, 0.05, 1, 0, 0, 0, q)) +
                      std::log(oracle::contribution(0.1, 0.15, 1, 1, 1, 0, q)) +
                      std::log(oracle::contribution(0.2, 0.15, 1, 1, 0, 1, q)) +
                      std::log(oracle::contribution(0.25, 0.3, 1, 1, 1, 1, q));
    CHECK(log_likelihood(data, p) == doctest::Approx(expected).epsilon(1e-12));

    SUBCASE("additive over concatenation") {
        const std::span<const PatientRecord> all(data);
        CHECK(log_likelihood(all, p) ==
              doctest::Approx(log_likelihood(all.first(2), p) + log_likelihood(all.subspan(2), p))
                  .epsilon(1e-13));
    }
    SUBCASE("eta = 0 with an attributed DLT is impossible") {
        CHECK(std::isinf(log_likelihood(data, {0.9, 1.4, 2.5, 0.0})));
    }
    SUBCASE("empty data") { CHECK(log_likelihood({}, p) == 0.0); }
}

TEST_CASE("log_prior") {
    const PriorSpec prior;
    const double g = boost::math::gamma_p_derivative(0.1, 0.1 * 2.0) * 0.1;  // Gamma(0.1,0.1) pdf at 2
    CHECK(log_prior({1.0, 1.0, 2.0, 0.5}, prior) ==
          doctest::Approx(2 * std::log(1 / 1.8) + std::log(g)).epsilon(1e-12));
    CHECK(std::isinf(log_prior({0.1, 1.0, 2.0, 0.5}, prior)));
    CHECK(std::isinf(log_prior({1.0, 1.0, 0.0, 0.5}, prior)));
    CHECK(std::isinf(log_prior({1.0, 1.0, 1.0, 1.5}, prior)));
}

TEST_CASE("posterior summaries on fixed draws") {
    PosteriorSamples s;
    SUBCASE("point mass above and below the threshold") {
        s.draws = {{1.0, 1.0, 0.0, 0.0}};
        // pi(0.5, 0) = 0.5 and pi(0.2, 0) = 0.2 when alpha = beta = 1, gamma = 0.
        CHECK(posterior_prob_dlt_exceeds(s, {0.5, 0.0}, 0.35) == 1.0);
        CHECK(posterior_prob_dlt_exceeds(s, {0.2, 0.0}, 0.35) == 0.0);
    }
    SUBCASE("median and mean") {
        s.draws = {{0.5, 1.0, 1.0, 0.1}, {1.5, 2.0, 3.0, 0.3}, {1.0, 0.4, 2.0, 0.2},
                   {2.0, 0.6, 10.0, 0.9}};
        const auto med = posterior_median(s);
        CHECK(med.alpha == doctest::Approx(1.25));
        CHECK(med.beta == doctest::Approx(0.8));
        CHECK(med.gamma == doctest::Approx(2.5));
        CHECK(med.eta == doctest::Approx(0.25));
        CHECK(posterior_mean(s).gamma == doctest::Approx(4.0));
    }
    SUBCASE("empty draws") { CHECK_THROWS_AS(posterior_median(s), UsageError); }
}

TEST_CASE("threshold mix from four draws") {
    // Draws chosen so pi at (0.3, 0.3) equals {0.30, 0.36, 0.40, 0.20} with gamma = 0:
    // pi = 1 - (1 - u)^2 with u = 0.3^alpha.
    PosteriorSamples s;
    for (double p : {0.30, 0.36, 0.40, 0.20}) {
        const double u = 1.0 - std::sqrt(1.0 - p);
        const double a = std::log(u) / std::log(0.3);
        s.draws.push_back({a, a, 0.0, 0.0});
    }
    CHECK(posterior_prob_dlt_exceeds(s, {0.3, 0.3}, 0.35) == doctest::Approx(0.5));
}

TEST_CASE("sampler basics") {
    const std::vector<PatientRecord> data{rec(0.05, 0.05, Outcome::NoDlt),
                                          rec(0.05, 0.05, Outcome::DltDrug1)};
    McmcConfig cfg;
    cfg.chain_length = 3000;
    cfg.burn_in = 1000;
    cfg.thin = 4;
    cfg.seed = 5;
    const auto a = sample_posterior(data, {}, cfg);
    CHECK(a.draws.size() == 500);
    CHECK(a.diagnostics.chain_length == 3000);
    CHECK(a.diagnostics.burn_in == 1000);
    CHECK(a.diagnostics.seed == 5);
    const auto b = sample_posterior(data, {}, cfg);
    REQUIRE(a.draws.size() == b.draws.size());
    for (std::size_t i = 0; i < a.draws.size(); ++i) CHECK(a.draws[i] == b.draws[i]);
    for (const auto& d : a.draws) {
        CHECK(d.alpha >= 0.2);
        CHECK(d.alpha <= 2.0);
        CHECK(d.beta >= 0.2);
        CHECK(d.beta <= 2.0);
        CHECK(d.gamma > 0.0);
        CHECK(d.eta >= 0.0);
        CHECK(d.eta <= 1.0);
    }
    for (double acc : a.diagnostics.acceptance) {
        CHECK(acc > 0.05);
        CHECK(acc < 0.9);
    }
    CHECK(a.diagnostics.warnings.empty());
}

TEST_CASE("invalid sampler settings") {
    McmcConfig cfg;
    cfg.burn_in = cfg.chain_length;
    CHECK_THROWS_AS(sample_posterior({}, {}, cfg), UsageError);
    cfg = {};
    cfg.thin = 0;
    CHECK_THROWS_AS(sample_posterior({}, {}, cfg), UsageError);
    PriorSpec prior;
    prior.gamma.shape = 0.0;
    CHECK_THROWS_AS(sample_posterior({}, prior, {}), DomainError);
}

TEST_CASE("posterior means from disjoint seeds agree within Monte Carlo error") {
    const std::vector<PatientRecord> data{
        rec(0.05, 0.05, Outcome::NoDlt),  rec(0.05, 0.05, Outcome::NoDlt),
        rec(0.1, 0.05, Outcome::NoDlt),   rec(0.05, 0.1, Outcome::DltDrug2),
        rec(0.15, 0.05, Outcome::NoDlt),  rec(0.05, 0.1, Outcome::DltUnattributed)};
    McmcConfig cfg;
    cfg.chain_length = 60000;
    cfg.burn_in = 2000;
    cfg.seed = 101;
    const auto a = sample_posterior(data, {}, cfg);
    cfg.seed = 202;
    const auto b = sample_posterior(data, {}, cfg);
    auto check = [&](double ModelParams::*f, std::size_t k) {
        std::vector<double> ta, tb;
        for (const auto& d : a.draws) ta.push_back(d.*f);
        for (const auto& d : b.draws) tb.push_back(d.*f);
        auto var = [](const std::vector<double>& t) {
            double m = 0, v = 0;
            for (double x : t) m += x;
            m /= t.size();
            for (double x : t) v += (x - m) * (x - m);
            return v / (t.size() - 1);
        };
        const double se = std::sqrt(var(ta) / a.diagnostics.ess[k] + var(tb) / b.diagnostics.ess[k]);
        CHECK(std::abs(mean_of(a, f) - mean_of(b, f)) <= 3.0 * se);
    };
    check(&ModelParams::alpha, kAlpha);
    check(&ModelParams::beta, kBeta);
    check(&ModelParams::gamma, kGamma);
    check(&ModelParams::eta, kEta);
}

TEST_CASE("sampler matches the quadrature oracle on a small dataset") {
    const std::vector<PatientRecord> data{
        rec(0.05, 0.05, Outcome::NoDlt), rec(0.05, 0.05, Outcome::NoDlt),
        rec(0.1, 0.05, Outcome::DltUnattributed), rec(0.05, 0.12, Outcome::NoDlt)};
    std::vector<oracle::Obs> obs{{0.05, 0.05, 0, 0, 0, 0}, {0.05, 0.05, 0, 0, 0, 0},
                                 {0.1, 0.05, 1, 0, 0, 0}, {0.05, 0.12, 0, 0, 0, 0}};
    const auto truth = oracle::posterior_means(obs, 0.2, 2.0, 0.2, 2.0, 0.1, 0.1, 40, 300, 100);
    McmcConfig cfg;
    cfg.chain_length = 200000;
    cfg.burn_in = 2000;
    cfg.seed = 77;
    const auto s = sample_posterior(data, {}, cfg);
    CHECK(mean_of(s, &ModelParams::alpha) == doctest::Approx(truth.mean[0]).epsilon(0.05));
    CHECK(mean_of(s, &ModelParams::beta) == doctest::Approx(truth.mean[1]).epsilon(0.05));
    CHECK(mean_of(s, &ModelParams::eta) == doctest::Approx(truth.mean[3]).epsilon(0.05));
}

TEST_CASE("batch_means_ess") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> iid(10000);
    for (double& x : iid) x = n(rng);
    CHECK(batch_means_ess(iid) > 5000);
    std::vector<double> sticky(10000);
    double cur = 0;
    for (std::size_t i = 0; i < sticky.size(); ++i) {
        if (i % 100 == 0) cur = n(rng);
        sticky[i] = cur;
    }
    CHECK(batch_means_ess(sticky) < 1000);
}
