#include <doctest.h>

#include <sstream>

#include "dosecomb/json_io.hpp"

using namespace dosecomb;

TEST_CASE("outcome encodings") {
    const auto j = outcome_to_json(Outcome::DltDrug2);
    CHECK(j.at("T") == 1);
    CHECK(j.at("A") == 1);
    CHECK(j.at("delta1") == 0);
    CHECK(j.at("delta2") == 1);
    CHECK(outcome_from_json(j) == Outcome::DltDrug2);
    CHECK(outcome_from_json(json("dlt_both")) == Outcome::DltBoth);
    CHECK(outcome_from_json(json{{"T", 0}}) == Outcome::NoDlt);
    CHECK(outcome_from_json(json{{"outcome", "dlt_drug1"}}) == Outcome::DltDrug1);
    CHECK(outcome_from_json(json{{"T", 1}, {"A", 0}}) == Outcome::DltUnattributed);
    CHECK_THROWS_AS(outcome_from_json(json{{"T", 1}, {"A", 1}, {"delta1", 0}, {"delta2", 0}}),
                    DomainError);
    CHECK_THROWS_AS(outcome_from_json(json{{"T", 1}}), DomainError);
    CHECK_THROWS_AS(outcome_from_json(json(3)), DomainError);
}

TEST_CASE("config round-trips exactly") {
    DesignConfig c;
    c.theta = 0.25;
    c.n_max = 30;
    c.cap_fraction = 0.15;
    c.grid = DoseGrid{{0.05, 0.1, 0.3}, {0.05, 0.2}};
    c.mcmc.chain_length = 5000;
    c.mcmc.proposal_scales = {0.5, 0.6, 1.5, 0.9};
    c.seed = 12345678901234ULL;
    const auto back = config_from_json(json::parse(to_json(c).dump()));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.grid->x == c.grid->x);
    CHECK(back.seed == c.seed);
}

TEST_CASE("config defaults and validation") {
    const auto c = config_from_json(json::object());
    CHECK(c.theta == 0.3);
    CHECK(c.n_max == 40);
    CHECK(c.xi2 == 0.8);
    try {
        config_from_json(json{{"theta", 1.5}});
        FAIL("expected a DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("theta") != std::string::npos);
    }
    CHECK_THROWS_AS(config_from_json(json{{"theta", "high"}}), DomainError);
    CHECK_THROWS_AS(config_from_json(json::array()), DomainError);
}

TEST_CASE("assignment round-trips") {
    auto [state, a] = start_trial(DesignConfig{});
    const auto back = assignment_from_json(to_json(a));
    CHECK(to_json(back) == to_json(a));
}

TEST_CASE("scenario schema") {
    const auto s = scenario_from_json(json::parse(R"({
        "label": "s6", "eta_true": 0.1,
        "truth": {"type": "prob_table", "prob": [[0.45, 0.57], [0.73, 0.83]]}})"));
    const auto& t = std::get<ProbTable>(s.truth);
    CHECK(t.levels.x == std::vector<double>{0.05, 0.3});
    CHECK(t.prob[1][0] == 0.73);
    CHECK(s.eta_true == 0.1);
    const auto again = scenario_from_json(to_json(s));
    CHECK(to_json(again) == to_json(s));

    const auto w = scenario_from_json(
        json::parse(R"({"truth": {"type": "working_model", "alpha": 1.1, "beta": 1.1, "gamma": 1}})"));
    CHECK(std::get<WorkingModel>(w.truth).alpha == 1.1);

    CHECK_THROWS_AS(scenario_from_json(json::parse(R"({"truth": {"type": "clayton"}})")), DomainError);
    CHECK_THROWS_AS(scenario_from_json(json::parse(R"({"eta_true": 0})")), DomainError);
    CHECK_THROWS_AS(
        scenario_from_json(json::parse(R"({"truth": {"type": "prob_table", "prob": [[1.5, 0], [0, 0]]}})")),
        DomainError);
}

TEST_CASE("dump_sig6 is stable") {
    const json j = {{"b", 0.023296999999999998}, {"a", json::array({1, 2.5, 1e-7, 3.0})},
                    {"s", "x\"y"}, {"n", nullptr}, {"u", 18446744073709551615ULL}};
    CHECK(dump_sig6(j, -1) ==
          R"({"a":[1,2.5,1e-07,3.0],"b":0.023297,"n":null,"s":"x\"y","u":18446744073709551615})");
    CHECK(json::parse(dump_sig6(j)) == json::parse(dump_sig6(j, -1)));
    CHECK(dump_sig6(json::object()) == "{}");
}

TEST_CASE("csv layouts") {
    OperatingCharacteristics oc;
    oc.safety = {30.64, 9.4, 0.9};
    oc.discrete_pct_selection = std::array<double, 4>{91.4, 87.3, 83.7, 83.7};
    std::ostringstream s, d;
    write_safety_csv(s, "s2", 0.0, oc);
    CHECK(s.str() ==
          "scenario,eta,avg_pct_toxicities,pct_trials_rate_gt_theta_plus_0.05,"
          "pct_trials_rate_gt_theta_plus_0.10,pct_stopped\ns2,0,30.64,9.4,0.9,0\n");
    write_selection_csv(d, "s1", 0.1, oc);
    CHECK(d.str().find("s1,0.1,91.4,87.3,83.7,83.7") != std::string::npos);
}
