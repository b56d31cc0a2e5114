#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>

#include "dosecomb/trial_service.hpp"

using namespace dosecomb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = fs::temp_directory_path() / ("dosecomb-" + tag + "-" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json fast_config() {
    return {{"mcmc", {{"chain_length", 800}, {"burn_in", 300}}}, {"seed", 3}};
}

json body(const std::string& a, const std::string& b) { return {{"outcomes", {a, b}}}; }

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("create_trial") {
    TempDir dir("create");
    TrialService svc(dir.path);
    const auto a = svc.create_trial(json::object());
    CHECK(a.assignment.dose(0) == StandardizedDose{0.05, 0.05});
    CHECK(a.assignment.dose(1) == StandardizedDose{0.05, 0.05});
    const auto b = svc.create_trial(json::object());
    CHECK(a.trial_id != b.trial_id);
    CHECK(fs::exists(dir.path / (a.trial_id + ".ndjson")));
    CHECK(fs::exists(dir.path / (b.trial_id + ".ndjson")));

    try {
        svc.create_trial(json{{"theta", 1.5}});
        FAIL("expected a ServiceError");
    } catch (const ServiceError& e) {
        CHECK(e.status() == 400);
        CHECK(std::string(e.what()).find("theta") != std::string::npos);
    }
}

TEST_CASE("record_outcomes flow, conflicts and not-found") {
    TempDir dir("record");
    TrialService svc(dir.path);
    const auto id = svc.create_trial(fast_config()).trial_id;
    const auto r = svc.record_outcomes(id, 1, body("no_dlt", "no_dlt"));
    CHECK(r.at("status") == "assigned");
    CHECK(r.at("assignment").at("cohort") == 2);

    const auto before = svc.get_events(id).at("events").size();
    try {
        svc.record_outcomes(id, 1, body("no_dlt", "no_dlt"));
        FAIL("expected a conflict");
    } catch (const ServiceError& e) {
        CHECK(e.status() == 409);
    }
    CHECK(svc.get_events(id).at("events").size() == before);

    try {
        svc.record_outcomes("trial-9999", 1, body("no_dlt", "no_dlt"));
        FAIL("expected not-found");
    } catch (const ServiceError& e) {
        CHECK(e.status() == 404);
    }
    try {
        svc.record_outcomes(id, 2, json{{"outcomes", {"no_dlt"}}});
        FAIL("expected a bad request");
    } catch (const ServiceError& e) {
        CHECK(e.status() == 400);
    }
}

TEST_CASE("event ids are dense from one") {
    TempDir dir("events");
    TrialService svc(dir.path);
    const auto id = svc.create_trial(fast_config()).trial_id;
    svc.record_outcomes(id, 1, body("no_dlt", "dlt_drug1"));
    const auto events = svc.get_events(id).at("events");
    for (std::size_t k = 0; k < events.size(); ++k) CHECK(events[k].at("event_id") == k + 1);
    CHECK(events[0].at("kind") == "trial_created");
    CHECK(events[1].at("kind") == "cohort_assigned");
    CHECK(events[2].at("kind") == "outcomes_recorded");
    CHECK(events[3].at("kind") == "posterior_refit");
    CHECK(events[4].at("kind") == "cohort_assigned");
    CHECK(lines_of(dir.path / (id + ".ndjson")).size() == events.size());
}

TEST_CASE("high-toxicity outcomes stop the trial") {
    TempDir dir("stop");
    TrialService svc(dir.path, point_mass_fitter({0.2, 0.2, 0.0, 0.0}));
    const auto id = svc.create_trial(json::object()).trial_id;
    const auto r = svc.record_outcomes(id, 1, body("dlt_unattributed", "dlt_unattributed"));
    CHECK(r.at("status") == "stopped");
    CHECK(r.at("exceedance") == 1.0);
    CHECK(!r.at("reason").get<std::string>().empty());
    const auto mtd = svc.get_mtd(id);
    CHECK(mtd.at("final") == true);
    CHECK(mtd.at("stopped") == true);
    try {
        svc.record_outcomes(id, 2, body("no_dlt", "no_dlt"));
        FAIL("expected a conflict");
    } catch (const ServiceError& e) {
        CHECK(e.status() == 409);
    }
}

TEST_CASE("get_state views") {
    TempDir dir("state");
    TrialService svc(dir.path, point_mass_fitter({1.0, 1.0, 0.0, 0.0}));
    const auto id = svc.create_trial(json{{"n_max", 4}}).trial_id;
    auto s = svc.get_state(id);
    CHECK(s.at("schema_version") == kSchemaVersion);
    REQUIRE(s.at("patients").size() == 2);
    CHECK(s.at("patients")[0].at("awaiting_outcome") == true);
    svc.record_outcomes(id, 1, body("no_dlt", "no_dlt"));
    svc.record_outcomes(id, 2, body("no_dlt", "dlt_drug2"));
    s = svc.get_state(id);
    CHECK(s.at("status") == "completed");
    CHECK(s.at("mtd_preview").at("final") == true);
    CHECK(!s.at("mtd_preview").at("curve").is_null());
}

TEST_CASE("restart reproduces the snapshot") {
    TempDir dir("restart");
    json before;
    std::string id;
    {
        TrialService svc(dir.path);
        id = svc.create_trial(fast_config()).trial_id;
        svc.record_outcomes(id, 1, body("no_dlt", "no_dlt"));
        svc.record_outcomes(id, 2, body("dlt_both", "no_dlt"));
        before = svc.get_state(id);
    }
    TrialService again(dir.path);
    CHECK(again.get_state(id) == before);
    const auto next = again.create_trial(json::object()).trial_id;
    CHECK(next != id);
}

TEST_CASE("a torn final line is dropped on load") {
    TempDir dir("torn");
    std::string id;
    json pending;
    {
        TrialService svc(dir.path);
        id = svc.create_trial(fast_config()).trial_id;
        svc.record_outcomes(id, 1, body("no_dlt", "no_dlt"));
        pending = svc.get_state(id).at("pending");
    }
    {
        std::ofstream out(dir.path / (id + ".ndjson"), std::ios::app);
        out << "{\"kind\": \"outcomes_rec";
    }
    TrialService again(dir.path);
    CHECK(again.get_state(id).at("pending") == pending);
    for (const auto& l : lines_of(dir.path / (id + ".ndjson"))) CHECK(json::accept(l));
}

TEST_CASE("a tampered log is rejected on replay") {
    TempDir dir("tamper");
    std::vector<json> events;
    {
        TrialService svc(dir.path, point_mass_fitter({1.0, 1.0, 0.0, 0.0}));
        const auto id = svc.create_trial(json::object()).trial_id;
        svc.record_outcomes(id, 1, body("no_dlt", "no_dlt"));
        const auto log = svc.get_events(id);
        for (const auto& e : log.at("events")) events.push_back(e);
    }
    events.back()["payload"]["assignment"]["patients"][0]["dose"]["x"] = 0.3;
    try {
        replay_events(events, point_mass_fitter({1.0, 1.0, 0.0, 0.0}));
        FAIL("expected a replay mismatch");
    } catch (const ServiceError& e) {
        CHECK(e.status() == 500);
    }
}

TEST_CASE("failed refits leave no partial events") {
    TempDir dir("atomic");
    const PosteriorFitter broken = [](std::span<const PatientRecord>, const DesignConfig&, int) -> PosteriorSamples {
        throw std::runtime_error("refit failed");
    };
    TrialService svc(dir.path, broken);
    const auto id = svc.create_trial(json::object()).trial_id;
    CHECK_THROWS(svc.record_outcomes(id, 1, body("no_dlt", "no_dlt")));
    CHECK(svc.get_events(id).at("events").size() == 2);
    CHECK(svc.state(id).cohort == 1);
}

TEST_CASE("concurrent trials are independent") {
    TempDir dir("concurrent");
    TrialService svc(dir.path, point_mass_fitter({1.0, 1.0, 0.0, 0.0}));
    std::vector<std::string> ids(4);
    for (auto& id : ids) id = svc.create_trial(json{{"n_max", 10}}).trial_id;
    std::vector<std::jthread> workers;
    for (const auto& id : ids)
        workers.emplace_back([&svc, id] {
            for (int c = 1; c <= 5; ++c) svc.record_outcomes(id, c, body("no_dlt", "no_dlt"));
        });
    workers.clear();
    for (const auto& id : ids) CHECK(svc.state(id).status == TrialStatus::Completed);
}

TEST_CASE("HTTP endpoints") {
    TempDir dir("http");
    TrialService svc(dir.path, point_mass_fitter({1.0, 1.0, 0.0, 0.0}));
    httplib::Server server;
    mount_routes(server, svc);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client cli("127.0.0.1", port);
    auto created = cli.Post("/trials", R"({"n_max": 4})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto cj = json::parse(created->body);
    const auto id = cj.at("trial_id").get<std::string>();
    CHECK(cj.at("assignment").at("cohort") == 1);

    auto bad = cli.Post("/trials", R"({"theta": 1.5})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body).at("error").get<std::string>().find("theta") != std::string::npos);

    auto garbage = cli.Post("/trials", "{not json", "application/json");
    REQUIRE(garbage);
    CHECK(garbage->status == 400);

    const std::string outcomes = R"({"outcomes": [{"T": 0}, {"T": 1, "A": 1, "delta1": 1, "delta2": 0}]})";
    auto rec = cli.Post("/trials/" + id + "/cohorts/1/outcomes", outcomes, "application/json");
    REQUIRE(rec);
    CHECK(rec->status == 200);
    CHECK(json::parse(rec->body).at("status") == "assigned");

    auto dup = cli.Post("/trials/" + id + "/cohorts/1/outcomes", outcomes, "application/json");
    REQUIRE(dup);
    CHECK(dup->status == 409);

    auto missing = cli.Get("/trials/trial-9999");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    auto st = cli.Get("/trials/" + id);
    REQUIRE(st);
    CHECK(st->status == 200);
    CHECK(json::parse(st->body).at("cohort") == 2);

    auto mtd = cli.Get("/trials/" + id + "/mtd");
    REQUIRE(mtd);
    CHECK(json::parse(mtd->body).at("final") == false);

    auto ev = cli.Get("/trials/" + id + "/events");
    REQUIRE(ev);
    CHECK(json::parse(ev->body).at("events").size() == 5);

    server.stop();
    t.join();
}
