#include "dosecomb/trial_service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <httplib.h>

namespace dosecomb {

namespace fs = std::filesystem;

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json event(const char* kind, json payload) {
    return {{"kind", kind}, {"payload", std::move(payload)}};
}

json refit_payload(const TrialState& s, int cohort) {
    return {{"cohort", cohort},
            {"medians", s.medians ? to_json(*s.medians) : json(nullptr)},
            {"exceedance", s.exceedance ? json(*s.exceedance) : json(nullptr)},
            {"diagnostics", s.posterior ? to_json(s.posterior->diagnostics) : json(nullptr)}};
}

json outcomes_payload(const TrialState& s, int cohort) {
    json recs = json::array();
    const std::size_t first = static_cast<std::size_t>(2 * cohort - 2);
    for (std::size_t k = first; k < first + 2; ++k) recs.push_back(to_json(s.history[k]));
    return {{"cohort", cohort}, {"outcomes", recs}};
}

json patients_view(const TrialState& s) {
    json out = json::array();
    for (std::size_t k = 0; k < s.history.size(); ++k) {
        json r = to_json(s.history[k]);
        r["patient"] = k + 1;
        r["cohort"] = k / 2 + 1;
        r["awaiting_outcome"] = false;
        out.push_back(r);
    }
    if (const auto* p = s.pending()) {
        for (std::size_t k = 0; k < 2; ++k) {
            out.push_back({{"patient", 2 * p->cohort - 1 + static_cast<int>(k)},
                           {"cohort", p->cohort},
                           {"dose", to_json(p->dose(k))},
                           {"outcome", nullptr},
                           {"awaiting_outcome", true}});
        }
    }
    return out;
}

json mtd_view(const TrialState& s) {
    if (s.status != TrialStatus::Active) {
        json j = to_json(final_mtd(s));
        j["final"] = true;
        return j;
    }
    json j = {{"final", false}, {"stopped", false}, {"medians", nullptr}, {"curve", nullptr},
              {"recommended", json::array()}};
    if (s.medians) {
        const auto& cfg = s.config;
        j["medians"] = to_json(*s.medians);
        j["curve"] = to_json(mtd_curve(*s.medians, cfg.theta, cfg.curve_grid_size, cfg.bounds));
        if (cfg.grid) {
            json cells = json::array();
            for (const auto& c : mtd_set(*cfg.grid, *s.medians, cfg.theta, cfg.delta_select))
                cells.push_back(json::array({c.i, c.j}));
            j["recommended"] = cells;
        }
    }
    return j;
}

json with_version(json j) {
    j["schema_version"] = kSchemaVersion;
    return j;
}

}  // namespace

TrialState replay_events(const std::vector<json>& events, const PosteriorFitter& fitter) {
    if (events.empty() || events.front().value("kind", "") != event_kind::kCreated)
        throw ServiceError(500, "event log must begin with trial_created");
    TrialState state = start_trial(config_from_json(events.front().at("payload").at("config"))).first;
    std::size_t verified_assignments = 0;
    for (std::size_t e = 1; e < events.size(); ++e) {
        const auto& ev = events[e];
        const auto kind = ev.at("kind").get<std::string>();
        const auto& payload = ev.at("payload");
        if (kind == event_kind::kOutcomes) {
            const int cohort = payload.at("cohort").get<int>();
            std::array<Outcome, 2> outcomes{};
            for (std::size_t k = 0; k < 2; ++k)
                outcomes[k] = outcome_from_json(payload.at("outcomes").at(k));
            state = next_cohort(state, cohort, outcomes, fitter).state;
        } else if (kind == event_kind::kAssigned) {
            if (verified_assignments >= state.assignments.size() ||
                to_json(state.assignments[verified_assignments]) != payload.at("assignment"))
                throw ServiceError(500, "replayed assignment disagrees with event " +
                                            std::to_string(ev.value("event_id", 0)));
            ++verified_assignments;
        }
    }
    return state;
}

TrialService::TrialService(fs::path data_dir, PosteriorFitter fitter)
    : dir_(std::move(data_dir)), fitter_(std::move(fitter)) {
    fs::create_directories(dir_);
    load_existing();
}

void TrialService::load_existing() {
    for (const auto& de : fs::directory_iterator(dir_)) {
        if (de.path().extension() != ".ndjson") continue;
        std::ifstream in(de.path());
        std::vector<json> events;
        std::string line;
        bool truncated = false;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                events.push_back(json::parse(line));
            } catch (const json::exception&) {
                truncated = true;  // torn final write
                break;
            }
        }
        if (events.empty()) continue;
        auto entry = std::make_shared<Entry>();
        entry->log = de.path();
        entry->state = replay_events(events, fitter_);
        entry->events = std::move(events);
        if (truncated) {
            std::ofstream out(entry->log, std::ios::trunc);
            for (const auto& ev : entry->events) out << ev.dump() << '\n';
        }
        const auto id = de.path().stem().string();
        trials_[id] = entry;
        ++counter_;
    }
}

std::string TrialService::next_id() {
    for (;;) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "trial-%04ld", ++counter_);
        if (!trials_.count(buf) && !fs::exists(dir_ / (std::string(buf) + ".ndjson"))) return buf;
    }
}

void TrialService::append(Entry& entry, std::vector<json> new_events) {
    std::string buffer;
    std::size_t id = entry.events.size();
    const auto ts = utc_timestamp();
    for (auto& ev : new_events) {
        ev["event_id"] = ++id;
        ev["timestamp"] = ts;
        ev["schema_version"] = kSchemaVersion;
        buffer += ev.dump();
        buffer += '\n';
    }
    std::ofstream out(entry.log, std::ios::app | std::ios::binary);
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    out.flush();
    if (!out) throw ServiceError(500, "failed to append to " + entry.log.string());
    for (auto& ev : new_events) entry.events.push_back(std::move(ev));
}

std::shared_ptr<TrialService::Entry> TrialService::find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    auto it = trials_.find(id);
    if (it == trials_.end()) throw ServiceError(404, "unknown trial '" + id + "'");
    return it->second;
}

TrialService::Created TrialService::create_trial(const DesignConfig& config) {
    try {
        validate_config(config);
    } catch (const DomainError& e) {
        throw ServiceError(400, e.what());
    }
    auto [state, assignment] = start_trial(config);
    auto entry = std::make_shared<Entry>();
    std::string id;
    {
        std::unique_lock lock(map_mutex_);
        id = next_id();
        entry->log = dir_ / (id + ".ndjson");
        entry->state = std::move(state);
        std::lock_guard entry_lock(entry->mutex);
        append(*entry, {event(event_kind::kCreated, {{"trial_id", id}, {"config", to_json(config)}}),
                        event(event_kind::kAssigned, {{"assignment", to_json(assignment)}})});
        trials_[id] = entry;
    }
    return {id, assignment};
}

TrialService::Created TrialService::create_trial(const json& config) {
    DesignConfig c;
    try {
        c = config_from_json(config);
    } catch (const DomainError& e) {
        throw ServiceError(400, e.what());
    }
    return create_trial(c);
}

json TrialService::record_outcomes(const std::string& trial_id, int cohort_index,
                                   const std::array<Outcome, 2>& outcomes) {
    auto entry = find(trial_id);
    std::lock_guard lock(entry->mutex);
    const TrialState& cur = entry->state;
    if (cur.status != TrialStatus::Active)
        throw ServiceError(409, "trial is " + to_string(cur.status) + "; no cohort is pending");
    if (cohort_index != cur.cohort)
        throw ServiceError(409, "cohort " + std::to_string(cohort_index) +
                                    " is not pending (pending cohort is " +
                                    std::to_string(cur.cohort) + ")");

    CohortStep step = next_cohort(cur, cohort_index, outcomes, fitter_);
    const TrialState& s = step.state;
    std::vector<json> events{event(event_kind::kOutcomes, outcomes_payload(s, cohort_index)),
                             event(event_kind::kRefit, refit_payload(s, cohort_index))};
    json response = {{"trial_id", trial_id},
                     {"cohort", cohort_index},
                     {"medians", s.medians ? to_json(*s.medians) : json(nullptr)},
                     {"exceedance", s.exceedance ? json(*s.exceedance) : json(nullptr)}};
    if (const auto* a = std::get_if<CohortAssignment>(&step.decision)) {
        events.push_back(event(event_kind::kAssigned, {{"assignment", to_json(*a)}}));
        response["status"] = "assigned";
        response["assignment"] = to_json(*a);
    } else if (const auto* stop = std::get_if<StopDecision>(&step.decision)) {
        events.push_back(event(event_kind::kStopped,
                               {{"reason", stop->reason}, {"exceedance", stop->exceedance}}));
        response["status"] = "stopped";
        response["reason"] = stop->reason;
    } else {
        const auto mtd = to_json(final_mtd(s));
        events.push_back(event(event_kind::kCompleted, {{"mtd", mtd}}));
        response["status"] = "completed";
        response["mtd"] = mtd;
    }
    append(*entry, std::move(events));
    entry->state = std::move(step.state);
    return with_version(std::move(response));
}

json TrialService::record_outcomes(const std::string& trial_id, int cohort_index,
                                   const json& body) {
    std::array<Outcome, 2> outcomes{};
    try {
        const auto& list = body.is_object() ? body.at("outcomes") : body;
        if (!list.is_array() || list.size() != 2)
            throw DomainError("outcomes: expected exactly two patient outcomes");
        for (std::size_t k = 0; k < 2; ++k) outcomes[k] = outcome_from_json(list.at(k));
    } catch (const DomainError& e) {
        throw ServiceError(400, e.what());
    } catch (const json::exception& e) {
        throw ServiceError(400, std::string("outcomes: ") + e.what());
    }
    return record_outcomes(trial_id, cohort_index, outcomes);
}

TrialState TrialService::state(const std::string& trial_id) const {
    auto entry = find(trial_id);
    std::lock_guard lock(entry->mutex);
    return entry->state;
}

json TrialService::get_state(const std::string& trial_id) const {
    const TrialState s = state(trial_id);
    json j = to_json(s);
    j["trial_id"] = trial_id;
    j["patients"] = patients_view(s);
    j["mtd_preview"] = mtd_view(s);
    return with_version(std::move(j));
}

json TrialService::get_mtd(const std::string& trial_id) const {
    json j = mtd_view(state(trial_id));
    j["trial_id"] = trial_id;
    return with_version(std::move(j));
}

json TrialService::get_events(const std::string& trial_id) const {
    auto entry = find(trial_id);
    std::lock_guard lock(entry->mutex);
    return with_version({{"trial_id", trial_id}, {"events", entry->events}});
}

std::vector<std::string> TrialService::trial_ids() const {
    std::shared_lock lock(map_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, e] : trials_) ids.push_back(id);
    return ids;
}

void mount_routes(httplib::Server& server, TrialService& service) {
    auto reply = [](httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    auto guarded = [reply](auto handler) {
        return [reply, handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const ServiceError& e) {
                reply(res, e.status(), {{"error", e.what()}, {"schema_version", kSchemaVersion}});
            } catch (const json::exception& e) {
                reply(res, 400, {{"error", std::string("invalid JSON: ") + e.what()},
                                 {"schema_version", kSchemaVersion}});
            } catch (const std::exception& e) {
                reply(res, 500, {{"error", e.what()}, {"schema_version", kSchemaVersion}});
            }
        };
    };

    server.Post("/trials", guarded([&service, reply](const httplib::Request& req,
                                                     httplib::Response& res) {
                    const json body = req.body.empty() ? json::object() : json::parse(req.body);
                    const auto created = service.create_trial(body.value("config", body));
                    reply(res, 201, {{"trial_id", created.trial_id},
                                     {"assignment", to_json(created.assignment)},
                                     {"schema_version", kSchemaVersion}});
                }));
    server.Post(R"(/trials/([^/]+)/cohorts/(\d+)/outcomes)",
                guarded([&service, reply](const httplib::Request& req, httplib::Response& res) {
                    const json body = json::parse(req.body);
                    reply(res, 200,
                          service.record_outcomes(req.matches[1], std::stoi(req.matches[2]), body));
                }));
    server.Get(R"(/trials/([^/]+)/mtd)",
               guarded([&service, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, service.get_mtd(req.matches[1]));
               }));
    server.Get(R"(/trials/([^/]+)/events)",
               guarded([&service, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, service.get_events(req.matches[1]));
               }));
    server.Get(R"(/trials/([^/]+))",
               guarded([&service, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, service.get_state(req.matches[1]));
               }));
}

}  // namespace dosecomb
