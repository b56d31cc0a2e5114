#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "dosecomb/json_io.hpp"
#include "dosecomb/trial_engine.hpp"

namespace httplib {
class Server;
}

namespace dosecomb {

/// Service-level failure carrying an HTTP-style status code.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

/// Event kinds written to a trial's log.
namespace event_kind {
inline constexpr const char* kCreated = "trial_created";
inline constexpr const char* kAssigned = "cohort_assigned";
inline constexpr const char* kOutcomes = "outcomes_recorded";
inline constexpr const char* kRefit = "posterior_refit";
inline constexpr const char* kStopped = "trial_stopped";
inline constexpr const char* kCompleted = "trial_completed";
}  // namespace event_kind

/// Rebuild a trial's state by re-running the engine over a logged event
/// sequence. Throws ServiceError(500) if the log disagrees with the replay.
TrialState replay_events(const std::vector<json>& events, const PosteriorFitter& fitter);

/// Trials persisted as one newline-delimited JSON event log per trial under
/// a data directory. Logs are append-only; state is rebuilt by replay.
class TrialService {
public:
    explicit TrialService(std::filesystem::path data_dir,
                          PosteriorFitter fitter = mcmc_fitter());

    struct Created {
        std::string trial_id;
        CohortAssignment assignment;
    };

    Created create_trial(const DesignConfig& config);
    /// Parses the config, reporting the offending field as a 400.
    Created create_trial(const json& config);

    /// Returns the response body: status plus next assignment or stop/completion details.
    json record_outcomes(const std::string& trial_id, int cohort_index,
                         const std::array<Outcome, 2>& outcomes);
    json record_outcomes(const std::string& trial_id, int cohort_index, const json& body);

    TrialState state(const std::string& trial_id) const;
    json get_state(const std::string& trial_id) const;
    json get_mtd(const std::string& trial_id) const;
    json get_events(const std::string& trial_id) const;

    std::vector<std::string> trial_ids() const;
    const std::filesystem::path& data_dir() const { return dir_; }

private:
    struct Entry {
        mutable std::mutex mutex;
        TrialState state;
        std::vector<json> events;
        std::filesystem::path log;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    void load_existing();
    std::string next_id();
    static void append(Entry& entry, std::vector<json> new_events);

    std::filesystem::path dir_;
    PosteriorFitter fitter_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> trials_;
    long counter_ = 0;
};

/// Register the REST endpoints on `server`.
void mount_routes(httplib::Server& server, TrialService& service);

}  // namespace dosecomb
