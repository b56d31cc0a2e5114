#include "dosecomb/trial_engine.hpp"

#include <algorithm>
#include <cmath>

#include "dosecomb/rng.hpp"

namespace dosecomb {

namespace {

void check_interval(const Interval& iv, const char* name) {
    if (!(std::isfinite(iv.lo) && std::isfinite(iv.hi) && iv.lo > 0.0 && iv.lo < iv.hi &&
          iv.hi <= 1.0))
        throw DomainError(std::string(name) + ": dose bounds must satisfy 0 < min < max <= 1");
}

void check_levels(const std::vector<double>& levels, const Interval& iv, const char* name) {
    if (levels.empty()) throw DomainError(std::string(name) + ": grid must be non-empty");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!iv.contains(levels[i]))
            throw DomainError(std::string(name) + ": grid level outside dose bounds");
        if (i > 0 && !(levels[i] > levels[i - 1]))
            throw DomainError(std::string(name) + ": grid levels must be strictly ascending");
    }
}

DoseDecision decide(const DesignConfig& cfg, const ModelParams& medians, Drug varied,
                    const PatientRecord& reference, int reference_index,
                    std::span<const PatientRecord> previous_cohort) {
    DoseDecision d;
    d.varied = varied;
    d.reference_patient = reference_index;
    const Drug held = varied == Drug::D1 ? Drug::D2 : Drug::D1;
    const double held_dose = reference.dose.on(held);
    d.reference_dose = reference.dose.on(varied);

    d.crm = crm_dose_given(medians, held_dose, varied, cfg.theta, cfg.bounds);
    d.after_restriction =
        apply_attribution_restriction(d.crm, varied, previous_cohort, d.reference_dose);
    d.restriction_active = std::any_of(previous_cohort.begin(), previous_cohort.end(),
                                       [&](const PatientRecord& r) { return r.attributed_to(varied); });
    d.after_cap = apply_escalation_cap(d.after_restriction, d.reference_dose, cfg.cap_fraction,
                                       cfg.bounds.axis(varied));
    d.cap_applied = d.after_cap < d.after_restriction;
    double final_dose = d.after_cap;
    if (cfg.grid) {
        d.rounded = round_to_grid(d.after_cap, cfg.grid->axis(varied));
        final_dose = *d.rounded;
    }
    d.dose = varied == Drug::D1 ? StandardizedDose{final_dose, held_dose}
                                : StandardizedDose{held_dose, final_dose};
    return d;
}

}  // namespace

std::string to_string(TrialStatus s) {
    switch (s) {
        case TrialStatus::Active: return "active";
        case TrialStatus::Stopped: return "stopped";
        case TrialStatus::Completed: return "completed";
    }
    return "unknown";
}

void validate_config(const DesignConfig& c) {
    if (!(c.theta > 0.0 && c.theta < 1.0)) throw DomainError("theta: must lie in (0, 1)");
    if (c.n_max < 2 || c.n_max % 2 != 0)
        throw DomainError("n_max: must be a positive even number (cohorts of two)");
    if (!(c.xi1 >= 0.0 && c.theta + c.xi1 < 1.0))
        throw DomainError("xi1: must be >= 0 with theta + xi1 < 1");
    if (!(c.xi2 > 0.0 && c.xi2 < 1.0)) throw DomainError("xi2: must lie in (0, 1)");
    if (!(c.cap_fraction > 0.0 && c.cap_fraction <= 1.0))
        throw DomainError("cap_fraction: must lie in (0, 1]");
    if (!(c.delta_select > 0.0 && c.delta_select < 1.0))
        throw DomainError("delta_select: must lie in (0, 1)");
    if (c.curve_grid_size < 2) throw DomainError("curve_grid_size: must be >= 2");
    check_interval(c.bounds.x, "bounds.x");
    check_interval(c.bounds.y, "bounds.y");
    if (c.grid) {
        check_levels(c.grid->x, c.bounds.x, "grid.x");
        check_levels(c.grid->y, c.bounds.y, "grid.y");
    }
    try {
        validate_prior(c.prior);
        validate_mcmc(c.mcmc);
    } catch (const std::exception& e) {
        throw DomainError(std::string("prior/mcmc: ") + e.what());
    }
}

PosteriorFitter mcmc_fitter() {
    return [](std::span<const PatientRecord> data, const DesignConfig& cfg, int cohort) {
        McmcConfig m = cfg.mcmc;
        m.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(cohort));
        return sample_posterior(data, cfg.prior, m);
    };
}

PosteriorFitter point_mass_fitter(const ModelParams& params) {
    return [params](std::span<const PatientRecord>, const DesignConfig&, int) {
        PosteriorSamples s;
        s.draws.push_back(params);
        s.diagnostics.chain_length = 1;
        return s;
    };
}

StandardizedDose lowest_combination(const DesignConfig& c) {
    if (c.grid) return {c.grid->x.front(), c.grid->y.front()};
    return {c.bounds.x.lo, c.bounds.y.lo};
}

std::pair<TrialState, CohortAssignment> start_trial(const DesignConfig& config) {
    validate_config(config);
    TrialState state;
    state.config = config;
    state.cohort = 1;
    CohortAssignment a;
    a.cohort = 1;
    const auto start = lowest_combination(config);
    for (std::size_t k = 0; k < 2; ++k) {
        auto& d = a.patients[k];
        d.dose = start;
        d.varied = k == 0 ? Drug::D1 : Drug::D2;
        d.reference_dose = start.on(d.varied);
        d.crm = d.after_restriction = d.after_cap = d.reference_dose;
        if (config.grid) d.rounded = d.reference_dose;
    }
    state.assignments.push_back(a);
    return {std::move(state), a};
}

double crm_dose_given(const ModelParams& params_hat, double fixed, Drug varying, double theta,
                      const DoseBounds& bounds) {
    const Interval& range = bounds.axis(varying);
    const auto root = varying == Drug::D1 ? mtd_solve_x(fixed, params_hat, theta, range)
                                          : mtd_solve_y(fixed, params_hat, theta, range);
    if (root) return root->dose;
    // No interior crossing: pi is monotone in the varying dose, so the nearer
    // boundary minimizes |pi - theta|.
    const StandardizedDose low = varying == Drug::D1 ? StandardizedDose{range.lo, fixed}
                                                     : StandardizedDose{fixed, range.lo};
    return prob_dlt(low, params_hat) >= theta ? range.lo : range.hi;
}

double apply_escalation_cap(double candidate, double previous, double cap_fraction,
                            const Interval& bounds) {
    return std::min(candidate, previous + cap_fraction * bounds.width());
}

double apply_attribution_restriction(double candidate, Drug axis,
                                     std::span<const PatientRecord> previous_cohort,
                                     double previous_dose_on_line) {
    for (const auto& r : previous_cohort)
        if (r.attributed_to(axis)) return std::min(candidate, previous_dose_on_line);
    return candidate;
}

double round_to_grid(double candidate, std::span<const double> grid) {
    if (grid.empty()) throw UsageError("round_to_grid: empty grid");
    double best = grid.front();
    double best_dist = std::abs(candidate - best);
    for (double level : grid.subspan(1)) {
        const double dist = std::abs(candidate - level);
        if (dist < best_dist || (dist == best_dist && level < best)) {
            best = level;
            best_dist = dist;
        }
    }
    return best;
}

bool check_stopping(double exceedance, const DesignConfig& config) {
    return exceedance > config.xi2;
}

bool check_stopping(const PosteriorSamples& samples, const DesignConfig& config) {
    return check_stopping(posterior_prob_dlt_exceeds(samples, lowest_combination(config),
                                                     config.theta + config.xi1),
                          config);
}

CohortStep next_cohort(const TrialState& state, int cohort_index,
                       const std::array<Outcome, 2>& outcomes, const PosteriorFitter& fitter) {
    const CohortAssignment* pending = state.pending();
    if (!pending) throw UsageError("next_cohort: trial is not active");
    if (cohort_index != state.cohort)
        throw UsageError("next_cohort: outcomes are for cohort " + std::to_string(cohort_index) +
                         " but cohort " + std::to_string(state.cohort) + " is pending");

    CohortStep step{state, TrialCompleted{}};
    TrialState& s = step.state;
    const DesignConfig& cfg = s.config;
    for (std::size_t k = 0; k < 2; ++k) s.history.push_back({pending->dose(k), outcomes[k]});

    auto samples = std::make_shared<const PosteriorSamples>(fitter(s.history, cfg, cohort_index));
    if (samples->draws.empty()) throw UsageError("next_cohort: fitter returned no draws");
    s.posterior = samples;
    s.medians = posterior_median(*samples);
    s.exceedance = posterior_prob_dlt_exceeds(*samples, lowest_combination(cfg),
                                              cfg.theta + cfg.xi1);

    if (check_stopping(*s.exceedance, cfg)) {
        s.status = TrialStatus::Stopped;
        s.stop_reason = "stopped for safety: P(pi(lowest) >= theta + xi1) = " +
                        std::to_string(*s.exceedance) + " > xi2";
        step.decision = StopDecision{s.stop_reason, *s.exceedance};
        return step;
    }
    if (s.patients_treated() >= cfg.n_max) {
        s.status = TrialStatus::Completed;
        step.decision = TrialCompleted{};
        return step;
    }

    const int i = cohort_index + 1;
    // Patients 2i-3 and 2i-2 (1-based) form the previous cohort.
    const std::size_t first = static_cast<std::size_t>(2 * i - 4);
    const std::span<const PatientRecord> previous(s.history.data() + first, 2);
    CohortAssignment next;
    next.cohort = i;
    if (i % 2 == 0) {
        next.patients[0] = decide(cfg, *s.medians, Drug::D1, previous[0], 2 * i - 3, previous);
        next.patients[1] = decide(cfg, *s.medians, Drug::D2, previous[1], 2 * i - 2, previous);
    } else {
        next.patients[0] = decide(cfg, *s.medians, Drug::D2, previous[0], 2 * i - 3, previous);
        next.patients[1] = decide(cfg, *s.medians, Drug::D1, previous[1], 2 * i - 2, previous);
    }
    s.cohort = i;
    s.assignments.push_back(next);
    step.decision = next;
    return step;
}

std::vector<GridCell> mtd_set(const DoseGrid& grid, const ModelParams& params, double theta,
                              double delta) {
    std::vector<GridCell> out;
    for (std::size_t i = 0; i < grid.x.size(); ++i)
        for (std::size_t j = 0; j < grid.y.size(); ++j)
            if (std::abs(prob_dlt({grid.x[i], grid.y[j]}, params) - theta) <= delta)
                out.push_back({static_cast<int>(i), static_cast<int>(j)});
    return out;
}

MtdEstimate final_mtd(const TrialState& state) {
    if (state.status == TrialStatus::Active)
        throw UsageError("final_mtd: trial is still active");
    MtdEstimate est;
    if (state.status == TrialStatus::Stopped) {
        est.stopped = true;
        est.reason = state.stop_reason;
        est.medians = state.medians;
        return est;
    }
    const auto& cfg = state.config;
    est.medians = state.medians;
    est.curve = mtd_curve(*state.medians, cfg.theta, cfg.curve_grid_size, cfg.bounds);
    if (cfg.grid) est.recommended = mtd_set(*cfg.grid, *state.medians, cfg.theta, cfg.delta_select);
    return est;
}

}  // namespace dosecomb
