#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dosecomb/copula_model.hpp"
#include "dosecomb/inference.hpp"

namespace dosecomb {

/// Discrete dose levels per drug, ascending.
struct DoseGrid {
    std::vector<double> x;
    std::vector<double> y;

    const std::vector<double>& axis(Drug d) const { return d == Drug::D1 ? x : y; }
};

struct DesignConfig {
    double theta = 0.3;
    int n_max = 40;
    double xi1 = 0.05;
    double xi2 = 0.8;
    double cap_fraction = 0.2;
    DoseBounds bounds{};
    std::optional<DoseGrid> grid;
    double delta_select = 0.10;
    int curve_grid_size = 101;
    PriorSpec prior{};
    McmcConfig mcmc{};
    std::uint64_t seed = 1;

    bool discrete() const { return grid.has_value(); }
};

/// Throws DomainError naming the offending field.
void validate_config(const DesignConfig& config);

/// How one patient's dose was derived.
struct DoseDecision {
    StandardizedDose dose{};
    /// Drug whose dose was searched; the other is held from the reference patient.
    Drug varied = Drug::D1;
    /// 1-based index of the previous-cohort patient on the same line; 0 for cohort 1.
    int reference_patient = 0;
    double reference_dose = 0.0;
    double crm = 0.0;
    bool restriction_active = false;
    double after_restriction = 0.0;
    bool cap_applied = false;
    double after_cap = 0.0;
    std::optional<double> rounded;
};

struct CohortAssignment {
    int cohort = 1;
    std::array<DoseDecision, 2> patients{};

    StandardizedDose dose(std::size_t i) const { return patients.at(i).dose; }
};

enum class TrialStatus { Active, Stopped, Completed };

std::string to_string(TrialStatus s);

struct TrialState {
    DesignConfig config{};
    TrialStatus status = TrialStatus::Active;
    /// Cohort awaiting outcomes (1-based); the last cohort treated once finished.
    int cohort = 1;
    /// Patients with observed outcomes, in treatment order.
    std::vector<PatientRecord> history;
    /// Every assignment issued, including the pending one.
    std::vector<CohortAssignment> assignments;
    std::string stop_reason;
    std::shared_ptr<const PosteriorSamples> posterior;
    std::optional<ModelParams> medians;
    /// Posterior P(pi(lowest combination) >= theta + xi1) from the last refit.
    std::optional<double> exceedance;

    const CohortAssignment* pending() const {
        return status == TrialStatus::Active && !assignments.empty() ? &assignments.back()
                                                                     : nullptr;
    }
    int patients_treated() const { return static_cast<int>(history.size()); }
};

/// Refit hook: posterior samples given all data so far and the cohort just
/// completed.
using PosteriorFitter = std::function<PosteriorSamples(std::span<const PatientRecord>,
                                                       const DesignConfig&, int cohort)>;

/// MCMC fitter; cohort k's refit uses a seed derived from (config.seed, k).
PosteriorFitter mcmc_fitter();

/// Test hook: a point-mass posterior at `params`.
PosteriorFitter point_mass_fitter(const ModelParams& params);

struct StopDecision {
    std::string reason;
    double exceedance = 0.0;
};
struct TrialCompleted {};

struct CohortStep {
    TrialState state;
    std::variant<CohortAssignment, StopDecision, TrialCompleted> decision;
};

/// Lowest available combination: (Xmin, Ymin) or the smallest grid levels.
StandardizedDose lowest_combination(const DesignConfig& config);

std::pair<TrialState, CohortAssignment> start_trial(const DesignConfig& config);

/// argmin over the varying drug's dose range of |pi_hat - theta| with the
/// other drug held at `fixed`.
double crm_dose_given(const ModelParams& params_hat, double fixed, Drug varying, double theta,
                      const DoseBounds& bounds = {});

double apply_escalation_cap(double candidate, double previous, double cap_fraction,
                            const Interval& bounds);

double apply_attribution_restriction(double candidate, Drug axis,
                                     std::span<const PatientRecord> previous_cohort,
                                     double previous_dose_on_line);

/// Nearest level; exact midpoints go to the lower level.
double round_to_grid(double candidate, std::span<const double> grid);

/// Record the pending cohort's outcomes, refit, and either stop, finish, or
/// assign the next cohort.
CohortStep next_cohort(const TrialState& state, int cohort_index,
                       const std::array<Outcome, 2>& outcomes,
                       const PosteriorFitter& fitter = mcmc_fitter());

/// Stop when P(pi(lowest) >= theta + xi1 | data) > xi2.
bool check_stopping(const PosteriorSamples& samples, const DesignConfig& config);
bool check_stopping(double exceedance, const DesignConfig& config);

struct GridCell {
    int i = 0;  // D1 level index
    int j = 0;  // D2 level index
    friend bool operator==(const GridCell&, const GridCell&) = default;
    friend auto operator<=>(const GridCell&, const GridCell&) = default;
};

struct MtdEstimate {
    bool stopped = false;
    std::string reason;
    std::optional<ModelParams> medians;
    std::optional<MtdCurve> curve;
    /// Discrete mode only: grid cells with |pi_hat - theta| <= delta_select.
    std::vector<GridCell> recommended;
};

MtdEstimate final_mtd(const TrialState& state);

/// Grid cells whose probability lies within delta of theta under `params`.
std::vector<GridCell> mtd_set(const DoseGrid& grid, const ModelParams& params, double theta,
                              double delta);

}  // namespace dosecomb
