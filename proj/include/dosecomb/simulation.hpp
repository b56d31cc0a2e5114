#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dosecomb/copula_model.hpp"
#include "dosecomb/inference.hpp"
#include "dosecomb/trial_engine.hpp"

namespace dosecomb {

struct WorkingModel {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 0.0;

    ModelParams params() const { return {alpha, beta, gamma, 0.0}; }
};

/// True DLT probabilities on a dose grid; prob[i][j] is D1 level i with D2 level j.
struct ProbTable {
    DoseGrid levels;
    std::vector<std::vector<double>> prob;
};

struct Scenario {
    std::variant<WorkingModel, ProbTable> truth;
    double eta_true = 0.0;
    /// Probability an attributed DLT's label is replaced by one of the other two.
    double attribution_error_rate = 0.0;
    std::string label;
};

void validate_scenario(const Scenario& s);

double true_prob(const Scenario& scenario, const StandardizedDose& dose);

PatientRecord generate_outcome(const Scenario& scenario, const StandardizedDose& dose,
                               std::mt19937_64& rng);

/// Equally spaced levels spanning the bounds with the working-model
/// probability at each combination.
ProbTable make_grid_scenario(const WorkingModel& model, int levels_x, int levels_y,
                             const DoseBounds& bounds = {});

/// Grid cells of a scenario whose true probability is within delta of theta.
/// Requires a grid: the scenario's own for a ProbTable, `grid` otherwise.
std::vector<GridCell> true_mtd_set(const Scenario& scenario, const DoseGrid& grid, double theta,
                                   double delta);

struct TrialResult {
    std::uint64_t seed = 0;
    TrialState state;
    MtdEstimate estimate;
    int patients = 0;
    int dlts = 0;

    double dlt_rate() const { return patients > 0 ? static_cast<double>(dlts) / patients : 0.0; }
};

/// The design config used for a scenario: a ProbTable supplies its grid when
/// none is set, and must match it otherwise.
DesignConfig config_for(const Scenario& scenario, const DesignConfig& base);

TrialResult run_trial(const Scenario& scenario, const DesignConfig& config, std::uint64_t seed,
                      const PosteriorFitter& fitter = mcmc_fitter());

struct SafetyStats {
    double avg_pct_dlt = 0.0;
    double pct_rate_gt_theta_p05 = 0.0;
    double pct_rate_gt_theta_p10 = 0.0;
};

/// Mean DLT rate x100 and percent of trials with rate strictly above
/// theta + 0.05 and theta + 0.10.
SafetyStats safety_stats(std::span<const double> dlt_rates, double theta);

using CurveSample = std::vector<std::pair<double, double>>;
using TrueCurveFn = std::function<std::optional<double>(double)>;

/// `points` uniform x positions over the bounds, keeping the valid ones.
CurveSample discretize(const MtdCurve& curve, int points);
TrueCurveFn true_curve_fn(const MtdCurve& curve);

struct PointwiseMetric {
    std::vector<double> x;
    std::vector<double> value;
    /// False where the true curve has no point at x.
    std::vector<bool> valid;
};

/// Signed minimum distance from (x, y_true(x)) to each estimated curve,
/// averaged over trials with a non-empty estimate. Positive when the nearest
/// estimated point lies above the true point.
PointwiseMetric pointwise_bias(const TrueCurveFn& truth, std::span<const CurveSample> estimated,
                               std::span<const double> x_grid);

/// Percent of trials whose minimum distance is <= p * |(x, y_true(x))|.
/// Trials without an estimate count as misses.
PointwiseMetric pointwise_pct_recommendation(const TrueCurveFn& truth,
                                             std::span<const CurveSample> estimated,
                                             std::span<const double> x_grid, double p);

/// Percent of trials with >= 25%, >= 50%, >= 75% and 100% of their
/// recommended cells in the true set. Empty recommendations score 0.
std::array<double, 4> discrete_pct_selection(std::span<const std::vector<GridCell>> recommended,
                                             std::span<const GridCell> true_set);

struct StudyOptions {
    int threads = 1;
    int curve_points = 1000;
    std::vector<double> x_grid;  // defaults to 11 points over bounds.x
    std::vector<double> p_values{0.1, 0.2};
    bool keep_states = false;
};

struct OperatingCharacteristics {
    int replicates = 0;
    SafetyStats safety;
    double pct_stopped = 0.0;
    std::optional<PointwiseMetric> bias;
    std::vector<std::pair<double, PointwiseMetric>> pct_recommendation;
    std::optional<std::array<double, 4>> discrete_pct_selection;
    std::vector<GridCell> true_set;
};

struct TrialSummary {
    int replicate = 0;
    std::uint64_t seed = 0;
    int patients = 0;
    int dlts = 0;
    bool stopped = false;
    std::optional<ModelParams> medians;
    std::vector<GridCell> recommended;
    std::optional<TrialState> state;
};

struct StudyResult {
    OperatingCharacteristics oc;
    std::vector<TrialSummary> trials;
};

/// Seed of replicate r under root_seed.
std::uint64_t replicate_seed(std::uint64_t root_seed, int replicate);

/// m independent replicates; results do not depend on options.threads.
StudyResult run_study(const Scenario& scenario, const DesignConfig& config, int m,
                      std::uint64_t root_seed, const StudyOptions& options = {},
                      const PosteriorFitter& fitter = mcmc_fitter());

}  // namespace dosecomb
