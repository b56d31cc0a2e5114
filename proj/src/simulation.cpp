#include "dosecomb/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "dosecomb/rng.hpp"

namespace dosecomb {

namespace {

constexpr double kLevelTolerance = 1e-9;
constexpr double kRateTolerance = 1e-9;

std::optional<std::size_t> level_index(const std::vector<double>& levels, double dose) {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - dose) <= kLevelTolerance) return i;
    return std::nullopt;
}

std::vector<double> equally_spaced(const Interval& iv, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        out[k] = (k == n - 1) ? iv.hi : iv.lo + k * iv.width() / (n - 1);
    return out;
}

// Nearest point of `curve` to (x, y): distance and the y of that point.
std::pair<double, double> nearest(const CurveSample& curve, double x, double y) {
    double best = std::numeric_limits<double>::infinity();
    double best_y = 0.0;
    for (const auto& [cx, cy] : curve) {
        const double d = std::hypot(cx - x, cy - y);
        if (d < best) {
            best = d;
            best_y = cy;
        }
    }
    return {best, best_y};
}

}  // namespace

void validate_scenario(const Scenario& s) {
    if (!(s.eta_true >= 0.0 && s.eta_true <= 1.0))
        throw DomainError("scenario eta_true must lie in [0, 1]");
    if (!(s.attribution_error_rate >= 0.0 && s.attribution_error_rate <= 1.0))
        throw DomainError("scenario attribution_error_rate must lie in [0, 1]");
    if (const auto* wm = std::get_if<WorkingModel>(&s.truth)) {
        if (!(wm->alpha > 0.0 && wm->beta > 0.0 && std::isfinite(wm->gamma)))
            throw DomainError("working model exponents must be > 0");
        return;
    }
    const auto& t = std::get<ProbTable>(s.truth);
    if (t.levels.x.empty() || t.levels.y.empty())
        throw DomainError("probability table needs dose levels for both drugs");
    if (t.prob.size() != t.levels.x.size())
        throw DomainError("probability table rows must match D1 levels");
    for (const auto& row : t.prob) {
        if (row.size() != t.levels.y.size())
            throw DomainError("probability table columns must match D2 levels");
        for (double p : row)
            if (!(p >= 0.0 && p <= 1.0))
                throw DomainError("probability table entries must lie in [0, 1]");
    }
}

double true_prob(const Scenario& scenario, const StandardizedDose& dose) {
    if (const auto* wm = std::get_if<WorkingModel>(&scenario.truth))
        return prob_dlt(dose, wm->params());
    const auto& t = std::get<ProbTable>(scenario.truth);
    const auto i = level_index(t.levels.x, dose.x);
    const auto j = level_index(t.levels.y, dose.y);
    if (!i || !j) throw DomainError("true_prob: dose is not a grid point of the probability table");
    return t.prob[*i][*j];
}

PatientRecord generate_outcome(const Scenario& scenario, const StandardizedDose& dose,
                               std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    PatientRecord r{dose, Outcome::NoDlt};
    if (!(unif(rng) < true_prob(scenario, dose))) return r;
    if (!(unif(rng) < scenario.eta_true)) {
        r.outcome = Outcome::DltUnattributed;
        return r;
    }
    static constexpr Outcome kLabels[3] = {Outcome::DltDrug1, Outcome::DltDrug2, Outcome::DltBoth};
    std::uniform_int_distribution<int> pick3(0, 2);
    int label = pick3(rng);
    if (scenario.attribution_error_rate > 0.0 && unif(rng) < scenario.attribution_error_rate) {
        std::uniform_int_distribution<int> pick2(1, 2);
        label = (label + pick2(rng)) % 3;
    }
    r.outcome = kLabels[label];
    return r;
}

ProbTable make_grid_scenario(const WorkingModel& model, int levels_x, int levels_y,
                             const DoseBounds& bounds) {
    if (levels_x < 2 || levels_y < 2) throw UsageError("make_grid_scenario: levels must be >= 2");
    ProbTable t;
    t.levels.x = equally_spaced(bounds.x, levels_x);
    t.levels.y = equally_spaced(bounds.y, levels_y);
    const auto params = model.params();
    t.prob.assign(t.levels.x.size(), std::vector<double>(t.levels.y.size()));
    for (std::size_t i = 0; i < t.levels.x.size(); ++i)
        for (std::size_t j = 0; j < t.levels.y.size(); ++j)
            t.prob[i][j] = prob_dlt({t.levels.x[i], t.levels.y[j]}, params);
    return t;
}

std::vector<GridCell> true_mtd_set(const Scenario& scenario, const DoseGrid& grid, double theta,
                                   double delta) {
    std::vector<GridCell> out;
    for (std::size_t i = 0; i < grid.x.size(); ++i)
        for (std::size_t j = 0; j < grid.y.size(); ++j)
            if (std::abs(true_prob(scenario, {grid.x[i], grid.y[j]}) - theta) <= delta)
                out.push_back({static_cast<int>(i), static_cast<int>(j)});
    return out;
}

DesignConfig config_for(const Scenario& scenario, const DesignConfig& base) {
    DesignConfig cfg = base;
    if (const auto* t = std::get_if<ProbTable>(&scenario.truth)) {
        if (!cfg.grid) {
            cfg.grid = t->levels;
        } else {
            for (Drug d : {Drug::D1, Drug::D2})
                for (double level : cfg.grid->axis(d))
                    if (!level_index(t->levels.axis(d), level))
                        throw DomainError("design grid does not match the scenario's dose levels");
        }
    }
    return cfg;
}

TrialResult run_trial(const Scenario& scenario, const DesignConfig& config, std::uint64_t seed,
                      const PosteriorFitter& fitter) {
    validate_scenario(scenario);
    DesignConfig cfg = config_for(scenario, config);
    cfg.seed = derive_seed(seed, 1);
    std::mt19937_64 rng(derive_seed(seed, 0));

    TrialResult result;
    result.seed = seed;
    auto [state, assignment] = start_trial(cfg);
    while (state.status == TrialStatus::Active) {
        const auto* pending = state.pending();
        std::array<Outcome, 2> outcomes{};
        for (std::size_t k = 0; k < 2; ++k)
            outcomes[k] = generate_outcome(scenario, pending->dose(k), rng).outcome;
        state = next_cohort(state, state.cohort, outcomes, fitter).state;
    }
    result.patients = state.patients_treated();
    result.dlts = static_cast<int>(std::count_if(state.history.begin(), state.history.end(),
                                                 [](const PatientRecord& r) { return r.dlt(); }));
    result.estimate = final_mtd(state);
    result.state = std::move(state);
    return result;
}

SafetyStats safety_stats(std::span<const double> dlt_rates, double theta) {
    SafetyStats s;
    if (dlt_rates.empty()) return s;
    double sum = 0.0;
    int gt05 = 0, gt10 = 0;
    for (double r : dlt_rates) {
        sum += r;
        if (r > theta + 0.05 + kRateTolerance) ++gt05;
        if (r > theta + 0.10 + kRateTolerance) ++gt10;
    }
    const double n = static_cast<double>(dlt_rates.size());
    s.avg_pct_dlt = 100.0 * sum / n;
    s.pct_rate_gt_theta_p05 = 100.0 * gt05 / n;
    s.pct_rate_gt_theta_p10 = 100.0 * gt10 / n;
    return s;
}

CurveSample discretize(const MtdCurve& curve, int points) {
    if (points < 2) throw UsageError("discretize: need at least 2 points");
    CurveSample out;
    out.reserve(static_cast<std::size_t>(points));
    for (double x : equally_spaced(curve.bounds.x, points))
        if (auto y = curve.y_at(x)) out.emplace_back(x, *y);
    return out;
}

TrueCurveFn true_curve_fn(const MtdCurve& curve) {
    return [curve](double x) { return curve.y_at(x); };
}

PointwiseMetric pointwise_bias(const TrueCurveFn& truth, std::span<const CurveSample> estimated,
                               std::span<const double> x_grid) {
    PointwiseMetric m;
    for (double x : x_grid) {
        m.x.push_back(x);
        const auto y_true = truth(x);
        if (!y_true) {
            m.value.push_back(0.0);
            m.valid.push_back(false);
            continue;
        }
        double sum = 0.0;
        int used = 0;
        for (const auto& curve : estimated) {
            if (curve.empty()) continue;
            const auto [dist, y_est] = nearest(curve, x, *y_true);
            sum += y_est > *y_true ? dist : -dist;
            ++used;
        }
        m.value.push_back(used > 0 ? sum / used : 0.0);
        m.valid.push_back(used > 0);
    }
    return m;
}

PointwiseMetric pointwise_pct_recommendation(const TrueCurveFn& truth,
                                             std::span<const CurveSample> estimated,
                                             std::span<const double> x_grid, double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("pointwise_pct_recommendation: p must lie in (0, 1)");
    PointwiseMetric m;
    for (double x : x_grid) {
        m.x.push_back(x);
        const auto y_true = truth(x);
        if (!y_true || estimated.empty()) {
            m.value.push_back(0.0);
            m.valid.push_back(false);
            continue;
        }
        const double threshold = p * std::hypot(x, *y_true);
        int hits = 0;
        for (const auto& curve : estimated) {
            if (curve.empty()) continue;
            if (nearest(curve, x, *y_true).first <= threshold) ++hits;
        }
        m.value.push_back(100.0 * hits / static_cast<double>(estimated.size()));
        m.valid.push_back(true);
    }
    return m;
}

std::array<double, 4> discrete_pct_selection(std::span<const std::vector<GridCell>> recommended,
                                             std::span<const GridCell> true_set) {
    std::array<double, 4> pct{};
    if (recommended.empty()) return pct;
    static constexpr double kThresholds[3] = {0.25, 0.5, 0.75};
    for (const auto& rec : recommended) {
        double fraction = 0.0;
        if (!rec.empty()) {
            const auto in = std::count_if(rec.begin(), rec.end(), [&](const GridCell& c) {
                return std::find(true_set.begin(), true_set.end(), c) != true_set.end();
            });
            fraction = static_cast<double>(in) / rec.size();
        }
        for (std::size_t k = 0; k < 3; ++k)
            if (fraction >= kThresholds[k]) pct[k] += 1.0;
        if (fraction == 1.0) pct[3] += 1.0;
    }
    for (double& v : pct) v *= 100.0 / recommended.size();
    return pct;
}

std::uint64_t replicate_seed(std::uint64_t root_seed, int replicate) {
    return derive_seed(root_seed, 0x5eed0000ULL + static_cast<std::uint64_t>(replicate));
}

StudyResult run_study(const Scenario& scenario, const DesignConfig& config, int m,
                      std::uint64_t root_seed, const StudyOptions& options,
                      const PosteriorFitter& fitter) {
    if (m < 1) throw UsageError("run_study: m must be >= 1");
    validate_scenario(scenario);
    const DesignConfig cfg = config_for(scenario, config);
    validate_config(cfg);

    StudyResult out;
    out.trials.resize(static_cast<std::size_t>(m));
    std::vector<double> rates(static_cast<std::size_t>(m));
    std::vector<CurveSample> curves(static_cast<std::size_t>(m));

    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        for (int r = next++; r < m; r = next++) {
            try {
                const auto seed = replicate_seed(root_seed, r);
                auto res = run_trial(scenario, cfg, seed, fitter);
                auto& s = out.trials[static_cast<std::size_t>(r)];
                s.replicate = r;
                s.seed = seed;
                s.patients = res.patients;
                s.dlts = res.dlts;
                s.stopped = res.estimate.stopped;
                s.medians = res.state.medians;
                s.recommended = res.estimate.recommended;
                rates[static_cast<std::size_t>(r)] = res.dlt_rate();
                if (res.estimate.curve)
                    curves[static_cast<std::size_t>(r)] = discretize(*res.estimate.curve, options.curve_points);
                if (options.keep_states) s.state = std::move(res.state);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = m;
            }
        }
    };
    const int threads = std::max(1, std::min(options.threads, m));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    auto& oc = out.oc;
    oc.replicates = m;
    oc.safety = safety_stats(rates, cfg.theta);
    oc.pct_stopped = 100.0 *
                     std::count_if(out.trials.begin(), out.trials.end(),
                                   [](const TrialSummary& s) { return s.stopped; }) /
                     m;

    if (cfg.grid) {
        oc.true_set = true_mtd_set(scenario, *cfg.grid, cfg.theta, cfg.delta_select);
        std::vector<std::vector<GridCell>> recs;
        recs.reserve(out.trials.size());
        for (const auto& s : out.trials) recs.push_back(s.recommended);
        oc.discrete_pct_selection = discrete_pct_selection(recs, oc.true_set);
    } else if (const auto* wm = std::get_if<WorkingModel>(&scenario.truth)) {
        const auto truth = mtd_curve(wm->params(), cfg.theta, 2, cfg.bounds);
        const auto fn = true_curve_fn(truth);
        std::vector<double> xs = options.x_grid;
        if (xs.empty()) xs = equally_spaced(cfg.bounds.x, 11);
        oc.bias = pointwise_bias(fn, curves, xs);
        for (double p : options.p_values)
            oc.pct_recommendation.emplace_back(p, pointwise_pct_recommendation(fn, curves, xs, p));
    }
    return out;
}

}  // namespace dosecomb
