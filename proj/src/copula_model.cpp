#include "dosecomb/copula_model.hpp"

#include <algorithm>
#include <cmath>

namespace dosecomb {

namespace {

bool finite(double v) { return std::isfinite(v); }

// Roots of k t^2 + b t + c = 0 restricted to (0, 1]; linear when |k| is tiny.
std::vector<double> unit_roots(double k, double b, double c) {
    std::vector<double> out;
    auto keep = [&](double t) {
        if (t > 0.0 && t <= 1.0) out.push_back(t);
    };
    if (std::abs(k) < kKappaTolerance) {
        if (b != 0.0) keep(-c / b);
        return out;
    }
    const double disc = b * b - 4.0 * k * c;
    if (disc < 0.0) return out;
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    keep(q / k);
    if (q != 0.0) keep(c / q);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Solve for the partner dose given the fixed drug's marginal u = dose^exp_fixed.
std::optional<MtdRoot> solve_partner(double u, double partner_exponent, double gamma,
                                     double theta, const Interval& bounds) {
    if (!(theta > 0.0 && theta < 1.0)) throw DomainError("theta must lie in (0, 1)");
    const double kappa = u * (1.0 - u) * interaction_factor(gamma);
    const auto roots = unit_roots(kappa, 1.0 - u - kappa, u - theta);
    std::optional<MtdRoot> best;
    for (double t : roots) {
        const double dose = std::pow(t, 1.0 / partner_exponent);
        if (!bounds.contains(dose)) continue;
        if (!best) {
            best = MtdRoot{dose, roots.size() > 1};
        }
    }
    return best;
}

}  // namespace

double standardize_dose(double raw, double raw_min, double raw_max,
                        double target_min, double target_max) {
    if (!(finite(raw) && finite(raw_min) && finite(raw_max) && finite(target_min) &&
          finite(target_max)))
        throw DomainError("standardize_dose: non-finite input");
    if (!(raw_min < raw_max)) throw DomainError("standardize_dose: raw_min must be < raw_max");
    if (!(target_min < target_max))
        throw DomainError("standardize_dose: target_min must be < target_max");
    if (raw < raw_min || raw > raw_max)
        throw DomainError("standardize_dose: raw dose outside [raw_min, raw_max]");
    return target_min + (raw - raw_min) * (target_max - target_min) / (raw_max - raw_min);
}

double unstandardize_dose(double standardized, double raw_min, double raw_max,
                          double target_min, double target_max) {
    if (!(target_min < target_max) || !(raw_min < raw_max))
        throw DomainError("unstandardize_dose: invalid interval");
    if (standardized < target_min || standardized > target_max)
        throw DomainError("unstandardize_dose: dose outside target interval");
    return raw_min + (standardized - target_min) * (raw_max - raw_min) / (target_max - target_min);
}

double interaction_factor(double gamma) {
    const double e = std::exp(-gamma);
    return (e - 1.0) / (e + 1.0);
}

void validate_params(const ModelParams& p) {
    if (!(finite(p.alpha) && finite(p.beta) && finite(p.gamma) && finite(p.eta)))
        throw DomainError("model parameters must be finite");
    if (!(p.alpha > 0.0)) throw DomainError("alpha must be > 0");
    if (!(p.beta > 0.0)) throw DomainError("beta must be > 0");
    if (p.eta < 0.0 || p.eta > 1.0) throw DomainError("eta must lie in [0, 1]");
}

void validate_dose(const StandardizedDose& d) {
    if (!(finite(d.x) && finite(d.y))) throw DomainError("dose must be finite");
    if (d.x < 0.0 || d.x > 1.0 || d.y < 0.0 || d.y > 1.0)
        throw DomainError("standardized dose must lie in [0, 1]");
}

double joint_outcome_prob(const StandardizedDose& dose, AttributionFlags flags,
                          const ModelParams& params) {
    validate_dose(dose);
    validate_params(params);
    const double u = std::pow(dose.x, params.alpha);
    const double v = std::pow(dose.y, params.beta);
    const double base = (flags.delta1 ? u : 1.0 - u) * (flags.delta2 ? v : 1.0 - v);
    const double sign = (flags.delta1 != flags.delta2) ? -1.0 : 1.0;
    return base + sign * u * (1.0 - u) * v * (1.0 - v) * interaction_factor(params.gamma);
}

double attribution_prob(const StandardizedDose& dose, AttributionFlags flags,
                        const ModelParams& params) {
    if (!flags.delta1 && !flags.delta2)
        throw UsageError("attribution_prob: flags (0,0) do not describe an attributed DLT");
    return joint_outcome_prob(dose, flags, params);
}

double prob_dlt(const StandardizedDose& dose, const ModelParams& params) {
    validate_dose(dose);
    validate_params(params);
    return prob_dlt_from_marginals(std::pow(dose.x, params.alpha), std::pow(dose.y, params.beta),
                                   interaction_factor(params.gamma));
}

std::optional<MtdRoot> mtd_solve_y(double x_star, const ModelParams& params, double theta,
                                   const Interval& y_bounds) {
    validate_params(params);
    if (!finite(x_star) || x_star < 0.0 || x_star > 1.0) throw DomainError("x_star out of range");
    return solve_partner(std::pow(x_star, params.alpha), params.beta, params.gamma, theta,
                         y_bounds);
}

std::optional<MtdRoot> mtd_solve_x(double y_star, const ModelParams& params, double theta,
                                   const Interval& x_bounds) {
    validate_params(params);
    if (!finite(y_star) || y_star < 0.0 || y_star > 1.0) throw DomainError("y_star out of range");
    return solve_partner(std::pow(y_star, params.beta), params.alpha, params.gamma, theta,
                         x_bounds);
}

std::optional<double> MtdCurve::y_at(double x) const {
    if (!bounds.x.contains(x)) return std::nullopt;
    auto r = mtd_solve_y(x, params, theta, bounds.y);
    if (!r) return std::nullopt;
    return r->dose;
}

MtdCurve mtd_curve(const ModelParams& params, double theta, int grid_size,
                   const DoseBounds& bounds) {
    if (grid_size < 2) throw UsageError("mtd_curve: grid_size must be >= 2");
    if (!(theta > 0.0 && theta < 1.0)) throw DomainError("theta must lie in (0, 1)");
    validate_params(params);
    MtdCurve curve;
    curve.params = params;
    curve.theta = theta;
    curve.bounds = bounds;
    curve.xs.reserve(grid_size);
    curve.ys.reserve(grid_size);
    const double step = bounds.x.width() / (grid_size - 1);
    for (int i = 0; i < grid_size; ++i) {
        const double x = (i == grid_size - 1) ? bounds.x.hi : bounds.x.lo + i * step;
        curve.xs.push_back(x);
        auto r = mtd_solve_y(x, params, theta, bounds.y);
        curve.ys.push_back(r ? std::optional<double>(r->dose) : std::nullopt);
        if (r) {
            if (!curve.domain) curve.domain = Interval{x, x};
            curve.domain->hi = x;
        }
    }
    return curve;
}

}  // namespace dosecomb
