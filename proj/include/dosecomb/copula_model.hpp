#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dosecomb {

/// Thrown when an input lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Thrown when an operation is called in a way its contract forbids.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class Drug { D1, D2 };

struct Interval {
    double lo = 0.05;
    double hi = 0.3;

    bool contains(double v) const { return v >= lo && v <= hi; }
    double width() const { return hi - lo; }
};

struct DoseBounds {
    Interval x{};
    Interval y{};

    const Interval& axis(Drug d) const { return d == Drug::D1 ? x : y; }
};

/// Standardized dose pair: x for drug D1, y for drug D2.
struct StandardizedDose {
    double x = 0.0;
    double y = 0.0;

    double on(Drug d) const { return d == Drug::D1 ? x : y; }
    friend bool operator==(const StandardizedDose&, const StandardizedDose&) = default;
};

/// Copula parameters (alpha, beta, gamma) and the attributable fraction eta.
struct ModelParams {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 0.0;
    double eta = 0.0;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct AttributionFlags {
    bool delta1 = false;
    bool delta2 = false;

    friend bool operator==(const AttributionFlags&, const AttributionFlags&) = default;
};

/// Affine map of a clinician-unit dose onto [target_min, target_max].
double standardize_dose(double raw, double raw_min, double raw_max,
                        double target_min, double target_max);
/// Inverse of standardize_dose.
double unstandardize_dose(double standardized, double raw_min, double raw_max,
                          double target_min, double target_max);

/// Interaction factor (e^-gamma - 1) / (e^-gamma + 1), i.e. -tanh(gamma/2).
double interaction_factor(double gamma);

/// Joint probability of the attribution pattern (delta1, delta2) under the
/// Gumbel copula with power marginals x^alpha and y^beta. The four patterns
/// sum to one.
double joint_outcome_prob(const StandardizedDose& dose, AttributionFlags flags,
                          const ModelParams& params);

/// Probability of a DLT carrying the given attribution. Flags (0,0) are not a
/// DLT event and are rejected.
double attribution_prob(const StandardizedDose& dose, AttributionFlags flags,
                        const ModelParams& params);

/// Total probability of a DLT at the dose pair.
double prob_dlt(const StandardizedDose& dose, const ModelParams& params);

/// Marginal powers precomputed: prob_dlt given u = x^alpha, v = y^beta.
inline double prob_dlt_from_marginals(double u, double v, double interaction) {
    return u + v - u * v - u * (1.0 - u) * v * (1.0 - v) * interaction;
}

struct MtdRoot {
    double dose = 0.0;
    /// Both quadratic roots fell in (0, 1]; the smaller was chosen.
    bool ambiguous = false;
};

inline constexpr double kKappaTolerance = 1e-12;

/// Dose of D2 that, with D1 held at x_star, gives DLT probability theta.
/// Absent when the crossing lies outside the D2 bounds.
std::optional<MtdRoot> mtd_solve_y(double x_star, const ModelParams& params, double theta,
                                   const Interval& y_bounds = {});
/// Mirror of mtd_solve_y with the roles of the drugs exchanged.
std::optional<MtdRoot> mtd_solve_x(double y_star, const ModelParams& params, double theta,
                                   const Interval& x_bounds = {});

/// MTD curve y*(x) sampled on a uniform x grid. ys[i] is absent where no
/// in-bounds solution exists at xs[i].
struct MtdCurve {
    ModelParams params{};
    double theta = 0.3;
    DoseBounds bounds{};
    std::vector<double> xs;
    std::vector<std::optional<double>> ys;
    /// [first, last] x with a valid solution; absent when the curve misses the rectangle.
    std::optional<Interval> domain;

    bool empty() const { return !domain.has_value(); }
    /// Solve exactly at an arbitrary x (not restricted to the sampled grid).
    std::optional<double> y_at(double x) const;
};

MtdCurve mtd_curve(const ModelParams& params, double theta, int grid_size,
                   const DoseBounds& bounds = {});

void validate_params(const ModelParams& params);
void validate_dose(const StandardizedDose& dose);

}  // namespace dosecomb
