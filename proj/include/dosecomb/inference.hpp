#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dosecomb/copula_model.hpp"

namespace dosecomb {

/// The five observable leaves of the toxicity/attribution chance tree.
enum class Outcome {
    NoDlt,            // T = 0
    DltUnattributed,  // T = 1, A = 0
    DltDrug1,         // T = 1, A = 1, (1,0)
    DltDrug2,         // T = 1, A = 1, (0,1)
    DltBoth,          // T = 1, A = 1, (1,1)
};

struct PatientRecord {
    StandardizedDose dose{};
    Outcome outcome = Outcome::NoDlt;

    bool dlt() const { return outcome != Outcome::NoDlt; }
    bool attributed() const {
        return outcome == Outcome::DltDrug1 || outcome == Outcome::DltDrug2 ||
               outcome == Outcome::DltBoth;
    }
    /// Meaningful only when attributed().
    AttributionFlags flags() const {
        return {outcome == Outcome::DltDrug1 || outcome == Outcome::DltBoth,
                outcome == Outcome::DltDrug2 || outcome == Outcome::DltBoth};
    }
    /// True if the DLT was attributed to `drug` (alone or jointly).
    bool attributed_to(Drug drug) const {
        if (!attributed()) return false;
        const auto f = flags();
        return drug == Drug::D1 ? f.delta1 : f.delta2;
    }

    /// Build from raw (T, A, delta1, delta2) indicators, rejecting shapes
    /// outside the five leaves. A and the deltas are ignored when T = 0
    /// and the deltas when A = 0.
    static PatientRecord from_indicators(const StandardizedDose& dose, int t, int a, int d1,
                                         int d2);

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

struct UniformPrior {
    double lo;
    double hi;
};

struct GammaPrior {
    double shape;
    double rate;
};

struct PriorSpec {
    UniformPrior alpha{0.2, 2.0};
    UniformPrior beta{0.2, 2.0};
    GammaPrior gamma{0.1, 0.1};
    UniformPrior eta{0.0, 1.0};
};

void validate_prior(const PriorSpec& prior);

/// Parameter order used for per-block arrays.
enum ParamIndex : std::size_t { kAlpha = 0, kBeta = 1, kGamma = 2, kEta = 3 };
inline constexpr std::size_t kNumParams = 4;

struct McmcConfig {
    int chain_length = 12000;
    int burn_in = 2000;
    int thin = 1;
    std::uint64_t seed = 1;
    /// Random-walk step sizes on the transformed (logit / log) scale.
    std::array<double, kNumParams> proposal_scales{1.0, 1.0, 2.0, 1.0};
    bool adapt = true;
    int adapt_interval = 50;
};

void validate_mcmc(const McmcConfig& cfg);

struct McmcDiagnostics {
    std::array<double, kNumParams> acceptance{};
    std::array<double, kNumParams> ess{};
    std::array<double, kNumParams> final_scales{};
    int chain_length = 0;
    int burn_in = 0;
    int thin = 1;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

struct PosteriorSamples {
    std::vector<ModelParams> draws;
    McmcDiagnostics diagnostics;
};

/// Sum over patients of the per-outcome log contributions. Returns -inf when
/// any contribution is non-positive.
double log_likelihood(std::span<const PatientRecord> data, const ModelParams& params);

/// Log prior density; -inf outside the support.
double log_prior(const ModelParams& params, const PriorSpec& prior);

/// Unnormalized log posterior density.
double log_posterior(std::span<const PatientRecord> data, const ModelParams& params,
                     const PriorSpec& prior);

/// Component-wise random-walk Metropolis on transformed coordinates.
/// Deterministic for a given seed.
PosteriorSamples sample_posterior(std::span<const PatientRecord> data, const PriorSpec& prior,
                                  const McmcConfig& cfg);

/// Componentwise empirical median; even counts average the two middle values.
ModelParams posterior_median(const PosteriorSamples& samples);
ModelParams posterior_mean(const PosteriorSamples& samples);

/// Fraction of draws whose DLT probability at `dose` is >= threshold.
double posterior_prob_dlt_exceeds(const PosteriorSamples& samples, const StandardizedDose& dose,
                                  double threshold);

/// Effective sample size from non-overlapping batch means.
double batch_means_ess(std::span<const double> chain);

}  // namespace dosecomb
