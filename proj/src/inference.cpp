#include "dosecomb/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace dosecomb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMinContribution = 1e-300;

double safe_log(double p) { return p < kMinContribution ? kNegInf : std::log(p); }

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double box_from(double z, const UniformPrior& u) { return u.lo + (u.hi - u.lo) * sigmoid(z); }

double box_to(double v, const UniformPrior& u) {
    double p = (v - u.lo) / (u.hi - u.lo);
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return logit(p);
}

// log prior + log Jacobian of a logit-scaled uniform coordinate (up to a constant).
double box_log_target(double z) { return log_sigmoid(z) + log_sigmoid(-z); }

// log Gamma(shape, rate) density of e^z plus log Jacobian z.
double log_gamma_target(double z, const GammaPrior& g) {
    return g.shape * std::log(g.rate) - std::lgamma(g.shape) + g.shape * z - g.rate * std::exp(z);
}

// Dose-dependent likelihood with the per-patient marginals deduplicated by
// dose coordinate. The eta factor depends only on outcome counts.
class FactoredLikelihood {
public:
    explicit FactoredLikelihood(std::span<const PatientRecord> data) {
        for (const auto& r : data) {
            x_index_.push_back(intern(log_x_, r.dose.x));
            y_index_.push_back(intern(log_y_, r.dose.y));
            outcome_.push_back(r.outcome);
            if (r.attributed())
                ++n_attributed_;
            else if (r.dlt())
                ++n_unattributed_;
        }
    }

    void marginals(double exponent, bool for_x, std::vector<double>& out) const {
        const auto& logs = for_x ? log_x_ : log_y_;
        out.resize(logs.size());
        for (std::size_t i = 0; i < logs.size(); ++i) out[i] = std::exp(exponent * logs[i]);
    }

    double dose_part(const std::vector<double>& u, const std::vector<double>& v, double c) const {
        double total = 0.0;
        for (std::size_t i = 0; i < outcome_.size(); ++i) {
            const double a = u[x_index_[i]];
            const double b = v[y_index_[i]];
            const double inter = a * (1.0 - a) * b * (1.0 - b) * c;
            double p = 0.0;
            switch (outcome_[i]) {
                case Outcome::NoDlt: p = 1.0 - (a + b - a * b - inter); break;
                case Outcome::DltUnattributed: p = a + b - a * b - inter; break;
                case Outcome::DltDrug1: p = a * (1.0 - b) - inter; break;
                case Outcome::DltDrug2: p = b * (1.0 - a) - inter; break;
                case Outcome::DltBoth: p = a * b + inter; break;
            }
            if (p < kMinContribution) return kNegInf;
            total += std::log(p);
        }
        return total;
    }

    double eta_part(double eta) const {
        double total = 0.0;
        if (n_attributed_ > 0) total += n_attributed_ * safe_log(eta);
        if (n_unattributed_ > 0) total += n_unattributed_ * safe_log(1.0 - eta);
        return total;
    }

private:
    static std::size_t intern(std::vector<double>& logs, double dose) {
        const double l = std::log(dose);
        for (std::size_t i = 0; i < logs.size(); ++i)
            if (logs[i] == l) return i;
        logs.push_back(l);
        return logs.size() - 1;
    }

    std::vector<double> log_x_, log_y_;
    std::vector<std::size_t> x_index_, y_index_;
    std::vector<Outcome> outcome_;
    long n_attributed_ = 0;
    long n_unattributed_ = 0;
};

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

}  // namespace

PatientRecord PatientRecord::from_indicators(const StandardizedDose& dose, int t, int a, int d1,
                                             int d2) {
    auto binary = [](int v) { return v == 0 || v == 1; };
    if (!binary(t)) throw DomainError("T must be 0 or 1");
    PatientRecord r{dose, Outcome::NoDlt};
    if (t == 0) return r;
    if (!binary(a)) throw DomainError("A must be 0 or 1 when T = 1");
    if (a == 0) {
        r.outcome = Outcome::DltUnattributed;
        return r;
    }
    if (!binary(d1) || !binary(d2)) throw DomainError("attribution flags must be 0 or 1");
    if (d1 == 0 && d2 == 0)
        throw DomainError("an attributed DLT must name at least one drug");
    r.outcome = d1 && d2 ? Outcome::DltBoth : (d1 ? Outcome::DltDrug1 : Outcome::DltDrug2);
    return r;
}

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::NoDlt: return "no_dlt";
        case Outcome::DltUnattributed: return "dlt_unattributed";
        case Outcome::DltDrug1: return "dlt_drug1";
        case Outcome::DltDrug2: return "dlt_drug2";
        case Outcome::DltBoth: return "dlt_both";
    }
    return "unknown";
}

Outcome outcome_from_string(const std::string& s) {
    for (auto o : {Outcome::NoDlt, Outcome::DltUnattributed, Outcome::DltDrug1,
                   Outcome::DltDrug2, Outcome::DltBoth})
        if (to_string(o) == s) return o;
    throw DomainError("unknown outcome '" + s + "'");
}

void validate_prior(const PriorSpec& p) {
    auto box = [](const UniformPrior& u, const char* name, double floor) {
        if (!(std::isfinite(u.lo) && std::isfinite(u.hi) && u.lo < u.hi && u.lo >= floor))
            throw DomainError(std::string("invalid uniform prior for ") + name);
    };
    box(p.alpha, "alpha", 0.0);
    box(p.beta, "beta", 0.0);
    box(p.eta, "eta", 0.0);
    if (p.eta.hi > 1.0) throw DomainError("eta prior must lie within [0, 1]");
    if (!(p.gamma.shape > 0.0 && p.gamma.rate > 0.0))
        throw DomainError("gamma prior shape and rate must be > 0");
}

void validate_mcmc(const McmcConfig& c) {
    if (c.burn_in < 0) throw UsageError("burn_in must be >= 0");
    if (c.chain_length <= c.burn_in) throw UsageError("chain_length must exceed burn_in");
    if (c.thin < 1) throw UsageError("thin must be >= 1");
    if (c.adapt_interval < 1) throw UsageError("adapt_interval must be >= 1");
    for (double s : c.proposal_scales)
        if (!(s > 0.0 && std::isfinite(s))) throw UsageError("proposal scales must be > 0");
}

double log_likelihood(std::span<const PatientRecord> data, const ModelParams& params) {
    validate_params(params);
    double total = 0.0;
    for (const auto& r : data) {
        double contribution = 0.0;
        switch (r.outcome) {
            case Outcome::NoDlt: contribution = 1.0 - prob_dlt(r.dose, params); break;
            case Outcome::DltUnattributed:
                contribution = prob_dlt(r.dose, params) * (1.0 - params.eta);
                break;
            default:
                contribution = params.eta * attribution_prob(r.dose, r.flags(), params);
                break;
        }
        if (contribution < kMinContribution) return kNegInf;
        total += std::log(contribution);
    }
    return total;
}

double log_prior(const ModelParams& p, const PriorSpec& prior) {
    auto uniform = [](double v, const UniformPrior& u) {
        return (v >= u.lo && v <= u.hi) ? -std::log(u.hi - u.lo) : kNegInf;
    };
    double lp = uniform(p.alpha, prior.alpha) + uniform(p.beta, prior.beta) +
                uniform(p.eta, prior.eta);
    if (!(p.gamma > 0.0) || !std::isfinite(p.gamma)) return kNegInf;
    const auto& g = prior.gamma;
    lp += g.shape * std::log(g.rate) - std::lgamma(g.shape) + (g.shape - 1.0) * std::log(p.gamma) -
          g.rate * p.gamma;
    return lp;
}

double log_posterior(std::span<const PatientRecord> data, const ModelParams& params,
                     const PriorSpec& prior) {
    const double lp = log_prior(params, prior);
    if (lp == kNegInf) return kNegInf;
    return lp + log_likelihood(data, params);
}

PosteriorSamples sample_posterior(std::span<const PatientRecord> data, const PriorSpec& prior,
                                  const McmcConfig& cfg) {
    validate_prior(prior);
    validate_mcmc(cfg);
    for (const auto& r : data) validate_dose(r.dose);

    const FactoredLikelihood lik(data);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Start at the centre of the prior box with gamma = 1.
    std::array<double, kNumParams> z{0.0, 0.0, 0.0, 0.0};
    z[kAlpha] = box_to(0.5 * (prior.alpha.lo + prior.alpha.hi), prior.alpha);
    z[kBeta] = box_to(0.5 * (prior.beta.lo + prior.beta.hi), prior.beta);
    z[kEta] = box_to(0.5 * (prior.eta.lo + prior.eta.hi), prior.eta);

    ModelParams cur{box_from(z[kAlpha], prior.alpha), box_from(z[kBeta], prior.beta),
                    std::exp(z[kGamma]), box_from(z[kEta], prior.eta)};
    std::vector<double> u, v, u_new, v_new;
    lik.marginals(cur.alpha, true, u);
    lik.marginals(cur.beta, false, v);
    double c = interaction_factor(cur.gamma);
    double dose_ll = lik.dose_part(u, v, c);
    double eta_ll = lik.eta_part(cur.eta);

    std::array<double, kNumParams> scale = cfg.proposal_scales;
    std::array<long, kNumParams> accepted{}, window_accepted{};
    long window = 0;
    int adapt_round = 0;

    PosteriorSamples out;
    const int kept = (cfg.chain_length - cfg.burn_in + cfg.thin - 1) / cfg.thin;
    out.draws.reserve(static_cast<std::size_t>(kept));

    auto accept = [&](double log_ratio) {
        return log_ratio >= 0.0 || std::log(unif(rng)) < log_ratio;
    };

    for (int iter = 0; iter < cfg.chain_length; ++iter) {
        const bool sampling = iter >= cfg.burn_in;

        // alpha
        {
            const double zp = z[kAlpha] + scale[kAlpha] * normal(rng);
            const double ap = box_from(zp, prior.alpha);
            lik.marginals(ap, true, u_new);
            const double ll = lik.dose_part(u_new, v, c);
            const double r = (ll - dose_ll) + box_log_target(zp) - box_log_target(z[kAlpha]);
            if (ll != kNegInf && accept(r)) {
                z[kAlpha] = zp;
                cur.alpha = ap;
                u.swap(u_new);
                dose_ll = ll;
                ++window_accepted[kAlpha];
                if (sampling) ++accepted[kAlpha];
            }
        }
        // beta
        {
            const double zp = z[kBeta] + scale[kBeta] * normal(rng);
            const double bp = box_from(zp, prior.beta);
            lik.marginals(bp, false, v_new);
            const double ll = lik.dose_part(u, v_new, c);
            const double r = (ll - dose_ll) + box_log_target(zp) - box_log_target(z[kBeta]);
            if (ll != kNegInf && accept(r)) {
                z[kBeta] = zp;
                cur.beta = bp;
                v.swap(v_new);
                dose_ll = ll;
                ++window_accepted[kBeta];
                if (sampling) ++accepted[kBeta];
            }
        }
        // gamma, on the log scale
        {
            const double zp = z[kGamma] + scale[kGamma] * normal(rng);
            const double gp = std::exp(zp);
            if (gp > 0.0 && std::isfinite(gp)) {
                const double cp = interaction_factor(gp);
                const double ll = lik.dose_part(u, v, cp);
                const double r = (ll - dose_ll) + log_gamma_target(zp, prior.gamma) -
                                 log_gamma_target(z[kGamma], prior.gamma);
                if (ll != kNegInf && accept(r)) {
                    z[kGamma] = zp;
                    cur.gamma = gp;
                    c = cp;
                    dose_ll = ll;
                    ++window_accepted[kGamma];
                    if (sampling) ++accepted[kGamma];
                }
            }
        }
        // eta
        {
            const double zp = z[kEta] + scale[kEta] * normal(rng);
            const double ep = box_from(zp, prior.eta);
            const double ll = lik.eta_part(ep);
            const double r = (ll - eta_ll) + box_log_target(zp) - box_log_target(z[kEta]);
            if (ll != kNegInf && accept(r)) {
                z[kEta] = zp;
                cur.eta = ep;
                eta_ll = ll;
                ++window_accepted[kEta];
                if (sampling) ++accepted[kEta];
            }
        }

        if (!sampling && cfg.adapt) {
            if (++window == cfg.adapt_interval) {
                ++adapt_round;
                const double step = std::min(1.0, 3.0 / std::sqrt(static_cast<double>(adapt_round)));
                for (std::size_t k = 0; k < kNumParams; ++k) {
                    const double rate = static_cast<double>(window_accepted[k]) / window;
                    if (rate < 0.25 || rate > 0.45) scale[k] *= std::exp(step * (rate - 0.35));
                    window_accepted[k] = 0;
                }
                window = 0;
            }
        }

        if (sampling && (iter - cfg.burn_in) % cfg.thin == 0) out.draws.push_back(cur);
    }

    auto& d = out.diagnostics;
    d.chain_length = cfg.chain_length;
    d.burn_in = cfg.burn_in;
    d.thin = cfg.thin;
    d.seed = cfg.seed;
    d.final_scales = scale;
    const double post = cfg.chain_length - cfg.burn_in;
    static constexpr const char* kNames[kNumParams] = {"alpha", "beta", "gamma", "eta"};
    std::vector<double> trace(out.draws.size());
    for (std::size_t k = 0; k < kNumParams; ++k) {
        d.acceptance[k] = accepted[k] / post;
        if (accepted[k] == 0)
            d.warnings.push_back(std::string("no proposals accepted for ") + kNames[k]);
        for (std::size_t i = 0; i < out.draws.size(); ++i) {
            const auto& p = out.draws[i];
            trace[i] = k == kAlpha ? p.alpha : k == kBeta ? p.beta : k == kGamma ? p.gamma : p.eta;
        }
        d.ess[k] = batch_means_ess(trace);
    }
    return out;
}

double batch_means_ess(std::span<const double> chain) {
    const std::size_t n = chain.size();
    if (n < 4) return static_cast<double>(n);
    const std::size_t batch = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    const std::size_t nb = n / batch;
    const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / n;
    double var = 0.0;
    for (double x : chain) var += (x - mean) * (x - mean);
    var /= (n - 1);
    if (var <= 0.0) return static_cast<double>(n);
    double bvar = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        double s = 0.0;
        for (std::size_t i = b * batch; i < (b + 1) * batch; ++i) s += chain[i];
        const double m = s / batch - mean;
        bvar += m * m;
    }
    bvar /= (nb - 1);
    if (bvar <= 0.0) return static_cast<double>(n);
    return std::min(static_cast<double>(n), n * var / (batch * bvar));
}

ModelParams posterior_median(const PosteriorSamples& samples) {
    if (samples.draws.empty()) throw UsageError("posterior_median: no draws");
    const std::size_t n = samples.draws.size();
    std::vector<double> a(n), b(n), g(n), e(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = samples.draws[i].alpha;
        b[i] = samples.draws[i].beta;
        g[i] = samples.draws[i].gamma;
        e[i] = samples.draws[i].eta;
    }
    return {median_of(std::move(a)), median_of(std::move(b)), median_of(std::move(g)),
            median_of(std::move(e))};
}

ModelParams posterior_mean(const PosteriorSamples& samples) {
    if (samples.draws.empty()) throw UsageError("posterior_mean: no draws");
    ModelParams m{0.0, 0.0, 0.0, 0.0};
    for (const auto& d : samples.draws) {
        m.alpha += d.alpha;
        m.beta += d.beta;
        m.gamma += d.gamma;
        m.eta += d.eta;
    }
    const double n = static_cast<double>(samples.draws.size());
    return {m.alpha / n, m.beta / n, m.gamma / n, m.eta / n};
}

double posterior_prob_dlt_exceeds(const PosteriorSamples& samples, const StandardizedDose& dose,
                                  double threshold) {
    if (samples.draws.empty()) throw UsageError("posterior_prob_dlt_exceeds: no draws");
    std::size_t hits = 0;
    for (const auto& d : samples.draws)
        if (prob_dlt(dose, d) >= threshold) ++hits;
    return static_cast<double>(hits) / samples.draws.size();
}

}  // namespace dosecomb
