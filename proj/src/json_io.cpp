#include "dosecomb/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace dosecomb {

namespace {

template <typename T>
T field(const json& j, const char* name, const T& fallback) {
    if (!j.is_object() || !j.contains(name) || j.at(name).is_null()) return fallback;
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw DomainError(std::string(name) + ": wrong type");
    }
}

json interval_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

Interval interval_from(const json& j, const char* name, const Interval& fallback) {
    if (!j.is_object() || !j.contains(name)) return fallback;
    const auto& a = j.at(name);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
        throw DomainError(std::string(name) + ": expected [min, max]");
    return {a[0].get<double>(), a[1].get<double>()};
}

UniformPrior uniform_from(const json& j, const char* name, const UniformPrior& fallback) {
    const auto iv = interval_from(j, name, Interval{fallback.lo, fallback.hi});
    return {iv.lo, iv.hi};
}

json grid_json(const DoseGrid& g) { return {{"x", g.x}, {"y", g.y}}; }

DoseGrid grid_from(const json& j) {
    try {
        return {j.at("x").get<std::vector<double>>(), j.at("y").get<std::vector<double>>()};
    } catch (const json::exception&) {
        throw DomainError("grid: expected {\"x\": [...], \"y\": [...]}");
    }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const char* drug_name(Drug d) { return d == Drug::D1 ? "D1" : "D2"; }

Drug drug_from(const json& j) {
    const auto s = j.get<std::string>();
    if (s == "D1") return Drug::D1;
    if (s == "D2") return Drug::D2;
    throw DomainError("unknown drug '" + s + "'");
}

json cells_json(const std::vector<GridCell>& cells) {
    json a = json::array();
    for (const auto& c : cells) a.push_back(json::array({c.i, c.j}));
    return a;
}

}  // namespace

std::string format_sig6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace {

void dump_sig6_into(std::string& out, const json& j, int indent, int depth) {
    const auto newline = [&](int d) {
        if (indent < 0) return;
        out += '\n';
        out.append(static_cast<std::size_t>(indent * d), ' ');
    };
    if (j.is_number_float()) {
        const double v = j.get<double>();
        if (!std::isfinite(v)) {
            out += "null";
            return;
        }
        auto s = format_sig6(v);
        if (s.find_first_of(".eE") == std::string::npos) s += ".0";
        out += s;
    } else if (j.is_array()) {
        if (j.empty()) {
            out += "[]";
            return;
        }
        out += '[';
        bool first = true;
        for (const auto& e : j) {
            if (!first) out += ',';
            first = false;
            newline(depth + 1);
            dump_sig6_into(out, e, indent, depth + 1);
        }
        newline(depth);
        out += ']';
    } else if (j.is_object()) {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += '{';
        bool first = true;
        for (const auto& [k, v] : j.items()) {
            if (!first) out += ',';
            first = false;
            newline(depth + 1);
            out += json(k).dump();
            out += indent < 0 ? ":" : ": ";
            dump_sig6_into(out, v, indent, depth + 1);
        }
        newline(depth);
        out += '}';
    } else {
        out += j.dump();
    }
}

}  // namespace

std::string dump_sig6(const json& j, int indent) {
    std::string out;
    dump_sig6_into(out, j, indent, 0);
    return out;
}

json to_json(const ModelParams& p) {
    return {{"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}, {"eta", p.eta}};
}

ModelParams params_from_json(const json& j) {
    return {field(j, "alpha", 1.0), field(j, "beta", 1.0), field(j, "gamma", 0.0),
            field(j, "eta", 0.0)};
}

json to_json(const StandardizedDose& d) { return {{"x", d.x}, {"y", d.y}}; }

StandardizedDose dose_from_json(const json& j) {
    if (!j.is_object() || !j.contains("x") || !j.contains("y"))
        throw DomainError("dose: expected {\"x\": .., \"y\": ..}");
    return {field(j, "x", 0.0), field(j, "y", 0.0)};
}

json outcome_to_json(Outcome o) {
    PatientRecord r{{}, o};
    json j = {{"outcome", to_string(o)}, {"T", r.dlt() ? 1 : 0}};
    if (r.dlt()) j["A"] = r.attributed() ? 1 : 0;
    if (r.attributed()) {
        j["delta1"] = r.flags().delta1 ? 1 : 0;
        j["delta2"] = r.flags().delta2 ? 1 : 0;
    }
    return j;
}

Outcome outcome_from_json(const json& j) {
    if (j.is_string()) return outcome_from_string(j.get<std::string>());
    if (j.is_object() && !j.contains("T") && j.contains("outcome"))
        return outcome_from_json(j.at("outcome"));
    if (!j.is_object() || !j.contains("T"))
        throw DomainError("outcome: expected {\"T\", \"A\", \"delta1\", \"delta2\"} or a tag");
    return PatientRecord::from_indicators({}, field(j, "T", -1), field(j, "A", -1),
                                          field(j, "delta1", -1), field(j, "delta2", -1))
        .outcome;
}

json to_json(const PatientRecord& r) {
    json j = outcome_to_json(r.outcome);
    j["dose"] = to_json(r.dose);
    return j;
}

PatientRecord record_from_json(const json& j) {
    return {dose_from_json(j.at("dose")), outcome_from_json(j)};
}

json to_json(const PriorSpec& p) {
    return {{"alpha", json::array({p.alpha.lo, p.alpha.hi})},
            {"beta", json::array({p.beta.lo, p.beta.hi})},
            {"gamma", {{"shape", p.gamma.shape}, {"rate", p.gamma.rate}}},
            {"eta", json::array({p.eta.lo, p.eta.hi})}};
}

json to_json(const McmcConfig& m) {
    return {{"chain_length", m.chain_length},       {"burn_in", m.burn_in},
            {"thin", m.thin},                       {"seed", m.seed},
            {"proposal_scales", m.proposal_scales}, {"adapt", m.adapt},
            {"adapt_interval", m.adapt_interval}};
}

json to_json(const McmcDiagnostics& d) {
    return {{"acceptance", d.acceptance}, {"ess", d.ess},         {"final_scales", d.final_scales},
            {"chain_length", d.chain_length}, {"burn_in", d.burn_in}, {"thin", d.thin},
            {"seed", d.seed},             {"warnings", d.warnings}};
}

json to_json(const DesignConfig& c) {
    json j = {{"theta", c.theta},
              {"n_max", c.n_max},
              {"xi1", c.xi1},
              {"xi2", c.xi2},
              {"cap_fraction", c.cap_fraction},
              {"bounds", {{"x", interval_json(c.bounds.x)}, {"y", interval_json(c.bounds.y)}}},
              {"grid", c.grid ? grid_json(*c.grid) : json(nullptr)},
              {"delta_select", c.delta_select},
              {"curve_grid_size", c.curve_grid_size},
              {"prior", to_json(c.prior)},
              {"mcmc", to_json(c.mcmc)},
              {"seed", c.seed}};
    return j;
}

DesignConfig config_from_json(const json& j) {
    if (!j.is_object()) throw DomainError("config: expected a JSON object");
    DesignConfig c;
    c.theta = field(j, "theta", c.theta);
    c.n_max = field(j, "n_max", c.n_max);
    c.xi1 = field(j, "xi1", c.xi1);
    c.xi2 = field(j, "xi2", c.xi2);
    c.cap_fraction = field(j, "cap_fraction", c.cap_fraction);
    c.delta_select = field(j, "delta_select", c.delta_select);
    c.curve_grid_size = field(j, "curve_grid_size", c.curve_grid_size);
    c.seed = field(j, "seed", c.seed);
    if (j.contains("bounds")) {
        const auto& b = j.at("bounds");
        c.bounds.x = interval_from(b, "x", c.bounds.x);
        c.bounds.y = interval_from(b, "y", c.bounds.y);
    }
    if (j.contains("grid") && !j.at("grid").is_null()) c.grid = grid_from(j.at("grid"));
    if (j.contains("prior")) {
        const auto& p = j.at("prior");
        c.prior.alpha = uniform_from(p, "alpha", c.prior.alpha);
        c.prior.beta = uniform_from(p, "beta", c.prior.beta);
        c.prior.eta = uniform_from(p, "eta", c.prior.eta);
        if (p.contains("gamma")) {
            c.prior.gamma.shape = field(p.at("gamma"), "shape", c.prior.gamma.shape);
            c.prior.gamma.rate = field(p.at("gamma"), "rate", c.prior.gamma.rate);
        }
    }
    if (j.contains("mcmc")) {
        const auto& m = j.at("mcmc");
        c.mcmc.chain_length = field(m, "chain_length", c.mcmc.chain_length);
        c.mcmc.burn_in = field(m, "burn_in", c.mcmc.burn_in);
        c.mcmc.thin = field(m, "thin", c.mcmc.thin);
        c.mcmc.seed = field(m, "seed", c.mcmc.seed);
        c.mcmc.proposal_scales = field(m, "proposal_scales", c.mcmc.proposal_scales);
        c.mcmc.adapt = field(m, "adapt", c.mcmc.adapt);
        c.mcmc.adapt_interval = field(m, "adapt_interval", c.mcmc.adapt_interval);
    }
    validate_config(c);
    return c;
}

json to_json(const DoseDecision& d) {
    return {{"dose", to_json(d.dose)},
            {"varied", drug_name(d.varied)},
            {"reference_patient", d.reference_patient},
            {"reference_dose", d.reference_dose},
            {"crm", d.crm},
            {"restriction_active", d.restriction_active},
            {"after_restriction", d.after_restriction},
            {"cap_applied", d.cap_applied},
            {"after_cap", d.after_cap},
            {"rounded", optional_number(d.rounded)}};
}

json to_json(const CohortAssignment& a) {
    return {{"cohort", a.cohort},
            {"patients", json::array({to_json(a.patients[0]), to_json(a.patients[1])})}};
}

CohortAssignment assignment_from_json(const json& j) {
    CohortAssignment a;
    a.cohort = j.at("cohort").get<int>();
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& p = j.at("patients").at(k);
        auto& d = a.patients[k];
        d.dose = dose_from_json(p.at("dose"));
        d.varied = drug_from(p.at("varied"));
        d.reference_patient = p.at("reference_patient").get<int>();
        d.reference_dose = p.at("reference_dose").get<double>();
        d.crm = p.at("crm").get<double>();
        d.restriction_active = p.at("restriction_active").get<bool>();
        d.after_restriction = p.at("after_restriction").get<double>();
        d.cap_applied = p.at("cap_applied").get<bool>();
        d.after_cap = p.at("after_cap").get<double>();
        if (!p.at("rounded").is_null()) d.rounded = p.at("rounded").get<double>();
    }
    return a;
}

json to_json(const MtdCurve& c) {
    json pts = json::array();
    for (std::size_t i = 0; i < c.xs.size(); ++i)
        pts.push_back({{"x", c.xs[i]}, {"y", optional_number(c.ys[i])}, {"valid", c.ys[i].has_value()}});
    return {{"params", to_json(c.params)},
            {"theta", c.theta},
            {"domain", c.domain ? interval_json(*c.domain) : json(nullptr)},
            {"points", pts}};
}

json to_json(const MtdEstimate& e) {
    return {{"stopped", e.stopped},
            {"reason", e.reason},
            {"medians", e.medians ? to_json(*e.medians) : json(nullptr)},
            {"curve", e.curve ? to_json(*e.curve) : json(nullptr)},
            {"recommended", cells_json(e.recommended)}};
}

json to_json(const TrialState& s) {
    json history = json::array();
    for (std::size_t k = 0; k < s.history.size(); ++k) {
        json r = to_json(s.history[k]);
        r["patient"] = k + 1;
        r["cohort"] = k / 2 + 1;
        history.push_back(r);
    }
    json assignments = json::array();
    for (const auto& a : s.assignments) assignments.push_back(to_json(a));
    const auto* pending = s.pending();
    return {{"status", to_string(s.status)},
            {"cohort", s.cohort},
            {"patients_treated", s.patients_treated()},
            {"history", history},
            {"assignments", assignments},
            {"pending", pending ? to_json(*pending) : json(nullptr)},
            {"stop_reason", s.stop_reason},
            {"medians", s.medians ? to_json(*s.medians) : json(nullptr)},
            {"exceedance", optional_number(s.exceedance)},
            {"diagnostics", s.posterior ? to_json(s.posterior->diagnostics) : json(nullptr)},
            {"config", to_json(s.config)}};
}

json to_json(const Scenario& s) {
    json truth;
    if (const auto* wm = std::get_if<WorkingModel>(&s.truth)) {
        truth = {{"type", "working_model"}, {"alpha", wm->alpha}, {"beta", wm->beta}, {"gamma", wm->gamma}};
    } else {
        const auto& t = std::get<ProbTable>(s.truth);
        truth = {{"type", "prob_table"}, {"levels", grid_json(t.levels)}, {"prob", t.prob}};
    }
    return {{"label", s.label},
            {"eta_true", s.eta_true},
            {"attribution_error_rate", s.attribution_error_rate},
            {"truth", truth}};
}

Scenario scenario_from_json(const json& j) {
    if (!j.is_object() || !j.contains("truth")) throw DomainError("scenario: missing 'truth'");
    Scenario s;
    s.label = field(j, "label", std::string{});
    s.eta_true = field(j, "eta_true", 0.0);
    s.attribution_error_rate = field(j, "attribution_error_rate", 0.0);
    const auto& t = j.at("truth");
    const auto type = field(t, "type", std::string{});
    if (type == "working_model") {
        s.truth = WorkingModel{field(t, "alpha", 1.0), field(t, "beta", 1.0), field(t, "gamma", 0.0)};
    } else if (type == "prob_table") {
        ProbTable table;
        try {
            table.prob = t.at("prob").get<std::vector<std::vector<double>>>();
        } catch (const json::exception&) {
            throw DomainError("truth.prob: expected a matrix of probabilities");
        }
        if (t.contains("levels")) {
            table.levels = grid_from(t.at("levels"));
        } else {
            // Levels default to equal spacing over the standard bounds.
            const int nx = static_cast<int>(table.prob.size());
            const int ny = nx > 0 ? static_cast<int>(table.prob.front().size()) : 0;
            if (nx < 2 || ny < 2) throw DomainError("truth.prob: need at least 2x2 levels");
            table.levels = make_grid_scenario(WorkingModel{}, nx, ny).levels;
        }
        s.truth = std::move(table);
    } else {
        throw DomainError("truth.type: expected 'working_model' or 'prob_table'");
    }
    validate_scenario(s);
    return s;
}

json to_json(const PointwiseMetric& m) {
    json pts = json::array();
    for (std::size_t i = 0; i < m.x.size(); ++i)
        pts.push_back({{"x", m.x[i]}, {"value", m.valid[i] ? json(m.value[i]) : json(nullptr)}});
    return pts;
}

json to_json(const OperatingCharacteristics& oc) {
    json rec = json::object();
    for (const auto& [p, metric] : oc.pct_recommendation) rec[format_sig6(p)] = to_json(metric);
    json sel = nullptr;
    if (oc.discrete_pct_selection) {
        const auto& s = *oc.discrete_pct_selection;
        sel = {{"ge25", s[0]}, {"ge50", s[1]}, {"ge75", s[2]}, {"all", s[3]}};
    }
    return {{"replicates", oc.replicates},
            {"avg_pct_dlt", oc.safety.avg_pct_dlt},
            {"pct_trials_rate_gt_theta_p05", oc.safety.pct_rate_gt_theta_p05},
            {"pct_trials_rate_gt_theta_p10", oc.safety.pct_rate_gt_theta_p10},
            {"pct_stopped", oc.pct_stopped},
            {"pointwise_bias", oc.bias ? to_json(*oc.bias) : json(nullptr)},
            {"pointwise_pct_recommendation", rec},
            {"discrete_pct_selection", sel},
            {"true_set", cells_json(oc.true_set)}};
}

json to_json(const TrialSummary& t) {
    json j = {{"replicate", t.replicate},
              {"seed", t.seed},
              {"patients", t.patients},
              {"dlts", t.dlts},
              {"stopped", t.stopped},
              {"medians", t.medians ? to_json(*t.medians) : json(nullptr)},
              {"recommended", cells_json(t.recommended)}};
    if (t.state) j["trace"] = to_json(*t.state);
    return j;
}

json to_json(const StudyResult& r) {
    json trials = json::array();
    for (const auto& t : r.trials) trials.push_back(to_json(t));
    return {{"schema_version", kSchemaVersion},
            {"operating_characteristics", to_json(r.oc)},
            {"trials", trials}};
}

void write_safety_csv(std::ostream& os, const std::string& label, double eta,
                      const OperatingCharacteristics& oc) {
    os << "scenario,eta,avg_pct_toxicities,pct_trials_rate_gt_theta_plus_0.05,"
          "pct_trials_rate_gt_theta_plus_0.10,pct_stopped\n";
    os << label << ',' << format_sig6(eta) << ',' << format_sig6(oc.safety.avg_pct_dlt) << ','
       << format_sig6(oc.safety.pct_rate_gt_theta_p05) << ','
       << format_sig6(oc.safety.pct_rate_gt_theta_p10) << ',' << format_sig6(oc.pct_stopped)
       << '\n';
}

void write_selection_csv(std::ostream& os, const std::string& label, double eta,
                         const OperatingCharacteristics& oc) {
    os << "scenario,eta,pct_ge25,pct_ge50,pct_ge75,pct_100\n";
    if (!oc.discrete_pct_selection) return;
    const auto& s = *oc.discrete_pct_selection;
    os << label << ',' << format_sig6(eta) << ',' << format_sig6(s[0]) << ',' << format_sig6(s[1])
       << ',' << format_sig6(s[2]) << ',' << format_sig6(s[3]) << '\n';
}

void write_pointwise_csv(std::ostream& os, const OperatingCharacteristics& oc) {
    os << "x,bias,bias_valid";
    for (const auto& [p, m] : oc.pct_recommendation) os << ",pct_rec_p" << format_sig6(p);
    os << '\n';
    if (!oc.bias) return;
    for (std::size_t i = 0; i < oc.bias->x.size(); ++i) {
        os << format_sig6(oc.bias->x[i]) << ',' << format_sig6(oc.bias->value[i]) << ','
           << (oc.bias->valid[i] ? 1 : 0);
        for (const auto& [p, m] : oc.pct_recommendation) os << ',' << format_sig6(m.value[i]);
        os << '\n';
    }
}

}  // namespace dosecomb
