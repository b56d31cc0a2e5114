#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "dosecomb/copula_model.hpp"
#include "dosecomb/inference.hpp"
#include "dosecomb/simulation.hpp"
#include "dosecomb/trial_engine.hpp"

namespace dosecomb {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// "%.6g" formatting used by every text output.
std::string format_sig6(double v);

json to_json(const ModelParams& p);
ModelParams params_from_json(const json& j);

json to_json(const StandardizedDose& d);
StandardizedDose dose_from_json(const json& j);

/// {"T":..,"A":..,"delta1":..,"delta2":..} plus a readable "outcome" tag.
json outcome_to_json(Outcome o);
/// Accepts the indicator object or a bare outcome tag string.
Outcome outcome_from_json(const json& j);

json to_json(const PatientRecord& r);
PatientRecord record_from_json(const json& j);

json to_json(const PriorSpec& p);
json to_json(const McmcConfig& m);
json to_json(const McmcDiagnostics& d);

/// Full config; every field round-trips exactly.
json to_json(const DesignConfig& c);
/// Missing fields take their defaults. Throws DomainError naming bad fields.
DesignConfig config_from_json(const json& j);

json to_json(const DoseDecision& d);
json to_json(const CohortAssignment& a);
CohortAssignment assignment_from_json(const json& j);

json to_json(const MtdCurve& c);
json to_json(const MtdEstimate& e);
json to_json(const TrialState& s);

json to_json(const Scenario& s);
Scenario scenario_from_json(const json& j);

json to_json(const PointwiseMetric& m);
json to_json(const OperatingCharacteristics& oc);
json to_json(const TrialSummary& t);
json to_json(const StudyResult& r);

/// Serialize with keys sorted and every floating-point number printed with
/// 6 significant digits, so output is byte-stable across platforms.
std::string dump_sig6(const json& j, int indent = 2);

/// Table-2 style safety row and Table-4 style selection row.
void write_safety_csv(std::ostream& os, const std::string& label, double eta,
                      const OperatingCharacteristics& oc);
void write_selection_csv(std::ostream& os, const std::string& label, double eta,
                         const OperatingCharacteristics& oc);
void write_pointwise_csv(std::ostream& os, const OperatingCharacteristics& oc);

}  // namespace dosecomb
