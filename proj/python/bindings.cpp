#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dosecomb/json_io.hpp"
#include "dosecomb/simulation.hpp"

namespace py = pybind11;
using namespace dosecomb;

namespace {

std::string dump(const json& j) { return j.dump(); }

std::vector<PatientRecord> records_from(const std::string& s) {
    std::vector<PatientRecord> out;
    for (const auto& r : json::parse(s)) out.push_back(record_from_json(r));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Core routines of the dosecomb library; structured values travel as JSON text.";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

    m.def("prob_dlt",
          [](double x, double y, double alpha, double beta, double gamma) {
              return prob_dlt({x, y}, {alpha, beta, gamma, 0.0});
          },
          py::arg("x"), py::arg("y"), py::arg("alpha"), py::arg("beta"), py::arg("gamma"));

    m.def("mtd_solve_y",
          [](double x, double alpha, double beta, double gamma, double theta, double lo,
             double hi) -> std::optional<double> {
              const auto r = mtd_solve_y(x, {alpha, beta, gamma, 0.0}, theta, {lo, hi});
              if (!r) return std::nullopt;
              return r->dose;
          },
          py::arg("x"), py::arg("alpha"), py::arg("beta"), py::arg("gamma"), py::arg("theta"),
          py::arg("lo") = 0.05, py::arg("hi") = 0.3);

    m.def("mtd_curve",
          [](double alpha, double beta, double gamma, double theta, int points, double lo, double hi) {
              const Interval b{lo, hi};
              const auto c = mtd_curve({alpha, beta, gamma, 0.0}, theta, points, {b, b});
              return std::make_pair(c.xs, c.ys);
          },
          py::arg("alpha"), py::arg("beta"), py::arg("gamma"), py::arg("theta") = 0.3,
          py::arg("points") = 101, py::arg("lo") = 0.05, py::arg("hi") = 0.3);

    m.def("make_grid_scenario",
          [](double alpha, double beta, double gamma, int levels_x, int levels_y) {
              return dump(to_json(Scenario{make_grid_scenario({alpha, beta, gamma}, levels_x, levels_y)}));
          },
          py::arg("alpha"), py::arg("beta"), py::arg("gamma"), py::arg("levels_x") = 4,
          py::arg("levels_y") = 4);

    m.def("sample_posterior",
          [](const std::string& records, const std::string& config) {
              const auto data = records_from(records);
              const auto cfg = config_from_json(json::parse(config));
              PosteriorSamples s;
              {
                  py::gil_scoped_release release;
                  s = sample_posterior(data, cfg.prior, cfg.mcmc);
              }
              json draws = json::array();
              for (const auto& d : s.draws) draws.push_back({d.alpha, d.beta, d.gamma, d.eta});
              return dump({{"draws", draws}, {"diagnostics", to_json(s.diagnostics)}});
          },
          py::arg("records"), py::arg("config") = "{}");

    m.def("run_trial",
          [](const std::string& scenario, const std::string& config, std::uint64_t seed) {
              const auto s = scenario_from_json(json::parse(scenario));
              const auto c = config_from_json(json::parse(config));
              TrialResult r;
              {
                  py::gil_scoped_release release;
                  r = run_trial(s, c, seed);
              }
              return dump({{"seed", r.seed},
                           {"patients", r.patients},
                           {"dlts", r.dlts},
                           {"state", to_json(r.state)},
                           {"estimate", to_json(r.estimate)}});
          },
          py::arg("scenario"), py::arg("config") = "{}", py::arg("seed") = 1);

    m.def("run_study",
          [](const std::string& scenario, const std::string& config, int m_, std::uint64_t seed,
             int threads) {
              const auto s = scenario_from_json(json::parse(scenario));
              const auto c = config_from_json(json::parse(config));
              StudyResult r;
              {
                  py::gil_scoped_release release;
                  r = run_study(s, c, m_, seed, {.threads = threads});
              }
              return dump(to_json(r));
          },
          py::arg("scenario"), py::arg("config") = "{}", py::arg("replicates") = 200,
          py::arg("seed") = 1, py::arg("threads") = 1);
}
