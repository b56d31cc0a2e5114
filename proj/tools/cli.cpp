#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "dosecomb/json_io.hpp"
#include "dosecomb/simulation.hpp"
#include "dosecomb/trial_service.hpp"

namespace dosecomb::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kBadInput = 2;
constexpr const char* kDataDirEnv = "DOSECOMB_DATA_DIR";

struct SimulateArgs {
    std::string scenario;
    std::string config;
    std::string out = "out";
    std::optional<double> eta;
    int replicates = 200;
    std::uint64_t seed = 1;
    int threads = 1;
    bool traces = false;
    std::optional<int> chain_length;
    std::optional<int> burn_in;
    std::optional<double> cap;
    std::optional<int> n_max;
};

struct ModelArgs {
    double alpha = 1.1;
    double beta = 1.1;
    double gamma = 1.0;
    double lo = 0.05;
    double hi = 0.3;
    std::uint64_t seed = 1;
};

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    f << content;
    if (!f) throw std::runtime_error("cannot write " + p.string());
}

int simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    Scenario scenario;
    DesignConfig config;
    try {
        std::ifstream in(a.scenario);
        if (!in) {
            err << "error: cannot open scenario file '" << a.scenario << "'\n";
            return kBadInput;
        }
        scenario = scenario_from_json(json::parse(in));
        if (!a.config.empty()) {
            std::ifstream cin(a.config);
            if (!cin) {
                err << "error: cannot open config file '" << a.config << "'\n";
                return kBadInput;
            }
            config = config_from_json(json::parse(cin));
        }
        if (a.eta) scenario.eta_true = *a.eta;
        if (a.chain_length) config.mcmc.chain_length = *a.chain_length;
        if (a.burn_in) config.mcmc.burn_in = *a.burn_in;
        if (a.cap) config.cap_fraction = *a.cap;
        if (a.n_max) config.n_max = *a.n_max;
        validate_scenario(scenario);
        validate_config(config_for(scenario, config));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    }

    StudyOptions opts;
    opts.threads = a.threads;
    opts.keep_states = a.traces || a.replicates == 1;
    const auto result = run_study(scenario, config, a.replicates, a.seed, opts);

    fs::create_directories(a.out);
    const auto label = scenario.label.empty() ? std::string("scenario") : scenario.label;
    json oc = to_json(result.oc);
    oc["schema_version"] = kSchemaVersion;
    oc["scenario"] = to_json(scenario);
    oc["config"] = to_json(config_for(scenario, config));
    oc["root_seed"] = a.seed;
    write_file(fs::path(a.out) / "oc.json", dump_sig6(oc) + "\n");
    write_file(fs::path(a.out) / "trials.json", dump_sig6(to_json(result)) + "\n");
    std::ostringstream safety, selection, pointwise;
    write_safety_csv(safety, label, scenario.eta_true, result.oc);
    write_file(fs::path(a.out) / "safety.csv", safety.str());
    if (result.oc.discrete_pct_selection) {
        write_selection_csv(selection, label, scenario.eta_true, result.oc);
        write_file(fs::path(a.out) / "selection.csv", selection.str());
    }
    if (result.oc.bias) {
        write_pointwise_csv(pointwise, result.oc);
        write_file(fs::path(a.out) / "pointwise.csv", pointwise.str());
    }
    out << safety.str() << selection.str();
    return 0;
}

int scenario_table(const ModelArgs& m, int levels, std::optional<int> levels2, std::ostream& out,
                   std::ostream& err) {
    ProbTable table;
    try {
        const DoseBounds b{{m.lo, m.hi}, {m.lo, m.hi}};
        table = make_grid_scenario({m.alpha, m.beta, m.gamma}, levels, levels2.value_or(levels), b);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    }
    // Rows: D1 levels; columns: D2 levels.
    out << "x\\y";
    for (double y : table.levels.y) out << ',' << format_sig6(y);
    out << '\n';
    for (std::size_t i = 0; i < table.levels.x.size(); ++i) {
        out << format_sig6(table.levels.x[i]);
        for (double p : table.prob[i]) out << ',' << format_sig6(p);
        out << '\n';
    }
    return 0;
}

int mtd_curve_cmd(const ModelArgs& m, double theta, int points, std::ostream& out,
                  std::ostream& err) {
    MtdCurve curve;
    try {
        const DoseBounds b{{m.lo, m.hi}, {m.lo, m.hi}};
        curve = mtd_curve({m.alpha, m.beta, m.gamma, 0.0}, theta, points, b);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    }
    out << "x,y,valid\n";
    for (std::size_t i = 0; i < curve.xs.size(); ++i) {
        out << format_sig6(curve.xs[i]) << ','
            << (curve.ys[i] ? format_sig6(*curve.ys[i]) : std::string()) << ','
            << (curve.ys[i] ? 1 : 0) << '\n';
    }
    return 0;
}

int serve(const std::string& host, int port, const std::string& data_dir, std::ostream& out,
          std::ostream& err) {
    std::unique_ptr<TrialService> service;
    try {
        service = std::make_unique<TrialService>(data_dir);
    } catch (const std::exception& e) {
        err << "error: cannot open data directory: " << e.what() << '\n';
        return 1;
    }
    httplib::Server server;
    // No SO_REUSEPORT: a second server on a busy port must fail to bind.
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    mount_routes(server, *service);
    if (!server.bind_to_port(host, port)) {
        err << "error: cannot bind " << host << ':' << port << " (port in use?)\n";
        return 1;
    }
    out << "serving on http://" << host << ':' << port << " (data dir " << data_dir << ")\n";
    out.flush();
    return server.listen_after_bind() ? 0 : 1;
}

void add_model_flags(CLI::App* cmd, ModelArgs& m) {
    cmd->add_option("--alpha", m.alpha, "D1 power-model exponent")->check(CLI::PositiveNumber);
    cmd->add_option("--beta", m.beta, "D2 power-model exponent")->check(CLI::PositiveNumber);
    cmd->add_option("--gamma", m.gamma, "interaction coefficient");
    cmd->add_option("--min", m.lo, "lowest standardized dose");
    cmd->add_option("--max", m.hi, "highest standardized dose");
    cmd->add_option("--seed", m.seed, "random seed (output is deterministic)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Drug-combination dose finding with partial toxicity attribution"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "run a simulation study for a scenario");
    simulate_cmd->add_option("--scenario", sim.scenario, "scenario JSON file")->required();
    simulate_cmd->add_option("--config", sim.config, "design config JSON file");
    simulate_cmd->add_option("--eta", sim.eta, "override the scenario's eta_true");
    simulate_cmd->add_option("--replicates,-m", sim.replicates, "number of simulated trials")
        ->check(CLI::PositiveNumber);
    simulate_cmd->add_option("--seed", sim.seed, "root seed");
    simulate_cmd->add_option("--threads", sim.threads, "worker threads")->check(CLI::PositiveNumber);
    simulate_cmd->add_option("--out", sim.out, "output directory");
    simulate_cmd->add_flag("--traces", sim.traces, "include full per-trial traces");
    simulate_cmd->add_option("--chain-length", sim.chain_length, "MCMC iterations per refit");
    simulate_cmd->add_option("--burn-in", sim.burn_in, "MCMC burn-in per refit");
    simulate_cmd->add_option("--cap", sim.cap, "escalation cap as a fraction of the dose range");
    simulate_cmd->add_option("--n", sim.n_max, "maximum sample size");

    ModelArgs table_model;
    int levels = 4;
    std::optional<int> levels2;
    auto* table_cmd = app.add_subcommand("scenario-table", "probability grid from the working model");
    add_model_flags(table_cmd, table_model);
    table_cmd->add_option("--levels", levels, "dose levels of D1 (and D2 unless --levels2)");
    table_cmd->add_option("--levels2", levels2, "dose levels of D2");

    ModelArgs curve_model{1.1, 1.1, 1.0};
    double theta = 0.3;
    int points = 26;
    auto* curve_cmd = app.add_subcommand("mtd-curve", "sample the MTD curve y*(x)");
    add_model_flags(curve_cmd, curve_model);
    curve_cmd->add_option("--theta", theta, "target DLT probability");
    curve_cmd->add_option("--points", points, "number of x samples");

    std::string host = "127.0.0.1";
    int port = 8080;
    const char* env_dir = std::getenv(kDataDirEnv);
    std::string data_dir = env_dir ? env_dir : "./trials";
    auto* serve_cmd = app.add_subcommand("serve", "run the trial-conduct HTTP service");
    serve_cmd->add_option("--host", host, "bind address");
    serve_cmd->add_option("--port", port, "TCP port");
    serve_cmd->add_option("--data-dir", data_dir,
                          std::string("event-log directory (default $") + kDataDirEnv + " or ./trials)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kBadInput;
    }

    if (simulate_cmd->parsed()) return simulate(sim, out, err);
    if (table_cmd->parsed()) return scenario_table(table_model, levels, levels2, out, err);
    if (curve_cmd->parsed()) return mtd_curve_cmd(curve_model, theta, points, out, err);
    if (serve_cmd->parsed()) return serve(host, port, data_dir, out, err);
    return kBadInput;
}

}  // namespace dosecomb::cli
