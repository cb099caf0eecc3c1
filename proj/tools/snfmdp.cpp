// snfmdp: command-line front end.
//
//   snfmdp solve    --instance f.json --criterion avg|disc [--alpha a] [--tol t] [--out r.json]
//   snfmdp compare  --instance f.json [--w 0.5] [--out c.json]
//   snfmdp sweep    --scenario 1|2|3 --beta b [--gamma g] [--delta d] --n N --seed s --K k [--jobs j] --out s.csv
//   snfmdp simulate --instance f.json --policy myopic|rpr|two_step|optimal|<policy.json> [--horizon h] ...
//   snfmdp estimate --data d.csv [--covariates c1 c2 ..] [--bootstrap B] [--seed s] [--out rates.json]
//   snfmdp serve    --instance f.json [--port 8080] [--solve] [--decision-log log.csv]
//
// Any command also takes --config run.json, a JSON object whose keys are flag
// names (plus an optional "command"); flags given on the command line win.
// Exit status: 0 success, 2 input or usage error, 3 computational failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "snfmdp/results_io.hpp"
#include "snfmdp/service.hpp"
#include "snfmdp/snfmdp.hpp"

using namespace snfmdp;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

const std::vector<std::string> kCommands{"solve", "compare", "sweep", "simulate", "estimate", "serve"};

bool is_command(const std::string& s) { return std::find(kCommands.begin(), kCommands.end(), s) != kCommands.end(); }

/// Rewrites argv so that --config values come first and explicit flags,
/// parsed later, take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::optional<std::string> config_path;
    for (std::size_t n = 0; n < args.size(); ++n) {
        if (args[n] == "--config") {
            if (n + 1 >= args.size()) throw InputError("--config needs a file name");
            config_path = args[n + 1];
            args.erase(args.begin() + static_cast<long>(n), args.begin() + static_cast<long>(n) + 2);
            break;
        }
        if (args[n].rfind("--config=", 0) == 0) {
            config_path = args[n].substr(9);
            args.erase(args.begin() + static_cast<long>(n));
            break;
        }
    }
    std::vector<std::string> out{argv[0]};
    if (!config_path) {
        out.insert(out.end(), args.begin(), args.end());
        return out;
    }
    const json cfg = read_json_file(*config_path);
    if (!cfg.is_object()) throw InputError(*config_path + ": config must be a JSON object");
    auto cmd_it = std::find_if(args.begin(), args.end(), is_command);
    std::string command;
    if (cmd_it != args.end()) {
        command = *cmd_it;
        args.erase(cmd_it);
    } else if (cfg.contains("command") && cfg.at("command").is_string()) {
        command = cfg.at("command").get<std::string>();
    } else {
        throw InputError(*config_path + ": no command given");
    }
    out.push_back(command);
    for (const auto& [key, value] : cfg.items()) {
        if (key == "command") continue;
        const std::string flag = (key.size() == 1 ? "-" : "--") + key;
        auto scalar = [&](const json& v) {
            if (v.is_string()) return v.get<std::string>();
            std::ostringstream os;
            os << std::setprecision(17) << v;
            return os.str();
        };
        if (value.is_boolean()) {
            if (value.get<bool>()) out.push_back(flag);
        } else if (value.is_array()) {
            out.push_back(flag);
            for (const auto& v : value) out.push_back(scalar(v));
        } else {
            out.push_back(flag);
            out.push_back(scalar(value));
        }
    }
    out.insert(out.end(), args.begin(), args.end());
    return out;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

// ---------------------------------------------------------------------------

struct SolveArgs {
    std::string instance;
    std::string criterion;
    std::optional<double> alpha;
    double tol = 1e-9;
    std::string out;
};

int run_solve(const SolveArgs& a) {
    if (a.criterion == "avg" && a.alpha) throw CLI::ValidationError("--alpha", "not allowed with --criterion avg");
    if (a.criterion == "disc" && !a.alpha) throw CLI::ValidationError("--alpha", "required with --criterion disc");
    const Instance inst = load_instance(a.instance);
    SolveResult r;
    if (a.criterion == "avg") {
        AverageSolveOptions o;
        o.tol = a.tol;
        r = policy_iteration_average(inst, o);
    } else {
        ValueIterationOptions o;
        o.tol = a.tol;
        r = value_iteration_discounted(inst, *a.alpha, o);
    }
    json j = solve_result_to_json(inst, r);
    j["instance"] = a.instance;
    write_output(a.out, j.dump(2) + "\n");
    if (!a.out.empty() && a.out != "-") {
        if (r.criterion == Criterion::average)
            std::cerr << "g = " << fmt(r.gain) << " (" << r.iterations << " iterations)\n";
        else
            std::cerr << "solved in " << r.iterations << " iterations, residual " << r.residual << "\n";
    }
    return 0;
}

struct CompareArgs {
    std::string instance;
    double w = 0.5;
    std::string out;
};

int run_compare(const CompareArgs& a) {
    const Instance inst = load_instance(a.instance);
    const SolveResult opt = policy_iteration_average(inst);
    struct Row {
        std::string name;
        double g;
    };
    std::vector<Row> rows{{"optimal", opt.gain},
                          {"myopic", evaluate_policy_average(inst, myopic_policy(inst)).gain},
                          {"rpr", evaluate_policy_average(inst, rpr_policy(inst)).gain},
                          {"two_step", evaluate_policy_average(inst, two_step_policy(inst, a.w)).gain}};
    std::ostringstream table;
    table << std::left << std::setw(10) << "policy" << std::right << std::setw(14) << "avg_cost" << std::setw(22)
          << "gap_vs_optimal_%" << std::setw(24) << "gap_vs_heuristic_%" << "\n";
    json j;
    j["instance"] = a.instance;
    j["two_step_weight"] = a.w;
    j["gap_conventions"] = {{"gap_vs_optimal_pct", "(g_heuristic - g_opt) / g_opt * 100"},
                            {"gap_vs_heuristic_pct", "(g_heuristic - g_opt) / g_heuristic * 100"}};
    json policies = json::array();
    for (const Row& r : rows) {
        const double gap_opt = gap_pct(r.g, opt.gain);
        const double gap_h = gap_pct_heuristic_base(r.g, opt.gain);
        table << std::left << std::setw(10) << r.name << std::right << std::setw(14) << fmt(r.g) << std::setw(22)
              << fmt(gap_opt, 2) << std::setw(24) << fmt(gap_h, 2) << "\n";
        policies.push_back({{"policy", r.name}, {"g", r.g}, {"gap_vs_optimal_pct", gap_opt}, {"gap_vs_heuristic_pct", gap_h}});
    }
    table << "gap_vs_optimal_%   = (g - g_opt) / g_opt * 100\n"
          << "gap_vs_heuristic_% = (g - g_opt) / g * 100\n";
    j["policies"] = policies;
    std::cout << table.str();
    if (!a.out.empty()) write_output(a.out, j.dump(2) + "\n");
    return 0;
}

struct SweepArgs {
    int scenario = 1;
    double beta = 0.2;
    double gamma = 1.0;
    double delta = 1.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double K = kDefaultLossPenalty;
    unsigned jobs = 1;
    std::string idle = "reset";
    std::string costs;
    std::vector<double> lambda;
    int num_facilities = 0;  // 0: width of the cost matrix
    std::string out;
    std::string summary;
};

int run_sweep_cmd(const SweepArgs& a) {
    SweepConfig cfg;
    cfg.spec.scenario = a.scenario;
    cfg.spec.beta = a.beta;
    cfg.spec.gamma = a.gamma;
    cfg.spec.delta = a.delta;
    cfg.spec.seed = a.seed;
    cfg.num_instances = a.n;
    cfg.loss_penalty = a.K;
    cfg.jobs = a.jobs;
    cfg.idle = a.idle == "baseline" ? IdleKernel::baseline : IdleKernel::reset;
    if (!a.costs.empty()) {
        const json c = read_json_file(a.costs);
        if (!c.contains("costs")) throw InputError(a.costs + ": no \"costs\" block");
        cfg.costs = c.at("costs").get<std::vector<std::vector<double>>>();
        if (cfg.costs.empty()) throw InputError(a.costs + ": empty cost matrix");
    }
    cfg.spec.num_facilities = static_cast<int>(cfg.costs.front().size());
    if (a.num_facilities != 0 && a.num_facilities != cfg.spec.num_facilities)
        throw InputError("num_facilities = " + std::to_string(a.num_facilities) + " but the cost matrix has " +
                         std::to_string(cfg.spec.num_facilities) + " facility columns");
    // default: every type and "no discharge" equally likely, 0.2 each for four types
    cfg.lambda = a.lambda.empty() ? std::vector<double>(cfg.costs.size(), 1.0 / (static_cast<double>(cfg.costs.size()) + 1.0)) : a.lambda;
    if (a.scenario < 1 || a.scenario > 3) throw InputError("--scenario must be 1, 2 or 3");
    cfg.spec.validate();
    // fail on bad instance parameters before any work
    if (a.n > 0) make_instance(apply_scenario(cfg.spec, sample_baselines(cfg.spec.num_facilities, 0), cfg.idle), cfg.costs, cfg.lambda, cfg.loss_penalty);

    const SweepResult res = run_sweep(cfg);
    std::ostringstream csv;
    write_sweep_csv(csv, res.records);
    write_output(a.out, csv.str());
    json summary = sweep_summary_to_json(res.summary);
    summary["spec"] = scenario_spec_to_json(cfg.spec);
    summary["K"] = cfg.loss_penalty;
    summary["idle_kernel"] = to_string(cfg.idle);
    if (!a.summary.empty()) write_output(a.summary, summary.dump(2) + "\n");
    if (!a.out.empty() && a.out != "-") {
        std::cerr << "instances " << res.summary.instances << ", failures " << res.summary.failures
                  << ", fraction g_rpr <= g_myopic " << fmt(res.summary.fraction_rpr_le_myopic, 4)
                  << ", mean gap vs optimal (myopic / rpr) " << fmt(res.summary.mean_gap_myopic_pct, 3) << "% / "
                  << fmt(res.summary.mean_gap_rpr_pct, 3) << "%, max rpr gap " << fmt(res.summary.max_gap_rpr_pct, 3)
                  << "%\n";
    }
    return res.summary.failures > 0 && res.summary.failures == res.summary.instances ? kExitSolver : 0;
}

struct SimulateArgs {
    std::string instance;
    std::string policy = "myopic";
    double w = 0.5;
    long horizon = 1'000'000;
    long burn_in = 10'000;
    std::uint64_t seed = 0;
    std::string out;
};

int run_simulate(const SimulateArgs& a) {
    const Instance inst = load_instance(a.instance);
    Policy p;
    if (a.policy == "myopic") p = myopic_policy(inst);
    else if (a.policy == "rpr") p = rpr_policy(inst);
    else if (a.policy == "two_step") p = two_step_policy(inst, a.w);
    else if (a.policy == "optimal") p = policy_iteration_average(inst).policy;
    else p = policy_from_json(inst, read_json_file(a.policy));
    SimulationOptions o;
    o.horizon = a.horizon;
    o.burn_in = a.burn_in;
    o.seed = a.seed;
    const SimulationEstimate e = simulate_policy(inst, p, o);
    json j = simulation_to_json(e);
    j["policy"] = p.tag();
    j["instance"] = a.instance;
    write_output(a.out, j.dump(2) + "\n");
    return 0;
}

struct EstimateArgs {
    std::string data;
    std::vector<std::string> covariates;
    bool covariates_given = false;
    std::size_t bootstrap = 0;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::string profile;
    std::string out;
};

int run_estimate(const EstimateArgs& a) {
    const DischargeData data = read_discharge_csv(a.data);
    CovariateSpec spec = CovariateSpec::from_data(data);
    if (a.covariates_given) spec.covariates = a.covariates;
    CovariateProfile profile = default_profile(data, spec);
    if (!a.profile.empty()) {
        const json pj = read_json_file(a.profile);
        for (const auto& [k, v] : pj.items()) profile[k] = v.get<double>();
    }
    RateTable table;
    if (a.bootstrap > 0) {
        BootstrapOptions o;
        o.replicates = a.bootstrap;
        o.seed = a.seed;
        o.jobs = a.jobs;
        table = bootstrap_ci(data, spec, profile, o);
    } else {
        table = predict_rates(fit_logistic(data, spec), profile);
    }
    write_output(a.out, rate_table_to_json(table).dump(2) + "\n");
    return 0;
}

struct ServeArgs {
    std::string instance;
    std::string host = "127.0.0.1";
    int port = 8080;
    double w = 0.5;
    bool solve = false;
    std::string decision_log;
};

int run_serve(const ServeArgs& a) {
    AdvisorOptions o;
    o.two_step_weight = a.w;
    o.solve_on_start = a.solve;
    o.decision_log = a.decision_log;
    Advisor advisor(load_instance(a.instance), o);
    AdvisorServer server(advisor);
    std::cerr << "serving " << a.instance << " on http://" << a.host << ":" << a.port << "\n";
    if (!server.listen(a.host, a.port)) throw InputError("could not listen on " + a.host + ":" + std::to_string(a.port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }

    CLI::App app{"Hospital-to-SNF transfer MDP toolkit"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    SolveArgs sa;
    auto* solve = app.add_subcommand("solve", "Solve the average-cost or discounted problem");
    solve->add_option("--instance", sa.instance, "Instance JSON")->required();
    solve->add_option("--criterion", sa.criterion, "avg or disc")->required()->check(CLI::IsMember({"avg", "disc"}));
    solve->add_option("--alpha", sa.alpha, "Discount factor, disc only")->check(CLI::Range(0.0, 1.0));
    solve->add_option("--tol", sa.tol, "Tolerance")->check(CLI::PositiveNumber);
    solve->add_option("--out", sa.out, "Output JSON (default stdout)");

    CompareArgs ca;
    auto* compare = app.add_subcommand("compare", "Compare optimal and heuristic policies on one instance");
    compare->add_option("--instance", ca.instance, "Instance JSON")->required();
    compare->add_option("--w", ca.w, "Two-step lookahead weight")->check(CLI::Range(1e-12, 1.0));
    compare->add_option("--out", ca.out, "Also write the comparison as JSON");

    SweepArgs wa;
    auto* sweep = app.add_subcommand("sweep", "Random-instance sweep under one scenario");
    sweep->add_option("--scenario", wa.scenario, "1, 2 or 3")->required()->check(CLI::IsMember({1, 2, 3}));
    sweep->add_option("--beta", wa.beta, "beta")->required();
    sweep->add_option("--gamma", wa.gamma, "gamma (scenarios 2-3)");
    sweep->add_option("--delta", wa.delta, "delta (scenario 3)");
    sweep->add_option("--n", wa.n, "Number of instances")->required();
    sweep->add_option("--seed", wa.seed, "Master seed")->required();
    sweep->add_option("--K", wa.K, "Loss penalty");
    sweep->add_option("--jobs", wa.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sweep->add_option("--idle-kernel", wa.idle, "reset or baseline")->check(CLI::IsMember({"reset", "baseline"}));
    sweep->add_option("--costs", wa.costs, "JSON file with a costs block (default: packaged rates)");
    sweep->add_option("--lambda", wa.lambda, "Discharge probabilities per type");
    sweep->add_option("--num-facilities,--num_facilities", wa.num_facilities, "Must match the cost matrix width");
    sweep->add_option("--out", wa.out, "Output CSV (default stdout)");
    sweep->add_option("--summary", wa.summary, "Summary JSON");

    SimulateArgs ma;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimate of a policy's average cost");
    simulate->add_option("--instance", ma.instance, "Instance JSON")->required();
    simulate->add_option("--policy", ma.policy, "myopic, rpr, two_step, optimal or a policy JSON file");
    simulate->add_option("--w", ma.w, "Two-step lookahead weight")->check(CLI::Range(1e-12, 1.0));
    simulate->add_option("--horizon", ma.horizon, "Periods simulated");
    simulate->add_option("--burn-in", ma.burn_in, "Periods discarded");
    simulate->add_option("--seed", ma.seed, "RNG seed");
    simulate->add_option("--out", ma.out, "Output JSON (default stdout)");

    EstimateArgs ea;
    auto* estimate = app.add_subcommand("estimate", "Estimate readmission rates from discharge records");
    estimate->add_option("--data", ea.data, "Discharge CSV")->required();
    auto* cov_opt = estimate->add_option("--covariates", ea.covariates, "Covariate columns (default all)");
    cov_opt->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    estimate->add_option("--bootstrap", ea.bootstrap, "Bootstrap replicates (0 = none, else >= 100)");
    estimate->add_option("--seed", ea.seed, "Bootstrap seed");
    estimate->add_option("--jobs", ea.jobs, "Worker threads")->check(CLI::PositiveNumber);
    estimate->add_option("--profile", ea.profile, "JSON object of reference covariate values");
    estimate->add_option("--out", ea.out, "Output JSON (default stdout)");

    ServeArgs va;
    auto* serve = app.add_subcommand("serve", "Run the HTTP advisor");
    serve->add_option("--instance", va.instance, "Instance JSON")->required();
    serve->add_option("--host", va.host, "Bind address");
    serve->add_option("--port", va.port, "Port")->check(CLI::Range(0, 65535));
    serve->add_option("--w", va.w, "Two-step lookahead weight")->check(CLI::Range(1e-12, 1.0));
    serve->add_flag("--solve", va.solve, "Solve the optimal policy at startup");
    serve->add_option("--decision-log", va.decision_log, "Append recommendations to this CSV");

    std::vector<const char*> cargv;
    for (const auto& s : args) cargv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }
    ea.covariates_given = cov_opt->count() > 0;

    try {
        if (*solve) return run_solve(sa);
        if (*compare) return run_compare(ca);
        if (*sweep) return run_sweep_cmd(wa);
        if (*simulate) return run_simulate(ma);
        if (*estimate) return run_estimate(ea);
        if (*serve) return run_serve(va);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitInput;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const SolverError& e) {
        std::cerr << "computation failed: " << e.what() << "\n";
        return kExitSolver;
    } catch (const json::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitInput;
}
