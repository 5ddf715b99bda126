#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "cvar/errors.hpp"
#include "cvar/mdp.hpp"
#include "cvar/oracle.hpp"
#include "cvar/policy.hpp"
#include "cvar/pwl.hpp"
#include "cvar/solver.hpp"
#include "cvar/verification.hpp"

namespace {

using namespace cvar;

// Parses a model file; random-cost documents are expanded to their product
// model so every command downstream sees a plain spec.
MdpSpec load_model(const std::string& path) {
    ParsedSpec parsed = parse_spec_file(path);
    if (std::holds_alternative<MdpSpec>(parsed)) return std::get<MdpSpec>(parsed);
    return augment_random_costs(std::get<RandomCostSpec>(parsed));
}

void check_tables_hash(const ValueTables& tables, const std::string& mdp_path) {
    if (mdp_path.empty()) return;
    const MdpSpec spec = load_model(mdp_path);
    if (spec_hash(spec) != tables.hash)
        throw ValidationError("tables were built from a different model than " + mdp_path +
                              " (hash " + tables.hash + " vs " + spec_hash(spec) + ")");
}

int state_arg(const MdpSpec& spec, const std::string& name) {
    const int x = initial_augmented_state(spec, name);
    if (x < 0) throw ValidationError("unknown state '" + name + "'");
    return x;
}

RiskObjective parse_mode(const std::string& mode) {
    if (mode == "pure-cvar") return RiskObjective::pure_cvar;
    if (mode == "mean-plus-alpha-cvar") return RiskObjective::mean_plus_alpha_cvar;
    if (mode == "mean-plus-cvar") return RiskObjective::mean_plus_cvar;
    throw ValidationError("unknown mode '" + mode +
                          "' (expected pure-cvar, mean-plus-alpha-cvar, or mean-plus-cvar)");
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write to " + path);
    out << text;
}

struct SolveArgs {
    std::string mdp_path;
    std::string out_path;
    int horizon = -1;
    bool infinite = false;
    double epsilon = 1e-6;
    long segment_cap = 1000000;
};

void cmd_solve(const SolveArgs& a) {
    if (a.infinite == (a.horizon >= 0))
        throw ValidationError("choose exactly one of --horizon and --infinite");
    const MdpSpec spec = load_model(a.mdp_path);
    SolveOptions opt;
    opt.segment_cap = a.segment_cap;
    const ValueTables tables = a.infinite ? solve_infinite(spec, a.epsilon, opt)
                                          : solve_finite(spec, a.horizon, opt);
    write_output(a.out_path, serialize_tables(tables));
    std::size_t max_segments = 0;
    for (const StageTable& stage : tables.stages) {
        for (const PwlConcave& f : stage.V) max_segments = std::max(max_segments, f.segments().size());
        for (const auto& row : stage.Q)
            for (const PwlConcave& f : row) max_segments = std::max(max_segments, f.segments().size());
    }
    std::cout << std::setprecision(12);
    std::cout << "stages " << tables.stages.size() << "\n";
    std::cout << "max_segments " << max_segments << "\n";
    if (tables.convergence) {
        std::cout << "iterations " << tables.convergence->iterations << "\n";
        std::cout << "error_bound " << tables.convergence->error_bound << "\n";
    }
}

struct ValueArgs {
    std::string tables_path;
    std::string mdp_path;
    std::string state;
    std::string mode = "pure-cvar";
    double alpha = 1.0;
};

void cmd_value(const ValueArgs& a) {
    const ValueTables tables = load_tables_file(a.tables_path);
    check_tables_hash(tables, a.mdp_path);
    const int x = state_arg(tables.spec, a.state);
    const RiskObjective mode = parse_mode(a.mode);
    if (!(a.alpha >= 0 && a.alpha <= 1))
        throw ValidationError("alpha must lie in [0, 1]");
    double value;
    if (a.alpha == 0 && mode != RiskObjective::mean_plus_alpha_cvar) {
        // The tables' model is the cost-shifted one, so its game value needs
        // the recorded offsets removed to speak about the original model.
        const std::vector<double> game = worst_path_value(tables.spec, tables.horizon);
        value = game[static_cast<std::size_t>(x)] - tables.shift.offset_cvar -
                tables.shift.offset_mean;
    } else {
        value = cvar_value(tables, x, a.alpha, mode);
    }
    std::cout << std::setprecision(12) << value << "\n";
}

struct PolicyArgs {
    std::string tables_path;
    std::string mdp_path;
    std::string state;
    std::string trace;
    std::string out_path;
    std::string side = "right";
    double alpha = 1.0;
    bool simulate = false;
    std::uint64_t seed = 0;
    int episodes = 1;
};

void cmd_policy(const PolicyArgs& a) {
    const ValueTables tables = load_tables_file(a.tables_path);
    check_tables_hash(tables, a.mdp_path);
    if (!(a.alpha > 0 && a.alpha <= 1))
        throw ValidationError("alpha must lie in (0, 1] for the online policy");
    if (a.trace.empty() == !a.simulate)
        throw ValidationError("choose exactly one of --trace and --simulate");
    DerivativeSide side;
    if (a.side == "right")
        side = DerivativeSide::right;
    else if (a.side == "left")
        side = DerivativeSide::left;
    else
        throw ValidationError("unknown side '" + a.side + "' (expected right or left)");

    if (!a.trace.empty()) {
        std::istringstream in(a.trace);
        std::vector<int> states;
        for (std::string name; in >> name;) states.push_back(state_arg(tables.spec, name));
        if (states.empty()) throw ValidationError("--trace needs at least the start state");
        if (!a.state.empty() && states.front() != state_arg(tables.spec, a.state))
            throw ValidationError("--state disagrees with the first state of --trace");
        const std::vector<TraceRow> rows = run_trajectory(tables, a.alpha, side, states);
        write_output(a.out_path, trace_to_csv(tables, rows));
        return;
    }

    if (a.state.empty()) throw ValidationError("--simulate needs --state");
    if (a.episodes <= 0) throw ValidationError("--episodes must be positive");
    const int x0 = state_arg(tables.spec, a.state);
    std::mt19937_64 master(a.seed);
    std::vector<std::pair<double, double>> atoms;
    for (int e = 0; e < a.episodes; ++e) {
        const std::vector<TraceRow> rows = run_trajectory_random(tables, x0, a.alpha, side,
                                                                 master());
        atoms.emplace_back(rows.back().cum_cost, 1.0 / a.episodes);
    }
    std::sort(atoms.begin(), atoms.end());
    oracle::OutcomeDistribution dist;
    for (const auto& [cost, prob] : atoms) {
        if (!dist.atoms.empty() && std::fabs(dist.atoms.back().first - cost) <= 1e-12)
            dist.atoms.back().second += prob;
        else
            dist.atoms.emplace_back(cost, prob);
    }
    double mean = 0;
    for (const auto& [cost, prob] : dist.atoms) mean += cost * prob;
    std::ostringstream os;
    os << std::setprecision(12);
    os << "episodes " << a.episodes << "\n";
    os << "empirical_mean " << mean << "\n";
    os << "empirical_cvar " << oracle::cvar_of_distribution(dist, a.alpha) << "\n";
    write_output(a.out_path, os.str());
}

struct ExportArgs {
    std::string tables_path;
    std::string state;
    std::string out_path;
    int stage = -1;
};

void cmd_export_pwl(const ExportArgs& a) {
    const ValueTables tables = load_tables_file(a.tables_path);
    const int x = state_arg(tables.spec, a.state);
    const int stage = a.stage < 0 ? tables.final_stage() : a.stage;
    if (stage > tables.final_stage())
        throw ValidationError("stage " + std::to_string(stage) + " out of range [0, " +
                              std::to_string(tables.final_stage()) + "]");
    write_output(a.out_path, to_csv(tables.V(stage, x)));
}

struct VerifyArgs {
    std::string mdp_path;
    bool random = false;
    int count = 20;
    std::uint64_t seed = 1;
    int horizon = 3;
    std::vector<double> alphas = {0.1, 0.25, 0.5, 0.75, 1.0};
    int jobs = 0;
};

// Runs a check, downgrading resource-guard violations to a skip.
template <typename Fn>
verify::CheckResult guarded(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const GuardError& e) {
        verify::CheckResult r;
        r.name = name;
        r.skipped = true;
        r.detail = e.what();
        return r;
    }
}

// Folds a per-instance result into the running aggregate for its check.
void fold(std::vector<verify::CheckResult>& agg, const verify::CheckResult& r, int instance) {
    for (verify::CheckResult& a : agg) {
        if (a.name != r.name) continue;
        a.cases += r.cases;
        a.max_err = std::max(a.max_err, r.max_err);
        a.skipped = a.skipped && r.skipped;
        if (!r.pass && a.pass) {
            a.pass = false;
            a.detail = "instance " + std::to_string(instance) + ": " + r.detail;
        }
        return;
    }
    verify::CheckResult first = r;
    if (!first.pass)
        first.detail = "instance " + std::to_string(instance) + ": " + first.detail;
    agg.push_back(std::move(first));
}

std::vector<verify::CheckResult> verify_one_instance(std::uint64_t seed, int horizon,
                                                     const std::vector<double>& alphas) {
    oracle::RandomSpecOptions opt;
    opt.horizon = horizon;
    opt.with_mean_costs = seed % 3 == 2;
    const MdpSpec spec = oracle::random_spec(seed, opt);
    const auto mode = opt.with_mean_costs ? oracle::ObjectiveMode::mean_plus_alpha_cvar
                                          : oracle::ObjectiveMode::pure_cvar;
    std::vector<verify::CheckResult> out;
    verify::ShapeAudit audit;
    out.push_back(guarded("solver vs exhaustive policy search", [&] {
        return verify::check_oracle_agreement({spec}, horizon, alphas, mode, &audit);
    }));
    out.push_back(guarded("runner-induced policy achieves the solved value", [&] {
        return verify::check_runner_optimality({spec}, horizon, alphas, mode, &audit);
    }));
    out.push_back(guarded("runner tracks the adversary's true tail-risk path", [&] {
        return verify::check_nature_consistency({spec}, horizon, alphas, &audit);
    }));
    out.push_back(audit.result());
    return out;
}

int cmd_verify(const VerifyArgs& a) {
    if (a.random == !a.mdp_path.empty())
        throw ValidationError("choose exactly one of --mdp and --random");
    for (double alpha : a.alphas)
        if (!(alpha > 0 && alpha <= 1))
            throw ValidationError("--alphas entries must lie in (0, 1]");
    if (a.horizon <= 0) throw ValidationError("--horizon must be positive");

    std::vector<verify::CheckResult> report;
    if (!a.mdp_path.empty()) {
        const MdpSpec spec = load_model(a.mdp_path);
        const auto mode = spec.mean_channel_zero() ? oracle::ObjectiveMode::pure_cvar
                                                   : oracle::ObjectiveMode::mean_plus_alpha_cvar;
        verify::ShapeAudit audit;
        report.push_back(guarded("solver vs exhaustive policy search", [&] {
            return verify::check_oracle_agreement({spec}, a.horizon, a.alphas, mode, &audit);
        }));
        report.push_back(guarded("runner-induced policy achieves the solved value", [&] {
            return verify::check_runner_optimality({spec}, a.horizon, a.alphas, mode, &audit);
        }));
        report.push_back(guarded("runner tracks the adversary's true tail-risk path", [&] {
            return verify::check_nature_consistency({spec}, a.horizon, a.alphas, &audit);
        }));
        report.push_back(audit.result());
    } else {
        if (a.count <= 0) throw ValidationError("--count must be positive");
        const int jobs = a.jobs > 0 ? a.jobs
                                    : std::max(1u, std::thread::hardware_concurrency());
        std::vector<std::vector<verify::CheckResult>> per_instance(
            static_cast<std::size_t>(a.count));
        for (int base = 0; base < a.count; base += jobs) {
            const int top = std::min(a.count, base + jobs);
            std::vector<std::future<std::vector<verify::CheckResult>>> wave;
            for (int i = base; i < top; ++i)
                wave.push_back(std::async(std::launch::async, verify_one_instance,
                                          a.seed + static_cast<std::uint64_t>(i), a.horizon,
                                          a.alphas));
            for (int i = base; i < top; ++i)
                per_instance[static_cast<std::size_t>(i)] = wave[static_cast<std::size_t>(
                    i - base)].get();
        }
        for (int i = 0; i < a.count; ++i)
            for (const verify::CheckResult& r : per_instance[static_cast<std::size_t>(i)])
                fold(report, r, i);

        const int small = std::min(a.count, 10);
        report.push_back(guarded("adversarial best response derivatives", [&] {
            return verify::check_transfer_derivatives(a.count, 20, a.seed * 1009);
        }));
        report.push_back(guarded("adversarial best response vs grid search", [&] {
            return verify::check_transfer_grid(small, 1e-3, 1e-2, a.seed * 2003);
        }));
        report.push_back(guarded("boundary risk levels", [&] {
            std::vector<MdpSpec> pure;
            oracle::RandomSpecOptions opt;
            opt.horizon = a.horizon;
            for (int i = 0; i < small; ++i)
                pure.push_back(oracle::random_spec(a.seed + 1000 + static_cast<std::uint64_t>(i),
                                                   opt));
            return verify::check_boundary_consistency(pure, a.horizon);
        }));
        report.push_back(guarded("infinite-horizon contraction", [&] {
            return verify::check_contraction(small, 0.1, a.seed * 3001);
        }));
        report.push_back(guarded("random edge-cost expansion", [&] {
            return verify::check_random_cost_augmentation(small, a.horizon, a.seed * 4001);
        }));
    }

    bool failed = false;
    for (const verify::CheckResult& r : report) {
        std::cout << verify::format_result(r) << "\n";
        failed = failed || (!r.pass && !r.skipped);
    }
    std::cout << (failed ? "verification FAILED" : "verification ok") << "\n";
    return failed ? 5 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact mean-CVaR optimization for finite discounted MDPs"};
    app.require_subcommand(1);
    int exit_code = 0;

    SolveArgs solve_args;
    CLI::App* solve = app.add_subcommand("solve", "Solve a model and write its value tables");
    solve->add_option("--mdp", solve_args.mdp_path, "Model file (JSON)")->required();
    solve->add_option("--horizon", solve_args.horizon, "Number of decision epochs");
    solve->add_flag("--infinite", solve_args.infinite, "Iterate to the discounted fixed point");
    solve->add_option("--epsilon", solve_args.epsilon,
                      "Accuracy of the fixed point (with --infinite)");
    solve->add_option("--segment-cap", solve_args.segment_cap,
                      "Abort when a stage stores more segments than this");
    solve->add_option("--out", solve_args.out_path, "Output tables file")->required();
    solve->callback([&] { cmd_solve(solve_args); });

    ValueArgs value_args;
    CLI::App* value = app.add_subcommand("value", "Query the objective value at a risk level");
    value->add_option("--tables", value_args.tables_path, "Tables file from solve")->required();
    value->add_option("--mdp", value_args.mdp_path, "Refuse tables not built from this model");
    value->add_option("--state", value_args.state, "Start state name")->required();
    value->add_option("--alpha", value_args.alpha, "Risk level in [0, 1]")->required();
    value->add_option("--mode", value_args.mode,
                      "pure-cvar | mean-plus-alpha-cvar | mean-plus-cvar");
    value->callback([&] { cmd_value(value_args); });

    PolicyArgs policy_args;
    CLI::App* policy = app.add_subcommand(
        "policy", "Run the online optimal policy along a trace or by simulation");
    policy->add_option("--tables", policy_args.tables_path, "Tables file from solve")->required();
    policy->add_option("--mdp", policy_args.mdp_path, "Refuse tables not built from this model");
    policy->add_option("--state", policy_args.state, "Start state name");
    policy->add_option("--alpha", policy_args.alpha, "Risk level in (0, 1]")->required();
    policy->add_option("--side", policy_args.side, "Derivative side seeding: right | left");
    policy->add_option("--trace", policy_args.trace,
                       "Space-separated state names of an observed trajectory");
    policy->add_flag("--simulate", policy_args.simulate, "Sample trajectories from the model");
    policy->add_option("--seed", policy_args.seed, "Simulation seed");
    policy->add_option("--episodes", policy_args.episodes, "Simulation episode count");
    policy->add_option("--out", policy_args.out_path, "Write output here instead of stdout");
    policy->callback([&] { cmd_policy(policy_args); });

    ExportArgs export_args;
    CLI::App* exp = app.add_subcommand("export-pwl", "Dump a value function as CSV breakpoints");
    exp->add_option("--tables", export_args.tables_path, "Tables file from solve")->required();
    exp->add_option("--state", export_args.state, "State name")->required();
    exp->add_option("--stage", export_args.stage, "Steps to go (default: the start stage)");
    exp->add_option("--out", export_args.out_path, "Write output here instead of stdout");
    exp->callback([&] { cmd_export_pwl(export_args); });

    VerifyArgs verify_args;
    CLI::App* ver = app.add_subcommand("verify", "Cross-check the solver against the oracles");
    ver->add_option("--mdp", verify_args.mdp_path, "Check this model file");
    ver->add_flag("--random", verify_args.random, "Check randomly generated models");
    ver->add_option("--count", verify_args.count, "Number of random instances");
    ver->add_option("--seed", verify_args.seed, "Base seed for random instances");
    ver->add_option("--horizon", verify_args.horizon, "Decision epochs per instance");
    ver->add_option("--alphas", verify_args.alphas, "Risk levels in (0, 1]")->delimiter(',');
    ver->add_option("--jobs", verify_args.jobs, "Concurrent instances (default: hardware)");
    ver->callback([&] { exit_code = cmd_verify(verify_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const GuardError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const TraceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
