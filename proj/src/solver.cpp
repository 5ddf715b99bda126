#include "cvar/solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cvar/errors.hpp"
#include "cvar/nature.hpp"
#include "cvar/tolerances.hpp"

namespace cvar {

using nlohmann::json;

namespace {

std::vector<PwlConcave> terminal_stage(const MdpSpec& spec) {
    std::vector<PwlConcave> v;
    v.reserve(static_cast<std::size_t>(spec.num_states()));
    for (int x = 0; x < spec.num_states(); ++x)
        v.push_back(PwlConcave::affine(spec.terminal_mean[static_cast<std::size_t>(x)],
                                       spec.terminal_cvar[static_cast<std::size_t>(x)], 1.0));
    return v;
}

long stage_segments(const StageTable& stage) {
    long n = 0;
    for (const auto& f : stage.V) n += static_cast<long>(f.segments().size());
    for (const auto& row : stage.Q)
        for (const auto& f : row) n += static_cast<long>(f.segments().size());
    return n;
}

void require_nonnegative(const MdpSpec& spec, const char* who) {
    if (!spec.nonnegative_costs())
        throw std::logic_error(std::string(who) + ": costs must be non-negative here");
}

}  // namespace

const PwlConcave& ValueTables::V(int stage, int x) const {
    const auto& s = horizon.infinite ? stages.front()
                                     : stages.at(static_cast<std::size_t>(stage));
    return s.V.at(static_cast<std::size_t>(x));
}

const PwlConcave& ValueTables::Q(int stage, int x, int a) const {
    const auto& s = horizon.infinite ? stages.front()
                                     : stages.at(static_cast<std::size_t>(stage));
    if (s.Q.empty()) throw std::logic_error("tables: stage has no action values");
    return s.Q.at(static_cast<std::size_t>(x)).at(static_cast<std::size_t>(a));
}

int ValueTables::final_stage() const { return horizon.infinite ? 0 : horizon.steps; }

StageTable backup(const MdpSpec& spec, const std::vector<PwlConcave>& prev,
                  const SolveOptions& options) {
    require_nonnegative(spec, "backup");
    if (static_cast<int>(prev.size()) != spec.num_states())
        throw std::invalid_argument("backup: one previous-stage function per state required");

    StageTable stage;
    stage.V.reserve(prev.size());
    stage.Q.resize(prev.size());
    for (int x = 0; x < spec.num_states(); ++x) {
        const auto xi = static_cast<std::size_t>(x);
        std::vector<PwlConcave> q_row;
        q_row.reserve(spec.transitions[xi].size());
        for (const auto& row : spec.transitions[xi]) {
            TransferInstance inst;
            for (const auto& t : row) {
                inst.probs.push_back(t.prob);
                inst.funcs.push_back(transform_successor(prev[static_cast<std::size_t>(t.to)],
                                                         t.mean_cost, t.cvar_cost,
                                                         spec.discount));
                inst.labels.push_back(t.to);
            }
            PwlConcave q = transfer_value(inst);
            if (options.simplify_slope_tol > 0) q = q.simplified(options.simplify_slope_tol);
            q_row.push_back(std::move(q));
        }
        stage.V.push_back(min_envelope(q_row));
        stage.Q[xi] = std::move(q_row);
    }
    const long segs = stage_segments(stage);
    if (segs > options.segment_cap)
        throw GuardError("backup: stage holds " + std::to_string(segs) +
                         " segments, cap is " + std::to_string(options.segment_cap) +
                         "; consider the lossy simplification option");
    return stage;
}

ValueTables solve_finite(const MdpSpec& spec, int horizon, const SolveOptions& options) {
    if (horizon < 1) throw ValidationError("solve: horizon must be at least 1");
    spec.validate();

    ValueTables tables;
    tables.hash = spec_hash(spec);
    tables.horizon = Horizon::finite(horizon);
    auto [shifted, shift] = shift_costs(spec, tables.horizon);
    tables.spec = std::move(shifted);
    tables.shift = shift;

    tables.stages.push_back(StageTable{terminal_stage(tables.spec), {}});
    for (int n = 1; n <= horizon; ++n)
        tables.stages.push_back(backup(tables.spec, tables.stages.back().V, options));
    return tables;
}

ValueTables solve_infinite(const MdpSpec& spec, double epsilon, const SolveOptions& options) {
    if (!(epsilon > 0)) throw ValidationError("solve: epsilon must be positive");
    if (!(spec.discount < 1))
        throw ValidationError("solve: infinite horizon requires discount < 1");
    spec.validate();

    ValueTables tables;
    tables.hash = spec_hash(spec);
    tables.horizon = Horizon::forever();
    auto [shifted, shift] = shift_costs(spec, tables.horizon);
    tables.spec = std::move(shifted);
    tables.shift = shift;

    const double beta = tables.spec.discount;
    const double stop = epsilon * (1.0 - beta) / beta;
    ConvergenceInfo info;
    info.epsilon = epsilon;

    std::vector<PwlConcave> prev(static_cast<std::size_t>(tables.spec.num_states()),
                                 PwlConcave::affine(0.0, 0.0, 1.0));
    for (int n = 1; n <= options.max_iterations; ++n) {
        StageTable stage = backup(tables.spec, prev, options);
        double delta = 0;
        for (int x = 0; x < tables.spec.num_states(); ++x)
            delta = std::max(delta,
                             sup_distance(stage.V[static_cast<std::size_t>(x)],
                                          prev[static_cast<std::size_t>(x)]));
        info.deltas.push_back(delta);
        info.iterations = n;
        prev = stage.V;
        if (delta <= stop) {
            info.error_bound = delta * beta / (1.0 - beta);
            tables.stages.push_back(std::move(stage));
            tables.convergence = info;
            return tables;
        }
    }
    throw GuardError("solve: no convergence within " + std::to_string(options.max_iterations) +
                     " iterations");
}

double cvar_value(const ValueTables& tables, int x, double alpha, RiskObjective mode,
                  const SolveOptions& options) {
    if (x < 0 || x >= tables.spec.num_states())
        throw std::invalid_argument("cvar_value: bad state index");
    const int top = tables.final_stage();
    switch (mode) {
        case RiskObjective::pure_cvar: {
            if (!(alpha > 0 && alpha <= 1))
                throw std::invalid_argument(
                    "cvar_value: pure objective needs alpha in (0, 1]; alpha = 0 is the "
                    "worst-path value");
            if (!tables.spec.mean_channel_zero() || tables.shift.mean_shift != 0)
                throw std::invalid_argument(
                    "cvar_value: pure objective requires a silent mean channel");
            return tables.V(top, x).eval(alpha) / alpha - tables.shift.offset_cvar;
        }
        case RiskObjective::mean_plus_alpha_cvar: {
            if (!(alpha >= 0 && alpha <= 1))
                throw std::invalid_argument("cvar_value: alpha outside [0, 1]");
            return tables.V(top, x).eval(alpha) -
                   (tables.shift.offset_mean + alpha * tables.shift.offset_cvar);
        }
        case RiskObjective::mean_plus_cvar: {
            if (!(alpha > 0 && alpha <= 1))
                throw std::invalid_argument(
                    "cvar_value: this objective needs alpha in (0, 1]; alpha = 0 is the "
                    "worst-path value");
            // Minimizing mean + CVaR equals minimizing alpha * mean + alpha * CVaR,
            // which is the scaled objective with the mean channel multiplied by alpha.
            MdpSpec scaled = tables.spec;
            for (auto& per_state : scaled.transitions)
                for (auto& row : per_state)
                    for (auto& t : row) t.mean_cost *= alpha;
            for (auto& v : scaled.terminal_mean) v *= alpha;
            const ValueTables redo =
                tables.horizon.infinite
                    ? solve_infinite(scaled, tables.convergence->epsilon, options)
                    : solve_finite(scaled, tables.horizon.steps, options);
            return redo.V(redo.final_stage(), x).eval(alpha) / alpha -
                   (tables.shift.offset_mean + tables.shift.offset_cvar);
        }
    }
    throw std::logic_error("cvar_value: unknown objective");
}

namespace {

std::vector<double> iterate_scalar_dp(
    const MdpSpec& spec, const Horizon& horizon, double epsilon,
    const std::function<double(const MdpSpec&, int, int, const std::vector<double>&)>& bellman,
    std::vector<double> terminal) {
    const double beta = spec.discount;
    std::vector<double> v = std::move(terminal);
    const auto sweep = [&](const std::vector<double>& cur) {
        std::vector<double> next(cur.size());
        for (int x = 0; x < spec.num_states(); ++x) {
            double best = std::numeric_limits<double>::infinity();
            for (int a = 0; a < spec.num_actions(x); ++a)
                best = std::min(best, bellman(spec, x, a, cur));
            next[static_cast<std::size_t>(x)] = best;
        }
        return next;
    };
    if (!horizon.infinite) {
        for (int n = 0; n < horizon.steps; ++n) v = sweep(v);
        return v;
    }
    if (!(beta < 1)) throw ValidationError("infinite horizon requires discount < 1");
    std::fill(v.begin(), v.end(), 0.0);
    const double stop = epsilon * (1.0 - beta) / beta;
    for (long n = 0; n < 1000000; ++n) {
        std::vector<double> next = sweep(v);
        double delta = 0;
        for (std::size_t i = 0; i < v.size(); ++i)
            delta = std::max(delta, std::fabs(next[i] - v[i]));
        v = std::move(next);
        if (delta <= stop) return v;
    }
    throw GuardError("scalar dynamic program failed to converge");
}

}  // namespace

std::vector<double> worst_path_value(const MdpSpec& spec, const Horizon& horizon,
                                     double epsilon) {
    auto [shifted, shift] = shift_costs(spec, horizon);
    std::vector<double> terminal(static_cast<std::size_t>(shifted.num_states()));
    for (int x = 0; x < shifted.num_states(); ++x)
        terminal[static_cast<std::size_t>(x)] =
            shifted.terminal_cvar[static_cast<std::size_t>(x)] +
            shifted.terminal_mean[static_cast<std::size_t>(x)];
    std::vector<double> v = iterate_scalar_dp(
        shifted, horizon, epsilon,
        [](const MdpSpec& m, int x, int a, const std::vector<double>& cur) {
            const auto& row =
                m.transitions[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
            double mean_part = 0;
            for (const auto& t : row) mean_part += t.prob * t.mean_cost;
            double worst = -std::numeric_limits<double>::infinity();
            for (const auto& t : row)
                worst = std::max(worst, t.cvar_cost + mean_part +
                                            m.discount * cur[static_cast<std::size_t>(t.to)]);
            return worst;
        },
        std::move(terminal));
    for (auto& val : v) val -= shift.offset_cvar + shift.offset_mean;
    return v;
}

std::vector<double> risk_neutral_value(const MdpSpec& spec, const Horizon& horizon,
                                       double epsilon) {
    auto [shifted, shift] = shift_costs(spec, horizon);
    std::vector<double> terminal(static_cast<std::size_t>(shifted.num_states()));
    for (int x = 0; x < shifted.num_states(); ++x)
        terminal[static_cast<std::size_t>(x)] =
            shifted.terminal_cvar[static_cast<std::size_t>(x)] +
            shifted.terminal_mean[static_cast<std::size_t>(x)];
    std::vector<double> v = iterate_scalar_dp(
        shifted, horizon, epsilon,
        [](const MdpSpec& m, int x, int a, const std::vector<double>& cur) {
            const auto& row =
                m.transitions[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
            double acc = 0;
            for (const auto& t : row)
                acc += t.prob * (t.cvar_cost + t.mean_cost +
                                 m.discount * cur[static_cast<std::size_t>(t.to)]);
            return acc;
        },
        std::move(terminal));
    for (auto& val : v) val -= shift.offset_cvar + shift.offset_mean;
    return v;
}

std::vector<int> optimal_action_set(const ValueTables& tables, int stage, int x, double y) {
    const double v = tables.V(stage, x).eval(y);
    std::vector<int> best;
    for (int a = 0; a < tables.spec.num_actions(x); ++a)
        if (tables.Q(stage, x, a).eval(y) <= v + tol::rel(tol::opt_rel, v)) best.push_back(a);
    if (best.empty()) throw std::logic_error("optimal_action_set: no action matches the value");
    return best;
}

namespace {

json pwl_to_rows(const PwlConcave& f) {
    json rows = json::array();
    for (double y : f.breakpoints())
        rows.push_back(json::array({y, f.eval(y), f.right_deriv(y)}));
    return rows;
}

PwlConcave rows_to_pwl(const json& rows) {
    if (!rows.is_array() || rows.size() < 2)
        throw ValidationError("tables: a value function needs at least two breakpoint rows");
    std::vector<Segment> segs;
    const double y0 = rows.front().at(0).get<double>();
    const double L = rows.back().at(0).get<double>();
    double prev = y0;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        const double y = rows[i].at(0).get<double>();
        const double next = rows[i + 1].at(0).get<double>();
        if (i > 0 && !(y > prev)) throw ValidationError("tables: breakpoints not increasing");
        segs.push_back(Segment{rows[i].at(2).get<double>(), next - y});
        prev = y;
    }
    PwlConcave f = PwlConcave::make(rows.front().at(1).get<double>(), std::move(segs), L - y0);
    for (const auto& row : rows) {
        const double y = row.at(0).get<double>(), val = row.at(1).get<double>();
        if (std::fabs(f.eval(y) - val) > tol::rel(1e-9, val))
            throw ValidationError("tables: breakpoint values inconsistent with slopes");
    }
    return f;
}

}  // namespace

std::string serialize_tables(const ValueTables& tables) {
    json doc;
    doc["format"] = "cvar-tables/1";
    doc["spec_hash"] = tables.hash;
    doc["discount"] = tables.spec.discount;
    if (tables.horizon.infinite)
        doc["horizon"] = "infinite";
    else
        doc["horizon"] = tables.horizon.steps;
    doc["cost_shift"] = {{"cvar_shift", tables.shift.cvar_shift},
                         {"mean_shift", tables.shift.mean_shift},
                         {"offset_cvar", tables.shift.offset_cvar},
                         {"offset_mean", tables.shift.offset_mean}};
    if (tables.convergence) {
        doc["error_bound"] = tables.convergence->error_bound;
        doc["epsilon"] = tables.convergence->epsilon;
        doc["iterations"] = tables.convergence->iterations;
        doc["deltas"] = tables.convergence->deltas;
    }
    doc["spec"] = json::parse(serialize_spec(tables.spec));

    json stages = json::array();
    for (const auto& stage : tables.stages) {
        json s;
        json v = json::object();
        for (int x = 0; x < tables.spec.num_states(); ++x)
            v[tables.spec.state_names[static_cast<std::size_t>(x)]] =
                pwl_to_rows(stage.V[static_cast<std::size_t>(x)]);
        s["V"] = v;
        if (!stage.Q.empty()) {
            json q = json::object();
            for (int x = 0; x < tables.spec.num_states(); ++x) {
                json per_action = json::object();
                for (int a = 0; a < tables.spec.num_actions(x); ++a)
                    per_action[tables.spec.action_names[static_cast<std::size_t>(x)]
                                                       [static_cast<std::size_t>(a)]] =
                        pwl_to_rows(stage.Q[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)]);
                q[tables.spec.state_names[static_cast<std::size_t>(x)]] = per_action;
            }
            s["Q"] = q;
        }
        stages.push_back(s);
    }
    doc["stages"] = stages;
    return doc.dump();
}

ValueTables load_tables(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("tables: invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != "cvar-tables/1")
        throw ValidationError("tables: unknown document format");

    ValueTables tables;
    tables.hash = doc.at("spec_hash").get<std::string>();
    if (doc.at("horizon").is_string()) {
        if (doc["horizon"].get<std::string>() != "infinite")
            throw ValidationError("tables: bad horizon");
        tables.horizon = Horizon::forever();
    } else {
        tables.horizon = Horizon::finite(doc["horizon"].get<int>());
    }
    const auto& cs = doc.at("cost_shift");
    tables.shift.cvar_shift = cs.at("cvar_shift").get<double>();
    tables.shift.mean_shift = cs.at("mean_shift").get<double>();
    tables.shift.offset_cvar = cs.at("offset_cvar").get<double>();
    tables.shift.offset_mean = cs.at("offset_mean").get<double>();
    if (doc.contains("error_bound")) {
        ConvergenceInfo info;
        info.error_bound = doc["error_bound"].get<double>();
        info.epsilon = doc.value("epsilon", 0.0);
        info.iterations = doc.value("iterations", 0);
        if (doc.contains("deltas")) info.deltas = doc["deltas"].get<std::vector<double>>();
        tables.convergence = info;
    }

    ParsedSpec parsed = parse_spec(doc.at("spec").dump());
    if (!std::holds_alternative<MdpSpec>(parsed))
        throw ValidationError("tables: embedded model must be fully expanded");
    tables.spec = std::get<MdpSpec>(std::move(parsed));

    for (const auto& s : doc.at("stages")) {
        StageTable stage;
        for (int x = 0; x < tables.spec.num_states(); ++x)
            stage.V.push_back(
                rows_to_pwl(s.at("V").at(tables.spec.state_names[static_cast<std::size_t>(x)])));
        if (s.contains("Q")) {
            stage.Q.resize(static_cast<std::size_t>(tables.spec.num_states()));
            for (int x = 0; x < tables.spec.num_states(); ++x) {
                const auto xi = static_cast<std::size_t>(x);
                const auto& per_action = s.at("Q").at(tables.spec.state_names[xi]);
                for (int a = 0; a < tables.spec.num_actions(x); ++a)
                    stage.Q[xi].push_back(rows_to_pwl(
                        per_action.at(tables.spec.action_names[xi][static_cast<std::size_t>(a)])));
            }
        }
        tables.stages.push_back(std::move(stage));
    }
    if (tables.stages.empty()) throw ValidationError("tables: no stages");
    if (!tables.horizon.infinite &&
        static_cast<int>(tables.stages.size()) != tables.horizon.steps + 1)
        throw ValidationError("tables: stage count does not match the horizon");
    return tables;
}

ValueTables load_tables_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("tables: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return load_tables(buf.str());
}

}  // namespace cvar
