#pragma once

// JSON forms of policies, solve results, score breakdowns, simulation
// estimates, rate tables and scenario specs. Policies are written as action
// tables keyed by the "(i,s_1,..,s_l)" state strings.

#include <string>

#include <json.hpp>

#include "snfmdp/estimate.hpp"
#include "snfmdp/instance_io.hpp"
#include "snfmdp/policies.hpp"
#include "snfmdp/scenario.hpp"
#include "snfmdp/simulate.hpp"
#include "snfmdp/solve.hpp"

namespace snfmdp {

inline json policy_to_json(const Instance& inst, const Policy& policy) {
    const StateSpace space(inst);
    json actions = json::object();
    for (std::size_t n = 0; n < space.size(); ++n) actions[space.key(space.decode(n))] = policy.actions[n];
    json j{{"provenance", to_string(policy.kind)}, {"actions", actions}};
    if (policy.kind == PolicyKind::two_step) j["weight"] = policy.weight;
    return j;
}

/// Reads an action table; every state must be present.
inline Policy policy_from_json(const Instance& inst, const json& j) {
    const StateSpace space(inst);
    if (!j.is_object() || !j.contains("actions") || !j.at("actions").is_object())
        throw InputError("policy: expected an object with an \"actions\" table");
    Policy p;
    const std::string prov = j.value("provenance", std::string("custom"));
    p.kind = policy_kind_from_string(prov).value_or(PolicyKind::custom);
    p.weight = j.value("weight", 0.0);
    p.actions.resize(space.size());
    const json& table = j.at("actions");
    for (std::size_t n = 0; n < space.size(); ++n) {
        const std::string key = space.key(space.decode(n));
        if (!table.contains(key)) throw InputError("policy: no action for state " + key);
        if (!table.at(key).is_number_integer()) throw InputError("policy: action for state " + key + " is not an integer");
        p.actions[n] = table.at(key).get<int>();
    }
    check_policy(inst, p);
    return p;
}

inline json solve_result_to_json(const Instance& inst, const SolveResult& r) {
    const StateSpace space(inst);
    json j;
    j["criterion"] = r.criterion == Criterion::average ? "average" : "discounted";
    if (r.criterion == Criterion::discounted) {
        j["alpha"] = r.alpha;
        json v = json::object();
        for (std::size_t n = 0; n < space.size(); ++n) v[space.key(space.decode(n))] = r.value[n];
        j["v"] = v;
    } else {
        j["g"] = r.gain;
        json h = json::object();
        for (std::size_t n = 0; n < space.size(); ++n) h[space.key(space.decode(n))] = r.value[n];
        j["h"] = h;
    }
    j["policy"] = policy_to_json(inst, r.policy);
    j["iterations"] = r.iterations;
    j["residual"] = r.residual;
    j["method"] = r.method;
    return j;
}

inline json score_breakdown_to_json(const Instance& inst, const ScoreBreakdown& b) {
    const StateSpace space(inst);
    json actions = json::array();
    for (const ActionScore& s : b.actions)
        actions.push_back({{"action", s.action},
                           {"facility", inst.facility_label(s.action)},
                           {"immediate", s.immediate},
                           {"lookahead", s.lookahead},
                           {"total", s.total}});
    json j{{"state", space.key(b.state)}, {"heuristic", to_string(b.heuristic)}, {"actions", actions}, {"chosen", b.chosen}};
    if (b.heuristic == Heuristic::two_step) j["weight"] = b.weight;
    return j;
}

inline json simulation_to_json(const SimulationEstimate& e) {
    return {{"mean", e.mean},     {"std_error", e.std_error}, {"horizon", e.horizon}, {"burn_in", e.burn_in},
            {"seed", e.seed},     {"batches", e.batches},     {"rng", e.rng}};
}

inline json rate_table_to_json(const RateTable& t) {
    json j;
    j["types"] = t.type_levels;
    j["facilities"] = t.snf_levels;
    j["rates"] = t.rates;
    j["lower"] = t.lower;
    j["upper"] = t.upper;
    j["profile"] = t.profile;
    if (t.bootstrap_replicates > 0) {
        j["bootstrap_replicates"] = t.bootstrap_replicates;
        j["bootstrap_failures"] = t.bootstrap_failures;
    }
    // drop-in for the instance file's costs block, rows = patient types
    j["costs"] = t.rates;
    return j;
}

inline ScenarioSpec scenario_spec_from_json(const json& j) {
    if (!j.is_object()) throw InputError("scenario spec must be a JSON object");
    ScenarioSpec s;
    try {
        s.scenario = j.value("scenario", s.scenario);
        s.beta = j.value("beta", s.beta);
        s.gamma = j.value("gamma", s.gamma);
        s.delta = j.value("delta", s.delta);
        s.seed = j.value("seed", s.seed);
        s.num_facilities = j.value("num_facilities", s.num_facilities);
    } catch (const json::exception& e) {
        throw InputError(std::string("scenario spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline json scenario_spec_to_json(const ScenarioSpec& s) {
    return {{"scenario", s.scenario}, {"beta", s.beta},   {"gamma", s.gamma},
            {"delta", s.delta},       {"seed", s.seed},   {"num_facilities", s.num_facilities}};
}

inline json sweep_summary_to_json(const SweepSummary& s) {
    return {{"instances", s.instances},
            {"failures", s.failures},
            {"fraction_rpr_le_myopic", s.fraction_rpr_le_myopic},
            {"gap_pct_vs_optimal", {{"mean_myopic", s.mean_gap_myopic_pct},
                                    {"mean_rpr", s.mean_gap_rpr_pct},
                                    {"max_myopic", s.max_gap_myopic_pct},
                                    {"max_rpr", s.max_gap_rpr_pct}}},
            {"gap_pct_vs_heuristic", {{"mean_myopic", s.mean_gap_myopic_pct_heuristic_base},
                                      {"mean_rpr", s.mean_gap_rpr_pct_heuristic_base}}}};
}

}  // namespace snfmdp
