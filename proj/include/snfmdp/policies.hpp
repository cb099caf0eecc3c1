#pragma once

// Heuristic transfer policies (myopic r, r+pr, two-step r+wpr+w²p²r),
// structural condition checks, and operation counting.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "snfmdp/model.hpp"
#include "snfmdp/solve.hpp"

namespace snfmdp {

enum class Heuristic { myopic, rpr, two_step };

inline std::string to_string(Heuristic h) {
    switch (h) {
        case Heuristic::myopic: return "myopic";
        case Heuristic::rpr: return "rpr";
        case Heuristic::two_step: return "two_step";
    }
    return "myopic";
}

struct ActionScore {
    int action = 0;
    double immediate = 0.0;
    std::vector<double> lookahead;  // rpr: {E1}; two_step: {w E1, w^2 E2}
    double total = 0.0;
};

struct ScoreBreakdown {
    SystemState state;
    Heuristic heuristic = Heuristic::myopic;
    double weight = 0.0;
    std::vector<ActionScore> actions;
    int chosen = 0;
};

// ---------------------------------------------------------------------------
// Myopic

/// Lowest-cost available real facility for the patient at x, 0 if none.
/// `evaluations`, when given, is incremented once per action in A(x) considered.
inline int myopic_action(const Instance& inst, const SystemState& x, std::size_t* evaluations = nullptr) {
    if (evaluations) ++*evaluations;  // the loss action
    if (x.patient == 0) return 0;
    const StateSpace space(inst);
    int best = 0;
    double best_cost = 0.0;
    for (int j = 1; j <= inst.num_facilities(); ++j) {
        if (!space.available(x, j) || !inst.allowed(x.patient, j)) continue;
        if (evaluations) ++*evaluations;
        const double c = inst.cost(x.patient, j);
        if (best == 0 || c < best_cost) {
            best = j;
            best_cost = c;
        }
    }
    return best;
}

inline Policy myopic_policy(const Instance& inst, std::size_t* evaluations = nullptr) {
    const StateSpace space(inst);
    Policy p;
    p.kind = PolicyKind::myopic;
    p.actions.resize(space.size());
    for (std::size_t n = 0; n < space.size(); ++n) p.actions[n] = myopic_action(inst, space.decode(n), evaluations);
    return p;
}

/// m(x') = min over A(x') of r, per state: 0 for patient 0, K if nothing is available.
inline std::vector<double> myopic_costs(const Instance& inst) {
    const StateSpace space(inst);
    std::vector<double> m(space.size());
    for (std::size_t n = 0; n < space.size(); ++n) {
        const SystemState x = space.decode(n);
        double best = inst.cost(x.patient, 0);
        for (int a : feasible_actions(inst, x)) best = std::min(best, inst.cost(x.patient, a));
        m[n] = best;
    }
    return m;
}

// ---------------------------------------------------------------------------
// r + pr

namespace detail {

/// L[a][s] = sum_{s'} T_a(s,s') sum_{i'} lambda_{i'} m(i', s').
inline std::vector<std::vector<double>> rpr_lookahead(const Instance& inst) {
    return expected_next_values(inst, myopic_costs(inst));
}

template <class Score>
Policy argmin_policy(const Instance& inst, PolicyKind kind, double weight, Score&& score) {
    const StateSpace space(inst);
    Policy p;
    p.kind = kind;
    p.weight = weight;
    p.actions.resize(space.size());
    for (std::size_t n = 0; n < space.size(); ++n) {
        const SystemState x = space.decode(n);
        int arg = -1;
        double best = 0.0;
        for (int a : feasible_actions(inst, x)) {
            const double s = score(x, a);
            if (arg < 0 || s < best) {
                best = s;
                arg = a;
            }
        }
        p.actions[n] = arg;
    }
    return p;
}

}  // namespace detail

/// Score r^a_i + sum_{x'} lambda_{i'} T_a(s,s') m(x'), summed directly over
/// every next state.
inline ActionScore rpr_score(const Instance& inst, const SystemState& x, int a) {
    require_feasible(inst, x, a);
    const StateSpace space(inst);
    const auto m = myopic_costs(inst);
    double look = 0.0;
    for (const Transition& t : kernel(inst, x, a)) look += t.prob * m[space.encode(t.next)];
    ActionScore s;
    s.action = a;
    s.immediate = inst.cost(x.patient, a);
    s.lookahead = {look};
    s.total = s.immediate + look;
    return s;
}

inline Policy rpr_policy(const Instance& inst) {
    const auto L = detail::rpr_lookahead(inst);
    return detail::argmin_policy(inst, PolicyKind::rpr, 0.0, [&](const SystemState& x, int a) {
        return inst.cost(x.patient, a) + L[static_cast<std::size_t>(a)][x.avail];
    });
}

// ---------------------------------------------------------------------------
// Two-step

namespace detail {

struct TwoStepTerms {
    std::vector<std::vector<double>> first;   // E1[a][s]
    std::vector<std::vector<double>> second;  // E2[a][s]
};

/// E1 as in r+pr. E2[a][s] = E over x' ~ (a, s) of L[a'(x')][s'], a'(x') the
/// myopic action at x'.
inline TwoStepTerms two_step_terms(const Instance& inst) {
    const StateSpace space(inst);
    TwoStepTerms t;
    t.first = rpr_lookahead(inst);
    std::vector<double> rollout(space.size());
    for (std::size_t n = 0; n < space.size(); ++n) {
        const SystemState x = space.decode(n);
        rollout[n] = t.first[static_cast<std::size_t>(myopic_action(inst, x))][x.avail];
    }
    t.second = expected_next_values(inst, rollout);
    return t;
}

inline void require_weight(double w) {
    if (!(w > 0.0 && w <= 1.0)) throw InputError("two-step weight w must lie in (0,1]");
}

}  // namespace detail

inline Policy two_step_policy(const Instance& inst, double w) {
    detail::require_weight(w);
    const auto t = detail::two_step_terms(inst);
    return detail::argmin_policy(inst, PolicyKind::two_step, w, [&](const SystemState& x, int a) {
        const auto aa = static_cast<std::size_t>(a);
        return inst.cost(x.patient, a) + w * t.first[aa][x.avail] + w * w * t.second[aa][x.avail];
    });
}

// ---------------------------------------------------------------------------
// Explanations

inline ScoreBreakdown explain(const Instance& inst, const SystemState& x, Heuristic h, double w = 1.0) {
    if (h == Heuristic::two_step) detail::require_weight(w);
    ScoreBreakdown out;
    out.state = x;
    out.heuristic = h;
    out.weight = h == Heuristic::two_step ? w : 0.0;
    std::optional<detail::TwoStepTerms> terms;
    if (h != Heuristic::myopic) terms = detail::two_step_terms(inst);
    int arg = -1;
    double best = 0.0;
    for (int a : feasible_actions(inst, x)) {
        ActionScore s;
        s.action = a;
        s.immediate = inst.cost(x.patient, a);
        const auto aa = static_cast<std::size_t>(a);
        if (h == Heuristic::rpr) s.lookahead = {terms->first[aa][x.avail]};
        if (h == Heuristic::two_step) s.lookahead = {w * terms->first[aa][x.avail], w * w * terms->second[aa][x.avail]};
        s.total = s.immediate;
        for (double term : s.lookahead) s.total += term;
        out.actions.push_back(s);
    }
    if (h == Heuristic::myopic) {
        out.chosen = myopic_action(inst, x);
        return out;
    }
    for (const ActionScore& s : out.actions) {
        if (arg < 0 || s.total < best) {
            best = s.total;
            arg = s.action;
        }
    }
    out.chosen = arg;
    return out;
}

// ---------------------------------------------------------------------------
// Structural conditions

/// True iff P[a][j] = P[a'][j] (tol 1e-12) for all actions a, a' in 0..l and
/// facilities j >= 1.
inline bool check_myopic_optimality_condition(const Instance& inst) {
    const int l = inst.num_facilities();
    for (int j = 1; j <= l; ++j)
        for (int a = 1; a <= l; ++a)
            for (int s = 0; s < 2; ++s)
                for (int t = 0; t < 2; ++t)
                    if (std::abs(inst.kernel(a, j)[s][t] - inst.kernel(0, j)[s][t]) > 1e-12) return false;
    return true;
}

/// The threshold inequality for moving from x to x' (fewer facilities available, same
/// patient type, a* keeps its availability): for every a' in A(x') and every
/// target s'', prod p^{a*}_{s',s''} - prod p^{a'}_{s',s''} <= prod p^{a*}_{s,s''} - prod p^{a'}_{s,s''}.
inline bool check_threshold_condition(const Instance& inst, const SystemState& x, int a_star,
                                      const SystemState& x_prime) {
    const StateSpace space(inst);
    const int l = inst.num_facilities();
    if (x.patient != x_prime.patient)
        throw InputError("threshold condition: patient types differ (" + std::to_string(x.patient) + " vs " +
                         std::to_string(x_prime.patient) + ")");
    if (a_star < 0 || a_star > l) throw InputError("threshold condition: a* = " + std::to_string(a_star) + " out of range");
    if (space.available(x, a_star) != space.available(x_prime, a_star))
        throw InputError("threshold condition: s_" + std::to_string(a_star) + " differs between x and x'");
    for (int j = 1; j <= l; ++j)
        if (!space.available(x, j) && space.available(x_prime, j))
            throw InputError("threshold condition: s_" + std::to_string(j) + " < s'_" + std::to_string(j));
    const std::size_t codes = space.num_codes();
    for (int ap : feasible_actions(inst, x_prime)) {
        if (ap == a_star) continue;
        for (std::size_t target = 0; target < codes; ++target) {
            const auto to = static_cast<std::uint32_t>(target);
            const double lhs = availability_prob(inst, a_star, x_prime.avail, to) - availability_prob(inst, ap, x_prime.avail, to);
            const double rhs = availability_prob(inst, a_star, x.avail, to) - availability_prob(inst, ap, x.avail, to);
            if (lhs > rhs + 1e-12) return false;
        }
    }
    return true;
}

struct ThresholdViolation {
    SystemState x;
    SystemState x_prime;
    int a_star = 0;
    double q_a_star = 0.0;  // optimality-equation value of a* at x'
    double q_best = 0.0;    // minimum over A(x')
};

struct ThresholdReport {
    std::size_t pairs_checked = 0;    // pairs meeting the preconditions
    std::size_t condition_held = 0;   // of those, pairs where the threshold inequality holds
    std::vector<ThresholdViolation> violations;
};

/// For every pair (x, x') meeting the preconditions with policy(x) = a* >= 1
/// and the threshold inequality holding, checks that a* attains the minimum of the
/// optimality equation at x' within tol.
inline ThresholdReport verify_threshold_structure(const Instance& inst, const SolveResult* result, double tol = 1e-8) {
    if (result == nullptr) throw InputError("verify_threshold_structure requires a solved instance");
    const StateSpace space(inst);
    if (result->value.size() != space.size() || result->policy.actions.size() != space.size())
        throw InputError("solve result does not match the instance");
    const double alpha = result->criterion == Criterion::average ? 1.0 : result->alpha;
    const auto next = expected_next_values(inst, result->value);
    auto q = [&](const SystemState& x, int a) {
        return inst.cost(x.patient, a) + alpha * next[static_cast<std::size_t>(a)][x.avail];
    };
    double scale = 1.0;
    for (double v : result->value) scale = std::max(scale, std::abs(v));

    ThresholdReport report;
    for (std::size_t n = 0; n < space.size(); ++n) {
        const SystemState x = space.decode(n);
        const int a_star = result->policy.actions[n];
        if (x.patient == 0 || a_star == 0) continue;
        for (std::uint32_t c = 0; c < space.num_codes(); ++c) {
            // s' <= s componentwise, s'_{a*} = s_{a*} = 1, s' != s
            if ((c & ~x.avail) != 0 || c == x.avail) continue;
            const SystemState xp{x.patient, c};
            if (!space.available(xp, a_star)) continue;
            ++report.pairs_checked;
            if (!check_threshold_condition(inst, x, a_star, xp)) continue;
            ++report.condition_held;
            double best = 0.0;
            bool first = true;
            for (int a : feasible_actions(inst, xp)) {
                const double v = q(xp, a);
                if (first || v < best) best = v;
                first = false;
            }
            const double qa = q(xp, a_star);
            if (qa > best + tol * scale) report.violations.push_back({x, xp, a_star, qa, best});
        }
    }
    return report;
}

inline ThresholdReport verify_threshold_structure(const Instance& inst, const SolveResult& result, double tol = 1e-8) {
    return verify_threshold_structure(inst, &result, tol);
}

// ---------------------------------------------------------------------------
// Operation counts

struct OpCounter {
    std::size_t score_evaluations = 0;
    std::size_t M = 0;  // sum over states of |A(x)|
    std::size_t num_states = 0;
    std::size_t num_codes = 0;
};

inline std::size_t total_feasible_actions(const Instance& inst) {
    std::size_t m = 0;
    for (const SystemState& x : enumerate_states(inst)) m += feasible_actions(inst, x).size();
    return m;
}

/// r+pr by direct enumeration: for every (x, a), every next state x' and every
/// a' in A(x'), one score term. Counts each term evaluated.
inline Policy rpr_policy_enumerated(const Instance& inst, OpCounter* counter = nullptr) {
    const StateSpace space(inst);
    std::vector<std::vector<int>> actions(space.size());
    for (std::size_t n = 0; n < space.size(); ++n) actions[n] = feasible_actions(inst, space.decode(n));
    std::size_t count = 0;
    Policy p = detail::argmin_policy(inst, PolicyKind::rpr, 0.0, [&](const SystemState& x, int a) {
        double look = 0.0;
        for (std::size_t np = 0; np < space.size(); ++np) {
            const SystemState xp = space.decode(np);
            const double prob = inst.discharge_prob(xp.patient) * availability_prob(inst, a, x.avail, xp.avail);
            double inner = 0.0;
            bool first = true;
            for (int ap : actions[np]) {
                ++count;
                const double r = inst.cost(xp.patient, ap);
                if (first || r < inner) inner = r;
                first = false;
            }
            look += prob * inner;
        }
        return inst.cost(x.patient, a) + look;
    });
    if (counter) counter->score_evaluations += count;
    return p;
}

inline OpCounter count_operations(const Instance& inst, Heuristic h) {
    const StateSpace space(inst);
    OpCounter c;
    c.M = total_feasible_actions(inst);
    c.num_states = space.size();
    c.num_codes = space.num_codes();
    switch (h) {
        case Heuristic::myopic:
            myopic_policy(inst, &c.score_evaluations);
            break;
        case Heuristic::rpr:
            rpr_policy_enumerated(inst, &c);
            break;
        case Heuristic::two_step:
            throw InputError("operation counting is implemented for myopic and rpr only");
    }
    return c;
}

}  // namespace snfmdp
