#pragma once

// Exact solution of the discounted and average-cost problems and exact
// evaluation of stationary deterministic policies.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snfmdp/model.hpp"

namespace snfmdp {

enum class PolicyKind { optimal, myopic, rpr, two_step, custom };

inline std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::optimal: return "optimal";
        case PolicyKind::myopic: return "myopic";
        case PolicyKind::rpr: return "rpr";
        case PolicyKind::two_step: return "two_step";
        case PolicyKind::custom: return "custom";
    }
    return "custom";
}

inline std::optional<PolicyKind> policy_kind_from_string(const std::string& s) {
    if (s == "optimal") return PolicyKind::optimal;
    if (s == "myopic") return PolicyKind::myopic;
    if (s == "rpr") return PolicyKind::rpr;
    if (s == "two_step") return PolicyKind::two_step;
    if (s == "custom") return PolicyKind::custom;
    return std::nullopt;
}

/// Stationary deterministic policy, one action per state in enumerate_states order.
struct Policy {
    std::vector<int> actions;
    PolicyKind kind = PolicyKind::custom;
    double weight = 0.0;  // lookahead weight w, two_step only

    int operator()(std::size_t state_index) const { return actions[state_index]; }
    int at(const StateSpace& space, const SystemState& x) const { return actions[space.encode(x)]; }
    std::string tag() const {
        if (kind == PolicyKind::two_step) return "two_step(" + std::to_string(weight) + ")";
        return to_string(kind);
    }
};

/// Throws InputError unless the policy is total and feasible at every state.
inline void check_policy(const Instance& inst, const Policy& policy) {
    const StateSpace space(inst);
    if (policy.actions.size() != space.size())
        throw InputError("policy has " + std::to_string(policy.actions.size()) + " actions, expected " +
                         std::to_string(space.size()));
    for (std::size_t n = 0; n < space.size(); ++n) require_feasible(inst, space.decode(n), policy.actions[n]);
}

enum class Criterion { discounted, average };

struct SolveResult {
    Criterion criterion = Criterion::average;
    double alpha = 1.0;
    std::vector<double> value;  // v_alpha (discounted) or bias h with h(x_ref) = 0 (average)
    double gain = 0.0;          // average criterion only
    Policy policy;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> gain_history;  // policy iteration: gain of each evaluated policy
    std::string method;
};

struct AverageEvaluation {
    double gain = 0.0;
    std::vector<double> bias;
};

// ---------------------------------------------------------------------------
// Helpers

/// Q(x, a) = r^a_i + alpha * E[v(X') | x, a] for every feasible action at x.
struct ActionValue {
    int action = 0;
    double immediate = 0.0;
    double future = 0.0;
    double total = 0.0;
};

inline std::vector<ActionValue> action_values(const Instance& inst, std::span<const double> v, double alpha,
                                              const SystemState& x) {
    const auto mixed = mix_over_patients(inst, v);
    std::vector<ActionValue> out;
    for (int a : feasible_actions(inst, x)) {
        const auto row = availability_row(inst, a, x.avail);
        double future = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) future += row[c] * mixed[c];
        const double r = inst.cost(x.patient, a);
        out.push_back({a, r, alpha * future, r + alpha * future});
    }
    return out;
}

/// Dense transition matrix of the chain under a fixed policy.
inline Eigen::MatrixXd policy_transition_matrix(const Instance& inst, const Policy& policy) {
    const StateSpace space(inst);
    const auto n = static_cast<Eigen::Index>(space.size());
    const std::size_t codes = space.num_codes();
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t x = 0; x < space.size(); ++x) {
        const SystemState s = space.decode(x);
        const auto row = availability_row(inst, policy.actions[x], s.avail);
        for (int ip = 0; ip <= inst.num_types(); ++ip) {
            const double lam = inst.discharge_prob(ip);
            for (std::size_t c = 0; c < codes; ++c)
                P(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(static_cast<std::size_t>(ip) * codes + c)) =
                    lam * row[c];
        }
    }
    return P;
}

inline std::vector<double> policy_costs(const Instance& inst, const Policy& policy) {
    const StateSpace space(inst);
    std::vector<double> r(space.size());
    for (std::size_t x = 0; x < space.size(); ++x) r[x] = inst.cost(space.decode(x).patient, policy.actions[x]);
    return r;
}

/// Closed communicating classes of the chain with transition matrix P
/// (strongly connected components with no edge leaving them).
inline std::vector<std::vector<std::size_t>> closed_classes(const Eigen::MatrixXd& P) {
    const auto n = static_cast<std::size_t>(P.rows());
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y)
            if (P(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) > 0.0) adj[x].push_back(y);

    // Iterative Tarjan.
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    int counter = 0;
    int ncomp = 0;
    struct Frame {
        std::size_t node;
        std::size_t edge;
    };
    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] >= 0) continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            Frame& f = call.back();
            if (f.edge < adj[f.node].size()) {
                const std::size_t w = adj[f.node][f.edge++];
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.node] = std::min(low[f.node], index[w]);
                }
            } else {
                const std::size_t v = f.node;
                if (low[v] == index[v]) {
                    std::size_t w = 0;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = false;
                        comp[w] = ncomp;
                    } while (w != v);
                    ++ncomp;
                }
                call.pop_back();
                if (!call.empty()) low[call.back().node] = std::min(low[call.back().node], low[v]);
            }
        }
    }
    std::vector<bool> leaves(static_cast<std::size_t>(ncomp), false);
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y : adj[x])
            if (comp[x] != comp[y]) leaves[static_cast<std::size_t>(comp[x])] = true;
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(ncomp));
    for (std::size_t x = 0; x < n; ++x) members[static_cast<std::size_t>(comp[x])].push_back(x);
    std::vector<std::vector<std::size_t>> closed;
    for (int c = 0; c < ncomp; ++c)
        if (!leaves[static_cast<std::size_t>(c)]) closed.push_back(members[static_cast<std::size_t>(c)]);
    std::sort(closed.begin(), closed.end());
    return closed;
}

namespace detail {

inline std::string describe_classes(const StateSpace& space, const std::vector<std::vector<std::size_t>>& classes) {
    std::string out;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        out += (c ? "; " : "") + std::string("{");
        const std::size_t shown = std::min<std::size_t>(classes[c].size(), 6);
        for (std::size_t m = 0; m < shown; ++m) out += (m ? " " : "") + space.key(space.decode(classes[c][m]));
        if (classes[c].size() > shown) out += " ... (" + std::to_string(classes[c].size()) + " states)";
        out += "}";
    }
    return out;
}

inline double sup_norm_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) m = std::max(m, std::abs(a[n] - b[n]));
    return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Policy evaluation

/// Solves g + h = r_f + P_f h with h(x_ref) = 0, x_ref the first enumerated state.
/// Throws SolverError when the policy has more than one closed class.
inline AverageEvaluation evaluate_policy_average(const Instance& inst, const Policy& policy) {
    check_policy(inst, policy);
    const StateSpace space(inst);
    const Eigen::MatrixXd P = policy_transition_matrix(inst, policy);
    const auto classes = closed_classes(P);
    if (classes.size() != 1)
        throw SolverError("policy " + policy.tag() + " is multichain; closed classes: " +
                          detail::describe_classes(space, classes));
    const auto n = P.rows();
    const auto r = policy_costs(inst, policy);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - P;
    A.col(0).setOnes();  // column of h(x_ref) = 0 now carries g
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(r.data(), n);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    Eigen::VectorXd z = lu.solve(b);
    z += lu.solve(b - A * z);  // one step of iterative refinement
    const double resid = (A * z - b).lpNorm<Eigen::Infinity>();
    if (!std::isfinite(resid) || resid > 1e-8 * std::max(1.0, b.lpNorm<Eigen::Infinity>()))
        throw SolverError("policy evaluation system is singular for policy " + policy.tag());
    AverageEvaluation out;
    out.gain = z(0);
    out.bias.assign(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index x = 1; x < n; ++x) out.bias[static_cast<std::size_t>(x)] = z(x);
    return out;
}

/// Solves v = r_f + alpha P_f v.
inline std::vector<double> evaluate_policy_discounted(const Instance& inst, const Policy& policy, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw InputError("alpha must lie in [0,1)");
    check_policy(inst, policy);
    const Eigen::MatrixXd P = policy_transition_matrix(inst, policy);
    const auto n = P.rows();
    const auto r = policy_costs(inst, policy);
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - alpha * P;
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(r.data(), n);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    Eigen::VectorXd v = lu.solve(b);
    for (int refine = 0; refine < 3; ++refine) v += lu.solve(b - A * v);
    return {v.data(), v.data() + n};
}

// ---------------------------------------------------------------------------
// Discounted problem

struct ValueIterationOptions {
    double tol = 1e-8;
    long max_iterations = 1'000'000;
};

/// Value iteration with a constant-shift extrapolation: once the span of
/// Tv - v is small, v is shifted by mid(Tv - v)/(1 - alpha), which leaves a
/// Bellman residual of half that span. Returns v with ||v - Tv|| <= tol.
inline SolveResult value_iteration_discounted(const Instance& inst, double alpha, ValueIterationOptions opt = {}) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw InputError("alpha must lie in [0,1)");
    if (!(opt.tol > 0.0)) throw InputError("tol must be positive");
    const StateSpace space(inst);
    std::vector<double> v(space.size(), 0.0);
    SolveResult out;
    out.criterion = Criterion::discounted;
    out.alpha = alpha;
    out.method = "value_iteration";
    for (long it = 1; it <= opt.max_iterations; ++it) {
        BellmanResult t = bellman_apply(inst, v, alpha);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t n = 0; n < v.size(); ++n) {
            const double d = t.value[n] - v[n];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        if (std::max(std::abs(lo), std::abs(hi)) <= opt.tol || (hi - lo) / 2.0 <= opt.tol * 0.5) {
            std::vector<double> candidate = t.value;
            if (alpha > 0.0) {
                const double shift = alpha * (lo + hi) / 2.0 / (1.0 - alpha);
                for (double& x : candidate) x += shift;
            }
            BellmanResult check = bellman_apply(inst, candidate, alpha);
            const double resid = detail::sup_norm_diff(check.value, candidate);
            if (resid <= opt.tol) {
                out.value = std::move(candidate);
                out.policy = {std::move(check.greedy), PolicyKind::optimal, 0.0};
                out.iterations = static_cast<int>(it);
                out.residual = resid;
                return out;
            }
        }
        v = std::move(t.value);
    }
    throw SolverError("value iteration did not converge within " + std::to_string(opt.max_iterations) + " iterations");
}

// ---------------------------------------------------------------------------
// Average-cost problem

struct AverageSolveOptions {
    double tol = 1e-9;
    int max_iterations = 1000;
    /// With more facilities than this, policy iteration hands over to relative value iteration.
    int dense_facility_limit = 12;
    std::optional<Policy> initial_policy;
};

/// max_x |g + h(x) - (Th)(x)|
inline double average_residual(const Instance& inst, double gain, std::span<const double> bias) {
    const BellmanResult t = bellman_apply(inst, bias, 1.0);
    double m = 0.0;
    for (std::size_t n = 0; n < bias.size(); ++n) m = std::max(m, std::abs(gain + bias[n] - t.value[n]));
    return m;
}

/// Relative value iteration with aperiodicity transform h <- h + tau (Th - h).
inline SolveResult relative_value_iteration_average(const Instance& inst, AverageSolveOptions opt = {}) {
    const StateSpace space(inst);
    constexpr double tau = 0.5;
    std::vector<double> h(space.size(), 0.0);
    SolveResult out;
    out.criterion = Criterion::average;
    out.method = "relative_value_iteration";
    const long cap = std::max<long>(opt.max_iterations, 1'000'000);
    for (long it = 1; it <= cap; ++it) {
        const BellmanResult t = bellman_apply(inst, h, 1.0);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t n = 0; n < h.size(); ++n) {
            const double d = t.value[n] - h[n];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        if ((hi - lo) / 2.0 <= opt.tol) {
            out.gain = (lo + hi) / 2.0;
            const double ref = h[0];
            for (double& x : h) x -= ref;
            out.value = h;
            out.policy = {bellman_apply(inst, h, 1.0).greedy, PolicyKind::optimal, 0.0};
            out.iterations = static_cast<int>(std::min<long>(it, std::numeric_limits<int>::max()));
            out.residual = average_residual(inst, out.gain, out.value);
            return out;
        }
        for (std::size_t n = 0; n < h.size(); ++n) h[n] += tau * (t.value[n] - h[n]);
        const double shift = h[0];
        for (double& x : h) x -= shift;
    }
    throw SolverError("relative value iteration did not converge");
}

/// Howard policy iteration with exact gain/bias evaluation. Starts from the
/// myopic-style greedy policy for zero bias unless an initial policy is given;
/// switches an action only on strict improvement > 1e-10.
inline SolveResult policy_iteration_average(const Instance& inst, AverageSolveOptions opt = {}) {
    if (!(opt.tol > 0.0)) throw InputError("tol must be positive");
    const StateSpace space(inst);
    if (inst.num_facilities() > opt.dense_facility_limit) return relative_value_iteration_average(inst, opt);

    Policy policy;
    if (opt.initial_policy) {
        policy = *opt.initial_policy;
        check_policy(inst, policy);
    } else {
        policy.actions = bellman_apply(inst, std::vector<double>(space.size(), 0.0), 0.0).greedy;
    }
    policy.kind = PolicyKind::optimal;
    policy.weight = 0.0;

    SolveResult out;
    out.criterion = Criterion::average;
    out.method = "policy_iteration";
    constexpr double kSwitch = 1e-10;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const AverageEvaluation ev = evaluate_policy_average(inst, policy);
        out.gain_history.push_back(ev.gain);
        const auto next = expected_next_values(inst, ev.bias);
        bool changed = false;
        for (std::size_t n = 0; n < space.size(); ++n) {
            const SystemState x = space.decode(n);
            const int current = policy.actions[n];
            const double q_current = inst.cost(x.patient, current) + next[static_cast<std::size_t>(current)][x.avail];
            int best = current;
            double q_best = q_current;
            for (int a : feasible_actions(inst, x)) {
                const double q = inst.cost(x.patient, a) + next[static_cast<std::size_t>(a)][x.avail];
                if (q < q_best) {
                    q_best = q;
                    best = a;
                }
            }
            if (best != current && q_best < q_current - kSwitch) {
                policy.actions[n] = best;
                changed = true;
            }
        }
        if (!changed) {
            out.gain = ev.gain;
            out.value = ev.bias;
            out.policy = policy;
            out.iterations = it;
            out.residual = average_residual(inst, ev.gain, ev.bias);
            if (out.residual > opt.tol * std::max(1.0, std::abs(ev.gain)))
                throw SolverError("policy iteration stopped with optimality residual " + std::to_string(out.residual));
            return out;
        }
    }
    throw SolverError("policy iteration exceeded " + std::to_string(opt.max_iterations) + " iterations");
}

}  // namespace snfmdp
