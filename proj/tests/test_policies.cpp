#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "snfmdp/policies.hpp"
#include "snfmdp/solve.hpp"

using namespace snfmdp;

namespace {

SystemState st(const Instance& inst, int i, std::vector<int> bits) { return {i, StateSpace(inst).pack(bits)}; }

// Plain nested-loop oracle over the full next-state distribution.
double min_cost_at(const Instance& inst, const SystemState& x) {
    double best = inst.cost(x.patient, 0);
    for (int a : feasible_actions(inst, x)) best = std::min(best, inst.cost(x.patient, a));
    return best;
}

double rpr_oracle(const Instance& inst, const SystemState& x, int a) {
    double look = 0.0;
    for (const Transition& t : kernel(inst, x, a)) look += t.prob * min_cost_at(inst, t.next);
    return inst.cost(x.patient, a) + look;
}

int myopic_oracle(const Instance& inst, const SystemState& x) {
    int best = 0;
    for (int a : feasible_actions(inst, x))
        if (a != 0 && (best == 0 || inst.cost(x.patient, a) < inst.cost(x.patient, best))) best = a;
    return best;
}

double two_step_oracle(const Instance& inst, const SystemState& x, int a, double w) {
    double e1 = 0.0;
    double e2 = 0.0;
    for (const Transition& t : kernel(inst, x, a)) {
        e1 += t.prob * min_cost_at(inst, t.next);
        const int a1 = myopic_oracle(inst, t.next);
        for (const Transition& u : kernel(inst, t.next, a1)) e2 += t.prob * u.prob * min_cost_at(inst, u.next);
    }
    return inst.cost(x.patient, a) + w * e1 + w * w * e2;
}

int argmin(const Instance& inst, const SystemState& x, const std::function<double(int)>& f) {
    int arg = -1;
    double best = 0.0;
    for (int a : feasible_actions(inst, x)) {
        const double v = f(a);
        if (arg < 0 || v < best) {
            arg = a;
            best = v;
        }
    }
    return arg;
}

}  // namespace

TEST(Myopic, TwoFacilityExamplesPublishedTables) {
    // Columns (i,s1,s2) in enumeration order; both examples share costs.
    const std::vector<int> expected{0, 0, 0, 0, 0, 2, 1, 1, 0, 2, 1, 2};
    EXPECT_EQ(myopic_policy(fixtures::example1()).actions, expected);
    EXPECT_EQ(myopic_policy(fixtures::example2()).actions, expected);
}

TEST(Myopic, ReferenceCaseTable) {
    const json j = read_json_file(fixtures::data_path("reference_case5.json"));
    const Instance inst = load_instance(fixtures::data_path("study_case5.json"));
    const StateSpace space(inst);
    const Policy m = myopic_policy(inst);
    std::size_t rows = 0;
    for (const auto& row : j.at("policy_table").at("rows")) {
        std::vector<int> bits;
        for (int c = 1; c <= 5; ++c) bits.push_back(row.at(static_cast<std::size_t>(c)).get<int>());
        const SystemState x{row.at(0).get<int>(), space.pack(bits)};
        EXPECT_EQ(m.actions[space.encode(x)], row.at(6).get<int>()) << space.key(x);
        ++rows;
    }
    EXPECT_EQ(rows, 128u);
}

TEST(Myopic, MatchesOracleOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Instance inst = fixtures::random_instance(seed);
        const Policy p = myopic_policy(inst);
        const StateSpace space(inst);
        for (std::size_t n = 0; n < space.size(); ++n) EXPECT_EQ(p.actions[n], myopic_oracle(inst, space.decode(n)));
    }
}

TEST(Rpr, FastScoresMatchBruteForce) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Instance inst = fixtures::random_instance(seed);
        const StateSpace space(inst);
        const Policy p = rpr_policy(inst);
        const Policy q = rpr_policy_enumerated(inst);
        EXPECT_EQ(p.actions, q.actions);
        for (std::size_t n = 0; n < space.size(); ++n) {
            const SystemState x = space.decode(n);
            for (int a : feasible_actions(inst, x)) EXPECT_NEAR(rpr_score(inst, x, a).total, rpr_oracle(inst, x, a), 1e-10);
            EXPECT_EQ(p.actions[n], argmin(inst, x, [&](int a) { return rpr_oracle(inst, x, a); }));
        }
    }
}

TEST(Rpr, PrefersFacilityThatStaysAvailable) {
    const Instance inst = fixtures::example2();
    const SystemState x = st(inst, 1, {1, 1});
    EXPECT_LT(rpr_score(inst, x, 2).total, rpr_score(inst, x, 1).total);
    EXPECT_EQ(rpr_policy(inst).actions[StateSpace(inst).encode(x)], 2);
    EXPECT_EQ(myopic_policy(inst).actions[StateSpace(inst).encode(x)], 1);
}

TEST(Rpr, ActionIndependentKernelsReduceToMyopic) {
    fixtures::RandomOptions o;
    o.action_independent = true;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Instance inst = fixtures::random_instance(seed, o);
        EXPECT_EQ(rpr_policy(inst).actions, myopic_policy(inst).actions);
        EXPECT_EQ(two_step_policy(inst, 0.7).actions, myopic_policy(inst).actions);
    }
}

TEST(TwoStep, MatchesNestedOracle) {
    fixtures::RandomOptions o;
    o.min_types = o.max_types = 2;
    o.min_facilities = o.max_facilities = 2;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const Instance inst = fixtures::random_instance(seed, o);
        const StateSpace space(inst);
        for (double w : {0.3, 1.0}) {
            const Policy p = two_step_policy(inst, w);
            for (std::size_t n = 0; n < space.size(); ++n) {
                const SystemState x = space.decode(n);
                const auto br = explain(inst, x, Heuristic::two_step, w);
                for (const auto& s : br.actions)
                    EXPECT_NEAR(s.total, two_step_oracle(inst, x, s.action, w), 1e-10);
                EXPECT_EQ(p.actions[n], argmin(inst, x, [&](int a) { return two_step_oracle(inst, x, a, w); }));
            }
        }
    }
}

TEST(TwoStep, TinyWeightIsMyopic) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Instance inst = fixtures::random_instance(seed);
        EXPECT_EQ(two_step_policy(inst, 1e-9).actions, myopic_policy(inst).actions);
    }
}

TEST(TwoStep, WeightRange) {
    const Instance inst = fixtures::example1();
    EXPECT_THROW(two_step_policy(inst, 0.0), InputError);
    EXPECT_THROW(two_step_policy(inst, 1.5), InputError);
    EXPECT_NO_THROW(two_step_policy(inst, 1.0));
}

TEST(Explain, BreakdownTotalsAndChoicesMatchPolicies) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Instance inst = fixtures::random_instance(seed);
        const StateSpace space(inst);
        const Policy m = myopic_policy(inst);
        const Policy r = rpr_policy(inst);
        const Policy t = two_step_policy(inst, 0.5);
        for (std::size_t n = 0; n < space.size(); ++n) {
            const SystemState x = space.decode(n);
            const auto bm = explain(inst, x, Heuristic::myopic);
            const auto br = explain(inst, x, Heuristic::rpr);
            const auto bt = explain(inst, x, Heuristic::two_step, 0.5);
            EXPECT_EQ(bm.chosen, m.actions[n]);
            EXPECT_EQ(br.chosen, r.actions[n]);
            EXPECT_EQ(bt.chosen, t.actions[n]);
            ASSERT_EQ(br.actions.size(), feasible_actions(inst, x).size());
            for (const auto& s : br.actions) {
                ASSERT_EQ(s.lookahead.size(), 1u);
                EXPECT_NEAR(s.total, rpr_score(inst, x, s.action).total, 1e-12);
            }
            for (const auto& s : bt.actions) {
                ASSERT_EQ(s.lookahead.size(), 2u);
                EXPECT_DOUBLE_EQ(s.total, s.immediate + s.lookahead[0] + s.lookahead[1]);
            }
        }
    }
}

TEST(Threshold, ConditionHoldsForActionIndependentKernels) {
    // With P[a] identical for every a, both sides of the inequality are zero.
    fixtures::RandomOptions o;
    o.action_independent = true;
    o.min_facilities = 2;
    const Instance inst = fixtures::random_instance(4, o);
    const int l = inst.num_facilities();
    std::vector<int> all(static_cast<std::size_t>(l), 1);
    std::vector<int> fewer(all);
    fewer[1] = 0;
    EXPECT_TRUE(check_threshold_condition(inst, st(inst, 1, all), 1, st(inst, 1, fewer)));
}

TEST(Threshold, ConditionCanFail) {
    // Facility 2 strongly prefers to become available after a*=1 when it is
    // already available, but not when it was busy.
    InstanceData d = fixtures::two_facility_data(10.0);
    d.kernels[{1, 1}] = Mat2{{{0.5, 0.5}, {0.5, 0.5}}};
    d.kernels[{1, 2}] = Mat2{{{0.9, 0.1}, {0.1, 0.9}}};
    d.kernels[{2, 1}] = Mat2{{{0.5, 0.5}, {0.5, 0.5}}};
    d.kernels[{2, 2}] = Mat2{{{0.1, 0.9}, {0.9, 0.1}}};
    const Instance inst(d);
    EXPECT_FALSE(check_threshold_condition(inst, st(inst, 1, {1, 1}), 1, st(inst, 1, {1, 0})));
    EXPECT_TRUE(check_threshold_condition(inst, st(inst, 1, {1, 1}), 1, st(inst, 1, {1, 1})));
}

TEST(Threshold, PreconditionErrorsNameTheCoordinate) {
    const Instance inst = fixtures::example1();
    auto message = [&](const SystemState& x, int a, const SystemState& xp) {
        try {
            check_threshold_condition(inst, x, a, xp);
        } catch (const InputError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message(st(inst, 1, {1, 1}), 1, st(inst, 2, {1, 0})).find("patient"), std::string::npos);
    EXPECT_NE(message(st(inst, 1, {1, 1}), 1, st(inst, 1, {0, 1})).find("s_1"), std::string::npos);
    EXPECT_NE(message(st(inst, 1, {1, 0}), 1, st(inst, 1, {1, 1})).find("s_2"), std::string::npos);
}

TEST(Threshold, VerifierNeedsASolvedInstance) {
    EXPECT_THROW(verify_threshold_structure(fixtures::example1(), nullptr), InputError);
}

TEST(Threshold, StructureOnTwoFacilityExamples) {
    for (double K : {10.0, 100.0})
        for (const Instance& inst : {fixtures::example1(K), fixtures::example2(K)}) {
            const SolveResult res = policy_iteration_average(inst);
            const ThresholdReport rep = verify_threshold_structure(inst, res);
            EXPECT_GT(rep.pairs_checked, 0u);
            EXPECT_TRUE(rep.violations.empty());
        }
}

TEST(Counting, HandComputedSingleFacility) {
    InstanceData d;
    d.num_types = 1;
    d.num_facilities = 1;
    d.lambda = {0.5};
    d.loss_penalty = 10.0;
    d.costs = {{2.0}};
    d.kernels[{0, 1}] = Mat2{{{0.5, 0.5}, {0.5, 0.5}}};
    d.kernels[{1, 1}] = Mat2{{{0.7, 0.3}, {0.2, 0.8}}};
    const Instance inst(d);
    // |A(x)| over (0,0),(0,1),(1,0),(1,1) is 1,1,1,2.
    EXPECT_EQ(total_feasible_actions(inst), 5u);
    EXPECT_EQ(count_operations(inst, Heuristic::myopic).score_evaluations, 5u);
    EXPECT_EQ(count_operations(inst, Heuristic::rpr).score_evaluations, 25u);
    EXPECT_THROW(count_operations(inst, Heuristic::two_step), InputError);
}

TEST(Counting, MyopicLinearRprQuadratic) {
    fixtures::RandomOptions o;
    o.max_types = 4;
    o.max_facilities = 4;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Instance inst = fixtures::random_instance(seed, o);
        const auto m = count_operations(inst, Heuristic::myopic);
        const auto r = count_operations(inst, Heuristic::rpr);
        EXPECT_EQ(m.score_evaluations, m.M);
        EXPECT_EQ(r.score_evaluations, r.M * r.M);
    }
}

TEST(Counting, RestrictedTypeSetsCountOnlyFeasibleActions) {
    InstanceData d = fixtures::two_facility_data(10.0);
    d.feasible = {{2}, {1, 2}};
    for (int a = 1; a <= 2; ++a)
        for (int j = 1; j <= 2; ++j) d.kernels[{a, j}] = Mat2{{{0.4, 0.6}, {0.3, 0.7}}};
    const Instance inst(d);
    const auto m = count_operations(inst, Heuristic::myopic);
    EXPECT_EQ(m.score_evaluations, m.M);
    // patient 0: 4 x 1; type 1 (facility 2 only): 1+2+1+2; type 2: 1+2+2+3.
    EXPECT_EQ(m.M, 4u + 6u + 8u);
}
