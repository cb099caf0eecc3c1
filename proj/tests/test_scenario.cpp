#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "snfmdp/scenario.hpp"

using namespace snfmdp;

namespace {

BaselineSet baselines_from(const json& j) {
    BaselineSet b;
    for (const std::string& name : study_facility_labels()) b.push_back(j.at("baselines").at(name).get<Mat2>());
    return b;
}

bool same(const Mat2& a, const Mat2& b, double tol = 0.0) {
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t)
            if (std::abs(a[s][t] - b[s][t]) > tol) return false;
    return true;
}

BaselineSet fixed_baselines(int l = 5) { return sample_baselines(l, 99); }

}  // namespace

TEST(Scenarios, ReferenceCasesReproducePrintedKernels) {
    for (int c = 1; c <= 5; ++c) {
        const json j = read_json_file(fixtures::data_path("reference_case" + std::to_string(c) + ".json"));
        const KernelSet k = apply_scenario1(baselines_from(j), 0.2);
        std::size_t compared = 0;
        for (const auto& [key, value] : j.at("printed_kernels").items()) {
            const auto comma = key.find(',');
            const int a = std::stoi(key.substr(0, comma));
            const int jj = std::stoi(key.substr(comma + 1));
            EXPECT_TRUE(same(k.at({a, jj}), value.get<Mat2>(), 0.005)) << "case " << c << " kernel " << key;
            ++compared;
        }
        EXPECT_EQ(compared, 25u);
    }
}

TEST(Scenarios, UnitMultipliersLeaveBaselines) {
    const BaselineSet b = fixed_baselines();
    const KernelSet s1 = apply_scenario1(b, 1.0);
    const KernelSet s2 = apply_scenario2(b, 1.0, 1.0);
    const KernelSet s3 = apply_scenario3(b, 1.0, 1.0, 1.0);
    for (int a = 1; a <= 5; ++a)
        for (int j = 1; j <= 5; ++j) {
            EXPECT_EQ(s1.at({a, j}), b[static_cast<std::size_t>(j - 1)]);
            EXPECT_EQ(s2.at({a, j}), b[static_cast<std::size_t>(j - 1)]);
            EXPECT_EQ(s3.at({a, j}), b[static_cast<std::size_t>(j - 1)]);
        }
}

TEST(Scenarios, OnlyTheAvailableRowChanges) {
    const BaselineSet b = fixed_baselines();
    for (const KernelSet& k : {apply_scenario1(b, 0.3), apply_scenario2(b, 0.3, 4.0), apply_scenario3(b, 0.3, 4.0, 2.0)})
        for (int a = 1; a <= 5; ++a)
            for (int j = 1; j <= 5; ++j) {
                EXPECT_EQ(k.at({a, j})[0], b[static_cast<std::size_t>(j - 1)][0]);
                EXPECT_NEAR(k.at({a, j})[1][0] + k.at({a, j})[1][1], 1.0, 1e-15);
            }
}

TEST(Scenarios, IdleKernelChoice) {
    const BaselineSet b = fixed_baselines();
    const KernelSet reset = apply_scenario1(b, 0.5);
    const KernelSet base = apply_scenario1(b, 0.5, IdleKernel::baseline);
    for (int j = 1; j <= 5; ++j) {
        EXPECT_EQ(reset.at({0, j}), kAlwaysAvailable);
        EXPECT_EQ(base.at({0, j}), b[static_cast<std::size_t>(j - 1)]);
    }
}

TEST(Scenarios, ReceivingFacilityOnlyInScenarioOne) {
    const BaselineSet b = fixed_baselines();
    const KernelSet k = apply_scenario1(b, 0.2);
    for (int a = 1; a <= 5; ++a)
        for (int j = 1; j <= 5; ++j) {
            const double base = b[static_cast<std::size_t>(j - 1)][1][1];
            EXPECT_DOUBLE_EQ(k.at({a, j})[1][1], a == j ? 0.2 * base : base);
        }
}

TEST(Scenarios, NeighborhoodInScenarioTwo) {
    const BaselineSet b = fixed_baselines();
    const KernelSet k = apply_scenario2(b, 0.2, 5.0);
    std::set<int> changed;
    for (int j = 1; j <= 5; ++j)
        if (!same(k.at({4, j}), b[static_cast<std::size_t>(j - 1)])) changed.insert(j);
    EXPECT_EQ(changed, (std::set<int>{3, 4, 5}));
    for (int a = 1; a <= 5; ++a)
        for (int j = 1; j <= 5; ++j) {
            const double base = b[static_cast<std::size_t>(j - 1)][1][1];
            const double want = a == j ? 0.04 * base : (std::abs(a - j) == 1 ? 0.2 * base : base);
            EXPECT_NEAR(k.at({a, j})[1][1], want, 1e-15);
        }
}

TEST(Scenarios, SystemWideInScenarioThree) {
    const BaselineSet b = fixed_baselines();
    const KernelSet k = apply_scenario3(b, 0.5, 4.0, 2.0);
    for (int a = 1; a <= 5; ++a)
        for (int j = 1; j <= 5; ++j) {
            const double base = b[static_cast<std::size_t>(j - 1)][1][1];
            EXPECT_NEAR(k.at({a, j})[1][1], (a == j ? 0.25 : 0.5) * base, 1e-15);
        }
    // delta = gamma makes the receiving facility indistinguishable from the rest.
    const KernelSet flat = apply_scenario3(b, 0.5, 3.0, 3.0);
    for (int a = 1; a <= 5; ++a)
        for (int j = 1; j <= 5; ++j) EXPECT_NEAR(flat.at({a, j})[1][1], 0.5 * b[static_cast<std::size_t>(j - 1)][1][1], 1e-15);
}

TEST(Scenarios, ParameterValidation) {
    const BaselineSet b = fixed_baselines();
    EXPECT_THROW(apply_scenario1(b, 1.2), InputError);
    EXPECT_THROW(apply_scenario2(b, 0.5, 0.5), InputError);
    EXPECT_THROW(apply_scenario3(b, 0.5, 2.0, 3.0), InputError);
    EXPECT_THROW(apply_scenario3(b, 0.5, 2.0, 0.5), InputError);
    ScenarioSpec s;
    s.scenario = 4;
    EXPECT_THROW(s.validate(), InputError);
    EXPECT_THROW(apply_scenario1(BaselineSet{}, 0.5), InputError);
}

TEST(Scenarios, ActionIndependentWhenUnscaledWithBaselineIdle) {
    const BaselineSet b = fixed_baselines(3);
    const Instance inst = make_instance(apply_scenario1(b, 1.0, IdleKernel::baseline), {{5, 6, 7}, {8, 3, 4}},
                                        {0.3, 0.3}, 50.0);
    EXPECT_TRUE(check_myopic_optimality_condition(inst));
    const Instance reset = make_instance(apply_scenario1(b, 1.0), {{5, 6, 7}, {8, 3, 4}}, {0.3, 0.3}, 50.0);
    EXPECT_FALSE(check_myopic_optimality_condition(reset));
}

TEST(Baselines, DeterministicPerSeed) {
    const BaselineSet a = sample_baselines(5, 42);
    const BaselineSet b = sample_baselines(5, 42);
    const BaselineSet c = sample_baselines(5, 43);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    for (const Mat2& m : a) {
        EXPECT_GT(m[0][0], 0.0);
        EXPECT_LT(m[0][0], 1.0);
        EXPECT_GT(m[1][1], 0.0);
        EXPECT_LT(m[1][1], 1.0);
    }
}

TEST(Baselines, UniformDrawsCoverUnitInterval) {
    std::mt19937_64 gen(1);
    double lo = 1.0;
    double hi = 0.0;
    double sum = 0.0;
    constexpr int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = uniform01(gen);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    EXPECT_LT(lo, 1e-3);
    EXPECT_GT(hi, 1.0 - 1e-3);
    EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Baselines, DerivedSeedsAreDistinct) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(7, i));
    EXPECT_EQ(seen.size(), 10000u);
    EXPECT_NE(derive_seed(7, 0), derive_seed(8, 0));
}

TEST(Neighbors, LineTopology) {
    EXPECT_EQ(neighbors(1, 5), (std::vector<int>{2}));
    EXPECT_EQ(neighbors(3, 5), (std::vector<int>{2, 4}));
    EXPECT_EQ(neighbors(5, 5), (std::vector<int>{4}));
    EXPECT_TRUE(neighbors(1, 1).empty());
    EXPECT_THROW(neighbors(6, 5), InputError);
}

TEST(Sweep, EmptyBatch) {
    SweepConfig cfg;
    cfg.spec.beta = 0.2;
    cfg.num_instances = 0;
    const SweepResult r = run_sweep(cfg);
    EXPECT_TRUE(r.records.empty());
    EXPECT_EQ(r.summary.instances, 0u);
    std::ostringstream os;
    write_sweep_csv(os, r.records);
    EXPECT_EQ(os.str(), std::string(kSweepCsvHeader) + "\n");
}

TEST(Sweep, ResultsIndependentOfThreadCount) {
    SweepConfig cfg;
    cfg.spec.scenario = 2;
    cfg.spec.beta = 0.2;
    cfg.spec.gamma = 5.0;
    cfg.spec.seed = 17;
    cfg.num_instances = 12;
    cfg.jobs = 1;
    const SweepResult one = run_sweep(cfg);
    cfg.jobs = 4;
    const SweepResult four = run_sweep(cfg);
    std::ostringstream a;
    std::ostringstream b;
    write_sweep_csv(a, one.records);
    write_sweep_csv(b, four.records);
    EXPECT_EQ(a.str(), b.str());
    for (std::size_t i = 0; i < one.records.size(); ++i) EXPECT_EQ(one.records[i].instance_id, i);
}

TEST(Sweep, GapsAreNonNegative) {
    for (int scenario = 1; scenario <= 3; ++scenario) {
        SweepConfig cfg;
        cfg.spec.scenario = scenario;
        cfg.spec.beta = 0.2;
        cfg.spec.gamma = 5.0;
        cfg.spec.delta = 1.75;
        cfg.spec.seed = 5;
        cfg.num_instances = 15;
        const SweepResult r = run_sweep(cfg);
        EXPECT_EQ(r.summary.failures, 0u);
        for (const SweepRecord& rec : r.records) {
            ASSERT_TRUE(rec.ok) << rec.error;
            EXPECT_GE(rec.gap_myopic_pct, -1e-6);
            EXPECT_GE(rec.gap_rpr_pct, -1e-6);
            EXPECT_NEAR(rec.gap_rpr_pct, (rec.g_rpr - rec.g_opt) / rec.g_opt * 100.0, 1e-9);
        }
        EXPECT_GE(r.summary.max_gap_rpr_pct, r.summary.mean_gap_rpr_pct);
    }
}

TEST(Sweep, RecordReproducesFromSeed) {
    SweepConfig cfg;
    cfg.spec.beta = 0.2;
    cfg.spec.seed = 3;
    const SweepRecord rec = run_sweep_instance(cfg, 4);
    const Instance inst =
        make_instance(apply_scenario1(sample_baselines(5, rec.seed), 0.2), study_costs(), std::vector<double>(4, 0.2), 100.0);
    EXPECT_NEAR(rec.g_opt, policy_iteration_average(inst).gain, 1e-10);
    EXPECT_NEAR(rec.g_myopic, evaluate_policy_average(inst, myopic_policy(inst)).gain, 1e-12);
}

TEST(Sweep, GapConventions) {
    EXPECT_DOUBLE_EQ(gap_pct(6.0, 4.0), 50.0);
    EXPECT_DOUBLE_EQ(gap_pct_heuristic_base(5.0, 4.0), 20.0);
    EXPECT_EQ(gap_pct(4.0, 4.0), 0.0);
}
