#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "snfmdp/instance_io.hpp"

using snfmdp::json;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun run(const std::string& args) {
    const std::string cmd = std::string(SNFMDP_CLI_PATH) + " " + args + " 2>/dev/null";
    CliRun r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string data(const std::string& name) { return fixtures::data_path(name); }

std::string scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("snfmdp_cli_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(Cli, SolveAverageCost) {
    const CliRun r = run("solve --instance " + data("example1.json") + " --criterion avg");
    ASSERT_EQ(r.code, 0);
    const json j = json::parse(r.out);
    EXPECT_EQ(j["criterion"], "average");
    EXPECT_NEAR(j["g"].get<double>(), 2.941151019053168, 1e-9);
    EXPECT_EQ(j["policy"]["actions"]["(2,1,1)"], 1);
}

TEST(Cli, SolveDiscountedToFile) {
    const std::string out = scratch("disc.json");
    const CliRun r = run("solve --instance " + data("example2.json") + " --criterion disc --alpha 0.95 --out " + out);
    ASSERT_EQ(r.code, 0);
    const json j = json::parse(slurp(out));
    EXPECT_EQ(j["criterion"], "discounted");
    EXPECT_DOUBLE_EQ(j["alpha"].get<double>(), 0.95);
}

TEST(Cli, UsageAndInputErrorsExitTwo) {
    EXPECT_EQ(run("solve --instance /nonexistent.json --criterion avg").code, 2);
    EXPECT_EQ(run("solve --instance " + data("example1.json") + " --criterion avg --alpha 0.9").code, 2);
    EXPECT_EQ(run("solve --instance " + data("example1.json") + " --criterion disc").code, 2);
    EXPECT_EQ(run("solve --instance " + data("example1.json")).code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    const std::string bad = scratch("bad.json");
    std::ofstream(bad) << "{\"num_types\": 2";
    EXPECT_EQ(run("solve --instance " + bad + " --criterion avg").code, 2);
}

TEST(Cli, SolverFailureExitsThree) {
    json j = snfmdp::instance_to_json(fixtures::example1());
    j["kernels"]["1,1"] = json::array({json::array({1, 0}), json::array({0, 1})});
    j["kernels"]["1,2"] = json::array({json::array({1, 0}), json::array({0, 1})});
    j["kernels"]["2,1"] = json::array({json::array({1, 0}), json::array({0, 1})});
    j["kernels"]["2,2"] = json::array({json::array({1, 0}), json::array({0, 1})});
    j["kernels"]["0,1"] = json::array({json::array({1, 0}), json::array({0, 1})});
    j["kernels"]["0,2"] = json::array({json::array({1, 0}), json::array({0, 1})});
    const std::string path = scratch("multichain.json");
    std::ofstream(path) << j.dump();
    EXPECT_EQ(run("solve --instance " + path + " --criterion avg").code, 3);
}

TEST(Cli, CompareTable) {
    const CliRun r = run("compare --instance " + data("example2.json"));
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("optimal"), std::string::npos);
    EXPECT_NE(r.out.find("1.258314"), std::string::npos);
    EXPECT_NE(r.out.find("14.673991"), std::string::npos);
    EXPECT_NE(r.out.find("91.42"), std::string::npos);
}

TEST(Cli, EmptySweepWritesHeader) {
    const CliRun r = run("sweep --scenario 1 --beta 0.2 --n 0 --seed 1");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "instance_id,seed,scenario,beta,gamma,delta,K,g_opt,g_myopic,g_rpr,gap_myopic_pct,gap_rpr_pct\n");
}

TEST(Cli, SweepIsByteIdenticalAcrossRunsAndJobs) {
    const std::string args = "sweep --scenario 2 --beta 0.2 --gamma 5 --n 6 --seed 11";
    const CliRun a = run(args);
    const CliRun b = run(args);
    const CliRun c = run(args + " --jobs 3");
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(a.out, c.out);
    EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 7);
}

TEST(Cli, ConfigFileWithCommandLineOverride) {
    const std::string summary_a = scratch("summary_a.json");
    const std::string summary_b = scratch("summary_b.json");
    const CliRun a = run("sweep --config " + data("scenario1_beta02.json") + " --n 3 --summary " + summary_a);
    ASSERT_EQ(a.code, 0);
    EXPECT_NE(a.out.find(",1,0.2,"), std::string::npos);
    const CliRun b = run("sweep --config " + data("scenario1_beta02.json") + " --n 3 --beta 0.5 --summary " + summary_b);
    ASSERT_EQ(b.code, 0);
    EXPECT_NE(b.out.find(",1,0.5,"), std::string::npos);
    EXPECT_EQ(b.out.find(",1,0.2,"), std::string::npos);
    EXPECT_EQ(json::parse(slurp(summary_a))["instances"], 3);
}

TEST(Cli, SimulateNamedPolicy) {
    const CliRun r = run("simulate --instance " + data("example1.json") + " --policy rpr --horizon 200000 --seed 4");
    ASSERT_EQ(r.code, 0);
    const json j = json::parse(r.out);
    const double mean = j["mean"].get<double>();
    const double se = j["std_error"].get<double>();
    EXPECT_NEAR(mean, 2.941151019053168, 3.0 * se);
    EXPECT_EQ(j["rng"], "mt19937_64");
    EXPECT_EQ(run("simulate --instance " + data("example1.json") + " --policy rpr --horizon 200000 --seed 4").out, r.out);
}

TEST(Cli, SimulatePolicyFile) {
    const std::string policy = scratch("policy.json");
    const CliRun solved = run("solve --instance " + data("example1.json") + " --criterion avg");
    std::ofstream(policy) << json::parse(solved.out)["policy"].dump();
    const CliRun r = run("simulate --instance " + data("example1.json") + " --policy " + policy + " --horizon 100000");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(run("simulate --instance " + data("example1.json") + " --policy greedy").code, 2);
}

TEST(Cli, EstimateRates) {
    const CliRun r = run("estimate --data " + data("discharges_synthetic.csv") + " --covariates hcc first_hosp chf");
    ASSERT_EQ(r.code, 0);
    const json j = json::parse(r.out);
    ASSERT_EQ(j["costs"].size(), 4u);
    ASSERT_EQ(j["costs"][0].size(), 5u);
    for (const auto& row : j["costs"])
        for (const auto& v : row) {
            EXPECT_GT(v.get<double>(), 0.0);
            EXPECT_LT(v.get<double>(), 100.0);
        }
}

TEST(Cli, EstimateRejectsMissingValues) {
    const std::string csv = scratch("missing.csv");
    std::ofstream(csv) << "readmitted,snf,patient_type,x\n1,A,UM,1\n0,A,UM,\n";
    EXPECT_EQ(run("estimate --data " + csv).code, 2);
    const std::string sep = scratch("separated.csv");
    std::ofstream(sep) << "readmitted,snf,patient_type\n1,A,UM\n1,A,UM\n0,B,UM\n1,B,UM\n";
    EXPECT_EQ(run("estimate --data " + sep).code, 3);
}
