#pragma once

// Baseline availability matrices, the three dependency scenarios that make a
// facility's availability react to transfers, and batch sweeps over random
// instances.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "snfmdp/model.hpp"
#include "snfmdp/policies.hpp"
#include "snfmdp/solve.hpp"

namespace snfmdp {

/// Kernels P[a][j] keyed (a, j), a in 0..l, j in 1..l.
using KernelSet = std::map<std::pair<int, int>, Mat2>;

/// Baselines P̂^1..P̂^l (index 0 is facility 1).
using BaselineSet = std::vector<Mat2>;

/// What a period without a transfer does to facility availability.
///   reset:    every facility is available next period, P[0][j] = [[0,1],[0,1]]
///   baseline: availability follows the baseline chain, P[0][j] = P̂^j
enum class IdleKernel { reset, baseline };

inline std::string to_string(IdleKernel k) { return k == IdleKernel::reset ? "reset" : "baseline"; }

struct ScenarioSpec {
    int scenario = 1;
    double beta = 1.0;
    double gamma = 1.0;
    double delta = 1.0;
    std::uint64_t seed = 0;
    int num_facilities = 5;

    void validate() const {
        if (scenario < 1 || scenario > 3) throw InputError("scenario must be 1, 2 or 3");
        if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta must lie in [0,1]");
        if (scenario >= 2 && !(gamma >= 1.0)) throw InputError("gamma must be >= 1");
        if (scenario == 3 && !(delta >= 1.0 && delta <= gamma)) throw InputError("delta must lie in [1, gamma]");
        if (num_facilities < 1 || num_facilities > kMaxFacilities) throw InputError("num_facilities out of range");
    }
};

// ---------------------------------------------------------------------------
// Random numbers

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of the i-th member of a batch started from `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t i) {
    return splitmix64(master + i * 0x9E3779B97F4A7C15ull);
}

/// Uniform on [0,1) with 53 random bits; identical across standard libraries
/// (std::uniform_real_distribution is not).
inline double uniform01(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

inline double uniform_open01(std::mt19937_64& gen) {
    double u = 0.0;
    while (u == 0.0) u = uniform01(gen);
    return u;
}

// ---------------------------------------------------------------------------
// Baselines and scenarios

/// Diagonal entries p̂_00 and p̂_11 drawn U(0,1) per facility.
inline BaselineSet sample_baselines(int num_facilities, std::uint64_t seed) {
    if (num_facilities < 1) throw InputError("sample_baselines: need at least one facility");
    std::mt19937_64 gen(seed);
    BaselineSet out(static_cast<std::size_t>(num_facilities));
    for (Mat2& m : out) {
        const double p00 = uniform_open01(gen);
        const double p11 = uniform_open01(gen);
        m = {{{p00, 1.0 - p00}, {1.0 - p11, p11}}};
    }
    return out;
}

/// Facilities adjacent to j in the order 1..l.
inline std::vector<int> neighbors(int j, int num_facilities) {
    if (j < 1 || j > num_facilities)
        throw InputError("neighbors: facility " + std::to_string(j) + " not in 1.." + std::to_string(num_facilities));
    std::vector<int> out;
    if (j > 1) out.push_back(j - 1);
    if (j < num_facilities) out.push_back(j + 1);
    return out;
}

inline Mat2 scale_stay(const Mat2& m, double factor) {
    Mat2 out = m;
    const double stay = factor * m[1][1];
    out[1] = {1.0 - stay, stay};
    return out;
}

namespace detail {

inline void check_baselines(const BaselineSet& b) {
    if (b.empty()) throw InputError("baseline set is empty");
    for (std::size_t j = 0; j < b.size(); ++j)
        for (int s = 0; s < 2; ++s) {
            const auto& row = b[j][static_cast<std::size_t>(s)];
            if (row[0] < 0.0 || row[1] < 0.0 || std::abs(row[0] + row[1] - 1.0) > 1e-12)
                throw InputError("baseline " + std::to_string(j + 1) + " row " + std::to_string(s) + " is not stochastic");
        }
}

/// Builds P[a][j] from per-(a, j) multipliers on the baseline stay probability.
template <class Multiplier>
KernelSet build_kernels(const BaselineSet& b, IdleKernel idle, Multiplier&& mult) {
    check_baselines(b);
    const int l = static_cast<int>(b.size());
    KernelSet k;
    for (int j = 1; j <= l; ++j)
        k[{0, j}] = idle == IdleKernel::reset ? kAlwaysAvailable : b[static_cast<std::size_t>(j - 1)];
    for (int a = 1; a <= l; ++a)
        for (int j = 1; j <= l; ++j) {
            const double f = mult(a, j);
            const Mat2& base = b[static_cast<std::size_t>(j - 1)];
            k[{a, j}] = f == 1.0 ? base : scale_stay(base, f);
        }
    return k;
}

inline bool is_neighbor(int a, int j, int l) {
    for (int n : neighbors(a, l))
        if (n == j) return true;
    return false;
}

}  // namespace detail

/// Receiving facility's stay probability scaled by beta1.
inline KernelSet apply_scenario1(const BaselineSet& b, double beta1, IdleKernel idle = IdleKernel::reset) {
    if (!(beta1 >= 0.0 && beta1 <= 1.0)) throw InputError("beta1 must lie in [0,1]");
    return detail::build_kernels(b, idle, [&](int a, int j) { return a == j ? beta1 : 1.0; });
}

/// Receiving facility scaled by beta2/gamma2, its neighbors by beta2.
inline KernelSet apply_scenario2(const BaselineSet& b, double beta2, double gamma2, IdleKernel idle = IdleKernel::reset) {
    if (!(beta2 >= 0.0 && beta2 <= 1.0)) throw InputError("beta2 must lie in [0,1]");
    if (!(gamma2 >= 1.0)) throw InputError("gamma2 must be >= 1");
    const int l = static_cast<int>(b.size());
    return detail::build_kernels(b, idle, [&](int a, int j) {
        if (a == j) return beta2 / gamma2;
        return detail::is_neighbor(a, j, l) ? beta2 : 1.0;
    });
}

/// Receiving facility scaled by beta3*delta3/gamma3, every other facility by beta3.
inline KernelSet apply_scenario3(const BaselineSet& b, double beta3, double gamma3, double delta3,
                                 IdleKernel idle = IdleKernel::reset) {
    if (!(beta3 >= 0.0 && beta3 <= 1.0)) throw InputError("beta3 must lie in [0,1]");
    if (!(gamma3 >= 1.0)) throw InputError("gamma3 must be >= 1");
    if (!(delta3 >= 1.0)) throw InputError("delta3 must be >= 1");
    if (delta3 > gamma3) throw InputError("delta3 must not exceed gamma3");
    return detail::build_kernels(b, idle, [&](int a, int j) { return a == j ? beta3 * delta3 / gamma3 : beta3; });
}

inline KernelSet apply_scenario(const ScenarioSpec& spec, const BaselineSet& b, IdleKernel idle = IdleKernel::reset) {
    spec.validate();
    switch (spec.scenario) {
        case 1: return apply_scenario1(b, spec.beta, idle);
        case 2: return apply_scenario2(b, spec.beta, spec.gamma, idle);
        default: return apply_scenario3(b, spec.beta, spec.gamma, spec.delta, idle);
    }
}

// ---------------------------------------------------------------------------
// Default inputs: readmission rates (percent) by patient type and facility.

inline const std::vector<std::string>& study_type_labels() {
    static const std::vector<std::string> v{"UM", "JS", "CM", "CS"};
    return v;
}

inline const std::vector<std::string>& study_facility_labels() {
    static const std::vector<std::string> v{"A", "B", "C", "D", "E"};
    return v;
}

/// Rows: Uncomplicated Medical, Joint Surgery, Complicated Medical,
/// Complicated Surgery. Columns: facilities A..E.
inline const std::vector<std::vector<double>>& study_costs() {
    static const std::vector<std::vector<double>> v{
        {14.3, 16.4, 15.6, 9.1, 20.6},
        {9.5, 12.8, 12.4, 8.7, 5.8},
        {19.1, 20.1, 20.6, 11.2, 19.0},
        {19.2, 20.4, 20.2, 19.6, 13.4},
    };
    return v;
}

inline constexpr double kDefaultLossPenalty = 100.0;

inline Instance make_instance(const KernelSet& kernels, const std::vector<std::vector<double>>& costs,
                              const std::vector<double>& lambda, double loss_penalty,
                              std::vector<std::string> type_labels = {}, std::vector<std::string> facility_labels = {}) {
    InstanceData d;
    d.num_types = static_cast<int>(costs.size());
    d.num_facilities = costs.empty() ? 0 : static_cast<int>(costs.front().size());
    d.lambda = lambda;
    d.loss_penalty = loss_penalty;
    d.costs = costs;
    d.kernels = kernels;
    d.type_labels = std::move(type_labels);
    d.facility_labels = std::move(facility_labels);
    return Instance(std::move(d));
}

/// Default readmission-rate costs, lambda_i = 0.2 for the four types, facilities A..E.
inline Instance make_study_instance(const KernelSet& kernels, double loss_penalty = kDefaultLossPenalty) {
    return make_instance(kernels, study_costs(), std::vector<double>(4, 0.2), loss_penalty, study_type_labels(),
                         study_facility_labels());
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepConfig {
    ScenarioSpec spec;
    std::size_t num_instances = 0;
    std::vector<std::vector<double>> costs = study_costs();
    std::vector<double> lambda = std::vector<double>(4, 0.2);
    double loss_penalty = kDefaultLossPenalty;
    IdleKernel idle = IdleKernel::reset;
    unsigned jobs = 1;
};

struct SweepRecord {
    std::size_t instance_id = 0;
    std::uint64_t seed = 0;
    int scenario = 1;
    double beta = 0.0;
    double gamma = 1.0;
    double delta = 1.0;
    double K = 0.0;
    double g_opt = std::numeric_limits<double>::quiet_NaN();
    double g_myopic = std::numeric_limits<double>::quiet_NaN();
    double g_rpr = std::numeric_limits<double>::quiet_NaN();
    double gap_myopic_pct = std::numeric_limits<double>::quiet_NaN();  // (g_myopic - g_opt) / g_opt * 100
    double gap_rpr_pct = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    std::string error;
};

struct SweepSummary {
    std::size_t instances = 0;
    std::size_t failures = 0;
    double fraction_rpr_le_myopic = 0.0;
    double mean_gap_myopic_pct = 0.0;
    double mean_gap_rpr_pct = 0.0;
    double max_gap_myopic_pct = 0.0;
    double max_gap_rpr_pct = 0.0;
    // (g_h - g_opt) / g_h * 100
    double mean_gap_myopic_pct_heuristic_base = 0.0;
    double mean_gap_rpr_pct_heuristic_base = 0.0;
};

struct SweepResult {
    std::vector<SweepRecord> records;
    SweepSummary summary;
};

inline double gap_pct(double heuristic, double opt) {
    if (heuristic == opt) return 0.0;
    return (heuristic - opt) / opt * 100.0;
}

inline double gap_pct_heuristic_base(double heuristic, double opt) {
    if (heuristic == opt) return 0.0;
    return (heuristic - opt) / heuristic * 100.0;
}

inline SweepRecord run_sweep_instance(const SweepConfig& cfg, std::size_t id) {
    SweepRecord r;
    r.instance_id = id;
    r.seed = derive_seed(cfg.spec.seed, id);
    r.scenario = cfg.spec.scenario;
    r.beta = cfg.spec.beta;
    r.gamma = cfg.spec.scenario >= 2 ? cfg.spec.gamma : 1.0;
    r.delta = cfg.spec.scenario == 3 ? cfg.spec.delta : 1.0;
    r.K = cfg.loss_penalty;
    try {
        const int l = cfg.costs.empty() ? 0 : static_cast<int>(cfg.costs.front().size());
        const BaselineSet b = sample_baselines(l, r.seed);
        const Instance inst = make_instance(apply_scenario(cfg.spec, b, cfg.idle), cfg.costs, cfg.lambda, cfg.loss_penalty);
        const Policy myopic = myopic_policy(inst);
        const Policy rpr = rpr_policy(inst);
        AverageSolveOptions opt;
        opt.initial_policy = rpr;
        r.g_opt = policy_iteration_average(inst, opt).gain;
        r.g_myopic = evaluate_policy_average(inst, myopic).gain;
        r.g_rpr = evaluate_policy_average(inst, rpr).gain;
        r.gap_myopic_pct = gap_pct(r.g_myopic, r.g_opt);
        r.gap_rpr_pct = gap_pct(r.g_rpr, r.g_opt);
        r.ok = true;
    } catch (const Error& e) {
        r.error = e.what();
    }
    return r;
}

inline SweepSummary summarize(const std::vector<SweepRecord>& records) {
    SweepSummary s;
    s.instances = records.size();
    std::size_t ok = 0;
    std::size_t wins = 0;
    for (const SweepRecord& r : records) {
        if (!r.ok) {
            ++s.failures;
            continue;
        }
        ++ok;
        if (r.g_rpr <= r.g_myopic) ++wins;
        s.mean_gap_myopic_pct += r.gap_myopic_pct;
        s.mean_gap_rpr_pct += r.gap_rpr_pct;
        s.max_gap_myopic_pct = std::max(s.max_gap_myopic_pct, r.gap_myopic_pct);
        s.max_gap_rpr_pct = std::max(s.max_gap_rpr_pct, r.gap_rpr_pct);
        s.mean_gap_myopic_pct_heuristic_base += gap_pct_heuristic_base(r.g_myopic, r.g_opt);
        s.mean_gap_rpr_pct_heuristic_base += gap_pct_heuristic_base(r.g_rpr, r.g_opt);
    }
    if (ok > 0) {
        const double n = static_cast<double>(ok);
        s.fraction_rpr_le_myopic = static_cast<double>(wins) / n;
        s.mean_gap_myopic_pct /= n;
        s.mean_gap_rpr_pct /= n;
        s.mean_gap_myopic_pct_heuristic_base /= n;
        s.mean_gap_rpr_pct_heuristic_base /= n;
    }
    return s;
}

/// Records are returned in instance-id order whatever the number of jobs.
inline SweepResult run_sweep(const SweepConfig& cfg) {
    cfg.spec.validate();
    if (cfg.costs.empty()) throw InputError("sweep: cost matrix is empty");
    if (static_cast<int>(cfg.costs.front().size()) != cfg.spec.num_facilities)
        throw InputError("sweep: cost matrix has " + std::to_string(cfg.costs.front().size()) +
                         " facilities, scenario has " + std::to_string(cfg.spec.num_facilities));
    SweepResult out;
    out.records.resize(cfg.num_instances);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t id = next++; id < cfg.num_instances; id = next++) out.records[id] = run_sweep_instance(cfg, id);
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(std::max<std::size_t>(1, cfg.num_instances))));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    out.summary = summarize(out.records);
    return out;
}

inline constexpr const char* kSweepCsvHeader =
    "instance_id,seed,scenario,beta,gamma,delta,K,g_opt,g_myopic,g_rpr,gap_myopic_pct,gap_rpr_pct";

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
    os << kSweepCsvHeader << '\n';
    const auto old_precision = os.precision(12);
    for (const SweepRecord& r : records) {
        os << r.instance_id << ',' << r.seed << ',' << r.scenario << ',' << r.beta << ',' << r.gamma << ',' << r.delta
           << ',' << r.K << ',' << r.g_opt << ',' << r.g_myopic << ',' << r.g_rpr << ',' << r.gap_myopic_pct << ','
           << r.gap_rpr_pct << '\n';
    }
    os.precision(old_precision);
}

}  // namespace snfmdp
