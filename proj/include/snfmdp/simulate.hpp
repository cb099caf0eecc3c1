#pragma once

// Monte Carlo simulation of the controlled chain under a stationary policy.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "snfmdp/model.hpp"
#include "snfmdp/scenario.hpp"
#include "snfmdp/solve.hpp"

namespace snfmdp {

inline constexpr const char* kSimulationRng = "mt19937_64";

struct SimulationOptions {
    long horizon = 1'000'000;
    long burn_in = 10'000;
    std::uint64_t seed = 0;
    int batches = 20;
    SystemState start{0, 0};  // defaults to patient 0 with every facility available
    bool start_given = false;
};

struct SimulationEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long horizon = 0;
    long burn_in = 0;
    std::uint64_t seed = 0;
    int batches = 0;
    std::string rng = kSimulationRng;
};

/// Mean cost per period over periods burn_in..horizon-1 and its batch-means
/// standard error.
inline SimulationEstimate simulate_policy(const Instance& inst, const Policy& policy, const SimulationOptions& opt) {
    if (!(opt.horizon > opt.burn_in && opt.burn_in >= 0)) throw InputError("simulate: need horizon > burn_in >= 0");
    if (opt.batches < 2) throw InputError("simulate: need at least 2 batches");
    if (opt.horizon - opt.burn_in < opt.batches) throw InputError("simulate: fewer periods than batches");
    check_policy(inst, policy);
    const StateSpace space(inst);
    const int k = inst.num_types();
    const int l = inst.num_facilities();

    std::vector<double> cumulative(static_cast<std::size_t>(k) + 1);
    double acc = 0.0;
    for (int i = 0; i <= k; ++i) cumulative[static_cast<std::size_t>(i)] = (acc += inst.discharge_prob(i));

    SystemState x = opt.start_given ? opt.start : SystemState{0, static_cast<std::uint32_t>(space.num_codes() - 1)};
    if (x.patient < 0 || x.patient > k || x.avail >= space.num_codes()) throw InputError("simulate: start state out of range");

    std::mt19937_64 gen(opt.seed);
    const long measured = opt.horizon - opt.burn_in;
    const long per_batch = measured / opt.batches;
    std::vector<double> batch_sum(static_cast<std::size_t>(opt.batches), 0.0);
    std::vector<long> batch_len(static_cast<std::size_t>(opt.batches), 0);

    for (long t = 0; t < opt.horizon; ++t) {
        const int a = policy.actions[space.encode(x)];
        const double cost = inst.cost(x.patient, a);
        if (t >= opt.burn_in) {
            const long b = std::min<long>((t - opt.burn_in) / per_batch, opt.batches - 1);
            batch_sum[static_cast<std::size_t>(b)] += cost;
            ++batch_len[static_cast<std::size_t>(b)];
        }
        std::uint32_t next = 0;
        for (int j = 1; j <= l; ++j) {
            const int s = space.available(x.avail, j) ? 1 : 0;
            const double stay_or_become_available = inst.kernel(a, j)[static_cast<std::size_t>(s)][1];
            if (uniform01(gen) < stay_or_become_available) next |= StateSpace::bit(l, j);
        }
        const double u = uniform01(gen);
        int ip = 0;
        while (ip < k && u >= cumulative[static_cast<std::size_t>(ip)]) ++ip;
        x = {ip, next};
    }

    SimulationEstimate out;
    out.horizon = opt.horizon;
    out.burn_in = opt.burn_in;
    out.seed = opt.seed;
    out.batches = opt.batches;
    double total = 0.0;
    for (double s : batch_sum) total += s;
    out.mean = total / static_cast<double>(measured);
    std::vector<double> means(batch_sum.size());
    double m = 0.0;
    for (std::size_t b = 0; b < means.size(); ++b) m += (means[b] = batch_sum[b] / static_cast<double>(batch_len[b]));
    m /= static_cast<double>(means.size());
    double ss = 0.0;
    for (double v : means) ss += (v - m) * (v - m);
    const double nb = static_cast<double>(means.size());
    out.std_error = std::sqrt(ss / (nb - 1.0) / nb);
    return out;
}

}  // namespace snfmdp
