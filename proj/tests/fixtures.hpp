#pragma once

// Instances shared by the test programs.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "snfmdp/instance_io.hpp"
#include "snfmdp/model.hpp"
#include "snfmdp/scenario.hpp"

namespace fixtures {

using snfmdp::Instance;
using snfmdp::InstanceData;
using snfmdp::Mat2;

inline std::string data_path(const std::string& name) { return std::string(SNFMDP_DATA_DIR) + "/" + name; }

inline InstanceData two_facility_data(double K) {
    InstanceData d;
    d.num_types = 2;
    d.num_facilities = 2;
    d.lambda = {0.4, 0.4};
    d.loss_penalty = K;
    d.costs = {{0.5, 0.55}, {1.3, 1.2}};
    d.kernels[{0, 1}] = snfmdp::kAlwaysAvailable;
    d.kernels[{0, 2}] = snfmdp::kAlwaysAvailable;
    return d;
}

/// The first two-facility example; printed loss penalty K = 10.
inline Instance example1(double K = 10.0) {
    InstanceData d = two_facility_data(K);
    d.kernels[{1, 1}] = Mat2{{{0.49, 0.51}, {0.99, 0.01}}};
    d.kernels[{1, 2}] = Mat2{{{0.01, 0.99}, {0.05, 0.95}}};
    d.kernels[{2, 1}] = Mat2{{{0.05, 0.95}, {0.51, 0.49}}};
    d.kernels[{2, 2}] = Mat2{{{0.5, 0.5}, {0.95, 0.05}}};
    return Instance(d);
}

inline Instance example2(double K = 10.0) {
    InstanceData d = two_facility_data(K);
    d.kernels[{1, 1}] = Mat2{{{0.02, 0.98}, {0.82, 0.18}}};
    d.kernels[{1, 2}] = Mat2{{{0.02, 0.98}, {0.82, 0.18}}};
    d.kernels[{2, 1}] = Mat2{{{0.3, 0.7}, {0.08, 0.92}}};
    d.kernels[{2, 2}] = Mat2{{{0.3, 0.7}, {0.08, 0.92}}};
    return Instance(d);
}

inline Mat2 random_mat2(std::mt19937_64& gen, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    const double p00 = u(gen);
    const double p11 = u(gen);
    return Mat2{{{p00, 1.0 - p00}, {1.0 - p11, p11}}};
}

struct RandomOptions {
    int min_types = 1, max_types = 3;
    int min_facilities = 1, max_facilities = 3;
    bool action_independent = false;
    bool reset_idle = false;
    double kernel_lo = 0.02, kernel_hi = 0.98;
};

/// Random instance with strictly interior kernels (so every policy is unichain).
inline Instance random_instance(std::uint64_t seed, const RandomOptions& o = {}) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> kd(o.min_types, o.max_types);
    std::uniform_int_distribution<int> ld(o.min_facilities, o.max_facilities);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    InstanceData d;
    d.num_types = kd(gen);
    d.num_facilities = ld(gen);
    double total = 0.0;
    std::vector<double> w(static_cast<std::size_t>(d.num_types) + 1);
    for (double& x : w) total += (x = 0.1 + u(gen));
    for (int i = 1; i <= d.num_types; ++i) d.lambda.push_back(w[static_cast<std::size_t>(i)] / total);
    double max_cost = 0.0;
    for (int i = 0; i < d.num_types; ++i) {
        std::vector<double> row;
        for (int j = 0; j < d.num_facilities; ++j) {
            row.push_back(1.0 + 19.0 * u(gen));
            max_cost = std::max(max_cost, row.back());
        }
        d.costs.push_back(row);
    }
    d.loss_penalty = max_cost * (1.5 + 4.0 * u(gen));
    std::vector<Mat2> shared;
    for (int j = 1; j <= d.num_facilities; ++j) shared.push_back(random_mat2(gen, o.kernel_lo, o.kernel_hi));
    for (int a = 0; a <= d.num_facilities; ++a)
        for (int j = 1; j <= d.num_facilities; ++j) {
            if (o.action_independent) d.kernels[{a, j}] = shared[static_cast<std::size_t>(j - 1)];
            else if (a == 0 && o.reset_idle) d.kernels[{a, j}] = snfmdp::kAlwaysAvailable;
            else d.kernels[{a, j}] = random_mat2(gen, o.kernel_lo, o.kernel_hi);
        }
    return Instance(d);
}

inline Instance zero_cost_instance(int k = 2, int l = 2) {
    InstanceData d;
    d.num_types = k;
    d.num_facilities = l;
    d.lambda.assign(static_cast<std::size_t>(k), 0.8 / k);
    d.loss_penalty = 0.0;
    d.costs.assign(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(l), 0.0));
    std::mt19937_64 gen(7);
    for (int a = 0; a <= l; ++a)
        for (int j = 1; j <= l; ++j) d.kernels[{a, j}] = random_mat2(gen, 0.1, 0.9);
    return Instance(d);
}

}  // namespace fixtures
