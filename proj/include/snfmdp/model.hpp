#pragma once

// Hospital-to-SNF transfer MDP: instance data, state space, feasible actions,
// the product-form availability kernel and the Bellman operator.
//
// Conventions used throughout the library:
//   patient index i in 0..k, 0 meaning "nobody discharged this period";
//   facility index j in 0..l, 0 being the always-available loss facility;
//   an availability vector (s_1..s_l) is packed into an integer code where
//   s_j is bit (l - j), so enumerating codes 0..2^l-1 walks the vectors as a
//   binary counter with s_1 most significant (the order the published policy tables use).

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace snfmdp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, invalid instances, infeasible requests.
class InputError : public Error {
public:
    using Error::Error;
};

/// A computation that could not complete (singular system, no convergence).
class SolverError : public Error {
public:
    using Error::Error;
};

/// 2x2 availability transition matrix, m[s][s'].
using Mat2 = std::array<std::array<double, 2>, 2>;

inline constexpr Mat2 kAlwaysAvailable{{{0.0, 1.0}, {0.0, 1.0}}};

inline constexpr int kMaxFacilities = 24;

struct SystemState {
    int patient = 0;
    std::uint32_t avail = 0;  // packed s_1..s_l, see file comment

    friend bool operator==(const SystemState&, const SystemState&) = default;
};

/// Raw description of an instance, before validation.
struct InstanceData {
    int num_types = 0;
    int num_facilities = 0;
    std::vector<double> lambda;               // lambda_1..lambda_k
    double loss_penalty = 0.0;                // K
    std::vector<std::vector<double>> costs;   // r[i][j] for i in 1..k, j in 1..l
    std::vector<std::vector<int>> feasible;   // optional A(i) for i in 1..k (real facilities)
    std::map<std::pair<int, int>, Mat2> kernels;  // (a, j), a in 0..l, j in 1..l
    std::vector<std::string> type_labels;
    std::vector<std::string> facility_labels;  // real facilities 1..l
};

/// Validated, immutable MDP instance.
class Instance {
public:
    explicit Instance(InstanceData data) : data_(std::move(data)) {
        validate();
        build();
    }

    int num_types() const { return data_.num_types; }
    int num_facilities() const { return data_.num_facilities; }
    double loss_penalty() const { return data_.loss_penalty; }

    /// lambda_i for i in 0..k; lambda_0 is the no-discharge probability.
    double discharge_prob(int i) const { return lambda_[static_cast<std::size_t>(i)]; }

    /// r^a_i, including r^0_0 = 0, r^0_i = K and r^a_0 = 0.
    double cost(int i, int a) const {
        return cost_[static_cast<std::size_t>(i) * stride() + static_cast<std::size_t>(a)];
    }

    /// P[a][j] for a, j in 0..l; P[a][0] is always kAlwaysAvailable.
    const Mat2& kernel(int a, int j) const {
        return kernel_[static_cast<std::size_t>(a) * stride() + static_cast<std::size_t>(j)];
    }

    /// Whether facility j is in A(i). Facility 0 always is.
    bool allowed(int i, int j) const {
        return (allowed_[static_cast<std::size_t>(i)] >> j) & 1u;
    }

    const InstanceData& data() const { return data_; }

    std::string type_label(int i) const {
        if (i == 0) return "none";
        if (!data_.type_labels.empty()) return data_.type_labels[static_cast<std::size_t>(i - 1)];
        return std::to_string(i);
    }
    std::string facility_label(int j) const {
        if (j == 0) return "loss";
        if (!data_.facility_labels.empty()) return data_.facility_labels[static_cast<std::size_t>(j - 1)];
        return std::to_string(j);
    }

private:
    std::size_t stride() const { return static_cast<std::size_t>(data_.num_facilities) + 1; }

    [[noreturn]] static void fail(const std::string& field, const std::string& what) {
        throw InputError("invalid instance: " + field + ": " + what);
    }

    void validate() const {
        const int k = data_.num_types;
        const int l = data_.num_facilities;
        if (k < 1) fail("num_types", "must be >= 1");
        if (l < 1) fail("num_facilities", "must be >= 1");
        if (l > kMaxFacilities) fail("num_facilities", "at most " + std::to_string(kMaxFacilities) + " supported");
        if (static_cast<int>(data_.lambda.size()) != k)
            fail("lambda", "expected " + std::to_string(k) + " entries, got " + std::to_string(data_.lambda.size()));
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            const double p = data_.lambda[static_cast<std::size_t>(i)];
            if (!(p > 0.0 && p < 1.0)) fail("lambda[" + std::to_string(i + 1) + "]", "must lie in (0,1)");
            total += p;
        }
        if (total > 1.0 + 1e-12) fail("lambda", "entries sum to " + std::to_string(total) + " > 1");
        if (static_cast<int>(data_.costs.size()) != k) fail("costs", "expected " + std::to_string(k) + " rows");
        double max_cost = 0.0;
        for (int i = 0; i < k; ++i) {
            const auto& row = data_.costs[static_cast<std::size_t>(i)];
            if (static_cast<int>(row.size()) != l)
                fail("costs[" + std::to_string(i + 1) + "]", "expected " + std::to_string(l) + " entries");
            for (int j = 0; j < l; ++j) {
                const double c = row[static_cast<std::size_t>(j)];
                if (!std::isfinite(c) || c < 0.0)
                    fail("costs[" + std::to_string(i + 1) + "][" + std::to_string(j + 1) + "]", "must be finite and >= 0");
                max_cost = std::max(max_cost, c);
            }
        }
        if (!std::isfinite(data_.loss_penalty)) fail("loss_penalty", "must be finite");
        if (data_.loss_penalty < max_cost)
            fail("loss_penalty", "K must be at least every real-facility cost (max " + std::to_string(max_cost) + ")");
        if (!data_.feasible.empty()) {
            if (static_cast<int>(data_.feasible.size()) != k) fail("feasible", "expected one list per patient type");
            for (int i = 0; i < k; ++i)
                for (int j : data_.feasible[static_cast<std::size_t>(i)])
                    if (j < 0 || j > l)
                        fail("feasible[" + std::to_string(i + 1) + "]", "facility " + std::to_string(j) + " out of range");
        }
        for (int a = 0; a <= l; ++a) {
            for (int j = 1; j <= l; ++j) {
                const std::string key = "kernels[\"" + std::to_string(a) + "," + std::to_string(j) + "\"]";
                auto it = data_.kernels.find({a, j});
                if (it == data_.kernels.end()) fail(key, "missing");
                for (int s = 0; s < 2; ++s) {
                    const auto& row = it->second[static_cast<std::size_t>(s)];
                    if (row[0] < 0.0 || row[1] < 0.0 || row[0] > 1.0 || row[1] > 1.0)
                        fail(key, "entries must lie in [0,1]");
                    if (std::abs(row[0] + row[1] - 1.0) > 1e-12)
                        fail(key, "row " + std::to_string(s) + " sums to " + std::to_string(row[0] + row[1]));
                }
            }
        }
        for (const auto& [key, m] : data_.kernels) {
            if (key.first < 0 || key.first > l || key.second < 1 || key.second > l)
                fail("kernels[\"" + std::to_string(key.first) + "," + std::to_string(key.second) + "\"]",
                     "index out of range");
        }
        if (!data_.type_labels.empty() && static_cast<int>(data_.type_labels.size()) != k)
            fail("labels.types", "expected " + std::to_string(k) + " labels");
        if (!data_.facility_labels.empty() && static_cast<int>(data_.facility_labels.size()) != l)
            fail("labels.facilities", "expected " + std::to_string(l) + " labels");
    }

    void build() {
        const int k = data_.num_types;
        const int l = data_.num_facilities;
        lambda_.assign(static_cast<std::size_t>(k) + 1, 0.0);
        double total = 0.0;
        for (int i = 1; i <= k; ++i) {
            lambda_[static_cast<std::size_t>(i)] = data_.lambda[static_cast<std::size_t>(i - 1)];
            total += lambda_[static_cast<std::size_t>(i)];
        }
        lambda_[0] = std::max(0.0, 1.0 - total);

        cost_.assign(static_cast<std::size_t>(k + 1) * stride(), 0.0);
        for (int i = 1; i <= k; ++i) {
            cost_[static_cast<std::size_t>(i) * stride()] = data_.loss_penalty;
            for (int j = 1; j <= l; ++j)
                cost_[static_cast<std::size_t>(i) * stride() + static_cast<std::size_t>(j)] =
                    data_.costs[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
        }

        kernel_.assign(stride() * stride(), kAlwaysAvailable);
        for (const auto& [key, m] : data_.kernels)
            kernel_[static_cast<std::size_t>(key.first) * stride() + static_cast<std::size_t>(key.second)] = m;

        allowed_.assign(static_cast<std::size_t>(k) + 1, 1u);
        for (int i = 1; i <= k; ++i) {
            std::uint32_t mask = 1u;
            if (data_.feasible.empty()) {
                mask = (1u << (l + 1)) - 1u;
            } else {
                for (int j : data_.feasible[static_cast<std::size_t>(i - 1)]) mask |= 1u << j;
            }
            allowed_[static_cast<std::size_t>(i)] = mask;
        }
    }

    InstanceData data_;
    std::vector<double> lambda_;
    std::vector<double> cost_;
    std::vector<Mat2> kernel_;
    std::vector<std::uint32_t> allowed_;
};

// ---------------------------------------------------------------------------
// State space

/// Dense indexing of the reachable states (i, s_0 = 1, s_1..s_l).
class StateSpace {
public:
    StateSpace(int num_types, int num_facilities) : k_(num_types), l_(num_facilities) {}
    explicit StateSpace(const Instance& inst) : StateSpace(inst.num_types(), inst.num_facilities()) {}

    int num_types() const { return k_; }
    int num_facilities() const { return l_; }
    std::size_t num_codes() const { return std::size_t{1} << l_; }
    std::size_t size() const { return static_cast<std::size_t>(k_ + 1) * num_codes(); }

    std::size_t encode(const SystemState& x) const {
        return static_cast<std::size_t>(x.patient) * num_codes() + x.avail;
    }
    SystemState decode(std::size_t index) const {
        return {static_cast<int>(index / num_codes()), static_cast<std::uint32_t>(index % num_codes())};
    }

    /// s_j for j in 0..l (s_0 = 1).
    bool available(std::uint32_t code, int j) const {
        return j == 0 || ((code >> (l_ - j)) & 1u);
    }
    bool available(const SystemState& x, int j) const { return available(x.avail, j); }

    static std::uint32_t bit(int l, int j) { return 1u << (l - j); }

    /// Packs s_1..s_l.
    std::uint32_t pack(std::span<const int> bits) const {
        if (static_cast<int>(bits.size()) != l_) throw InputError("availability vector must have length " + std::to_string(l_));
        std::uint32_t code = 0;
        for (int j = 1; j <= l_; ++j) {
            const int b = bits[static_cast<std::size_t>(j - 1)];
            if (b != 0 && b != 1) throw InputError("availability entries must be 0 or 1");
            if (b) code |= bit(l_, j);
        }
        return code;
    }

    /// "(i,s_1,..,s_l)", the key format used in serialized policies.
    std::string key(const SystemState& x) const {
        std::string out = "(" + std::to_string(x.patient);
        for (int j = 1; j <= l_; ++j) out += available(x, j) ? ",1" : ",0";
        return out + ")";
    }

    std::vector<SystemState> states() const {
        std::vector<SystemState> out;
        out.reserve(size());
        for (std::size_t n = 0; n < size(); ++n) out.push_back(decode(n));
        return out;
    }

private:
    int k_;
    int l_;
};

inline std::vector<SystemState> enumerate_states(const Instance& inst) {
    return StateSpace(inst).states();
}

/// A(x): {0} for patient 0, otherwise {0} plus every allowed available facility.
/// Ascending order.
inline std::vector<int> feasible_actions(const Instance& inst, const SystemState& x) {
    std::vector<int> out{0};
    if (x.patient == 0) return out;
    const StateSpace space(inst);
    for (int j = 1; j <= inst.num_facilities(); ++j)
        if (space.available(x, j) && inst.allowed(x.patient, j)) out.push_back(j);
    return out;
}

inline bool is_feasible(const Instance& inst, const SystemState& x, int a) {
    if (a == 0) return true;
    if (x.patient == 0 || a < 0 || a > inst.num_facilities()) return false;
    return StateSpace(inst).available(x, a) && inst.allowed(x.patient, a);
}

inline void require_feasible(const Instance& inst, const SystemState& x, int a) {
    if (!is_feasible(inst, x, a))
        throw InputError("action " + std::to_string(a) + " is not feasible in state " + StateSpace(inst).key(x));
}

// ---------------------------------------------------------------------------
// Transition kernel

struct Transition {
    SystemState next;
    double prob = 0.0;
};

using NextStateDistribution = std::vector<Transition>;

/// Probability that availability moves from code `from` to code `to` under action a.
inline double availability_prob(const Instance& inst, int a, std::uint32_t from, std::uint32_t to) {
    const int l = inst.num_facilities();
    double p = 1.0;
    for (int j = 1; j <= l; ++j) {
        const int s = (from >> (l - j)) & 1u;
        const int t = (to >> (l - j)) & 1u;
        p *= inst.kernel(a, j)[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
    }
    return p;
}

/// Row T_a(from, .) over all 2^l availability codes.
inline std::vector<double> availability_row(const Instance& inst, int a, std::uint32_t from) {
    const std::size_t codes = std::size_t{1} << inst.num_facilities();
    std::vector<double> row(codes);
    for (std::size_t to = 0; to < codes; ++to)
        row[to] = availability_prob(inst, a, from, static_cast<std::uint32_t>(to));
    return row;
}

/// Next-state distribution of (x, a); entries with zero probability are omitted.
inline NextStateDistribution kernel(const Instance& inst, const SystemState& x, int a) {
    require_feasible(inst, x, a);
    const auto row = availability_row(inst, a, x.avail);
    NextStateDistribution out;
    for (int ip = 0; ip <= inst.num_types(); ++ip) {
        const double lam = inst.discharge_prob(ip);
        if (lam <= 0.0) continue;
        for (std::size_t to = 0; to < row.size(); ++to) {
            const double p = lam * row[to];
            if (p > 0.0) out.push_back({{ip, static_cast<std::uint32_t>(to)}, p});
        }
    }
    return out;
}

/// For every code s: sum over s' of T_a(s, s') f(s'). Applies each facility's
/// 2x2 matrix along its own axis, O(l 2^l) instead of O(4^l).
inline std::vector<double> expect_availability(const Instance& inst, int a, std::span<const double> f) {
    const int l = inst.num_facilities();
    const std::size_t codes = std::size_t{1} << l;
    if (f.size() != codes) throw InputError("expect_availability: vector length mismatch");
    std::vector<double> y(f.begin(), f.end());
    for (int j = 1; j <= l; ++j) {
        const std::size_t b = std::size_t{1} << (l - j);
        const Mat2& m = inst.kernel(a, j);
        for (std::size_t c = 0; c < codes; ++c) {
            if (c & b) continue;
            const double y0 = y[c];
            const double y1 = y[c | b];
            y[c] = m[0][0] * y0 + m[0][1] * y1;
            y[c | b] = m[1][0] * y0 + m[1][1] * y1;
        }
    }
    return y;
}

/// sum_i' lambda_i' v(i', s') for every code s'.
inline std::vector<double> mix_over_patients(const Instance& inst, std::span<const double> v) {
    const StateSpace space(inst);
    if (v.size() != space.size()) throw InputError("value vector has length " + std::to_string(v.size()) +
                                                   ", expected " + std::to_string(space.size()));
    const std::size_t codes = space.num_codes();
    std::vector<double> out(codes, 0.0);
    for (int ip = 0; ip <= inst.num_types(); ++ip) {
        const double lam = inst.discharge_prob(ip);
        for (std::size_t c = 0; c < codes; ++c) out[c] += lam * v[static_cast<std::size_t>(ip) * codes + c];
    }
    return out;
}

/// Expected next-period value E[v(X') | s, a] for every availability code s.
/// Row a of the result is indexed by action 0..l.
inline std::vector<std::vector<double>> expected_next_values(const Instance& inst, std::span<const double> v) {
    const auto mixed = mix_over_patients(inst, v);
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(inst.num_facilities()) + 1);
    for (int a = 0; a <= inst.num_facilities(); ++a) out.push_back(expect_availability(inst, a, mixed));
    return out;
}

// ---------------------------------------------------------------------------
// Bellman operator

struct BellmanResult {
    std::vector<double> value;
    std::vector<int> greedy;
};

/// (Tv)(x) = min_a { r^a_i + alpha * E[v(X') | x, a] }, ties to the lowest action.
inline BellmanResult bellman_apply(const Instance& inst, std::span<const double> v, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in [0,1]");
    const StateSpace space(inst);
    const auto next = expected_next_values(inst, v);
    BellmanResult out;
    out.value.resize(space.size());
    out.greedy.resize(space.size());
    for (std::size_t n = 0; n < space.size(); ++n) {
        const SystemState x = space.decode(n);
        double best = 0.0;
        int arg = -1;
        for (int a : feasible_actions(inst, x)) {
            const double q = inst.cost(x.patient, a) + alpha * next[static_cast<std::size_t>(a)][x.avail];
            if (arg < 0 || q < best) {
                best = q;
                arg = a;
            }
        }
        out.value[n] = best;
        out.greedy[n] = arg;
    }
    return out;
}

}  // namespace snfmdp
