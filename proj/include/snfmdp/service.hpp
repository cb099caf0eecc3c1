#pragma once

// JSON-over-HTTP transfer advisor. Policies are computed when an instance is
// loaded (heuristics) or on POST /solve (optimal); /recommend is a lookup in
// the current immutable snapshot plus an explanation.

#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "snfmdp/instance_io.hpp"
#include "snfmdp/policies.hpp"
#include "snfmdp/results_io.hpp"
#include "snfmdp/solve.hpp"
#include "snfmdp/version.hpp"

namespace snfmdp {

struct ApiResponse {
    int status = 200;
    json body;
};

struct AdvisorOptions {
    double two_step_weight = 0.5;
    bool solve_on_start = false;
    std::string decision_log;  // append-only CSV, disabled when empty
};

class Advisor {
public:
    struct Snapshot {
        std::shared_ptr<const Instance> instance;
        std::string hash;
        Policy myopic;
        Policy rpr;
        Policy two_step;
        std::optional<SolveResult> optimal;
    };

    explicit Advisor(Instance inst, AdvisorOptions opt = {}) : opt_(std::move(opt)) {
        detail_require_weight(opt_.two_step_weight);
        auto snap = std::make_shared<Snapshot>();
        snap->instance = std::make_shared<const Instance>(std::move(inst));
        snap->hash = instance_hash(*snap->instance);
        snap->myopic = myopic_policy(*snap->instance);
        snap->rpr = rpr_policy(*snap->instance);
        snap->two_step = two_step_policy(*snap->instance, opt_.two_step_weight);
        if (opt_.solve_on_start) snap->optimal = policy_iteration_average(*snap->instance);
        snapshot_ = std::move(snap);
    }

    std::shared_ptr<const Snapshot> snapshot() const {
        std::lock_guard<std::mutex> lock(mu_);
        return snapshot_;
    }

    ApiResponse health() const {
        const auto snap = snapshot();
        return {200, {{"status", "ok"}, {"version", kVersion}, {"instance_hash", snap->hash}}};
    }

    ApiResponse instance() const {
        const auto snap = snapshot();
        const Instance& inst = *snap->instance;
        json j = instance_to_json(inst);
        json types = json::array();
        for (int i = 1; i <= inst.num_types(); ++i) types.push_back(inst.type_label(i));
        json facilities = json::array();
        for (int f = 1; f <= inst.num_facilities(); ++f) facilities.push_back(inst.facility_label(f));
        j["labels"] = {{"types", types}, {"facilities", facilities}};
        j["num_states"] = StateSpace(inst).size();
        j["hash"] = snap->hash;
        return {200, j};
    }

    ApiResponse policies() const {
        const auto snap = snapshot();
        json list = json::array({"myopic", "rpr", "two_step"});
        if (snap->optimal) list.push_back("optimal");
        return {200, {{"policies", list}, {"two_step_weight", opt_.two_step_weight}}};
    }

    ApiResponse recommend(const std::string& body) const {
        json req;
        try {
            req = json::parse(body);
        } catch (const json::parse_error& e) {
            return error(400, std::string("malformed JSON: ") + e.what());
        }
        if (!req.is_object()) return error(400, "request must be a JSON object");
        for (const char* field : {"patient_type", "availability"})
            if (!req.contains(field)) return error(400, std::string("missing field \"") + field + "\"");
        if (req.contains("policy") && !req.at("policy").is_string()) return error(400, "policy must be a string");
        const std::string policy_name = req.value("policy", std::string("optimal"));
        if (!req.at("availability").is_array()) return error(400, "availability must be an array of booleans");
        for (const auto& b : req.at("availability"))
            if (!b.is_boolean()) return error(400, "availability must be an array of booleans");
        if (!req.at("patient_type").is_string() && !req.at("patient_type").is_number_integer())
            return error(400, "patient_type must be a label or an index");

        const auto snap = snapshot();
        const Instance& inst = *snap->instance;
        const StateSpace space(inst);

        int type = -1;
        const json& pt = req.at("patient_type");
        if (pt.is_number_integer()) {
            type = pt.get<int>();
            if (type < 1 || type > inst.num_types()) return error(422, "unknown patient type " + pt.dump());
        } else {
            const std::string label = pt.get<std::string>();
            for (int i = 1; i <= inst.num_types(); ++i)
                if (inst.type_label(i) == label) type = i;
            if (type < 0) return error(422, "unknown patient type \"" + label + "\"");
        }
        const json& avail = req.at("availability");
        if (static_cast<int>(avail.size()) != inst.num_facilities())
            return error(422, "availability has " + std::to_string(avail.size()) + " entries, expected " +
                                  std::to_string(inst.num_facilities()));
        std::vector<int> bits;
        for (const auto& b : avail) bits.push_back(b.get<bool>() ? 1 : 0);
        const SystemState x{type, space.pack(bits)};
        const std::size_t n = space.encode(x);

        json resp;
        resp["state"] = space.key(x);
        resp["patient_type"] = inst.type_label(type);
        resp["policy"] = policy_name;
        int action = 0;
        if (policy_name == "optimal") {
            if (!snap->optimal) return error(409, "optimal policy not solved yet; POST /solve first");
            const SolveResult& r = *snap->optimal;
            action = r.policy.actions[n];
            const double alpha = r.criterion == Criterion::average ? 1.0 : r.alpha;
            json values = json::array();
            for (const ActionValue& q : action_values(inst, r.value, alpha, x))
                values.push_back({{"action", q.action},
                                  {"facility", inst.facility_label(q.action)},
                                  {"immediate", q.immediate},
                                  {"future", q.future},
                                  {"total", q.total}});
            resp["explanation"] = {{"kind", "optimality_equation"}, {"criterion", r.criterion == Criterion::average ? "average" : "discounted"}, {"actions", values}};
            if (r.criterion == Criterion::average) resp["explanation"]["g"] = r.gain;
        } else if (policy_name == "myopic" || policy_name == "rpr" || policy_name == "two_step") {
            const Heuristic h = policy_name == "myopic" ? Heuristic::myopic
                                : policy_name == "rpr"  ? Heuristic::rpr
                                                        : Heuristic::two_step;
            const Policy& p = h == Heuristic::myopic ? snap->myopic : h == Heuristic::rpr ? snap->rpr : snap->two_step;
            action = p.actions[n];
            resp["explanation"] = score_breakdown_to_json(inst, explain(inst, x, h, opt_.two_step_weight));
        } else {
            return error(422, "unknown policy \"" + policy_name + "\"");
        }
        resp["action"] = action;
        resp["facility"] = inst.facility_label(action);
        resp["loss"] = action == 0;
        log_decision(inst.type_label(type), bits, policy_name, action);
        return {200, resp};
    }

    /// Body (optional): {"criterion": "average"|"discounted", "alpha": a, "tol": t}.
    ApiResponse solve(const std::string& body) {
        json req = json::object();
        if (!body.empty()) {
            try {
                req = json::parse(body);
            } catch (const json::parse_error& e) {
                return error(400, std::string("malformed JSON: ") + e.what());
            }
            if (!req.is_object()) return error(400, "request must be a JSON object");
        }
        std::string criterion;
        double alpha = 0.0;
        double tol = 0.0;
        try {
            criterion = req.value("criterion", std::string("average"));
            alpha = req.value("alpha", 0.99);
            tol = req.value("tol", 1e-9);
        } catch (const json::exception& e) {
            return error(400, e.what());
        }
        if (criterion != "average" && criterion != "discounted") return error(422, "criterion must be average or discounted");
        if (!(tol > 0.0)) return error(422, "tol must be positive");
        if (criterion == "discounted" && !(alpha > 0.0 && alpha < 1.0)) return error(422, "alpha must lie in (0,1)");

        std::lock_guard<std::mutex> solving(solve_mu_);
        const auto current = snapshot();
        auto next = std::make_shared<Snapshot>(*current);
        try {
            if (criterion == "average") {
                AverageSolveOptions o;
                o.tol = tol;
                next->optimal = policy_iteration_average(*next->instance, o);
            } else {
                ValueIterationOptions o;
                o.tol = tol;
                next->optimal = value_iteration_discounted(*next->instance, alpha, o);
            }
        } catch (const Error& e) {
            return error(500, e.what());
        }
        json out = solve_result_to_json(*next->instance, *next->optimal);
        {
            std::lock_guard<std::mutex> lock(mu_);
            snapshot_ = std::move(next);
        }
        return {200, out};
    }

private:
    static void detail_require_weight(double w) {
        if (!(w > 0.0 && w <= 1.0)) throw InputError("two-step weight must lie in (0,1]");
    }

    static ApiResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

    void log_decision(const std::string& type, const std::vector<int>& bits, const std::string& policy, int action) const {
        if (opt_.decision_log.empty()) return;
        std::string availability;
        for (int b : bits) availability += b ? '1' : '0';
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
        std::lock_guard<std::mutex> lock(log_mu_);
        const bool fresh = !std::ifstream(opt_.decision_log).good();
        std::ofstream out(opt_.decision_log, std::ios::app);
        if (fresh) out << "timestamp,patient_type,availability,policy,action\n";
        out << stamp << ',' << type << ',' << availability << ',' << policy << ',' << action << '\n';
    }

    AdvisorOptions opt_;
    mutable std::mutex mu_;
    std::mutex solve_mu_;
    mutable std::mutex log_mu_;
    std::shared_ptr<const Snapshot> snapshot_;
};

/// HTTP front end for an Advisor.
class AdvisorServer {
public:
    explicit AdvisorServer(Advisor& advisor) : advisor_(advisor) {
        auto reply = [](httplib::Response& res, const ApiResponse& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        server_.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, advisor_.health()); });
        server_.Get("/instance", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, advisor_.instance()); });
        server_.Get("/policies", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, advisor_.policies()); });
        server_.Post("/recommend", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, advisor_.recommend(req.body));
        });
        server_.Post("/solve", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, advisor_.solve(req.body));
        });
        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string msg = "internal error";
            try {
                std::rethrow_exception(ep);
            } catch (const InputError& e) {
                res.status = 422;
                msg = e.what();
            } catch (const std::exception& e) {
                res.status = 500;
                msg = e.what();
            }
            res.set_content(json{{"error", msg}}.dump(), "application/json");
        });
    }

    /// Blocks until stop().
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }

    /// Binds an ephemeral port and serves on a background thread.
    int start_background(const std::string& host = "127.0.0.1") {
        const int port = server_.bind_to_any_port(host);
        if (port < 0) throw Error("could not bind " + host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ~AdvisorServer() { stop(); }

private:
    Advisor& advisor_;
    httplib::Server server_;
    std::thread thread_;
};

}  // namespace snfmdp
