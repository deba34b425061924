#include "ruledist/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ruledist/errors.hpp"

namespace ruledist {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double omega_of(const ProblemInstance& instance, const std::vector<ResourceVector>& used) {
    double omega = 1.0;
    for (std::size_t j = 1; j < instance.nodes.size(); ++j) {
        omega = std::min(omega, critical_slack(instance.nodes[j].capacity, used[j]));
    }
    return omega;
}

double evaluate(const ProblemInstance& instance, const std::vector<int>& assignment,
                const std::vector<ResourceVector>& used, Objective objective) {
    int accepted = 0;
    for (int a : assignment) accepted += (a != kReject);
    switch (objective) {
        case Objective::Greedy:
            return accepted;
        case Objective::CriticalAware:
            return accepted + omega_of(instance, used);
        case Objective::CostAware: {
            std::vector<bool> touched(instance.nodes.size(), false);
            int used_nodes = 0;
            for (int a : assignment) {
                if (a != kReject && !touched[static_cast<std::size_t>(a)]) {
                    touched[static_cast<std::size_t>(a)] = true;
                    ++used_nodes;
                }
            }
            const int real = static_cast<int>(instance.nodes.size()) - 1;
            return accepted - static_cast<double>(used_nodes) / real;
        }
    }
    return 0.0;
}

struct BnbContext {
    const ProblemInstance& instance;
    Objective objective;
    OracleLimits limits;
    Clock::time_point start;

    std::vector<int> order;           // rule ids, decreasing largest demand
    std::vector<int> assignment;      // by rule id
    std::vector<ResourceVector> used;
    std::vector<int> placed_count;    // per node
    int accepted = 0;
    int used_nodes = 0;

    std::vector<int> best_assignment;
    double best_value = -std::numeric_limits<double>::infinity();
    bool have_incumbent = false;
    std::uint64_t explored = 0;
    bool out_of_budget = false;

    bool budget_exceeded() {
        if (out_of_budget) return true;
        if (explored >= limits.max_nodes_explored ||
            ((explored & 0x3ff) == 0 && ms_since(start) > limits.max_wall_time_ms)) {
            out_of_budget = true;
        }
        return out_of_budget;
    }

    // Admissible upper bound for the subtree at depth (rules order[depth..]
    // still undecided).
    double upper_bound(int depth) const {
        const int remaining = static_cast<int>(order.size()) - depth;
        switch (objective) {
            case Objective::Greedy:
                return accepted + remaining;
            case Objective::CriticalAware:
                return accepted + remaining + 1.0;  // omega_max <= 1
            case Objective::CostAware: {
                const int real = static_cast<int>(instance.nodes.size()) - 1;
                return accepted + remaining - static_cast<double>(used_nodes) / real;
            }
        }
        return std::numeric_limits<double>::infinity();
    }

    void offer_incumbent() {
        // Replay in rule-id order so the objective is bit-identical to the
        // exhaustive enumerator's, independent of branching order.
        std::vector<ResourceVector> canonical(instance.nodes.size(), ResourceVector::zero());
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            if (assignment[i] != kReject) {
                canonical[static_cast<std::size_t>(assignment[i])] += instance.rules[i].demand;
            }
        }
        const double value = evaluate(instance, assignment, canonical, objective);
        if (!have_incumbent || value > best_value) {
            best_value = value;
            best_assignment = assignment;
            have_incumbent = true;
        }
    }

    void dfs(int depth) {
        ++explored;
        if (budget_exceeded()) return;
        if (depth == static_cast<int>(order.size())) {
            offer_incumbent();
            return;
        }
        if (have_incumbent && upper_bound(depth) <= best_value) return;

        const int rule_id = order[static_cast<std::size_t>(depth)];
        const auto& demand = instance.rules[static_cast<std::size_t>(rule_id)].demand;

        // Feasible real nodes, most residual slack first.
        std::vector<std::pair<double, int>> children;
        for (int node_id = 1; node_id < static_cast<int>(instance.nodes.size()); ++node_id) {
            const double score = compute_critical(
                instance.nodes[static_cast<std::size_t>(node_id)].capacity,
                used[static_cast<std::size_t>(node_id)], demand);
            if (score >= -kFeasibilityEps) children.emplace_back(score, node_id);
        }
        std::sort(children.begin(), children.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });

        for (const auto& [score, node_id] : children) {
            const auto n = static_cast<std::size_t>(node_id);
            used[n] += demand;
            ++accepted;
            if (placed_count[n]++ == 0) ++used_nodes;
            assignment[static_cast<std::size_t>(rule_id)] = node_id;

            dfs(depth + 1);

            assignment[static_cast<std::size_t>(rule_id)] = kReject;
            if (--placed_count[n] == 0) --used_nodes;
            --accepted;
            used[n] -= demand;
            if (out_of_budget) return;
        }

        dfs(depth + 1);  // reject branch
    }
};

}  // namespace

std::string to_string(Objective objective) {
    return to_string(reward_kind_of(objective));
}

Objective objective_from_string(const std::string& name) {
    return objective_of(reward_kind_from_string(name));
}

double objective_value(const ProblemInstance& instance, const Solution& solution,
                       Objective objective) {
    // Replay validates feasibility and rebuilds the final resource state.
    const Solution replayed = replay_assignment(instance, solution.assignment);
    switch (objective) {
        case Objective::Greedy:
            return replayed.accepted_count();
        case Objective::CriticalAware:
            return replayed.accepted_count() + replayed.kpis.omega_max;
        case Objective::CostAware:
            return replayed.accepted_count() -
                   static_cast<double>(replayed.kpis.used_nodes) / instance.num_real_nodes();
    }
    return 0.0;
}

OracleResult solve_exhaustive(const ProblemInstance& instance, Objective objective) {
    const auto start = Clock::now();
    const int real = instance.num_real_nodes();
    const int rules = instance.num_rules();

    double tree = 1.0;
    for (int i = 0; i < rules; ++i) tree *= real + 1;
    if (tree > 1e7) {
        throw DataError("solve_exhaustive: instance too large: (" + std::to_string(real) +
                        "+1)^" + std::to_string(rules) + " assignments exceed 1e7");
    }

    // Odometer over assignments in lexicographic order with digit order
    // REJECT < node 1 < ... < node R, so the first strict maximum is the
    // lexicographically smallest optimal assignment.
    std::vector<int> digits(static_cast<std::size_t>(rules), kReject);
    std::vector<int> best = digits;
    double best_value = -std::numeric_limits<double>::infinity();
    std::uint64_t explored = 0;
    std::vector<ResourceVector> used(instance.nodes.size());

    for (;;) {
        ++explored;
        std::fill(used.begin(), used.end(), ResourceVector::zero());
        bool feasible = true;
        for (int i = 0; i < rules && feasible; ++i) {
            const int a = digits[static_cast<std::size_t>(i)];
            if (a == kReject) continue;
            const auto n = static_cast<std::size_t>(a);
            const auto& demand = instance.rules[static_cast<std::size_t>(i)].demand;
            if (!fits(instance.nodes[n].capacity, used[n], demand)) {
                feasible = false;
            } else {
                used[n] += demand;
            }
        }
        if (feasible) {
            const double value = evaluate(instance, digits, used, objective);
            if (value > best_value) {
                best_value = value;
                best = digits;
            }
        }
        // Increment the odometer, most significant digit first.
        int pos = rules - 1;
        while (pos >= 0) {
            auto& d = digits[static_cast<std::size_t>(pos)];
            if (d < real) {
                d = (d == kReject) ? 1 : d + 1;
                break;
            }
            d = kReject;
            --pos;
        }
        if (pos < 0) break;
    }

    OracleResult result;
    result.solution = replay_assignment(instance, best);
    result.objective_value = best_value;
    result.proven_optimal = true;
    result.nodes_explored = explored;
    result.wall_ms = ms_since(start);
    return result;
}

OracleResult solve_bnb(const ProblemInstance& instance, Objective objective,
                       const OracleLimits& limits) {
    const auto start = Clock::now();

    BnbContext ctx{instance, objective, limits, start,
                   {}, {}, {}, {}, 0, 0, {}, 0.0, false, 0, false};
    ctx.order.resize(instance.rules.size());
    std::iota(ctx.order.begin(), ctx.order.end(), 0);
    std::stable_sort(ctx.order.begin(), ctx.order.end(), [&](int a, int b) {
        const auto la = *std::max_element(
            instance.rules[static_cast<std::size_t>(a)].demand.values.begin(),
            instance.rules[static_cast<std::size_t>(a)].demand.values.end());
        const auto lb = *std::max_element(
            instance.rules[static_cast<std::size_t>(b)].demand.values.begin(),
            instance.rules[static_cast<std::size_t>(b)].demand.values.end());
        if (la != lb) return la > lb;
        return a < b;
    });
    ctx.assignment.assign(instance.rules.size(), kReject);
    ctx.used.assign(instance.nodes.size(), ResourceVector::zero());
    ctx.placed_count.assign(instance.nodes.size(), 0);

    ctx.dfs(0);
    if (!ctx.have_incumbent) {
        // Only possible when the budget ran out before reaching any leaf;
        // the all-reject assignment is always feasible.
        ctx.offer_incumbent();
    }

    OracleResult result;
    result.solution = replay_assignment(instance, ctx.best_assignment);
    result.objective_value = ctx.best_value;
    result.proven_optimal = !ctx.out_of_budget;
    result.nodes_explored = ctx.explored;
    result.wall_ms = ms_since(start);
    return result;
}

std::string oracle_result_to_json(const OracleResult& result) {
    nlohmann::json j = nlohmann::json::parse(solution_to_json(result.solution));
    j["objective"] = result.objective_value;
    j["proven_optimal"] = result.proven_optimal;
    j["nodes_explored"] = result.nodes_explored;
    j["wall_ms"] = result.wall_ms;
    return j.dump();
}

}  // namespace ruledist
