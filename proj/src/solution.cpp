#include "ruledist/solution.hpp"

#include <json.hpp>

#include "ruledist/errors.hpp"

namespace ruledist {

namespace {

Kpis derive_kpis(const ProblemInstance& instance, const std::vector<int>& assignment,
                 const std::vector<ResourceVector>& used) {
    Kpis k;
    int rejected = 0;
    for (int a : assignment) rejected += (a == kReject);
    k.rejection_rate =
        assignment.empty() ? 0.0 : static_cast<double>(rejected) / assignment.size();

    std::vector<bool> touched(instance.nodes.size(), false);
    for (int a : assignment) {
        if (a != kReject) touched[static_cast<std::size_t>(a)] = true;
    }
    double omega = 1.0;
    for (std::size_t j = 1; j < instance.nodes.size(); ++j) {
        omega = std::min(omega, critical_slack(instance.nodes[j].capacity, used[j]));
        if (touched[j]) {
            ++k.used_nodes;
        } else {
            ++k.empty_nodes;
        }
    }
    k.omega_max = omega;
    return k;
}

}  // namespace

Solution replay_assignment(const ProblemInstance& instance, std::vector<int> assignment) {
    if (assignment.size() != instance.rules.size()) {
        throw ContractError("solution: assignment length != rule count");
    }
    std::vector<ResourceVector> used(instance.nodes.size(), ResourceVector::zero());
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const int a = assignment[i];
        if (a == kReject) continue;
        if (a <= 0 || a >= static_cast<int>(instance.nodes.size())) {
            throw ContractError("solution: assignment references invalid node " +
                                std::to_string(a));
        }
        const auto& node = instance.nodes[static_cast<std::size_t>(a)];
        const auto& demand = instance.rules[i].demand;
        if (!fits(node.capacity, used[static_cast<std::size_t>(a)], demand)) {
            throw ContractError("solution: capacity violated at node " + std::to_string(a) +
                                " by rule " + std::to_string(i));
        }
        used[static_cast<std::size_t>(a)] += demand;
    }
    Solution s;
    s.kpis = derive_kpis(instance, assignment, used);
    s.assignment = std::move(assignment);
    return s;
}

bool is_feasible(const ProblemInstance& instance, const std::vector<int>& assignment) {
    try {
        replay_assignment(instance, assignment);
        return true;
    } catch (const ContractError&) {
        return false;
    }
}

std::string solution_to_json(const Solution& solution) {
    nlohmann::json j;
    j["assignment"] = solution.assignment;
    j["kpis"] = {{"rejection_rate", solution.kpis.rejection_rate},
                 {"omega_max", solution.kpis.omega_max},
                 {"empty_nodes", solution.kpis.empty_nodes},
                 {"used_nodes", solution.kpis.used_nodes}};
    return j.dump();
}

Solution solution_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("solution: invalid JSON: ") + e.what());
    }
    Solution s;
    s.assignment = j.at("assignment").get<std::vector<int>>();
    const auto& k = j.at("kpis");
    s.kpis.rejection_rate = k.at("rejection_rate").get<double>();
    s.kpis.omega_max = k.at("omega_max").get<double>();
    s.kpis.empty_nodes = k.at("empty_nodes").get<int>();
    s.kpis.used_nodes = k.at("used_nodes").get<int>();
    return s;
}

}  // namespace ruledist
