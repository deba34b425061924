#pragma once

#include <string>
#include <vector>

#include "ruledist/instance.hpp"

namespace ruledist {

// Sentinel assignment value for rejected rules. Real placements store the
// node id (1-based: the reject node occupies index 0 of the node list).
inline constexpr int kReject = -1;

struct Kpis {
    double rejection_rate = 0.0;  // #REJECT / num_rules
    double omega_max = 0.0;       // min critical slack over real nodes
    int empty_nodes = 0;          // real nodes with no assigned rules
    int used_nodes = 0;           // real nodes with at least one rule

    bool operator==(const Kpis&) const = default;
};

// Assignment of each rule to a node id or kReject, with derived KPIs.
struct Solution {
    std::vector<int> assignment;  // indexed by rule id
    Kpis kpis;

    bool operator==(const Solution&) const = default;

    int accepted_count() const {
        int n = 0;
        for (int a : assignment) n += (a != kReject);
        return n;
    }
};

// Replays `assignment` against the instance, checking feasibility, and
// returns the completed Solution with KPIs. Throws ContractError if the
// assignment references unknown nodes or violates a capacity constraint.
Solution replay_assignment(const ProblemInstance& instance, std::vector<int> assignment);

// True iff the assignment replays without violating any capacity constraint.
bool is_feasible(const ProblemInstance& instance, const std::vector<int>& assignment);

// JSON form: {"assignment": [int|-1,...], "kpis": {...}}.
std::string solution_to_json(const Solution& solution);
Solution solution_from_json(const std::string& json_text);

}  // namespace ruledist
