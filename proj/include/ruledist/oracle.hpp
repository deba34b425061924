#pragma once

#include <cstdint>
#include <string>

#include "ruledist/env.hpp"
#include "ruledist/solution.hpp"

namespace ruledist {

// The three problem variants. Mirrors RewardKind; kept separate because the
// solver objective and the per-step reward are distinct contracts.
enum class Objective { Greedy, CriticalAware, CostAware };

std::string to_string(Objective objective);
Objective objective_from_string(const std::string& name);
inline Objective objective_of(RewardKind kind) { return static_cast<Objective>(kind); }
inline RewardKind reward_kind_of(Objective o) { return static_cast<RewardKind>(o); }

struct OracleResult {
    Solution solution;
    double objective_value = 0.0;
    bool proven_optimal = false;
    std::uint64_t nodes_explored = 0;
    double wall_ms = 0.0;
};

struct OracleLimits {
    std::uint64_t max_nodes_explored = UINT64_MAX;
    double max_wall_time_ms = 60'000.0;
};

// Value of a feasible solution under the given objective:
//   Greedy        -> accepted count
//   CriticalAware -> accepted count + final omega_max
//   CostAware     -> accepted count - used_nodes / num_real_nodes
// Throws ContractError on infeasible solutions.
double objective_value(const ProblemInstance& instance, const Solution& solution,
                       Objective objective);

// Enumerates every assignment of each rule to {REJECT} u real nodes in
// lexicographic order (REJECT first), skipping capacity-infeasible ones, and
// returns the first maximizer. Guarded at (num_real_nodes+1)^num_rules <= 1e7;
// beyond that it throws DataError.
OracleResult solve_exhaustive(const ProblemInstance& instance, Objective objective);

// Depth-first branch and bound over rule -> node assignments. Rules are
// branched in order of decreasing largest demand component; children are the
// feasible real nodes by decreasing residual slack, then REJECT. A branch is
// pruned when its admissible upper bound cannot beat the incumbent. Limits
// never raise: they return the incumbent with proven_optimal = false.
OracleResult solve_bnb(const ProblemInstance& instance, Objective objective,
                       const OracleLimits& limits = {});

// Solution JSON extended with the oracle fields.
std::string oracle_result_to_json(const OracleResult& result);

}  // namespace ruledist
