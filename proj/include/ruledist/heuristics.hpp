#pragma once

#include <cstdint>
#include <string>

#include "ruledist/solution.hpp"

namespace ruledist {

enum class SortOrder { Ascending, Descending };

// The four critical-resource insertion variants: (rule size order, critical
// score order).
enum class HeuristicVariant { DrDc, DrAc, ArDc, ArAc, Random };

std::string to_string(HeuristicVariant v);
HeuristicVariant heuristic_from_string(const std::string& name);

// Visits rules in a seeded random order and, per rule, tries candidate nodes
// in a seeded random order without replacement; the first feasible node takes
// the rule, otherwise it is rejected. Deterministic given the seed.
Solution random_insertion(const ProblemInstance& instance, std::uint64_t seed);

// Two-step insertion: rules sorted by their largest demand component
// (rule_order, ties by id ascending); per rule every real node is scored by
// compute_critical and visited in critical_order (ties by node id ascending);
// the first node with a non-negative score takes the rule.
Solution critical_insertion(const ProblemInstance& instance, SortOrder rule_order,
                            SortOrder critical_order);

// Dispatch by variant; `seed` is only used by Random.
Solution solve_heuristic(const ProblemInstance& instance, HeuristicVariant variant,
                         std::uint64_t seed = 0);

}  // namespace ruledist
