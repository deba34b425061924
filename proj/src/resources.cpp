#include "ruledist/resources.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "ruledist/errors.hpp"

namespace ruledist {

double critical_slack(const ResourceVector& capacity, const ResourceVector& used) {
    double slack = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < kNumResources; ++m) {
        const double s = capacity[m] - used[m];
        if (s < -kFeasibilityEps) {
            throw ContractError("critical_slack: used exceeds capacity in component " +
                                std::to_string(m));
        }
        slack = std::min(slack, std::max(s, 0.0));
    }
    return slack;
}

double global_critical(
    std::span<const std::pair<ResourceVector, ResourceVector>> nodes_remaining) {
    if (nodes_remaining.empty()) {
        throw ContractError("global_critical: empty node list");
    }
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& [capacity, used] : nodes_remaining) {
        worst = std::min(worst, critical_slack(capacity, used));
    }
    return worst;
}

bool fits(const ResourceVector& capacity, const ResourceVector& used,
          const ResourceVector& demand) {
    for (std::size_t m = 0; m < kNumResources; ++m) {
        if (used[m] + demand[m] > capacity[m] + kFeasibilityEps) return false;
    }
    return true;
}

double compute_critical(const ResourceVector& capacity, const ResourceVector& used,
                        const ResourceVector& demand) {
    double slack = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < kNumResources; ++m) {
        slack = std::min(slack, capacity[m] - used[m] - demand[m]);
    }
    return slack;
}

}  // namespace ruledist
