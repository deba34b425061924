#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace ruledist {

// Number of resource dimensions (CPU, RAM, storage).
inline constexpr std::size_t kNumResources = 3;

// Absolute tolerance on feasibility comparisons, so exact-fit placements are
// not rejected by rounding noise.
inline constexpr double kFeasibilityEps = 1e-9;

// Fixed-length vector of normalized resource quantities. Node capacities
// live in [0,1]^3; rule demands in [0.01,0.30]^3 under the default generator.
struct ResourceVector {
    std::array<double, kNumResources> values{};

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool operator==(const ResourceVector&) const = default;

    ResourceVector& operator+=(const ResourceVector& o) {
        for (std::size_t m = 0; m < kNumResources; ++m) values[m] += o.values[m];
        return *this;
    }

    ResourceVector& operator-=(const ResourceVector& o) {
        for (std::size_t m = 0; m < kNumResources; ++m) values[m] -= o.values[m];
        return *this;
    }

    static ResourceVector zero() { return {}; }

    static ResourceVector filled(double v) {
        ResourceVector r;
        r.values.fill(v);
        return r;
    }
};

// Minimum residual slack of one node: min_m(capacity_m - used_m).
// Precondition: used <= capacity component-wise (up to tolerance).
double critical_slack(const ResourceVector& capacity, const ResourceVector& used);

// Most critical resource among a set of nodes: min over nodes of
// critical_slack. The caller excludes the reject node. Errors on empty input.
double global_critical(std::span<const std::pair<ResourceVector, ResourceVector>> nodes_remaining);

// True iff the demand fits into the remaining capacity in every component,
// with absolute tolerance kFeasibilityEps on the comparison.
bool fits(const ResourceVector& capacity, const ResourceVector& used,
          const ResourceVector& demand);

// Residual slack that would remain after placing `demand`:
// min_m(capacity_m - used_m - demand_m). Negative values signal infeasibility.
double compute_critical(const ResourceVector& capacity, const ResourceVector& used,
                        const ResourceVector& demand);

}  // namespace ruledist
