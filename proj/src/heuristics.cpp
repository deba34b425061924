#include "ruledist/heuristics.hpp"

#include <algorithm>
#include <numeric>

#include "ruledist/errors.hpp"
#include "ruledist/rng.hpp"

namespace ruledist {

namespace {

double largest_component(const ResourceVector& v) {
    return *std::max_element(v.values.begin(), v.values.end());
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.next_below(i)]);
    }
}

}  // namespace

std::string to_string(HeuristicVariant v) {
    switch (v) {
        case HeuristicVariant::DrDc: return "DR-DC";
        case HeuristicVariant::DrAc: return "DR-AC";
        case HeuristicVariant::ArDc: return "AR-DC";
        case HeuristicVariant::ArAc: return "AR-AC";
        case HeuristicVariant::Random: return "Random";
    }
    return "Random";
}

HeuristicVariant heuristic_from_string(const std::string& name) {
    if (name == "DR-DC" || name == "dr-dc") return HeuristicVariant::DrDc;
    if (name == "DR-AC" || name == "dr-ac") return HeuristicVariant::DrAc;
    if (name == "AR-DC" || name == "ar-dc") return HeuristicVariant::ArDc;
    if (name == "AR-AC" || name == "ar-ac") return HeuristicVariant::ArAc;
    if (name == "Random" || name == "random") return HeuristicVariant::Random;
    throw ConfigError("unknown heuristic: " + name);
}

Solution random_insertion(const ProblemInstance& instance, std::uint64_t seed) {
    Rng rng(hash_combine(seed, 0x72616e64));  // "rand"

    std::vector<int> rule_order(instance.rules.size());
    std::iota(rule_order.begin(), rule_order.end(), 0);
    shuffle_in_place(rule_order, rng);

    std::vector<int> assignment(instance.rules.size(), kReject);
    std::vector<ResourceVector> used(instance.nodes.size(), ResourceVector::zero());
    std::vector<int> candidates(static_cast<std::size_t>(instance.num_real_nodes()));

    for (int rule_id : rule_order) {
        std::iota(candidates.begin(), candidates.end(), 1);
        shuffle_in_place(candidates, rng);
        const auto& demand = instance.rules[static_cast<std::size_t>(rule_id)].demand;
        for (int node_id : candidates) {
            const auto& node = instance.nodes[static_cast<std::size_t>(node_id)];
            if (fits(node.capacity, used[static_cast<std::size_t>(node_id)], demand)) {
                used[static_cast<std::size_t>(node_id)] += demand;
                assignment[static_cast<std::size_t>(rule_id)] = node_id;
                break;
            }
        }
    }
    return replay_assignment(instance, std::move(assignment));
}

Solution critical_insertion(const ProblemInstance& instance, SortOrder rule_order,
                            SortOrder critical_order) {
    std::vector<int> order(instance.rules.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double la = largest_component(instance.rules[static_cast<std::size_t>(a)].demand);
        const double lb = largest_component(instance.rules[static_cast<std::size_t>(b)].demand);
        if (la != lb) return rule_order == SortOrder::Descending ? la > lb : la < lb;
        return a < b;
    });

    std::vector<int> assignment(instance.rules.size(), kReject);
    std::vector<ResourceVector> used(instance.nodes.size(), ResourceVector::zero());
    std::vector<std::pair<double, int>> scored;
    scored.reserve(static_cast<std::size_t>(instance.num_real_nodes()));

    for (int rule_id : order) {
        const auto& demand = instance.rules[static_cast<std::size_t>(rule_id)].demand;
        scored.clear();
        for (int node_id = 1; node_id < static_cast<int>(instance.nodes.size()); ++node_id) {
            const auto& node = instance.nodes[static_cast<std::size_t>(node_id)];
            scored.emplace_back(
                compute_critical(node.capacity, used[static_cast<std::size_t>(node_id)], demand),
                node_id);
        }
        std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) {
                return critical_order == SortOrder::Descending ? a.first > b.first
                                                               : a.first < b.first;
            }
            return a.second < b.second;
        });
        for (const auto& [score, node_id] : scored) {
            if (score >= -kFeasibilityEps) {
                used[static_cast<std::size_t>(node_id)] += demand;
                assignment[static_cast<std::size_t>(rule_id)] = node_id;
                break;
            }
        }
    }
    return replay_assignment(instance, std::move(assignment));
}

Solution solve_heuristic(const ProblemInstance& instance, HeuristicVariant variant,
                         std::uint64_t seed) {
    switch (variant) {
        case HeuristicVariant::DrDc:
            return critical_insertion(instance, SortOrder::Descending, SortOrder::Descending);
        case HeuristicVariant::DrAc:
            return critical_insertion(instance, SortOrder::Descending, SortOrder::Ascending);
        case HeuristicVariant::ArDc:
            return critical_insertion(instance, SortOrder::Ascending, SortOrder::Descending);
        case HeuristicVariant::ArAc:
            return critical_insertion(instance, SortOrder::Ascending, SortOrder::Ascending);
        case HeuristicVariant::Random:
            return random_insertion(instance, seed);
    }
    throw ContractError("solve_heuristic: unreachable variant");
}

}  // namespace ruledist
