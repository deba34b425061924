#include "ruledist/env.hpp"

#include <fstream>

#include <json.hpp>

#include "ruledist/errors.hpp"

namespace ruledist {

std::string to_string(RewardKind kind) {
    switch (kind) {
        case RewardKind::Greedy: return "greedy";
        case RewardKind::CriticalAware: return "critical";
        case RewardKind::CostAware: return "cost";
    }
    return "greedy";
}

RewardKind reward_kind_from_string(const std::string& name) {
    if (name == "greedy") return RewardKind::Greedy;
    if (name == "critical") return RewardKind::CriticalAware;
    if (name == "cost") return RewardKind::CostAware;
    throw ConfigError("unknown criterion: " + name + " (expected greedy|critical|cost)");
}

std::vector<int> EnvState::assignment() const {
    return rule_node;
}

EnvState reset(const ProblemInstance& instance, RewardKind kind, const RewardParams& params) {
    EnvState s;
    s.instance = instance;
    s.used.assign(instance.nodes.size(), ResourceVector::zero());
    s.rule_status.assign(instance.rules.size(), RuleStatus::Pending);
    s.rule_node.assign(instance.rules.size(), kReject);
    s.placed_count.assign(instance.nodes.size(), 0);
    s.step = 0;
    s.reward_kind = kind;
    s.reward_params = params;
    return s;
}

double reward_critical(const EnvState& state_after, bool accepted) {
    if (!accepted) return state_after.reward_params.reject_penalty;
    double omega = 1.0;
    for (std::size_t j = 1; j < state_after.instance.nodes.size(); ++j) {
        omega = std::min(omega, critical_slack(state_after.instance.nodes[j].capacity,
                                               state_after.used[j]));
    }
    return omega;
}

StepOutcome step(EnvState& state, int rule_id, int node_id) {
    if (rule_id < 0 || rule_id >= state.num_rules() ||
        state.rule_status[static_cast<std::size_t>(rule_id)] != RuleStatus::Pending) {
        throw ContractError("env: step on non-pending rule " + std::to_string(rule_id));
    }
    if (node_id < 0 || node_id >= state.num_nodes()) {
        throw ContractError("env: step with invalid node " + std::to_string(node_id));
    }

    StepOutcome out;
    const auto& demand = state.instance.rules[static_cast<std::size_t>(rule_id)].demand;

    if (node_id == 0) {
        state.rule_status[static_cast<std::size_t>(rule_id)] = RuleStatus::Rejected;
        out.accepted = false;
    } else {
        const auto& node = state.instance.nodes[static_cast<std::size_t>(node_id)];
        if (!fits(node.capacity, state.used[static_cast<std::size_t>(node_id)], demand)) {
            throw ContractError("env: infeasible placement of rule " + std::to_string(rule_id) +
                                " at node " + std::to_string(node_id));
        }
        state.used[static_cast<std::size_t>(node_id)] += demand;
        state.rule_status[static_cast<std::size_t>(rule_id)] = RuleStatus::Placed;
        state.rule_node[static_cast<std::size_t>(rule_id)] = node_id;
        ++state.placed_count[static_cast<std::size_t>(node_id)];
        out.accepted = true;
    }
    ++state.step;
    out.done = state.done();

    switch (state.reward_kind) {
        case RewardKind::Greedy:
            out.reward = out.accepted ? 1.0 : 0.0;
            break;
        case RewardKind::CriticalAware:
            out.reward = reward_critical(state, out.accepted);
            break;
        case RewardKind::CostAware:
            if (!out.accepted) {
                out.reward = state.reward_params.reject_penalty;
            } else if (state.placed_count[static_cast<std::size_t>(node_id)] == 1) {
                out.reward = state.reward_params.empty_node_penalty;
            } else {
                out.reward = 0.0;
            }
            break;
    }
    return out;
}

std::vector<bool> pointer_mask(const EnvState& state, int rule_id) {
    if (rule_id < 0 || rule_id >= state.num_rules() ||
        state.rule_status[static_cast<std::size_t>(rule_id)] != RuleStatus::Pending) {
        throw ContractError("env: pointer_mask for non-pending rule " + std::to_string(rule_id));
    }
    const auto& demand = state.instance.rules[static_cast<std::size_t>(rule_id)].demand;
    std::vector<bool> mask(state.instance.nodes.size(), false);
    mask[0] = true;
    for (std::size_t j = 1; j < state.instance.nodes.size(); ++j) {
        mask[j] = fits(state.instance.nodes[j].capacity, state.used[j], demand);
    }
    return mask;
}

EncoderMasks encoder_masks(const EnvState& state) {
    EncoderMasks m;
    m.node_mask.assign(state.instance.nodes.size(), false);
    m.node_mask[0] = true;
    for (std::size_t j = 1; j < state.instance.nodes.size(); ++j) {
        m.node_mask[j] =
            critical_slack(state.instance.nodes[j].capacity, state.used[j]) > 0.0;
    }
    m.rule_mask.assign(state.instance.rules.size(), false);
    for (std::size_t i = 0; i < state.instance.rules.size(); ++i) {
        m.rule_mask[i] = state.rule_status[i] == RuleStatus::Pending;
    }
    return m;
}

StateFeatures state_features(const EnvState& state, RewardKind kind) {
    StateFeatures f;
    f.node_dim = node_feature_dim(kind);
    f.node_feats.reserve(state.instance.nodes.size() * static_cast<std::size_t>(f.node_dim));
    for (std::size_t j = 0; j < state.instance.nodes.size(); ++j) {
        const auto& node = state.instance.nodes[j];
        for (std::size_t m = 0; m < kNumResources; ++m) {
            f.node_feats.push_back(node.capacity[m] - state.used[j][m]);
        }
        if (f.node_dim == 4) {
            f.node_feats.push_back(!node.is_reject && state.placed_count[j] > 0 ? 1.0 : 0.0);
        }
    }
    f.rule_feats.reserve(state.instance.rules.size() * kNumResources);
    for (const auto& rule : state.instance.rules) {
        for (std::size_t m = 0; m < kNumResources; ++m) f.rule_feats.push_back(rule.demand[m]);
    }
    return f;
}

void EpisodeTrace::record(const EnvState& state_after, int rule_id, int node_id,
                          const StepOutcome& outcome) {
    double omega = 1.0;
    for (std::size_t j = 1; j < state_after.instance.nodes.size(); ++j) {
        omega = std::min(omega, critical_slack(state_after.instance.nodes[j].capacity,
                                               state_after.used[j]));
    }
    nlohmann::json j{{"step", state_after.step}, {"rule_id", rule_id},
                     {"node_id", node_id},       {"reward", outcome.reward},
                     {"omega_max", omega},       {"done", outcome.done}};
    text_ += j.dump();
    text_ += '\n';
}

void EpisodeTrace::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("trace: cannot open for writing: " + path);
    out << text_;
}

}  // namespace ruledist
