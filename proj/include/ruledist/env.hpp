#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ruledist/instance.hpp"
#include "ruledist/solution.hpp"

namespace ruledist {

// Optimization criterion driving the per-step reward.
enum class RewardKind { Greedy, CriticalAware, CostAware };

std::string to_string(RewardKind kind);
RewardKind reward_kind_from_string(const std::string& name);

// Reward constants the paper selected empirically; overridable.
struct RewardParams {
    double reject_penalty = -2.0;     // CriticalAware / CostAware rejection
    double empty_node_penalty = -1.0;  // CostAware first placement on a node
};

enum class RuleStatus : std::uint8_t { Pending, Placed, Rejected };

struct StepOutcome {
    double reward = 0.0;
    bool done = false;
    bool accepted = false;
};

// Mutable placement state for one episode. Single-owner; never shared
// across threads.
struct EnvState {
    ProblemInstance instance;
    std::vector<ResourceVector> used;      // per node, reject included (always zero)
    std::vector<RuleStatus> rule_status;   // per rule
    std::vector<int> rule_node;            // node id per placed rule, kReject if rejected
    std::vector<int> placed_count;         // rules placed per node
    int step = 0;                          // count of non-Pending rules
    RewardKind reward_kind = RewardKind::Greedy;
    RewardParams reward_params;

    int num_nodes() const { return static_cast<int>(instance.nodes.size()); }
    int num_rules() const { return static_cast<int>(instance.rules.size()); }
    bool done() const { return step == num_rules(); }

    // Final assignment vector (kReject for rejected); only valid when done.
    std::vector<int> assignment() const;
};

// Fresh state: all used vectors zero, all rules Pending, step 0.
EnvState reset(const ProblemInstance& instance, RewardKind kind,
               const RewardParams& params = {});

// Applies one decision. node_id 0 rejects the rule; otherwise the rule is
// placed and resources are updated. The reward is computed on the
// post-transition state. Illegal actions (non-Pending rule, infeasible real
// node) throw ContractError: masking is expected to prevent them, so an
// occurrence is a bug, not control flow.
StepOutcome step(EnvState& state, int rule_id, int node_id);

// CriticalAware reward on the post-transition state: reject_penalty if
// rejected, else the most critical slack over real nodes.
double reward_critical(const EnvState& state_after, bool accepted);

// Per-node feasibility of placing `rule_id` now. mask[0] (reject node) is
// always true; a real node is unmasked iff the rule's demand fits.
std::vector<bool> pointer_mask(const EnvState& state, int rule_id);

// Encoder masks: nodes stay visible while they are the reject node or still
// have positive slack; rules while Pending.
struct EncoderMasks {
    std::vector<bool> node_mask;
    std::vector<bool> rule_mask;
};
EncoderMasks encoder_masks(const EnvState& state);

// Feature matrices (row-major): node rows are remaining resources, plus a
// binary "has placements" feature under CostAware; rule rows are demands.
struct StateFeatures {
    std::vector<double> node_feats;  // [num_nodes x node_dim]
    std::vector<double> rule_feats;  // [num_rules x 3]
    int node_dim = 3;
};
StateFeatures state_features(const EnvState& state, RewardKind kind);

inline int node_feature_dim(RewardKind kind) {
    return kind == RewardKind::CostAware ? 4 : 3;
}

// One JSONL record per step: {step, rule_id, node_id, reward, omega_max, done}.
class EpisodeTrace {
public:
    void record(const EnvState& state_after, int rule_id, int node_id,
                const StepOutcome& outcome);
    const std::string& text() const { return text_; }
    void write(const std::string& path) const;

private:
    std::string text_;
};

}  // namespace ruledist
