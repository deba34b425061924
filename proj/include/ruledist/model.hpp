#pragma once

// The attention-based actor (dual-embedding encoder + pointer decoder) and
// the critic network. Parameter shapes depend only on ModelConfig, never on
// instance size, which is what lets one checkpoint serve any problem size.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ruledist/ad.hpp"
#include "ruledist/env.hpp"

namespace ruledist {

struct ModelConfig {
    int embed_dim = 128;
    int num_heads = 8;
    int actor_stacks = 1;
    int critic_stacks = 3;
    int actor_ffn_dim = 128;
    int critic_ffn_dim = 512;
    int critic_head_dim = 128;
    double logit_clip = 10.0;
    int node_feature_dim = 3;  // 4 under the cost-aware criterion
    int rule_feature_dim = 3;
    // Re-encode the updated state at every decoding step (default); when
    // false one encoding is reused with evolving masks.
    bool reencode_each_step = true;

    bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& cfg);
ModelConfig model_config_for(RewardKind kind, ModelConfig base = {});

namespace detail {

template <typename T>
struct AttentionBlockParams {
    ad::TensorPtr<T> wq, wk, wv, wo;
    ad::TensorPtr<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    ad::TensorPtr<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

template <typename T>
struct EncoderParams {
    ad::TensorPtr<T> node_embed_w, node_embed_b;
    ad::TensorPtr<T> rule_embed_w, rule_embed_b;
    std::vector<AttentionBlockParams<T>> node_blocks;
    std::vector<AttentionBlockParams<T>> rule_blocks;
    std::vector<AttentionBlockParams<T>> final_blocks;
};

}  // namespace detail

template <typename T>
struct ActorParams {
    ModelConfig cfg;
    detail::EncoderParams<T> encoder;
    ad::TensorPtr<T> dec_wq, dec_wk, dec_wv, dec_wo;
    ad::TensorPtr<T> ptr_w1, ptr_w2, ptr_v;
};

template <typename T>
struct CriticParams {
    ModelConfig cfg;
    detail::EncoderParams<T> encoder;
    ad::TensorPtr<T> fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b;
};

// Enumerates (name, tensor) in a fixed order shared by initialization,
// optimizers and checkpoints.
template <typename T>
void for_each_tensor(ActorParams<T>& p,
                     const std::function<void(const std::string&, ad::TensorPtr<T>&)>& fn);
template <typename T>
void for_each_tensor(CriticParams<T>& p,
                     const std::function<void(const std::string&, ad::TensorPtr<T>&)>& fn);

template <typename T>
std::vector<ad::TensorPtr<T>> all_tensors(ActorParams<T>& p);
template <typename T>
std::vector<ad::TensorPtr<T>> all_tensors(CriticParams<T>& p);

// Xavier-uniform weights (zero biases, unit layer-norm gains), deterministic
// per seed.
template <typename T>
ActorParams<T> init_actor(const ModelConfig& cfg, std::uint64_t seed);
template <typename T>
CriticParams<T> init_critic(const ModelConfig& cfg, std::uint64_t seed);

// Same parameter struct sharing value storage but with private gradients;
// lets episodes in a batch run backward concurrently.
template <typename T>
ActorParams<T> shadow_params(const ActorParams<T>& p);
template <typename T>
CriticParams<T> shadow_params(const CriticParams<T>& p);

// Model-ready view of one environment state.
template <typename T>
struct ModelInput {
    ad::TensorPtr<T> node_feats;  // [num_nodes x node_feature_dim]
    ad::TensorPtr<T> rule_feats;  // [num_rules x rule_feature_dim]
    ad::Mask node_mask;
    ad::Mask rule_mask;
    ad::Mask combined_mask;  // nodes first, matching the encoder concat order
    int num_nodes = 0;
    int num_rules = 0;
};

template <typename T>
ModelInput<T> make_model_input(const EnvState& state);

// Dual-embedding encoder: nodes and rules pass through dedicated embeddings
// and self-attention blocks, then a final block attends over their
// concatenation (nodes first, reject node at position 0). No positional
// encoding anywhere.
template <typename T>
ad::TensorPtr<T> encoder_forward(ad::Tape<T>& tape, const ModelInput<T>& input,
                                 const detail::EncoderParams<T>& params,
                                 const ModelConfig& cfg);

// One decoding step: attends over the encoder output with the pending rule's
// encoding as the query, then scores node positions with the pointer head.
// Returns clipped logits [1 x num_nodes] with masked positions at -1e9.
template <typename T>
ad::TensorPtr<T> decoder_forward(ad::Tape<T>& tape, const ad::TensorPtr<T>& encoder_out,
                                 int rule_position, const ad::Mask& ptr_mask,
                                 const ad::Mask& memory_mask, const ActorParams<T>& params);

// Critic: its own encoder, mean-pool over unmasked positions, three linear
// layers down to a scalar.
template <typename T>
ad::TensorPtr<T> critic_forward(ad::Tape<T>& tape, const ModelInput<T>& input,
                                const CriticParams<T>& params);

enum class SelectMode { Stochastic, GreedyArgmax };

struct ActionChoice {
    int index = 0;
    double log_prob = 0.0;
    double entropy = 0.0;
    std::vector<double> probs;
};

// Softmax over the logits (masked sentinel values underflow to exactly zero
// probability), then samples or takes the lowest-index argmax.
ActionChoice actor_select(std::span<const double> logits, SelectMode mode, Rng& rng);

template <typename T>
ActionChoice actor_select(const ad::TensorPtr<T>& logits, SelectMode mode, Rng& rng) {
    std::vector<double> vals(logits->values->begin(), logits->values->end());
    return actor_select(std::span<const double>(vals), mode, rng);
}

// ---------------------------------------------------------------------------
// Checkpoints: magic + version + JSON header (config, tensor table) + raw
// little-endian float32 data. Loading validates shapes and never leaves
// partial state behind.
// ---------------------------------------------------------------------------

template <typename T>
void save_checkpoint(const std::string& path, ActorParams<T>& actor, CriticParams<T>& critic);

template <typename T>
struct Checkpoint {
    ModelConfig cfg;
    ActorParams<T> actor;
    CriticParams<T> critic;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path);

// Loads and additionally requires the embedded config to equal `expected`.
template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace ruledist

#include "ruledist/model_impl.hpp"
