#pragma once

// Advantage actor-critic training with entropy regularization. The episode
// machinery is templated so gradient checks can run it in double precision;
// train() itself runs on float.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ruledist/model.hpp"

namespace ruledist {

enum class AdvantageMode { TD0, MonteCarlo };

struct TrainConfig {
    int training_steps = 100'000;
    int batch_size = 128;
    double gamma = 0.99;
    double entropy_coeff = 0.01;
    double lr_actor = 1e-4;
    double lr_critic = 5e-4;
    double grad_clip = 1.0;
    int train_num_nodes = 10;
    int train_num_rules = 20;
    AdvantageMode advantage_mode = AdvantageMode::TD0;
    int eval_seed_count = 3;
    int checkpoint_every = 1000;
    // Episodes whose graphs are alive concurrently; bounds peak memory while
    // keeping gradient reduction order fixed.
    int grad_chunk = 8;
    bool log_timing = true;  // wall_ms column written as 0 when false
    GeneratorConfig generator;  // value ranges and pool size; counts come from train_*
    ModelConfig model;

    // 3,000 steps, batch 32, 4 nodes x 8 rules.
    static TrainConfig desk_scale();
};

void validate(const TrainConfig& cfg);

// One decision of an episode, with everything needed to recompute losses.
struct Transition {
    StateFeatures features;
    EncoderMasks masks;
    std::vector<bool> ptr_mask;
    int rule_id = 0;
    int action = 0;  // node index; 0 is the reject node
    double log_prob = 0.0;
    double entropy = 0.0;
    double reward = 0.0;
    double value = 0.0;
    double next_value = 0.0;  // 0 at the terminal transition
};

// Full episode with its tape-bound scalars (empty when the tape does not
// record or the critic is absent).
template <typename T>
struct EpisodeGraph {
    std::vector<Transition> transitions;
    std::vector<ad::TensorPtr<T>> log_probs;
    std::vector<ad::TensorPtr<T>> entropies;
    std::vector<ad::TensorPtr<T>> values;
    double undiscounted_return = 0.0;

    std::vector<int> assignment() const {
        std::vector<int> out(transitions.size(), kReject);
        for (const auto& t : transitions) {
            out[static_cast<std::size_t>(t.rule_id)] = t.action == 0 ? kReject : t.action;
        }
        return out;
    }
};

// Plays one episode, feeding rules in instance order. When `forced_actions`
// is given the policy distribution is still evaluated but the recorded
// actions are replayed (used by gradient checks and advantage-constancy
// tests).
template <typename T>
EpisodeGraph<T> run_episode(ad::Tape<T>& tape, const ActorParams<T>& actor,
                            const CriticParams<T>* critic, const ProblemInstance& instance,
                            RewardKind kind, Rng& rng, SelectMode mode,
                            const std::vector<int>* forced_actions = nullptr);

// Tape-free rollout with stochastic sampling; records log-probs, entropies,
// rewards and critic values per step.
std::vector<Transition> rollout(const ProblemInstance& instance,
                                const ActorParams<float>& actor,
                                const CriticParams<float>& critic, RewardKind kind, Rng& rng);

// TD0: A_t = r_t + gamma * next_value_t - value_t.
// MonteCarlo: A_t = G_t - value_t with G_t the discounted suffix sum.
std::vector<double> compute_advantages(std::span<const Transition> transitions, double gamma,
                                       AdvantageMode mode);

// Loss values on recorded transitions (advantages are constants here).
double actor_loss(std::span<const Transition> transitions, std::span<const double> advantages,
                  double c_entropy);
double critic_loss(std::span<const double> advantages);

// Tape node for one episode's actor loss contribution:
// (-sum_t lp_t A_t - c sum_t H_t) / batch_size.
template <typename T>
ad::TensorPtr<T> build_actor_loss(ad::Tape<T>& tape, const EpisodeGraph<T>& ep,
                                  std::span<const double> advantages, double c_entropy,
                                  int batch_size);

// Tape node for one episode's critic loss contribution:
// 0.5 * sum_t A_t^2 / batch_transitions, with gradient flowing through the
// value terms inside A.
template <typename T>
ad::TensorPtr<T> build_critic_loss(ad::Tape<T>& tape, const EpisodeGraph<T>& ep, double gamma,
                                   AdvantageMode mode, int batch_transitions);

// Greedy (or sampled) policy execution without a critic; returns the replayed
// feasible Solution.
Solution solve_with_policy(const ProblemInstance& instance, const ActorParams<float>& actor,
                           RewardKind kind, SelectMode mode = SelectMode::GreedyArgmax,
                           std::uint64_t sample_seed = 0);

struct TrainResult {
    ActorParams<float> actor;
    CriticParams<float> critic;
    std::string log_csv;  // step,mean_return,actor_loss,critic_loss,mean_entropy,
                          // grad_norm_actor,grad_norm_critic,wall_ms
};

// Algorithm: per step, batch_size fresh instances are rolled out with
// stochastic sampling, advantages computed, and clipped Adam updates applied
// to actor and critic separately. Deterministic given (cfg, kind, seed).
// Writes checkpoints under checkpoint_dir every checkpoint_every steps when
// the directory is non-empty. Throws TrainingError on non-finite losses.
TrainResult train(const TrainConfig& cfg, RewardKind kind, std::uint64_t seed,
                  const std::string& checkpoint_dir = "");

}  // namespace ruledist

#include "ruledist/trainer_impl.hpp"
