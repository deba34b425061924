#include "ruledist/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace ruledist {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kInstanceStream = 0x696e7374;  // "inst"
constexpr std::uint64_t kSampleStream = 0x73616d70;    // "samp"
constexpr std::uint64_t kActorStream = 0x6163746f;     // "acto"
constexpr std::uint64_t kCriticStream = 0x63726974;    // "crit"

std::string format_row(int step, double mean_return, double actor_l, double critic_l,
                       double mean_entropy, double norm_a, double norm_c, double wall_ms) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", step,
                  mean_return, actor_l, critic_l, mean_entropy, norm_a, norm_c, wall_ms);
    return buf;
}

}  // namespace

TrainConfig TrainConfig::desk_scale() {
    TrainConfig cfg;
    cfg.training_steps = 3000;
    cfg.batch_size = 32;
    cfg.train_num_nodes = 4;
    cfg.train_num_rules = 8;
    return cfg;
}

void validate(const TrainConfig& cfg) {
    if (cfg.training_steps < 0) throw ConfigError("train: training_steps must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (cfg.gamma <= 0.0 || cfg.gamma > 1.0) throw ConfigError("train: gamma must be in (0,1]");
    if (cfg.entropy_coeff < 0.0) throw ConfigError("train: entropy_coeff must be >= 0");
    if (cfg.lr_actor <= 0.0 || cfg.lr_critic <= 0.0) {
        throw ConfigError("train: learning rates must be positive");
    }
    if (cfg.grad_clip <= 0.0) throw ConfigError("train: grad_clip must be positive");
    if (cfg.train_num_nodes < 1 || cfg.train_num_rules < 1) {
        throw ConfigError("train: training problem size must be positive");
    }
    if (cfg.grad_chunk < 1) throw ConfigError("train: grad_chunk must be >= 1");
    if (cfg.checkpoint_every < 1) throw ConfigError("train: checkpoint_every must be >= 1");
    validate(cfg.model);
}

std::vector<Transition> rollout(const ProblemInstance& instance,
                                const ActorParams<float>& actor,
                                const CriticParams<float>& critic, RewardKind kind, Rng& rng) {
    ad::Tape<float> tape(false);
    return run_episode<float>(tape, actor, &critic, instance, kind, rng,
                              SelectMode::Stochastic)
        .transitions;
}

std::vector<double> compute_advantages(std::span<const Transition> transitions, double gamma,
                                       AdvantageMode mode) {
    std::vector<double> adv(transitions.size());
    if (mode == AdvantageMode::TD0) {
        for (std::size_t t = 0; t < transitions.size(); ++t) {
            adv[t] = transitions[t].reward + gamma * transitions[t].next_value -
                     transitions[t].value;
        }
    } else {
        double suffix = 0.0;
        for (std::size_t t = transitions.size(); t-- > 0;) {
            suffix = transitions[t].reward + gamma * suffix;
            adv[t] = suffix - transitions[t].value;
        }
    }
    return adv;
}

double actor_loss(std::span<const Transition> transitions, std::span<const double> advantages,
                  double c_entropy) {
    if (transitions.size() != advantages.size()) {
        throw ContractError("actor_loss: advantage count mismatch");
    }
    double policy = 0.0;
    double entropy = 0.0;
    for (std::size_t t = 0; t < transitions.size(); ++t) {
        policy -= transitions[t].log_prob * advantages[t];
        entropy += transitions[t].entropy;
    }
    return policy - c_entropy * entropy;
}

double critic_loss(std::span<const double> advantages) {
    if (advantages.empty()) return 0.0;
    double acc = 0.0;
    for (double a : advantages) acc += a * a;
    return 0.5 * acc / static_cast<double>(advantages.size());
}

Solution solve_with_policy(const ProblemInstance& instance, const ActorParams<float>& actor,
                           RewardKind kind, SelectMode mode, std::uint64_t sample_seed) {
    ad::Tape<float> tape(false);
    Rng rng(hash_combine(sample_seed, kSampleStream));
    const auto ep = run_episode<float>(tape, actor, nullptr, instance, kind, rng, mode);
    return replay_assignment(instance, ep.assignment());
}

TrainResult train(const TrainConfig& cfg, RewardKind kind, std::uint64_t seed,
                  const std::string& checkpoint_dir) {
    validate(cfg);
    const ModelConfig mcfg = model_config_for(kind, cfg.model);

    TrainResult result;
    result.actor = init_actor<float>(mcfg, hash_combine(seed, kActorStream));
    result.critic = init_critic<float>(mcfg, hash_combine(seed, kCriticStream));
    auto actor_tensors = all_tensors(result.actor);
    auto critic_tensors = all_tensors(result.critic);

    ad::AdamState<float> actor_opt;
    ad::AdamState<float> critic_opt;
    actor_opt.init(std::span<const ad::TensorPtr<float>>(actor_tensors));
    critic_opt.init(std::span<const ad::TensorPtr<float>>(critic_tensors));

    GeneratorConfig gen = cfg.generator;
    gen.num_nodes = cfg.train_num_nodes;
    gen.num_rules = cfg.train_num_rules;
    validate(gen);

    result.log_csv =
        "step,mean_return,actor_loss,critic_loss,mean_entropy,grad_norm_actor,"
        "grad_norm_critic,wall_ms\n";

    const int batch = cfg.batch_size;
    const int transitions_per_step = batch * cfg.train_num_rules;

    const auto save_step_checkpoint = [&](int step_no, const char* tag) {
        if (checkpoint_dir.empty()) return;
        std::filesystem::create_directories(checkpoint_dir);
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_%s.rdcp", tag);
        save_checkpoint(checkpoint_dir + "/" + name, result.actor, result.critic);
        (void)step_no;
    };

    for (int step_no = 1; step_no <= cfg.training_steps; ++step_no) {
        const auto t0 = Clock::now();
        double batch_return = 0.0;
        double batch_actor_loss = 0.0;
        double batch_critic_loss = 0.0;
        double batch_entropy = 0.0;

        for (int chunk_start = 0; chunk_start < batch; chunk_start += cfg.grad_chunk) {
            const int chunk = std::min(cfg.grad_chunk, batch - chunk_start);
            std::vector<ActorParams<float>> actor_shadows(static_cast<std::size_t>(chunk));
            std::vector<CriticParams<float>> critic_shadows(static_cast<std::size_t>(chunk));
            std::vector<double> ep_return(static_cast<std::size_t>(chunk));
            std::vector<double> ep_actor_loss(static_cast<std::size_t>(chunk));
            std::vector<double> ep_critic_loss(static_cast<std::size_t>(chunk));
            std::vector<double> ep_entropy(static_cast<std::size_t>(chunk));

#pragma omp parallel for schedule(dynamic, 1)
            for (int e = 0; e < chunk; ++e) {
                const int index = chunk_start + e;
                const auto instance = generate_instance(
                    gen, hash_combine(seed, kInstanceStream, step_no, index));
                Rng episode_rng(hash_combine(seed, kSampleStream, step_no, index));

                actor_shadows[e] = shadow_params(result.actor);
                critic_shadows[e] = shadow_params(result.critic);

                ad::Tape<float> tape(true);
                const auto ep =
                    run_episode<float>(tape, actor_shadows[e], &critic_shadows[e], instance,
                                       kind, episode_rng, SelectMode::Stochastic);
                const auto advantages = compute_advantages(
                    std::span<const Transition>(ep.transitions), cfg.gamma,
                    cfg.advantage_mode);

                auto actor_term = build_actor_loss(tape, ep,
                                                   std::span<const double>(advantages),
                                                   cfg.entropy_coeff, batch);
                auto critic_term =
                    build_critic_loss(tape, ep, cfg.gamma, cfg.advantage_mode,
                                      transitions_per_step);
                auto total = tape.add(actor_term, critic_term);
                tape.backward(total);

                ep_return[e] = ep.undiscounted_return;
                ep_actor_loss[e] = (*actor_term->values)[0];
                ep_critic_loss[e] = (*critic_term->values)[0];
                for (const auto& tr : ep.transitions) ep_entropy[e] += tr.entropy;
            }

            // Gradient reduction in episode order, independent of scheduling.
            for (int e = 0; e < chunk; ++e) {
                auto shadow_a = all_tensors(actor_shadows[static_cast<std::size_t>(e)]);
                for (std::size_t i = 0; i < actor_tensors.size(); ++i) {
                    if (!shadow_a[i]->has_grad()) continue;
                    actor_tensors[i]->ensure_grad();
                    kernels::accumulate(actor_tensors[i]->grad.data(),
                                        shadow_a[i]->grad.data(),
                                        static_cast<std::ptrdiff_t>(shadow_a[i]->grad.size()));
                }
                auto shadow_c = all_tensors(critic_shadows[static_cast<std::size_t>(e)]);
                for (std::size_t i = 0; i < critic_tensors.size(); ++i) {
                    if (!shadow_c[i]->has_grad()) continue;
                    critic_tensors[i]->ensure_grad();
                    kernels::accumulate(critic_tensors[i]->grad.data(),
                                        shadow_c[i]->grad.data(),
                                        static_cast<std::ptrdiff_t>(shadow_c[i]->grad.size()));
                }
                batch_return += ep_return[static_cast<std::size_t>(e)];
                batch_actor_loss += ep_actor_loss[static_cast<std::size_t>(e)];
                batch_critic_loss += ep_critic_loss[static_cast<std::size_t>(e)];
                batch_entropy += ep_entropy[static_cast<std::size_t>(e)];
            }
        }

        if (!std::isfinite(batch_actor_loss) || !std::isfinite(batch_critic_loss)) {
            const std::string dump_path = "ruledist_train_diverged.csv";
            std::ofstream dump(dump_path);
            dump << result.log_csv;
            throw TrainingError("train: non-finite loss at step " + std::to_string(step_no) +
                                " (log dumped to " + dump_path + ")");
        }

        const double norm_a = ad::clip_global_norm(
            std::span<const ad::TensorPtr<float>>(actor_tensors), cfg.grad_clip);
        const double norm_c = ad::clip_global_norm(
            std::span<const ad::TensorPtr<float>>(critic_tensors), cfg.grad_clip);
        ad::adam_step(std::span<const ad::TensorPtr<float>>(actor_tensors), actor_opt,
                      cfg.lr_actor);
        ad::adam_step(std::span<const ad::TensorPtr<float>>(critic_tensors), critic_opt,
                      cfg.lr_critic);
        for (auto& t : actor_tensors) t->zero_grad();
        for (auto& t : critic_tensors) t->zero_grad();

        const double wall_ms =
            cfg.log_timing
                ? std::chrono::duration<double, std::milli>(Clock::now() - t0).count()
                : 0.0;
        result.log_csv += format_row(step_no, batch_return / batch, batch_actor_loss,
                                     batch_critic_loss, batch_entropy / transitions_per_step,
                                     norm_a, norm_c, wall_ms);

        if (step_no % cfg.checkpoint_every == 0) {
            char tag[32];
            std::snprintf(tag, sizeof(tag), "step%07d", step_no);
            save_step_checkpoint(step_no, tag);
        }
    }

    save_step_checkpoint(cfg.training_steps, "final");
    return result;
}

}  // namespace ruledist
