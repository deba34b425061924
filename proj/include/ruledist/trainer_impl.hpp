#pragma once

// Template implementation for trainer.hpp.

namespace ruledist {

template <typename T>
EpisodeGraph<T> run_episode(ad::Tape<T>& tape, const ActorParams<T>& actor,
                            const CriticParams<T>* critic, const ProblemInstance& instance,
                            RewardKind kind, Rng& rng, SelectMode mode,
                            const std::vector<int>* forced_actions) {
    if (actor.cfg.node_feature_dim != node_feature_dim(kind)) {
        throw ContractError("run_episode: model expects " +
                            std::to_string(actor.cfg.node_feature_dim) +
                            " node features, criterion provides " +
                            std::to_string(node_feature_dim(kind)));
    }
    EpisodeGraph<T> ep;
    EnvState state = reset(instance, kind);
    const int num_rules = state.num_rules();
    const int num_nodes = state.num_nodes();
    ep.transitions.reserve(static_cast<std::size_t>(num_rules));

    ad::TensorPtr<T> cached_encoding;
    for (int t = 0; t < num_rules; ++t) {
        auto input = make_model_input<T>(state);

        ad::TensorPtr<T> enc;
        if (actor.cfg.reencode_each_step || !cached_encoding) {
            enc = encoder_forward(tape, input, actor.encoder, actor.cfg);
            cached_encoding = enc;
        } else {
            enc = cached_encoding;
        }

        const auto pm = pointer_mask(state, t);
        const auto pm_mask = ad::to_mask(pm);
        auto logits = decoder_forward(tape, enc, num_nodes + t, pm_mask, input.combined_mask,
                                      actor);

        ActionChoice choice = actor_select(logits, mode, rng);
        if (forced_actions) {
            const int forced = (*forced_actions)[static_cast<std::size_t>(t)];
            choice.index = forced;
            choice.log_prob = std::log(choice.probs[static_cast<std::size_t>(forced)]);
        }

        Transition tr;
        tr.features = state_features(state, kind);
        tr.masks = encoder_masks(state);
        tr.ptr_mask = pm;
        tr.rule_id = t;
        tr.action = choice.index;
        tr.log_prob = choice.log_prob;
        tr.entropy = choice.entropy;

        {
            auto probs = tape.masked_softmax(logits, pm_mask);
            ep.log_probs.push_back(tape.log(tape.select(probs, choice.index)));
            ep.entropies.push_back(tape.masked_entropy(probs, pm_mask));
        }
        if (critic) {
            // select() flattens the [1x1] critic output to a [1] scalar.
            auto value = tape.select(critic_forward(tape, input, *critic), 0);
            tr.value = static_cast<double>((*value->values)[0]);
            ep.values.push_back(value);
        }

        const StepOutcome outcome = step(state, t, choice.index);
        tr.reward = outcome.reward;
        ep.undiscounted_return += outcome.reward;
        ep.transitions.push_back(std::move(tr));
    }
    for (std::size_t t = 0; t + 1 < ep.transitions.size(); ++t) {
        ep.transitions[t].next_value = ep.transitions[t + 1].value;
    }
    return ep;
}

template <typename T>
ad::TensorPtr<T> build_actor_loss(ad::Tape<T>& tape, const EpisodeGraph<T>& ep,
                                  std::span<const double> advantages, double c_entropy,
                                  int batch_size) {
    if (ep.log_probs.size() != advantages.size()) {
        throw ContractError("build_actor_loss: advantage count mismatch");
    }
    auto lp = tape.concat(std::span<const ad::TensorPtr<T>>(ep.log_probs), 0);
    const int count = static_cast<int>(advantages.size());
    std::vector<T> adv(advantages.size());
    for (std::size_t i = 0; i < advantages.size(); ++i) adv[i] = static_cast<T>(advantages[i]);
    auto adv_const = ad::make_tensor<T>({count}, std::move(adv));
    auto policy_term = tape.scale(tape.sum(tape.mul(lp, adv_const)), T(-1));

    auto ent = tape.concat(std::span<const ad::TensorPtr<T>>(ep.entropies), 0);
    auto entropy_term = tape.scale(tape.sum(ent), static_cast<T>(-c_entropy));

    return tape.scale(tape.add(policy_term, entropy_term), T(1) / static_cast<T>(batch_size));
}

template <typename T>
ad::TensorPtr<T> build_critic_loss(ad::Tape<T>& tape, const EpisodeGraph<T>& ep, double gamma,
                                   AdvantageMode mode, int batch_transitions) {
    if (ep.values.size() != ep.transitions.size()) {
        throw ContractError("build_critic_loss: missing critic values");
    }
    std::vector<ad::TensorPtr<T>> residuals;
    residuals.reserve(ep.values.size());
    const std::size_t n = ep.transitions.size();

    if (mode == AdvantageMode::TD0) {
        for (std::size_t t = 0; t < n; ++t) {
            const auto r = ad::scalar_tensor(static_cast<T>(ep.transitions[t].reward));
            auto a = tape.add(r, tape.scale(ep.values[t], T(-1)));
            if (t + 1 < n) {
                a = tape.add(a, tape.scale(ep.values[t + 1], static_cast<T>(gamma)));
            }
            residuals.push_back(a);
        }
    } else {
        double suffix = 0.0;
        std::vector<double> returns(n);
        for (std::size_t t = n; t-- > 0;) {
            suffix = ep.transitions[t].reward + gamma * suffix;
            returns[t] = suffix;
        }
        for (std::size_t t = 0; t < n; ++t) {
            const auto g = ad::scalar_tensor(static_cast<T>(returns[t]));
            residuals.push_back(tape.add(g, tape.scale(ep.values[t], T(-1))));
        }
    }

    auto a_cat = tape.concat(std::span<const ad::TensorPtr<T>>(residuals), 0);
    auto sq = tape.mul(a_cat, a_cat);
    return tape.scale(tape.sum(sq), static_cast<T>(0.5 / batch_transitions));
}

}  // namespace ruledist
