#pragma once

// Template implementation for model.hpp.

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace ruledist {

inline void validate(const ModelConfig& cfg) {
    if (cfg.embed_dim <= 0 || cfg.num_heads <= 0 || cfg.embed_dim % cfg.num_heads != 0) {
        throw ConfigError("model: embed_dim must be a positive multiple of num_heads");
    }
    if (cfg.actor_stacks < 1 || cfg.critic_stacks < 1) {
        throw ConfigError("model: stack counts must be >= 1");
    }
    if (cfg.node_feature_dim != 3 && cfg.node_feature_dim != 4) {
        throw ConfigError("model: node_feature_dim must be 3 or 4");
    }
    if (cfg.rule_feature_dim != 3) {
        throw ConfigError("model: rule_feature_dim must be 3");
    }
    if (cfg.actor_ffn_dim <= 0 || cfg.critic_ffn_dim <= 0 || cfg.critic_head_dim <= 0) {
        throw ConfigError("model: layer dimensions must be positive");
    }
    if (cfg.logit_clip <= 0) {
        throw ConfigError("model: logit_clip must be positive");
    }
}

inline ModelConfig model_config_for(RewardKind kind, ModelConfig base) {
    base.node_feature_dim = node_feature_dim(kind);
    return base;
}

namespace detail {

template <typename T>
void for_each_block(const std::string& prefix, AttentionBlockParams<T>& b,
                    const std::function<void(const std::string&, ad::TensorPtr<T>&)>& fn) {
    fn(prefix + ".wq", b.wq);
    fn(prefix + ".wk", b.wk);
    fn(prefix + ".wv", b.wv);
    fn(prefix + ".wo", b.wo);
    fn(prefix + ".ln1_gain", b.ln1_gain);
    fn(prefix + ".ln1_bias", b.ln1_bias);
    fn(prefix + ".ln2_gain", b.ln2_gain);
    fn(prefix + ".ln2_bias", b.ln2_bias);
    fn(prefix + ".ffn_w1", b.ffn_w1);
    fn(prefix + ".ffn_b1", b.ffn_b1);
    fn(prefix + ".ffn_w2", b.ffn_w2);
    fn(prefix + ".ffn_b2", b.ffn_b2);
}

template <typename T>
void for_each_encoder(const std::string& prefix, EncoderParams<T>& e,
                      const std::function<void(const std::string&, ad::TensorPtr<T>&)>& fn) {
    fn(prefix + ".node_embed.w", e.node_embed_w);
    fn(prefix + ".node_embed.b", e.node_embed_b);
    fn(prefix + ".rule_embed.w", e.rule_embed_w);
    fn(prefix + ".rule_embed.b", e.rule_embed_b);
    for (std::size_t i = 0; i < e.node_blocks.size(); ++i) {
        for_each_block(prefix + ".node_block" + std::to_string(i), e.node_blocks[i], fn);
    }
    for (std::size_t i = 0; i < e.rule_blocks.size(); ++i) {
        for_each_block(prefix + ".rule_block" + std::to_string(i), e.rule_blocks[i], fn);
    }
    for (std::size_t i = 0; i < e.final_blocks.size(); ++i) {
        for_each_block(prefix + ".final_block" + std::to_string(i), e.final_blocks[i], fn);
    }
}

// Weight matrices draw Xavier-uniform; layer-norm gains start at one and all
// biases at zero. Per-tensor seeds derive from (seed, visit index).
template <typename T>
struct Initializer {
    std::uint64_t seed;
    std::uint64_t index = 0;

    ad::TensorPtr<T> weight(int rows, int cols) {
        return ad::xavier_uniform_init<T>({rows, cols}, rows, cols,
                                          hash_combine(seed, index++));
    }
    ad::TensorPtr<T> row_weight(int cols) {  // [1 x cols], fan_out 1
        return ad::xavier_uniform_init<T>({1, cols}, cols, 1, hash_combine(seed, index++));
    }
    ad::TensorPtr<T> bias(int n) {
        ++index;
        return ad::make_tensor<T>({n}, true);
    }
    ad::TensorPtr<T> gain(int n) {
        ++index;
        auto t = ad::make_tensor<T>({n}, true);
        std::fill(t->values->begin(), t->values->end(), T(1));
        return t;
    }

    AttentionBlockParams<T> block(int d, int ffn) {
        AttentionBlockParams<T> b;
        b.wq = weight(d, d);
        b.wk = weight(d, d);
        b.wv = weight(d, d);
        b.wo = weight(d, d);
        b.ln1_gain = gain(d);
        b.ln1_bias = bias(d);
        b.ln2_gain = gain(d);
        b.ln2_bias = bias(d);
        b.ffn_w1 = weight(d, ffn);
        b.ffn_b1 = bias(ffn);
        b.ffn_w2 = weight(ffn, d);
        b.ffn_b2 = bias(d);
        return b;
    }

    EncoderParams<T> encoder(const ModelConfig& cfg, int stacks, int ffn) {
        EncoderParams<T> e;
        e.node_embed_w = weight(cfg.node_feature_dim, cfg.embed_dim);
        e.node_embed_b = bias(cfg.embed_dim);
        e.rule_embed_w = weight(cfg.rule_feature_dim, cfg.embed_dim);
        e.rule_embed_b = bias(cfg.embed_dim);
        for (int i = 0; i < stacks; ++i) e.node_blocks.push_back(block(cfg.embed_dim, ffn));
        for (int i = 0; i < stacks; ++i) e.rule_blocks.push_back(block(cfg.embed_dim, ffn));
        for (int i = 0; i < stacks; ++i) e.final_blocks.push_back(block(cfg.embed_dim, ffn));
        return e;
    }
};

}  // namespace detail

template <typename T>
void for_each_tensor(ActorParams<T>& p,
                     const std::function<void(const std::string&, ad::TensorPtr<T>&)>& fn) {
    detail::for_each_encoder<T>("actor.encoder", p.encoder, fn);
    fn("actor.dec_wq", p.dec_wq);
    fn("actor.dec_wk", p.dec_wk);
    fn("actor.dec_wv", p.dec_wv);
    fn("actor.dec_wo", p.dec_wo);
    fn("actor.ptr_w1", p.ptr_w1);
    fn("actor.ptr_w2", p.ptr_w2);
    fn("actor.ptr_v", p.ptr_v);
}

template <typename T>
void for_each_tensor(CriticParams<T>& p,
                     const std::function<void(const std::string&, ad::TensorPtr<T>&)>& fn) {
    detail::for_each_encoder<T>("critic.encoder", p.encoder, fn);
    fn("critic.fc1_w", p.fc1_w);
    fn("critic.fc1_b", p.fc1_b);
    fn("critic.fc2_w", p.fc2_w);
    fn("critic.fc2_b", p.fc2_b);
    fn("critic.fc3_w", p.fc3_w);
    fn("critic.fc3_b", p.fc3_b);
}

template <typename T>
std::vector<ad::TensorPtr<T>> all_tensors(ActorParams<T>& p) {
    std::vector<ad::TensorPtr<T>> out;
    for_each_tensor<T>(p, [&](const std::string&, ad::TensorPtr<T>& t) { out.push_back(t); });
    return out;
}

template <typename T>
std::vector<ad::TensorPtr<T>> all_tensors(CriticParams<T>& p) {
    std::vector<ad::TensorPtr<T>> out;
    for_each_tensor<T>(p, [&](const std::string&, ad::TensorPtr<T>& t) { out.push_back(t); });
    return out;
}

template <typename T>
ActorParams<T> init_actor(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    detail::Initializer<T> init{hash_combine(seed, 0x6163746f)};  // "acto"
    ActorParams<T> p;
    p.cfg = cfg;
    p.encoder = init.encoder(cfg, cfg.actor_stacks, cfg.actor_ffn_dim);
    p.dec_wq = init.weight(cfg.embed_dim, cfg.embed_dim);
    p.dec_wk = init.weight(cfg.embed_dim, cfg.embed_dim);
    p.dec_wv = init.weight(cfg.embed_dim, cfg.embed_dim);
    p.dec_wo = init.weight(cfg.embed_dim, cfg.embed_dim);
    p.ptr_w1 = init.weight(cfg.embed_dim, cfg.embed_dim);
    p.ptr_w2 = init.weight(cfg.embed_dim, cfg.embed_dim);
    p.ptr_v = init.row_weight(cfg.embed_dim);
    return p;
}

template <typename T>
CriticParams<T> init_critic(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    detail::Initializer<T> init{hash_combine(seed, 0x63726974)};  // "crit"
    CriticParams<T> p;
    p.cfg = cfg;
    p.encoder = init.encoder(cfg, cfg.critic_stacks, cfg.critic_ffn_dim);
    p.fc1_w = init.weight(cfg.embed_dim, cfg.critic_head_dim);
    p.fc1_b = init.bias(cfg.critic_head_dim);
    p.fc2_w = init.weight(cfg.critic_head_dim, cfg.critic_head_dim);
    p.fc2_b = init.bias(cfg.critic_head_dim);
    p.fc3_w = init.weight(cfg.critic_head_dim, 1);
    p.fc3_b = init.bias(1);
    return p;
}

template <typename T>
ActorParams<T> shadow_params(const ActorParams<T>& p) {
    ActorParams<T> s = p;
    for_each_tensor<T>(s, [](const std::string&, ad::TensorPtr<T>& t) { t = ad::shadow_of(t); });
    return s;
}

template <typename T>
CriticParams<T> shadow_params(const CriticParams<T>& p) {
    CriticParams<T> s = p;
    for_each_tensor<T>(s, [](const std::string&, ad::TensorPtr<T>& t) { t = ad::shadow_of(t); });
    return s;
}

template <typename T>
ModelInput<T> make_model_input(const EnvState& state) {
    const auto feats = state_features(state, state.reward_kind);
    const auto masks = encoder_masks(state);

    ModelInput<T> in;
    in.num_nodes = state.num_nodes();
    in.num_rules = state.num_rules();
    in.node_feats = ad::make_tensor<T>(
        {in.num_nodes, feats.node_dim},
        std::vector<T>(feats.node_feats.begin(), feats.node_feats.end()));
    in.rule_feats = ad::make_tensor<T>(
        {in.num_rules, static_cast<int>(kNumResources)},
        std::vector<T>(feats.rule_feats.begin(), feats.rule_feats.end()));
    in.node_mask = ad::to_mask(masks.node_mask);
    in.rule_mask = ad::to_mask(masks.rule_mask);
    in.combined_mask = in.node_mask;
    in.combined_mask.insert(in.combined_mask.end(), in.rule_mask.begin(), in.rule_mask.end());
    return in;
}

namespace detail {

// Masked MHA + residual + layer norm + FFN (ReLU inner) + residual + layer
// norm.
template <typename T>
ad::TensorPtr<T> attention_block(ad::Tape<T>& tape, const ad::TensorPtr<T>& x,
                                 const ad::Mask& mask, const AttentionBlockParams<T>& p,
                                 int heads) {
    auto q = tape.matmul(x, p.wq);
    auto k = tape.matmul(x, p.wk);
    auto v = tape.matmul(x, p.wv);
    auto attn = tape.matmul(tape.multi_head_attention(q, k, v, mask, heads), p.wo);
    auto x1 = tape.layer_norm(tape.add(x, attn), p.ln1_gain, p.ln1_bias);
    auto hidden = tape.relu(tape.add(tape.matmul(x1, p.ffn_w1), p.ffn_b1));
    auto ffn = tape.add(tape.matmul(hidden, p.ffn_w2), p.ffn_b2);
    return tape.layer_norm(tape.add(x1, ffn), p.ln2_gain, p.ln2_bias);
}

}  // namespace detail

template <typename T>
ad::TensorPtr<T> encoder_forward(ad::Tape<T>& tape, const ModelInput<T>& input,
                                 const detail::EncoderParams<T>& params,
                                 const ModelConfig& cfg) {
    auto nodes = tape.add(tape.matmul(input.node_feats, params.node_embed_w),
                          params.node_embed_b);
    for (const auto& block : params.node_blocks) {
        nodes = detail::attention_block(tape, nodes, input.node_mask, block, cfg.num_heads);
    }
    auto rules = tape.add(tape.matmul(input.rule_feats, params.rule_embed_w),
                          params.rule_embed_b);
    for (const auto& block : params.rule_blocks) {
        rules = detail::attention_block(tape, rules, input.rule_mask, block, cfg.num_heads);
    }
    std::vector<ad::TensorPtr<T>> parts{nodes, rules};
    auto joint = tape.concat(std::span<const ad::TensorPtr<T>>(parts), 0);
    for (const auto& block : params.final_blocks) {
        joint = detail::attention_block(tape, joint, input.combined_mask, block, cfg.num_heads);
    }
    return joint;
}

template <typename T>
ad::TensorPtr<T> decoder_forward(ad::Tape<T>& tape, const ad::TensorPtr<T>& encoder_out,
                                 int rule_position, const ad::Mask& ptr_mask,
                                 const ad::Mask& memory_mask, const ActorParams<T>& params) {
    const int num_nodes = static_cast<int>(ptr_mask.size());
    if (encoder_out->shape[0] != static_cast<int>(memory_mask.size())) {
        throw ShapeError("decoder: memory mask length " + std::to_string(memory_mask.size()) +
                         " != encoder rows " + std::to_string(encoder_out->shape[0]));
    }
    bool any = false;
    for (auto m : ptr_mask) any |= (m != 0);
    if (!any) throw ContractError("decoder: pointer mask excludes every node");

    auto current = tape.gather(encoder_out, {rule_position});
    auto q = tape.matmul(current, params.dec_wq);
    auto k = tape.matmul(encoder_out, params.dec_wk);
    auto v = tape.matmul(encoder_out, params.dec_wv);
    auto context = tape.matmul(
        tape.multi_head_attention(q, k, v, memory_mask, params.cfg.num_heads), params.dec_wo);

    std::vector<int> node_rows(static_cast<std::size_t>(num_nodes));
    std::iota(node_rows.begin(), node_rows.end(), 0);
    auto node_enc = tape.gather(encoder_out, node_rows);

    // u_j = v^T tanh(W1 e_j + W2 d), then C * tanh(u) and mask fill.
    auto blended = tape.tanh(
        tape.add(tape.matmul(node_enc, params.ptr_w1), tape.matmul(context, params.ptr_w2)));
    auto raw = tape.matmul_nt(params.ptr_v, blended);  // [1 x num_nodes]
    auto clipped = tape.scale(tape.tanh(raw), static_cast<T>(params.cfg.logit_clip));
    return tape.mask_fill(clipped, ptr_mask, static_cast<T>(ad::kMaskValue));
}

template <typename T>
ad::TensorPtr<T> critic_forward(ad::Tape<T>& tape, const ModelInput<T>& input,
                                const CriticParams<T>& params) {
    auto enc = encoder_forward(tape, input, params.encoder, params.cfg);
    const int positions = enc->shape[0];

    int visible = 0;
    for (auto m : input.combined_mask) visible += (m != 0);
    if (visible == 0) throw ContractError("critic: every position masked");
    auto pool = ad::make_tensor<T>({1, positions});
    for (int i = 0; i < positions; ++i) {
        (*pool->values)[static_cast<std::size_t>(i)] =
            input.combined_mask[static_cast<std::size_t>(i)] ? T(1) / static_cast<T>(visible)
                                                             : T(0);
    }
    auto pooled = tape.matmul(pool, enc);
    auto h1 = tape.add(tape.matmul(pooled, params.fc1_w), params.fc1_b);
    auto h2 = tape.add(tape.matmul(h1, params.fc2_w), params.fc2_b);
    return tape.add(tape.matmul(h2, params.fc3_w), params.fc3_b);  // [1x1]
}

inline ActionChoice actor_select(std::span<const double> logits, SelectMode mode, Rng& rng) {
    if (logits.empty()) throw ContractError("actor_select: empty logits");
    double mx = -std::numeric_limits<double>::infinity();
    for (double u : logits) mx = std::max(mx, u);
    if (!std::isfinite(mx)) throw ContractError("actor_select: no finite logit");

    ActionChoice choice;
    choice.probs.resize(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        choice.probs[i] = std::exp(logits[i] - mx);
        denom += choice.probs[i];
    }
    for (auto& p : choice.probs) p /= denom;

    if (mode == SelectMode::GreedyArgmax) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < choice.probs.size(); ++i) {
            if (choice.probs[i] > choice.probs[best]) best = i;
        }
        choice.index = static_cast<int>(best);
    } else {
        const double u = rng.next_double();
        double cum = 0.0;
        std::size_t picked = choice.probs.size();
        for (std::size_t i = 0; i < choice.probs.size(); ++i) {
            cum += choice.probs[i];
            if (u < cum) {
                picked = i;
                break;
            }
        }
        if (picked == choice.probs.size()) {
            // u landed in rounding slack past the last positive entry.
            for (std::size_t i = choice.probs.size(); i-- > 0;) {
                if (choice.probs[i] > 0.0) {
                    picked = i;
                    break;
                }
            }
        }
        choice.index = static_cast<int>(picked);
    }

    choice.log_prob = std::log(choice.probs[static_cast<std::size_t>(choice.index)]);
    for (double p : choice.probs) {
        if (p > 0.0) choice.entropy -= p * std::log(p);
    }
    return choice;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'R', 'D', 'C', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    return {{"embed_dim", cfg.embed_dim},
            {"num_heads", cfg.num_heads},
            {"actor_stacks", cfg.actor_stacks},
            {"critic_stacks", cfg.critic_stacks},
            {"actor_ffn_dim", cfg.actor_ffn_dim},
            {"critic_ffn_dim", cfg.critic_ffn_dim},
            {"critic_head_dim", cfg.critic_head_dim},
            {"logit_clip", cfg.logit_clip},
            {"node_feature_dim", cfg.node_feature_dim},
            {"rule_feature_dim", cfg.rule_feature_dim},
            {"reencode_each_step", cfg.reencode_each_step}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.num_heads = j.at("num_heads").get<int>();
    cfg.actor_stacks = j.at("actor_stacks").get<int>();
    cfg.critic_stacks = j.at("critic_stacks").get<int>();
    cfg.actor_ffn_dim = j.at("actor_ffn_dim").get<int>();
    cfg.critic_ffn_dim = j.at("critic_ffn_dim").get<int>();
    cfg.critic_head_dim = j.at("critic_head_dim").get<int>();
    cfg.logit_clip = j.at("logit_clip").get<double>();
    cfg.node_feature_dim = j.at("node_feature_dim").get<int>();
    cfg.rule_feature_dim = j.at("rule_feature_dim").get<int>();
    cfg.reencode_each_step = j.at("reencode_each_step").get<bool>();
    return cfg;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, ActorParams<T>& actor, CriticParams<T>& critic) {
    if (!(actor.cfg == critic.cfg)) {
        throw CheckpointError("checkpoint: actor and critic configs differ");
    }
    nlohmann::json tensors = nlohmann::json::array();
    std::vector<float> blob;
    const auto append = [&](const std::string& name, ad::TensorPtr<T>& t) {
        tensors.push_back({{"name", name},
                           {"shape", t->shape},
                           {"offset", blob.size()},
                           {"count", t->numel()}});
        for (const T v : *t->values) blob.push_back(static_cast<float>(v));
    };
    for_each_tensor<T>(actor, append);
    for_each_tensor<T>(critic, append);

    nlohmann::json header{{"config", detail::config_to_json(actor.cfg)}, {"tensors", tensors}};
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot open for writing: " + path);
    out.write(detail::kCheckpointMagic, 4);
    const std::uint32_t version = detail::kCheckpointVersion;
    const std::uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!out) throw CheckpointError("checkpoint: write failed: " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open: " + path);

    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t header_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0) {
        throw CheckpointError("checkpoint: bad magic in " + path);
    }
    if (version != detail::kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    }
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw CheckpointError("checkpoint: truncated header in " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: bad header JSON: ") + e.what());
    }

    Checkpoint<T> ckpt;
    ckpt.cfg = detail::config_from_json(header.at("config"));
    validate(ckpt.cfg);

    std::vector<float> blob;
    {
        std::uint64_t total = 0;
        for (const auto& t : header.at("tensors")) total += t.at("count").get<std::uint64_t>();
        blob.resize(total);
        in.read(reinterpret_cast<char*>(blob.data()),
                static_cast<std::streamsize>(total * sizeof(float)));
        if (!in || in.gcount() != static_cast<std::streamsize>(total * sizeof(float))) {
            throw CheckpointError("checkpoint: truncated data in " + path);
        }
    }

    // Seeded construction gives the right shapes; the blob then overwrites
    // every value.
    ckpt.actor = init_actor<T>(ckpt.cfg, 0);
    ckpt.critic = init_critic<T>(ckpt.cfg, 0);
    std::size_t cursor = 0;
    const auto& table = header.at("tensors");
    const auto fill = [&](const std::string& name, ad::TensorPtr<T>& t) {
        if (cursor >= table.size()) {
            throw CheckpointError("checkpoint: missing tensor " + name);
        }
        const auto& entry = table.at(cursor++);
        if (entry.at("name").get<std::string>() != name ||
            entry.at("shape").get<std::vector<int>>() != t->shape) {
            throw CheckpointError("checkpoint: tensor mismatch at " + name);
        }
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto count = entry.at("count").get<std::size_t>();
        if (count != static_cast<std::size_t>(t->numel()) || offset + count > blob.size()) {
            throw CheckpointError("checkpoint: bad extent for " + name);
        }
        for (std::size_t i = 0; i < count; ++i) {
            (*t->values)[i] = static_cast<T>(blob[offset + i]);
        }
    };
    for_each_tensor<T>(ckpt.actor, fill);
    for_each_tensor<T>(ckpt.critic, fill);
    if (cursor != table.size()) {
        throw CheckpointError("checkpoint: unexpected extra tensors in " + path);
    }
    return ckpt;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path, const ModelConfig& expected) {
    auto ckpt = load_checkpoint<T>(path);
    if (!(ckpt.cfg == expected)) {
        throw CheckpointError("checkpoint: embedded config does not match the expected one");
    }
    return ckpt;
}

}  // namespace ruledist
