#include "ruledist/instance.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ruledist/errors.hpp"
#include "ruledist/rng.hpp"

namespace ruledist {

namespace {

// Stream tags keep node draws, pool contents and pool sampling independent.
constexpr std::uint64_t kNodeStream = 0x6e6f6465;  // "node"
constexpr std::uint64_t kPoolStream = 0x706f6f6c;  // "pool"
constexpr std::uint64_t kSampleStream = 0x73616d70;  // "samp"

ResourceVector draw_vector(Rng& rng, double lo, double hi) {
    ResourceVector v;
    for (std::size_t m = 0; m < kNumResources; ++m) v[m] = rng.uniform(lo, hi);
    return v;
}

}  // namespace

void validate(const GeneratorConfig& cfg) {
    if (cfg.num_nodes < 1) throw ConfigError("generator: num_nodes must be >= 1");
    if (cfg.num_rules < 1) throw ConfigError("generator: num_rules must be >= 1");
    if (cfg.node_low < 0 || cfg.node_low > cfg.node_high)
        throw ConfigError("generator: node range must satisfy 0 <= low <= high");
    if (cfg.rule_low < 0 || cfg.rule_low > cfg.rule_high)
        throw ConfigError("generator: rule range must satisfy 0 <= low <= high");
    if (cfg.rule_pool_size < cfg.num_rules)
        throw ConfigError("generator: rule_pool_size must be >= num_rules");
}

ProblemInstance generate_instance(const GeneratorConfig& cfg, std::uint64_t seed) {
    validate(cfg);

    ProblemInstance inst;
    inst.seed = seed;

    inst.nodes.reserve(static_cast<std::size_t>(cfg.num_nodes) + 1);
    inst.nodes.push_back(NodeSpec{0, ResourceVector::zero(), true});
    Rng node_rng(hash_combine(seed, kNodeStream));
    for (int i = 0; i < cfg.num_nodes; ++i) {
        inst.nodes.push_back(
            NodeSpec{i + 1, draw_vector(node_rng, cfg.node_low, cfg.node_high), false});
    }

    const std::uint64_t pool_seed = cfg.pool_seed.value_or(seed);
    Rng pool_rng(hash_combine(pool_seed, kPoolStream));
    std::vector<ResourceVector> pool(static_cast<std::size_t>(cfg.rule_pool_size));
    for (auto& d : pool) d = draw_vector(pool_rng, cfg.rule_low, cfg.rule_high);

    // Partial Fisher-Yates draw of num_rules pool entries without replacement.
    Rng sample_rng(hash_combine(seed, kSampleStream));
    std::vector<int> indices(pool.size());
    std::iota(indices.begin(), indices.end(), 0);
    inst.rules.reserve(static_cast<std::size_t>(cfg.num_rules));
    for (int i = 0; i < cfg.num_rules; ++i) {
        const auto j = i + static_cast<int>(sample_rng.next_below(indices.size() - i));
        std::swap(indices[i], indices[j]);
        inst.rules.push_back(RuleSpec{i, pool[static_cast<std::size_t>(indices[i])]});
    }
    return inst;
}

std::string instance_to_json(const ProblemInstance& instance) {
    nlohmann::json j;
    j["seed"] = instance.seed;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& n : instance.nodes) {
        if (n.is_reject) continue;
        nodes.push_back(n.capacity.values);
    }
    auto& rules = j["rules"] = nlohmann::json::array();
    for (const auto& r : instance.rules) rules.push_back(r.demand.values);
    return j.dump();
}

ProblemInstance instance_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("instance: invalid JSON: ") + e.what());
    }
    if (!j.contains("nodes") || !j.contains("rules")) {
        throw DataError("instance: missing \"nodes\" or \"rules\"");
    }

    ProblemInstance inst;
    inst.seed = j.value("seed", std::uint64_t{0});
    inst.nodes.push_back(NodeSpec{0, ResourceVector::zero(), true});
    int id = 1;
    for (const auto& row : j.at("nodes")) {
        if (row.size() != kNumResources) throw DataError("instance: node row must have 3 entries");
        NodeSpec n{id++, {}, false};
        for (std::size_t m = 0; m < kNumResources; ++m) n.capacity[m] = row.at(m).get<double>();
        inst.nodes.push_back(n);
    }
    id = 0;
    for (const auto& row : j.at("rules")) {
        if (row.size() != kNumResources) throw DataError("instance: rule row must have 3 entries");
        RuleSpec r{id++, {}};
        for (std::size_t m = 0; m < kNumResources; ++m) r.demand[m] = row.at(m).get<double>();
        inst.rules.push_back(r);
    }
    if (inst.nodes.size() < 2 || inst.rules.empty()) {
        throw DataError("instance: needs at least one real node and one rule");
    }
    return inst;
}

void save_instance(const ProblemInstance& instance, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("instance: cannot open for writing: " + path);
    out << instance_to_json(instance) << "\n";
}

ProblemInstance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("instance: cannot open: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return instance_from_json(buf.str());
}

}  // namespace ruledist
