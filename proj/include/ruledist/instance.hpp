#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ruledist/resources.hpp"

namespace ruledist {

// An event-processing task with a resource demand vector.
struct RuleSpec {
    int id = 0;
    ResourceVector demand;

    bool operator==(const RuleSpec&) const = default;
};

// An edge device with a capacity vector. Exactly one node per instance is
// the reject node: a synthetic zero-capacity sink at index 0 that absorbs
// rejected rules.
struct NodeSpec {
    int id = 0;
    ResourceVector capacity;
    bool is_reject = false;

    bool operator==(const NodeSpec&) const = default;
};

// A node set (reject node first) plus a rule set, with the seed it was
// generated from. Immutable after construction.
struct ProblemInstance {
    std::vector<NodeSpec> nodes;  // nodes[0] is the reject node
    std::vector<RuleSpec> rules;
    std::uint64_t seed = 0;

    bool operator==(const ProblemInstance&) const = default;

    int num_real_nodes() const { return static_cast<int>(nodes.size()) - 1; }
    int num_rules() const { return static_cast<int>(rules.size()); }
};

struct GeneratorConfig {
    int num_nodes = 10;
    int num_rules = 20;
    double node_low = 0.0;
    double node_high = 1.0;
    double rule_low = 0.01;
    double rule_high = 0.30;
    int rule_pool_size = 1000;
    // When set, the demand pool is derived from this seed instead of the
    // instance seed, so a whole benchmark sweep shares one pool while
    // instances still sample independently.
    std::optional<std::uint64_t> pool_seed;
};

// Validates ranges/counts; throws ConfigError on violation.
void validate(const GeneratorConfig& cfg);

// Draws an instance: `num_nodes` real nodes with capacities i.i.d. uniform in
// [node_low, node_high] per component, plus the reject node at index 0; rules
// sampled without replacement from a seeded pool of `rule_pool_size` demand
// vectors i.i.d. uniform in [rule_low, rule_high]. Bit-identical for equal
// (cfg, seed).
ProblemInstance generate_instance(const GeneratorConfig& cfg, std::uint64_t seed);

// JSON instance file format:
//   {"seed": int, "nodes": [[c1,c2,c3],...], "rules": [[d1,d2,d3],...]}
// where "nodes" excludes the reject node; it is prepended on load.
// load(save(x)) == x exactly.
std::string instance_to_json(const ProblemInstance& instance);
ProblemInstance instance_from_json(const std::string& json_text);
void save_instance(const ProblemInstance& instance, const std::string& path);
ProblemInstance load_instance(const std::string& path);

}  // namespace ruledist
