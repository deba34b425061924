#pragma once

// Experiment harness: paired sweeps over (node size, rule size) cells, KPI
// gap tables against the exact reference, timing summaries and per-figure
// plot data.

#include <cstdint>
#include <string>
#include <vector>

#include "ruledist/heuristics.hpp"
#include "ruledist/oracle.hpp"
#include "ruledist/trainer.hpp"

namespace ruledist {

enum class BenchMethod { Agent, DrDc, DrAc, ArDc, ArAc, Random, Oracle };

std::string to_string(BenchMethod m);
BenchMethod bench_method_from_string(const std::string& name);

struct BenchConfig {
    std::vector<int> node_sizes = {10, 20, 30, 40, 50};
    std::vector<int> rule_sizes = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    int instances_per_cell = 100;
    int agent_seeds = 3;
    std::vector<BenchMethod> methods = {BenchMethod::Agent,  BenchMethod::DrDc,
                                        BenchMethod::DrAc,   BenchMethod::ArDc,
                                        BenchMethod::ArAc,   BenchMethod::Random,
                                        BenchMethod::Oracle};
    double oracle_time_limit_ms = 60'000.0;
    std::uint64_t oracle_max_nodes = UINT64_MAX;
    Objective objective = Objective::Greedy;
    std::uint64_t bench_seed = 0;
    GeneratorConfig generator;  // counts come from the sweep; pool is shared per bench seed
    bool log_timing = true;     // solve_ms written as 0 when false
    bool parallel = true;       // cells in parallel; timings are noisier then

    // 20 instances per cell, 2 s oracle limit.
    static BenchConfig desk_scale();
};

void validate(const BenchConfig& cfg);

struct BenchRow {
    std::string method;
    int num_nodes = 0;
    int num_rules = 0;
    std::uint64_t instance_seed = 0;
    double rejection_rate = 0.0;
    double omega_max = 0.0;
    int empty_nodes = 0;
    double objective_value = 0.0;
    double solve_ms = 0.0;
    int proven_optimal = -1;  // 1/0 for the oracle, -1 elsewhere

    bool operator==(const BenchRow&) const = default;
};

// Runs every method on byte-identical instances per cell index (instance
// seeds derive from hash(bench_seed, node_size, rule_size, index), so adding
// methods never shifts instances). Agents decode greedily, one row per
// checkpoint. Rows come back in deterministic order.
std::vector<BenchRow> run_benchmark(const BenchConfig& cfg,
                                    const std::vector<std::string>& checkpoints);

struct GapRow {
    std::string method;
    int num_nodes = 0;
    double rejection_gap_pp = 0.0;  // percentage points (method - reference)
    double omega_gap = 0.0;         // raw difference, CriticalAware KPI
    double empty_nodes_gap = 0.0;   // raw difference, CostAware KPI
    int pairs = 0;
    double reference_proven_fraction = 1.0;
};

// Per-(method, node size) averages of method-minus-reference KPI gaps over
// all rule sizes and instances. Throws DataError listing missing reference
// pairs.
std::vector<GapRow> gap_table(const std::vector<BenchRow>& rows, Objective objective,
                              const std::string& reference_method = "Oracle");

struct TimingRow {
    std::string method;
    int num_nodes = 0;
    int num_rules = 0;  // the largest rule size in the rows
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double per_decision_ms = 0.0;  // mean_ms / num_rules
    int samples = 0;
};

// Mean/stddev of solve_ms at the largest rule size, per (method, node size).
std::vector<TimingRow> timing_report(const std::vector<BenchRow>& rows);

enum class EmitFormat { Csv, Jsonl };

void emit(const std::vector<BenchRow>& rows, EmitFormat format, const std::string& path);
std::vector<BenchRow> parse_rows(const std::string& path);

std::string gap_table_csv(const std::vector<GapRow>& rows, Objective objective);
std::string timing_report_csv(const std::vector<TimingRow>& rows);

// One CSV per (KPI, node size): x = rule count, one column per method holding
// the cell-mean KPI. Returns the written paths.
std::vector<std::string> plot_data(const std::vector<BenchRow>& rows, Objective objective,
                                   const std::string& out_dir);

}  // namespace ruledist
