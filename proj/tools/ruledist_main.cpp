// Command-line front end: instance generation, single-instance solves, the
// exact oracle, A2C training, checkpoint evaluation, benchmark sweeps and
// report/plot-data generation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ruledist/bench.hpp"

namespace {

using namespace ruledist;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad JSON in " + path + ": " + e.what());
    }
    return j;
}

void apply_generator_json(const nlohmann::json& j, GeneratorConfig& gen) {
    gen.node_low = j.value("node_low", gen.node_low);
    gen.node_high = j.value("node_high", gen.node_high);
    gen.rule_low = j.value("rule_low", gen.rule_low);
    gen.rule_high = j.value("rule_high", gen.rule_high);
    gen.rule_pool_size = j.value("rule_pool_size", gen.rule_pool_size);
}

void apply_model_json(const nlohmann::json& j, ModelConfig& m) {
    m.embed_dim = j.value("embed_dim", m.embed_dim);
    m.num_heads = j.value("num_heads", m.num_heads);
    m.actor_stacks = j.value("actor_stacks", m.actor_stacks);
    m.critic_stacks = j.value("critic_stacks", m.critic_stacks);
    m.actor_ffn_dim = j.value("actor_ffn_dim", m.actor_ffn_dim);
    m.critic_ffn_dim = j.value("critic_ffn_dim", m.critic_ffn_dim);
    m.critic_head_dim = j.value("critic_head_dim", m.critic_head_dim);
    m.logit_clip = j.value("logit_clip", m.logit_clip);
    m.reencode_each_step = j.value("reencode_each_step", m.reencode_each_step);
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg = j.value("desk_scale", false) ? TrainConfig::desk_scale() : TrainConfig{};
    cfg.training_steps = j.value("training_steps", cfg.training_steps);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.entropy_coeff = j.value("entropy_coeff", cfg.entropy_coeff);
    cfg.lr_actor = j.value("lr_actor", cfg.lr_actor);
    cfg.lr_critic = j.value("lr_critic", cfg.lr_critic);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.train_num_nodes = j.value("train_num_nodes", cfg.train_num_nodes);
    cfg.train_num_rules = j.value("train_num_rules", cfg.train_num_rules);
    cfg.eval_seed_count = j.value("eval_seed_count", cfg.eval_seed_count);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.grad_chunk = j.value("grad_chunk", cfg.grad_chunk);
    cfg.log_timing = j.value("log_timing", cfg.log_timing);
    if (j.contains("advantage_mode")) {
        const auto mode = j.at("advantage_mode").get<std::string>();
        if (mode == "td0") {
            cfg.advantage_mode = AdvantageMode::TD0;
        } else if (mode == "montecarlo") {
            cfg.advantage_mode = AdvantageMode::MonteCarlo;
        } else {
            throw ConfigError("advantage_mode must be td0 or montecarlo");
        }
    }
    if (j.contains("generator")) apply_generator_json(j.at("generator"), cfg.generator);
    if (j.contains("model")) apply_model_json(j.at("model"), cfg.model);
    return cfg;
}

BenchConfig bench_config_from_json(const nlohmann::json& j) {
    BenchConfig cfg = j.value("desk_scale", false) ? BenchConfig::desk_scale() : BenchConfig{};
    if (j.contains("node_sizes")) cfg.node_sizes = j.at("node_sizes").get<std::vector<int>>();
    if (j.contains("rule_sizes")) cfg.rule_sizes = j.at("rule_sizes").get<std::vector<int>>();
    cfg.instances_per_cell = j.value("instances_per_cell", cfg.instances_per_cell);
    cfg.agent_seeds = j.value("agent_seeds", cfg.agent_seeds);
    cfg.oracle_time_limit_ms = j.value("oracle_time_limit_ms", cfg.oracle_time_limit_ms);
    cfg.log_timing = j.value("log_timing", cfg.log_timing);
    cfg.parallel = j.value("parallel", cfg.parallel);
    if (j.contains("objective")) {
        cfg.objective = objective_from_string(j.at("objective").get<std::string>());
    }
    if (j.contains("methods")) {
        cfg.methods.clear();
        for (const auto& m : j.at("methods")) {
            cfg.methods.push_back(bench_method_from_string(m.get<std::string>()));
        }
    }
    if (j.contains("generator")) apply_generator_json(j.at("generator"), cfg.generator);
    return cfg;
}

struct CommonSolveResult {
    Solution solution;
    double objective = 0.0;
};

int run(int argc, char** argv) {
    CLI::App app{"Event-processing-task distribution: generator, heuristics, exact oracle, "
                 "attention-based agent, benchmark harness"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "OpenMP thread count (0: library default)");

    // --- gen ----------------------------------------------------------------
    auto* gen_cmd = app.add_subcommand("gen", "Generate instance files");
    GeneratorConfig gen_cfg;
    std::uint64_t gen_seed = 0;
    int gen_count = 1;
    std::string gen_out = "instance.json";
    gen_cmd->add_option("--nodes", gen_cfg.num_nodes, "Real node count")->required();
    gen_cmd->add_option("--rules", gen_cfg.num_rules, "Rule count")->required();
    gen_cmd->add_option("--seed", gen_seed, "Generation seed");
    gen_cmd->add_option("--count", gen_count, "Number of instances (seeds seed..seed+count-1)");
    gen_cmd->add_option("--out", gen_out, "Output path (suffix _<i> added when count > 1)");
    gen_cmd->add_option("--node-low", gen_cfg.node_low, "Node capacity lower bound");
    gen_cmd->add_option("--node-high", gen_cfg.node_high, "Node capacity upper bound");
    gen_cmd->add_option("--rule-low", gen_cfg.rule_low, "Rule demand lower bound");
    gen_cmd->add_option("--rule-high", gen_cfg.rule_high, "Rule demand upper bound");
    gen_cmd->add_option("--pool-size", gen_cfg.rule_pool_size, "Demand pool size");

    // --- solve ---------------------------------------------------------------
    auto* solve_cmd = app.add_subcommand("solve", "Solve one instance with one method");
    std::string solve_instance;
    std::string solve_method = "DR-DC";
    std::string solve_criterion = "greedy";
    std::string solve_checkpoint;
    std::uint64_t solve_seed = 0;
    solve_cmd->add_option("--instance", solve_instance, "Instance JSON path")->required();
    solve_cmd->add_option("--method", solve_method,
                          "Agent | DR-DC | DR-AC | AR-DC | AR-AC | Random");
    solve_cmd->add_option("--criterion", solve_criterion, "greedy | critical | cost");
    solve_cmd->add_option("--checkpoint", solve_checkpoint, "Checkpoint (Agent method)");
    solve_cmd->add_option("--seed", solve_seed, "Seed (Random method)");

    // --- oracle ----------------------------------------------------------------
    auto* oracle_cmd = app.add_subcommand("oracle", "Exact solve with limits");
    std::string oracle_instance;
    std::string oracle_objective = "greedy";
    double oracle_time_ms = 60'000.0;
    std::uint64_t oracle_max_nodes = UINT64_MAX;
    bool oracle_exhaustive = false;
    oracle_cmd->add_option("--instance", oracle_instance, "Instance JSON path")->required();
    oracle_cmd->add_option("--objective", oracle_objective, "greedy | critical | cost");
    oracle_cmd->add_option("--time-limit-ms", oracle_time_ms, "Wall-clock budget");
    oracle_cmd->add_option("--max-nodes", oracle_max_nodes, "Search node budget");
    oracle_cmd->add_flag("--exhaustive", oracle_exhaustive,
                         "Use the exhaustive enumerator instead of branch and bound");

    // --- train ---------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "A2C training");
    std::string train_config_path;
    std::string train_criterion = "greedy";
    std::string train_out = "train_out";
    std::uint64_t train_seed = 0;
    bool train_desk = false;
    std::optional<int> train_steps, train_batch, train_nodes, train_rules, train_chunk;
    std::optional<bool> train_timing;
    train_cmd->add_option("--config", train_config_path, "TrainConfig JSON file");
    train_cmd->add_option("--criterion", train_criterion, "greedy | critical | cost");
    train_cmd->add_option("--seed", train_seed, "Training seed");
    train_cmd->add_option("--out", train_out, "Output directory");
    train_cmd->add_flag("--desk-scale", train_desk, "Desk-scale defaults (3000x32 at 4x8)");
    train_cmd->add_option("--steps", train_steps, "Override training_steps");
    train_cmd->add_option("--batch", train_batch, "Override batch_size");
    train_cmd->add_option("--nodes", train_nodes, "Override train_num_nodes");
    train_cmd->add_option("--rules", train_rules, "Override train_num_rules");
    train_cmd->add_option("--grad-chunk", train_chunk, "Override grad_chunk");
    train_cmd->add_option("--log-timing", train_timing, "Write wall_ms (false: zeros)");

    // --- eval ------------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint against baselines");
    std::vector<std::string> eval_checkpoints;
    std::string eval_criterion = "greedy";
    int eval_nodes = 4, eval_rules = 8, eval_instances = 100;
    std::uint64_t eval_seed = 0;
    bool eval_oracle = false;
    eval_cmd->add_option("--checkpoint", eval_checkpoints, "Checkpoint path(s)")->required();
    eval_cmd->add_option("--criterion", eval_criterion, "greedy | critical | cost");
    eval_cmd->add_option("--nodes", eval_nodes, "Real node count");
    eval_cmd->add_option("--rules", eval_rules, "Rule count");
    eval_cmd->add_option("--instances", eval_instances, "Held-out instance count");
    eval_cmd->add_option("--seed", eval_seed, "Instance seed base");
    eval_cmd->add_flag("--oracle", eval_oracle, "Include the exact oracle");

    // --- bench -------------------------------------------------------------------
    auto* bench_cmd = app.add_subcommand("bench", "Full benchmark sweep");
    std::string bench_config_path;
    std::string bench_out = "rows.csv";
    std::string bench_format = "csv";
    std::vector<std::string> bench_checkpoints;
    std::uint64_t bench_seed_flag = 0;
    bool bench_desk = false, bench_serial = false, bench_no_timing = false;
    std::vector<int> bench_nodes, bench_rules;
    std::vector<std::string> bench_methods;
    std::optional<int> bench_per_cell;
    std::optional<std::string> bench_objective;
    std::optional<double> bench_oracle_ms;
    bench_cmd->add_option("--config", bench_config_path, "BenchConfig JSON file");
    bench_cmd->add_option("--out", bench_out, "Rows output path");
    bench_cmd->add_option("--format", bench_format, "csv | jsonl");
    bench_cmd->add_option("--checkpoint", bench_checkpoints, "Agent checkpoints");
    bench_cmd->add_option("--seed", bench_seed_flag, "Benchmark seed");
    bench_cmd->add_flag("--desk-scale", bench_desk, "Desk-scale defaults");
    bench_cmd->add_flag("--serial", bench_serial, "Disable cell parallelism");
    bench_cmd->add_flag("--no-timing", bench_no_timing, "Zero the solve_ms column");
    bench_cmd->add_option("--nodes", bench_nodes, "Node sizes");
    bench_cmd->add_option("--rules", bench_rules, "Rule sizes");
    bench_cmd->add_option("--per-cell", bench_per_cell, "Instances per cell");
    bench_cmd->add_option("--methods", bench_methods, "Method subset");
    bench_cmd->add_option("--objective", bench_objective, "greedy | critical | cost");
    bench_cmd->add_option("--oracle-time-limit-ms", bench_oracle_ms, "Oracle budget per solve");

    // --- report --------------------------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "Gap and timing tables from rows");
    std::string report_rows;
    std::string report_objective = "greedy";
    std::string report_reference = "Oracle";
    report_cmd->add_option("--rows", report_rows, "Rows CSV/JSONL path")->required();
    report_cmd->add_option("--objective", report_objective, "greedy | critical | cost");
    report_cmd->add_option("--reference", report_reference, "Reference method");

    // --- plotdata -------------------------------------------------------------------
    auto* plot_cmd = app.add_subcommand("plotdata", "Per-figure CSV series from rows");
    std::string plot_rows;
    std::string plot_objective = "greedy";
    std::string plot_dir = "plots";
    plot_cmd->add_option("--rows", plot_rows, "Rows CSV/JSONL path")->required();
    plot_cmd->add_option("--objective", plot_objective, "greedy | critical | cost");
    plot_cmd->add_option("--out-dir", plot_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // --help and --version exit cleanly
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    if (gen_cmd->parsed()) {
        validate(gen_cfg);
        for (int i = 0; i < gen_count; ++i) {
            std::string path = gen_out;
            if (gen_count > 1) {
                const auto dot = path.rfind('.');
                const std::string suffix = "_" + std::to_string(i);
                path = dot == std::string::npos ? path + suffix
                                                : path.substr(0, dot) + suffix + path.substr(dot);
            }
            save_instance(generate_instance(gen_cfg, gen_seed + static_cast<std::uint64_t>(i)),
                          path);
            std::cout << path << "\n";
        }
        return 0;
    }

    if (solve_cmd->parsed()) {
        const auto instance = load_instance(solve_instance);
        const RewardKind kind = reward_kind_from_string(solve_criterion);
        Solution sol;
        if (solve_method == "Agent" || solve_method == "agent") {
            if (solve_checkpoint.empty()) {
                throw ConfigError("solve: the Agent method needs --checkpoint");
            }
            auto ckpt = load_checkpoint<float>(solve_checkpoint);
            sol = solve_with_policy(instance, ckpt.actor, kind);
        } else {
            sol = solve_heuristic(instance, heuristic_from_string(solve_method), solve_seed);
        }
        std::cout << solution_to_json(sol) << "\n";
        return 0;
    }

    if (oracle_cmd->parsed()) {
        const auto instance = load_instance(oracle_instance);
        const Objective objective = objective_from_string(oracle_objective);
        OracleResult res;
        if (oracle_exhaustive) {
            res = solve_exhaustive(instance, objective);
        } else {
            OracleLimits limits;
            limits.max_wall_time_ms = oracle_time_ms;
            limits.max_nodes_explored = oracle_max_nodes;
            res = solve_bnb(instance, objective, limits);
        }
        std::cout << oracle_result_to_json(res) << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        TrainConfig cfg = train_desk ? TrainConfig::desk_scale() : TrainConfig{};
        if (!train_config_path.empty()) cfg = train_config_from_json(read_json_file(train_config_path));
        if (train_desk && !train_config_path.empty()) {
            // flags win over the file; --desk-scale resets the scale knobs
            const TrainConfig desk = TrainConfig::desk_scale();
            cfg.training_steps = desk.training_steps;
            cfg.batch_size = desk.batch_size;
            cfg.train_num_nodes = desk.train_num_nodes;
            cfg.train_num_rules = desk.train_num_rules;
        }
        if (train_steps) cfg.training_steps = *train_steps;
        if (train_batch) cfg.batch_size = *train_batch;
        if (train_nodes) cfg.train_num_nodes = *train_nodes;
        if (train_rules) cfg.train_num_rules = *train_rules;
        if (train_chunk) cfg.grad_chunk = *train_chunk;
        if (train_timing) cfg.log_timing = *train_timing;
        const RewardKind kind = reward_kind_from_string(train_criterion);

        std::filesystem::create_directories(train_out);
        const auto result = train(cfg, kind, train_seed, train_out);

        std::ofstream log(train_out + "/train_log.csv");
        log << result.log_csv;
        std::ofstream mc(train_out + "/model_config.json");
        mc << detail::config_to_json(model_config_for(kind, cfg.model)).dump(2) << "\n";
        std::cout << train_out << "/ckpt_final.rdcp\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        const RewardKind kind = reward_kind_from_string(eval_criterion);
        const Objective objective = objective_of(kind);
        BenchConfig cfg = BenchConfig::desk_scale();
        cfg.node_sizes = {eval_nodes};
        cfg.rule_sizes = {eval_rules};
        cfg.instances_per_cell = eval_instances;
        cfg.agent_seeds = static_cast<int>(eval_checkpoints.size());
        cfg.objective = objective;
        cfg.bench_seed = eval_seed;
        cfg.methods = {BenchMethod::Agent, BenchMethod::DrDc, BenchMethod::DrAc,
                       BenchMethod::ArDc, BenchMethod::ArAc, BenchMethod::Random};
        if (eval_oracle) cfg.methods.push_back(BenchMethod::Oracle);
        const auto rows = run_benchmark(cfg, eval_checkpoints);

        std::map<std::string, std::pair<double, int>> rejection;
        for (const auto& row : rows) {
            auto& [acc, count] = rejection[row.method];
            acc += row.rejection_rate;
            ++count;
        }
        std::cout << "method,mean_rejection_rate,samples\n";
        for (const auto& [method, stat] : rejection) {
            std::printf("%s,%.6f,%d\n", method.c_str(), stat.first / stat.second, stat.second);
        }
        return 0;
    }

    if (bench_cmd->parsed()) {
        BenchConfig cfg = bench_desk ? BenchConfig::desk_scale() : BenchConfig{};
        if (!bench_config_path.empty()) cfg = bench_config_from_json(read_json_file(bench_config_path));
        if (bench_desk && !bench_config_path.empty()) {
            cfg.instances_per_cell = BenchConfig::desk_scale().instances_per_cell;
            cfg.oracle_time_limit_ms = BenchConfig::desk_scale().oracle_time_limit_ms;
        }
        if (!bench_nodes.empty()) cfg.node_sizes = bench_nodes;
        if (!bench_rules.empty()) cfg.rule_sizes = bench_rules;
        if (bench_per_cell) cfg.instances_per_cell = *bench_per_cell;
        if (bench_objective) cfg.objective = objective_from_string(*bench_objective);
        if (bench_oracle_ms) cfg.oracle_time_limit_ms = *bench_oracle_ms;
        if (!bench_methods.empty()) {
            cfg.methods.clear();
            for (const auto& m : bench_methods) cfg.methods.push_back(bench_method_from_string(m));
        }
        cfg.bench_seed = bench_seed_flag;
        cfg.agent_seeds = static_cast<int>(bench_checkpoints.size());
        if (cfg.agent_seeds == 0) {
            cfg.methods.erase(
                std::remove(cfg.methods.begin(), cfg.methods.end(), BenchMethod::Agent),
                cfg.methods.end());
            cfg.agent_seeds = 1;
        }
        if (bench_serial) cfg.parallel = false;
        if (bench_no_timing) cfg.log_timing = false;

        const auto rows = run_benchmark(cfg, bench_checkpoints);
        emit(rows, bench_format == "jsonl" ? EmitFormat::Jsonl : EmitFormat::Csv, bench_out);
        std::cout << bench_out << " (" << rows.size() << " rows)\n";
        return 0;
    }

    if (report_cmd->parsed()) {
        const auto rows = parse_rows(report_rows);
        const Objective objective = objective_from_string(report_objective);
        std::cout << gap_table_csv(gap_table(rows, objective, report_reference), objective);
        std::cout << "\n" << timing_report_csv(timing_report(rows));
        return 0;
    }

    if (plot_cmd->parsed()) {
        const auto rows = parse_rows(plot_rows);
        for (const auto& path :
             plot_data(rows, objective_from_string(plot_objective), plot_dir)) {
            std::cout << path << "\n";
        }
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ruledist::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ruledist::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
