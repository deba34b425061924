#include "ruledist/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ruledist {

namespace {

using Clock = std::chrono::steady_clock;

const char* kRowHeader =
    "method,num_nodes,num_rules,instance_seed,rejection_rate,omega_max,empty_nodes,"
    "objective_value,solve_ms,proven_optimal";

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Canonical method ordering for reports and plot columns.
const std::vector<std::string> kMethodOrder = {"Oracle", "Agent", "DR-DC", "DR-AC",
                                               "AR-DC",  "AR-AC", "Random"};

int method_rank(const std::string& m) {
    const auto it = std::find(kMethodOrder.begin(), kMethodOrder.end(), m);
    return it == kMethodOrder.end() ? static_cast<int>(kMethodOrder.size())
                                    : static_cast<int>(it - kMethodOrder.begin());
}

}  // namespace

std::string to_string(BenchMethod m) {
    switch (m) {
        case BenchMethod::Agent: return "Agent";
        case BenchMethod::DrDc: return "DR-DC";
        case BenchMethod::DrAc: return "DR-AC";
        case BenchMethod::ArDc: return "AR-DC";
        case BenchMethod::ArAc: return "AR-AC";
        case BenchMethod::Random: return "Random";
        case BenchMethod::Oracle: return "Oracle";
    }
    return "Oracle";
}

BenchMethod bench_method_from_string(const std::string& name) {
    for (BenchMethod m : {BenchMethod::Agent, BenchMethod::DrDc, BenchMethod::DrAc,
                          BenchMethod::ArDc, BenchMethod::ArAc, BenchMethod::Random,
                          BenchMethod::Oracle}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown bench method: " + name);
}

BenchConfig BenchConfig::desk_scale() {
    BenchConfig cfg;
    cfg.instances_per_cell = 20;
    cfg.oracle_time_limit_ms = 2'000.0;
    return cfg;
}

void validate(const BenchConfig& cfg) {
    if (cfg.node_sizes.empty() || cfg.rule_sizes.empty()) {
        throw ConfigError("bench: node_sizes and rule_sizes must be non-empty");
    }
    if (cfg.instances_per_cell < 1) throw ConfigError("bench: instances_per_cell must be >= 1");
    if (cfg.methods.empty()) throw ConfigError("bench: methods must be non-empty");
    if (cfg.agent_seeds < 1) throw ConfigError("bench: agent_seeds must be >= 1");
    for (int n : cfg.node_sizes) {
        if (n < 1) throw ConfigError("bench: node sizes must be positive");
    }
    for (int r : cfg.rule_sizes) {
        if (r < 1) throw ConfigError("bench: rule sizes must be positive");
    }
}

std::vector<BenchRow> run_benchmark(const BenchConfig& cfg,
                                    const std::vector<std::string>& checkpoints) {
    validate(cfg);

    const bool wants_agent = std::find(cfg.methods.begin(), cfg.methods.end(),
                                       BenchMethod::Agent) != cfg.methods.end();
    std::vector<ActorParams<float>> agents;
    if (wants_agent) {
        if (static_cast<int>(checkpoints.size()) != cfg.agent_seeds) {
            throw ConfigError("bench: need " + std::to_string(cfg.agent_seeds) +
                              " checkpoints for the Agent method, got " +
                              std::to_string(checkpoints.size()));
        }
        const RewardKind kind = reward_kind_of(cfg.objective);
        for (const auto& path : checkpoints) {
            auto ckpt = load_checkpoint<float>(path);
            if (ckpt.cfg.node_feature_dim != node_feature_dim(kind)) {
                throw ConfigError("bench: checkpoint " + path + " expects " +
                                  std::to_string(ckpt.cfg.node_feature_dim) +
                                  " node features, objective needs " +
                                  std::to_string(node_feature_dim(kind)));
            }
            agents.push_back(std::move(ckpt.actor));
        }
    }

    GeneratorConfig gen = cfg.generator;
    gen.pool_seed = cfg.bench_seed;  // one demand pool per benchmark seed

    struct Task {
        int node_size;
        int rule_size;
        int index;
        std::uint64_t instance_seed;
    };
    std::vector<Task> tasks;
    for (int n : cfg.node_sizes) {
        for (int r : cfg.rule_sizes) {
            for (int i = 0; i < cfg.instances_per_cell; ++i) {
                tasks.push_back(Task{n, r, i, hash_combine(cfg.bench_seed, n, r, i)});
            }
        }
    }

    const int rows_per_task = [&] {
        int n = 0;
        for (BenchMethod m : cfg.methods) n += (m == BenchMethod::Agent ? cfg.agent_seeds : 1);
        return n;
    }();
    std::vector<BenchRow> rows(tasks.size() * static_cast<std::size_t>(rows_per_task));

    const auto solve_task = [&](std::size_t ti) {
        const Task& task = tasks[ti];
        GeneratorConfig g = gen;
        g.num_nodes = task.node_size;
        g.num_rules = task.rule_size;
        const auto instance = generate_instance(g, task.instance_seed);

        std::size_t slot = ti * static_cast<std::size_t>(rows_per_task);
        const auto push = [&](const std::string& method, const Solution& sol, double ms,
                              double objective_val, int proven) {
            BenchRow& row = rows[slot++];
            row.method = method;
            row.num_nodes = task.node_size;
            row.num_rules = task.rule_size;
            row.instance_seed = task.instance_seed;
            row.rejection_rate = sol.kpis.rejection_rate;
            row.omega_max = sol.kpis.omega_max;
            row.empty_nodes = sol.kpis.empty_nodes;
            row.objective_value = objective_val;
            row.solve_ms = cfg.log_timing ? ms : 0.0;
            row.proven_optimal = proven;
        };

        for (BenchMethod method : cfg.methods) {
            switch (method) {
                case BenchMethod::Oracle: {
                    OracleLimits limits;
                    limits.max_wall_time_ms = cfg.oracle_time_limit_ms;
                    limits.max_nodes_explored = cfg.oracle_max_nodes;
                    const auto res = solve_bnb(instance, cfg.objective, limits);
                    push("Oracle", res.solution, res.wall_ms, res.objective_value,
                         res.proven_optimal ? 1 : 0);
                    break;
                }
                case BenchMethod::Agent: {
                    const RewardKind kind = reward_kind_of(cfg.objective);
                    for (const auto& agent : agents) {
                        const auto t0 = Clock::now();
                        const auto sol = solve_with_policy(instance, agent, kind);
                        const double ms =
                            std::chrono::duration<double, std::milli>(Clock::now() - t0)
                                .count();
                        push("Agent", sol, ms,
                             objective_value(instance, sol, cfg.objective), -1);
                    }
                    break;
                }
                default: {
                    const auto variant = heuristic_from_string(to_string(method));
                    const auto t0 = Clock::now();
                    const auto sol = solve_heuristic(instance, variant, task.instance_seed);
                    const double ms =
                        std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
                    push(to_string(method), sol, ms,
                         objective_value(instance, sol, cfg.objective), -1);
                    break;
                }
            }
        }
    };

    if (cfg.parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) solve_task(ti);
    } else {
        for (std::size_t ti = 0; ti < tasks.size(); ++ti) solve_task(ti);
    }
    return rows;
}

std::vector<GapRow> gap_table(const std::vector<BenchRow>& rows, Objective objective,
                              const std::string& reference_method) {
    std::map<std::tuple<int, int, std::uint64_t>, const BenchRow*> reference;
    for (const auto& row : rows) {
        if (row.method == reference_method) {
            reference[{row.num_nodes, row.num_rules, row.instance_seed}] = &row;
        }
    }

    struct Acc {
        double rejection = 0.0;
        double omega = 0.0;
        double empty = 0.0;
        int pairs = 0;
        int proven = 0;
        int proven_total = 0;
    };
    std::map<std::pair<std::string, int>, Acc> acc;
    std::set<std::string> missing;

    for (const auto& row : rows) {
        if (row.method == reference_method) {
            auto& a = acc[{row.method, row.num_nodes}];
            a.proven += (row.proven_optimal == 1);
            ++a.proven_total;
            continue;
        }
        const auto it = reference.find({row.num_nodes, row.num_rules, row.instance_seed});
        if (it == reference.end()) {
            std::ostringstream key;
            key << "(" << row.num_nodes << "," << row.num_rules << "," << row.instance_seed
                << ")";
            missing.insert(key.str());
            continue;
        }
        const BenchRow& ref = *it->second;
        auto& a = acc[{row.method, row.num_nodes}];
        a.rejection += (row.rejection_rate - ref.rejection_rate) * 100.0;
        a.omega += row.omega_max - ref.omega_max;
        a.empty += row.empty_nodes - ref.empty_nodes;
        ++a.pairs;
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "gap_table: missing " << reference_method << " rows for";
        for (const auto& k : missing) msg << ' ' << k;
        throw DataError(msg.str());
    }

    // Reference proven fraction per node size, shared by all methods.
    std::map<int, double> proven_fraction;
    for (const auto& [key, a] : acc) {
        if (key.first == reference_method && a.proven_total > 0) {
            proven_fraction[key.second] =
                static_cast<double>(a.proven) / a.proven_total;
        }
    }

    std::vector<GapRow> out;
    for (const auto& [key, a] : acc) {
        if (key.first == reference_method || a.pairs == 0) continue;
        GapRow g;
        g.method = key.first;
        g.num_nodes = key.second;
        g.rejection_gap_pp = a.rejection / a.pairs;
        g.omega_gap = a.omega / a.pairs;
        g.empty_nodes_gap = a.empty / a.pairs;
        g.pairs = a.pairs;
        const auto pf = proven_fraction.find(key.second);
        g.reference_proven_fraction = pf == proven_fraction.end() ? 1.0 : pf->second;
        out.push_back(g);
    }
    std::sort(out.begin(), out.end(), [](const GapRow& a, const GapRow& b) {
        if (a.num_nodes != b.num_nodes) return a.num_nodes < b.num_nodes;
        return method_rank(a.method) < method_rank(b.method);
    });
    (void)objective;
    return out;
}

std::vector<TimingRow> timing_report(const std::vector<BenchRow>& rows) {
    if (rows.empty()) return {};
    int largest = 0;
    for (const auto& row : rows) largest = std::max(largest, row.num_rules);

    std::map<std::pair<std::string, int>, std::vector<double>> samples;
    for (const auto& row : rows) {
        if (row.num_rules == largest) {
            samples[{row.method, row.num_nodes}].push_back(row.solve_ms);
        }
    }
    std::vector<TimingRow> out;
    for (const auto& [key, values] : samples) {
        TimingRow t;
        t.method = key.first;
        t.num_nodes = key.second;
        t.num_rules = largest;
        t.samples = static_cast<int>(values.size());
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        t.mean_ms = mean;
        t.std_ms = std::sqrt(var);
        t.per_decision_ms = mean / largest;
        out.push_back(t);
    }
    std::sort(out.begin(), out.end(), [](const TimingRow& a, const TimingRow& b) {
        if (a.num_nodes != b.num_nodes) return a.num_nodes < b.num_nodes;
        return method_rank(a.method) < method_rank(b.method);
    });
    return out;
}

void emit(const std::vector<BenchRow>& rows, EmitFormat format, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("emit: cannot open for writing: " + path);
    if (format == EmitFormat::Csv) {
        out << kRowHeader << "\n";
        for (const auto& r : rows) {
            out << r.method << ',' << r.num_nodes << ',' << r.num_rules << ','
                << r.instance_seed << ',' << format_double(r.rejection_rate) << ','
                << format_double(r.omega_max) << ',' << r.empty_nodes << ','
                << format_double(r.objective_value) << ',' << format_double(r.solve_ms) << ','
                << r.proven_optimal << "\n";
        }
    } else {
        for (const auto& r : rows) {
            nlohmann::json j{{"method", r.method},
                             {"num_nodes", r.num_nodes},
                             {"num_rules", r.num_rules},
                             {"instance_seed", r.instance_seed},
                             {"rejection_rate", r.rejection_rate},
                             {"omega_max", r.omega_max},
                             {"empty_nodes", r.empty_nodes},
                             {"objective_value", r.objective_value},
                             {"solve_ms", r.solve_ms},
                             {"proven_optimal", r.proven_optimal}};
            out << j.dump() << "\n";
        }
    }
    if (!out) throw DataError("emit: write failed: " + path);
}

std::vector<BenchRow> parse_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("parse_rows: cannot open: " + path);
    std::vector<BenchRow> rows;
    std::string line;
    bool jsonl = path.size() > 6 && path.substr(path.size() - 6) == ".jsonl";
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (jsonl) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(std::string("parse_rows: bad JSONL line: ") + e.what());
            }
            BenchRow r;
            r.method = j.at("method").get<std::string>();
            r.num_nodes = j.at("num_nodes").get<int>();
            r.num_rules = j.at("num_rules").get<int>();
            r.instance_seed = j.at("instance_seed").get<std::uint64_t>();
            r.rejection_rate = j.at("rejection_rate").get<double>();
            r.omega_max = j.at("omega_max").get<double>();
            r.empty_nodes = j.at("empty_nodes").get<int>();
            r.objective_value = j.at("objective_value").get<double>();
            r.solve_ms = j.at("solve_ms").get<double>();
            r.proven_optimal = j.at("proven_optimal").get<int>();
            rows.push_back(std::move(r));
            continue;
        }
        if (first) {
            first = false;
            if (line == kRowHeader) continue;
            throw DataError("parse_rows: unexpected CSV header in " + path);
        }
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 10) {
            throw DataError("parse_rows: expected 10 CSV fields, got " +
                            std::to_string(fields.size()));
        }
        BenchRow r;
        r.method = fields[0];
        r.num_nodes = std::stoi(fields[1]);
        r.num_rules = std::stoi(fields[2]);
        r.instance_seed = std::stoull(fields[3]);
        r.rejection_rate = std::stod(fields[4]);
        r.omega_max = std::stod(fields[5]);
        r.empty_nodes = std::stoi(fields[6]);
        r.objective_value = std::stod(fields[7]);
        r.solve_ms = std::stod(fields[8]);
        r.proven_optimal = std::stoi(fields[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string gap_table_csv(const std::vector<GapRow>& rows, Objective objective) {
    std::ostringstream out;
    out << "method,num_nodes,rejection_gap_pp";
    if (objective == Objective::CriticalAware) out << ",omega_gap";
    if (objective == Objective::CostAware) out << ",empty_nodes_gap";
    out << ",pairs,reference_proven_fraction\n";
    for (const auto& g : rows) {
        out << g.method << ',' << g.num_nodes << ',' << format_double(g.rejection_gap_pp);
        if (objective == Objective::CriticalAware) out << ',' << format_double(g.omega_gap);
        if (objective == Objective::CostAware) out << ',' << format_double(g.empty_nodes_gap);
        out << ',' << g.pairs << ',' << format_double(g.reference_proven_fraction) << "\n";
    }
    return out.str();
}

std::string timing_report_csv(const std::vector<TimingRow>& rows) {
    std::ostringstream out;
    out << "method,num_nodes,num_rules,mean_ms,std_ms,per_decision_ms,samples\n";
    for (const auto& t : rows) {
        out << t.method << ',' << t.num_nodes << ',' << t.num_rules << ','
            << format_double(t.mean_ms) << ',' << format_double(t.std_ms) << ','
            << format_double(t.per_decision_ms) << ',' << t.samples << "\n";
    }
    return out.str();
}

std::vector<std::string> plot_data(const std::vector<BenchRow>& rows, Objective objective,
                                   const std::string& out_dir) {
    std::vector<std::string> kpis = {"rejection_rate"};
    if (objective == Objective::CriticalAware) kpis.push_back("omega_max");
    if (objective == Objective::CostAware) kpis.push_back("empty_nodes");

    std::set<int> node_sizes;
    std::set<int> rule_sizes;
    std::set<std::string> method_set;
    for (const auto& r : rows) {
        node_sizes.insert(r.num_nodes);
        rule_sizes.insert(r.num_rules);
        method_set.insert(r.method);
    }
    std::vector<std::string> methods(method_set.begin(), method_set.end());
    std::sort(methods.begin(), methods.end(), [](const std::string& a, const std::string& b) {
        return method_rank(a) < method_rank(b);
    });

    // (kpi, node, rule, method) -> mean
    const auto cell_mean = [&](const std::string& kpi, int n, int r, const std::string& m) {
        double acc = 0.0;
        int count = 0;
        for (const auto& row : rows) {
            if (row.num_nodes != n || row.num_rules != r || row.method != m) continue;
            if (kpi == "rejection_rate") {
                acc += row.rejection_rate;
            } else if (kpi == "omega_max") {
                acc += row.omega_max;
            } else {
                acc += row.empty_nodes;
            }
            ++count;
        }
        return count == 0 ? 0.0 : acc / count;
    };

    std::filesystem::create_directories(out_dir);
    std::vector<std::string> written;
    for (const auto& kpi : kpis) {
        for (int n : node_sizes) {
            const std::string path =
                out_dir + "/plot_" + kpi + "_n" + std::to_string(n) + ".csv";
            std::ofstream out(path);
            if (!out) throw DataError("plot_data: cannot open for writing: " + path);
            out << "rule_count";
            for (const auto& m : methods) out << ',' << m;
            out << "\n";
            for (int r : rule_sizes) {
                out << r;
                for (const auto& m : methods) out << ',' << format_double(cell_mean(kpi, n, r, m));
                out << "\n";
            }
            written.push_back(path);
        }
    }
    return written;
}

}  // namespace ruledist
