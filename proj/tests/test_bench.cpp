#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "ruledist/bench.hpp"

using namespace ruledist;

namespace {

BenchConfig tiny_bench() {
    BenchConfig cfg = BenchConfig::desk_scale();
    cfg.node_sizes = {3};
    cfg.rule_sizes = {6};
    cfg.instances_per_cell = 5;
    cfg.methods = {BenchMethod::DrDc, BenchMethod::Random};
    cfg.bench_seed = 42;
    cfg.log_timing = false;
    return cfg;
}

}  // namespace

TEST_CASE("row cardinality: methods x cells x instances") {
    const auto rows = run_benchmark(tiny_bench(), {});
    CHECK(rows.size() == 10);  // 2 methods x 1 cell x 5 instances
    for (const auto& r : rows) {
        CHECK(r.num_nodes == 3);
        CHECK(r.num_rules == 6);
        CHECK(r.proven_optimal == -1);
    }
}

TEST_CASE("benchmark rows are deterministic") {
    const auto a = run_benchmark(tiny_bench(), {});
    const auto b = run_benchmark(tiny_bench(), {});
    CHECK(a == b);

    auto serial_cfg = tiny_bench();
    serial_cfg.parallel = false;
    CHECK(run_benchmark(serial_cfg, {}) == a);
}

TEST_CASE("paired design: every method sees the byte-identical instance") {
    auto cfg = tiny_bench();
    cfg.methods = {BenchMethod::DrDc, BenchMethod::ArAc, BenchMethod::Oracle};
    const auto rows = run_benchmark(cfg, {});
    // Group rows by instance seed: each group must have one row per method.
    std::map<std::uint64_t, int> counts;
    for (const auto& r : rows) ++counts[r.instance_seed];
    CHECK(counts.size() == 5);
    for (const auto& [seed, count] : counts) CHECK(count == 3);
}

TEST_CASE("oracle rows on exhaustive-scale cells are proven optimal") {
    auto cfg = tiny_bench();
    cfg.methods = {BenchMethod::Oracle};
    cfg.oracle_time_limit_ms = 60'000.0;
    const auto rows = run_benchmark(cfg, {});
    for (const auto& r : rows) {
        CHECK(r.proven_optimal == 1);
        // Cross-check against the exhaustive enumerator on the same instance.
        GeneratorConfig gen = cfg.generator;
        gen.pool_seed = cfg.bench_seed;
        gen.num_nodes = r.num_nodes;
        gen.num_rules = r.num_rules;
        const auto inst = generate_instance(gen, r.instance_seed);
        const auto exact = solve_exhaustive(inst, cfg.objective);
        CHECK(r.objective_value == doctest::Approx(exact.objective_value));
    }
}

TEST_CASE("oracle dominance on proven rows") {
    auto cfg = tiny_bench();
    cfg.methods = {BenchMethod::Oracle, BenchMethod::DrDc, BenchMethod::DrAc,
                   BenchMethod::ArDc, BenchMethod::ArAc, BenchMethod::Random};
    const auto rows = run_benchmark(cfg, {});
    std::map<std::uint64_t, double> oracle_value;
    for (const auto& r : rows) {
        if (r.method == "Oracle" && r.proven_optimal == 1) {
            oracle_value[r.instance_seed] = r.objective_value;
        }
    }
    for (const auto& r : rows) {
        if (r.method == "Oracle") continue;
        const auto it = oracle_value.find(r.instance_seed);
        if (it != oracle_value.end()) CHECK(r.objective_value <= it->second + 1e-9);
    }
}

TEST_CASE("gap table: identical method has zero gap") {
    auto cfg = tiny_bench();
    cfg.methods = {BenchMethod::Oracle, BenchMethod::DrDc};
    auto rows = run_benchmark(cfg, {});
    // Duplicate the oracle rows under a fake method name.
    std::vector<BenchRow> augmented = rows;
    for (const auto& r : rows) {
        if (r.method == "Oracle") {
            auto copy = r;
            copy.method = "Random";  // masquerade: identical values
            augmented.push_back(copy);
        }
    }
    const auto gaps = gap_table(augmented, Objective::Greedy);
    for (const auto& g : gaps) {
        if (g.method == "Random") {
            CHECK(g.rejection_gap_pp == doctest::Approx(0.0));
            CHECK(g.omega_gap == doctest::Approx(0.0));
            CHECK(g.empty_nodes_gap == doctest::Approx(0.0));
        }
    }
}

TEST_CASE("gap table: constant rejection offset shows up in percentage points") {
    std::vector<BenchRow> rows;
    for (int i = 0; i < 10; ++i) {
        BenchRow ref;
        ref.method = "Oracle";
        ref.num_nodes = 5;
        ref.num_rules = 10;
        ref.instance_seed = static_cast<std::uint64_t>(i);
        ref.rejection_rate = 0.0;
        ref.proven_optimal = 1;
        rows.push_back(ref);
        BenchRow m = ref;
        m.method = "DR-DC";
        m.rejection_rate = 0.10;
        m.proven_optimal = -1;
        rows.push_back(m);
    }
    const auto gaps = gap_table(rows, Objective::Greedy);
    REQUIRE(gaps.size() == 1);
    CHECK(gaps[0].rejection_gap_pp == doctest::Approx(10.0));
    CHECK(gaps[0].pairs == 10);
    CHECK(gaps[0].reference_proven_fraction == doctest::Approx(1.0));
}

TEST_CASE("gap table: missing reference rows raise a data error listing keys") {
    std::vector<BenchRow> rows;
    BenchRow m;
    m.method = "DR-DC";
    m.num_nodes = 4;
    m.num_rules = 9;
    m.instance_seed = 1234;
    rows.push_back(m);
    try {
        gap_table(rows, Objective::Greedy);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("(4,9,1234)") != std::string::npos);
    }
}

TEST_CASE("timing report") {
    CHECK(timing_report({}).empty());

    std::vector<BenchRow> rows;
    for (int i = 0; i < 4; ++i) {
        BenchRow r;
        r.method = "DR-DC";
        r.num_nodes = 10;
        r.num_rules = i < 2 ? 100 : 50;  // only the largest rule size counts
        r.solve_ms = i < 2 ? (i == 0 ? 10.0 : 20.0) : 999.0;
        rows.push_back(r);
    }
    const auto report = timing_report(rows);
    REQUIRE(report.size() == 1);
    CHECK(report[0].num_rules == 100);
    CHECK(report[0].mean_ms == doctest::Approx(15.0));
    CHECK(report[0].per_decision_ms == doctest::Approx(0.15));
    CHECK(report[0].samples == 2);
}

TEST_CASE("emit and parse round-trip both formats") {
    const auto rows = run_benchmark(tiny_bench(), {});
    const auto dir = std::filesystem::temp_directory_path() / "ruledist_bench_test";
    std::filesystem::create_directories(dir);

    const auto csv_path = (dir / "rows.csv").string();
    emit(rows, EmitFormat::Csv, csv_path);
    CHECK(parse_rows(csv_path) == rows);

    const auto jsonl_path = (dir / "rows.jsonl").string();
    emit(rows, EmitFormat::Jsonl, jsonl_path);
    CHECK(parse_rows(jsonl_path) == rows);

    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(parse_rows("/nonexistent/rows.csv"), DataError);
}

TEST_CASE("plot data: one file per KPI per node size") {
    auto cfg = tiny_bench();
    cfg.node_sizes = {3, 4};
    const auto rows = run_benchmark(cfg, {});
    const auto dir = std::filesystem::temp_directory_path() / "ruledist_plot_test";
    std::filesystem::remove_all(dir);

    auto files = plot_data(rows, Objective::Greedy, dir.string());
    CHECK(files.size() == 2);  // rejection_rate x {n3, n4}
    for (const auto& f : files) CHECK(std::filesystem::exists(f));

    files = plot_data(rows, Objective::CostAware, dir.string());
    CHECK(files.size() == 4);  // + empty_nodes
    std::filesystem::remove_all(dir);

    CHECK(plot_data({}, Objective::Greedy, dir.string()).empty());
}

TEST_CASE("bench config validation") {
    auto cfg = tiny_bench();
    cfg.node_sizes.clear();
    CHECK_THROWS_AS(run_benchmark(cfg, {}), ConfigError);
    cfg = tiny_bench();
    cfg.instances_per_cell = 0;
    CHECK_THROWS_AS(run_benchmark(cfg, {}), ConfigError);
    cfg = tiny_bench();
    cfg.methods = {BenchMethod::Agent};
    CHECK_THROWS_AS(run_benchmark(cfg, {"only_one.rdcp"}), ConfigError);  // needs 3
}

TEST_CASE("rejection trend is non-increasing in node count") {
    BenchConfig cfg = BenchConfig::desk_scale();
    cfg.node_sizes = {3, 4, 5};
    cfg.rule_sizes = {8};
    cfg.instances_per_cell = 100;  // enough that the capacity effect beats noise
    cfg.methods = {BenchMethod::DrDc, BenchMethod::Random};
    cfg.bench_seed = 7;
    cfg.log_timing = false;
    const auto rows = run_benchmark(cfg, {});
    for (const auto& method : {"DR-DC", "Random"}) {
        double last = 1.0;
        for (int n : cfg.node_sizes) {
            double acc = 0.0;
            int count = 0;
            for (const auto& r : rows) {
                if (r.method == method && r.num_nodes == n) {
                    acc += r.rejection_rate;
                    ++count;
                }
            }
            const double mean = acc / count;
            CHECK(mean <= last + 1e-9);
            last = mean;
        }
    }
}
