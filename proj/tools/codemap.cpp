// codemap: generate corpora, run agents, score runs and build tables.
//
// Exit codes: 0 success, 1 scoring or assertion failure, 2 configuration error.

#include <fmt/format.h>

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "codemap/runner.hpp"

#ifndef CODEMAP_PROMPT_DIR
#define CODEMAP_PROMPT_DIR "prompts"
#endif
#ifndef CODEMAP_FIXTURE_DIR
#define CODEMAP_FIXTURE_DIR "fixtures"
#endif

using namespace codemap;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    // "42,123,999" or "1-10"
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto dash = item.find('-');
        try {
            if (dash != std::string::npos && dash > 0) {
                const auto lo = std::stoull(item.substr(0, dash));
                const auto hi = std::stoull(item.substr(dash + 1));
                if (hi < lo) throw ConfigError("bad seed range " + item);
                for (auto s = lo; s <= hi; ++s) out.push_back(s);
            } else {
                out.push_back(std::stoull(item));
            }
        } catch (const std::logic_error&) {
            throw ConfigError("bad seed list '" + text + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty seed list");
    return out;
}

Complexity complexity_of(const std::string& name) {
    auto c = parse_complexity(name);
    if (!c) throw ConfigError("unknown complexity '" + name + "'");
    return *c;
}

struct RunFlags {
    std::string seeds = "42,123,999";
    std::string complexity = "medium";
    std::string condition = "active";
    std::string mode = "scratchpad";
    std::string corpus;
    std::string provider;
    std::string mock_script;
    std::string source;
    std::string prompt_dir = CODEMAP_PROMPT_DIR;
};

void add_run_flags(CLI::App* cmd, RunConfig& cfg, RunFlags& f) {
    cmd->add_option("--seeds", f.seeds, "Seed list, e.g. 42,123,999 or 1-10")->capture_default_str();
    cmd->add_option("--complexity", f.complexity, "Codebase complexity")->capture_default_str();
    cmd->add_option("-B,--budget", cfg.budget, "Action budget")->capture_default_str();
    cmd->add_option("-K,--probe-interval", cfg.probe_interval, "Actions between probes")->capture_default_str();
    cmd->add_option("--agent", cfg.agent, "oracle, config-aware, random, bfs-import, mock or llm")
        ->capture_default_str();
    cmd->add_option("--condition", f.condition, "active, passive-full, passive-oracle or passive-replay")
        ->capture_default_str();
    cmd->add_option("--mode", f.mode, "scratchpad, no-probe or probe-only")->capture_default_str();
    cmd->add_option("--out", cfg.out_dir, "Run directory")->capture_default_str();
    cmd->add_option("--prompt-version", cfg.prompt_version, "Prompt template version")->capture_default_str();
    cmd->add_option("--prompt-dir", f.prompt_dir, "Prompt template directory")->capture_default_str();
    cmd->add_option("--corpus", f.corpus, "Corpus directory from `generate`; seeds are generated in memory if omitted");
    cmd->add_option("--provider", f.provider, "Provider config JSON (llm agent)");
    cmd->add_option("--mock-script", f.mock_script, "Canned replies (mock agent)");
    cmd->add_option("--source", f.source, "Recorded active run(s) to replay: a trajectory file or run directory");
    cmd->add_option("--source-agent", cfg.source_agent, "Agent whose active run is replayed");
    cmd->add_option("-j,--workers", cfg.workers, "Concurrent cells")->capture_default_str();
}

void finish_run_config(RunConfig& cfg, const RunFlags& f) {
    cfg.seeds = parse_seeds(f.seeds);
    cfg.complexity = complexity_of(f.complexity);
    auto c = parse_condition(f.condition);
    if (!c) throw ConfigError("unknown condition '" + f.condition + "'");
    cfg.condition = *c;
    auto m = parse_tracking_mode(f.mode);
    if (!m) throw ConfigError("unknown tracking mode '" + f.mode + "'");
    cfg.mode = *m;
    cfg.prompt_dir = f.prompt_dir;
    if (!f.corpus.empty()) cfg.corpus_dir = fs::path(f.corpus);
    if (!f.provider.empty()) cfg.provider = fs::path(f.provider);
    if (!f.mock_script.empty()) {
        cfg.mock_script = fs::path(f.mock_script);
    } else if (cfg.agent == "mock") {
        cfg.mock_script = fs::path(CODEMAP_FIXTURE_DIR) / "mock_agent.json";
    }
    if (!f.source.empty()) cfg.replay_source = fs::path(f.source);
}

int report_runs(const std::vector<CellResult>& results) {
    int failed = 0;
    for (const auto& r : results) failed += r.completed ? 0 : 1;
    if (failed) std::cerr << failed << " run(s) failed\n";
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Benchmark harness for architectural belief construction over generated codebases"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate corpora with ground truth");
    std::string gen_seeds = "42,123,999", gen_complexity = "medium";
    fs::path gen_out = "corpus";
    bool gen_force = false;
    gen->add_option("--seeds", gen_seeds, "Seed list")->capture_default_str();
    gen->add_option("--complexity", gen_complexity, "Codebase complexity")->capture_default_str();
    gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
    gen->add_flag("--force", gen_force, "Overwrite existing seed directories");

    // run
    auto* run = app.add_subcommand("run", "Run one agent/condition/mode over the seeds");
    RunConfig run_cfg;
    RunFlags run_flags;
    add_run_flags(run, run_cfg, run_flags);

    // score
    auto* score = app.add_subcommand("score", "Score trajectories and build tables");
    fs::path score_runs_dir = "runs";
    std::string score_corpus, score_complexity = "medium";
    score->add_option("--runs", score_runs_dir, "Run directory")->capture_default_str();
    score->add_option("--corpus", score_corpus, "Corpus directory; seeds are regenerated if omitted");
    score->add_option("--complexity", score_complexity, "Complexity used to regenerate seeds")->capture_default_str();

    // report
    auto* report = app.add_subcommand("report", "Rebuild tables from per-run reports");
    fs::path report_runs_dir = "runs";
    report->add_option("--runs", report_runs_dir, "Run directory")->capture_default_str();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Budget sweep over agents, then score");
    RunConfig sweep_cfg;
    RunFlags sweep_flags;
    std::string sweep_budgets = "10,15,20,25";
    std::string sweep_agents = "oracle,config-aware,random,bfs-import";
    add_run_flags(sweep, sweep_cfg, sweep_flags);
    sweep->add_option("--budgets", sweep_budgets, "Budgets to sweep")->capture_default_str();
    sweep->add_option("--agents", sweep_agents, "Agents to sweep")->capture_default_str();

    // check-corpus
    auto* check = app.add_subcommand("check-corpus", "Run the external corpus checker");
    fs::path check_dir;
    std::string checker = "check_corpus";
    check->add_option("dir", check_dir, "Corpus seed directory")->required();
    check->add_option("--checker", checker, "Checker executable")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            const auto seeds = parse_seeds(gen_seeds);
            const auto stats = generate_corpora(seeds, complexity_of(gen_complexity), gen_out, gen_force);
            for (std::size_t i = 0; i < seeds.size(); ++i) std::cout << statistics_block(seeds[i], stats[i]);
            std::cout << "wrote " << (gen_out / "statistics.csv").string() << "\n";
            return 0;
        }
        if (*run) {
            finish_run_config(run_cfg, run_flags);
            return report_runs(run_matrix(run_cfg, &std::cout));
        }
        if (*score) {
            std::optional<fs::path> corpus;
            if (!score_corpus.empty()) corpus = fs::path(score_corpus);
            const auto paths = score_runs(score_runs_dir, complexity_of(score_complexity), corpus);
            std::cout << "scored " << paths.size() << " run(s); tables in " << table_dir(score_runs_dir).string()
                      << "\n";
            std::cout << write_tables(score_runs_dir).table1;
            return 0;
        }
        if (*report) {
            std::cout << write_tables(report_runs_dir).table1;
            return 0;
        }
        if (*sweep) {
            finish_run_config(sweep_cfg, sweep_flags);
            int status = 0;
            std::stringstream agents(sweep_agents);
            std::string agent;
            while (std::getline(agents, agent, ',')) {
                for (auto b : parse_seeds(sweep_budgets)) {
                    RunConfig cell = sweep_cfg;
                    cell.agent = agent;
                    cell.budget = static_cast<int>(b);
                    status = std::max(status, report_runs(run_matrix(cell, &std::cout)));
                }
            }
            std::optional<fs::path> corpus = sweep_cfg.corpus_dir;
            score_runs(sweep_cfg.out_dir, sweep_cfg.complexity, corpus);
            std::cout << write_tables(sweep_cfg.out_dir).table5;
            return status;
        }
        if (*check) {
            const auto outcome = check_corpus(checker, check_dir);
            std::cout << outcome.result.dump(2) << "\n";
            std::cout << (outcome.passed ? "corpus check passed" : "corpus check FAILED") << "\n";
            return outcome.passed ? 0 : 1;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const GroundTruthError& e) {
        std::cerr << "ground truth error: " << e.what() << "\n";
        return 2;
    } catch (const ScoreError& e) {
        std::cerr << "scoring error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
