#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "support.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "codemap/runner.hpp"

using namespace codemap;
using namespace testing;
namespace fs = std::filesystem;

namespace {

RunConfig mock_config(const fs::path& out) {
    RunConfig c;
    c.agent = "mock";
    c.out_dir = out;
    c.prompt_dir = CODEMAP_PROMPT_DIR;
    c.mock_script = fs::path(CODEMAP_FIXTURE_DIR) / "mock_agent.json";
    return c;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return out;
}

// Writes an executable shell script standing in for the corpus checker.
fs::path fake_checker(const fs::path& dir, const std::string& name, const std::string& body) {
    const fs::path p = dir / name;
    std::ofstream(p) << "#!/bin/sh\n" << body << "\n";
    fs::permissions(p, fs::perms::owner_all);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CODEMAP_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json fake_report(const std::string& agent, const std::string& condition, std::uint64_t seed, double f1) {
    nlohmann::json by_type = nlohmann::json::object();
    for (EdgeType t : kEdgeTypes) by_type[std::string(to_string(t))] = {{"n", 4}, {"found", 1}, {"recall", 0.25}};
    return {{"agent", agent},
            {"condition", condition},
            {"mode", "scratchpad"},
            {"budget", 20},
            {"seed", seed},
            {"completed", true},
            {"files_opened", 5},
            {"dep", {{"precision", f1}, {"recall", f1}, {"f1", f1}}},
            {"inv_relaxed", {{"f1", 0.5}}},
            {"inv_strict", {{"f1", 0.25}}},
            {"ece", {{"value", 0.1}}},
            {"auc_actions", 0.4},
            {"auc_opens", 0.3},
            {"recall_by_type", by_type},
            {"curve_actions", nlohmann::json::array()},
            {"curve_opens", nlohmann::json::array()}};
}

}  // namespace

TEST_CASE("run ids") {
    CHECK(make_run_id("config-aware", Condition::PassiveReplay, TrackingMode::NoProbe, 10, 42) ==
          "config-aware__passive-replay__no-probe__B10__seed42");
}

TEST_CASE("mean and half range") {
    CHECK(mean_half_range({0.565, 0.577, 0.589}) == "0.577±0.012");
    CHECK(mean_half_range({0.5}) == "0.500±0.000");
}

TEST_CASE("scoring is a pure function of its inputs") {
    const Codebase cb(generate(42));
    auto agent = make_baseline("config-aware", cb);
    RunSpec spec;
    spec.run_id = "x";
    spec.session = {20, 3};
    const auto t = run_condition(*agent, cb, spec);
    const auto a = score_trajectory(t, cb.ground_truth());
    const auto b = score_trajectory(parse_trajectory(dump_trajectory(t)), load_codebase(42, Complexity::Medium, {}).ground_truth());
    CHECK(a.dump() == b.dump());
    CHECK(a["dep"]["f1"].get<double>() == doctest::Approx(dep_score(extract_edges(t.end->final_map), cb.ground_truth()).f1));
    CHECK_THROWS_AS(score_trajectory(t, generate(43).ground_truth), ScoreError);
}

TEST_CASE("tables") {
    std::vector<nlohmann::json> reports;
    const std::vector<std::pair<const char*, double>> conds = {
        {"passive-full", 0.696}, {"active", 0.469}, {"passive-oracle", 0.641}, {"passive-replay", 0.561}};
    for (const auto& [c, f1] : conds) {
        for (std::uint64_t seed : {42ULL, 123ULL, 999ULL}) reports.push_back(fake_report("agent-x", c, seed, f1));
    }
    const auto t = build_tables(reports);
    CHECK(t.table1.find("| agent-x | active | scratchpad | 20 |") != std::string::npos);
    CHECK(t.table1.find("0.469±0.000") != std::string::npos);
    // n pooled over the three seeds
    CHECK(t.table2.find("0.25 (3/n=12)") != std::string::npos);
    CHECK(t.table3.find("+0.227") != std::string::npos);
    CHECK(t.table3.find("+0.172") != std::string::npos);
    CHECK(t.table3.find("-0.092") != std::string::npos);
}

TEST_CASE("corpus generation refuses to overwrite") {
    const auto dir = scratch_dir("runner_corpus");
    const auto stats = generate_corpora({7}, Complexity::Medium, dir, false);
    REQUIRE(stats.size() == 1);
    CHECK(fs::exists(corpus_seed_dir(dir, 7) / "ground_truth.json"));
    CHECK_THROWS_AS(generate_corpora({7}, Complexity::Medium, dir, false), ConfigError);
    CHECK_NOTHROW(generate_corpora({7}, Complexity::Medium, dir, true));
    CHECK(load_codebase(7, Complexity::Medium, dir).digest() == Codebase(generate(7)).digest());
}

TEST_CASE("completed cells are skipped on resume") {
    const auto out = scratch_dir("runner_resume");
    RunConfig c;
    c.agent = "random";
    c.out_dir = out;
    const auto first = run_matrix(c);
    REQUIRE(first.size() == 3);
    for (const auto& r : first) CHECK_FALSE(r.skipped);
    const auto bytes = dir_bytes(out);
    const auto second = run_matrix(c);
    for (const auto& r : second) CHECK(r.skipped);
    CHECK(dir_bytes(out) == bytes);

    // an interrupted file has no end record and is rerun
    auto text = slurp(first[0].file);
    text.pop_back();
    text.erase(text.rfind('\n') + 1);
    std::ofstream(first[0].file) << text;
    const auto third = run_matrix(c);
    CHECK_FALSE(third[0].skipped);
    CHECK(third[1].skipped);
    CHECK(dir_bytes(out) == bytes);
}

TEST_CASE("mock pipeline is bit-stable") {
    const auto a = scratch_dir("runner_mock_a");
    const auto b = scratch_dir("runner_mock_b");
    for (const auto& dir : {a, b}) {
        for (const auto& r : run_matrix(mock_config(dir))) CHECK(r.completed);
        score_runs(dir, Complexity::Medium, std::nullopt);
    }
    const auto ba = dir_bytes(a);
    CHECK(ba.size() >= 6);
    CHECK(ba == dir_bytes(b));
    CHECK(fs::exists(table_dir(a)));
}

TEST_CASE("replay cells read the recorded active run") {
    const auto out = scratch_dir("runner_replay");
    RunConfig active;
    active.agent = "bfs-import";
    active.out_dir = out;
    run_matrix(active);
    RunConfig replay = active;
    replay.agent = "config-aware";
    replay.condition = Condition::PassiveReplay;
    replay.replay_source = trajectory_dir(out);
    replay.source_agent = "bfs-import";
    for (const auto& r : run_matrix(replay)) {
        CHECK(r.completed);
        const auto t = load_trajectory(r.file);
        CHECK(t.header.source_run.find("bfs-import__active") == 0);
    }
    RunConfig missing = replay;
    missing.replay_source.reset();
    CHECK_THROWS_AS(validate(missing), ConfigError);
}

TEST_CASE("corpus checker subprocess") {
    const auto dir = scratch_dir("runner_checker");
    const auto pass = fake_checker(dir, "pass.sh", R"(echo '{"passed": true, "failures": [], "summary": {}}'; exit 0)");
    const auto fail =
        fake_checker(dir, "fail.sh", R"(echo '{"passed": false, "failures": [{"check": "syntax"}]}'; exit 1)");
    const auto garbage = fake_checker(dir, "garbage.sh", "echo 'not json'; exit 0");
    const auto liar = fake_checker(dir, "liar.sh", R"(echo '{"passed": true, "failures": []}'; exit 1)");
    const auto args = fake_checker(dir, "args.sh",
                                   R"(if [ "$2" = "--json" ] && [ -d "$1" ]; then echo '{"passed": true, "failures": []}'; exit 0; fi; exit 3)");

    const auto ok = check_corpus(pass.string(), dir);
    CHECK(ok.passed);
    CHECK(ok.checker_exit == 0);
    const auto bad = check_corpus(fail.string(), dir);
    CHECK_FALSE(bad.passed);
    CHECK(bad.result["failures"].size() == 1);
    CHECK(check_corpus(args.string(), dir).passed);
    CHECK_THROWS_AS(check_corpus(garbage.string(), dir), ConfigError);
    CHECK_THROWS_AS(check_corpus(liar.string(), dir), ConfigError);
    CHECK_THROWS_AS(check_corpus((dir / "absent.sh").string(), dir), ConfigError);

    SUBCASE("CLI exit codes mirror the result") {
        CHECK(run_cli("check-corpus " + dir.string() + " --checker " + pass.string()) == 0);
        CHECK(run_cli("check-corpus " + dir.string() + " --checker " + fail.string()) == 1);
        CHECK(run_cli("check-corpus " + dir.string() + " --checker " + garbage.string()) == 2);
    }
}

TEST_CASE("CLI configuration errors exit 2") {
    const auto out = scratch_dir("runner_cli");
    CHECK(run_cli("run --agent config-aware --condition passive-replay --out " + out.string()) == 2);
    CHECK(run_cli("run --agent nobody --out " + out.string()) == 2);
    CHECK(run_cli("run --agent config-aware -B 0 --out " + out.string()) == 2);
    CHECK(run_cli("run --agent config-aware --seeds 42 --out " + out.string()) == 0);
    CHECK(run_cli("score --runs " + out.string()) == 0);
    CHECK(run_cli("score --runs " + (out / "nothing").string()) != 0);
}
