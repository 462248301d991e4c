#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "support.hpp"

#include <cstdlib>

#include "codemap/agents.hpp"
#include "codemap/metrics.hpp"

using namespace codemap;
using namespace testing;

namespace {

const Codebase& seed42() {
    static const Codebase cb(generate(42));
    return cb;
}

Trajectory run_baseline(const std::string& agent, const Codebase& cb, Condition c = Condition::Active,
                        SessionConfig session = {20, 3}, const Trajectory* source = nullptr) {
    auto a = make_baseline(agent, cb);
    REQUIRE(a);
    RunSpec spec;
    spec.run_id = agent;
    spec.agent = agent;
    spec.condition = c;
    spec.session = session;
    spec.replay_source = source;
    return run_condition(*a, cb, spec);
}

LlmOptions quiet_options() {
    LlmOptions o;
    o.model = "mock";
    o.sleeper = [](double) {};
    return o;
}

PromptSet prompts() { return load_prompts(CODEMAP_PROMPT_DIR, "v1"); }

// Fails a fixed number of times before answering.
class FlakyTransport : public ChatTransport {
public:
    FlakyTransport(int failures, bool retryable) : failures_(failures), retryable_(retryable) {}
    std::string complete(const ChatRequest& request) override {
        ++calls;
        if (failures_ > 0) {
            --failures_;
            throw TransportError("503 upstream", retryable_);
        }
        const bool probe = request.messages.back().content.find(kProbeMarker) != std::string::npos;
        return probe ? R"({"components": []})" : "DONE";
    }
    int calls = 0;

private:
    int failures_;
    bool retryable_;
};

}  // namespace

TEST_CASE("import scan resolves in-package imports only") {
    ImportLayout layout{"pkg", {"stages/mod_a.py", "base.py", "core/models.py", "core/__init__.py"}};
    struct Row {
        const char* text;
        std::vector<std::string> want;
    };
    const std::vector<Row> rows = {
        {"from pkg.stages.mod_a import run\n", {"stages/mod_a.py"}},
        {"# import os\n", {}},
        {"import json\n", {}},
        {"from .base import StageBase\n", {"base.py"}},
        {"from pkg.core import models\n", {"core/models.py"}},
        {"import pkg.base\nimport pkg.base\n", {"base.py"}},
        {"s = \"\"\"\nfrom pkg import base\n\"\"\"\n", {}},
    };
    for (const auto& row : rows) {
        CAPTURE(row.text);
        CHECK(import_scan(row.text, "runner.py", layout).targets == row.want);
    }
    CHECK(import_scan("from pkg.gone import x\n", "runner.py", layout).unresolved == 1);
    CHECK(import_scan("from ..base import StageBase\n", "stages/mod_b.py", layout).targets ==
          std::vector<std::string>{"base.py"});
}

TEST_CASE("config stage modules") {
    const std::string cfg = R"({"stages": [{"name": "a", "module": "stages.mod_c"}, {"name": "b"},
                                            {"name": "c", "module": "stages.mod_a"}]})";
    CHECK(config_stage_modules(cfg) == std::vector<std::string>{"stages/mod_c.py", "stages/mod_a.py"});
}

TEST_CASE("action reply grammar") {
    CHECK(parse_action_reply("OPEN(stages/mod_a.py)") == Action::open("stages/mod_a.py"));
    CHECK(parse_action_reply("I have seen enough.\nDONE") == Action::done());
    CHECK(parse_action_reply("Action: LIST(stages)") == Action::list("stages"));
    CHECK(parse_action_reply("`INSPECT(base.py, StageBase)`") == Action::inspect("base.py", "StageBase"));
    CHECK(parse_action_reply("SEARCH(\"def run\")") == Action::search("def run"));
    CHECK(parse_action_reply("hmm").kind == ActionKind::Invalid);
}

TEST_CASE("baselines are deterministic and emit clean probes") {
    for (const auto& name : kBaselineNames) {
        CAPTURE(name);
        const auto a = run_baseline(name, seed42());
        const auto b = run_baseline(name, seed42());
        CHECK(dump_trajectory(a) == dump_trajectory(b));
        REQUIRE(a.end.has_value());
        CHECK(a.end->completed);
        for (const auto& p : a.probes) {
            REQUIRE(p.map.has_value());
            CHECK(p.report.repairs.empty());
        }
        CHECK(a.end->actions <= 20);
    }
    CHECK(make_baseline("nobody", seed42()) == nullptr);
}

TEST_CASE("oracle spends nothing and scores perfectly") {
    for (std::uint64_t seed : {42ULL, 123ULL, 999ULL}) {
        const Codebase cb(generate(seed));
        const auto t = run_baseline("oracle", cb);
        CHECK(t.end->actions == 0);
        REQUIRE(t.probes.size() == 1);
        CHECK(t.probes[0].final);
        const auto s = dep_score(extract_edges(t.end->final_map), cb.ground_truth());
        CHECK(s.f1 == doctest::Approx(1.0));
    }
}

TEST_CASE("BFS follows the import chain in order") {
    RenderedCodebase rc;
    rc.root = "pkg";
    rc.files = {{"cli.py", "from pkg.alpha import go\n"},
                {"alpha.py", "from .beta import go\n"},
                {"beta.py", "from pkg import gamma\n"},
                {"gamma.py", "x = 1\n"},
                {"zeta.py", "import os\n"}};
    const Codebase cb(rc);
    BfsImportAgent agent;
    RunSpec spec;
    spec.session = {20, 3};
    const auto t = run_condition(agent, cb, spec);
    const auto& order = agent.open_order();
    REQUIRE(order.size() >= 4);
    CHECK(std::vector<std::string>(order.begin(), order.begin() + 4) ==
          std::vector<std::string>{"cli.py", "alpha.py", "beta.py", "gamma.py"});
    bool saw_alpha_edge = false;
    for (const auto& e : extract_edges(t.end->final_map)) {
        saw_alpha_edge |= e.src == "cli.py" && e.dst == "alpha.py";
    }
    CHECK(saw_alpha_edge);
}

TEST_CASE("passive conditions") {
    SUBCASE("full presentation is probed exactly once") {
        const auto t = run_baseline("config-aware", seed42(), Condition::PassiveFull);
        CHECK(t.probes.size() == 1);
        CHECK(t.probes[0].final);
        CHECK(t.steps.empty());
        CHECK(t.end->actions == 0);
    }
    SUBCASE("oracle order shows the budgeted number of files") {
        const auto t = run_baseline("config-aware", seed42(), Condition::PassiveOracle);
        const auto files = seed42().files();
        CHECK(t.end->files_opened == std::min<int>(20, static_cast<int>(files.size())));
        const auto rank = connectivity_rank(seed42().ground_truth());
        CHECK(t.steps.front().action == Action::open(rank.front()));
    }
}

TEST_CASE("replay reproduces every observation") {
    const auto active = run_baseline("random", seed42());
    const auto replay = run_baseline("config-aware", seed42(), Condition::PassiveReplay, {20, 3}, &active);
    REQUIRE(replay.steps.size() == active.steps.size());
    for (std::size_t i = 0; i < active.steps.size(); ++i) {
        CHECK(replay.steps[i].action == active.steps[i].action);
        CHECK(replay.steps[i].digest == active.steps[i].digest);
    }
    CHECK(replay.header.source_run == active.header.run_id);

    const Codebase other(generate(43));
    CHECK_THROWS_AS(run_baseline("config-aware", other, Condition::PassiveReplay, {20, 3}, &active), UsageError);

    auto tampered = active;
    tampered.steps[0].digest = std::string(64, '0');
    CHECK_THROWS_AS(run_baseline("config-aware", seed42(), Condition::PassiveReplay, {20, 3}, &tampered), UsageError);
}

TEST_CASE("scripted LLM run") {
    const auto script = load_mock_script(std::filesystem::path(CODEMAP_FIXTURE_DIR) / "mock_agent.json");
    for (int budget : {5, 10, 20}) {
        for (int k : {1, 3, 7}) {
            for (auto mode : {TrackingMode::Scratchpad, TrackingMode::NoProbe, TrackingMode::ProbeOnly}) {
                CAPTURE(budget);
                CAPTURE(k);
                CAPTURE(to_string(mode));
                ScriptedTransport transport(script.actions, script.probes);
                LlmAgent agent("mock", transport, prompts(), quiet_options(), mode, {budget, k});
                RunSpec spec;
                spec.agent = "mock";
                spec.mode = mode;
                spec.session = {budget, k};
                const auto t = run_condition(agent, seed42(), spec);
                REQUIRE(t.end.has_value());
                CHECK(t.end->completed);
                CHECK(agent.requests() <= budget + budget / k + 1);
                CHECK(static_cast<int>(transport.requests().size()) == agent.requests());

                const auto finals = std::count_if(t.probes.begin(), t.probes.end(), [](auto& p) { return p.final; });
                CHECK(finals == 1);
                if (mode == TrackingMode::NoProbe) CHECK(t.probes.size() == 1);

                bool probe_in_history = false;
                for (const auto& m : agent.transcript()) {
                    probe_in_history |= m.content.find(kProbeMarker) != std::string::npos;
                }
                CHECK(probe_in_history == (mode == TrackingMode::Scratchpad && t.probes.size() > 0));
            }
        }
    }
}

TEST_CASE("probe-only requests never carry earlier probe replies") {
    const auto script = load_mock_script(std::filesystem::path(CODEMAP_FIXTURE_DIR) / "mock_agent.json");
    ScriptedTransport transport(script.actions, script.probes);
    LlmAgent agent("mock", transport, prompts(), quiet_options(), TrackingMode::ProbeOnly, {20, 1});
    RunSpec spec;
    spec.mode = TrackingMode::ProbeOnly;
    spec.session = {20, 1};
    run_condition(agent, seed42(), spec);
    for (const auto& r : transport.requests()) {
        int markers = 0;
        for (const auto& m : r.messages) markers += m.content.find(kProbeMarker) != std::string::npos;
        CHECK(markers <= 1);
        for (const auto& m : r.messages) {
            if (m.role == "assistant") CHECK(m.content.find("\"components\"") == std::string::npos);
        }
    }
}

TEST_CASE("retry and backoff") {
    SUBCASE("retryable errors back off and succeed") {
        FlakyTransport transport(3, true);
        std::vector<double> delays;
        auto options = quiet_options();
        options.max_retries = 4;
        options.backoff_seconds = 0.5;
        options.sleeper = [&](double d) { delays.push_back(d); };
        LlmAgent agent("flaky", transport, prompts(), options, TrackingMode::Scratchpad, {5, 3});
        RunSpec spec;
        spec.session = {5, 3};
        const auto t = run_condition(agent, seed42(), spec);
        CHECK(t.end->completed);
        CHECK(delays == std::vector<double>{0.5, 1.0, 2.0});
    }
    SUBCASE("too many failures end the run as failed") {
        FlakyTransport transport(10, true);
        auto options = quiet_options();
        options.max_retries = 2;
        LlmAgent agent("flaky", transport, prompts(), options, TrackingMode::Scratchpad, {5, 3});
        RunSpec spec;
        spec.session = {5, 3};
        const auto t = run_condition(agent, seed42(), spec);
        CHECK_FALSE(t.end->completed);
        CHECK(t.end->cause.find("3 attempt") != std::string::npos);
        CHECK(transport.calls == 3);
    }
    SUBCASE("non-retryable errors fail at once") {
        FlakyTransport transport(1, false);
        LlmAgent agent("flaky", transport, prompts(), quiet_options(), TrackingMode::Scratchpad, {5, 3});
        RunSpec spec;
        spec.session = {5, 3};
        const auto t = run_condition(agent, seed42(), spec);
        CHECK_FALSE(t.end->completed);
        CHECK(transport.calls == 1);
    }
}

TEST_CASE("context limit fails the run instead of truncating") {
    ScriptedTransport transport({"OPEN(registry.py)"}, {});
    auto options = quiet_options();
    options.max_context_tokens = 10;
    LlmAgent agent("small", transport, prompts(), options, TrackingMode::Scratchpad, {5, 3});
    RunSpec spec;
    spec.session = {5, 3};
    const auto t = run_condition(agent, seed42(), spec);
    CHECK_FALSE(t.end->completed);
    CHECK(t.end->cause.find("max_context_tokens") != std::string::npos);
    CHECK(transport.requests().empty());
}

TEST_CASE("missing API key names the variable") {
    const auto p = provider_from_json({{"name", "acme"},
                                       {"base_url", "https://example.invalid/v1"},
                                       {"model", "m"},
                                       {"api_key_env", "CODEMAP_TEST_UNSET_KEY"}});
    ::unsetenv("CODEMAP_TEST_UNSET_KEY");
    try {
        resolve_api_key(p);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("CODEMAP_TEST_UNSET_KEY") != std::string::npos);
    }
    ::setenv("CODEMAP_TEST_UNSET_KEY", "sk-test", 1);
    CHECK(resolve_api_key(p) == "sk-test");
    ::unsetenv("CODEMAP_TEST_UNSET_KEY");
}

TEST_CASE("rate limiter spaces requests on a fake clock") {
    double now = 0.0;
    std::vector<double> sleeps;
    RateLimiter limiter(30.0, [&] { return now; }, [&](double d) {
        sleeps.push_back(d);
        now += d;
    });
    limiter.acquire();
    limiter.acquire();
    now += 0.5;
    limiter.acquire();
    now += 10.0;
    limiter.acquire();
    CHECK(sleeps == std::vector<double>{2.0, 1.5});
}

TEST_CASE("templates fill known slots only") {
    CHECK(fill_template("B={{budget}} {{other}}", {{"budget", "20"}}) == "B=20 {{other}}");
    const auto p = prompts();
    CHECK(p.version == "v1");
    CHECK_FALSE(p.probe.empty());
}
