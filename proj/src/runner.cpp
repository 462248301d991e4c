#include "codemap/runner.hpp"

#include <fmt/format.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "codemap/metrics.hpp"

namespace codemap {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string fixed3(double v) { return fmt::format("{:.3f}", v); }

std::string signed3(double v) {
    // Avoid printing "-0.000".
    if (std::fabs(v) < 0.0005) return "+0.000";
    return fmt::format("{:+.3f}", v);
}

json score_json(const DepScore& s) {
    return {{"tp", s.tp},
            {"fp", s.fp},
            {"fn", s.fn},
            {"precision", s.precision},
            {"recall", s.recall},
            {"f1", s.f1},
            {"no_predictions", s.no_predictions}};
}

}  // namespace

void validate(const RunConfig& c) {
    if (c.seeds.empty()) throw ConfigError("at least one seed is required");
    if (c.budget < 1) throw ConfigError("budget must be at least 1");
    if (c.probe_interval < 1) throw ConfigError("probe interval must be at least 1");
    if (c.workers < 1) throw ConfigError("workers must be at least 1");
    const bool baseline = std::find(kBaselineNames.begin(), kBaselineNames.end(), c.agent) != kBaselineNames.end();
    if (!baseline && c.agent != "mock" && c.agent != "llm") {
        throw ConfigError("unknown agent '" + c.agent + "' (expected oracle, config-aware, random, bfs-import, mock or llm)");
    }
    if (c.agent == "llm" && !c.provider) throw ConfigError("the llm agent needs --provider");
    if (c.condition == Condition::PassiveReplay && !c.replay_source) {
        throw ConfigError("passive-replay needs --source");
    }
}

std::string make_run_id(const std::string& agent, Condition condition, TrackingMode mode, int budget,
                        std::uint64_t seed) {
    return fmt::format("{}__{}__{}__B{}__seed{}", agent, to_string(condition), to_string(mode), budget, seed);
}

fs::path trajectory_dir(const fs::path& out_dir) { return out_dir / "trajectories"; }
fs::path report_dir(const fs::path& out_dir) { return out_dir / "reports"; }
fs::path table_dir(const fs::path& out_dir) { return out_dir / "tables"; }

// --- corpora -------------------------------------------------------------------

fs::path corpus_seed_dir(const fs::path& corpus, std::uint64_t seed) {
    return corpus / ("seed_" + std::to_string(seed));
}

std::vector<GenerationStats> generate_corpora(const std::vector<std::uint64_t>& seeds, Complexity complexity,
                                              const fs::path& out, bool force) {
    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!force) throw ConfigError(out.string() + " exists and is not empty (use --force)");
        for (auto seed : seeds) fs::remove_all(corpus_seed_dir(out, seed));
    }
    std::vector<GenerationStats> stats;
    for (auto seed : seeds) {
        const auto cb = generate(seed, complexity);
        write_codebase(cb, corpus_seed_dir(out, seed));
        stats.push_back(statistics(cb));
    }
    write_text(out / "statistics.csv", statistics_csv(seeds, stats));
    return stats;
}

std::string statistics_block(std::uint64_t seed, const GenerationStats& s) {
    std::string out = fmt::format("seed {}\n", seed);
    out += fmt::format("  modules        {}\n", s.modules);
    out += fmt::format("  total edges    {}\n", s.edges);
    for (EdgeType t : kEdgeTypes) {
        const auto it = s.by_type.find(t);
        const std::size_t n = it == s.by_type.end() ? 0 : it->second;
        out += fmt::format("    {:<15}{} ({:.0f}%)\n", to_string(t), n, 100.0 * s.fraction(t));
    }
    out += fmt::format("  invariants     {}\n", s.constraints);
    out += fmt::format("  sub-packages   {}\n", s.subpackages);
    return out;
}

std::string statistics_csv(const std::vector<std::uint64_t>& seeds, const std::vector<GenerationStats>& stats) {
    std::string out = "seed,modules,subpackages,constraints,edges";
    for (EdgeType t : kEdgeTypes) out += fmt::format(",{}", to_string(t));
    out += "\n";
    for (std::size_t i = 0; i < seeds.size() && i < stats.size(); ++i) {
        const auto& s = stats[i];
        out += fmt::format("{},{},{},{},{}", seeds[i], s.modules, s.subpackages, s.constraints, s.edges);
        for (EdgeType t : kEdgeTypes) {
            const auto it = s.by_type.find(t);
            out += fmt::format(",{}", it == s.by_type.end() ? 0 : it->second);
        }
        out += "\n";
    }
    return out;
}

Codebase load_codebase(std::uint64_t seed, Complexity complexity, const std::optional<fs::path>& corpus) {
    if (!corpus) return Codebase(generate(seed, complexity));
    const auto dir = corpus_seed_dir(*corpus, seed);
    if (!fs::is_directory(dir)) throw ConfigError("no corpus for seed " + std::to_string(seed) + " at " + dir.string());
    return Codebase(read_codebase(dir));
}

// --- runs ----------------------------------------------------------------------

namespace {

struct AgentHandle {
    std::unique_ptr<ChatTransport> transport;
    std::unique_ptr<Agent> agent;
    std::string label;
};

std::string sanitize(std::string s) {
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '-';
    }
    return s;
}

std::string agent_label(const RunConfig& c) {
    if (c.agent == "llm") return sanitize(load_provider(*c.provider).name);
    return c.agent;
}

AgentHandle make_agent(const RunConfig& c, const Codebase& codebase) {
    AgentHandle h;
    h.label = agent_label(c);
    if (auto baseline = make_baseline(c.agent, codebase)) {
        h.agent = std::move(baseline);
        return h;
    }
    const PromptSet prompts = load_prompts(c.prompt_dir, c.prompt_version);
    const SessionConfig session{c.budget, c.probe_interval};
    LlmOptions options;
    if (c.agent == "mock") {
        const fs::path script_path = c.mock_script ? *c.mock_script : fs::path();
        if (script_path.empty()) throw ConfigError("the mock agent needs --mock-script");
        const MockScript script = load_mock_script(script_path);
        h.transport = std::make_unique<ScriptedTransport>(script.actions, script.probes);
        options.model = "scripted";
        options.sleeper = [](double) {};
    } else {
        const ProviderConfig p = load_provider(*c.provider);
        h.transport = std::make_unique<HttpChatTransport>(p.base_url, resolve_api_key(p));
        options.model = p.model;
        options.temperature = p.temperature;
        options.max_tokens = p.max_tokens;
        options.max_context_tokens = p.max_context_tokens;
        options.max_retries = p.max_retries;
        options.backoff_seconds = p.backoff_seconds;
        options.limiter = &provider_limiter(p.name, p.rate_limit_per_min);
    }
    h.agent = std::make_unique<LlmAgent>(h.label, *h.transport, prompts, options, c.mode, session);
    return h;
}

std::optional<Trajectory> completed_trajectory(const fs::path& file) {
    if (!fs::exists(file)) return std::nullopt;
    try {
        auto t = load_trajectory(file);
        if (t.end && t.end->completed) return t;
    } catch (const TrajectoryError&) {
    }
    return std::nullopt;
}

Trajectory find_replay_source(const RunConfig& c, std::uint64_t seed) {
    const fs::path& src = *c.replay_source;
    if (fs::is_regular_file(src)) {
        auto t = load_trajectory(src);
        if (t.header.seed != seed) {
            throw ConfigError("replay source " + src.string() + " was recorded for seed " +
                              std::to_string(t.header.seed));
        }
        return t;
    }
    if (!fs::is_directory(src)) throw ConfigError("replay source " + src.string() + " does not exist");
    std::vector<fs::path> files;
    const fs::path dir = fs::is_directory(trajectory_dir(src)) ? trajectory_dir(src) : src;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Trajectory> matches;
    for (const auto& f : files) {
        auto t = load_trajectory(f);
        if (t.header.condition != Condition::Active || t.header.seed != seed || !t.end || !t.end->completed) continue;
        if (!c.source_agent.empty() && t.header.agent != c.source_agent) continue;
        if (c.source_agent.empty() && t.header.budget != c.budget) continue;
        matches.push_back(std::move(t));
    }
    if (matches.empty()) {
        throw ConfigError("no completed active run for seed " + std::to_string(seed) + " under " + dir.string());
    }
    if (matches.size() > 1) {
        throw ConfigError("several active runs for seed " + std::to_string(seed) + " under " + dir.string() +
                          "; choose one with --source-agent");
    }
    return std::move(matches.front());
}

CellResult run_cell(const RunConfig& c, std::uint64_t seed) {
    const Codebase codebase = load_codebase(seed, c.complexity, c.corpus_dir);
    std::optional<Trajectory> source;
    if (c.condition == Condition::PassiveReplay) source = find_replay_source(c, seed);

    const std::string label = agent_label(c);
    CellResult r;
    r.run_id = make_run_id(label, c.condition, c.mode, c.budget, seed);
    if (source) r.run_id += "__from-" + sanitize(source->header.agent);
    r.file = trajectory_dir(c.out_dir) / (r.run_id + ".jsonl");
    if (completed_trajectory(r.file)) {
        r.skipped = true;
        r.completed = true;
        return r;
    }

    AgentHandle handle = make_agent(c, codebase);
    RunSpec spec;
    spec.run_id = r.run_id;
    spec.agent = label;
    spec.condition = c.condition;
    spec.mode = c.mode;
    spec.session = {c.budget, c.probe_interval};
    spec.prompt_version = handle.transport ? c.prompt_version : "";
    spec.replay_source = source ? &*source : nullptr;
    TrajectoryWriter writer(r.file);
    const Trajectory t = run_condition(*handle.agent, codebase, spec, &writer);
    r.completed = t.end && t.end->completed;
    r.cause = t.end ? t.end->cause : "no end record";
    return r;
}

}  // namespace

std::vector<CellResult> run_matrix(const RunConfig& config, std::ostream* log) {
    validate(config);
    if (config.agent == "llm") resolve_api_key(load_provider(*config.provider));  // fail before any work
    std::vector<CellResult> results(config.seeds.size());
    std::vector<std::exception_ptr> errors(config.seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
            try {
                results[i] = run_cell(config, config.seeds[i]);
            } catch (...) {
                errors[i] = std::current_exception();
                continue;
            }
            if (log) {
                std::lock_guard lock(log_mutex);
                const auto& r = results[i];
                *log << (r.skipped ? "skip " : r.completed ? "done " : "FAIL ") << r.run_id
                     << (r.cause.empty() ? "" : "  (" + r.cause + ")") << "\n";
            }
        }
    };
    const int n = std::min<int>(config.workers, static_cast<int>(config.seeds.size()));
    std::vector<std::thread> threads;
    for (int i = 1; i < n; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

// --- scoring -------------------------------------------------------------------

json score_trajectory(const Trajectory& t, const GroundTruth& gt) {
    const auto& h = t.header;
    if (h.seed != gt.manifest.seed || h.codebase_root != gt.manifest.root) {
        throw ScoreError("trajectory " + h.run_id + " was recorded on " + h.codebase_root + " seed " +
                         std::to_string(h.seed) + ", ground truth is " + gt.manifest.root + " seed " +
                         std::to_string(gt.manifest.seed));
    }
    if (!t.end) throw ScoreError("trajectory " + h.run_id + " has no end record");
    const CognitiveMap& final_map = t.end->final_map;
    const auto edges = extract_edges(final_map);

    json r;
    r["run_id"] = h.run_id;
    r["agent"] = h.agent;
    r["condition"] = to_string(h.condition);
    r["mode"] = to_string(h.mode);
    r["budget"] = h.budget;
    r["probe_interval"] = h.probe_interval;
    r["prompt_version"] = h.prompt_version;
    r["seed"] = h.seed;
    r["completed"] = t.end->completed;
    r["cause"] = t.end->cause;
    r["actions"] = t.end->actions;
    r["opens"] = t.end->opens;
    r["files_opened"] = t.end->files_opened;
    r["invalid_actions"] = t.end->invalid_actions;

    r["dep"] = score_json(dep_score(edges, gt));
    json by_type = json::object();
    for (const auto& [type, tr] : recall_by_type(edges, gt)) {
        by_type[std::string(to_string(type))] = {{"n", tr.n}, {"found", tr.found}, {"recall", tr.recall}};
    }
    r["recall_by_type"] = by_type;
    r["inv_strict"] = score_json(inv_score_strict(final_map.invariants, gt.constraints));
    r["inv_relaxed"] = score_json(inv_score_relaxed(final_map.invariants, gt.constraints));
    const auto e = ece(calibration_items(final_map, gt));
    json bins = json::array();
    for (const auto& b : e.bins) {
        bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"n", b.n}, {"mean_conf", b.mean_conf}, {"accuracy", b.accuracy}});
    }
    r["ece"] = {{"value", e.value}, {"n", e.n}, {"bins", bins}};

    // Probe series: F1 of each probe, in issue order.
    std::vector<CurveSample> by_actions, by_opens;
    json probes = json::array();
    std::optional<CognitiveMap> prev;
    std::size_t repairs = 0, failures = 0;
    for (const auto& p : t.probes) {
        const CognitiveMap map = p.map ? *p.map : CognitiveMap{};
        const double f1 = dep_score(extract_edges(map), gt).f1;
        by_actions.push_back({p.actions, f1});
        by_opens.push_back({p.opens, f1});
        json pj = {{"step", p.step}, {"final", p.final}, {"actions", p.actions}, {"opens", p.opens},
                   {"f1", f1},       {"parsed", p.map.has_value()}, {"repairs", p.report.repairs}};
        if (prev) {
            const auto d = diff_maps(*prev, map, gt);
            pj["lost_correct_edges"] = d.lost_correct_edges;
            pj["gained_correct_edges"] = d.gained_correct_edges;
        }
        repairs += p.report.repairs.size();
        failures += p.map ? 0 : 1;
        probes.push_back(std::move(pj));
        prev = map;
    }
    r["probes"] = probes;
    r["probe_repairs"] = repairs;
    r["probe_parse_failures"] = failures;
    if (by_actions.empty()) {
        r["auc_actions"] = 0.0;
        r["auc_opens"] = 0.0;
        r["curve_actions"] = json::array();
        r["curve_opens"] = json::array();
    } else {
        const auto ca = efficiency_curve(by_actions, h.budget, CurveAxis::Actions);
        const auto co = efficiency_curve(by_opens, h.budget, CurveAxis::Opens);
        auto points = [](const EfficiencyCurve& c) {
            json a = json::array();
            for (const auto& p : c.points) a.push_back({p.x, p.y});
            return a;
        };
        r["auc_actions"] = ca.auc;
        r["auc_opens"] = co.auc;
        r["curve_actions"] = points(ca);
        r["curve_opens"] = points(co);
    }
    return r;
}

std::vector<fs::path> score_runs(const fs::path& runs, Complexity complexity, const std::optional<fs::path>& corpus) {
    const fs::path dir = trajectory_dir(runs);
    if (!fs::is_directory(dir)) throw ConfigError("no trajectories under " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::map<std::uint64_t, std::unique_ptr<Codebase>> codebases;
    std::vector<fs::path> out;
    for (const auto& f : files) {
        const Trajectory t = load_trajectory(f);
        auto& cb = codebases[t.header.seed];
        if (!cb) cb = std::make_unique<Codebase>(load_codebase(t.header.seed, complexity, corpus));
        if (cb->digest() != t.header.codebase_digest) {
            throw ScoreError("trajectory " + t.header.run_id + " does not match the codebase for seed " +
                             std::to_string(t.header.seed));
        }
        const json report = score_trajectory(t, cb->ground_truth());
        const fs::path path = report_dir(runs) / (t.header.run_id + ".json");
        write_text(path, report.dump(2) + "\n");
        out.push_back(path);
    }
    write_tables(runs);
    return out;
}

// --- tables --------------------------------------------------------------------

std::string mean_half_range(const std::vector<double>& v) {
    if (v.empty()) return "-";
    double sum = 0.0;
    for (double x : v) sum += x;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return fmt::format("{:.3f}±{:.3f}", sum / static_cast<double>(v.size()), (*hi - *lo) / 2.0);
}

namespace {

double mean(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

struct GroupKey {
    std::string agent;
    std::string condition;
    std::string mode;
    int budget = 0;

    auto operator<=>(const GroupKey&) const = default;
};

GroupKey key_of(const json& r) {
    return {r.at("agent").get<std::string>(), r.at("condition").get<std::string>(), r.at("mode").get<std::string>(),
            r.at("budget").get<int>()};
}

std::vector<double> column(const std::vector<const json*>& rows, const json::json_pointer& ptr) {
    std::vector<double> out;
    for (const auto* r : rows) out.push_back(r->at(ptr).get<double>());
    return out;
}

std::string seed_list(const std::vector<const json*>& rows) {
    std::vector<std::string> s;
    for (const auto* r : rows) s.push_back(std::to_string(r->at("seed").get<std::uint64_t>()));
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + s[i];
    return out;
}

std::string curve_csv(const std::map<GroupKey, std::vector<const json*>>& groups, const char* field) {
    std::string out = "agent,condition,mode,budget,x,f1\n";
    for (const auto& [k, rows] : groups) {
        std::map<int, std::vector<double>> ys;
        for (const auto* r : rows) {
            for (const auto& p : r->at(field)) ys[p.at(0).get<int>()].push_back(p.at(1).get<double>());
        }
        for (const auto& [x, v] : ys) {
            out += fmt::format("{},{},{},{},{},{:.6f}\n", k.agent, k.condition, k.mode, k.budget, x, mean(v));
        }
    }
    return out;
}

}  // namespace

Tables build_tables(const std::vector<json>& reports) {
    std::map<GroupKey, std::vector<const json*>> groups;
    for (const auto& r : reports) groups[key_of(r)].push_back(&r);
    for (auto& [k, rows] : groups) {
        std::sort(rows.begin(), rows.end(), [](const json* a, const json* b) {
            return a->at("seed").get<std::uint64_t>() < b->at("seed").get<std::uint64_t>();
        });
    }
    using jp = json::json_pointer;
    Tables t;

    // Overall performance, mean±half-range across seeds.
    t.table1 =
        "| Method | Condition | Mode | B | Seeds | Dep P | Dep R | Dep F1 | Inv F1 (relaxed) | Inv F1 (strict) | ECE | "
        "AUC (actions) | AUC (opens) | Files opened | Failed |\n"
        "|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    t.table1_csv =
        "agent,condition,mode,budget,seeds,dep_precision,dep_recall,dep_f1,inv_f1_relaxed,inv_f1_strict,ece,"
        "auc_actions,auc_opens,files_opened,failed\n";
    for (const auto& [k, rows] : groups) {
        std::size_t failed = 0;
        for (const auto* r : rows) failed += r->at("completed").get<bool>() ? 0 : 1;
        const auto p = column(rows, jp("/dep/precision"));
        const auto rc = column(rows, jp("/dep/recall"));
        const auto f1 = column(rows, jp("/dep/f1"));
        const auto ir = column(rows, jp("/inv_relaxed/f1"));
        const auto is = column(rows, jp("/inv_strict/f1"));
        const auto e = column(rows, jp("/ece/value"));
        const auto aa = column(rows, jp("/auc_actions"));
        const auto ao = column(rows, jp("/auc_opens"));
        const auto files = column(rows, jp("/files_opened"));
        t.table1 += fmt::format("| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {:.1f} | {} |\n",
                                k.agent, k.condition, k.mode, k.budget, seed_list(rows), mean_half_range(p),
                                mean_half_range(rc), mean_half_range(f1), mean_half_range(ir), mean_half_range(is),
                                mean_half_range(e), mean_half_range(aa), mean_half_range(ao), mean(files), failed);
        t.table1_csv += fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.3f},{}\n",
                                    k.agent, k.condition, k.mode, k.budget, rows.size(), mean(p), mean(rc), mean(f1),
                                    mean(ir), mean(is), mean(e), mean(aa), mean(ao), mean(files), failed);
    }

    // Recall per edge type, pooled over seeds.
    t.table2 = "| Method | Condition | Mode | B |";
    for (EdgeType type : kEdgeTypes) t.table2 += fmt::format(" {} |", to_string(type));
    t.table2 += "\n|---|---|---|---|---|---|---|---|\n";
    for (const auto& [k, rows] : groups) {
        t.table2 += fmt::format("| {} | {} | {} | {} |", k.agent, k.condition, k.mode, k.budget);
        for (EdgeType type : kEdgeTypes) {
            std::size_t n = 0, found = 0;
            for (const auto* r : rows) {
                const auto& cell = r->at("recall_by_type").at(std::string(to_string(type)));
                n += cell.at("n").get<std::size_t>();
                found += cell.at("found").get<std::size_t>();
            }
            const double rec = n == 0 ? 0.0 : static_cast<double>(found) / static_cast<double>(n);
            t.table2 += fmt::format(" {:.2f} ({}/n={}) |", rec, found, n);
        }
        t.table2 += "\n";
    }
    t.table2 += "\nn = total ground-truth edges of the type over the listed seeds.\n";

    // Active-passive gap per agent.
    struct ApgKey {
        std::string agent;
        std::string mode;
        int budget;
        auto operator<=>(const ApgKey&) const = default;
    };
    std::map<ApgKey, std::map<std::string, std::vector<double>>> apg_groups;
    for (const auto& [k, rows] : groups) apg_groups[{k.agent, k.mode, k.budget}][k.condition] = column(rows, jp("/dep/f1"));
    t.table3 = "| Method | Mode | B | Condition | Dep F1 |\n|---|---|---|---|---|\n";
    std::string gaps = "| Method | Mode | B | APG total | APG selection | APG decision |\n|---|---|---|---|---|---|\n";
    for (const auto& [k, conds] : apg_groups) {
        if (conds.size() < 2) continue;
        for (const char* c : {"passive-full", "active", "passive-oracle", "passive-replay"}) {
            auto it = conds.find(c);
            if (it != conds.end()) {
                t.table3 += fmt::format("| {} | {} | {} | {} | {} |\n", k.agent, k.mode, k.budget, c,
                                        mean_half_range(it->second));
            }
        }
        ConditionScores s;
        auto pick = [&](const char* c) -> std::optional<double> {
            auto it = conds.find(c);
            if (it == conds.end()) return std::nullopt;
            return mean(it->second);
        };
        s.passive_full = pick("passive-full");
        s.active = pick("active");
        s.passive_oracle = pick("passive-oracle");
        s.passive_replay = pick("passive-replay");
        const auto a = apg(s);
        auto cell = [](const std::optional<double>& v) { return v ? signed3(*v) : std::string("-"); };
        gaps += fmt::format("| {} | {} | {} | {} | {} | {} |\n", k.agent, k.mode, k.budget, cell(a.total),
                            cell(a.selection), cell(a.decision));
    }
    t.table3 += "\n" + gaps +
                "\nAPG total = passive-full - active; APG selection = passive-oracle - active; "
                "APG decision = active - passive-replay (negative: the agent did better without choosing).\n";

    // Dep F1 against budget, active scratchpad runs.
    std::set<int> budgets;
    std::map<std::string, std::map<int, std::vector<double>>> sweep;
    for (const auto& [k, rows] : groups) {
        if (k.condition != "active" || k.mode != "scratchpad") continue;
        budgets.insert(k.budget);
        sweep[k.agent][k.budget] = column(rows, jp("/dep/f1"));
    }
    t.table5 = "| Method |";
    for (int b : budgets) t.table5 += fmt::format(" B={} |", b);
    t.table5 += "\n|---|";
    for (std::size_t i = 0; i < budgets.size(); ++i) t.table5 += "---|";
    t.table5 += "\n";
    for (const auto& [agent, by_b] : sweep) {
        t.table5 += "| " + agent + " |";
        for (int b : budgets) {
            auto it = by_b.find(b);
            t.table5 += it == by_b.end() ? std::string(" - |") : " " + fixed3(mean(it->second)) + " |";
        }
        t.table5 += "\n";
    }

    // Tracking-mode effect on the final map.
    struct ModeKey {
        std::string agent;
        std::string condition;
        int budget;
        auto operator<=>(const ModeKey&) const = default;
    };
    std::map<ModeKey, std::map<std::string, double>> modes;
    for (const auto& [k, rows] : groups) modes[{k.agent, k.condition, k.budget}][k.mode] = mean(column(rows, jp("/dep/f1")));
    t.scratchpad =
        "| Method | Condition | B | scratchpad | no-probe | probe-only | scratchpad - no-probe | scratchpad - probe-only |\n"
        "|---|---|---|---|---|---|---|---|\n";
    for (const auto& [k, m] : modes) {
        if (m.size() < 2) continue;
        auto get = [&](const char* mode) -> std::optional<double> {
            auto it = m.find(mode);
            return it == m.end() ? std::nullopt : std::optional<double>(it->second);
        };
        const auto sp = get("scratchpad"), np = get("no-probe"), po = get("probe-only");
        auto cell = [](const std::optional<double>& v) { return v ? fixed3(*v) : std::string("-"); };
        auto delta = [](const std::optional<double>& a, const std::optional<double>& b) {
            return a && b ? signed3(*a - *b) : std::string("-");
        };
        t.scratchpad += fmt::format("| {} | {} | {} | {} | {} | {} | {} | {} |\n", k.agent, k.condition, k.budget,
                                    cell(sp), cell(np), cell(po), delta(sp, np), delta(sp, po));
    }

    t.curves_actions = curve_csv(groups, "curve_actions");
    t.curves_opens = curve_csv(groups, "curve_opens");
    return t;
}

Tables write_tables(const fs::path& runs) {
    const fs::path dir = report_dir(runs);
    if (!fs::is_directory(dir)) throw ConfigError("no reports under " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<json> reports;
    for (const auto& f : files) {
        json r = json::parse(read_text(f), nullptr, false);
        if (r.is_discarded()) throw ScoreError("report " + f.string() + " is not valid JSON");
        reports.push_back(std::move(r));
    }
    Tables t = build_tables(reports);
    const fs::path out = table_dir(runs);
    write_text(out / "table1_overall.md", t.table1);
    write_text(out / "table1_overall.csv", t.table1_csv);
    write_text(out / "table2_edge_types.md", t.table2);
    write_text(out / "table3_apg.md", t.table3);
    write_text(out / "table5_budget.md", t.table5);
    write_text(out / "tracking_modes.md", t.scratchpad);
    write_text(out / "curve_actions.csv", t.curves_actions);
    write_text(out / "curve_opens.csv", t.curves_opens);
    return t;
}

// --- corpus checker ----------------------------------------------------------------

CheckOutcome check_corpus(const std::string& checker, const fs::path& dir) {
    int out_pipe[2];
    if (pipe(out_pipe) != 0) throw ConfigError(std::string("pipe: ") + std::strerror(errno));
    const std::string dir_arg = dir.string();
    const pid_t pid = fork();
    if (pid < 0) throw ConfigError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        dup2(out_pipe[1], STDOUT_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        const char* argv[] = {checker.c_str(), dir_arg.c_str(), "--json", nullptr};
        execvp(argv[0], const_cast<char* const*>(argv));
        _exit(127);
    }
    close(out_pipe[1]);
    std::string output;
    char buf[4096];
    ssize_t n;
    while ((n = read(out_pipe[0], buf, sizeof buf)) > 0 || (n < 0 && errno == EINTR)) {
        if (n > 0) output.append(buf, static_cast<std::size_t>(n));
    }
    close(out_pipe[0]);
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    if (code == 127 && output.empty()) throw ConfigError("cannot run checker '" + checker + "'");

    CheckOutcome out;
    out.checker_exit = code;
    out.result = json::parse(output, nullptr, false);
    const auto& r = out.result;
    if (r.is_discarded() || !r.is_object() || !r.contains("passed") || !r["passed"].is_boolean() ||
        !r.contains("failures") || !r["failures"].is_array()) {
        throw ConfigError("checker output is not a CheckResult document");
    }
    out.passed = r["passed"].get<bool>();
    if (out.passed != r["failures"].empty()) {
        throw ConfigError("inconsistent CheckResult: passed disagrees with the failure list");
    }
    if ((code == 0) != out.passed) {
        throw ConfigError("checker exit code " + std::to_string(code) + " disagrees with passed");
    }
    return out;
}

}  // namespace codemap
