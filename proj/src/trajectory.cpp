#include "codemap/trajectory.hpp"

#include <fstream>
#include <sstream>

namespace codemap {

using nlohmann::json;

namespace {

constexpr std::pair<Condition, std::string_view> kConditionNames[] = {
    {Condition::Active, "active"},
    {Condition::PassiveFull, "passive-full"},
    {Condition::PassiveOracle, "passive-oracle"},
    {Condition::PassiveReplay, "passive-replay"},
};

constexpr std::pair<TrackingMode, std::string_view> kModeNames[] = {
    {TrackingMode::Scratchpad, "scratchpad"},
    {TrackingMode::NoProbe, "no-probe"},
    {TrackingMode::ProbeOnly, "probe-only"},
};

ObsStatus parse_status(const std::string& s) {
    for (ObsStatus st : {ObsStatus::Ok, ObsStatus::NotFound, ObsStatus::Invalid, ObsStatus::Terminal}) {
        if (to_string(st) == s) return st;
    }
    throw TrajectoryError("unknown observation status: " + s);
}

ActionKind parse_kind(const std::string& s) {
    for (ActionKind k : {ActionKind::List, ActionKind::Open, ActionKind::Search, ActionKind::Inspect, ActionKind::Done,
                         ActionKind::Invalid}) {
        if (to_string(k) == s) return k;
    }
    throw TrajectoryError("unknown action kind: " + s);
}

json action_json(const Action& a) {
    json j = {{"kind", to_string(a.kind)}, {"target", a.target}};
    if (a.kind == ActionKind::Inspect) j["symbol"] = a.symbol;
    return j;
}

Action action_of(const json& j) {
    Action a;
    a.kind = parse_kind(j.at("kind").get<std::string>());
    a.target = j.at("target").get<std::string>();
    a.symbol = j.value("symbol", "");
    return a;
}

CognitiveMap map_of(const json& j, int probe_step) {
    auto [map, report] = parse_probe(j.dump());
    map.probe_step = probe_step;
    return map;
}

json report_json(const ParseReport& r) {
    return {{"repairs", r.repairs}, {"dropped", r.dropped}, {"success", r.success}};
}

ParseReport report_of(const json& j) {
    ParseReport r;
    r.repairs = j.at("repairs").get<std::vector<std::string>>();
    r.dropped = j.at("dropped").get<std::vector<std::string>>();
    r.success = j.at("success").get<bool>();
    return r;
}

}  // namespace

std::string_view to_string(Condition c) {
    for (auto [v, n] : kConditionNames) {
        if (v == c) return n;
    }
    return "active";
}

std::optional<Condition> parse_condition(std::string_view name) {
    for (auto [v, n] : kConditionNames) {
        if (n == name) return v;
    }
    return std::nullopt;
}

std::string_view to_string(TrackingMode m) {
    for (auto [v, n] : kModeNames) {
        if (v == m) return n;
    }
    return "scratchpad";
}

std::optional<TrackingMode> parse_tracking_mode(std::string_view name) {
    for (auto [v, n] : kModeNames) {
        if (n == name) return v;
    }
    return std::nullopt;
}

json header_json(const TrajectoryHeader& h) {
    return {{"record", "header"},
            {"run_id", h.run_id},
            {"agent", h.agent},
            {"condition", to_string(h.condition)},
            {"mode", to_string(h.mode)},
            {"budget", h.budget},
            {"probe_interval", h.probe_interval},
            {"prompt_version", h.prompt_version},
            {"source_run", h.source_run},
            {"codebase", {{"root", h.codebase_root}, {"seed", h.seed}, {"digest", h.codebase_digest}}}};
}

json step_json(const StepRecord& s) {
    return {{"record", "step"},
            {"step", s.step},
            {"action", action_json(s.action)},
            {"observation",
             {{"status", to_string(s.status)}, {"digest", s.digest}, {"bytes", s.bytes}, {"source", s.source}}},
            {"budget_remaining", s.budget_remaining}};
}

json probe_json(const ProbeRecord& p) {
    json j = {{"record", "probe"},  {"step", p.step},   {"kind", p.final ? "final" : "periodic"},
              {"actions", p.actions}, {"opens", p.opens}, {"raw", p.raw},
              {"report", report_json(p.report)}, {"error", p.error}};
    j["map"] = p.map ? to_json(*p.map) : json(nullptr);
    return j;
}

json end_json(const TrajectoryEnd& e) {
    return {{"record", "end"},
            {"status", e.completed ? "completed" : "failed"},
            {"cause", e.cause},
            {"actions", e.actions},
            {"opens", e.opens},
            {"files_opened", e.files_opened},
            {"invalid_actions", e.invalid_actions},
            {"final_map", to_json(e.final_map)}};
}

std::string dump_trajectory(const Trajectory& t) {
    std::string out = header_json(t.header).dump() + "\n";
    // Interleave probes after the step they follow, as they were written.
    std::size_t p = 0;
    auto flush_probes = [&](int upto) {
        while (p < t.probes.size() && t.probes[p].step <= upto) {
            out += probe_json(t.probes[p]).dump() + "\n";
            ++p;
        }
    };
    flush_probes(0);
    for (const auto& s : t.steps) {
        out += step_json(s).dump() + "\n";
        flush_probes(s.step);
    }
    flush_probes(INT32_MAX);
    if (t.end) out += end_json(*t.end).dump() + "\n";
    return out;
}

Trajectory parse_trajectory(std::string_view text) {
    Trajectory t;
    bool have_header = false;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            const std::string kind = j.at("record").get<std::string>();
            if (kind == "header") {
                auto& h = t.header;
                h.run_id = j.at("run_id").get<std::string>();
                h.agent = j.at("agent").get<std::string>();
                auto c = parse_condition(j.at("condition").get<std::string>());
                auto m = parse_tracking_mode(j.at("mode").get<std::string>());
                if (!c || !m) throw TrajectoryError("unknown condition or mode");
                h.condition = *c;
                h.mode = *m;
                h.budget = j.at("budget").get<int>();
                h.probe_interval = j.at("probe_interval").get<int>();
                h.prompt_version = j.at("prompt_version").get<std::string>();
                h.source_run = j.at("source_run").get<std::string>();
                const auto& cb = j.at("codebase");
                h.codebase_root = cb.at("root").get<std::string>();
                h.seed = cb.at("seed").get<std::uint64_t>();
                h.codebase_digest = cb.at("digest").get<std::string>();
                have_header = true;
            } else if (kind == "step") {
                StepRecord s;
                s.step = j.at("step").get<int>();
                s.action = action_of(j.at("action"));
                const auto& o = j.at("observation");
                s.status = parse_status(o.at("status").get<std::string>());
                s.digest = o.at("digest").get<std::string>();
                s.bytes = o.at("bytes").get<std::size_t>();
                s.source = o.at("source").get<std::string>();
                s.budget_remaining = j.at("budget_remaining").get<int>();
                t.steps.push_back(std::move(s));
            } else if (kind == "probe") {
                ProbeRecord p;
                p.step = j.at("step").get<int>();
                p.final = j.at("kind").get<std::string>() == "final";
                p.actions = j.at("actions").get<int>();
                p.opens = j.at("opens").get<int>();
                p.raw = j.at("raw").get<std::string>();
                p.report = report_of(j.at("report"));
                p.error = j.at("error").get<std::string>();
                if (!j.at("map").is_null()) p.map = map_of(j.at("map"), p.actions);
                t.probes.push_back(std::move(p));
            } else if (kind == "end") {
                TrajectoryEnd e;
                e.completed = j.at("status").get<std::string>() == "completed";
                e.cause = j.at("cause").get<std::string>();
                e.actions = j.at("actions").get<int>();
                e.opens = j.at("opens").get<int>();
                e.files_opened = j.at("files_opened").get<int>();
                e.invalid_actions = j.at("invalid_actions").get<int>();
                e.final_map = map_of(j.at("final_map"), e.actions);
                t.end = std::move(e);
            } else {
                throw TrajectoryError("unknown record kind: " + kind);
            }
        } catch (const json::exception& e) {
            throw TrajectoryError("trajectory line " + std::to_string(line_no) + ": " + e.what());
        } catch (const TrajectoryError& e) {
            throw TrajectoryError("trajectory line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) {
        throw TrajectoryError("trajectory has no header record");
    }
    return t;
}

void save_trajectory(const Trajectory& t, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << dump_trajectory(t);
    if (!out) throw TrajectoryError("cannot write " + path.string());
}

Trajectory load_trajectory(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TrajectoryError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_trajectory(buf.str());
}

TrajectoryWriter::TrajectoryWriter(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw TrajectoryError("cannot write " + path_.string());
}

void TrajectoryWriter::write(const json& record) {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out << record.dump() << "\n";
    out.flush();
    if (!out) throw TrajectoryError("cannot append to " + path_.string());
}

}  // namespace codemap
