#pragma once
// Budgeted, partially observable access to a generated codebase.
//
// Paths are relative to the package root, the same identity used by the
// ground truth. The root directory is addressed as "", "." or "/".

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "codemap/codegen.hpp"

namespace codemap {

class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class ActionKind { List, Open, Search, Inspect, Done, Invalid };

std::string_view to_string(ActionKind kind);

struct Action {
    ActionKind kind = ActionKind::Invalid;
    std::string target;  // LIST dir, OPEN/INSPECT file, SEARCH query, INVALID raw text
    std::string symbol;  // INSPECT only

    static Action list(std::string dir) { return {ActionKind::List, std::move(dir), {}}; }
    static Action open(std::string file) { return {ActionKind::Open, std::move(file), {}}; }
    static Action search(std::string query) { return {ActionKind::Search, std::move(query), {}}; }
    static Action inspect(std::string file, std::string symbol) {
        return {ActionKind::Inspect, std::move(file), std::move(symbol)};
    }
    static Action done() { return {ActionKind::Done, {}, {}}; }
    static Action invalid(std::string raw) { return {ActionKind::Invalid, std::move(raw), {}}; }

    // Canonical text form: LIST(dir), OPEN(path), SEARCH(query),
    // INSPECT(path, symbol), DONE, INVALID(raw).
    std::string to_string() const;
    bool costs_budget() const { return kind != ActionKind::Done; }

    bool operator==(const Action&) const = default;
};

// Inverse of Action::to_string for the canonical form only.
Action action_from_string(std::string_view text);

enum class ObsStatus { Ok, NotFound, Invalid, Terminal };

std::string_view to_string(ObsStatus status);

struct SearchHit {
    std::string path;
    std::size_t line = 0;

    auto operator<=>(const SearchHit&) const = default;
};

struct Observation {
    ActionKind kind = ActionKind::Invalid;
    ObsStatus status = ObsStatus::Ok;
    std::vector<std::string> entries;  // LIST: names, directories end in '/'
    std::vector<SearchHit> hits;       // SEARCH
    std::string text;                  // OPEN: file text, INSPECT: header + docstring, else a message
    std::string source;                // file or directory the payload came from
    int budget_remaining = 0;

    // Exactly what the agent is shown.
    std::string render() const;
    // SHA-256 hex of render().
    std::string digest() const;
};

std::string sha256_hex(std::string_view data);

// Read-only file tree with the queries the actions need.
class Codebase {
public:
    explicit Codebase(RenderedCodebase rendered);

    const RenderedCodebase& rendered() const { return rendered_; }
    const GroundTruth& ground_truth() const { return rendered_.ground_truth; }
    const std::string& root() const { return rendered_.root; }
    std::uint64_t seed() const { return rendered_.ground_truth.manifest.seed; }

    // Digest over every path and file text; identifies the codebase.
    const std::string& digest() const { return digest_; }

    bool is_file(std::string_view path) const;
    bool is_dir(std::string_view path) const;
    const std::string* read(std::string_view path) const;
    std::vector<std::string> list(std::string_view dir) const;  // throws if not a directory
    std::vector<std::string> files() const;                      // sorted

private:
    RenderedCodebase rendered_;
    std::map<std::string, const std::string*, std::less<>> files_;
    std::set<std::string, std::less<>> dirs_;
    std::string digest_;
};

// "./a//b/" -> "a/b"; "", ".", "/" -> "".
std::string normalize_repo_path(std::string_view path);

// Literal, case-sensitive substring search ordered by (path, line).
std::vector<SearchHit> search(const Codebase& codebase, std::string_view query);

// Header and docstring of a top-level def/class, or nullopt.
std::optional<std::string> inspect(const Codebase& codebase, std::string_view file, std::string_view symbol);

struct SessionConfig {
    int budget = 20;
    int probe_interval = 3;
};

struct LogEntry {
    Action action;
    Observation observation;
};

struct ProbeMark {
    int actions = 0;  // costed actions taken when the probe was issued
    int opens = 0;
    bool final = false;
};

class Session {
public:
    Session(const Codebase& codebase, SessionConfig config);

    Observation step(const Action& action);

    bool probe_due() const;
    // Whether a closing probe is still owed after termination.
    bool final_probe_due() const;
    // Records a probe at the current count. Budget is untouched.
    void record_probe(bool final);

    const Codebase& codebase() const { return *codebase_; }
    const SessionConfig& config() const { return config_; }
    int budget_remaining() const { return config_.budget - actions_taken_; }
    int actions_taken() const { return actions_taken_; }
    int opens() const { return opens_; }
    int invalid_actions() const { return invalid_actions_; }
    bool terminated() const { return terminated_; }
    bool exhausted() const { return budget_remaining() <= 0; }
    const std::set<std::string>& opened() const { return opened_; }
    const std::vector<LogEntry>& log() const { return log_; }
    const std::vector<ProbeMark>& probes() const { return probes_; }

private:
    Observation make(ActionKind kind, ObsStatus status) const;

    const Codebase* codebase_;
    SessionConfig config_;
    int actions_taken_ = 0;
    int opens_ = 0;
    int invalid_actions_ = 0;
    bool terminated_ = false;
    std::set<std::string> opened_;
    std::vector<LogEntry> log_;
    std::vector<ProbeMark> probes_;
};

}  // namespace codemap
