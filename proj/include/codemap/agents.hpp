#pragma once
// Exploration agents and the drivers that run them under each condition.
//
// Rule-based baselines rebuild their map from the source text they have
// opened. The LLM agent talks to any OpenAI-compatible chat endpoint through a
// ChatTransport; the scripted transport replays canned replies offline.

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "codemap/belief.hpp"
#include "codemap/environment.hpp"
#include "codemap/trajectory.hpp"

namespace codemap {

// --- import scanning ---------------------------------------------------------

struct ImportLayout {
    std::string package;          // root package name, stripped from absolute imports
    std::set<std::string> files;  // repo-relative paths known to exist
};

struct ImportScan {
    std::vector<std::string> targets;  // repo-relative, first-seen order, no duplicates
    std::size_t unresolved = 0;        // in-package names with no file in the layout
};

// `src` is the path of the scanned file; it anchors relative imports.
ImportScan import_scan(std::string_view text, std::string_view src, const ImportLayout& layout);

// "stages.mod_a" -> "stages/mod_a.py"; entries without a module are skipped.
std::vector<std::string> config_stage_modules(std::string_view config_text);

// --- agent interface -----------------------------------------------------------

struct ProbeRequest {
    int actions = 0;
    int opens = 0;
    bool final = false;
    int budget_remaining = 0;
};

// Raised when a run cannot continue; the trajectory is closed as failed.
class RunFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Agent {
public:
    virtual ~Agent() = default;

    virtual std::string name() const = 0;
    // Called once before the first step of any condition.
    virtual void begin(const Codebase& /*codebase*/) {}
    // Must return DONE once nothing useful is left; the driver forces DONE at exhaustion.
    virtual Action next_action(const Session& session) = 0;
    virtual void observe(const Action& action, const Observation& observation) = 0;
    // Raw probe text; parsed by the driver.
    virtual std::string probe(const ProbeRequest& request) = 0;
    // Whole-codebase presentation. Default: one OPEN observation per file.
    virtual void present_all(const std::vector<SourceFile>& files);
};

// --- rule-based baselines --------------------------------------------------------

// Lists the root and every discovered directory, then opens files in the order
// chosen by the subclass. Probes report IMPORTS edges scanned from opened text.
class ScanAgent : public Agent {
public:
    void begin(const Codebase& codebase) override { package_ = codebase.root(); }
    void observe(const Action& action, const Observation& observation) override;
    Action next_action(const Session& session) override;
    std::string probe(const ProbeRequest& request) override;

    CognitiveMap current_map() const;
    const std::vector<std::string>& open_order() const { return open_order_; }

protected:
    // Next file to open, or nullopt when the agent is finished.
    virtual std::optional<std::string> choose_file() = 0;
    // Extra non-import edges from this agent's reading of the opened files.
    virtual std::vector<std::pair<std::string, EdgeBelief>> extra_edges() const { return {}; }
    virtual void on_opened(const std::string& /*path*/, const std::string& /*text*/) {}

    ImportScan scan(const std::string& path) const;

    std::string package_;
    std::deque<std::string> to_list_;
    std::set<std::string> listed_;
    std::vector<std::string> known_files_;  // discovery order
    std::set<std::string> known_set_;
    std::map<std::string, std::string> texts_;  // opened files
    std::vector<std::string> open_order_;
    bool started_ = false;
};

class RandomAgent : public ScanAgent {
public:
    explicit RandomAgent(std::uint64_t seed) : rng_(seed) {}
    std::string name() const override { return "random"; }

protected:
    std::optional<std::string> choose_file() override;

private:
    Rng rng_;
};

class BfsImportAgent : public ScanAgent {
public:
    std::string name() const override { return "bfs-import"; }

protected:
    std::optional<std::string> choose_file() override;
    void on_opened(const std::string& path, const std::string& text) override;

private:
    std::deque<std::string> queue_;
    bool seeded_ = false;
};

class ConfigAwareAgent : public ScanAgent {
public:
    std::string name() const override { return "config-aware"; }

protected:
    std::optional<std::string> choose_file() override;
    void on_opened(const std::string& path, const std::string& text) override;
    std::vector<std::pair<std::string, EdgeBelief>> extra_edges() const override;

private:
    std::deque<std::string> queue_;
    std::vector<std::string> config_stages_;
};

// Never explores; every probe is the ground truth itself.
class OracleAgent : public Agent {
public:
    explicit OracleAgent(GroundTruth gt) : gt_(std::move(gt)) {}
    std::string name() const override { return "oracle"; }
    Action next_action(const Session&) override { return Action::done(); }
    void observe(const Action&, const Observation&) override {}
    std::string probe(const ProbeRequest&) override;
    void present_all(const std::vector<SourceFile>&) override {}

private:
    GroundTruth gt_;
};

CognitiveMap oracle_map(const GroundTruth& gt);

inline const std::vector<std::string> kBaselineNames = {"oracle", "config-aware", "random", "bfs-import"};

// nullptr for unknown names. Random is seeded from the codebase seed.
std::unique_ptr<Agent> make_baseline(std::string_view name, const Codebase& codebase);

// --- LLM agent -------------------------------------------------------------------

struct ChatMessage {
    std::string role;  // "system", "user", "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 0;
};

class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& message, bool retryable)
        : std::runtime_error(message), retryable_(retryable) {}
    bool retryable() const { return retryable_; }

private:
    bool retryable_;
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    // Reply text of the first choice; throws TransportError.
    virtual std::string complete(const ChatRequest& request) = 0;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ProviderConfig {
    std::string name;
    std::string base_url;  // e.g. "https://api.openai.com/v1"
    std::string model;
    std::string api_key_env;
    double temperature = 0.0;
    int max_tokens = 4096;
    double rate_limit_per_min = 60.0;
    std::optional<std::size_t> max_context_tokens;
    int max_retries = 4;
    double backoff_seconds = 1.0;  // first retry delay, doubled each time
};

ProviderConfig provider_from_json(const nlohmann::json& doc);
ProviderConfig load_provider(const std::filesystem::path& path);
// Throws ConfigError naming the variable when it is unset or empty.
std::string resolve_api_key(const ProviderConfig& provider);

// POST {base_url}/chat/completions with a bearer key.
class HttpChatTransport : public ChatTransport {
public:
    HttpChatTransport(std::string base_url, std::string api_key, std::chrono::seconds timeout = std::chrono::seconds(120));
    std::string complete(const ChatRequest& request) override;

private:
    std::string host_;
    std::string path_prefix_;
    std::string api_key_;
    std::chrono::seconds timeout_;
};

// Canned replies: action turns and probe turns draw from separate queues.
// An exhausted action queue answers DONE; an exhausted probe queue repeats
// the last probe reply ("{}" if there was none).
class ScriptedTransport : public ChatTransport {
public:
    ScriptedTransport(std::vector<std::string> actions, std::vector<std::string> probes);
    std::string complete(const ChatRequest& request) override;

    const std::vector<ChatRequest>& requests() const { return requests_; }

private:
    std::deque<std::string> actions_;
    std::deque<std::string> probes_;
    std::string last_probe_;
    std::vector<ChatRequest> requests_;
};

// Marker the scripted transport uses to tell probe turns from action turns.
inline constexpr std::string_view kProbeMarker = "COGNITIVE MAP PROBE";

struct MockScript {
    std::vector<std::string> actions;
    std::vector<std::string> probes;
};

MockScript load_mock_script(const std::filesystem::path& path);

// Minimum spacing between requests to one provider, shared by all runs.
class RateLimiter {
public:
    using Clock = std::function<double()>;         // seconds
    using Sleeper = std::function<void(double)>;  // seconds

    RateLimiter(double per_minute, Clock clock, Sleeper sleeper);
    void acquire();

private:
    double interval_;
    Clock clock_;
    Sleeper sleeper_;
    std::mutex mutex_;
    std::optional<double> next_;
};

RateLimiter& provider_limiter(const std::string& provider, double per_minute);

// First line that is an action wins; anything else is an INVALID action.
Action parse_action_reply(std::string_view reply);

struct PromptSet {
    std::string version;
    std::string system;
    std::string action;
    std::string probe;
    std::string passive;
};

PromptSet load_prompts(const std::filesystem::path& dir, const std::string& version);

// Replaces every {{key}}; unknown placeholders are left as they are.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& slots);

struct LlmOptions {
    std::string model;
    double temperature = 0.0;
    int max_tokens = 4096;
    std::optional<std::size_t> max_context_tokens;
    int max_retries = 4;
    double backoff_seconds = 1.0;
    RateLimiter* limiter = nullptr;
    std::function<void(double)> sleeper;  // backoff sleeps; real sleep when empty
};

class LlmAgent : public Agent {
public:
    LlmAgent(std::string name, ChatTransport& transport, PromptSet prompts, LlmOptions options, TrackingMode mode,
             SessionConfig session);

    std::string name() const override { return name_; }
    Action next_action(const Session& session) override;
    void observe(const Action& action, const Observation& observation) override;
    std::string probe(const ProbeRequest& request) override;
    void present_all(const std::vector<SourceFile>& files) override;

    const std::vector<ChatMessage>& transcript() const { return transcript_; }
    int requests() const { return requests_; }

private:
    std::string send(std::vector<ChatMessage> messages);
    void flush_pending();

    std::string name_;
    ChatTransport* transport_;
    PromptSet prompts_;
    LlmOptions options_;
    TrackingMode mode_;
    SessionConfig session_;
    std::vector<ChatMessage> transcript_;
    std::vector<std::string> pending_;  // rendered observations not yet sent
    int requests_ = 0;
};

// --- condition drivers -------------------------------------------------------------

struct RunSpec {
    std::string run_id;
    std::string agent;
    Condition condition = Condition::Active;
    TrackingMode mode = TrackingMode::Scratchpad;
    SessionConfig session;
    std::string prompt_version;
    const Trajectory* replay_source = nullptr;  // PASSIVE_REPLAY only
};

// Records are streamed to `writer` when given. Agent failures close the
// trajectory as failed; a replay source from another codebase, or one whose
// observations no longer reproduce, throws UsageError.
Trajectory run_condition(Agent& agent, const Codebase& codebase, const RunSpec& spec,
                         TrajectoryWriter* writer = nullptr);

}  // namespace codemap
