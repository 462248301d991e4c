#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "codemap/agents.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "codemap/metrics.hpp"
#include "codemap/pysource.hpp"
#include "codemap/worldmodel.hpp"

namespace codemap {

using nlohmann::json;

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string basename(std::string_view path) { return strip_directories(path); }

std::string first_line(std::string_view text) {
    const auto nl = text.find('\n');
    return trim(text.substr(0, nl));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Module file for a package-relative dotted name split into parts.
std::optional<std::string> module_file(const std::vector<std::string>& parts, const ImportLayout& layout) {
    const std::string stem = join(parts, "/");
    if (stem.empty()) {
        if (layout.files.count("__init__.py")) return "__init__.py";
        return std::nullopt;
    }
    if (layout.files.count(stem + ".py")) return stem + ".py";
    if (layout.files.count(stem + "/__init__.py")) return stem + "/__init__.py";
    return std::nullopt;
}

}  // namespace

// --- import scanning ---------------------------------------------------------

ImportScan import_scan(std::string_view text, std::string_view src, const ImportLayout& layout) {
    ImportScan out;
    std::set<std::string> seen;
    auto add = [&](const std::string& dst) {
        if (dst == src) return;
        if (seen.insert(dst).second) out.targets.push_back(dst);
    };
    for (const auto& imp : scan_imports(text)) {
        std::vector<std::string> parts;
        if (imp.level > 0) {
            parts = split(src, '/');
            parts.pop_back();  // the file itself
            for (int up = 1; up < imp.level; ++up) {
                if (parts.empty()) break;
                parts.pop_back();
            }
            if (!imp.module.empty()) {
                for (auto& p : split(imp.module, '.')) parts.push_back(std::move(p));
            }
        } else {
            parts = split(imp.module, '.');
            if (parts.empty() || parts.front() != layout.package) continue;  // outside the package
            parts.erase(parts.begin());
        }
        if (imp.names.empty()) {
            if (auto f = module_file(parts, layout)) {
                add(*f);
            } else {
                ++out.unresolved;
            }
            continue;
        }
        // "from m import x": x may itself be a submodule.
        bool module_added = false;
        for (const auto& name : imp.names) {
            if (name == "*") continue;
            auto sub = parts;
            sub.push_back(name);
            if (auto f = module_file(sub, layout)) {
                add(*f);
                continue;
            }
            if (module_added) continue;
            if (auto f = module_file(parts, layout)) {
                add(*f);
                module_added = true;
            } else {
                ++out.unresolved;
                break;
            }
        }
    }
    return out;
}

std::vector<std::string> config_stage_modules(std::string_view config_text) {
    std::vector<std::string> out;
    const json doc = json::parse(config_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return out;
    auto it = doc.find("stages");
    if (it == doc.end() || !it->is_array()) return out;
    for (const auto& entry : *it) {
        if (!entry.is_object() || !entry.contains("module") || !entry["module"].is_string()) continue;
        out.push_back(join(split(entry["module"].get<std::string>(), '.'), "/") + ".py");
    }
    return out;
}

// --- agent interface -----------------------------------------------------------

void Agent::present_all(const std::vector<SourceFile>& files) {
    for (const auto& f : files) {
        Observation obs;
        obs.kind = ActionKind::Open;
        obs.status = ObsStatus::Ok;
        obs.text = f.text;
        obs.source = f.path;
        observe(Action::open(f.path), obs);
    }
}

// --- rule-based baselines --------------------------------------------------------

void ScanAgent::observe(const Action& action, const Observation& obs) {
    if (obs.status != ObsStatus::Ok) return;
    if (action.kind == ActionKind::List) {
        const std::string dir = normalize_repo_path(action.target);
        listed_.insert(dir);
        for (const auto& entry : obs.entries) {
            const bool is_dir = entry.ends_with("/");
            const std::string name = is_dir ? entry.substr(0, entry.size() - 1) : entry;
            const std::string path = dir.empty() ? name : dir + "/" + name;
            if (is_dir) {
                if (!listed_.count(path) && std::find(to_list_.begin(), to_list_.end(), path) == to_list_.end()) {
                    to_list_.push_back(path);
                }
            } else if (known_set_.insert(path).second) {
                known_files_.push_back(path);
            }
        }
    } else if (action.kind == ActionKind::Open) {
        const std::string path = normalize_repo_path(action.target);
        if (known_set_.insert(path).second) known_files_.push_back(path);
        if (texts_.emplace(path, obs.text).second) {
            open_order_.push_back(path);
            on_opened(path, obs.text);
        }
    }
}

Action ScanAgent::next_action(const Session& session) {
    if (!started_) {
        started_ = true;
        if (package_.empty()) package_ = session.codebase().root();
        to_list_.push_back("");
    }
    if (session.exhausted()) return Action::done();
    while (!to_list_.empty()) {
        std::string dir = to_list_.front();
        to_list_.pop_front();
        if (!listed_.count(dir)) return Action::list(dir);
    }
    if (auto f = choose_file()) return Action::open(*f);
    return Action::done();
}

ImportScan ScanAgent::scan(const std::string& path) const {
    auto it = texts_.find(path);
    if (it == texts_.end() || !path.ends_with(".py")) return {};
    return import_scan(it->second, path, ImportLayout{package_, known_set_});
}

CognitiveMap ScanAgent::current_map() const {
    CognitiveMap map;
    std::vector<std::string> files(known_set_.begin(), known_set_.end());
    const auto extra = extra_edges();
    for (const auto& path : files) {
        ComponentBelief c;
        c.path = path;
        auto it = texts_.find(path);
        if (it == texts_.end()) {
            c.status = BeliefStatus::Unknown;
        } else {
            c.status = BeliefStatus::Observed;
            if (path.ends_with(".py")) {
                c.purpose = first_line(module_docstring(it->second));
                for (const auto& def : top_level_definitions(it->second)) c.exports.push_back({def.name, def.header});
                for (const auto& dst : scan(path).targets) {
                    c.edges.push_back({dst, std::string(to_string(EdgeType::Imports)), 1.0});
                }
            }
        }
        for (const auto& [src, edge] : extra) {
            if (src == path) c.edges.push_back(edge);
        }
        map.components.push_back(std::move(c));
    }
    for (const auto& dir : to_list_) {
        if (!listed_.count(dir)) map.unexplored.push_back(dir + "/");
    }
    for (const auto& path : files) {
        if (!texts_.count(path)) map.unexplored.push_back(path);
    }
    return map;
}

std::string ScanAgent::probe(const ProbeRequest&) { return to_json(current_map()).dump(2); }

std::optional<std::string> RandomAgent::choose_file() {
    std::vector<std::string> candidates;
    for (const auto& f : known_files_) {
        if (!texts_.count(f)) candidates.push_back(f);
    }
    if (candidates.empty()) return std::nullopt;
    return rng_.pick(candidates);
}

namespace {

std::optional<std::string> first_unopened(const std::set<std::string>& known,
                                          const std::map<std::string, std::string>& texts) {
    for (const auto& f : known) {
        if (!texts.count(f)) return f;
    }
    return std::nullopt;
}

std::optional<std::string> pop_unopened(std::deque<std::string>& queue, const std::set<std::string>& known,
                                        const std::map<std::string, std::string>& texts) {
    while (!queue.empty()) {
        std::string f = queue.front();
        queue.pop_front();
        if (known.count(f) && !texts.count(f)) return f;
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> BfsImportAgent::choose_file() {
    if (!seeded_) {
        seeded_ = true;
        for (const char* entry : {"cli.py", "runner.py"}) queue_.push_back(entry);
    }
    if (auto f = pop_unopened(queue_, known_set_, texts_)) return f;
    return first_unopened(known_set_, texts_);
}

void BfsImportAgent::on_opened(const std::string& path, const std::string&) {
    for (const auto& dst : scan(path).targets) queue_.push_back(dst);
}

std::optional<std::string> ConfigAwareAgent::choose_file() {
    // Config data first, then the registry, then config modules.
    auto rank = [](const std::string& path) {
        const std::string name = basename(path);
        if (name.ends_with(".json")) return 0;
        if (name.find("registry") != std::string::npos) return 1;
        if (name.find("config") != std::string::npos) return 2;
        return 3;
    };
    std::optional<std::string> best;
    int best_rank = 3;
    for (const auto& f : known_set_) {
        if (texts_.count(f)) continue;
        const int r = rank(f);
        if (r < best_rank) {
            best = f;
            best_rank = r;
        }
    }
    if (best) return best;
    if (auto f = pop_unopened(queue_, known_set_, texts_)) return f;
    for (const auto& f : config_stages_) {
        if (known_set_.count(f) && !texts_.count(f)) return f;
    }
    return first_unopened(known_set_, texts_);
}

void ConfigAwareAgent::on_opened(const std::string& path, const std::string& text) {
    if (path.ends_with(".json")) {
        for (auto& m : config_stage_modules(text)) {
            if (std::find(config_stages_.begin(), config_stages_.end(), m) == config_stages_.end()) {
                config_stages_.push_back(std::move(m));
            }
        }
        return;
    }
    for (const auto& dst : scan(path).targets) queue_.push_back(dst);
}

std::vector<std::pair<std::string, EdgeBelief>> ConfigAwareAgent::extra_edges() const {
    std::vector<std::pair<std::string, EdgeBelief>> out;
    for (const auto& [path, text] : texts_) {
        if (!path.ends_with(".py") || basename(path).find("registry") == std::string::npos) continue;
        for (const auto& stage : config_stages_) {
            out.push_back({path, {stage, std::string(to_string(EdgeType::RegistryWires)), 1.0}});
        }
    }
    return out;
}

CognitiveMap oracle_map(const GroundTruth& gt) {
    CognitiveMap map;
    for (const auto& m : gt.modules) {
        ComponentBelief c;
        c.path = m.path;
        c.status = BeliefStatus::Observed;
        c.purpose = m.purpose;
        c.exports = m.exports;
        for (const auto& e : gt.edges) {
            if (e.src == m.path) c.edges.push_back({e.dst, std::string(to_string(e.type)), 1.0});
        }
        map.components.push_back(std::move(c));
    }
    for (const auto& k : gt.constraints) {
        InvariantBelief inv;
        inv.type = std::string(to_string(k.type));
        inv.src = k.src;
        inv.dst = k.dst;
        inv.via = k.via;
        inv.pattern = k.pattern;
        for (const auto& ev : k.evidence) inv.evidence.push_back(ev.locator);
        map.invariants.push_back(std::move(inv));
    }
    return map;
}

std::string OracleAgent::probe(const ProbeRequest&) { return to_json(oracle_map(gt_)).dump(2); }

std::unique_ptr<Agent> make_baseline(std::string_view name, const Codebase& codebase) {
    if (name == "oracle") return std::make_unique<OracleAgent>(codebase.ground_truth());
    if (name == "config-aware") return std::make_unique<ConfigAwareAgent>();
    if (name == "random") return std::make_unique<RandomAgent>(codebase.seed());
    if (name == "bfs-import") return std::make_unique<BfsImportAgent>();
    return nullptr;
}

// --- providers and transports ------------------------------------------------------

ProviderConfig provider_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("provider config must be a JSON object");
    ProviderConfig p;
    auto required = [&](const char* key) {
        auto it = doc.find(key);
        if (it == doc.end() || !it->is_string() || it->get<std::string>().empty()) {
            throw ConfigError(std::string("provider config is missing \"") + key + "\"");
        }
        return it->get<std::string>();
    };
    p.name = required("name");
    p.base_url = required("base_url");
    p.model = required("model");
    p.api_key_env = required("api_key_env");
    try {
        p.temperature = doc.value("temperature", p.temperature);
        p.max_tokens = doc.value("max_tokens", p.max_tokens);
        p.rate_limit_per_min = doc.value("rate_limit_per_min", p.rate_limit_per_min);
        if (doc.contains("max_context_tokens") && !doc["max_context_tokens"].is_null()) {
            p.max_context_tokens = doc["max_context_tokens"].get<std::size_t>();
        }
        p.max_retries = doc.value("max_retries", p.max_retries);
        p.backoff_seconds = doc.value("backoff_seconds", p.backoff_seconds);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("provider config: ") + e.what());
    }
    if (p.max_retries < 0 || p.max_tokens <= 0) throw ConfigError("provider config: bad retry or token limit");
    return p;
}

ProviderConfig load_provider(const std::filesystem::path& path) {
    const json doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded()) throw ConfigError("provider config " + path.string() + " is not valid JSON");
    return provider_from_json(doc);
}

std::string resolve_api_key(const ProviderConfig& provider) {
    const char* value = std::getenv(provider.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
        throw ConfigError("environment variable " + provider.api_key_env + " is not set (API key for provider " +
                          provider.name + ")");
    }
    return value;
}

HttpChatTransport::HttpChatTransport(std::string base_url, std::string api_key, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
    const auto scheme = base_url.find("://");
    const auto slash = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash == std::string::npos) {
        host_ = base_url;
    } else {
        host_ = base_url.substr(0, slash);
        path_prefix_ = base_url.substr(slash);
    }
    while (path_prefix_.ends_with("/")) path_prefix_.pop_back();
}

std::string HttpChatTransport::complete(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    const json body = {{"model", request.model},
                       {"messages", messages},
                       {"temperature", request.temperature},
                       {"max_tokens", request.max_tokens}};

    httplib::Client client(host_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("request failed: " + httplib::to_string(res.error()), true);
    }
    if (res->status != 200) {
        const bool retryable = res->status == 429 || res->status >= 500;
        throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300), retryable);
    }
    const json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) throw TransportError("response is not JSON", false);
    try {
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        return content.is_string() ? content.get<std::string>() : std::string();
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected response shape: ") + e.what(), false);
    }
}

ScriptedTransport::ScriptedTransport(std::vector<std::string> actions, std::vector<std::string> probes)
    : actions_(actions.begin(), actions.end()), probes_(probes.begin(), probes.end()), last_probe_("{}") {}

std::string ScriptedTransport::complete(const ChatRequest& request) {
    requests_.push_back(request);
    const bool is_probe =
        !request.messages.empty() && request.messages.back().content.find(kProbeMarker) != std::string::npos;
    if (is_probe) {
        if (!probes_.empty()) {
            last_probe_ = probes_.front();
            probes_.pop_front();
        }
        return last_probe_;
    }
    if (actions_.empty()) return "DONE";
    std::string reply = actions_.front();
    actions_.pop_front();
    return reply;
}

MockScript load_mock_script(const std::filesystem::path& path) {
    const json doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ConfigError("mock script " + path.string() + " is not valid");
    MockScript s;
    try {
        s.actions = doc.at("actions").get<std::vector<std::string>>();
        s.probes = doc.at("probes").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ConfigError("mock script " + path.string() + ": " + e.what());
    }
    return s;
}

RateLimiter::RateLimiter(double per_minute, Clock clock, Sleeper sleeper)
    : interval_(per_minute > 0.0 ? 60.0 / per_minute : 0.0), clock_(std::move(clock)), sleeper_(std::move(sleeper)) {}

void RateLimiter::acquire() {
    std::lock_guard lock(mutex_);
    double now = clock_();
    if (next_ && *next_ > now) {
        sleeper_(*next_ - now);
        now = *next_;
    }
    next_ = now + interval_;
}

RateLimiter& provider_limiter(const std::string& provider, double per_minute) {
    static std::mutex mutex;
    static std::map<std::string, std::unique_ptr<RateLimiter>> limiters;
    std::lock_guard lock(mutex);
    auto& slot = limiters[provider];
    if (!slot) {
        const auto start = std::chrono::steady_clock::now();
        slot = std::make_unique<RateLimiter>(
            per_minute,
            [start] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); },
            [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); });
    }
    return *slot;
}

// --- action grammar and prompts ------------------------------------------------------

namespace {

std::string unquote(std::string s) {
    s = trim(s);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

std::optional<Action> action_of_line(std::string line) {
    line = trim(line);
    while (!line.empty() && line.front() == '`') line.erase(line.begin());
    while (!line.empty() && line.back() == '`') line.pop_back();
    line = trim(line);
    static const std::regex prefix(R"(^(?:action\s*:\s*))", std::regex::icase);
    line = std::regex_replace(line, prefix, "");
    if (line == "DONE" || line == "DONE()") return Action::done();
    static const std::regex call(R"(^(LIST|OPEN|SEARCH|INSPECT)\((.*)\)$)");
    std::smatch m;
    if (!std::regex_match(line, m, call)) return std::nullopt;
    const std::string verb = m[1];
    const std::string args = m[2];
    if (verb == "LIST") return Action::list(unquote(args));
    if (verb == "OPEN") return Action::open(unquote(args));
    if (verb == "SEARCH") return Action::search(unquote(args));
    const auto comma = args.find(',');
    if (comma == std::string::npos) return std::nullopt;
    return Action::inspect(unquote(args.substr(0, comma)), unquote(args.substr(comma + 1)));
}

}  // namespace

Action parse_action_reply(std::string_view reply) {
    for (const auto& line : split(reply, '\n')) {
        if (auto a = action_of_line(line)) return *a;
    }
    std::string raw = trim(reply);
    if (raw.size() > 200) raw = raw.substr(0, 200);
    return Action::invalid(raw);
}

PromptSet load_prompts(const std::filesystem::path& dir, const std::string& version) {
    const auto base = dir / version;
    if (!std::filesystem::is_directory(base)) {
        throw ConfigError("prompt version " + version + " not found under " + dir.string());
    }
    PromptSet p;
    p.version = version;
    p.system = read_file(base / "system.txt");
    p.action = read_file(base / "action.txt");
    p.probe = read_file(base / "probe.txt");
    p.passive = read_file(base / "passive.txt");
    return p;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const auto open = tmpl.find("{{", i);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        out.append(tmpl.substr(i, open - i));
        const std::string key(tmpl.substr(open + 2, close - open - 2));
        auto it = slots.find(key);
        if (it != slots.end()) {
            out += it->second;
        } else {
            out.append(tmpl.substr(open, close + 2 - open));
        }
        i = close + 2;
    }
    out.append(tmpl.substr(i));
    return out;
}

// --- LLM agent -----------------------------------------------------------------------

LlmAgent::LlmAgent(std::string name, ChatTransport& transport, PromptSet prompts, LlmOptions options,
                   TrackingMode mode, SessionConfig session)
    : name_(std::move(name)),
      transport_(&transport),
      prompts_(std::move(prompts)),
      options_(std::move(options)),
      mode_(mode),
      session_(session) {
    transcript_.push_back({"system", fill_template(prompts_.system, {{"budget", std::to_string(session_.budget)},
                                                                     {"probe_interval",
                                                                      std::to_string(session_.probe_interval)}})});
}

std::string LlmAgent::send(std::vector<ChatMessage> messages) {
    if (options_.max_context_tokens) {
        std::size_t chars = 0;
        for (const auto& m : messages) chars += m.content.size();
        const std::size_t estimate = (chars + 3) / 4;
        if (estimate > *options_.max_context_tokens) {
            throw RunFailure("assembled prompt of ~" + std::to_string(estimate) + " tokens exceeds max_context_tokens " +
                             std::to_string(*options_.max_context_tokens));
        }
    }
    ChatRequest request{options_.model, std::move(messages), options_.temperature, options_.max_tokens};
    ++requests_;
    for (int attempt = 0;; ++attempt) {
        if (options_.limiter) options_.limiter->acquire();
        try {
            return transport_->complete(request);
        } catch (const TransportError& e) {
            if (!e.retryable() || attempt >= options_.max_retries) {
                throw RunFailure("upstream request failed after " + std::to_string(attempt + 1) +
                                 " attempt(s): " + e.what());
            }
            const double delay = options_.backoff_seconds * static_cast<double>(1ULL << std::min(attempt, 20));
            if (options_.sleeper) {
                options_.sleeper(delay);
            } else {
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
        }
    }
}

void LlmAgent::flush_pending() {
    if (pending_.empty()) return;
    transcript_.push_back({"user", join(pending_, "\n\n")});
    pending_.clear();
}

Action LlmAgent::next_action(const Session& session) {
    std::vector<std::string> opened(session.opened().begin(), session.opened().end());
    const std::string prompt =
        fill_template(prompts_.action, {{"budget_remaining", std::to_string(session.budget_remaining())},
                                        {"actions_taken", std::to_string(session.actions_taken())},
                                        {"opened_files", opened.empty() ? "(none)" : join(opened, ", ")}});
    pending_.push_back(prompt);
    flush_pending();
    const std::string reply = send(transcript_);
    transcript_.push_back({"assistant", reply});
    return parse_action_reply(reply);
}

void LlmAgent::observe(const Action& action, const Observation& observation) {
    pending_.push_back("Result of " + action.to_string() + ":\n" + observation.render());
}

std::string LlmAgent::probe(const ProbeRequest& request) {
    flush_pending();
    ChatMessage ask{"user", std::string(kProbeMarker) + "\n" +
                                fill_template(prompts_.probe,
                                              {{"kind", request.final ? "final" : "periodic"},
                                               {"actions_taken", std::to_string(request.actions)},
                                               {"budget_remaining", std::to_string(request.budget_remaining)}})};
    auto messages = transcript_;
    messages.push_back(ask);
    const std::string reply = send(std::move(messages));
    if (mode_ == TrackingMode::Scratchpad) {
        transcript_.push_back(std::move(ask));
        transcript_.push_back({"assistant", reply});
    }
    return reply;
}

void LlmAgent::present_all(const std::vector<SourceFile>& files) {
    std::string listing;
    for (const auto& f : files) listing += "=== " + f.path + " ===\n" + f.text + "\n";
    pending_.push_back(fill_template(prompts_.passive, {{"files", listing},
                                                        {"file_count", std::to_string(files.size())}}));
    flush_pending();
}

// --- condition drivers -------------------------------------------------------------

namespace {

class Driver {
public:
    Driver(Agent& agent, const Codebase& codebase, const RunSpec& spec, SessionConfig config,
           TrajectoryWriter* writer)
        : agent_(agent), session_(codebase, config), spec_(spec), writer_(writer) {
        auto& h = trajectory_.header;
        h.run_id = spec.run_id;
        h.agent = spec.agent.empty() ? agent.name() : spec.agent;
        h.condition = spec.condition;
        h.mode = spec.mode;
        h.budget = config.budget;
        h.probe_interval = config.probe_interval;
        h.prompt_version = spec.prompt_version;
        h.source_run = spec.replay_source ? spec.replay_source->header.run_id : "";
        h.codebase_root = codebase.root();
        h.seed = codebase.seed();
        h.codebase_digest = codebase.digest();
        agent_.begin(codebase);
        if (writer_) writer_->write(header_json(h));
    }

    Session& session() { return session_; }
    Agent& agent() { return agent_; }

    Observation step(const Action& action) {
        Observation obs = session_.step(action);
        // A periodic probe followed directly by termination doubles as the final one.
        if (pending_probe_ && session_.terminated() && pending_probe_->actions == session_.actions_taken()) {
            pending_probe_->final = true;
            session_.record_probe(true);
            closed_ = true;
        }
        flush_probe();
        StepRecord rec;
        rec.step = static_cast<int>(trajectory_.steps.size()) + 1;
        rec.action = action;
        rec.status = obs.status;
        const std::string rendered = obs.render();
        rec.digest = sha256_hex(rendered);
        rec.bytes = rendered.size();
        rec.source = obs.source;
        rec.budget_remaining = obs.budget_remaining;
        trajectory_.steps.push_back(rec);
        if (writer_) writer_->write(step_json(rec));
        return obs;
    }

    void probe(bool final) {
        ProbeRecord rec;
        rec.step = static_cast<int>(trajectory_.steps.size());
        rec.final = final;
        rec.actions = session_.actions_taken();
        rec.opens = session_.opens();
        const int before = session_.budget_remaining();
        rec.raw = agent_.probe({rec.actions, rec.opens, final, before});
        if (session_.budget_remaining() != before) {
            throw std::logic_error("probe changed the remaining budget");
        }
        session_.record_probe(final);
        try {
            auto [map, report] = parse_probe(rec.raw);
            map.probe_step = rec.actions;
            rec.map = std::move(map);
            rec.report = std::move(report);
        } catch (const ParseError& e) {
            rec.error = e.what();
            rec.report.success = false;
        }
        if (final) closed_ = true;
        pending_probe_ = std::move(rec);
    }

    void maybe_probe() {
        if (!session_.terminated() && spec_.mode != TrackingMode::NoProbe && session_.probe_due()) probe(false);
    }

    void finish_probes() {
        if (!closed_ && session_.final_probe_due()) probe(true);
        flush_probe();
    }

    Trajectory close(bool completed, std::string cause) {
        flush_probe();
        TrajectoryEnd end;
        end.completed = completed;
        end.cause = std::move(cause);
        end.actions = session_.actions_taken();
        end.opens = session_.opens();
        end.files_opened = static_cast<int>(session_.opened().size());
        end.invalid_actions = session_.invalid_actions();
        for (auto it = trajectory_.probes.rbegin(); it != trajectory_.probes.rend(); ++it) {
            if (it->map && (it->final || !completed)) {
                end.final_map = *it->map;
                break;
            }
        }
        end.final_map.probe_step = end.actions;
        trajectory_.end = end;
        if (writer_) writer_->write(end_json(end));
        return std::move(trajectory_);
    }

private:
    void flush_probe() {
        if (!pending_probe_) return;
        trajectory_.probes.push_back(std::move(*pending_probe_));
        pending_probe_.reset();
        if (writer_) writer_->write(probe_json(trajectory_.probes.back()));
    }

    Agent& agent_;
    Session session_;
    const RunSpec& spec_;
    TrajectoryWriter* writer_;
    Trajectory trajectory_;
    std::optional<ProbeRecord> pending_probe_;
    bool closed_ = false;
};

void drive_active(Driver& d) {
    auto& s = d.session();
    while (!s.terminated()) {
        const Action a = s.exhausted() ? Action::done() : d.agent().next_action(s);
        const Observation obs = d.step(a);
        d.agent().observe(a, obs);
        d.maybe_probe();
    }
}

void drive_files(Driver& d, const std::vector<std::string>& files) {
    for (const auto& f : files) {
        const Action a = Action::open(f);
        const Observation obs = d.step(a);
        d.agent().observe(a, obs);
        d.maybe_probe();
    }
    const Observation obs = d.step(Action::done());
    d.agent().observe(Action::done(), obs);
}

void drive_replay(Driver& d, const Trajectory& source) {
    for (const auto& rec : source.steps) {
        const Observation obs = d.step(rec.action);
        if (obs.digest() != rec.digest) {
            throw UsageError("replay diverged at step " + std::to_string(rec.step) + " (" + rec.action.to_string() +
                             ")");
        }
        d.agent().observe(rec.action, obs);
        d.maybe_probe();
        if (d.session().terminated()) return;
    }
    const Observation obs = d.step(Action::done());
    d.agent().observe(Action::done(), obs);
}

}  // namespace

Trajectory run_condition(Agent& agent, const Codebase& codebase, const RunSpec& spec, TrajectoryWriter* writer) {
    if (spec.session.budget < 1 || spec.session.probe_interval < 1) {
        throw UsageError("budget and probe interval must be at least 1");
    }
    SessionConfig config = spec.session;
    if (spec.condition == Condition::PassiveReplay) {
        if (spec.replay_source == nullptr) throw UsageError("passive-replay needs a source trajectory");
        const auto& src = spec.replay_source->header;
        if (src.codebase_digest != codebase.digest()) {
            throw UsageError("replay source " + src.run_id + " was recorded on a different codebase");
        }
        config.budget = src.budget;
    }

    Driver d(agent, codebase, spec, config, writer);
    try {
        switch (spec.condition) {
            case Condition::Active:
                drive_active(d);
                break;
            case Condition::PassiveFull:
                agent.present_all(codebase.rendered().files);
                d.session().step(Action::done());
                break;
            case Condition::PassiveOracle: {
                auto ranked = connectivity_rank(codebase.ground_truth());
                std::vector<std::string> files;
                for (const auto& f : ranked) {
                    if (static_cast<int>(files.size()) == config.budget) break;
                    if (codebase.is_file(f)) files.push_back(f);
                }
                drive_files(d, files);
                break;
            }
            case Condition::PassiveReplay:
                drive_replay(d, *spec.replay_source);
                break;
        }
        d.finish_probes();
    } catch (const RunFailure& e) {
        return d.close(false, e.what());
    }
    return d.close(true, "");
}

}  // namespace codemap
