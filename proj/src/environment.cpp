#include "codemap/environment.hpp"

#include <algorithm>
#include <array>

#include <openssl/evp.h>

#include "codemap/pysource.hpp"

namespace codemap {

std::string_view to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::List: return "LIST";
        case ActionKind::Open: return "OPEN";
        case ActionKind::Search: return "SEARCH";
        case ActionKind::Inspect: return "INSPECT";
        case ActionKind::Done: return "DONE";
        case ActionKind::Invalid: return "INVALID";
    }
    return "INVALID";
}

std::string_view to_string(ObsStatus status) {
    switch (status) {
        case ObsStatus::Ok: return "ok";
        case ObsStatus::NotFound: return "not_found";
        case ObsStatus::Invalid: return "invalid";
        case ObsStatus::Terminal: return "terminal";
    }
    return "invalid";
}

std::string Action::to_string() const {
    switch (kind) {
        case ActionKind::Done: return "DONE";
        case ActionKind::Inspect: return "INSPECT(" + target + ", " + symbol + ")";
        default: return std::string(codemap::to_string(kind)) + "(" + target + ")";
    }
}

Action action_from_string(std::string_view text) {
    if (text == "DONE") {
        return Action::done();
    }
    const auto open = text.find('(');
    if (open == std::string_view::npos || !text.ends_with(")")) {
        return Action::invalid(std::string(text));
    }
    const auto verb = text.substr(0, open);
    const std::string arg(text.substr(open + 1, text.size() - open - 2));
    if (verb == "LIST") return Action::list(arg);
    if (verb == "OPEN") return Action::open(arg);
    if (verb == "SEARCH") return Action::search(arg);
    if (verb == "INVALID") return Action::invalid(arg);
    if (verb == "INSPECT") {
        const auto comma = arg.rfind(", ");
        if (comma == std::string::npos) return Action::invalid(std::string(text));
        return Action::inspect(arg.substr(0, comma), arg.substr(comma + 2));
    }
    return Action::invalid(std::string(text));
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xF]);
    }
    return out;
}

std::string Observation::render() const {
    switch (status) {
        case ObsStatus::NotFound: return "NOT_FOUND: " + source;
        case ObsStatus::Invalid: return "INVALID: " + text;
        case ObsStatus::Terminal: return "DONE";
        case ObsStatus::Ok: break;
    }
    std::string out;
    switch (kind) {
        case ActionKind::List:
            if (entries.empty()) return "(empty)";
            for (const auto& e : entries) out += e + "\n";
            return out;
        case ActionKind::Search:
            if (hits.empty()) return "(no matches)";
            for (const auto& h : hits) out += h.path + ":" + std::to_string(h.line) + "\n";
            return out;
        default: return text;
    }
}

std::string Observation::digest() const { return sha256_hex(render()); }

std::string normalize_repo_path(std::string_view path) {
    std::string p(path);
    std::replace(p.begin(), p.end(), '\\', '/');
    std::string out;
    std::size_t pos = 0;
    while (pos <= p.size()) {
        auto slash = p.find('/', pos);
        if (slash == std::string::npos) slash = p.size();
        const std::string part = p.substr(pos, slash - pos);
        if (!part.empty() && part != ".") {
            if (!out.empty()) out.push_back('/');
            out += part;
        }
        pos = slash + 1;
    }
    return out;
}

Codebase::Codebase(RenderedCodebase rendered) : rendered_(std::move(rendered)) {
    std::string all;
    for (const auto& f : rendered_.files) {
        files_.emplace(f.path, &f.text);
        all += f.path;
        all.push_back('\0');
        all += f.text;
        all.push_back('\0');
        std::string dir = f.path;
        while (true) {
            const auto slash = dir.rfind('/');
            if (slash == std::string::npos) break;
            dir.erase(slash);
            dirs_.insert(dir);
        }
    }
    dirs_.insert("");
    digest_ = sha256_hex(all);
}

bool Codebase::is_file(std::string_view path) const { return files_.find(path) != files_.end(); }

bool Codebase::is_dir(std::string_view path) const { return dirs_.find(path) != dirs_.end(); }

const std::string* Codebase::read(std::string_view path) const {
    auto it = files_.find(path);
    return it == files_.end() ? nullptr : it->second;
}

std::vector<std::string> Codebase::list(std::string_view dir) const {
    if (!is_dir(dir)) {
        throw UsageError("not a directory: " + std::string(dir));
    }
    const std::string prefix = dir.empty() ? "" : std::string(dir) + "/";
    std::set<std::string> names;
    for (const auto& [path, text] : files_) {
        if (!path.starts_with(prefix)) continue;
        const std::string rest = path.substr(prefix.size());
        const auto slash = rest.find('/');
        names.insert(slash == std::string::npos ? rest : rest.substr(0, slash + 1));
    }
    return {names.begin(), names.end()};
}

std::vector<std::string> Codebase::files() const {
    std::vector<std::string> out;
    for (const auto& [path, text] : files_) out.push_back(path);
    return out;
}

std::vector<SearchHit> search(const Codebase& codebase, std::string_view query) {
    if (query.empty()) {
        throw UsageError("empty search query");
    }
    std::vector<SearchHit> hits;
    for (const auto& f : codebase.rendered().files) {
        const auto lines = split_lines(f.text);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].find(query) != std::string_view::npos) {
                hits.push_back({f.path, i + 1});
            }
        }
    }
    std::sort(hits.begin(), hits.end());
    return hits;
}

std::optional<std::string> inspect(const Codebase& codebase, std::string_view file, std::string_view symbol) {
    const std::string* text = codebase.read(file);
    if (text == nullptr || !file.ends_with(".py")) {
        return std::nullopt;
    }
    for (const auto& def : top_level_definitions(*text)) {
        if (def.name == symbol) {
            return def.text;
        }
    }
    return std::nullopt;
}

Session::Session(const Codebase& codebase, SessionConfig config) : codebase_(&codebase), config_(config) {
    if (config_.budget < 1 || config_.probe_interval < 1) {
        throw UsageError("budget and probe interval must be at least 1");
    }
}

Observation Session::make(ActionKind kind, ObsStatus status) const {
    Observation obs;
    obs.kind = kind;
    obs.status = status;
    return obs;
}

Observation Session::step(const Action& action) {
    if (terminated_) {
        throw UsageError("session already terminated");
    }
    if (action.kind != ActionKind::Done && exhausted()) {
        throw UsageError("budget exhausted; only DONE is accepted");
    }

    Observation obs = make(action.kind, ObsStatus::Ok);
    switch (action.kind) {
        case ActionKind::Done:
            obs.status = ObsStatus::Terminal;
            terminated_ = true;
            break;
        case ActionKind::List: {
            const std::string dir = normalize_repo_path(action.target);
            obs.source = dir;
            if (codebase_->is_dir(dir)) {
                obs.entries = codebase_->list(dir);
            } else {
                obs.status = ObsStatus::NotFound;
                obs.source = action.target;
            }
            break;
        }
        case ActionKind::Open: {
            const std::string path = normalize_repo_path(action.target);
            if (const std::string* text = codebase_->read(path)) {
                obs.text = *text;
                obs.source = path;
                opened_.insert(path);
                ++opens_;
            } else {
                obs.status = ObsStatus::NotFound;
                obs.source = action.target;
            }
            break;
        }
        case ActionKind::Search:
            if (action.target.empty()) {
                obs.status = ObsStatus::Invalid;
                obs.text = "SEARCH()";
                ++invalid_actions_;
            } else {
                obs.hits = search(*codebase_, action.target);
            }
            break;
        case ActionKind::Inspect: {
            const std::string path = normalize_repo_path(action.target);
            if (auto text = inspect(*codebase_, path, action.symbol)) {
                obs.text = *text;
                obs.source = path;
            } else {
                obs.status = ObsStatus::NotFound;
                obs.source = action.target + "::" + action.symbol;
            }
            break;
        }
        case ActionKind::Invalid:
            obs.status = ObsStatus::Invalid;
            obs.text = action.target;
            ++invalid_actions_;
            break;
    }
    if (action.costs_budget()) {
        ++actions_taken_;
    }
    obs.budget_remaining = budget_remaining();
    log_.push_back({action, obs});
    return obs;
}

bool Session::probe_due() const {
    if (actions_taken_ == 0 || actions_taken_ % config_.probe_interval != 0) {
        return false;
    }
    return probes_.empty() || probes_.back().actions != actions_taken_;
}

bool Session::final_probe_due() const {
    return terminated_ && (probes_.empty() || probes_.back().actions != actions_taken_);
}

void Session::record_probe(bool final) {
    if (!probes_.empty() && probes_.back().actions == actions_taken_) {
        // The closing probe coincides with a periodic one: mark it final.
        if (final) {
            probes_.back().final = true;
            return;
        }
        throw UsageError("probe already issued at this action count");
    }
    probes_.push_back({actions_taken_, opens_, final});
}

}  // namespace codemap
