#include "codemap/belief.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>

namespace codemap {

using nlohmann::json;

namespace {

std::string trim_copy(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

class Repairs {
public:
    explicit Repairs(ParseReport& report) : report_(report) {}

    void note(std::string_view rule) {
        if (std::find(report_.repairs.begin(), report_.repairs.end(), rule) == report_.repairs.end()) {
            report_.repairs.emplace_back(rule);
        }
    }
    void drop(std::string what) { report_.dropped.push_back(std::move(what)); }

private:
    ParseReport& report_;
};

std::string strip_fences(std::string_view text, bool& changed) {
    std::string out;
    std::size_t pos = 0;
    changed = false;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        const bool last = nl == std::string_view::npos;
        if (last) nl = text.size();
        const auto line = text.substr(pos, nl - pos);
        if (trim_copy(line).starts_with("```")) {
            changed = true;
        } else {
            out.append(line);
            if (!last) out.push_back('\n');
        }
        pos = nl + 1;
    }
    return out;
}

// Largest balanced {...} span. Quotes are tracked only inside braces so that
// apostrophes in surrounding prose do not confuse the scan.
std::optional<std::pair<std::size_t, std::size_t>> largest_object(std::string_view text) {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    int depth = 0;
    std::size_t start = 0;
    char quote = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quote != 0) {
            if (c == '\\') {
                ++i;
            } else if (c == quote) {
                quote = 0;
            }
            continue;
        }
        if (depth > 0 && (c == '"' || c == '\'')) {
            quote = c;
        } else if (c == '{') {
            if (depth == 0) start = i;
            ++depth;
        } else if (c == '}' && depth > 0) {
            if (--depth == 0) {
                const std::size_t len = i + 1 - start;
                if (!best || len > best->second) best = std::make_pair(start, len);
            }
        }
    }
    return best;
}

std::string remove_trailing_commas(std::string_view text, bool& changed) {
    std::string out;
    char quote = 0;
    changed = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quote != 0) {
            out.push_back(c);
            if (c == '\\' && i + 1 < text.size()) {
                out.push_back(text[++i]);
            } else if (c == quote) {
                quote = 0;
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == ',') {
            std::size_t j = i + 1;
            while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j < text.size() && (text[j] == '}' || text[j] == ']')) {
                changed = true;
                continue;
            }
        }
        out.push_back(c);
    }
    return out;
}

std::string convert_single_quotes(std::string_view text, bool& changed) {
    std::string out;
    changed = false;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '"') {
            // copy a double-quoted string untouched
            out.push_back(c);
            ++i;
            while (i < text.size()) {
                out.push_back(text[i]);
                if (text[i] == '\\' && i + 1 < text.size()) {
                    out.push_back(text[++i]);
                } else if (text[i] == '"') {
                    break;
                }
                ++i;
            }
            ++i;
            continue;
        }
        if (c == '\'') {
            changed = true;
            out.push_back('"');
            ++i;
            while (i < text.size() && text[i] != '\'') {
                if (text[i] == '\\' && i + 1 < text.size()) {
                    if (text[i + 1] == '\'') {
                        out.push_back('\'');
                    } else {
                        out.push_back('\\');
                        out.push_back(text[i + 1]);
                    }
                    i += 2;
                    continue;
                }
                if (text[i] == '"') out.push_back('\\');
                out.push_back(text[i]);
                ++i;
            }
            out.push_back('"');
            ++i;
            continue;
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

// String field: missing or null -> "" (logged); numbers and bools are printed.
std::string text_field(const json& obj, const char* key, Repairs& log) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        log.note(repair::kFieldDefaults);
        return "";
    }
    if (it->is_string()) return it->get<std::string>();
    log.note(repair::kFieldDefaults);
    return it->dump();
}

double confidence_of(const json& edge, Repairs& log) {
    auto it = edge.find("confidence");
    if (it == edge.end() || it->is_null()) {
        log.note(repair::kConfidenceDefault);
        return 0.5;
    }
    double value = 0.5;
    if (it->is_number()) {
        value = it->get<double>();
    } else if (it->is_string()) {
        const std::string s = lower(trim_copy(it->get<std::string>()));
        if (s == "high") {
            log.note(repair::kConfidenceVerbal);
            return 0.9;
        }
        if (s == "medium") {
            log.note(repair::kConfidenceVerbal);
            return 0.6;
        }
        if (s == "low") {
            log.note(repair::kConfidenceVerbal);
            return 0.3;
        }
        double parsed = 0.0;
        auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), parsed);
        if (ec == std::errc() && end == s.data() + s.size() && !s.empty()) {
            log.note(repair::kConfidenceString);
            value = parsed;
        } else {
            log.note(repair::kConfidenceDefault);
            return 0.5;
        }
    } else {
        log.note(repair::kConfidenceDefault);
        return 0.5;
    }
    if (!(value >= 0.0 && value <= 1.0)) {
        log.note(repair::kConfidenceClamp);
        value = value > 1.0 ? 1.0 : 0.0;  // NaN lands on 0
    }
    return value;
}

json array_field(const json& obj, const char* key, Repairs& log) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        log.note(repair::kFieldDefaults);
        return json::array();
    }
    if (it->is_array()) return *it;
    log.note(repair::kFieldDefaults);
    return json::array({*it});
}

std::vector<std::string> string_list(const json& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        if (item.is_string()) {
            out.push_back(item.get<std::string>());
        } else if (item.is_object() && item.contains("locator") && item["locator"].is_string()) {
            out.push_back(item["locator"].get<std::string>());
        } else {
            out.push_back(item.dump());
        }
    }
    return out;
}

ComponentBelief component_from(const json& obj, Repairs& log) {
    ComponentBelief c;
    c.path = normalize_belief_path(text_field(obj, "path", log));
    auto st = obj.find("status");
    const std::string status = st != obj.end() && st->is_string() ? lower(trim_copy(st->get<std::string>())) : "";
    if (status == "observed") {
        c.status = BeliefStatus::Observed;
    } else if (status == "inferred") {
        c.status = BeliefStatus::Inferred;
    } else if (status == "unknown") {
        c.status = BeliefStatus::Unknown;
    } else {
        log.note(repair::kStatusDefault);
        c.status = BeliefStatus::Unknown;
    }
    c.purpose = text_field(obj, "purpose", log);
    for (const auto& ex : array_field(obj, "exports", log)) {
        if (ex.is_string()) {
            c.exports.push_back({ex.get<std::string>(), ""});
        } else if (ex.is_object()) {
            c.exports.push_back({text_field(ex, "symbol", log), text_field(ex, "signature", log)});
        } else {
            log.drop("export: " + ex.dump());
        }
    }
    for (const auto& e : array_field(obj, "edges", log)) {
        if (!e.is_object() || !e.contains("dst") || !e["dst"].is_string()) {
            log.drop("edge without dst in " + c.path + ": " + e.dump());
            continue;
        }
        EdgeBelief edge;
        edge.dst = normalize_belief_path(e["dst"].get<std::string>());
        edge.type = upper(trim_copy(text_field(e, "type", log)));
        edge.confidence = confidence_of(e, log);
        c.edges.push_back(std::move(edge));
    }
    return c;
}

InvariantBelief invariant_from(const json& obj, Repairs& log) {
    InvariantBelief inv;
    inv.type = upper(trim_copy(text_field(obj, "type", log)));
    inv.src = normalize_belief_path(text_field(obj, "src", log));
    inv.dst = normalize_belief_path(text_field(obj, "dst", log));
    inv.via = trim_copy(text_field(obj, "via", log));
    inv.pattern = text_field(obj, "pattern", log);
    inv.evidence = string_list(array_field(obj, "evidence", log));
    return inv;
}

void merge_into(ComponentBelief& into, ComponentBelief&& from) {
    if (into.purpose.empty()) into.purpose = std::move(from.purpose);
    for (auto& ex : from.exports) {
        const bool known = std::any_of(into.exports.begin(), into.exports.end(),
                                       [&](const Export& e) { return e.symbol == ex.symbol; });
        if (!known) into.exports.push_back(std::move(ex));
    }
    for (auto& e : from.edges) {
        if (std::find(into.edges.begin(), into.edges.end(), e) == into.edges.end()) into.edges.push_back(std::move(e));
    }
}

}  // namespace

std::string_view to_string(BeliefStatus status) {
    switch (status) {
        case BeliefStatus::Observed: return "observed";
        case BeliefStatus::Inferred: return "inferred";
        case BeliefStatus::Unknown: return "unknown";
    }
    return "unknown";
}

std::string normalize_belief_path(std::string_view path) {
    std::string p = lower(trim_copy(path));
    std::replace(p.begin(), p.end(), '\\', '/');
    std::string out;
    for (char c : p) {
        if (c == '/' && !out.empty() && out.back() == '/') continue;
        out.push_back(c);
    }
    while (out.starts_with("./")) out.erase(0, 2);
    while (out.starts_with("/")) out.erase(0, 1);
    return out;
}

std::pair<CognitiveMap, ParseReport> parse_probe(std::string_view text) {
    ParseReport report;
    Repairs log(report);
    const std::string raw(text);

    bool changed = false;
    std::string work = strip_fences(text, changed);
    if (changed) log.note(repair::kFences);

    auto span = largest_object(work);
    if (!span) {
        throw ParseError("no balanced JSON object in probe response", raw);
    }
    {
        const std::string before = trim_copy(std::string_view(work).substr(0, span->first));
        const std::string after = trim_copy(std::string_view(work).substr(span->first + span->second));
        if (!before.empty() || !after.empty()) {
            log.note(repair::kExtractObject);
            if (!before.empty()) log.drop("leading text: " + before);
            if (!after.empty()) log.drop("trailing text: " + after);
        }
        work = work.substr(span->first, span->second);
    }

    work = remove_trailing_commas(work, changed);
    if (changed) log.note(repair::kTrailingComma);
    work = convert_single_quotes(work, changed);
    if (changed) log.note(repair::kSingleQuotes);

    json doc;
    try {
        doc = json::parse(work);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("probe response is not valid JSON after repair: ") + e.what(), raw);
    }
    if (!doc.is_object()) {
        throw ParseError("probe response is not a JSON object", raw);
    }

    CognitiveMap map;
    std::map<std::string, std::size_t> index;
    for (const auto& item : array_field(doc, "components", log)) {
        if (!item.is_object()) {
            log.drop("component: " + item.dump());
            continue;
        }
        ComponentBelief c = component_from(item, log);
        if (c.path.empty()) {
            log.drop("component without path: " + item.dump());
            continue;
        }
        auto [it, fresh] = index.emplace(c.path, map.components.size());
        if (fresh) {
            map.components.push_back(std::move(c));
        } else {
            log.note(repair::kMergeDuplicates);
            merge_into(map.components[it->second], std::move(c));
        }
    }
    for (const auto& item : array_field(doc, "invariants", log)) {
        if (!item.is_object()) {
            log.drop("invariant: " + item.dump());
            continue;
        }
        map.invariants.push_back(invariant_from(item, log));
    }
    map.unexplored = string_list(array_field(doc, "unexplored", log));
    report.success = true;
    return {std::move(map), std::move(report)};
}

json to_json(const CognitiveMap& map) {
    json components = json::array();
    for (const auto& c : map.components) {
        json exports = json::array();
        for (const auto& e : c.exports) exports.push_back({{"symbol", e.symbol}, {"signature", e.signature}});
        json edges = json::array();
        for (const auto& e : c.edges) edges.push_back({{"dst", e.dst}, {"type", e.type}, {"confidence", e.confidence}});
        components.push_back({{"path", c.path},
                              {"status", to_string(c.status)},
                              {"purpose", c.purpose},
                              {"exports", exports},
                              {"edges", edges}});
    }
    json invariants = json::array();
    for (const auto& inv : map.invariants) {
        invariants.push_back({{"type", inv.type},
                              {"src", inv.src},
                              {"dst", inv.dst},
                              {"via", inv.via},
                              {"pattern", inv.pattern},
                              {"evidence", inv.evidence}});
    }
    return {{"components", components}, {"invariants", invariants}, {"unexplored", map.unexplored}};
}

std::string dump_map(const CognitiveMap& map) { return to_json(map).dump(); }

std::vector<EdgeTriple> extract_edges(const CognitiveMap& map) {
    std::set<EdgeTriple> out;
    for (const auto& c : map.components) {
        for (const auto& e : c.edges) out.insert({c.path, e.dst, e.type});
    }
    return {out.begin(), out.end()};
}

std::vector<std::pair<EdgeTriple, double>> edge_confidences(const CognitiveMap& map) {
    std::map<EdgeTriple, double> best;
    for (const auto& c : map.components) {
        for (const auto& e : c.edges) {
            auto [it, fresh] = best.emplace(EdgeTriple{c.path, e.dst, e.type}, e.confidence);
            if (!fresh) it->second = std::max(it->second, e.confidence);
        }
    }
    return {best.begin(), best.end()};
}

EdgeTriple to_triple(const DepEdge& edge) { return {edge.src, edge.dst, std::string(to_string(edge.type))}; }

MapDiff diff_maps(const CognitiveMap& prev, const CognitiveMap& next, const GroundTruth& gt) {
    std::set<EdgeTriple> truth;
    for (const auto& e : gt.edges) truth.insert(to_triple(e));
    auto correct_edges = [&](const CognitiveMap& m) {
        std::set<EdgeTriple> out;
        for (auto& t : extract_edges(m)) {
            if (truth.count(t)) out.insert(t);
        }
        return out;
    };
    auto correct_components = [&](const CognitiveMap& m) {
        std::set<std::string> out;
        for (const auto& c : m.components) {
            if (gt.has_module(c.path)) out.insert(c.path);
        }
        return out;
    };
    const auto pe = correct_edges(prev);
    const auto ne = correct_edges(next);
    const auto pc = correct_components(prev);
    const auto nc = correct_components(next);
    MapDiff d;
    for (const auto& t : pe) d.lost_correct_edges += ne.count(t) == 0;
    for (const auto& t : ne) d.gained_correct_edges += pe.count(t) == 0;
    for (const auto& c : pc) d.lost_components += nc.count(c) == 0;
    return d;
}

}  // namespace codemap
