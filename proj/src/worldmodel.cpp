#include "codemap/worldmodel.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace codemap {

using nlohmann::json;

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view name, const std::array<std::pair<Enum, std::string_view>, N>& table) {
    for (const auto& [value, text] : table) {
        if (text == name) {
            return value;
        }
    }
    return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum value, const std::array<std::pair<Enum, std::string_view>, N>& table) {
    for (const auto& [v, text] : table) {
        if (v == value) {
            return text;
        }
    }
    return "?";
}

constexpr std::array<std::pair<EdgeType, std::string_view>, 4> kEdgeNames = {{
    {EdgeType::Imports, "IMPORTS"},
    {EdgeType::CallsApi, "CALLS_API"},
    {EdgeType::DataFlowsTo, "DATA_FLOWS_TO"},
    {EdgeType::RegistryWires, "REGISTRY_WIRES"},
}};

constexpr std::array<std::pair<ConstraintType, std::string_view>, 5> kConstraintNames = {{
    {ConstraintType::Boundary, "BOUNDARY"},
    {ConstraintType::Dataflow, "DATAFLOW"},
    {ConstraintType::Interface, "INTERFACE"},
    {ConstraintType::Invariant, "INVARIANT"},
    {ConstraintType::Purpose, "PURPOSE"},
}};

constexpr std::array<std::pair<EvidenceKind, std::string_view>, 3> kEvidenceNames = {{
    {EvidenceKind::Test, "test"},
    {EvidenceKind::Structure, "structure"},
    {EvidenceKind::Doc, "doc"},
}};

constexpr std::array<std::pair<ModuleRole, std::string_view>, 9> kRoleNames = {{
    {ModuleRole::Infrastructure, "infrastructure"},
    {ModuleRole::Stage, "stage"},
    {ModuleRole::Adapter, "adapter"},
    {ModuleRole::Middleware, "middleware"},
    {ModuleRole::Utility, "utility"},
    {ModuleRole::Distractor, "distractor"},
    {ModuleRole::Orchestrator, "orchestrator"},
    {ModuleRole::ConfigData, "config-data"},
    {ModuleRole::Test, "test"},
}};

constexpr std::array<std::pair<Domain, std::string_view>, 3> kDomainNames = {{
    {Domain::DataEtl, "data-etl"},
    {Domain::LogProcessing, "log-processing"},
    {Domain::TextProcessing, "text-processing"},
}};

constexpr std::array<std::pair<Complexity, std::string_view>, 1> kComplexityNames = {{
    {Complexity::Medium, "medium"},
}};

// Typed accessors that report the failing field instead of a bare type_error.
const json& member(const json& obj, std::string_view key, const std::string& where) {
    if (!obj.is_object()) {
        throw GroundTruthError(fmt::format("{} is not an object", where), where);
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw GroundTruthError(fmt::format("missing field '{}'", key), fmt::format("{}.{}", where, key));
    }
    return *it;
}

std::string string_field(const json& obj, std::string_view key, const std::string& where) {
    const json& value = member(obj, key, where);
    if (!value.is_string()) {
        throw GroundTruthError(fmt::format("field '{}' must be a string", key), fmt::format("{}.{}", where, key));
    }
    return value.get<std::string>();
}

const json& array_field(const json& obj, std::string_view key, const std::string& where) {
    const json& value = member(obj, key, where);
    if (!value.is_array()) {
        throw GroundTruthError(fmt::format("field '{}' must be an array", key), fmt::format("{}.{}", where, key));
    }
    return value;
}

template <typename Enum>
Enum enum_field(const json& obj, std::string_view key, const std::string& where,
                std::optional<Enum> (*parse)(std::string_view)) {
    std::string text = string_field(obj, key, where);
    auto value = parse(text);
    if (!value) {
        throw GroundTruthError(fmt::format("unknown value '{}' for field '{}'", text, key),
                               fmt::format("{}.{}", where, key));
    }
    return *value;
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

}  // namespace

std::string_view to_string(EdgeType type) { return name_of(type, kEdgeNames); }
std::optional<EdgeType> parse_edge_type(std::string_view name) { return lookup(name, kEdgeNames); }
std::string_view to_string(ConstraintType type) { return name_of(type, kConstraintNames); }
std::optional<ConstraintType> parse_constraint_type(std::string_view name) { return lookup(name, kConstraintNames); }
std::string_view to_string(EvidenceKind kind) { return name_of(kind, kEvidenceNames); }
std::optional<EvidenceKind> parse_evidence_kind(std::string_view name) { return lookup(name, kEvidenceNames); }
std::string_view to_string(ModuleRole role) { return name_of(role, kRoleNames); }
std::optional<ModuleRole> parse_module_role(std::string_view name) { return lookup(name, kRoleNames); }
std::string_view to_string(Domain domain) { return name_of(domain, kDomainNames); }
std::optional<Domain> parse_domain(std::string_view name) { return lookup(name, kDomainNames); }
std::string_view to_string(Complexity complexity) { return name_of(complexity, kComplexityNames); }
std::optional<Complexity> parse_complexity(std::string_view name) { return lookup(name, kComplexityNames); }

GroundTruthError::GroundTruthError(std::string message, std::string field, std::size_t line)
    : std::runtime_error(line > 0 ? fmt::format("line {}: {} ({})", line, message, field)
                                  : fmt::format("{} ({})", message, field)),
      field_(std::move(field)),
      line_(line) {}

const ModuleSpec* GroundTruth::find_module(std::string_view path) const {
    for (const auto& m : modules) {
        if (m.path == path) {
            return &m;
        }
    }
    return nullptr;
}

std::size_t GroundTruth::count_edges(EdgeType type) const {
    return static_cast<std::size_t>(
        std::count_if(edges.begin(), edges.end(), [type](const DepEdge& e) { return e.type == type; }));
}

bool is_file_path(std::string_view path) {
    if (path.empty() || path.back() == '/') {
        return false;
    }
    auto ends_with = [&](std::string_view suffix) {
        return path.size() > suffix.size() && path.substr(path.size() - suffix.size()) == suffix;
    };
    return ends_with(".py") || ends_with(".json");
}

void validate(const GroundTruth& gt) {
    std::set<std::string> paths;
    for (std::size_t i = 0; i < gt.modules.size(); ++i) {
        const auto& m = gt.modules[i];
        const std::string where = fmt::format("modules[{}]", i);
        if (!is_file_path(m.path)) {
            throw GroundTruthError(fmt::format("module path '{}' is not a source file", m.path), where + ".path");
        }
        if (!paths.insert(m.path).second) {
            throw GroundTruthError(fmt::format("duplicate module path '{}'", m.path), where + ".path");
        }
        std::set<std::string> symbols;
        for (std::size_t j = 0; j < m.exports.size(); ++j) {
            if (!symbols.insert(m.exports[j].symbol).second) {
                throw GroundTruthError(
                    fmt::format("duplicate export '{}' in module '{}'", m.exports[j].symbol, m.path),
                    fmt::format("{}.exports[{}].symbol", where, j));
            }
        }
    }

    std::set<DepEdge> seen;
    for (std::size_t i = 0; i < gt.edges.size(); ++i) {
        const auto& e = gt.edges[i];
        const std::string where = fmt::format("edges[{}]", i);
        const std::string label = fmt::format("{} -> {} ({})", e.src, e.dst, to_string(e.type));
        if (!paths.contains(e.src)) {
            throw GroundTruthError(fmt::format("edge {} has source outside the module set", label), where + ".src");
        }
        if (!paths.contains(e.dst)) {
            throw GroundTruthError(fmt::format("edge {} has target outside the module set", label), where + ".dst");
        }
        if (e.src == e.dst) {
            throw GroundTruthError(fmt::format("edge {} is a self loop", label), where);
        }
        if (!seen.insert(e).second) {
            throw GroundTruthError(fmt::format("duplicate edge {}", label), where);
        }
    }

    for (std::size_t i = 0; i < gt.constraints.size(); ++i) {
        const auto& c = gt.constraints[i];
        const std::string where = fmt::format("constraints[{}]", i);
        if (!c.src.empty() && !paths.contains(c.src)) {
            throw GroundTruthError(fmt::format("constraint source '{}' is not a module", c.src), where + ".src");
        }
        if (!c.dst.empty() && !paths.contains(c.dst)) {
            throw GroundTruthError(fmt::format("constraint target '{}' is not a module", c.dst), where + ".dst");
        }
        if (c.evidence.empty()) {
            throw GroundTruthError("constraint has no evidence", where + ".evidence");
        }
    }
}

json to_json(const GroundTruth& gt) {
    json doc;
    doc["schema_version"] = kGroundTruthSchemaVersion;
    doc["manifest"] = {
        {"seed", gt.manifest.seed},
        {"domain", to_string(gt.manifest.domain)},
        {"complexity", to_string(gt.manifest.complexity)},
        {"root", gt.manifest.root},
    };
    json modules = json::array();
    for (const auto& m : gt.modules) {
        json exports = json::array();
        for (const auto& ex : m.exports) {
            exports.push_back({{"symbol", ex.symbol}, {"signature", ex.signature}});
        }
        modules.push_back({{"path", m.path}, {"role", to_string(m.role)}, {"purpose", m.purpose}, {"exports", exports}});
    }
    doc["modules"] = std::move(modules);
    json edges = json::array();
    for (const auto& e : gt.edges) {
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"type", to_string(e.type)}});
    }
    doc["edges"] = std::move(edges);
    json constraints = json::array();
    for (const auto& c : gt.constraints) {
        json evidence = json::array();
        for (const auto& ev : c.evidence) {
            evidence.push_back({{"kind", to_string(ev.kind)}, {"locator", ev.locator}});
        }
        constraints.push_back({{"type", to_string(c.type)},
                               {"src", c.src},
                               {"dst", c.dst},
                               {"via", c.via},
                               {"pattern", c.pattern},
                               {"evidence", evidence}});
    }
    doc["constraints"] = std::move(constraints);
    return doc;
}

GroundTruth ground_truth_from_json(const json& doc) {
    if (!doc.is_object()) {
        throw GroundTruthError("document is not an object", "$");
    }
    const json& version = member(doc, "schema_version", "$");
    if (!version.is_number_integer() || version.get<int>() != kGroundTruthSchemaVersion) {
        throw GroundTruthError(fmt::format("unsupported schema_version {}", version.dump()), "$.schema_version");
    }

    GroundTruth gt;
    const json& manifest = member(doc, "manifest", "$");
    const json& seed = member(manifest, "seed", "manifest");
    if (!seed.is_number_unsigned()) {
        throw GroundTruthError("seed must be a non-negative integer", "manifest.seed");
    }
    gt.manifest.seed = seed.get<std::uint64_t>();
    gt.manifest.domain = enum_field<Domain>(manifest, "domain", "manifest", parse_domain);
    gt.manifest.complexity = enum_field<Complexity>(manifest, "complexity", "manifest", parse_complexity);
    gt.manifest.root = string_field(manifest, "root", "manifest");

    const json& modules = array_field(doc, "modules", "$");
    for (std::size_t i = 0; i < modules.size(); ++i) {
        const std::string where = fmt::format("modules[{}]", i);
        ModuleSpec m;
        m.path = string_field(modules[i], "path", where);
        m.role = enum_field<ModuleRole>(modules[i], "role", where, parse_module_role);
        m.purpose = string_field(modules[i], "purpose", where);
        const json& exports = array_field(modules[i], "exports", where);
        for (std::size_t j = 0; j < exports.size(); ++j) {
            const std::string ew = fmt::format("{}.exports[{}]", where, j);
            m.exports.push_back({string_field(exports[j], "symbol", ew), string_field(exports[j], "signature", ew)});
        }
        gt.modules.push_back(std::move(m));
    }

    const json& edges = array_field(doc, "edges", "$");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string where = fmt::format("edges[{}]", i);
        gt.edges.push_back({string_field(edges[i], "src", where), string_field(edges[i], "dst", where),
                            enum_field<EdgeType>(edges[i], "type", where, parse_edge_type)});
    }

    const json& constraints = array_field(doc, "constraints", "$");
    for (std::size_t i = 0; i < constraints.size(); ++i) {
        const std::string where = fmt::format("constraints[{}]", i);
        const json& c = constraints[i];
        Constraint out;
        out.type = enum_field<ConstraintType>(c, "type", where, parse_constraint_type);
        out.src = string_field(c, "src", where);
        out.dst = string_field(c, "dst", where);
        out.via = string_field(c, "via", where);
        out.pattern = string_field(c, "pattern", where);
        const json& evidence = array_field(c, "evidence", where);
        for (std::size_t j = 0; j < evidence.size(); ++j) {
            const std::string ew = fmt::format("{}.evidence[{}]", where, j);
            out.evidence.push_back({enum_field<EvidenceKind>(evidence[j], "kind", ew, parse_evidence_kind),
                                    string_field(evidence[j], "locator", ew)});
        }
        gt.constraints.push_back(std::move(out));
    }

    validate(gt);
    return gt;
}

std::string dump_ground_truth(const GroundTruth& gt) { return to_json(gt).dump(2) + "\n"; }

GroundTruth parse_ground_truth(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw GroundTruthError(e.what(), "$", line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1));
    }
    return ground_truth_from_json(doc);
}

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw GroundTruthError(fmt::format("cannot open '{}' for writing", path.string()), "$");
    }
    out << dump_ground_truth(gt);
    if (!out) {
        throw GroundTruthError(fmt::format("write to '{}' failed", path.string()), "$");
    }
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw GroundTruthError(fmt::format("cannot open '{}'", path.string()), "$");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_ground_truth(buffer.str());
}

std::vector<std::string> connectivity_rank(const GroundTruth& gt) {
    std::map<std::string, std::size_t> degree;
    for (const auto& m : gt.modules) {
        degree[m.path] = 0;
    }
    for (const auto& e : gt.edges) {
        ++degree[e.src];
        ++degree[e.dst];
    }
    struct Key {
        bool tail;
        std::size_t degree;
        std::string path;
    };
    std::vector<Key> keys;
    keys.reserve(gt.modules.size());
    for (const auto& m : gt.modules) {
        const std::size_t d = degree[m.path];
        const bool passive_role = m.role == ModuleRole::ConfigData || m.role == ModuleRole::Test;
        keys.push_back({passive_role && d == 0, d, m.path});
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        if (a.tail != b.tail) {
            return !a.tail;
        }
        if (a.degree != b.degree) {
            return a.degree > b.degree;
        }
        return a.path < b.path;
    });
    std::vector<std::string> ranked;
    ranked.reserve(keys.size());
    for (auto& k : keys) {
        ranked.push_back(std::move(k.path));
    }
    return ranked;
}

}  // namespace codemap
