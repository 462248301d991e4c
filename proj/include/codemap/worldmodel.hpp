#pragma once
// Ground-truth architecture of a generated codebase.
//
// Module identity is the path relative to the package root
// (e.g. "stages/mod_a.py"). Every other component speaks in these paths.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace codemap {

inline constexpr int kGroundTruthSchemaVersion = 1;

enum class EdgeType { Imports, CallsApi, DataFlowsTo, RegistryWires };

inline constexpr std::array<EdgeType, 4> kEdgeTypes = {
    EdgeType::Imports, EdgeType::CallsApi, EdgeType::DataFlowsTo, EdgeType::RegistryWires};

std::string_view to_string(EdgeType type);
// Exact uppercase name only; anything else is not an edge type.
std::optional<EdgeType> parse_edge_type(std::string_view name);

struct DepEdge {
    std::string src;
    std::string dst;
    EdgeType type = EdgeType::Imports;

    auto operator<=>(const DepEdge&) const = default;
};

enum class ConstraintType { Boundary, Dataflow, Interface, Invariant, Purpose };

inline constexpr std::array<ConstraintType, 5> kConstraintTypes = {
    ConstraintType::Boundary, ConstraintType::Dataflow, ConstraintType::Interface,
    ConstraintType::Invariant, ConstraintType::Purpose};

std::string_view to_string(ConstraintType type);
std::optional<ConstraintType> parse_constraint_type(std::string_view name);

enum class EvidenceKind { Test, Structure, Doc };

std::string_view to_string(EvidenceKind kind);
std::optional<EvidenceKind> parse_evidence_kind(std::string_view name);

struct Evidence {
    EvidenceKind kind = EvidenceKind::Doc;
    std::string locator;

    bool operator==(const Evidence&) const = default;
};

// Canonical 5-tuple plus where the rule can be found in the tree.
struct Constraint {
    ConstraintType type = ConstraintType::Boundary;
    std::string src;
    std::string dst;
    std::string via;
    std::string pattern;
    std::vector<Evidence> evidence;

    bool operator==(const Constraint&) const = default;
};

enum class ModuleRole {
    Infrastructure,
    Stage,
    Adapter,
    Middleware,
    Utility,
    Distractor,
    Orchestrator,
    ConfigData,
    Test
};

std::string_view to_string(ModuleRole role);
std::optional<ModuleRole> parse_module_role(std::string_view name);

struct Export {
    std::string symbol;
    std::string signature;

    bool operator==(const Export&) const = default;
};

struct ModuleSpec {
    std::string path;
    ModuleRole role = ModuleRole::Infrastructure;
    std::string purpose;
    std::vector<Export> exports;

    bool operator==(const ModuleSpec&) const = default;
};

enum class Domain { DataEtl, LogProcessing, TextProcessing };

inline constexpr std::array<Domain, 3> kDomains = {
    Domain::DataEtl, Domain::LogProcessing, Domain::TextProcessing};

std::string_view to_string(Domain domain);
std::optional<Domain> parse_domain(std::string_view name);

enum class Complexity { Medium };

std::string_view to_string(Complexity complexity);
std::optional<Complexity> parse_complexity(std::string_view name);

struct Manifest {
    std::uint64_t seed = 0;
    Domain domain = Domain::TextProcessing;
    Complexity complexity = Complexity::Medium;
    std::string root;  // package directory name, e.g. "text_processor"

    bool operator==(const Manifest&) const = default;
};

struct GroundTruth {
    Manifest manifest;
    std::vector<ModuleSpec> modules;
    std::vector<DepEdge> edges;
    std::vector<Constraint> constraints;

    bool operator==(const GroundTruth&) const = default;

    const ModuleSpec* find_module(std::string_view path) const;
    bool has_module(std::string_view path) const { return find_module(path) != nullptr; }
    std::size_t count_edges(EdgeType type) const;
};

// Raised for unreadable, malformed or inconsistent ground-truth documents.
// `field` is a JSON-pointer-like location ("edges[3].dst"); `line` is 1-based
// when the failure comes from the JSON syntax itself, 0 otherwise.
class GroundTruthError : public std::runtime_error {
public:
    GroundTruthError(std::string message, std::string field, std::size_t line = 0);

    const std::string& field() const { return field_; }
    std::size_t line() const { return line_; }

private:
    std::string field_;
    std::size_t line_;
};

// Throws GroundTruthError on the first violated invariant.
void validate(const GroundTruth& gt);

nlohmann::json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& doc);

std::string dump_ground_truth(const GroundTruth& gt);
GroundTruth parse_ground_truth(std::string_view text);

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

// Modules by descending total degree over all edge types, ties by path.
// Config-data and test modules without any edge go to the tail.
std::vector<std::string> connectivity_rank(const GroundTruth& gt);

// True for paths that name a source file ("x.py", "pipeline_config.json").
bool is_file_path(std::string_view path);

}  // namespace codemap
