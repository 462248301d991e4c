#pragma once
// Procedural generator for Pipeline-architecture Python codebases.
//
// generate() is a pure function of (seed, complexity, domain): the same
// inputs always produce byte-identical files and ground truth.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "codemap/rng.hpp"
#include "codemap/worldmodel.hpp"

namespace codemap {

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StageDef {
    std::string name;         // config name, e.g. "normalize"
    std::string class_name;   // e.g. "Normalizer"
    std::string description;  // one-line purpose
    std::string transform;    // Python expression over `text` used when no helper is wired
};

// Eight semantically coherent stages per domain, in natural pipeline order.
const std::vector<StageDef>& stage_pool(Domain domain);

std::string package_name(Domain domain);

struct StagePlan {
    StageDef def;
    std::string path;          // "stages/mod_c.py"
    std::string util_module;   // "" or the utils module the stage calls into
    std::string util_function;
    bool raises_stage_error = false;
};

struct AdapterPlan {
    std::string path;
    std::string class_name;
    std::string kind;        // config key: "retry" or "trace"
    std::string middleware;  // middleware module path it delegates to
    std::string middleware_function;
};

struct MiddlewarePlan {
    std::string path;
    std::string kind;  // "logging" or "retry"
};

struct PipelineTemplate {
    std::uint64_t seed = 0;
    Domain domain = Domain::TextProcessing;
    Complexity complexity = Complexity::Medium;
    std::string root;
    std::vector<StagePlan> stages;  // pipeline order
    std::vector<AdapterPlan> adapters;
    std::vector<MiddlewarePlan> middleware;
    std::vector<std::string> utils;
    std::vector<std::string> legacy;
    std::map<std::string, std::string> adapted;  // stage name -> adapter kind

    std::vector<std::string> subpackages() const;
    const MiddlewarePlan& middleware_of_kind(const std::string& kind) const;
    const AdapterPlan& adapter_of_kind(const std::string& kind) const;
};

// Draws the concrete template: stage subset, neutral letters, legacy set.
PipelineTemplate instantiate_template(std::uint64_t seed, Complexity complexity, std::optional<Domain> domain);

struct ImportPlan {
    std::string dst;                   // module path
    std::vector<std::string> symbols;  // names pulled in by "from x import a, b"
};

struct CallPlan {
    std::string dst;
    std::string function;
    bool hinted = false;  // docstring of the calling function names the callee
};

// Every planned edge together with the channel that realizes it in text.
struct EdgePlan {
    std::map<std::string, std::vector<ImportPlan>> imports;  // src -> ordered imports
    std::map<std::string, std::vector<CallPlan>> calls;      // src -> calls
    std::vector<DepEdge> registry_wires;
    std::vector<DepEdge> data_flows;
    std::vector<bool> data_flow_hinted;  // parallel to data_flows

    std::vector<DepEdge> edges() const;
};

// Also fixes each stage's utility dependency inside `tpl`.
EdgePlan plant_edges(PipelineTemplate& tpl, Rng& rng);
std::vector<Constraint> plant_constraints(const PipelineTemplate& tpl, const EdgePlan& plan, Rng& rng);

struct SourceFile {
    std::string path;  // relative to the package root
    std::string text;

    bool operator==(const SourceFile&) const = default;
};

struct RenderedCodebase {
    std::string root;
    std::vector<SourceFile> files;  // sorted by path
    GroundTruth ground_truth;

    const SourceFile* find(std::string_view path) const;
};

RenderedCodebase generate(std::uint64_t seed, Complexity complexity = Complexity::Medium,
                          std::optional<Domain> domain = std::nullopt);

struct GenerationStats {
    std::size_t modules = 0;
    std::size_t subpackages = 0;
    std::size_t constraints = 0;
    std::size_t edges = 0;
    std::map<EdgeType, std::size_t> by_type;

    double fraction(EdgeType type) const;
};

GenerationStats statistics(const RenderedCodebase& codebase);

// Writes <dir>/<root>/... plus <dir>/ground_truth.json.
void write_codebase(const RenderedCodebase& codebase, const std::filesystem::path& dir);
RenderedCodebase read_codebase(const std::filesystem::path& dir);

}  // namespace codemap
