#pragma once
// Cognitive maps: the structured belief an agent reports at each probe, the
// repair parser that turns raw probe text into one, and map diffing.

#include <compare>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "codemap/worldmodel.hpp"

namespace codemap {

enum class BeliefStatus { Observed, Inferred, Unknown };

std::string_view to_string(BeliefStatus status);

struct EdgeBelief {
    std::string dst;   // as written (after path normalization)
    std::string type;  // as written, trimmed and uppercased
    double confidence = 0.5;

    bool operator==(const EdgeBelief&) const = default;
};

struct ComponentBelief {
    std::string path;
    BeliefStatus status = BeliefStatus::Unknown;
    std::string purpose;
    std::vector<Export> exports;
    std::vector<EdgeBelief> edges;

    bool operator==(const ComponentBelief&) const = default;
};

struct InvariantBelief {
    std::string type;
    std::string src;
    std::string dst;
    std::string via;
    std::string pattern;
    std::vector<std::string> evidence;

    bool operator==(const InvariantBelief&) const = default;
};

struct CognitiveMap {
    std::vector<ComponentBelief> components;
    std::vector<InvariantBelief> invariants;
    std::vector<std::string> unexplored;
    int probe_step = 0;

    bool operator==(const CognitiveMap&) const = default;
};

// Repair rule names, in the order they are tried.
namespace repair {
inline constexpr std::string_view kFences = "fences";
inline constexpr std::string_view kExtractObject = "extract-object";
inline constexpr std::string_view kTrailingComma = "trailing-comma";
inline constexpr std::string_view kSingleQuotes = "single-quotes";
inline constexpr std::string_view kConfidenceVerbal = "confidence-verbal";
inline constexpr std::string_view kConfidenceString = "confidence-string";
inline constexpr std::string_view kConfidenceClamp = "confidence-clamp";
inline constexpr std::string_view kConfidenceDefault = "confidence-default";
inline constexpr std::string_view kStatusDefault = "status-default";
inline constexpr std::string_view kFieldDefaults = "field-defaults";
inline constexpr std::string_view kMergeDuplicates = "merge-duplicates";
}  // namespace repair

struct ParseReport {
    std::vector<std::string> repairs;  // each rule at most once, in application order
    std::vector<std::string> dropped;  // fragments that could not be used
    bool success = false;

    bool operator==(const ParseReport&) const = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::string raw) : std::runtime_error(message), raw_(std::move(raw)) {}
    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

std::pair<CognitiveMap, ParseReport> parse_probe(std::string_view text);

// Lowercase, '/' separators, no leading "./" or "/", no doubled slashes.
// A trailing '/' is kept so directory-level targets stay recognizable.
std::string normalize_belief_path(std::string_view path);

// Schema-conformant serialization; parse_probe(dump_map(m)) == m with no repairs
// whenever m is already normalized.
nlohmann::json to_json(const CognitiveMap& map);
std::string dump_map(const CognitiveMap& map);

struct EdgeTriple {
    std::string src;
    std::string dst;
    std::string type;

    auto operator<=>(const EdgeTriple&) const = default;
};

// Sorted, duplicate-free.
std::vector<EdgeTriple> extract_edges(const CognitiveMap& map);

// One confidence per distinct triple: the highest stated for it.
std::vector<std::pair<EdgeTriple, double>> edge_confidences(const CognitiveMap& map);

EdgeTriple to_triple(const DepEdge& edge);

struct MapDiff {
    std::size_t lost_correct_edges = 0;
    std::size_t gained_correct_edges = 0;
    std::size_t lost_components = 0;

    bool operator==(const MapDiff&) const = default;
};

// Correct edges are strict matches against gt; correct components are paths in V.
MapDiff diff_maps(const CognitiveMap& prev, const CognitiveMap& next, const GroundTruth& gt);

}  // namespace codemap
