#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "support.hpp"

#include "codemap/codegen.hpp"

using namespace codemap;
using namespace testing;

namespace {

GroundTruth small_truth() {
    GroundTruth gt;
    gt.manifest = {7, Domain::DataEtl, Complexity::Medium, "etl_pipeline"};
    for (const char* p : {"base.py", "registry.py", "runner.py", "stages/mod_a.py", "pipeline_config.json"}) {
        gt.modules.push_back({p, ModuleRole::Infrastructure, "purpose of " + std::string(p), {}});
    }
    gt.modules[0].exports.push_back({"StageBase", "class StageBase(ABC)"});
    gt.modules[4].role = ModuleRole::ConfigData;
    gt.edges = {{"stages/mod_a.py", "base.py", EdgeType::Imports},
                {"registry.py", "stages/mod_a.py", EdgeType::RegistryWires},
                {"runner.py", "registry.py", EdgeType::CallsApi}};
    gt.constraints.push_back({ConstraintType::Interface, "runner.py", "stages/mod_a.py", "StageBase", "base only",
                              {{EvidenceKind::Doc, "runner.py:1"}}});
    return gt;
}

// Brute-force rank: repeatedly pull the best remaining module.
std::vector<std::string> ref_rank(const GroundTruth& gt) {
    auto degree = [&](const std::string& p) {
        std::size_t d = 0;
        for (const auto& e : gt.edges) d += (e.src == p) + (e.dst == p);
        return d;
    };
    auto tail = [&](const ModuleSpec& m) {
        return (m.role == ModuleRole::ConfigData || m.role == ModuleRole::Test) && degree(m.path) == 0;
    };
    std::vector<const ModuleSpec*> left;
    for (const auto& m : gt.modules) left.push_back(&m);
    std::vector<std::string> out;
    while (!left.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < left.size(); ++i) {
            const auto& a = *left[i];
            const auto& b = *left[best];
            const bool better = tail(a) != tail(b)       ? !tail(a)
                                : degree(a.path) != degree(b.path) ? degree(a.path) > degree(b.path)
                                                                   : a.path < b.path;
            if (better) best = i;
        }
        out.push_back(left[best]->path);
        left.erase(left.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return out;
}

}  // namespace

TEST_CASE("enum names are exact") {
    for (EdgeType t : kEdgeTypes) CHECK(parse_edge_type(to_string(t)) == t);
    CHECK(to_string(EdgeType::RegistryWires) == "REGISTRY_WIRES");
    CHECK_FALSE(parse_edge_type("imports").has_value());
    for (ConstraintType t : kConstraintTypes) CHECK(parse_constraint_type(to_string(t)) == t);
    CHECK_FALSE(parse_constraint_type("DEPENDENCY").has_value());
    CHECK(parse_complexity("medium") == Complexity::Medium);
    CHECK_FALSE(parse_complexity("huge").has_value());
}

TEST_CASE("ground truth round trips") {
    SUBCASE("no edges") {
        GroundTruth gt = small_truth();
        gt.edges.clear();
        CHECK(parse_ground_truth(dump_ground_truth(gt)) == gt);
    }
    SUBCASE("hand fixture through a file") {
        const auto dir = scratch_dir("worldmodel_rt");
        const auto gt = small_truth();
        save_ground_truth(gt, dir / "ground_truth.json");
        CHECK(load_ground_truth(dir / "ground_truth.json") == gt);
    }
    SUBCASE("generated seeds are bit-exact") {
        for (std::uint64_t seed : {42ULL, 123ULL, 999ULL}) {
            const auto gt = generate(seed).ground_truth;
            const std::string text = dump_ground_truth(gt);
            const auto back = parse_ground_truth(text);
            CHECK(back == gt);
            CHECK(dump_ground_truth(back) == text);
        }
    }
}

TEST_CASE("document carries a schema version") {
    const auto doc = nlohmann::json::parse(dump_ground_truth(small_truth()));
    CHECK(doc["schema_version"] == kGroundTruthSchemaVersion);
    for (const char* key : {"manifest", "modules", "edges", "constraints"}) CHECK(doc.contains(key));
    CHECK(doc["edges"][0]["type"] == "IMPORTS");
}

TEST_CASE("edge endpoint outside V is reported with its field") {
    auto doc = to_json(small_truth());
    doc["edges"][1]["dst"] = "stages/mod_z.py";
    try {
        ground_truth_from_json(doc);
        FAIL("expected GroundTruthError");
    } catch (const GroundTruthError& e) {
        CHECK(e.field() == "edges[1].dst");
        CHECK(std::string(e.what()).find("stages/mod_z.py") != std::string::npos);
    }
}

TEST_CASE("other validation failures") {
    SUBCASE("duplicate edge") {
        auto gt = small_truth();
        gt.edges.push_back(gt.edges[0]);
        CHECK_THROWS_AS(validate(gt), GroundTruthError);
    }
    SUBCASE("constraint endpoint not in V") {
        auto gt = small_truth();
        gt.constraints[0].src = "nowhere.py";
        CHECK_THROWS_AS(validate(gt), GroundTruthError);
    }
    SUBCASE("duplicate export") {
        auto gt = small_truth();
        gt.modules[0].exports.push_back(gt.modules[0].exports[0]);
        CHECK_THROWS_AS(validate(gt), GroundTruthError);
    }
    SUBCASE("unknown edge type") {
        auto doc = to_json(small_truth());
        doc["edges"][0]["type"] = "USES";
        CHECK_THROWS_AS(ground_truth_from_json(doc), GroundTruthError);
    }
    SUBCASE("wrong schema version") {
        auto doc = to_json(small_truth());
        doc["schema_version"] = 99;
        CHECK_THROWS_AS(ground_truth_from_json(doc), GroundTruthError);
    }
}

TEST_CASE("syntax errors carry a line number") {
    const std::string text = "{\n  \"manifest\": {\n    \"seed\": 1,,\n  }\n}\n";
    try {
        parse_ground_truth(text);
        FAIL("expected GroundTruthError");
    } catch (const GroundTruthError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("connectivity rank") {
    SUBCASE("star hub first") {
        GroundTruth gt;
        gt.modules.push_back({"hub.py", ModuleRole::Infrastructure, "", {}});
        for (int i = 0; i < 6; ++i) {
            const std::string leaf = "leaf" + std::to_string(i) + ".py";
            gt.modules.push_back({leaf, ModuleRole::Stage, "", {}});
            gt.edges.push_back({"hub.py", leaf, EdgeType::Imports});
        }
        CHECK(connectivity_rank(gt).front() == "hub.py");
        CHECK(connectivity_rank(gt)[1] == "leaf0.py");
    }
    SUBCASE("empty edge set is lexicographic") {
        GroundTruth gt;
        for (const char* p : {"c.py", "a.py", "b.py"}) gt.modules.push_back({p, ModuleRole::Utility, "", {}});
        CHECK(connectivity_rank(gt) == std::vector<std::string>{"a.py", "b.py", "c.py"});
    }
    SUBCASE("edgeless config and test modules go last") {
        GroundTruth gt;
        gt.modules.push_back({"a_config.json", ModuleRole::ConfigData, "", {}});
        gt.modules.push_back({"z.py", ModuleRole::Utility, "", {}});
        CHECK(connectivity_rank(gt).front() == "z.py");
    }
    SUBCASE("matches the brute-force rank on generated truth") {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto gt = generate(seed).ground_truth;
            const auto rank = connectivity_rank(gt);
            CHECK(rank == ref_rank(gt));
            auto sorted = rank;
            std::sort(sorted.begin(), sorted.end());
            std::vector<std::string> paths;
            for (const auto& m : gt.modules) paths.push_back(m.path);
            std::sort(paths.begin(), paths.end());
            CHECK(sorted == paths);
        }
    }
}

TEST_CASE("edge type counts sum to the edge total") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto gt = generate(seed).ground_truth;
        std::size_t sum = 0;
        for (EdgeType t : kEdgeTypes) sum += gt.count_edges(t);
        CHECK(sum == gt.edges.size());
    }
}
