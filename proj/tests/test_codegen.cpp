#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "support.hpp"

#include <chrono>
#include <set>

#include "codemap/codegen.hpp"
#include "codemap/pysource.hpp"

using namespace codemap;
using namespace testing;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out(1);
    for (char c : s) {
        if (c == sep) {
            out.emplace_back();
        } else {
            out.back().push_back(c);
        }
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::size_t from, std::size_t to, char sep) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        if (!out.empty()) out.push_back(sep);
        out += parts[i];
    }
    return out;
}

// Resolve one import to module files of the tree, by trying the candidate
// spellings in Python's own order.
std::set<std::string> resolve(const PyImport& imp, const std::string& src, const RenderedCodebase& cb) {
    std::vector<std::string> base;
    if (imp.level > 0) {
        auto dir = split(src, '/');
        dir.pop_back();
        for (int i = 1; i < imp.level && !dir.empty(); ++i) dir.pop_back();
        base = dir;
        if (!imp.module.empty()) {
            for (auto& p : split(imp.module, '.')) base.push_back(p);
        }
    } else {
        auto parts = split(imp.module, '.');
        if (parts.front() != cb.root) return {};
        base.assign(parts.begin() + 1, parts.end());
    }
    auto module_file = [&](const std::vector<std::string>& parts) -> std::string {
        const std::string stem = join(parts, 0, parts.size(), '/');
        if (!stem.empty() && cb.find(stem + ".py")) return stem + ".py";
        const std::string pkg = stem.empty() ? "__init__.py" : stem + "/__init__.py";
        if (cb.find(pkg)) return pkg;
        return "";
    };
    std::set<std::string> out;
    if (imp.names.empty()) {
        if (auto f = module_file(base); !f.empty()) out.insert(f);
        return out;
    }
    for (const auto& name : imp.names) {
        auto sub = base;
        sub.push_back(name);
        if (auto f = module_file(sub); !f.empty()) {
            out.insert(f);
        } else if (auto g = module_file(base); !g.empty()) {
            out.insert(g);
        }
    }
    return out;
}

std::set<DepEdge> scanned_imports(const RenderedCodebase& cb) {
    std::set<DepEdge> out;
    for (const auto& f : cb.files) {
        if (!f.path.ends_with(".py")) continue;
        for (const auto& imp : scan_imports(f.text)) {
            for (const auto& dst : resolve(imp, f.path, cb)) {
                if (dst != f.path) out.insert({f.path, dst, EdgeType::Imports});
            }
        }
    }
    return out;
}

std::set<DepEdge> edges_of(const GroundTruth& gt, EdgeType type) {
    std::set<DepEdge> out;
    for (const auto& e : gt.edges) {
        if (e.type == type) out.insert(e);
    }
    return out;
}

std::vector<std::string> config_modules(const RenderedCodebase& cb) {
    const auto doc = nlohmann::json::parse(cb.find("pipeline_config.json")->text);
    std::vector<std::string> out;
    for (const auto& s : doc["stages"]) {
        std::string m = s["module"];
        std::replace(m.begin(), m.end(), '.', '/');
        out.push_back(m + ".py");
    }
    return out;
}

bool is_stage(const GroundTruth& gt, const std::string& path) {
    const auto* m = gt.find_module(path);
    return m && m->role == ModuleRole::Stage;
}

}  // namespace

TEST_CASE("generation is byte-deterministic") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        const auto a = generate(seed);
        const auto b = generate(seed);
        CHECK(a.files == b.files);
        CHECK(dump_ground_truth(a.ground_truth) == dump_ground_truth(b.ground_truth));
    }
    // domain override is part of the input, not noise
    const auto etl = generate(5, Complexity::Medium, Domain::DataEtl);
    CHECK(etl.files == generate(5, Complexity::Medium, Domain::DataEtl).files);
    CHECK(etl.ground_truth.manifest.domain == Domain::DataEtl);
}

TEST_CASE("statistics over ten seeds fall in the target bands") {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        const auto s = statistics(generate(seed));
        CHECK(s.modules >= 24);
        CHECK(s.modules <= 32);
        CHECK(s.subpackages == 5);
        CHECK(s.constraints >= 15);
        CHECK(s.constraints <= 16);
        CHECK(s.fraction(EdgeType::Imports) >= 0.60);
        CHECK(s.fraction(EdgeType::Imports) <= 0.72);
        const double rest = 1.0 - s.fraction(EdgeType::Imports);
        CHECK(rest >= 0.28);
        CHECK(rest <= 0.40);
    }
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(5));
}

TEST_CASE("seed 42 has five sub-packages and 15-16 constraints") {
    const auto cb = generate(42);
    const auto s = statistics(cb);
    CHECK(s.subpackages == 5);
    CHECK(s.constraints >= 15);
    CHECK(s.constraints <= 16);
}

TEST_CASE("stage pools hold eight stages per domain") {
    for (Domain d : kDomains) {
        const auto& pool = stage_pool(d);
        CHECK(pool.size() == 8);
        std::set<std::string> names;
        for (const auto& s : pool) names.insert(s.name);
        CHECK(names.size() == 8);
    }
}

TEST_CASE("emitted truth validates and matches the file set") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto cb = generate(seed);
        CHECK_NOTHROW(validate(cb.ground_truth));
        CHECK(cb.ground_truth.modules.size() == cb.files.size());
        for (const auto& m : cb.ground_truth.modules) CHECK(cb.find(m.path) != nullptr);
        std::size_t config = 0, tests = 0;
        for (const auto& m : cb.ground_truth.modules) {
            config += m.role == ModuleRole::ConfigData;
            tests += m.role == ModuleRole::Test;
        }
        CHECK(config == 1);
        CHECK(tests == 1);
    }
}

TEST_CASE("IMPORTS edges are exactly the import statements") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        const auto cb = generate(seed);
        CHECK(scanned_imports(cb) == edges_of(cb.ground_truth, EdgeType::Imports));
    }
}

TEST_CASE("anti-triviality of the layout") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        const auto cb = generate(seed);
        const auto& gt = cb.ground_truth;
        std::size_t distractors = 0;
        for (const auto& m : gt.modules) {
            if (m.role == ModuleRole::Stage) {
                const auto name = m.path.substr(m.path.rfind('/') + 1);
                CHECK(name.size() == 8);  // mod_x.py
                CHECK(name.starts_with("mod_"));
                // every stage subclasses the common base
                CHECK(cb.find(m.path)->text.find("(StageBase)") != std::string::npos);
            }
            if (m.role == ModuleRole::Distractor) {
                ++distractors;
                CHECK(m.path.starts_with("legacy/"));
            }
        }
        CHECK(distractors >= 2);
        for (const auto& e : gt.edges) {
            const auto* src = gt.find_module(e.src);
            const auto* dst = gt.find_module(e.dst);
            if (dst->role == ModuleRole::Distractor) CHECK(src->role == ModuleRole::Distractor);
            // stages never import each other
            if (e.type == EdgeType::Imports) CHECK_FALSE((is_stage(gt, e.src) && is_stage(gt, e.dst)));
        }
    }
}

TEST_CASE("registry wiring is dynamic") {
    for (std::uint64_t seed : {7ULL, 42ULL, 123ULL, 999ULL}) {
        CAPTURE(seed);
        const auto cb = generate(seed);
        const auto& gt = cb.ground_truth;
        const auto wires = edges_of(gt, EdgeType::RegistryWires);
        const auto modules = config_modules(cb);
        CHECK(wires.size() + 1 >= modules.size());
        const auto imports = edges_of(gt, EdgeType::Imports);
        for (const auto& w : wires) {
            CHECK(w.src == "registry.py");
            CHECK(std::find(modules.begin(), modules.end(), w.dst) != modules.end());
            CHECK(imports.count({w.src, w.dst, EdgeType::Imports}) == 0);
        }
        const auto& registry = cb.find("registry.py")->text;
        CHECK(registry.find("importlib") != std::string::npos);
        for (const auto& imp : scan_imports(registry)) CHECK(imp.module.find("stages") == std::string::npos);
    }
}

TEST_CASE("data flows chain the configured stages through the orchestrator") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        const auto cb = generate(seed);
        const auto modules = config_modules(cb);
        std::set<DepEdge> chain;
        for (std::size_t i = 0; i + 1 < modules.size(); ++i) {
            chain.insert({modules[i], modules[i + 1], EdgeType::DataFlowsTo});
        }
        CHECK(edges_of(cb.ground_truth, EdgeType::DataFlowsTo) == chain);
        CHECK(modules.size() >= 6);
        CHECK(modules.size() <= 8);
        CHECK(cb.find("runner.py")->text.find("stage.run(records)") != std::string::npos);
    }
}

TEST_CASE("API calls appear in function bodies") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        const auto cb = generate(seed);
        const auto& gt = cb.ground_truth;
        for (const auto& e : edges_of(gt, EdgeType::CallsApi)) {
            CAPTURE(e.src);
            CAPTURE(e.dst);
            const auto& text = cb.find(e.src)->text;
            bool called = false;
            for (const auto& ex : gt.find_module(e.dst)->exports) {
                for (auto line : split_lines(text)) {
                    const bool body = line.starts_with("    ") && line.find("def ") == std::string_view::npos;
                    if (body && line.find(ex.symbol + "(") != std::string_view::npos) called = true;
                }
            }
            CHECK(called);
        }
    }
}

TEST_CASE("constraints span all five types with realized evidence") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        const auto cb = generate(seed);
        std::map<ConstraintType, int> histogram;
        for (const auto& c : cb.ground_truth.constraints) {
            ++histogram[c.type];
            CHECK_FALSE(c.evidence.empty());
            for (const auto& ev : c.evidence) {
                CAPTURE(ev.locator);
                const auto sep = ev.locator.find("::");
                const std::string file = ev.locator.substr(0, sep);
                const auto* f = cb.find(file);
                REQUIRE(f != nullptr);
                if (sep == std::string::npos) {
                    if (ev.kind == EvidenceKind::Doc) CHECK_FALSE(module_docstring(f->text).empty());
                    continue;
                }
                const std::string symbol = ev.locator.substr(sep + 2);
                bool found = false;
                for (const auto& d : top_level_definitions(f->text)) {
                    if (d.name != symbol) continue;
                    found = true;
                    if (ev.kind == EvidenceKind::Doc) CHECK_FALSE(d.docstring.empty());
                    if (ev.kind == EvidenceKind::Test) CHECK(f->text.find("assert") != std::string::npos);
                }
                CHECK(found);
            }
            if (c.type == ConstraintType::Interface) CHECK(c.via.find("StageBase") != std::string::npos);
        }
        CHECK(histogram.size() == 5);
        const auto& smoke = cb.find("test_smoke.py")->text;
        CHECK(smoke.find("def test_stages_do_not_import_each_other") != std::string::npos);
    }
}

TEST_CASE("write and read back a codebase") {
    const auto dir = scratch_dir("codegen_rw");
    const auto cb = generate(42);
    write_codebase(cb, dir);
    CHECK(std::filesystem::exists(dir / "ground_truth.json"));
    CHECK(std::filesystem::exists(dir / cb.root / "registry.py"));
    const auto back = read_codebase(dir);
    CHECK(back.root == cb.root);
    CHECK(back.files == cb.files);
    CHECK(back.ground_truth == cb.ground_truth);
}
