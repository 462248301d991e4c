#pragma once
// Shared fixtures and brute-force reference scorers for the test binaries.
//
// The reference scorers are deliberately naive: nested loops over plain
// vectors, no sets or maps, no calls into the metrics module.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "codemap/belief.hpp"
#include "codemap/metrics.hpp"
#include "codemap/worldmodel.hpp"

namespace testing {

using namespace codemap;

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("codemap_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// --- random instances ------------------------------------------------------------

inline const std::vector<std::string>& file_vocab() {
    static const std::vector<std::string> v = {"a.py", "b.py", "c.py", "stages/mod_a.py", "stages/mod_b.py",
                                               "registry.py"};
    return v;
}

// Paths a careless agent might write: directories, symbol targets, prefixes.
inline const std::vector<std::string>& sloppy_vocab() {
    static const std::vector<std::string> v = {"stages/", "base.py::StageBase", "pkg/a.py", "mod_a.py",
                                               "a.py", "b.py", "stages/mod_a.py", "utils"};
    return v;
}

inline const std::vector<std::string>& type_vocab() {
    static const std::vector<std::string> v = {"IMPORTS", "CALLS_API", "DATA_FLOWS_TO", "REGISTRY_WIRES",
                                               "DEPENDS_ON"};
    return v;
}

template <typename T>
const T& draw(std::mt19937_64& g, const std::vector<T>& items) {
    return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(g)];
}

inline std::size_t draw_count(std::mt19937_64& g, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(0, hi)(g);
}

inline GroundTruth random_edge_truth(std::mt19937_64& g, std::size_t max_edges = 10) {
    GroundTruth gt;
    const std::size_t n = draw_count(g, max_edges);
    while (gt.edges.size() < n) {
        DepEdge e{draw(g, file_vocab()), draw(g, file_vocab()),
                  kEdgeTypes[draw_count(g, kEdgeTypes.size() - 1)]};
        if (e.src == e.dst) continue;
        bool dup = false;
        for (const auto& x : gt.edges) dup = dup || x == e;
        if (!dup) gt.edges.push_back(e);
    }
    return gt;
}

// Predictions drawn partly from the truth so that hits are common.
inline std::vector<EdgeTriple> random_predictions(std::mt19937_64& g, const GroundTruth& gt,
                                                  std::size_t max_edges = 10) {
    std::vector<EdgeTriple> out;
    const std::size_t n = draw_count(g, max_edges);
    for (std::size_t i = 0; i < n; ++i) {
        if (!gt.edges.empty() && draw_count(g, 1) == 0) {
            const auto& e = draw(g, gt.edges);
            out.push_back({e.src, e.dst, std::string(to_string(e.type))});
        } else {
            const auto& dst_pool = draw_count(g, 2) == 0 ? sloppy_vocab() : file_vocab();
            out.push_back({draw(g, file_vocab()), draw(g, dst_pool), draw(g, type_vocab())});
        }
    }
    return out;
}

inline const std::vector<std::string>& inv_path_vocab() {
    static const std::vector<std::string> v = {"", "stages/mod_a.py", "mod_a.py", "pkg/stages/mod_a.py",
                                               "base.py", "core/base.py", "runner.py"};
    return v;
}

inline const std::vector<std::string>& via_vocab() {
    static const std::vector<std::string> v = {"", "StageBase", "registry.py", "pkg/registry.py"};
    return v;
}

inline std::vector<Constraint> random_constraints(std::mt19937_64& g, std::size_t max_n = 10) {
    std::vector<Constraint> out(draw_count(g, max_n));
    for (auto& c : out) {
        c.type = kConstraintTypes[draw_count(g, kConstraintTypes.size() - 1)];
        c.src = draw(g, inv_path_vocab());
        c.dst = draw(g, inv_path_vocab());
        c.via = draw(g, via_vocab());
        c.pattern = "p";
    }
    return out;
}

inline std::vector<InvariantBelief> random_invariants(std::mt19937_64& g, const std::vector<Constraint>& truth,
                                                      std::size_t max_n = 10) {
    static const std::vector<std::string> types = {"BOUNDARY", "DATAFLOW", "INTERFACE", "INVARIANT", "PURPOSE"};
    std::vector<InvariantBelief> out(draw_count(g, max_n));
    for (auto& p : out) {
        if (!truth.empty() && draw_count(g, 2) != 0) {
            const auto& c = draw(g, truth);
            p = {std::string(to_string(c.type)), c.src, c.dst, c.via, "q", {}};
            // perturb one field now and then
            switch (draw_count(g, 5)) {
                case 0: p.src = draw(g, inv_path_vocab()); break;
                case 1: p.dst = draw(g, inv_path_vocab()); break;
                case 2: p.via = draw(g, via_vocab()); break;
                default: break;
            }
        } else {
            p = {draw(g, types), draw(g, inv_path_vocab()), draw(g, inv_path_vocab()), draw(g, via_vocab()), "", {}};
        }
    }
    return out;
}

// --- reference scorers -------------------------------------------------------------

struct RefScore {
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 0, recall = 0, f1 = 0;
};

inline RefScore ref_ratio(std::size_t tp, std::size_t n_pred, std::size_t n_truth) {
    RefScore r;
    r.tp = tp;
    r.fp = n_pred - tp;
    r.fn = n_truth - tp;
    r.precision = n_pred ? double(tp) / double(n_pred) : 1.0;
    r.recall = n_truth ? double(tp) / double(n_truth) : 0.0;
    r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

inline bool ref_file_target(const std::string& dst) {
    if (dst.empty() || dst.back() == '/') return false;
    for (std::size_t i = 0; i + 1 < dst.size(); ++i) {
        if (dst[i] == ':' && dst[i + 1] == ':') return false;
    }
    auto ends = [&](const std::string& suf) {
        return dst.size() >= suf.size() && dst.compare(dst.size() - suf.size(), suf.size(), suf) == 0;
    };
    return ends(".py") || ends(".json");
}

inline RefScore ref_dep(const std::vector<EdgeTriple>& pred, const GroundTruth& gt) {
    std::vector<EdgeTriple> uniq;
    for (const auto& p : pred) {
        bool seen = false;
        for (const auto& u : uniq) seen = seen || (u.src == p.src && u.dst == p.dst && u.type == p.type);
        if (!seen) uniq.push_back(p);
    }
    std::size_t tp = 0;
    for (const auto& p : uniq) {
        if (!ref_file_target(p.dst)) continue;
        for (const auto& e : gt.edges) {
            if (e.src == p.src && e.dst == p.dst && std::string(to_string(e.type)) == p.type) {
                ++tp;
                break;
            }
        }
    }
    return ref_ratio(tp, uniq.size(), gt.edges.size());
}

// Strict: repeatedly take the first unused exact pair.
inline RefScore ref_inv_strict(const std::vector<InvariantBelief>& pred, const std::vector<Constraint>& truth) {
    std::vector<bool> used(truth.size(), false);
    std::size_t tp = 0;
    for (const auto& p : pred) {
        for (std::size_t g = 0; g < truth.size(); ++g) {
            const auto& c = truth[g];
            if (!used[g] && p.type == to_string(c.type) && p.src == c.src && p.dst == c.dst && p.via == c.via) {
                used[g] = true;
                ++tp;
                break;
            }
        }
    }
    return ref_ratio(tp, pred.size(), truth.size());
}

inline std::string ref_basename(const std::string& p) {
    std::string out;
    for (char c : p) {
        if (c == '/') {
            out.clear();
        } else {
            out.push_back(c);
        }
    }
    return out;
}

inline int ref_pair_score(const InvariantBelief& p, const Constraint& c) {
    if (p.type != to_string(c.type)) return 0;
    int s = 1;
    const std::string want[3] = {c.src, c.dst, c.via};
    const std::string got[3] = {p.src, p.dst, p.via};
    for (int i = 0; i < 3; ++i) {
        if (want[i].empty()) continue;
        if (ref_basename(want[i]) != ref_basename(got[i])) return 0;
        ++s;
    }
    return s;
}

// Relaxed: scan for the best remaining pair until none is left.
inline RefScore ref_inv_relaxed(const std::vector<InvariantBelief>& pred, const std::vector<Constraint>& truth) {
    std::vector<bool> gu(truth.size(), false), pu(pred.size(), false);
    std::size_t tp = 0;
    for (;;) {
        int best = 0;
        std::size_t bg = 0, bp = 0;
        for (std::size_t g = 0; g < truth.size(); ++g) {
            if (gu[g]) continue;
            for (std::size_t p = 0; p < pred.size(); ++p) {
                if (pu[p]) continue;
                const int s = ref_pair_score(pred[p], truth[g]);
                if (s > best) {  // strict > keeps the smallest (g, p) among ties
                    best = s;
                    bg = g;
                    bp = p;
                }
            }
        }
        if (best == 0) break;
        gu[bg] = pu[bp] = true;
        ++tp;
    }
    return ref_ratio(tp, pred.size(), truth.size());
}

inline double ref_ece(const std::vector<std::pair<double, bool>>& items) {
    if (items.empty()) return 0.0;
    double total = 0.0;
    for (int b = 0; b < 5; ++b) {
        const double lo = b / 5.0, hi = (b + 1) / 5.0;
        double conf = 0.0, hits = 0.0, n = 0.0;
        for (const auto& [c, ok] : items) {
            const bool in = c >= lo && (b == 4 ? c <= hi : c < hi);
            if (!in) continue;
            conf += c;
            hits += ok ? 1.0 : 0.0;
            n += 1.0;
        }
        if (n > 0) total += n / double(items.size()) * std::fabs(hits / n - conf / n);
    }
    return total;
}

// Exact area under the probe step function on [0, x_max], by breakpoints.
inline double ref_auc(const std::vector<CurveSample>& samples, int x_max) {
    auto value_at = [&](double x) {
        double y = 0.0;
        for (const auto& s : samples) {
            if (s.x <= x) y = s.f1;  // later samples at the same x win
        }
        return y;
    };
    if (x_max == 0) return value_at(0);
    std::vector<double> cuts = {0.0, double(x_max)};
    for (const auto& s : samples) {
        if (s.x > 0 && s.x < x_max) cuts.push_back(s.x);
    }
    std::sort(cuts.begin(), cuts.end());
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) area += (cuts[i + 1] - cuts[i]) * value_at(cuts[i]);
    return area / x_max;
}

}  // namespace testing
