#include "codemap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace codemap {

namespace {

std::set<EdgeTriple> truth_edges(const GroundTruth& gt) {
    std::set<EdgeTriple> out;
    for (const auto& e : gt.edges) out.insert(to_triple(e));
    return out;
}

using InvKey = std::tuple<std::string, std::string, std::string, std::string>;

}  // namespace

DepScore score_from_counts(std::size_t tp, std::size_t predicted, std::size_t truth) {
    DepScore s;
    s.tp = tp;
    s.fp = predicted - tp;
    s.fn = truth - tp;
    s.no_predictions = predicted == 0;
    s.precision = predicted == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    s.recall = truth == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(truth);
    const double sum = s.precision + s.recall;
    s.f1 = sum == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / sum;
    return s;
}

bool is_matchable_target(std::string_view dst) {
    return dst.find("::") == std::string_view::npos && !dst.ends_with("/") && is_file_path(dst);
}

DepScore dep_score(const std::vector<EdgeTriple>& predicted, const GroundTruth& gt) {
    const std::set<EdgeTriple> pred(predicted.begin(), predicted.end());
    const auto truth = truth_edges(gt);
    std::size_t tp = 0;
    for (const auto& t : pred) {
        if (is_matchable_target(t.dst) && truth.count(t)) ++tp;
    }
    return score_from_counts(tp, pred.size(), truth.size());
}

std::map<EdgeType, TypeRecall> recall_by_type(const std::vector<EdgeTriple>& predicted, const GroundTruth& gt) {
    const std::set<EdgeTriple> pred(predicted.begin(), predicted.end());
    std::map<EdgeType, TypeRecall> out;
    for (EdgeType t : kEdgeTypes) out[t] = {};
    for (const auto& e : gt.edges) {
        auto& r = out[e.type];
        ++r.n;
        if (pred.count(to_triple(e))) ++r.found;
    }
    for (auto& [type, r] : out) {
        r.recall = r.n == 0 ? 0.0 : static_cast<double>(r.found) / static_cast<double>(r.n);
    }
    return out;
}

DepScore inv_score_strict(const std::vector<InvariantBelief>& predicted, const std::vector<Constraint>& truth) {
    std::map<InvKey, std::size_t> want;
    for (const auto& c : truth) ++want[{std::string(to_string(c.type)), c.src, c.dst, c.via}];
    std::size_t tp = 0;
    for (const auto& p : predicted) {
        auto it = want.find({p.type, p.src, p.dst, p.via});
        if (it != want.end() && it->second > 0) {
            --it->second;
            ++tp;
        }
    }
    return score_from_counts(tp, predicted.size(), truth.size());
}

std::string strip_directories(std::string_view path) {
    const auto slash = path.rfind('/');
    return std::string(slash == std::string_view::npos ? path : path.substr(slash + 1));
}

int relaxed_pair_score(const InvariantBelief& predicted, const Constraint& truth) {
    if (predicted.type != to_string(truth.type)) return 0;
    int score = 1;
    for (auto [want, got] : {std::pair{&truth.src, &predicted.src}, std::pair{&truth.dst, &predicted.dst},
                             std::pair{&truth.via, &predicted.via}}) {
        if (want->empty()) continue;
        if (strip_directories(*want) != strip_directories(*got)) return 0;
        ++score;
    }
    return score;
}

DepScore inv_score_relaxed(const std::vector<InvariantBelief>& predicted, const std::vector<Constraint>& truth) {
    struct Pair {
        int score;
        std::size_t gt;
        std::size_t pred;
    };
    std::vector<Pair> pairs;
    for (std::size_t g = 0; g < truth.size(); ++g) {
        for (std::size_t p = 0; p < predicted.size(); ++p) {
            if (int s = relaxed_pair_score(predicted[p], truth[g]); s > 0) pairs.push_back({s, g, p});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return std::tie(b.score, a.gt, a.pred) < std::tie(a.score, b.gt, b.pred);
    });
    std::vector<bool> gt_used(truth.size()), pred_used(predicted.size());
    std::size_t tp = 0;
    for (const auto& pr : pairs) {
        if (gt_used[pr.gt] || pred_used[pr.pred]) continue;
        gt_used[pr.gt] = pred_used[pr.pred] = true;
        ++tp;
    }
    return score_from_counts(tp, predicted.size(), truth.size());
}

EceResult ece(const std::vector<std::pair<double, bool>>& items) {
    EceResult r;
    r.n = items.size();
    std::vector<double> conf_sum(kCalibrationBins, 0.0);
    std::vector<std::size_t> correct(kCalibrationBins, 0);
    r.bins.resize(kCalibrationBins);
    for (int k = 0; k < kCalibrationBins; ++k) {
        r.bins[k].lo = k / static_cast<double>(kCalibrationBins);
        r.bins[k].hi = (k + 1) / static_cast<double>(kCalibrationBins);
    }
    for (const auto& [c, ok] : items) {
        if (!(c >= 0.0 && c <= 1.0)) {
            throw MetricError("confidence outside [0, 1]");
        }
        int k = kCalibrationBins - 1;
        while (k > 0 && c < r.bins[k].lo) --k;
        ++r.bins[k].n;
        conf_sum[k] += c;
        correct[k] += ok ? 1 : 0;
    }
    for (int k = 0; k < kCalibrationBins; ++k) {
        auto& b = r.bins[k];
        if (b.n == 0) continue;
        b.mean_conf = conf_sum[k] / static_cast<double>(b.n);
        b.accuracy = static_cast<double>(correct[k]) / static_cast<double>(b.n);
        r.value += static_cast<double>(b.n) / static_cast<double>(r.n) * std::fabs(b.accuracy - b.mean_conf);
    }
    return r;
}

std::vector<std::pair<double, bool>> calibration_items(const CognitiveMap& map, const GroundTruth& gt) {
    const auto truth = truth_edges(gt);
    std::vector<std::pair<double, bool>> out;
    for (const auto& [t, conf] : edge_confidences(map)) {
        out.emplace_back(conf, is_matchable_target(t.dst) && truth.count(t) > 0);
    }
    return out;
}

std::string_view to_string(CurveAxis axis) { return axis == CurveAxis::Actions ? "actions" : "opens"; }

EfficiencyCurve efficiency_curve(const std::vector<CurveSample>& samples, int x_max, CurveAxis axis) {
    if (samples.empty()) {
        throw MetricError("efficiency curve needs at least one probe");
    }
    if (x_max < 0) {
        throw MetricError("negative curve range");
    }
    EfficiencyCurve curve;
    curve.axis = axis;
    std::size_t next = 0;
    double y = 0.0;
    double area = 0.0;
    for (int x = 0; x <= x_max; ++x) {
        while (next < samples.size() && samples[next].x <= x) {
            y = samples[next].f1;
            ++next;
        }
        curve.points.push_back({x, y});
        if (x < x_max) area += y;  // constant on [x, x+1)
    }
    curve.auc = x_max == 0 ? curve.points.front().y : area / static_cast<double>(x_max);
    return curve;
}

ApgReport apg(const ConditionScores& s) {
    ApgReport r;
    if (s.active) {
        if (s.passive_full) r.total = *s.passive_full - *s.active;
        if (s.passive_oracle) r.selection = *s.passive_oracle - *s.active;
        if (s.passive_replay) r.decision = *s.active - *s.passive_replay;
    }
    return r;
}

BrsResult brs(const CognitiveMap& before, const CognitiveMap& after, const std::set<EdgeTriple>& affected,
              const GroundTruth& gt_after) {
    if (affected.empty()) {
        throw MetricError("belief revision score needs a nonempty affected set");
    }
    const auto truth = truth_edges(gt_after);
    const auto b = extract_edges(before);
    const auto a = extract_edges(after);
    const std::set<EdgeTriple> held_before(b.begin(), b.end());
    const std::set<EdgeTriple> held_after(a.begin(), a.end());
    BrsResult r;
    std::size_t updated = 0;
    for (const auto& e : affected) {
        const bool now_true = truth.count(e) > 0;
        const bool was_true = !now_true;
        const bool in_before = held_before.count(e) > 0;
        const bool in_after = held_after.count(e) > 0;
        if (in_after == now_true) ++updated;
        if (in_before == was_true && in_before == in_after) ++r.inertia_proper;
        if (!in_before && in_after && now_true) ++r.impact_discovery;
    }
    r.brs = static_cast<double>(updated) / static_cast<double>(affected.size());
    return r;
}

}  // namespace codemap
