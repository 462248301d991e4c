#pragma once
// Scoring of cognitive maps against ground truth.

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "codemap/belief.hpp"
#include "codemap/worldmodel.hpp"

namespace codemap {

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DepScore {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool no_predictions = false;  // precision is then reported as 1.0

    bool operator==(const DepScore&) const = default;
};

// P/R/F1 from counts, with the empty-prediction convention.
DepScore score_from_counts(std::size_t tp, std::size_t predicted, std::size_t truth);

// Directory-level ("stages/") and symbol-qualified ("base.py::X") targets
// never match file-level ground truth.
bool is_matchable_target(std::string_view dst);

DepScore dep_score(const std::vector<EdgeTriple>& predicted, const GroundTruth& gt);

struct TypeRecall {
    std::size_t n = 0;      // ground-truth edges of this type
    std::size_t found = 0;  // of those, predicted exactly
    double recall = 0.0;    // 0 when n == 0
};

std::map<EdgeType, TypeRecall> recall_by_type(const std::vector<EdgeTriple>& predicted, const GroundTruth& gt);

// Exact (type, src, dst, via) agreement, one-to-one.
DepScore inv_score_strict(const std::vector<InvariantBelief>& predicted, const std::vector<Constraint>& truth);

// Directory-stripped paths, empty truth fields as wildcards, greedy one-to-one.
DepScore inv_score_relaxed(const std::vector<InvariantBelief>& predicted, const std::vector<Constraint>& truth);

// Pair score used by the relaxed matcher: 0 when the pair is not admissible,
// otherwise 1 + the number of nonempty truth fields among src/dst/via.
int relaxed_pair_score(const InvariantBelief& predicted, const Constraint& truth);

// "a/b/c.py" -> "c.py"
std::string strip_directories(std::string_view path);

struct CalibrationBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;
    double mean_conf = 0.0;
    double accuracy = 0.0;
};

struct EceResult {
    double value = 0.0;
    std::size_t n = 0;
    std::vector<CalibrationBin> bins;  // always 5
};

inline constexpr int kCalibrationBins = 5;

EceResult ece(const std::vector<std::pair<double, bool>>& items);

// (confidence, strict-correct) for every distinct predicted edge.
std::vector<std::pair<double, bool>> calibration_items(const CognitiveMap& map, const GroundTruth& gt);

enum class CurveAxis { Actions, Opens };

std::string_view to_string(CurveAxis axis);

struct CurveSample {
    int x = 0;        // actions or OPEN count when the probe was issued
    double f1 = 0.0;  // Dep F1 of that probe's map
};

struct CurvePoint {
    int x = 0;
    double y = 0.0;
};

struct EfficiencyCurve {
    CurveAxis axis = CurveAxis::Actions;
    std::vector<CurvePoint> points;  // x = 0..x_max
    double auc = 0.0;
};

// y(x) is the F1 of the latest probe issued at or before x, 0 before the
// first probe. The step function is integrated exactly over [0, x_max] and
// divided by x_max; with x_max = 0 the AUC is y(0).
EfficiencyCurve efficiency_curve(const std::vector<CurveSample>& samples, int x_max, CurveAxis axis);

struct ConditionScores {
    std::optional<double> passive_full;
    std::optional<double> active;
    std::optional<double> passive_oracle;
    std::optional<double> passive_replay;
};

struct ApgReport {
    std::optional<double> total;      // passive_full - active
    std::optional<double> selection;  // passive_oracle - active
    std::optional<double> decision;   // active - passive_replay
};

ApgReport apg(const ConditionScores& scores);

struct BrsResult {
    double brs = 0.0;
    std::size_t inertia_proper = 0;
    std::size_t impact_discovery = 0;
};

// Elements are edge triples. Pre-mutation truth of an affected element is the
// negation of its post-mutation truth.
BrsResult brs(const CognitiveMap& before, const CognitiveMap& after, const std::set<EdgeTriple>& affected,
              const GroundTruth& gt_after);

}  // namespace codemap
