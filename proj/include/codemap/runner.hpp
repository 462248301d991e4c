#pragma once
// Experiment orchestration: corpora on disk, the run matrix, per-run scoring
// and the aggregate tables built from persisted reports.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "codemap/agents.hpp"
#include "codemap/codegen.hpp"
#include "codemap/trajectory.hpp"

namespace codemap {

// Scoring inputs that do not belong together.
class ScoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::vector<std::uint64_t> seeds = {42, 123, 999};
    Complexity complexity = Complexity::Medium;
    int budget = 20;
    int probe_interval = 3;
    std::string agent = "config-aware";  // a baseline name, "mock" or "llm"
    Condition condition = Condition::Active;
    TrackingMode mode = TrackingMode::Scratchpad;
    std::filesystem::path out_dir = "runs";
    std::string prompt_version = "v2";
    std::filesystem::path prompt_dir;
    std::optional<std::filesystem::path> corpus_dir;     // generated in memory when absent
    std::optional<std::filesystem::path> provider;       // llm only
    std::optional<std::filesystem::path> mock_script;    // mock only
    std::optional<std::filesystem::path> replay_source;  // trajectory file or directory
    std::string source_agent;                            // picks among several recorded active runs
    int workers = 1;
};

// Throws ConfigError.
void validate(const RunConfig& config);

// <agent>__<condition>__<mode>__B<b>__seed<s>
std::string make_run_id(const std::string& agent, Condition condition, TrackingMode mode, int budget,
                        std::uint64_t seed);

std::filesystem::path trajectory_dir(const std::filesystem::path& out_dir);
std::filesystem::path report_dir(const std::filesystem::path& out_dir);
std::filesystem::path table_dir(const std::filesystem::path& out_dir);

// --- corpora -------------------------------------------------------------------

std::filesystem::path corpus_seed_dir(const std::filesystem::path& corpus, std::uint64_t seed);

// One directory per seed. Refuses a non-empty `out` unless `force`.
std::vector<GenerationStats> generate_corpora(const std::vector<std::uint64_t>& seeds, Complexity complexity,
                                              const std::filesystem::path& out, bool force);

std::string statistics_block(std::uint64_t seed, const GenerationStats& stats);
std::string statistics_csv(const std::vector<std::uint64_t>& seeds, const std::vector<GenerationStats>& stats);

Codebase load_codebase(std::uint64_t seed, Complexity complexity, const std::optional<std::filesystem::path>& corpus);

// --- runs ----------------------------------------------------------------------

struct CellResult {
    std::string run_id;
    std::filesystem::path file;
    bool skipped = false;  // already completed on disk
    bool completed = false;
    std::string cause;
};

// One trajectory per seed. Completed cells are skipped; failed ones rerun.
std::vector<CellResult> run_matrix(const RunConfig& config, std::ostream* log = nullptr);

// --- scoring -------------------------------------------------------------------

// Per-run metric report. Pure function of its inputs.
nlohmann::json score_trajectory(const Trajectory& trajectory, const GroundTruth& gt);

// Scores every trajectory under <runs>/trajectories into <runs>/reports, then
// rebuilds the tables. Returns the report paths.
std::vector<std::filesystem::path> score_runs(const std::filesystem::path& runs, Complexity complexity,
                                              const std::optional<std::filesystem::path>& corpus);

struct Tables {
    std::string table1;        // overall performance
    std::string table1_csv;
    std::string table2;        // recall per edge type
    std::string table3;        // active-passive gap
    std::string table5;        // dep F1 against budget
    std::string scratchpad;    // tracking-mode effect
    std::string curves_actions;
    std::string curves_opens;
};

Tables build_tables(const std::vector<nlohmann::json>& reports);

// Reads <runs>/reports/*.json and writes <runs>/tables/.
Tables write_tables(const std::filesystem::path& runs);

// "0.577±0.012"
std::string mean_half_range(const std::vector<double>& values);

// --- corpus checker ----------------------------------------------------------------

struct CheckOutcome {
    bool passed = false;
    nlohmann::json result;
    int checker_exit = 0;
};

// Runs `<checker> <dir> --json` and parses its CheckResult. Throws ConfigError
// when the checker cannot be started or its output is not a CheckResult.
CheckOutcome check_corpus(const std::string& checker, const std::filesystem::path& dir);

}  // namespace codemap
