#pragma once
// Persisted record of one run: header, one record per step, one per probe,
// and a closing record. Stored as JSON lines, appended as the run proceeds.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "codemap/belief.hpp"
#include "codemap/environment.hpp"

namespace codemap {

enum class Condition { Active, PassiveFull, PassiveOracle, PassiveReplay };
enum class TrackingMode { Scratchpad, NoProbe, ProbeOnly };

std::string_view to_string(Condition c);
std::optional<Condition> parse_condition(std::string_view name);
std::string_view to_string(TrackingMode m);
std::optional<TrackingMode> parse_tracking_mode(std::string_view name);

class TrajectoryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrajectoryHeader {
    std::string run_id;
    std::string agent;
    Condition condition = Condition::Active;
    TrackingMode mode = TrackingMode::Scratchpad;
    int budget = 20;
    int probe_interval = 3;
    std::string prompt_version;
    std::string source_run;  // replay source, "" otherwise
    std::string codebase_root;
    std::uint64_t seed = 0;
    std::string codebase_digest;

    bool operator==(const TrajectoryHeader&) const = default;
};

struct StepRecord {
    int step = 0;  // 1-based position in the observation sequence
    Action action;
    ObsStatus status = ObsStatus::Ok;
    std::string digest;  // of the rendered observation
    std::size_t bytes = 0;
    std::string source;
    int budget_remaining = 0;

    bool operator==(const StepRecord&) const = default;
};

struct ProbeRecord {
    int step = 0;     // number of step records before the probe
    bool final = false;
    int actions = 0;  // costed actions at probe time
    int opens = 0;
    std::string raw;
    std::optional<CognitiveMap> map;  // absent when the response could not be parsed
    ParseReport report;
    std::string error;

    bool operator==(const ProbeRecord&) const = default;
};

struct TrajectoryEnd {
    bool completed = false;
    std::string cause;  // failure cause, "" when completed
    int actions = 0;
    int opens = 0;
    int files_opened = 0;  // distinct files
    int invalid_actions = 0;
    CognitiveMap final_map;

    bool operator==(const TrajectoryEnd&) const = default;
};

struct Trajectory {
    TrajectoryHeader header;
    std::vector<StepRecord> steps;
    std::vector<ProbeRecord> probes;
    std::optional<TrajectoryEnd> end;

    bool operator==(const Trajectory&) const = default;
};

nlohmann::json header_json(const TrajectoryHeader& h);
nlohmann::json step_json(const StepRecord& s);
nlohmann::json probe_json(const ProbeRecord& p);
nlohmann::json end_json(const TrajectoryEnd& e);

std::string dump_trajectory(const Trajectory& t);
Trajectory parse_trajectory(std::string_view text);
void save_trajectory(const Trajectory& t, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

// Appends records as they happen so a crash leaves a readable prefix.
class TrajectoryWriter {
public:
    explicit TrajectoryWriter(std::filesystem::path path);
    void write(const nlohmann::json& record);

private:
    std::filesystem::path path_;
};

}  // namespace codemap
