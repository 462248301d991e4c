#include "codemap/codegen.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "codemap/pysource.hpp"

namespace codemap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kMinStages = 3;

// Rng stream labels; each planning step draws from its own stream so that
// changing one step never perturbs the others.
enum Stream : std::uint64_t { kDomainStream = 1, kTemplateStream = 2, kEdgeStream = 3, kConstraintStream = 4 };

const std::string kInit = "__init__.py";
const std::string kModels = "models.py";
const std::string kBase = "base.py";
const std::string kConfig = "config.py";
const std::string kExceptions = "exceptions.py";
const std::string kRegistry = "registry.py";
const std::string kRunner = "runner.py";
const std::string kCli = "cli.py";
const std::string kConfigData = "pipeline_config.json";
const std::string kSmokeTest = "test_smoke.py";
const std::string kHelpers = "utils/helpers.py";
const std::string kFormatters = "utils/formatters.py";
const std::string kValidators = "utils/validators.py";
const std::string kOldPipeline = "legacy/old_pipeline.py";
const std::string kCompat = "legacy/compat.py";
const std::string kBatchV1 = "legacy/batch_v1.py";

// {{slot}} substitution. Unknown slots are a programming error.
std::string fill(std::string_view tpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tpl.size() + 256);
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const std::size_t open = tpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tpl.substr(pos));
            break;
        }
        const std::size_t close = tpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw GenerationError("unterminated template slot");
        }
        out.append(tpl.substr(pos, open - pos));
        const std::string key(tpl.substr(open + 2, close - open - 2));
        auto it = slots.find(key);
        if (it == slots.end()) {
            throw GenerationError("unknown template slot: " + key);
        }
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

// "utils/helpers.py" -> "utils.helpers"
std::string dotted(const std::string& path) {
    std::string stem = path.substr(0, path.size() - 3);
    std::replace(stem.begin(), stem.end(), '/', '.');
    return stem;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) {
            out.append(sep);
        }
        out.append(parts[i]);
    }
    return out;
}

const std::vector<StageDef> kTextStages = {
    {"tokenize", "Tokenizer", "Splits raw text into whitespace-delimited tokens.", R"(" ".join(text.split()))"},
    {"normalize", "Normalizer", "Lowercases text and collapses repeated whitespace.", "text.lower()"},
    {"filter_stopwords", "StopwordFilter", "Removes common stopwords from the text.",
     R"(" ".join(w for w in text.split() if w not in ("a", "an", "the")))"},
    {"stem", "Stemmer", "Strips plural suffixes from tokens.", R"(" ".join(w.rstrip("s") for w in text.split()))"},
    {"deduplicate", "Deduplicator", "Drops repeated tokens while keeping their order.",
     R"(" ".join(dict.fromkeys(text.split())))"},
    {"score_terms", "TermScorer", "Appends a token-count score to the text.",
     R"(text + " #" + str(len(text.split())))"},
    {"annotate", "Annotator", "Annotates each record with its text length.", R"(text + " len=" + str(len(text)))"},
    {"summarize", "Summarizer", "Truncates text to a short summary.", "text[:80]"},
};

const std::vector<StageDef> kEtlStages = {
    {"extract", "Extractor", "Reads the raw value out of each incoming record.", "text.strip()"},
    {"parse", "FieldParser", "Splits comma-separated values into trimmed fields.",
     R"(",".join(part.strip() for part in text.split(",")))"},
    {"validate_schema", "SchemaChecker", "Checks that every record carries a value.", R"(text if text else "<empty>")"},
    {"cleanse", "Cleanser", "Removes control characters and stray whitespace.",
     R"("".join(ch for ch in text if ch.isprintable()).strip())"},
    {"transform", "Transformer", "Applies the value transformation to each field.", "text.upper()"},
    {"enrich", "Enricher", "Adds derived attributes to each record.", R"(text + "|enriched")"},
    {"aggregate", "Aggregator", "Computes per-record field counts.", R"(text + "|n=" + str(len(text.split(","))))"},
    {"load", "Loader", "Prepares records for the output sink.", "text"},
};

const std::vector<StageDef> kLogStages = {
    {"ingest", "Ingestor", "Accepts raw log lines and trims line endings.", "text.rstrip()"},
    {"parse_lines", "LineParser", "Splits log lines into level and message.", "text.strip()"},
    {"filter_noise", "NoiseFilter", "Drops debug chatter from log lines.", R"(text.replace("DEBUG", "").strip())"},
    {"normalize_levels", "LevelNormalizer", "Maps log level names onto a canonical set.",
     R"(text.replace("WARNING", "WARN"))"},
    {"correlate", "Correlator", "Attaches a correlation id to each line.", R"(text + " cid=" + str(len(text) % 97))"},
    {"detect_anomalies", "AnomalyDetector", "Flags lines that look unusual.",
     R"(text + (" !" if "ERROR" in text else ""))"},
    {"summarize", "LogSummarizer", "Condenses each line into a short summary.", "text[:120]"},
    {"export", "Exporter", "Formats lines for the output sink.", "text"},
};

struct UtilFunction {
    std::string module;
    std::string function;
    std::string call;  // Python expression; `text` and `self.name` are in scope
};

const std::vector<UtilFunction> kStageUtilities = {
    {kHelpers, "clean_text", "clean_text(text)"},
    {kHelpers, "truncate", "truncate(text)"},
    {kFormatters, "tag", "tag(text, self.name)"},
};

// ---------------------------------------------------------------------------
// Python templates

constexpr std::string_view kInitTemplate = R"PY("""{{title}} package.

Core types are re-exported here; stages are discovered through the registry.
"""
{{imports}}
__all__ = ["Record", "StageBase"]
)PY";

constexpr std::string_view kExceptionsTemplate = R"PY("""Exception hierarchy for the pipeline.

Every error raised by pipeline code derives from PipelineError.
"""


class PipelineError(Exception):
    """Base class for every pipeline failure."""


class ConfigError(PipelineError):
    """Raised when the pipeline configuration is invalid."""


class StageError(PipelineError):
    """Raised when a stage fails to process its input."""


class ValidationError(PipelineError):
    """Raised when an input record fails validation."""
)PY";

constexpr std::string_view kModelsTemplate = R"PY("""Record type passed between pipeline stages.

Records are immutable: stages return new records instead of mutating inputs.
"""
from dataclasses import dataclass, field

{{imports}}

@dataclass(frozen=True)
class Record:
    """One unit of data flowing through the pipeline."""

    key: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.key, str):
            raise ValidationError("record key must be a string")

    def with_field(self, name, value):
        """Return a copy of this record with one payload field replaced."""
        data = dict(self.payload)
        data[name] = value
        return Record(self.key, data)
)PY";

constexpr std::string_view kBaseTemplate = R"PY("""Abstract base class shared by all processing stages."""
from abc import ABC, abstractmethod

{{imports}}

class StageBase(ABC):
    """Common interface implemented by every stage.

    Other modules interact with stages only through this interface.
    """

    name = "stage"

    def __init__(self, options=None):
        self.options = dict(options or {})

    @abstractmethod
    def process(self, records):
        """Transform a list of records and return the new list."""

    def run(self, records):
        """Call process() and wrap unexpected failures in StageError."""
        try:
            result = self.process(list(records))
        except StageError:
            raise
        except Exception as exc:
            raise StageError(self.name + ": " + str(exc)) from exc
        for item in result:
            if not isinstance(item, Record):
                raise StageError(self.name + " returned a non-Record value")
        return result
)PY";

constexpr std::string_view kConfigTemplate = R"PY("""Loads and checks the pipeline configuration file."""
import json
from pathlib import Path

{{imports}}
CONFIG_FILE = "pipeline_config.json"


class PipelineConfig:
    """Parsed view of the configuration: ordered stages plus adapter choices."""

    def __init__(self, stages, adapters=None):
        self.stages = list(stages)
        self.adapters = dict(adapters or {})

    def stage_names(self):
        """Names of the configured stages in pipeline order."""
        return [entry["name"] for entry in self.stages]


def load_config(path=None):
    """Read the JSON file that lists the pipeline stages in order.

    Stage names must be unique.
    """
    target = Path(path) if path else Path(__file__).with_name(CONFIG_FILE)
    with open(target, encoding="utf-8") as handle:
        data = json.load(handle)
    stages = data.get("stages")
    if not isinstance(stages, list) or not stages:
        raise ConfigError("config must list at least one stage")
    names = [entry.get("name") for entry in stages]
    if len(set(names)) != len(names):
        raise ConfigError("stage names must be unique")
    return PipelineConfig(stages, data.get("adapters"))
)PY";

constexpr std::string_view kRegistryTemplate = R"PY("""Stage registry.

Stage modules are located at runtime from the names listed in
pipeline_config.json and loaded with importlib; no stage module is imported
statically anywhere in the package. Choosing stages through the config file
keeps the pipeline composition out of the code.
"""
import importlib

{{imports}}
PACKAGE = __name__.rpartition(".")[0]


def load_stage(entry):
    """Import the module named by a config entry and build its stage.

    Only StageBase subclasses are accepted.
    """
    module = importlib.import_module(PACKAGE + "." + entry["module"])
    cls = getattr(module, entry["class"], None)
    if not isinstance(cls, type) or not issubclass(cls, StageBase):
        raise ConfigError(entry["module"] + " does not define a StageBase subclass")
    return cls(entry.get("options"))


def load_stages(config=None):
    """Instantiate every configured stage in pipeline order.{{hint_load_config}}"""
    cfg = config if config is not None else load_config()
    return [load_stage(entry) for entry in cfg.stages]
)PY";

constexpr std::string_view kRunnerTemplate = R"PY("""Pipeline orchestrator.

Inputs are validated first, then handed to each configured stage in order;
every stage receives the previous stage's output. Stages are obtained from
the registry and are never imported here directly.{{flow_hints}}
"""
{{imports}}
ADAPTERS = {"retry": {{retry_class}}, "trace": {{trace_class}}}


def build_stages(config):
    """Load the configured stages and wrap those that request an adapter.{{hint_load_stages}}"""
    stages = []
    for stage in load_stages(config):
        kind = config.adapters.get(stage.name)
        stages.append(ADAPTERS[kind](stage) if kind else stage)
    return stages


def _execute(stages, records):
    for stage in stages:
        records = stage.run(records)
    return records


def run_pipeline(inputs, config_path=None):
    """Validate the inputs and pass them through every stage in order.

    The first stage's output feeds the second stage, and so on down the
    configured order. Stages are invoked only through StageBase.run.{{hint_run}}
    """
    config = load_config(config_path)
    records = validate_records(inputs)
    return logged(_execute)(build_stages(config), records)
)PY";

constexpr std::string_view kCliTemplate = R"PY("""Command-line entry point for the pipeline."""
import argparse
import sys

{{imports}}

def main(argv=None):
    """Run the pipeline on the given inputs and print the result.

    The final stage's output is rendered by the formatters before it is
    printed.{{hint_main}}
    """
    parser = argparse.ArgumentParser(description="Run the pipeline on the given inputs.")
    parser.add_argument("inputs", nargs="*", default=["example input"])
    parser.add_argument("--config", default=None)
    args = parser.parse_args(argv)
    records = run_pipeline(args.inputs, args.config)
    print(format_records(records))
    return 0


if __name__ == "__main__":
    sys.exit(main())
)PY";

constexpr std::string_view kStageTemplate = R"PY("""{{description}}"""
{{imports}}

class {{class_name}}(StageBase):
    """{{description}}"""

    name = "{{name}}"

    def process(self, records):
        """Apply the {{name}} step to every record.{{hint}}"""
        output = []
        for record in records:
{{guard}}            text = str(record.payload.get("text", record.key))
            output.append(record.with_field("text", {{expr}}))
        return output
)PY";

constexpr std::string_view kStageGuard = R"PY(            if not hasattr(record, "with_field"):
                raise StageError(self.name + " received a non-Record value")
)PY";

constexpr std::string_view kRetryAdapterTemplate = R"PY("""Adapter that retries a wrapped stage when it fails.

The wrapped stage is used only through the StageBase interface.
"""
{{imports}}

class {{class_name}}(StageBase):
    """Runs the inner stage again when it raises a StageError."""

    def __init__(self, inner, options=None):
        super().__init__(options)
        self.inner = inner
        self.name = "retry(" + inner.name + ")"

    def process(self, records):
        """Run the wrapped stage with retries.{{hint}}"""
        attempts = int(self.options.get("attempts", 2))
        return {{function}}(self.inner.run, attempts)(records)
)PY";

constexpr std::string_view kTraceAdapterTemplate = R"PY("""Adapter that logs timing around a wrapped stage.

The wrapped stage is used only through the StageBase interface.
"""
{{imports}}

class {{class_name}}(StageBase):
    """Logs how long the inner stage takes."""

    def __init__(self, inner, options=None):
        super().__init__(options)
        self.inner = inner
        self.name = "trace(" + inner.name + ")"

    def process(self, records):
        """Run the wrapped stage under the logging middleware.{{hint}}"""
        return {{function}}(self.inner.run)(records)
)PY";

constexpr std::string_view kLoggingMiddlewareTemplate = R"PY("""Logging middleware.

Keeps cross-cutting logging out of stage code by wrapping callables.
"""
import functools
import logging
import time

{{imports}}
LOGGER = logging.getLogger(__name__)


def logged(func):
    """Wrap func so each call logs its duration and result size.{{hint}}"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        started = time.perf_counter()
        result = func(*args, **kwargs)
        LOGGER.debug("%s -> %s in %.4fs", func.__name__, summarize_records(result), time.perf_counter() - started)
        return result

    return wrapper
)PY";

constexpr std::string_view kRetryMiddlewareTemplate = R"PY("""Retry middleware for flaky pipeline steps."""
{{imports}}

def retrying(func, attempts=2):
    """Wrap func so a StageError triggers another try, up to `attempts` in total."""

    def wrapper(*args, **kwargs):
        failure = None
        for _ in range(max(1, attempts)):
            try:
                return func(*args, **kwargs)
            except StageError as exc:
                failure = exc
        raise failure

    return wrapper
)PY";

constexpr std::string_view kHelpersTemplate = R"PY("""Small text helpers shared by pipeline stages.

Utility modules import nothing from the package.
"""


def clean_text(text):
    """Collapse runs of whitespace into single spaces."""
    return " ".join(str(text).split())


def truncate(text, limit=80):
    """Cut text down to at most `limit` characters."""
    text = str(text)
    return text if len(text) <= limit else text[: limit - 3] + "..."


def word_count(text):
    """Number of whitespace-separated words."""
    return len(str(text).split())
)PY";

constexpr std::string_view kFormattersTemplate = R"PY("""Formatting helpers for presenting records."""
{{imports}}

def format_record(record):
    """Render one record as a single line."""
    if not isinstance(record, Record):
        return str(record)
    fields = ", ".join(key + "=" + str(record.payload[key]) for key in sorted(record.payload))
    return record.key + ": " + fields


def format_records(records):
    """Render a list of records, one per line."""
    return "\n".join(format_record(record) for record in records)


def summarize_records(records):
    """Short description of a result for log lines."""
    try:
        return str(len(records)) + " records"
    except TypeError:
        return type(records).__name__


def tag(text, label):
    """Prefix text with a bracketed label."""
    return "[" + str(label) + "] " + str(text)
)PY";

constexpr std::string_view kValidatorsTemplate = R"PY("""Input validation applied before records enter the pipeline."""
{{imports}}

def validate_records(items):
    """Turn raw inputs into records, rejecting empty values."""
    records = []
    for index, item in enumerate(items):
        record = item if isinstance(item, Record) else Record(str(index), {"text": str(item)})
        if not str(record.payload.get("text", record.key)).strip():
            raise ValidationError("record " + record.key + " has no text")
        records.append(record)
    return records
)PY";

constexpr std::string_view kOldPipelineTemplate = R"PY("""Deprecated sequential pipeline kept for reference.

Not used by the current pipeline; new code must not depend on legacy modules.
"""
{{imports}}

def run_legacy(items):
    """Process items the way the first release did.{{hint}}"""
    return [Record(str(index), {"text": normalize_legacy(item)}) for index, item in enumerate(items)]
)PY";

constexpr std::string_view kCompatTemplate = R"PY("""Compatibility shims for the deprecated pipeline."""
{{imports}}

def normalize_legacy(value):
    """Normalize a value the way the legacy pipeline expected.{{hint}}"""
    return clean_text(value).lower()
)PY";

constexpr std::string_view kBatchTemplate = R"PY("""Batch interface from the first release; superseded by the runner."""


def run_batch(items, size=10):
    """Split items into fixed-size batches."""
    items = list(items)
    return [items[start : start + size] for start in range(0, len(items), size)]
)PY";

constexpr std::string_view kSmokeTestTemplate = R"PY("""Smoke and architecture checks for the package.

Run with pytest, or directly as a module.
"""
import json
import re
from pathlib import Path

{{imports}}
ROOT = Path(__file__).resolve().parent
IMPORT_LINE = re.compile(r"^\s*(?:from|import)\s+([\w.]+)", re.MULTILINE)


def imported_modules(path):
    """Dotted names imported by a source file."""
    return IMPORT_LINE.findall(path.read_text(encoding="utf-8"))


def test_stages_load():
    stages = load_stages()
    assert stages, "no stages configured"
    for stage in stages:
        assert isinstance(stage, StageBase), stage


def test_stages_do_not_import_each_other():
    for path in sorted((ROOT / "stages").glob("*.py")):
        for name in imported_modules(path):
            assert ".stages" not in name and not name.startswith("stages"), (path.name, name)


def test_runner_does_not_import_stages():
    for name in imported_modules(ROOT / "runner.py"):
        assert ".stages" not in name, name


def test_pipeline_ignores_legacy():
    for path in (ROOT / "runner.py", ROOT / "cli.py", ROOT / "registry.py"):
        for name in imported_modules(path):
            assert ".legacy" not in name, (path.name, name)


def test_stage_names_unique():
    data = json.loads((ROOT / CONFIG_FILE).read_text(encoding="utf-8"))
    names = [entry["name"] for entry in data["stages"]]
    assert len(names) == len(set(names)), names


def test_errors_share_base():
    text = (ROOT / "exceptions.py").read_text(encoding="utf-8")
    classes = re.findall(r"^class (\w+)\((\w+)\):", text, re.MULTILINE)
    known = {name for name, _ in classes}
    for name, parent in classes:
        assert name == "PipelineError" or parent in known, name


if __name__ == "__main__":
    for _name, _func in sorted(globals().items()):
        if _name.startswith("test_") and callable(_func):
            _func()
    print("ok")
)PY";

std::string title_of(Domain domain) {
    switch (domain) {
        case Domain::DataEtl: return "Data ETL";
        case Domain::LogProcessing: return "Log processing";
        case Domain::TextProcessing: return "Text processing";
    }
    return "Pipeline";
}

// ---------------------------------------------------------------------------
// Rendering helpers

class Renderer {
public:
    Renderer(const PipelineTemplate& tpl, const EdgePlan& plan) : tpl_(tpl), plan_(plan) {}

    std::string imports(const std::string& src) const {
        auto it = plan_.imports.find(src);
        if (it == plan_.imports.end() || it->second.empty()) {
            return "";
        }
        std::string out;
        for (const auto& imp : it->second) {
            out += fmt::format("from {}.{} import {}\n", tpl_.root, dotted(imp.dst), join(imp.symbols, ", "));
        }
        return out;
    }

    // " Delegates to x.y." when the call from src into dst is hinted.
    std::string hint(const std::string& src, const std::string& dst) const {
        auto it = plan_.calls.find(src);
        if (it == plan_.calls.end()) {
            return "";
        }
        for (const auto& call : it->second) {
            if (call.dst == dst && call.hinted) {
                return fmt::format(" Delegates to {}.{}.", dotted(dst), call.function);
            }
        }
        return "";
    }

    // Hints for a multi-line docstring, one indented line per hinted call.
    std::string hint_lines(const std::string& src, const std::vector<std::string>& dsts) const {
        std::string out;
        for (const auto& dst : dsts) {
            const std::string h = hint(src, dst);
            if (!h.empty()) out += "\n   " + h;
        }
        return out;
    }

    std::string flow_hints() const {
        std::string out;
        for (std::size_t i = 0; i < plan_.data_flows.size(); ++i) {
            if (!plan_.data_flow_hinted[i]) {
                continue;
            }
            out += fmt::format("\nThe {} stage feeds {}.", stage_name_of(plan_.data_flows[i].src),
                               stage_name_of(plan_.data_flows[i].dst));
        }
        return out.empty() ? out : "\n" + out;
    }

    std::string stage_name_of(const std::string& path) const {
        for (const auto& s : tpl_.stages) {
            if (s.path == path) {
                return s.def.name;
            }
        }
        throw GenerationError("not a stage: " + path);
    }

private:
    const PipelineTemplate& tpl_;
    const EdgePlan& plan_;
};

std::string render_config_data(const PipelineTemplate& tpl) {
    json stages = json::array();
    for (std::size_t i = 0; i < tpl.stages.size(); ++i) {
        const auto& s = tpl.stages[i];
        stages.push_back({{"name", s.def.name},
                          {"module", dotted(s.path)},
                          {"class", s.def.class_name},
                          {"options", {{"position", i + 1}}}});
    }
    json adapters = json::object();
    for (const auto& [stage, kind] : tpl.adapted) {
        adapters[stage] = kind;
    }
    json doc = {{"stages", stages}, {"adapters", adapters}};
    return doc.dump(2) + "\n";
}

std::vector<SourceFile> render(const PipelineTemplate& tpl, const EdgePlan& plan) {
    Renderer r(tpl, plan);
    const auto& retry_mw = tpl.middleware_of_kind("retry");
    const auto& logging_mw = tpl.middleware_of_kind("logging");
    const auto& retry_adapter = tpl.adapter_of_kind("retry");
    const auto& trace_adapter = tpl.adapter_of_kind("trace");

    std::vector<SourceFile> files;
    auto add = [&](const std::string& path, std::string text) { files.push_back({path, std::move(text)}); };

    add(kInit, fill(kInitTemplate, {{"title", title_of(tpl.domain)}, {"imports", r.imports(kInit)}}));
    add(kExceptions, std::string(kExceptionsTemplate));
    add(kModels, fill(kModelsTemplate, {{"imports", r.imports(kModels)}}));
    add(kBase, fill(kBaseTemplate, {{"imports", r.imports(kBase)}}));
    add(kConfig, fill(kConfigTemplate, {{"imports", r.imports(kConfig)}}));
    add(kRegistry, fill(kRegistryTemplate,
                        {{"imports", r.imports(kRegistry)}, {"hint_load_config", r.hint(kRegistry, kConfig)}}));
    add(kRunner, fill(kRunnerTemplate, {{"imports", r.imports(kRunner)},
                                        {"flow_hints", r.flow_hints()},
                                        {"retry_class", retry_adapter.class_name},
                                        {"trace_class", trace_adapter.class_name},
                                        {"hint_load_stages", r.hint(kRunner, kRegistry)},
                                        {"hint_run", r.hint_lines(kRunner, {kConfig, kValidators, logging_mw.path})}}));
    add(kCli, fill(kCliTemplate, {{"imports", r.imports(kCli)},
                                  {"hint_main", r.hint_lines(kCli, {kRunner, kFormatters})}}));
    add(kConfigData, render_config_data(tpl));
    add(kSmokeTest, fill(kSmokeTestTemplate, {{"imports", r.imports(kSmokeTest)}}));

    for (const auto& s : tpl.stages) {
        std::string expr = s.def.transform;
        std::string hint;
        if (!s.util_module.empty()) {
            auto it = std::find_if(kStageUtilities.begin(), kStageUtilities.end(), [&](const UtilFunction& u) {
                return u.module == s.util_module && u.function == s.util_function;
            });
            expr = it->call;
            hint = r.hint(s.path, s.util_module);
        }
        add(s.path, fill(kStageTemplate, {{"description", s.def.description},
                                          {"imports", r.imports(s.path)},
                                          {"class_name", s.def.class_name},
                                          {"name", s.def.name},
                                          {"hint", hint},
                                          {"guard", s.raises_stage_error ? std::string(kStageGuard) : ""},
                                          {"expr", expr}}));
    }

    add(retry_adapter.path, fill(kRetryAdapterTemplate, {{"imports", r.imports(retry_adapter.path)},
                                                         {"class_name", retry_adapter.class_name},
                                                         {"hint", r.hint(retry_adapter.path, retry_mw.path)},
                                                         {"function", retry_adapter.middleware_function}}));
    add(trace_adapter.path, fill(kTraceAdapterTemplate, {{"imports", r.imports(trace_adapter.path)},
                                                         {"class_name", trace_adapter.class_name},
                                                         {"hint", r.hint(trace_adapter.path, logging_mw.path)},
                                                         {"function", trace_adapter.middleware_function}}));
    add(logging_mw.path, fill(kLoggingMiddlewareTemplate, {{"imports", r.imports(logging_mw.path)},
                                                           {"hint", r.hint(logging_mw.path, kFormatters)}}));
    add(retry_mw.path, fill(kRetryMiddlewareTemplate, {{"imports", r.imports(retry_mw.path)}}));

    add(kHelpers, std::string(kHelpersTemplate));
    add(kFormatters, fill(kFormattersTemplate, {{"imports", r.imports(kFormatters)}}));
    add(kValidators, fill(kValidatorsTemplate, {{"imports", r.imports(kValidators)}}));

    for (const auto& path : tpl.legacy) {
        if (path == kOldPipeline) {
            add(path, fill(kOldPipelineTemplate, {{"imports", r.imports(path)}, {"hint", r.hint(path, kCompat)}}));
        } else if (path == kCompat) {
            add(path, fill(kCompatTemplate, {{"imports", r.imports(path)}, {"hint", r.hint(path, kHelpers)}}));
        } else {
            add(path, std::string(kBatchTemplate));
        }
    }

    std::sort(files.begin(), files.end(), [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
    return files;
}

ModuleRole role_of(const PipelineTemplate& tpl, const std::string& path) {
    if (path == kRunner || path == kCli) return ModuleRole::Orchestrator;
    if (path == kConfigData) return ModuleRole::ConfigData;
    if (path == kSmokeTest) return ModuleRole::Test;
    if (path.starts_with("stages/")) return ModuleRole::Stage;
    if (path.starts_with("adapters/")) return ModuleRole::Adapter;
    if (path.starts_with("middleware/")) return ModuleRole::Middleware;
    if (path.starts_with("utils/")) return ModuleRole::Utility;
    if (path.starts_with("legacy/")) return ModuleRole::Distractor;
    (void)tpl;
    return ModuleRole::Infrastructure;
}

std::string purpose_of(const PipelineTemplate& tpl, const std::string& path) {
    static const std::map<std::string, std::string> fixed = {
        {kInit, "Package entry point re-exporting the core types."},
        {kModels, "Immutable Record type passed between stages."},
        {kBase, "StageBase abstract interface implemented by every stage."},
        {kConfig, "Loads and checks the JSON pipeline configuration."},
        {kExceptions, "Exception hierarchy rooted at PipelineError."},
        {kRegistry, "Loads configured stages dynamically with importlib."},
        {kRunner, "Orchestrates validation and the ordered stage chain."},
        {kCli, "Command-line entry point that runs and prints the pipeline."},
        {kConfigData, "Ordered stage list and adapter choices read by the registry."},
        {kSmokeTest, "Smoke test and architecture checks."},
        {kHelpers, "Text helpers shared by stages."},
        {kFormatters, "Formatting helpers for records and log lines."},
        {kValidators, "Input validation run before the first stage."},
        {kOldPipeline, "Deprecated sequential pipeline kept for reference."},
        {kCompat, "Compatibility shims for the deprecated pipeline."},
        {kBatchV1, "Superseded batch interface from the first release."},
    };
    if (auto it = fixed.find(path); it != fixed.end()) {
        return it->second;
    }
    for (const auto& s : tpl.stages) {
        if (s.path == path) return s.def.description;
    }
    for (const auto& a : tpl.adapters) {
        if (a.path == path) {
            return a.kind == "retry" ? "Adapter that retries a wrapped stage." : "Adapter that logs timing around a wrapped stage.";
        }
    }
    for (const auto& m : tpl.middleware) {
        if (m.path == path) {
            return m.kind == "retry" ? "Retry middleware for flaky steps." : "Logging middleware wrapping callables.";
        }
    }
    throw GenerationError("no purpose for " + path);
}

std::vector<Export> exports_of(const SourceFile& file) {
    std::vector<Export> out;
    if (!file.path.ends_with(".py")) {
        return out;
    }
    for (const auto& def : top_level_definitions(file.text)) {
        out.push_back({def.name, def.header});
    }
    return out;
}

}  // namespace

const std::vector<StageDef>& stage_pool(Domain domain) {
    switch (domain) {
        case Domain::DataEtl: return kEtlStages;
        case Domain::LogProcessing: return kLogStages;
        case Domain::TextProcessing: return kTextStages;
    }
    throw GenerationError("unknown domain");
}

std::string package_name(Domain domain) {
    switch (domain) {
        case Domain::DataEtl: return "etl_pipeline";
        case Domain::LogProcessing: return "log_processor";
        case Domain::TextProcessing: return "text_processor";
    }
    throw GenerationError("unknown domain");
}

std::vector<std::string> PipelineTemplate::subpackages() const {
    return {"adapters", "legacy", "middleware", "stages", "utils"};
}

const MiddlewarePlan& PipelineTemplate::middleware_of_kind(const std::string& kind) const {
    for (const auto& m : middleware) {
        if (m.kind == kind) return m;
    }
    throw GenerationError("template has no " + kind + " middleware");
}

const AdapterPlan& PipelineTemplate::adapter_of_kind(const std::string& kind) const {
    for (const auto& a : adapters) {
        if (a.kind == kind) return a;
    }
    throw GenerationError("template has no " + kind + " adapter");
}

PipelineTemplate instantiate_template(std::uint64_t seed, Complexity complexity, std::optional<Domain> domain) {
    if (complexity != Complexity::Medium) {
        throw GenerationError("unsupported complexity");
    }
    PipelineTemplate tpl;
    tpl.seed = seed;
    tpl.complexity = complexity;
    if (domain) {
        tpl.domain = *domain;
    } else {
        Rng pick = Rng::derive(seed, kDomainStream);
        tpl.domain = kDomains[pick.below(kDomains.size())];
    }
    tpl.root = package_name(tpl.domain);

    Rng rng = Rng::derive(seed, kTemplateStream);
    const auto& pool = stage_pool(tpl.domain);
    const int stage_count = rng.between(6, 8);

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(static_cast<std::size_t>(stage_count));
    std::sort(order.begin(), order.end());  // keep the pool's natural pipeline order

    // Neutral letters for stages, adapters and middleware, in shuffled order.
    std::vector<char> letters;
    for (int i = 0; i < stage_count + 4; ++i) letters.push_back(static_cast<char>('a' + i));
    rng.shuffle(letters);
    std::size_t next_letter = 0;
    auto neutral = [&](const std::string& dir) { return fmt::format("{}/mod_{}.py", dir, letters[next_letter++]); };

    for (std::size_t idx : order) {
        StagePlan s;
        s.def = pool[idx];
        s.path = neutral("stages");
        tpl.stages.push_back(std::move(s));
    }

    const std::string retry_adapter = neutral("adapters");
    const std::string trace_adapter = neutral("adapters");
    const std::string logging_mw = neutral("middleware");
    const std::string retry_mw = neutral("middleware");
    tpl.middleware = {{logging_mw, "logging"}, {retry_mw, "retry"}};
    tpl.adapters = {{retry_adapter, "RetryingStage", "retry", retry_mw, "retrying"},
                    {trace_adapter, "TracedStage", "trace", logging_mw, "logged"}};

    tpl.utils = {kFormatters, kHelpers, kValidators};
    tpl.legacy = {kCompat, kOldPipeline};
    if (rng.chance(0.5)) {
        tpl.legacy.push_back(kBatchV1);
    }

    std::vector<std::size_t> picks(tpl.stages.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    rng.shuffle(picks);
    tpl.adapted[tpl.stages[picks[0]].def.name] = "retry";
    tpl.adapted[tpl.stages[picks[1]].def.name] = "trace";
    return tpl;
}

std::vector<DepEdge> EdgePlan::edges() const {
    std::set<DepEdge> out;
    for (const auto& [src, list] : imports) {
        for (const auto& imp : list) out.insert({src, imp.dst, EdgeType::Imports});
    }
    for (const auto& [src, list] : calls) {
        for (const auto& call : list) out.insert({src, call.dst, EdgeType::CallsApi});
    }
    out.insert(registry_wires.begin(), registry_wires.end());
    out.insert(data_flows.begin(), data_flows.end());
    return {out.begin(), out.end()};
}

EdgePlan plant_edges(PipelineTemplate& tpl, Rng& rng) {
    if (static_cast<int>(tpl.stages.size()) < kMinStages) {
        throw GenerationError(fmt::format("infeasible edge plan: {} stages, need at least {}", tpl.stages.size(),
                                          kMinStages));
    }
    EdgePlan plan;
    auto imp = [&](const std::string& src, const std::string& dst, std::vector<std::string> symbols) {
        plan.imports[src].push_back({dst, std::move(symbols)});
    };
    auto call = [&](const std::string& src, const std::string& dst, const std::string& fn) {
        plan.calls[src].push_back({dst, fn, rng.chance(0.5)});
    };
    const auto& logging_mw = tpl.middleware_of_kind("logging");
    const auto& retry_mw = tpl.middleware_of_kind("retry");
    const auto& retry_adapter = tpl.adapter_of_kind("retry");
    const auto& trace_adapter = tpl.adapter_of_kind("trace");

    imp(kInit, kModels, {"Record"});
    imp(kInit, kBase, {"StageBase"});
    imp(kModels, kExceptions, {"ValidationError"});
    imp(kBase, kModels, {"Record"});
    imp(kBase, kExceptions, {"StageError"});
    imp(kConfig, kExceptions, {"ConfigError"});
    imp(kRegistry, kBase, {"StageBase"});
    imp(kRegistry, kConfig, {"load_config"});
    imp(kRegistry, kExceptions, {"ConfigError"});
    call(kRegistry, kConfig, "load_config");

    imp(kRunner, kConfig, {"load_config"});
    imp(kRunner, kRegistry, {"load_stages"});
    imp(kRunner, kValidators, {"validate_records"});
    imp(kRunner, logging_mw.path, {"logged"});
    imp(kRunner, retry_adapter.path, {retry_adapter.class_name});
    imp(kRunner, trace_adapter.path, {trace_adapter.class_name});
    call(kRunner, kRegistry, "load_stages");
    call(kRunner, kConfig, "load_config");
    call(kRunner, kValidators, "validate_records");
    call(kRunner, logging_mw.path, "logged");

    imp(kCli, kRunner, {"run_pipeline"});
    imp(kCli, kFormatters, {"format_records"});
    call(kCli, kRunner, "run_pipeline");
    call(kCli, kFormatters, "format_records");

    // A third of the stages (rounded down) call into a utility module; the
    // rest guard their input and raise StageError.
    std::vector<std::size_t> order(tpl.stages.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t with_util = tpl.stages.size() / 3;
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto& s = tpl.stages[order[k]];
        if (k < with_util) {
            const auto& util = kStageUtilities[rng.below(kStageUtilities.size())];
            s.util_module = util.module;
            s.util_function = util.function;
            s.raises_stage_error = false;
        } else {
            s.util_module.clear();
            s.util_function.clear();
            s.raises_stage_error = true;
        }
    }
    for (const auto& s : tpl.stages) {
        imp(s.path, kBase, {"StageBase"});
        if (!s.util_module.empty()) {
            imp(s.path, s.util_module, {s.util_function});
            call(s.path, s.util_module, s.util_function);
        }
        if (s.raises_stage_error) {
            imp(s.path, kExceptions, {"StageError"});
        }
    }

    imp(retry_adapter.path, kBase, {"StageBase"});
    imp(retry_adapter.path, retry_mw.path, {"retrying"});
    call(retry_adapter.path, retry_mw.path, "retrying");
    imp(trace_adapter.path, kBase, {"StageBase"});
    imp(trace_adapter.path, logging_mw.path, {"logged"});
    call(trace_adapter.path, logging_mw.path, "logged");

    imp(logging_mw.path, kFormatters, {"summarize_records"});
    call(logging_mw.path, kFormatters, "summarize_records");
    imp(retry_mw.path, kExceptions, {"StageError"});

    imp(kFormatters, kModels, {"Record"});
    imp(kValidators, kModels, {"Record"});
    imp(kValidators, kExceptions, {"ValidationError"});

    imp(kOldPipeline, kCompat, {"normalize_legacy"});
    imp(kOldPipeline, kModels, {"Record"});
    call(kOldPipeline, kCompat, "normalize_legacy");
    imp(kCompat, kHelpers, {"clean_text"});
    call(kCompat, kHelpers, "clean_text");

    imp(kSmokeTest, kConfig, {"CONFIG_FILE"});
    imp(kSmokeTest, kRegistry, {"load_stages"});
    imp(kSmokeTest, kBase, {"StageBase"});
    call(kSmokeTest, kRegistry, "load_stages");

    for (const auto& s : tpl.stages) {
        plan.registry_wires.push_back({kRegistry, s.path, EdgeType::RegistryWires});
    }
    for (std::size_t i = 0; i + 1 < tpl.stages.size(); ++i) {
        plan.data_flows.push_back({tpl.stages[i].path, tpl.stages[i + 1].path, EdgeType::DataFlowsTo});
        plan.data_flow_hinted.push_back(rng.chance(0.5));
    }
    return plan;
}

std::vector<Constraint> plant_constraints(const PipelineTemplate& tpl, const EdgePlan& plan, Rng& rng) {
    (void)plan;
    const auto& stages = tpl.stages;
    const std::size_t n = stages.size();
    auto ev = [](EvidenceKind kind, std::string locator) { return Evidence{kind, std::move(locator)}; };
    using CT = ConstraintType;
    using EK = EvidenceKind;

    // A distinct ordered pair of stages for the pairwise boundary rule.
    const std::size_t a = rng.below(n);
    std::size_t b = rng.below(n - 1);
    if (b >= a) ++b;
    const std::string& unreachable_stage = stages[rng.below(n)].path;
    const std::string& interface_stage = stages[rng.below(n)].path;
    const auto& logging_mw = tpl.middleware_of_kind("logging");
    const auto& retry_adapter = tpl.adapter_of_kind("retry");
    const auto& trace_adapter = tpl.adapter_of_kind("trace");

    std::vector<Constraint> out = {
        {CT::Boundary, stages[a].path, stages[b].path, "", "no direct import between stage modules",
         {ev(EK::Test, kSmokeTest + "::test_stages_do_not_import_each_other"), ev(EK::Structure, stages[a].path)}},
        {CT::Boundary, kRunner, unreachable_stage, kRegistry,
         "orchestrator reaches stages only through the registry, never by static import",
         {ev(EK::Test, kSmokeTest + "::test_runner_does_not_import_stages"), ev(EK::Doc, kRunner)}},
        {CT::Boundary, kRunner, kOldPipeline, "", "pipeline code must not depend on legacy modules",
         {ev(EK::Test, kSmokeTest + "::test_pipeline_ignores_legacy"), ev(EK::Doc, kOldPipeline)}},
        {CT::Boundary, kHelpers, "", "", "utility modules import nothing from the package",
         {ev(EK::Structure, kHelpers), ev(EK::Doc, kHelpers)}},
        {CT::Dataflow, stages[0].path, stages[1].path, kRunner, "output of the first stage feeds the second stage",
         {ev(EK::Structure, kConfigData), ev(EK::Doc, kRunner + "::run_pipeline")}},
        {CT::Dataflow, kValidators, stages[0].path, kRunner, "records pass validation before reaching the first stage",
         {ev(EK::Structure, kRunner + "::run_pipeline"), ev(EK::Doc, kRunner)}},
        {CT::Dataflow, stages[n - 1].path, kFormatters, kCli,
         "final stage output is rendered by the formatters before it leaves the CLI",
         {ev(EK::Structure, kCli + "::main"), ev(EK::Doc, kCli + "::main")}},
        {CT::Interface, kRegistry, interface_stage, "base.StageBase", "registry accepts stages only as StageBase subclasses",
         {ev(EK::Structure, kRegistry + "::load_stage"), ev(EK::Doc, kRegistry + "::load_stage")}},
        {CT::Interface, retry_adapter.path, "", "base.StageBase", "adapter uses the wrapped stage only through StageBase",
         {ev(EK::Doc, retry_adapter.path), ev(EK::Structure, retry_adapter.path + "::" + retry_adapter.class_name)}},
        {CT::Interface, trace_adapter.path, "", "base.StageBase", "adapter uses the wrapped stage only through StageBase",
         {ev(EK::Doc, trace_adapter.path), ev(EK::Structure, trace_adapter.path + "::" + trace_adapter.class_name)}},
        {CT::Interface, kRunner, "", "base.StageBase", "orchestrator invokes stages only through StageBase.run",
         {ev(EK::Test, kSmokeTest + "::test_stages_load"), ev(EK::Doc, kRunner + "::run_pipeline")}},
        {CT::Invariant, kModels, "", "Record", "records are immutable; stages return new records",
         {ev(EK::Structure, kModels + "::Record"), ev(EK::Doc, kModels)}},
        {CT::Invariant, kExceptions, "", "PipelineError", "every pipeline error derives from PipelineError",
         {ev(EK::Test, kSmokeTest + "::test_errors_share_base"), ev(EK::Doc, kExceptions)}},
        {CT::Invariant, kConfigData, kRegistry, "name", "stage names in the config are unique",
         {ev(EK::Test, kSmokeTest + "::test_stage_names_unique"), ev(EK::Structure, kConfig + "::load_config")}},
        {CT::Purpose, kRegistry, "", "importlib", "registry keeps stage selection in the config file instead of code",
         {ev(EK::Doc, kRegistry)}},
    };
    if (rng.chance(0.5)) {
        out.push_back({CT::Purpose, logging_mw.path, "", "", "logging middleware keeps cross-cutting concerns out of stages",
                       {ev(EK::Doc, logging_mw.path)}});
    }
    return out;
}

const SourceFile* RenderedCodebase::find(std::string_view path) const {
    auto it = std::lower_bound(files.begin(), files.end(), path,
                               [](const SourceFile& f, std::string_view p) { return f.path < p; });
    if (it != files.end() && it->path == path) {
        return &*it;
    }
    return nullptr;
}

RenderedCodebase generate(std::uint64_t seed, Complexity complexity, std::optional<Domain> domain) {
    PipelineTemplate tpl = instantiate_template(seed, complexity, domain);
    Rng edge_rng = Rng::derive(seed, kEdgeStream);
    EdgePlan plan = plant_edges(tpl, edge_rng);
    Rng constraint_rng = Rng::derive(seed, kConstraintStream);
    std::vector<Constraint> constraints = plant_constraints(tpl, plan, constraint_rng);

    RenderedCodebase out;
    out.root = tpl.root;
    out.files = render(tpl, plan);

    GroundTruth& gt = out.ground_truth;
    gt.manifest = {seed, tpl.domain, tpl.complexity, tpl.root};
    for (const auto& file : out.files) {
        gt.modules.push_back({file.path, role_of(tpl, file.path), purpose_of(tpl, file.path), exports_of(file)});
    }
    gt.edges = plan.edges();
    gt.constraints = std::move(constraints);
    validate(gt);
    return out;
}

double GenerationStats::fraction(EdgeType type) const {
    if (edges == 0) return 0.0;
    auto it = by_type.find(type);
    return it == by_type.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(edges);
}

GenerationStats statistics(const RenderedCodebase& codebase) {
    GenerationStats s;
    const auto& gt = codebase.ground_truth;
    s.modules = gt.modules.size();
    s.constraints = gt.constraints.size();
    s.edges = gt.edges.size();
    for (EdgeType t : kEdgeTypes) {
        s.by_type[t] = gt.count_edges(t);
    }
    std::set<std::string> dirs;
    for (const auto& m : gt.modules) {
        if (auto slash = m.path.find('/'); slash != std::string::npos) {
            dirs.insert(m.path.substr(0, slash));
        }
    }
    s.subpackages = dirs.size();
    return s;
}

void write_codebase(const RenderedCodebase& codebase, const fs::path& dir) {
    const fs::path root = dir / codebase.root;
    for (const auto& file : codebase.files) {
        const fs::path target = root / file.path;
        fs::create_directories(target.parent_path());
        std::ofstream out(target, std::ios::binary);
        out << file.text;
        if (!out) {
            throw GenerationError("failed to write " + target.string());
        }
    }
    save_ground_truth(codebase.ground_truth, dir / "ground_truth.json");
}

RenderedCodebase read_codebase(const fs::path& dir) {
    RenderedCodebase out;
    out.ground_truth = load_ground_truth(dir / "ground_truth.json");
    out.root = out.ground_truth.manifest.root;
    const fs::path root = dir / out.root;
    if (!fs::is_directory(root)) {
        throw GenerationError("missing package directory " + root.string());
    }
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), root).generic_string();
        if (rel.find("__pycache__") != std::string::npos || rel.ends_with(".pyc")) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        out.files.push_back({rel, buffer.str()});
    }
    std::sort(out.files.begin(), out.files.end(), [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
    return out;
}

}  // namespace codemap
